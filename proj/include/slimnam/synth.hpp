#pragma once

#include <cstdint>
#include <vector>

#include "slimnam/wav.hpp"

namespace slimnam
{

/// Reference device: a tanh drive stage followed by an FIR coloration filter.
struct SynthAmpSpec
{
  double drive = 12.0;
  std::vector<double> fir;
  double output_gain = 1.0;
};

/// The desk-scale default: drive 12, 8-tap windowed-sinc lowpass, wet peak near 0.5.
SynthAmpSpec default_amp_spec();

/// Deterministic test signal of swept sines, filtered noise bursts and silence, peak 0.5.
AudioBuffer render_dry(double seconds, double sample_rate, std::uint64_t seed);

/// wet[t] = output_gain * sum_i fir[i] * tanh(drive * dry[t - i]), silence before t = 0.
AudioBuffer apply_amp(const SynthAmpSpec& spec, const AudioBuffer& dry);

} // namespace slimnam
