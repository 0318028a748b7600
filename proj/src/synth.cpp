#include "slimnam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace slimnam
{

SynthAmpSpec default_amp_spec()
{
  SynthAmpSpec spec;
  spec.drive = 12.0;
  constexpr int taps = 8;
  constexpr double cutoff = 0.2; // cycles per sample
  const double centre = (taps - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < taps; ++i)
  {
    const double x = i - centre;
    const double sinc = std::sin(2.0 * std::numbers::pi * cutoff * x) / (std::numbers::pi * x);
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 1) / (taps + 1));
    spec.fir.push_back(sinc * hann);
    sum += spec.fir.back();
  }
  for (double& h : spec.fir)
    h /= sum;
  spec.output_gain = 0.52;
  return spec;
}

AudioBuffer render_dry(double seconds, double sample_rate, std::uint64_t seed)
{
  const auto total = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  std::vector<double> x(total, 0.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::size_t pos = 0;
  while (pos < total)
  {
    const double kind = unit(rng);
    if (kind < 0.15)
    {
      // Silence gap.
      pos += static_cast<std::size_t>((0.05 + 0.25 * unit(rng)) * sample_rate);
      continue;
    }
    const auto len = std::min(total - pos, static_cast<std::size_t>((0.2 + 1.3 * unit(rng)) * sample_rate));
    const double amp = 0.1 + 0.9 * unit(rng);
    const auto fade = std::max<std::size_t>(1, std::min<std::size_t>(len / 2, static_cast<std::size_t>(0.005 * sample_rate)));
    auto envelope = [&](std::size_t i) {
      const double in = std::min(1.0, static_cast<double>(i) / static_cast<double>(fade));
      const double out = std::min(1.0, static_cast<double>(len - i) / static_cast<double>(fade));
      return amp * std::min(in, out);
    };
    if (kind < 0.6)
    {
      // Exponential sine sweep.
      const double f0 = 40.0 * std::pow(10.0, unit(rng));
      const double f1 = std::min(0.45 * sample_rate, f0 * std::pow(2.0, 1.0 + 6.0 * unit(rng)));
      const double duration = static_cast<double>(len) / sample_rate;
      const double ratio = std::log(f1 / f0);
      for (std::size_t i = 0; i < len; ++i)
      {
        const double t = static_cast<double>(i) / sample_rate;
        const double phase = 2.0 * std::numbers::pi * f0 * duration / ratio * (std::exp(t / duration * ratio) - 1.0);
        x[pos + i] = envelope(i) * std::sin(phase);
      }
    }
    else
    {
      // One-pole lowpassed noise burst.
      const double cutoff = 100.0 * std::pow(100.0, unit(rng));
      const double a = std::exp(-2.0 * std::numbers::pi * cutoff / sample_rate);
      double state = 0.0;
      const double norm = std::sqrt((1.0 + a) / (1.0 - a));
      for (std::size_t i = 0; i < len; ++i)
      {
        state = a * state + (1.0 - a) * gauss(rng);
        x[pos + i] = envelope(i) * 0.3 * norm * state;
      }
    }
    pos += len;
  }

  double peak = 0.0;
  for (double v : x)
    peak = std::max(peak, std::abs(v));
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.resize(total);
  const double gain = peak > 0.0 ? 0.5 / peak : 0.0;
  for (std::size_t i = 0; i < total; ++i)
    out.samples[i] = static_cast<float>(x[i] * gain);
  return out;
}

AudioBuffer apply_amp(const SynthAmpSpec& spec, const AudioBuffer& dry)
{
  AudioBuffer wet;
  wet.sample_rate = dry.sample_rate;
  const std::size_t n = dry.samples.size();
  std::vector<double> shaped(n);
  for (std::size_t t = 0; t < n; ++t)
    shaped[t] = std::tanh(spec.drive * dry.samples[t]);
  wet.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t)
  {
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.fir.size() && i <= t; ++i)
      acc += spec.fir[i] * shaped[t - i];
    wet.samples[t] = static_cast<float>(spec.output_gain * acc);
  }
  return wet;
}

} // namespace slimnam
