#pragma once

#include <filesystem>
#include <vector>

#include "slimnam/errors.hpp"

namespace slimnam
{

/// Mono audio at a fixed sample rate.
struct AudioBuffer
{
  std::vector<float> samples;
  double sample_rate = 48000.0;
  int channel_count = 1;
};

enum class WavFormat
{
  pcm16,
  float32,
};

/// Reads mono PCM16, PCM24 or IEEE float32 RIFF/WAVE. Integer formats scale by 1/2^(bits-1).
AudioBuffer read_wav(const std::filesystem::path& path);

/// PCM16 rounds half away from zero and clamps to [-32768, 32767].
void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer, WavFormat format);

/// In-memory variants of the above.
AudioBuffer decode_wav(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> encode_wav(const AudioBuffer& buffer, WavFormat format);

} // namespace slimnam
