#include "slimnam/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace slimnam
{

namespace
{
constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t u32(const unsigned char* p)
{
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8)
         | (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t u16(const unsigned char* p)
{
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v)
{
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_tag(std::vector<unsigned char>& out, const char* tag)
{
  out.insert(out.end(), tag, tag + 4);
}
} // namespace

AudioBuffer decode_wav(const std::vector<unsigned char>& bytes)
{
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavError("not a RIFF/WAVE file");

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size())
  {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size())
      throw WavError("truncated chunk '" + std::string(reinterpret_cast<const char*>(chunk), 4) + "'");
    if (std::memcmp(chunk, "fmt ", 4) == 0)
    {
      if (size < 16)
        throw WavError("fmt chunk too short");
      format = u16(chunk + 8);
      channels = u16(chunk + 10);
      rate = u32(chunk + 12);
      bits = u16(chunk + 22);
      if (format == kFormatExtensible && size >= 26)
        format = u16(chunk + 32);
      have_fmt = true;
    }
    else if (std::memcmp(chunk, "data", 4) == 0)
    {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt)
    throw WavError("missing fmt chunk");
  if (data == nullptr)
    throw WavError("missing data chunk");
  if (channels != 1)
    throw WavError("only mono files are supported, got " + std::to_string(channels) + " channels");
  if (rate == 0)
    throw WavError("sample rate is zero");

  AudioBuffer out;
  out.sample_rate = rate;
  if (format == kFormatPcm && bits == 16)
  {
    const std::size_t n = data_size / 2;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      out.samples[i] = static_cast<float>(static_cast<std::int16_t>(u16(data + 2 * i))) / 32768.0f;
  }
  else if (format == kFormatPcm && bits == 24)
  {
    const std::size_t n = data_size / 3;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
    {
      const unsigned char* p = data + 3 * i;
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000)
        v -= 0x1000000;
      out.samples[i] = static_cast<float>(v) / 8388608.0f;
    }
  }
  else if (format == kFormatFloat && bits == 32)
  {
    const std::size_t n = data_size / 4;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
    {
      const std::uint32_t raw = u32(data + 4 * i);
      std::memcpy(&out.samples[i], &raw, 4);
      if (!std::isfinite(out.samples[i]))
        throw WavError("sample " + std::to_string(i) + " is not finite");
    }
  }
  else
  {
    throw WavError("unsupported sample format (code " + std::to_string(format) + ", " + std::to_string(bits)
                   + " bits)");
  }
  return out;
}

std::vector<unsigned char> encode_wav(const AudioBuffer& buffer, WavFormat format)
{
  if (buffer.channel_count != 1)
    throw WavError("only mono buffers can be written");
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
  const std::uint16_t block = bits / 8;
  const auto rate = static_cast<std::uint32_t>(std::lround(buffer.sample_rate));
  const auto data_size = static_cast<std::uint32_t>(buffer.samples.size() * block);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * block);
  put_u16(out, block);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);
  for (float s : buffer.samples)
  {
    if (format == WavFormat::pcm16)
    {
      const double scaled = std::round(static_cast<double>(s) * 32768.0); // std::round: half away from zero
      const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
      put_u16(out, static_cast<std::uint16_t>(v));
    }
    else
    {
      std::uint32_t raw = 0;
      std::memcpy(&raw, &s, 4);
      put_u32(out, raw);
    }
  }
  return out;
}

AudioBuffer read_wav(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw WavError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer, WavFormat format)
{
  const auto bytes = encode_wav(buffer, format);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw WavError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw WavError("write failed for '" + path.string() + "'");
}

} // namespace slimnam
