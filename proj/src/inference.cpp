#include "slimnam/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

namespace slimnam
{

template <typename T>
std::vector<T> forward_batch(const Model& model, ActiveWidth width, std::span<const T> input)
{
  check_width(model.config.channels, width);
  if (input.empty())
    throw InputError("forward_batch needs at least one sample");
  for (std::size_t t = 0; t < input.size(); ++t)
    if (!std::isfinite(input[t]))
      throw InputError("input sample " + std::to_string(t) + " is not finite");

  const detail::FlatWeights<T> weights(model);
  detail::BatchScratch<T> scratch;
  std::vector<T> out(input.size());
  detail::forward_kernel<T>(weights, static_cast<std::size_t>(width.value), input, out, scratch);
  return out;
}

template std::vector<float> forward_batch(const Model&, ActiveWidth, std::span<const float>);
template std::vector<double> forward_batch(const Model&, ActiveWidth, std::span<const double>);

StreamEngine::StreamEngine(const Model& model, ActiveWidth initial_width, std::size_t max_buffer)
: weights_(model)
, max_buffer_(max_buffer)
, active_(initial_width.value)
, pending_(initial_width.value)
{
  validate(model.config);
  check_width(model.config.channels, initial_width);
  if (max_buffer < 1)
    throw BufferError("max_buffer must be >= 1");
  const auto c = static_cast<std::size_t>(model.config.channels);
  const auto k = static_cast<std::size_t>(model.config.kernel_size);
  layers_.resize(model.config.dilations.size());
  for (std::size_t l = 0; l < layers_.size(); ++l)
  {
    auto& layer = layers_[l];
    layer.dilation = static_cast<std::size_t>(model.config.dilations[l]);
    layer.history = (k - 1) * layer.dilation;
    layer.rows.assign((layer.history + max_buffer) * c, 0.0f);
  }
  z_.assign(max_buffer * c, 0.0f);
  skip_.assign(max_buffer * c, 0.0f);
  tail_.assign(max_buffer * c, 0.0f);
}

void StreamEngine::reset()
{
  for (auto& layer : layers_)
    std::fill(layer.rows.begin(), layer.rows.end(), 0.0f);
}

ActiveWidth StreamEngine::set_active_width(ActiveWidth width)
{
  check_width(weights_.config.channels, width);
  pending_.store(width.value, std::memory_order_release);
  return width;
}

void StreamEngine::process(std::span<const float> input, std::span<float> output)
{
  const std::size_t n = input.size();
  if (n < 1 || n > max_buffer_)
    throw BufferError("block of " + std::to_string(n) + " samples outside [1, " + std::to_string(max_buffer_) + "]");
  if (output.size() < n)
    throw BufferError("output block shorter than input block");

  active_ = pending_.load(std::memory_order_acquire);

  const ParamLayout& lay = weights_.layout;
  const std::size_t c = lay.channels;
  const std::size_t w = static_cast<std::size_t>(active_);
  const std::size_t k = lay.kernel_size;
  const float* W = weights_.w.data();

  {
    auto& first = layers_.front();
    for (std::size_t t = 0; t < n; ++t)
    {
      float* row = &first.rows[(first.history + t) * c];
      for (std::size_t o = 0; o < w; ++o)
      {
        float acc = W[lay.input_b + o];
        acc += W[lay.input_w_at(o, 0)] * input[t];
        row[o] = acc;
      }
      std::fill(row + w, row + c, 0.0f);
    }
  }

  std::fill(skip_.begin(), skip_.begin() + static_cast<std::ptrdiff_t>(n * c), 0.0f);

  for (std::size_t l = 0; l < layers_.size(); ++l)
  {
    auto& layer = layers_[l];
    const float* X = layer.rows.data();
    const std::size_t db = lay.layers[l].dilated_b;
    for (std::size_t t = 0; t < n; ++t)
    {
      for (std::size_t o = 0; o < w; ++o)
      {
        float a = W[db + o];
        for (std::size_t j = 0; j < k; ++j)
        {
          const std::size_t delay = (k - 1 - j) * layer.dilation;
          const float* xr = &X[(layer.history + t - delay) * c];
          const std::size_t wrow = lay.dilated_w_at(l, o, 0, j);
          for (std::size_t i = 0; i < w; ++i)
            a += W[wrow + i * k] * xr[i];
        }
        z_[t * c + o] = std::tanh(a);
      }
      for (std::size_t o = 0; o < w; ++o)
        skip_[t * c + o] += z_[t * c + o];
    }

    const bool last = l + 1 == layers_.size();
    float* dest_rows = last ? tail_.data() : layers_[l + 1].rows.data();
    const std::size_t dest_offset = last ? 0 : layers_[l + 1].history;
    const std::size_t mb = lay.layers[l].mix_b;
    for (std::size_t t = 0; t < n; ++t)
    {
      const float* zr = &z_[t * c];
      const float* xr = &X[(layer.history + t) * c];
      float* dest = &dest_rows[(dest_offset + t) * c];
      for (std::size_t o = 0; o < w; ++o)
      {
        float r = W[mb + o];
        const std::size_t mrow = lay.mix_w_at(l, o, 0);
        for (std::size_t i = 0; i < w; ++i)
          r += W[mrow + i] * zr[i];
        dest[o] = xr[o] + r;
      }
      std::fill(dest + w, dest + c, 0.0f);
    }

    // Keep the newest `history` rows as the next block's look-back.
    if (layer.history > 0)
      std::copy_n(layer.rows.begin() + static_cast<std::ptrdiff_t>(n * c), layer.history * c, layer.rows.begin());
  }

  for (std::size_t t = 0; t < n; ++t)
  {
    float y = W[lay.head_b];
    for (std::size_t o = 0; o < w; ++o)
      y += W[lay.head_w_at(0, o)] * skip_[t * c + o];
    output[t] = y;
  }
}

std::uint64_t flops_per_sample(const WaveNetConfig& config, ActiveWidth width)
{
  validate(config);
  check_width(config.channels, width);
  const auto cp = static_cast<std::uint64_t>(width.value);
  const auto k = static_cast<std::uint64_t>(config.kernel_size);
  const auto layers = static_cast<std::uint64_t>(config.dilations.size());
  const auto dx = static_cast<std::uint64_t>(config.input_dim);
  const auto dy = static_cast<std::uint64_t>(config.output_dim);
  return 2 * cp * dx + layers * (2 * cp * cp * k + 2 * cp * cp) + 2 * dy * cp + layers * cp;
}

RtfReport bench_rtf(const Model& model, ActiveWidth width, double duration_seconds, std::size_t buffer_size,
                    const BenchOptions& options)
{
  if (!(duration_seconds > 0.0))
    throw ConfigError("bench duration must be positive");
  StreamEngine engine(model, width, buffer_size);
  const double sr = model.config.sample_rate;
  const auto total = static_cast<std::size_t>(std::ceil(duration_seconds * sr));
  const std::size_t blocks = (total + buffer_size - 1) / buffer_size;

  std::mt19937_64 rng(options.noise_seed);
  std::uniform_real_distribution<float> dist(-0.5f, 0.5f);
  std::vector<float> noise(blocks * buffer_size);
  for (float& v : noise)
    v = dist(rng);
  std::vector<float> out(buffer_size);

  using clock = std::chrono::steady_clock;
  clock::duration busy{0};
  for (std::size_t b = 0; b < blocks; ++b)
  {
    const std::span<const float> block(noise.data() + b * buffer_size, buffer_size);
    const auto start = clock::now();
    if (options.reset_width_each_buffer)
      engine.set_active_width(width);
    engine.process(block, out);
    busy += clock::now() - start;
  }

  RtfReport report;
  report.width = width.value;
  report.buffer_size = buffer_size;
  report.wall_seconds = std::chrono::duration<double>(busy).count();
  report.audio_seconds = static_cast<double>(blocks * buffer_size) / sr;
  report.rtf = report.audio_seconds / std::max(report.wall_seconds, 1e-12);
  return report;
}

} // namespace slimnam
