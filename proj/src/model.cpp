#include "slimnam/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace slimnam
{

void validate(const WaveNetConfig& config)
{
  if (config.channels < 1)
    throw ConfigError("channels must be >= 1, got " + std::to_string(config.channels));
  if (config.kernel_size < 1)
    throw ConfigError("kernel_size must be >= 1, got " + std::to_string(config.kernel_size));
  if (config.dilations.empty())
    throw ConfigError("dilations must be non-empty");
  for (int d : config.dilations)
    if (d < 1)
      throw ConfigError("every dilation must be >= 1, got " + std::to_string(d));
  if (config.input_dim != 1 || config.output_dim != 1)
    throw ConfigError("only mono models (input_dim = output_dim = 1) are supported");
  if (!(config.sample_rate > 0.0) || !std::isfinite(config.sample_rate))
    throw ConfigError("sample_rate must be positive");
}

void check_width(int channels, ActiveWidth width)
{
  if (width.value < 1 || width.value > channels)
    throw WidthError("active width " + std::to_string(width.value) + " outside [1, " + std::to_string(channels)
                     + "]");
}

ParamLayout::ParamLayout(const WaveNetConfig& config)
: channels(static_cast<std::size_t>(config.channels))
, kernel_size(static_cast<std::size_t>(config.kernel_size))
, input_dim(static_cast<std::size_t>(config.input_dim))
, output_dim(static_cast<std::size_t>(config.output_dim))
{
  const std::size_t c = channels;
  std::size_t at = 0;
  input_w = at;
  at += c * input_dim;
  input_b = at;
  at += c;
  layers.reserve(config.dilations.size());
  for (std::size_t l = 0; l < config.dilations.size(); ++l)
  {
    Layer layer{};
    layer.dilated_w = at;
    at += c * c * kernel_size;
    layer.dilated_b = at;
    at += c;
    layer.mix_w = at;
    at += c * c;
    layer.mix_b = at;
    at += c;
    layers.push_back(layer);
  }
  head_w = at;
  at += output_dim * c;
  head_b = at;
  at += output_dim;
  total = at;
}

std::vector<bool> ParamLayout::active_mask(ActiveWidth width) const
{
  check_width(static_cast<int>(channels), width);
  const auto w = static_cast<std::size_t>(width.value);
  std::vector<bool> mask(total, false);
  for (std::size_t o = 0; o < w; ++o)
  {
    for (std::size_t i = 0; i < input_dim; ++i)
      mask[input_w_at(o, i)] = true;
    mask[input_b + o] = true;
  }
  for (std::size_t l = 0; l < layers.size(); ++l)
  {
    for (std::size_t o = 0; o < w; ++o)
    {
      for (std::size_t i = 0; i < w; ++i)
      {
        for (std::size_t j = 0; j < kernel_size; ++j)
          mask[dilated_w_at(l, o, i, j)] = true;
        mask[mix_w_at(l, o, i)] = true;
      }
      mask[layers[l].dilated_b + o] = true;
      mask[layers[l].mix_b + o] = true;
    }
  }
  for (std::size_t o = 0; o < output_dim; ++o)
  {
    for (std::size_t i = 0; i < w; ++i)
      mask[head_w_at(o, i)] = true;
    mask[head_b + o] = true;
  }
  return mask;
}

int receptive_field(const WaveNetConfig& config)
{
  validate(config);
  long long sum = 0;
  for (int d : config.dilations)
    sum += d;
  return static_cast<int>(1 + (config.kernel_size - 1) * sum);
}

std::size_t parameter_count(const WaveNetConfig& config)
{
  validate(config);
  return ParamLayout(config).total;
}

double init_bound(std::size_t fan_in)
{
  return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

Model zero_model(const WaveNetConfig& config)
{
  validate(config);
  const auto c = static_cast<std::size_t>(config.channels);
  const auto k = static_cast<std::size_t>(config.kernel_size);
  const auto dx = static_cast<std::size_t>(config.input_dim);
  const auto dy = static_cast<std::size_t>(config.output_dim);

  Model model;
  model.config = config;
  model.input_proj_w = Tensor3(c, dx, 1);
  model.input_proj_b.assign(c, 0.0);
  model.layers.resize(config.dilations.size());
  for (auto& layer : model.layers)
  {
    layer.dilated_w = Tensor3(c, c, k);
    layer.dilated_b.assign(c, 0.0);
    layer.mix_w = Tensor3(c, c, 1);
    layer.mix_b.assign(c, 0.0);
  }
  model.head_w = Tensor3(dy, c, 1);
  model.head_b.assign(dy, 0.0);
  return model;
}

Model new_model(const WaveNetConfig& config, std::uint64_t seed)
{
  Model model = zero_model(config);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Tensor3& t, std::size_t fan_in) {
    const double g = init_bound(fan_in);
    std::uniform_real_distribution<double> dist(-g, g);
    for (double& v : t.data)
      v = dist(rng);
  };
  const auto c = static_cast<std::size_t>(config.channels);
  const auto k = static_cast<std::size_t>(config.kernel_size);
  fill(model.input_proj_w, static_cast<std::size_t>(config.input_dim));
  for (auto& layer : model.layers)
  {
    fill(layer.dilated_w, c * k);
    fill(layer.mix_w, c);
  }
  fill(model.head_w, c);
  return model;
}

std::vector<double> flatten(const Model& model)
{
  std::vector<double> flat;
  flat.reserve(ParamLayout(model.config).total);
  auto put = [&flat](const std::vector<double>& v) { flat.insert(flat.end(), v.begin(), v.end()); };
  put(model.input_proj_w.data);
  put(model.input_proj_b);
  for (const auto& layer : model.layers)
  {
    put(layer.dilated_w.data);
    put(layer.dilated_b);
    put(layer.mix_w.data);
    put(layer.mix_b);
  }
  put(model.head_w.data);
  put(model.head_b);
  return flat;
}

Model unflatten(const WaveNetConfig& config, std::span<const double> flat)
{
  Model model = zero_model(config);
  if (flat.size() != ParamLayout(config).total)
    throw LoadError("expected " + std::to_string(ParamLayout(config).total) + " weights, got "
                    + std::to_string(flat.size()));
  std::size_t at = 0;
  auto take = [&](std::vector<double>& v) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at), flat.begin() + static_cast<std::ptrdiff_t>(at + v.size()),
              v.begin());
    at += v.size();
  };
  take(model.input_proj_w.data);
  take(model.input_proj_b);
  for (auto& layer : model.layers)
  {
    take(layer.dilated_w.data);
    take(layer.dilated_b);
    take(layer.mix_w.data);
    take(layer.mix_b);
  }
  take(model.head_w.data);
  take(model.head_b);
  return model;
}

SlimConv slim_conv(const Tensor3& w, std::span<const double> b, ActiveWidth width)
{
  if (w.d0 != w.d1 || b.size() != w.d0)
    throw ConfigError("slim_conv expects a square [c][c][k] weight and a [c] bias");
  check_width(static_cast<int>(w.d0), width);
  const auto cp = static_cast<std::size_t>(width.value);
  SlimConv out{Tensor3(cp, cp, w.d2), std::vector<double>(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(cp))};
  for (std::size_t o = 0; o < cp; ++o)
    for (std::size_t i = 0; i < cp; ++i)
      for (std::size_t j = 0; j < w.d2; ++j)
        out.w(o, i, j) = w(o, i, j);
  return out;
}

SlimConv slim_input_projection(const Tensor3& w, std::span<const double> b, ActiveWidth width)
{
  if (b.size() != w.d0)
    throw ConfigError("slim_input_projection expects a [c][d_x][1] weight and a [c] bias");
  check_width(static_cast<int>(w.d0), width);
  const auto cp = static_cast<std::size_t>(width.value);
  SlimConv out{Tensor3(cp, w.d1, w.d2), std::vector<double>(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(cp))};
  // Row-major with the row index outermost: the leading rows are a prefix of data.
  std::copy_n(w.data.begin(), out.w.data.size(), out.w.data.begin());
  return out;
}

Tensor3 slim_output_projection(const Tensor3& w, ActiveWidth width)
{
  check_width(static_cast<int>(w.d1), width);
  const auto cp = static_cast<std::size_t>(width.value);
  Tensor3 out(w.d0, cp, w.d2);
  for (std::size_t o = 0; o < w.d0; ++o)
    for (std::size_t i = 0; i < cp; ++i)
      for (std::size_t j = 0; j < w.d2; ++j)
        out(o, i, j) = w(o, i, j);
  return out;
}

Model materialize_slim(const Model& model, ActiveWidth width)
{
  check_width(model.config.channels, width);
  Model out;
  out.config = model.config;
  out.config.channels = width.value;
  auto in = slim_input_projection(model.input_proj_w, model.input_proj_b, width);
  out.input_proj_w = std::move(in.w);
  out.input_proj_b = std::move(in.b);
  out.layers.reserve(model.layers.size());
  for (const auto& layer : model.layers)
  {
    auto conv = slim_conv(layer.dilated_w, layer.dilated_b, width);
    auto mix = slim_conv(layer.mix_w, layer.mix_b, width);
    out.layers.push_back({std::move(conv.w), std::move(conv.b), std::move(mix.w), std::move(mix.b)});
  }
  out.head_w = slim_output_projection(model.head_w, width);
  out.head_b = model.head_b;
  return out;
}

} // namespace slimnam
