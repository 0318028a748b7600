#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "slimnam/errors.hpp"

namespace slimnam
{

/// Static description of a single-stack slimmable WaveNet.
struct WaveNetConfig
{
  int channels = 8;
  int kernel_size = 3;
  std::vector<int> dilations{1, 2, 4, 8, 16, 32, 64, 128};
  int input_dim = 1;
  int output_dim = 1;
  double sample_rate = 48000.0;

  bool operator==(const WaveNetConfig&) const = default;
};

/// Throws ConfigError if the config cannot describe a supported model.
void validate(const WaveNetConfig& config);

/// Runtime channel count c' used for a pass, 1 <= value <= channels.
struct ActiveWidth
{
  int value = 1;

  constexpr explicit ActiveWidth(int v) : value(v) {}
  constexpr bool operator==(const ActiveWidth&) const = default;
};

/// Throws WidthError unless 1 <= width <= channels.
void check_width(int channels, ActiveWidth width);

/// Dense rank-3 tensor, row-major [d0][d1][d2].
struct Tensor3
{
  std::size_t d0 = 0;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t a, std::size_t b, std::size_t c) : d0(a), d1(b), d2(c), data(a * b * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data[(i * d1 + j) * d2 + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return data[(i * d1 + j) * d2 + k]; }

  bool operator==(const Tensor3&) const = default;
};

struct LayerWeights
{
  Tensor3 dilated_w; // [c][c][k]
  std::vector<double> dilated_b; // [c]
  Tensor3 mix_w; // [c][c][1]
  std::vector<double> mix_b; // [c]

  bool operator==(const LayerWeights&) const = default;
};

/// Full-width parameter set. Immutable once built; slimming never copies unless asked to.
struct Model
{
  WaveNetConfig config;
  Tensor3 input_proj_w; // [c][d_x][1]
  std::vector<double> input_proj_b; // [c]
  std::vector<LayerWeights> layers;
  Tensor3 head_w; // [d_y][c][1]
  std::vector<double> head_b; // [d_y]

  bool operator==(const Model&) const = default;
};

/// Offsets of every tensor inside the flat parameter vector.
///
/// The flat order is the model-file order: input_proj_w, input_proj_b, then per
/// layer dilated_w [out][in][tap], dilated_b, mix_w, mix_b, then head_w, head_b.
/// Tap j of a dilated conv multiplies the input delayed by (k - 1 - j) * dilation.
struct ParamLayout
{
  std::size_t channels = 0;
  std::size_t kernel_size = 0;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::size_t input_w = 0;
  std::size_t input_b = 0;
  struct Layer
  {
    std::size_t dilated_w;
    std::size_t dilated_b;
    std::size_t mix_w;
    std::size_t mix_b;
  };
  std::vector<Layer> layers;
  std::size_t head_w = 0;
  std::size_t head_b = 0;
  std::size_t total = 0;

  explicit ParamLayout(const WaveNetConfig& config);

  std::size_t dilated_w_at(std::size_t l, std::size_t out, std::size_t in, std::size_t tap) const
  {
    return layers[l].dilated_w + (out * channels + in) * kernel_size + tap;
  }
  std::size_t mix_w_at(std::size_t l, std::size_t out, std::size_t in) const
  {
    return layers[l].mix_w + out * channels + in;
  }
  std::size_t input_w_at(std::size_t out, std::size_t in) const { return input_w + out * input_dim + in; }
  std::size_t head_w_at(std::size_t out, std::size_t in) const { return head_w + out * channels + in; }

  /// True for every flat entry read by a pass at `width`.
  std::vector<bool> active_mask(ActiveWidth width) const;
};

/// Model with all weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
Model new_model(const WaveNetConfig& config, std::uint64_t seed);

/// Model with every parameter zero.
Model zero_model(const WaveNetConfig& config);

/// Number of past samples (including the current one) that can influence an output.
int receptive_field(const WaveNetConfig& config);

/// Parameter count of a model at full width.
std::size_t parameter_count(const WaveNetConfig& config);

/// Uniform init half-range for a tensor with `fan_in` inputs per output.
double init_bound(std::size_t fan_in);

std::vector<double> flatten(const Model& model);
Model unflatten(const WaveNetConfig& config, std::span<const double> flat);

struct SlimConv
{
  Tensor3 w;
  std::vector<double> b;
};

/// Leading [c'][c'][k] block of a conv weight and leading c' bias entries.
SlimConv slim_conv(const Tensor3& w, std::span<const double> b, ActiveWidth width);

/// Keeps the leading c' rows (output channels); d_x is preserved.
SlimConv slim_input_projection(const Tensor3& w, std::span<const double> b, ActiveWidth width);

/// Keeps the leading c' columns (input channels); d_y is preserved.
Tensor3 slim_output_projection(const Tensor3& w, ActiveWidth width);

/// Standalone c'-wide model built by truncating every tensor of `model`.
Model materialize_slim(const Model& model, ActiveWidth width);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// Model file text (the exact bytes save_model writes).
std::string model_to_string(const Model& model);
Model model_from_string(const std::string& text);

} // namespace slimnam
