#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "slimnam/detail/kernel.hpp"
#include "slimnam/model.hpp"

namespace slimnam
{

/// Whole-signal causal forward pass at width `width`.
///
/// Instantiated for float (the inference path) and double (the training path).
/// For a given T the result is bit-identical to running materialize_slim(model, width)
/// at its full width.
template <typename T>
std::vector<T> forward_batch(const Model& model, ActiveWidth width, std::span<const T> input);

extern template std::vector<float> forward_batch(const Model&, ActiveWidth, std::span<const float>);
extern template std::vector<double> forward_batch(const Model&, ActiveWidth, std::span<const double>);

/// Block-at-a-time streaming inference with a live width control.
///
/// History is stored at full width; rows are written at the width active when
/// they were produced, inactive channels zero-filled. After construction neither
/// process() nor set_active_width() allocates.
class StreamEngine
{
public:
  StreamEngine(const Model& model, ActiveWidth initial_width, std::size_t max_buffer);

  /// Processes one block; `input.size()` must be in [1, max_buffer()].
  /// A width requested since the previous call is applied first.
  void process(std::span<const float> input, std::span<float> output);

  /// Requests a width for the next block. Safe to call from one control thread
  /// while another thread runs process(). Returns the recorded width.
  ActiveWidth set_active_width(ActiveWidth width);

  /// Width used by the most recent (or next, if none yet) block.
  ActiveWidth active_width() const { return ActiveWidth(active_); }
  ActiveWidth pending_width() const { return ActiveWidth(pending_.load(std::memory_order_acquire)); }

  int channels() const { return weights_.config.channels; }
  std::size_t max_buffer() const { return max_buffer_; }
  double sample_rate() const { return weights_.config.sample_rate; }

  /// Clears all history back to silence.
  void reset();

private:
  struct LayerBuffer
  {
    std::size_t dilation = 1;
    std::size_t history = 0; // (k - 1) * dilation rows
    std::vector<float> rows; // (history + max_buffer) x channels
  };

  detail::FlatWeights<float> weights_;
  std::size_t max_buffer_;
  int active_;
  std::atomic<int> pending_;
  std::vector<LayerBuffer> layers_;
  std::vector<float> z_;
  std::vector<float> skip_;
  std::vector<float> tail_;
};

/// Arithmetic cost of one output sample at width c', multiply-add counted as 2:
///   2*c'*d_x + L*(2*c'^2*k + 2*c'^2) + 2*d_y*c' + L*c'
/// where the last term counts one tanh per active channel per layer.
std::uint64_t flops_per_sample(const WaveNetConfig& config, ActiveWidth width);

struct RtfReport
{
  int width = 0;
  std::size_t buffer_size = 0;
  double wall_seconds = 0.0;
  double audio_seconds = 0.0;
  double rtf = 0.0;
};

struct BenchOptions
{
  /// Call set_active_width(width) before every block (and time it).
  bool reset_width_each_buffer = false;
  std::uint64_t noise_seed = 1;
};

/// Streams `duration_seconds` of noise through a fresh engine and times only the engine calls.
RtfReport bench_rtf(const Model& model, ActiveWidth width, double duration_seconds, std::size_t buffer_size,
                    const BenchOptions& options = {});

} // namespace slimnam
