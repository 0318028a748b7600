#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slimnam/model.hpp"

namespace slimnam
{

enum class LossKind
{
  mse,
  esr,
};

/// Width schedule for training: a fresh uniform draw per minibatch, or one fixed width.
struct WidthMode
{
  bool random = true;
  int fixed_width = 0;

  static WidthMode Random() { return {}; }
  static WidthMode Fixed(int width) { return {false, width}; }
};

struct TrainConfig
{
  int epochs = 10;
  std::size_t batch_size = 8;
  std::size_t segment_len = 4096;
  double learning_rate = 3e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  WidthMode width_mode;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::mse;
};

struct Segment
{
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Aligned dry/wet pair cut into training windows.
///
/// Consecutive windows overlap by `burn_in` samples so every sample after the
/// first burn-in contributes to the loss exactly once.
struct DryWetDataset
{
  std::vector<double> dry;
  std::vector<double> wet;
  double sample_rate = 48000.0;
  std::size_t burn_in = 0; // receptive_field - 1
  std::vector<Segment> segments;
};

DryWetDataset make_dataset(std::vector<double> dry, std::vector<double> wet, double sample_rate,
                           std::size_t segment_len, int receptive_field);

struct TrainingData
{
  DryWetDataset train;
  DryWetDataset validation;
};

/// Holds out the trailing `holdout_fraction` of the pair as a contiguous validation signal.
TrainingData split_holdout(std::span<const double> dry, std::span<const double> wet, double sample_rate,
                           double holdout_fraction, std::size_t segment_len, int receptive_field);

/// Uniform draw from {1, ..., channels}.
ActiveWidth sample_width(std::mt19937_64& rng, int channels);

/// mse = mean (y - yhat)^2; esr = sum (y - yhat)^2 / sum y^2. `target` is y.
double loss(std::span<const double> pred, std::span<const double> target, LossKind kind);

/// Parameter gradients in flat ParamLayout order.
struct Gradients
{
  WaveNetConfig config;
  std::vector<double> flat;

  Model as_tensors() const { return unflatten(config, flat); }
};

struct BackwardResult
{
  double loss = 0.0;
  Gradients gradients;
};

/// Loss of one segment (burn-in excluded) and its exact reverse-mode gradient at width c'.
/// Entries outside the active block are exactly zero.
BackwardResult backward(const Model& model, ActiveWidth width, std::span<const double> input,
                        std::span<const double> target, LossKind kind);

/// Adam moments with a per-entry step count, so entries that sit inactive
/// for a step keep their own bias correction.
struct AdamState
{
  std::vector<double> m;
  std::vector<double> v;
  std::vector<std::uint64_t> steps;
};

struct TrainState
{
  WaveNetConfig config;
  std::vector<double> params;
  AdamState adam;
  TrainConfig train_config;

  TrainState(const Model& model, const TrainConfig& train_config);
  Model model() const { return unflatten(config, params); }
};

struct Batch
{
  std::vector<std::span<const double>> inputs;
  std::vector<std::span<const double>> targets;
};

/// One Adam step on the active entries at width c'. Returns the batch loss
/// (mse averaged over segments, or ESR pooled over the whole batch).
double train_step(TrainState& state, const Batch& batch, ActiveWidth width);

struct EpochRecord
{
  int epoch = 0;
  double mean_train_loss = 0.0;
  double full_width_esr = 0.0;
};

struct TrainResult
{
  Model model;
  std::vector<EpochRecord> history;
  std::vector<int> step_widths;
  std::size_t width_draws = 0;
};

TrainResult train(const Model& model, const TrainingData& data, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// ESR of the double-precision forward pass over the whole dry signal, burn-in excluded.
double evaluate_esr(const Model& model, const DryWetDataset& dataset, ActiveWidth width);

/// Writes "epoch,mean_train_loss,full_width_esr" rows.
std::string history_csv(const std::vector<EpochRecord>& history);

} // namespace slimnam
