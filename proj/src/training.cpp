#include "slimnam/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "slimnam/detail/kernel.hpp"
#include "slimnam/inference.hpp"

namespace slimnam
{

DryWetDataset make_dataset(std::vector<double> dry, std::vector<double> wet, double sample_rate,
                           std::size_t segment_len, int receptive_field)
{
  if (dry.size() != wet.size())
    throw ConfigError("dry and wet signals differ in length (" + std::to_string(dry.size()) + " vs "
                      + std::to_string(wet.size()) + ")");
  if (receptive_field < 1)
    throw ConfigError("receptive field must be >= 1");
  if (segment_len <= static_cast<std::size_t>(receptive_field))
    throw ConfigError("segment_len " + std::to_string(segment_len) + " must exceed the receptive field "
                      + std::to_string(receptive_field));

  DryWetDataset ds;
  ds.dry = std::move(dry);
  ds.wet = std::move(wet);
  ds.sample_rate = sample_rate;
  ds.burn_in = static_cast<std::size_t>(receptive_field - 1);

  const std::size_t n = ds.dry.size();
  if (n < segment_len)
    return ds;
  const std::size_t hop = segment_len - ds.burn_in;
  std::size_t offset = 0;
  for (; offset + segment_len <= n; offset += hop)
    ds.segments.push_back({offset, segment_len});
  // Cover the tail with one window aligned to the end of the signal.
  if (ds.segments.back().offset + segment_len < n)
    ds.segments.push_back({n - segment_len, segment_len});
  return ds;
}

TrainingData split_holdout(std::span<const double> dry, std::span<const double> wet, double sample_rate,
                           double holdout_fraction, std::size_t segment_len, int receptive_field)
{
  if (dry.size() != wet.size())
    throw ConfigError("dry and wet signals differ in length");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("holdout fraction must lie in (0, 1)");
  const auto split = static_cast<std::size_t>(std::llround(static_cast<double>(dry.size()) * (1.0 - holdout_fraction)));
  TrainingData data;
  data.train = make_dataset({dry.begin(), dry.begin() + static_cast<std::ptrdiff_t>(split)},
                            {wet.begin(), wet.begin() + static_cast<std::ptrdiff_t>(split)}, sample_rate,
                            segment_len, receptive_field);
  data.validation = make_dataset({dry.begin() + static_cast<std::ptrdiff_t>(split), dry.end()},
                                 {wet.begin() + static_cast<std::ptrdiff_t>(split), wet.end()}, sample_rate,
                                 segment_len, receptive_field);
  return data;
}

ActiveWidth sample_width(std::mt19937_64& rng, int channels)
{
  if (channels < 1)
    throw ConfigError("channels must be >= 1");
  std::uniform_int_distribution<int> dist(1, channels);
  return ActiveWidth(dist(rng));
}

double loss(std::span<const double> pred, std::span<const double> target, LossKind kind)
{
  if (pred.size() != target.size() || pred.empty())
    throw InputError("loss needs equal-length, non-empty prediction and target");
  double sse = 0.0;
  double energy = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t)
  {
    const double e = target[t] - pred[t];
    sse += e * e;
    energy += target[t] * target[t];
  }
  if (kind == LossKind::mse)
    return sse / static_cast<double>(pred.size());
  if (energy == 0.0)
    throw DegenerateTargetError("ESR is undefined for an all-zero target");
  return sse / energy;
}

namespace
{

/// Sum of squared error of one segment after `burn_in`, plus `scale` times its
/// gradient accumulated into `grad` (full-width flat layout).
///
/// The forward half follows forward_kernel's summation order exactly.
double sse_backward(const detail::FlatWeights<double>& p, std::size_t w, std::span<const double> input,
                    std::span<const double> target, std::size_t burn_in, double scale, std::span<double> grad)
{
  const ParamLayout& lay = p.layout;
  const std::size_t n = input.size();
  const std::size_t k = lay.kernel_size;
  const std::size_t L = lay.layers.size();
  const double* W = p.w.data();

  std::vector<std::vector<double>> X(L, std::vector<double>(n * w));
  std::vector<std::vector<double>> Z(L, std::vector<double>(n * w));
  std::vector<double> S(n * w, 0.0);

  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t o = 0; o < w; ++o)
    {
      double acc = W[lay.input_b + o];
      acc += W[lay.input_w_at(o, 0)] * input[t];
      X[0][t * w + o] = acc;
    }

  std::vector<double> next(n * w);
  for (std::size_t l = 0; l < L; ++l)
  {
    const auto d = static_cast<std::size_t>(p.config.dilations[l]);
    const auto& x = X[l];
    auto& z = Z[l];
    const std::size_t db = lay.layers[l].dilated_b;
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t o = 0; o < w; ++o)
      {
        double a = W[db + o];
        for (std::size_t j = 0; j < k; ++j)
        {
          const std::size_t delay = (k - 1 - j) * d;
          const bool in_range = t >= delay;
          const std::size_t wrow = lay.dilated_w_at(l, o, 0, j);
          for (std::size_t i = 0; i < w; ++i)
            a += W[wrow + i * k] * (in_range ? x[(t - delay) * w + i] : 0.0);
        }
        z[t * w + o] = std::tanh(a);
      }
    for (std::size_t i = 0; i < n * w; ++i)
      S[i] += z[i];
    if (l + 1 < L)
    {
      const std::size_t mb = lay.layers[l].mix_b;
      auto& xn = X[l + 1];
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t o = 0; o < w; ++o)
        {
          double r = W[mb + o];
          const std::size_t mrow = lay.mix_w_at(l, o, 0);
          for (std::size_t i = 0; i < w; ++i)
            r += W[mrow + i] * z[t * w + i];
          xn[t * w + o] = x[t * w + o] + r;
        }
    }
  }

  std::vector<double> dy(n, 0.0);
  double sse = 0.0;
  for (std::size_t t = burn_in; t < n; ++t)
  {
    double y = W[lay.head_b];
    for (std::size_t o = 0; o < w; ++o)
      y += W[lay.head_w_at(0, o)] * S[t * w + o];
    const double e = y - target[t];
    sse += e * e;
    dy[t] = 2.0 * e;
  }

  // Head.
  {
    double gb = 0.0;
    for (std::size_t t = burn_in; t < n; ++t)
      gb += dy[t];
    grad[lay.head_b] += scale * gb;
    for (std::size_t o = 0; o < w; ++o)
    {
      double g = 0.0;
      for (std::size_t t = burn_in; t < n; ++t)
        g += dy[t] * S[t * w + o];
      grad[lay.head_w_at(0, o)] += scale * g;
    }
  }

  // gX holds dLoss/d(input of layer l+1); the output of the last layer's mixer is unused.
  std::vector<double> gX(n * w, 0.0);
  std::vector<double> gPrev(n * w);
  std::vector<double> da(n * w);
  std::vector<double> gW(w * w * k);
  std::vector<double> gM(w * w);
  for (std::size_t l = L; l-- > 0;)
  {
    const auto d = static_cast<std::size_t>(p.config.dilations[l]);
    const auto& x = X[l];
    const auto& z = Z[l];
    const std::size_t mrow0 = lay.layers[l].mix_w;

    std::fill(gM.begin(), gM.end(), 0.0);
    std::vector<double> gmb(w, 0.0);
    for (std::size_t t = 0; t < n; ++t)
    {
      const double* g = &gX[t * w];
      const double* zr = &z[t * w];
      for (std::size_t q = 0; q < w; ++q)
      {
        double dz = dy[t] * W[lay.head_w_at(0, q)];
        for (std::size_t o = 0; o < w; ++o)
          dz += W[mrow0 + o * lay.channels + q] * g[o];
        da[t * w + q] = dz * (1.0 - zr[q] * zr[q]);
      }
      for (std::size_t o = 0; o < w; ++o)
      {
        gmb[o] += g[o];
        for (std::size_t i = 0; i < w; ++i)
          gM[o * w + i] += g[o] * zr[i];
      }
    }

    std::fill(gW.begin(), gW.end(), 0.0);
    std::vector<double> gdb(w, 0.0);
    gPrev = gX;
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t o = 0; o < w; ++o)
        gdb[o] += da[t * w + o];
    for (std::size_t j = 0; j < k; ++j)
    {
      const std::size_t delay = (k - 1 - j) * d;
      for (std::size_t t = delay; t < n; ++t)
      {
        const double* xr = &x[(t - delay) * w];
        double* gp = &gPrev[(t - delay) * w];
        for (std::size_t o = 0; o < w; ++o)
        {
          const double a = da[t * w + o];
          const std::size_t wrow = lay.dilated_w_at(l, o, 0, j);
          for (std::size_t i = 0; i < w; ++i)
          {
            gW[(o * w + i) * k + j] += a * xr[i];
            gp[i] += W[wrow + i * k] * a;
          }
        }
      }
    }

    for (std::size_t o = 0; o < w; ++o)
    {
      grad[lay.layers[l].dilated_b + o] += scale * gdb[o];
      grad[lay.layers[l].mix_b + o] += scale * gmb[o];
      for (std::size_t i = 0; i < w; ++i)
      {
        grad[lay.mix_w_at(l, o, i)] += scale * gM[o * w + i];
        for (std::size_t j = 0; j < k; ++j)
          grad[lay.dilated_w_at(l, o, i, j)] += scale * gW[(o * w + i) * k + j];
      }
    }
    std::swap(gX, gPrev);
  }

  for (std::size_t o = 0; o < w; ++o)
  {
    double gb = 0.0;
    double gw = 0.0;
    for (std::size_t t = 0; t < n; ++t)
    {
      gb += gX[t * w + o];
      gw += gX[t * w + o] * input[t];
    }
    grad[lay.input_b + o] += scale * gb;
    grad[lay.input_w_at(o, 0)] += scale * gw;
  }
  return sse;
}

double target_energy(std::span<const double> target, std::size_t burn_in)
{
  double e = 0.0;
  for (std::size_t t = burn_in; t < target.size(); ++t)
    e += target[t] * target[t];
  return e;
}

std::size_t burn_in_of(const WaveNetConfig& config)
{
  return static_cast<std::size_t>(receptive_field(config) - 1);
}

void check_segment(const WaveNetConfig& config, std::span<const double> input, std::span<const double> target)
{
  if (input.size() != target.size())
    throw InputError("input and target segments differ in length");
  if (input.size() <= static_cast<std::size_t>(receptive_field(config)))
    throw InputError("segment of " + std::to_string(input.size()) + " samples is not longer than the receptive field");
}

} // namespace

BackwardResult backward(const Model& model, ActiveWidth width, std::span<const double> input,
                        std::span<const double> target, LossKind kind)
{
  check_width(model.config.channels, width);
  check_segment(model.config, input, target);
  const std::size_t burn_in = burn_in_of(model.config);
  const detail::FlatWeights<double> weights(model);

  double scale = 1.0 / static_cast<double>(input.size() - burn_in);
  if (kind == LossKind::esr)
  {
    const double energy = target_energy(target, burn_in);
    if (energy == 0.0)
      throw DegenerateTargetError("ESR is undefined for an all-zero target");
    scale = 1.0 / energy;
  }
  BackwardResult result;
  result.gradients.config = model.config;
  result.gradients.flat.assign(weights.layout.total, 0.0);
  const double sse = sse_backward(weights, static_cast<std::size_t>(width.value), input, target, burn_in, scale,
                                  result.gradients.flat);
  result.loss = sse * scale;
  return result;
}

TrainState::TrainState(const Model& model, const TrainConfig& cfg)
: config(model.config)
, params(flatten(model))
, train_config(cfg)
{
  adam.m.assign(params.size(), 0.0);
  adam.v.assign(params.size(), 0.0);
  adam.steps.assign(params.size(), 0);
}

double train_step(TrainState& state, const Batch& batch, ActiveWidth width)
{
  check_width(state.config.channels, width);
  if (batch.inputs.empty() || batch.inputs.size() != batch.targets.size())
    throw InputError("batch needs matching, non-empty input and target lists");
  const std::size_t burn_in = burn_in_of(state.config);
  const TrainConfig& tc = state.train_config;

  double scale = 0.0;
  if (tc.loss == LossKind::mse)
  {
    std::size_t count = 0;
    for (const auto& in : batch.inputs)
      count += in.size() - std::min(in.size(), burn_in);
    scale = 1.0 / static_cast<double>(count);
  }
  else
  {
    double energy = 0.0;
    for (const auto& tg : batch.targets)
      energy += target_energy(tg, burn_in);
    if (energy == 0.0)
      throw DegenerateTargetError("ESR is undefined for an all-zero target batch");
    scale = 1.0 / energy;
  }

  const detail::FlatWeights<double> weights(state.config, state.params);
  std::vector<double> grad(state.params.size(), 0.0);
  double sse = 0.0;
  for (std::size_t s = 0; s < batch.inputs.size(); ++s)
  {
    check_segment(state.config, batch.inputs[s], batch.targets[s]);
    sse += sse_backward(weights, static_cast<std::size_t>(width.value), batch.inputs[s], batch.targets[s], burn_in,
                        scale, grad);
  }

  const auto mask = weights.layout.active_mask(width);
  auto& adam = state.adam;
  for (std::size_t i = 0; i < state.params.size(); ++i)
  {
    if (!mask[i])
      continue;
    const double g = grad[i];
    const auto step = ++adam.steps[i];
    adam.m[i] = tc.adam_beta1 * adam.m[i] + (1.0 - tc.adam_beta1) * g;
    adam.v[i] = tc.adam_beta2 * adam.v[i] + (1.0 - tc.adam_beta2) * g * g;
    const double m_hat = adam.m[i] / (1.0 - std::pow(tc.adam_beta1, static_cast<double>(step)));
    const double v_hat = adam.v[i] / (1.0 - std::pow(tc.adam_beta2, static_cast<double>(step)));
    state.params[i] -= tc.learning_rate * m_hat / (std::sqrt(v_hat) + tc.adam_eps);
  }
  return sse * scale;
}

double evaluate_esr(const Model& model, const DryWetDataset& dataset, ActiveWidth width)
{
  if (dataset.dry.empty() || dataset.dry.size() != dataset.wet.size())
    throw ConfigError("evaluation dataset is empty or misaligned");
  const auto pred = forward_batch<double>(model, width, dataset.dry);
  const std::size_t burn_in = burn_in_of(model.config);
  if (pred.size() <= burn_in)
    throw ConfigError("evaluation signal is shorter than the receptive field");
  const std::span<const double> p(pred);
  const std::span<const double> y(dataset.wet);
  return loss(p.subspan(burn_in), y.subspan(burn_in), LossKind::esr);
}

TrainResult train(const Model& model, const TrainingData& data, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch)
{
  validate(model.config);
  if (data.train.segments.empty())
    throw ConfigError("training dataset has no segments (signal shorter than segment_len?)");
  if (data.validation.dry.size() <= burn_in_of(model.config))
    throw ConfigError("validation signal is shorter than the receptive field");
  if (config.batch_size < 1 || !(config.learning_rate > 0.0) || config.epochs < 0)
    throw ConfigError("batch_size must be >= 1, learning_rate > 0 and epochs >= 0");
  if (config.segment_len <= static_cast<std::size_t>(receptive_field(model.config)))
    throw ConfigError("segment_len must exceed the receptive field");
  if (!config.width_mode.random)
    check_width(model.config.channels, ActiveWidth(config.width_mode.fixed_width));

  TrainState state(model, config);
  TrainResult result;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.train.segments.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch)
  {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size)
    {
      Batch batch;
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (std::size_t b = start; b < stop; ++b)
      {
        const Segment& seg = data.train.segments[order[b]];
        batch.inputs.emplace_back(data.train.dry.data() + seg.offset, seg.length);
        batch.targets.emplace_back(data.train.wet.data() + seg.offset, seg.length);
      }
      ActiveWidth width(config.width_mode.fixed_width);
      if (config.width_mode.random)
      {
        width = sample_width(rng, model.config.channels);
        ++result.width_draws;
      }
      result.step_widths.push_back(width.value);
      loss_sum += train_step(state, batch, width);
      ++steps;
    }
    EpochRecord record;
    record.epoch = epoch;
    record.mean_train_loss = loss_sum / static_cast<double>(steps);
    record.full_width_esr = evaluate_esr(state.model(), data.validation, ActiveWidth(model.config.channels));
    result.history.push_back(record);
    if (on_epoch)
      on_epoch(record);
  }
  result.model = state.model();
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history)
{
  std::ostringstream out;
  out.precision(17);
  out << "epoch,mean_train_loss,full_width_esr\n";
  for (const auto& r : history)
    out << r.epoch << ',' << r.mean_train_loss << ',' << r.full_width_esr << '\n';
  return out.str();
}

} // namespace slimnam
