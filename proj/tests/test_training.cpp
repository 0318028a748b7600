#include <cmath>
#include <random>

#include "doctest.h"

#include "oracles.hpp"
#include "slimnam/inference.hpp"
#include "slimnam/training.hpp"

using namespace slimnam;

namespace
{
WaveNetConfig small_cfg(int c = 3)
{
  WaveNetConfig cfg;
  cfg.channels = c;
  cfg.kernel_size = 2;
  cfg.dilations = {1, 2};
  return cfg;
}

std::vector<double> random_doubles(std::mt19937_64& rng, std::size_t n, double amp = 0.5)
{
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<double> x(n);
  for (auto& v : x)
    v = u(rng);
  return x;
}

std::vector<double> toy_target(const std::vector<double>& x)
{
  std::vector<double> y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t)
    y[t] = std::tanh(3.0 * x[t]) * 0.6 + (t > 0 ? 0.2 * x[t - 1] : 0.0);
  return y;
}

double segment_loss(const Model& m, ActiveWidth w, const std::vector<double>& x, const std::vector<double>& y,
                    LossKind kind)
{
  const auto pred = forward_batch<double>(m, w, x);
  const std::size_t burn = static_cast<std::size_t>(receptive_field(m.config) - 1);
  return loss(std::span<const double>(pred).subspan(burn), std::span<const double>(y).subspan(burn), kind);
}
} // namespace

TEST_CASE("sample_width is uniform over 1..c")
{
  std::mt19937_64 rng(2024);
  std::vector<int> counts(9, 0);
  for (int i = 0; i < 10000; ++i)
  {
    const int w = sample_width(rng, 8).value;
    REQUIRE((w >= 1 && w <= 8));
    ++counts[w];
  }
  double chi2 = 0.0;
  for (int w = 1; w <= 8; ++w)
  {
    const double e = 10000.0 / 8.0;
    chi2 += (counts[w] - e) * (counts[w] - e) / e;
  }
  CHECK(chi2 < 24.322); // p = 0.001, 7 degrees of freedom
  CHECK_THROWS_AS(sample_width(rng, 0), ConfigError);
}

TEST_CASE("loss definitions")
{
  const std::vector<double> y{1.0, -2.0, 0.5};
  const std::vector<double> p{0.5, -1.0, 0.5};
  CHECK(loss(p, y, LossKind::mse) == doctest::Approx((0.25 + 1.0) / 3.0));
  CHECK(loss(p, y, LossKind::esr) == doctest::Approx(1.25 / 5.25));
  CHECK(loss(y, y, LossKind::esr) == 0.0);
  for (double a : {0.0, 0.5, 0.9, 2.0})
  {
    std::vector<double> ay(y);
    for (auto& v : ay)
      v *= a;
    CHECK(loss(ay, y, LossKind::esr) == doctest::Approx((1 - a) * (1 - a)));
  }
  const std::vector<double> zeros(3, 0.0);
  CHECK_THROWS_AS(loss(p, zeros, LossKind::esr), DegenerateTargetError);
  CHECK(loss(p, zeros, LossKind::mse) == doctest::Approx((0.25 + 1.0 + 0.25) / 3.0));
  CHECK_THROWS_AS(loss(std::vector<double>{}, std::vector<double>{}, LossKind::mse), InputError);
}

TEST_CASE("backward rejects degenerate inputs")
{
  const auto m = new_model(small_cfg(), 1);
  const std::vector<double> x(20, 0.1), zeros(20, 0.0);
  CHECK_THROWS_AS(backward(m, ActiveWidth(2), x, zeros, LossKind::esr), DegenerateTargetError);
  CHECK_THROWS_AS(backward(m, ActiveWidth(4), x, x, LossKind::mse), WidthError);
  CHECK_THROWS_AS(backward(m, ActiveWidth(1), std::vector<double>(3, 0.1), std::vector<double>(3, 0.1), LossKind::mse),
                  InputError);
}

TEST_CASE("backward loss equals the forward loss and inactive gradients vanish")
{
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial)
  {
    const auto cfg = oracle::random_config(rng, 5, 3);
    const auto m = oracle::random_model(cfg, 100 + trial);
    const int w = std::uniform_int_distribution<int>(1, cfg.channels)(rng);
    const auto x = random_doubles(rng, static_cast<std::size_t>(receptive_field(cfg)) + 40);
    const auto y = toy_target(x);
    for (auto kind : {LossKind::mse, LossKind::esr})
    {
      const auto r = backward(m, ActiveWidth(w), x, y, kind);
      CHECK(r.loss == doctest::Approx(segment_loss(m, ActiveWidth(w), x, y, kind)).epsilon(1e-12));
      const auto mask = ParamLayout(cfg).active_mask(ActiveWidth(w));
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i])
          CHECK(r.gradients.flat[i] == 0.0);
    }
  }
}

TEST_CASE("gradient matches central finite differences")
{
  std::mt19937_64 rng(6);
  WaveNetConfig cfg;
  cfg.channels = 4;
  cfg.kernel_size = 3;
  cfg.dilations = {1, 2, 4};
  const auto m = oracle::random_model(cfg, 9);
  const auto x = random_doubles(rng, 80);
  const auto y = toy_target(x);
  const double eps = 1e-4;
  for (int w : {2, 4})
    for (auto kind : {LossKind::mse, LossKind::esr})
    {
      const auto r = backward(m, ActiveWidth(w), x, y, kind);
      const auto mask = ParamLayout(cfg).active_mask(ActiveWidth(w));
      auto flat = flatten(m);
      std::size_t checked = 0;
      for (std::size_t i = 0; i < flat.size(); ++i)
      {
        if (!mask[i])
          continue;
        const double saved = flat[i];
        flat[i] = saved + eps;
        const double up = segment_loss(unflatten(cfg, flat), ActiveWidth(w), x, y, kind);
        flat[i] = saved - eps;
        const double down = segment_loss(unflatten(cfg, flat), ActiveWidth(w), x, y, kind);
        flat[i] = saved;
        const double fd = (up - down) / (2 * eps);
        const double an = r.gradients.flat[i];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        CHECK(rel < 1e-4);
        ++checked;
      }
      CHECK(checked > 20);
    }
}

TEST_CASE("train_step: zero learning rate and inactive entries")
{
  std::mt19937_64 rng(7);
  const auto cfg = small_cfg(4);
  const auto m = oracle::random_model(cfg, 3);
  const auto x = random_doubles(rng, 64);
  const auto y = toy_target(x);
  Batch batch;
  batch.inputs.emplace_back(x);
  batch.targets.emplace_back(y);

  TrainConfig tc;
  tc.learning_rate = 0.0;
  TrainState frozen(m, tc);
  train_step(frozen, batch, ActiveWidth(4));
  CHECK(frozen.params == flatten(m));

  tc.learning_rate = 1e-2;
  TrainState s(m, tc);
  const double reported = train_step(s, batch, ActiveWidth(1));
  CHECK(reported == doctest::Approx(segment_loss(m, ActiveWidth(1), x, y, LossKind::mse)).epsilon(1e-12));
  const auto mask = ParamLayout(cfg).active_mask(ActiveWidth(1));
  const auto before = flatten(m);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
  {
    if (mask[i])
    {
      moved += s.params[i] != before[i];
      CHECK(s.adam.steps[i] == 1);
    }
    else
    {
      CHECK(s.params[i] == before[i]);
      CHECK(s.adam.m[i] == 0.0);
      CHECK(s.adam.v[i] == 0.0);
      CHECK(s.adam.steps[i] == 0);
    }
  }
  CHECK(moved > 0);
}

TEST_CASE("train_step follows scalar Adam")
{
  std::mt19937_64 rng(8);
  const auto cfg = small_cfg(2);
  const auto m = oracle::random_model(cfg, 4);
  const auto x = random_doubles(rng, 48);
  const auto y = toy_target(x);
  Batch batch;
  batch.inputs.emplace_back(x);
  batch.targets.emplace_back(y);

  TrainConfig tc;
  tc.learning_rate = 3e-3;
  TrainState s(m, tc);
  std::vector<double> p = flatten(m), mo(p.size(), 0.0), ve(p.size(), 0.0);
  for (int step = 1; step <= 2; ++step)
  {
    const auto g = backward(unflatten(cfg, p), ActiveWidth(2), x, y, LossKind::mse).gradients.flat;
    for (std::size_t i = 0; i < p.size(); ++i)
    {
      mo[i] = 0.9 * mo[i] + 0.1 * g[i];
      ve[i] = 0.999 * ve[i] + 0.001 * g[i] * g[i];
      const double mh = mo[i] / (1 - std::pow(0.9, step));
      const double vh = ve[i] / (1 - std::pow(0.999, step));
      p[i] -= 3e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
    train_step(s, batch, ActiveWidth(2));
    for (std::size_t i = 0; i < p.size(); ++i)
      CHECK(s.params[i] == doctest::Approx(p[i]).epsilon(1e-12).scale(1e-12));
  }
}

TEST_CASE("batch losses: mse over all samples, esr pooled")
{
  std::mt19937_64 rng(9);
  const auto cfg = small_cfg(3);
  const auto m = oracle::random_model(cfg, 5);
  const auto x1 = random_doubles(rng, 40), x2 = random_doubles(rng, 40, 0.1);
  const auto y1 = toy_target(x1), y2 = toy_target(x2);
  Batch batch;
  batch.inputs = {x1, x2};
  batch.targets = {y1, y2};
  const std::size_t burn = static_cast<std::size_t>(receptive_field(cfg) - 1);
  double sse = 0.0, energy = 0.0;
  for (int s = 0; s < 2; ++s)
  {
    const auto& x = s ? x2 : x1;
    const auto& y = s ? y2 : y1;
    const auto p = forward_batch<double>(m, ActiveWidth(3), x);
    for (std::size_t t = burn; t < x.size(); ++t)
    {
      sse += (y[t] - p[t]) * (y[t] - p[t]);
      energy += y[t] * y[t];
    }
  }
  TrainConfig tc;
  TrainState mse_state(m, tc);
  CHECK(train_step(mse_state, batch, ActiveWidth(3)) == doctest::Approx(sse / (2.0 * (40 - burn))).epsilon(1e-12));
  tc.loss = LossKind::esr;
  TrainState esr_state(m, tc);
  CHECK(train_step(esr_state, batch, ActiveWidth(3)) == doctest::Approx(sse / energy).epsilon(1e-12));
}

TEST_CASE("dataset segmentation covers every post-burn-in sample once")
{
  const std::size_t n = 1000, seg = 128;
  const int rf = 9;
  const auto ds = make_dataset(std::vector<double>(n, 0.1), std::vector<double>(n, 0.2), 48000.0, seg, rf);
  CHECK(ds.burn_in == 8);
  std::vector<int> covered(n, 0);
  for (const auto& s : ds.segments)
  {
    CHECK(s.length == seg);
    CHECK(s.offset + s.length <= n);
    for (std::size_t t = s.offset + ds.burn_in; t < s.offset + s.length; ++t)
      ++covered[t];
  }
  for (std::size_t t = ds.burn_in; t < n; ++t)
    CHECK(covered[t] >= 1);
  CHECK(ds.segments.back().offset + seg == n);

  CHECK(make_dataset(std::vector<double>(100), std::vector<double>(100), 48000.0, seg, rf).segments.empty());
  CHECK_THROWS_AS(make_dataset(std::vector<double>(10), std::vector<double>(11), 48000.0, seg, rf), ConfigError);
  CHECK_THROWS_AS(make_dataset(std::vector<double>(10), std::vector<double>(10), 48000.0, 9, rf), ConfigError);

  const std::vector<double> a(1000, 0.3);
  const auto split = split_holdout(a, a, 48000.0, 0.1, seg, rf);
  CHECK(split.train.dry.size() == 900);
  CHECK(split.validation.dry.size() == 100);
  CHECK_THROWS_AS(split_holdout(a, a, 48000.0, 0.0, seg, rf), ConfigError);
}

TEST_CASE("train is deterministic and honours the width mode")
{
  std::mt19937_64 rng(10);
  const auto cfg = small_cfg(4);
  const auto x = random_doubles(rng, 3000);
  const auto y = toy_target(x);
  const auto data = split_holdout(x, y, 48000.0, 0.2, 256, receptive_field(cfg));
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.segment_len = 256;
  tc.seed = 77;
  const auto a = train(new_model(cfg, 1), data, tc);
  const auto b = train(new_model(cfg, 1), data, tc);
  CHECK(a.model == b.model);
  CHECK(a.step_widths == b.step_widths);
  CHECK(a.width_draws == a.step_widths.size());
  CHECK(a.history.size() == 2);
  CHECK(a.history.back().full_width_esr
        == doctest::Approx(evaluate_esr(a.model, data.validation, ActiveWidth(4))).epsilon(1e-15));
  CHECK(a.history[1].full_width_esr < a.history[0].full_width_esr * 1.5);

  tc.width_mode = WidthMode::Fixed(2);
  const auto f = train(new_model(cfg, 1), data, tc);
  CHECK(f.width_draws == 0);
  for (int w : f.step_widths)
    CHECK(w == 2);
  // Width-2 training never touches anything outside the leading block.
  const auto mask = ParamLayout(cfg).active_mask(ActiveWidth(2));
  const auto init = flatten(new_model(cfg, 1));
  const auto trained = flatten(f.model);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i])
      CHECK(trained[i] == init[i]);

  tc.width_mode = WidthMode::Fixed(5);
  CHECK_THROWS_AS(train(new_model(cfg, 1), data, tc), WidthError);

  TrainingData empty = data;
  empty.train.segments.clear();
  CHECK_THROWS_AS(train(new_model(cfg, 1), empty, TrainConfig{}), ConfigError);
}

TEST_CASE("history csv")
{
  const std::vector<EpochRecord> h{{1, 0.5, 0.25}, {2, 0.125, 0.0625}};
  CHECK(history_csv(h) == "epoch,mean_train_loss,full_width_esr\n1,0.5,0.25\n2,0.125,0.0625\n");
}
