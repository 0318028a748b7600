#pragma once

// Batch forward kernel shared by the float inference path, the double
// training path and the operation-counting tests. Any scalar type with
// arithmetic operators, construction from double and an ADL-visible tanh works.

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "slimnam/model.hpp"

namespace slimnam::detail
{

template <typename T>
struct FlatWeights
{
  WaveNetConfig config;
  ParamLayout layout;
  std::vector<T> w;

  explicit FlatWeights(const Model& model)
  : config(model.config)
  , layout(model.config)
  {
    const auto flat = flatten(model);
    w.reserve(flat.size());
    for (double v : flat)
      w.push_back(static_cast<T>(v));
  }

  FlatWeights(const WaveNetConfig& cfg, std::vector<T> flat)
  : config(cfg)
  , layout(cfg)
  , w(std::move(flat))
  {
  }
};

/// Scratch for forward_kernel; sized T x width per buffer.
template <typename T>
struct BatchScratch
{
  std::vector<T> x;
  std::vector<T> z;
  std::vector<T> skip;
};

/// Causal forward pass over a whole mono signal at the leading `width` channels.
///
/// Summation order per output element: bias first, then taps in ascending j
/// with input channels ascending inside each tap. StreamEngine reproduces it.
template <typename T>
void forward_kernel(const FlatWeights<T>& p, std::size_t width, std::span<const T> input, std::span<T> output,
                    BatchScratch<T>& scratch)
{
  using std::tanh;
  const ParamLayout& lay = p.layout;
  const std::size_t n = input.size();
  const std::size_t w = width;
  const std::size_t k = lay.kernel_size;
  const T* W = p.w.data();

  auto& x = scratch.x;
  auto& z = scratch.z;
  auto& s = scratch.skip;
  x.assign(n * w, T(0.0));
  z.assign(n * w, T(0.0));
  s.assign(n * w, T(0.0));

  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t o = 0; o < w; ++o)
    {
      T acc = W[lay.input_b + o];
      acc += W[lay.input_w_at(o, 0)] * input[t];
      x[t * w + o] = acc;
    }

  const T zero(0.0);
  for (std::size_t l = 0; l < lay.layers.size(); ++l)
  {
    const auto d = static_cast<std::size_t>(p.config.dilations[l]);
    const std::size_t db = lay.layers[l].dilated_b;
    for (std::size_t t = 0; t < n; ++t)
    {
      for (std::size_t o = 0; o < w; ++o)
      {
        T a = W[db + o];
        for (std::size_t j = 0; j < k; ++j)
        {
          const std::size_t delay = (k - 1 - j) * d;
          const bool in_range = t >= delay;
          const T* xr = in_range ? &x[(t - delay) * w] : nullptr;
          const std::size_t wrow = lay.dilated_w_at(l, o, 0, j);
          for (std::size_t i = 0; i < w; ++i)
            a += W[wrow + i * k] * (in_range ? xr[i] : zero);
        }
        z[t * w + o] = tanh(a);
      }
    }
    for (std::size_t i = 0; i < n * w; ++i)
      s[i] += z[i];
    const std::size_t mb = lay.layers[l].mix_b;
    for (std::size_t t = 0; t < n; ++t)
    {
      const T* zr = &z[t * w];
      for (std::size_t o = 0; o < w; ++o)
      {
        T r = W[mb + o];
        const std::size_t mrow = lay.mix_w_at(l, o, 0);
        for (std::size_t i = 0; i < w; ++i)
          r += W[mrow + i] * zr[i];
        x[t * w + o] = x[t * w + o] + r;
      }
    }
  }

  for (std::size_t t = 0; t < n; ++t)
  {
    T y = W[lay.head_b];
    for (std::size_t o = 0; o < w; ++o)
      y += W[lay.head_w_at(0, o)] * s[t * w + o];
    output[t] = y;
  }
}

} // namespace slimnam::detail
