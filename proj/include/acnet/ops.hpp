#pragma once

#include <optional>
#include <utility>

#include "acnet/tape.hpp"
#include "acnet/tensor.hpp"

namespace acnet {

enum class Mode { train, eval };

// ---------------------------------------------------------------- conv

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kh = 1, kw = 1;
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  bool bias = false;

  // floor((in + 2*padding - dilation*(k-1) - 1) / stride) + 1
  int out_extent(int in, int k) const;
  void validate() const;
};

enum class ConvAlgo {
  auto_select,  // currently the patch-matrix path
  direct,       // nested-loop reference path
  im2col,       // patch-matrix fast path
};

Tensor conv2d(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
              ConvAlgo algo = ConvAlgo::auto_select);
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvSpec& spec, ConvAlgo algo = ConvAlgo::auto_select);

// ---------------------------------------------------------------- batchnorm

struct BnState {
  Tensor running_mean;  // (1,c,1,1)
  Tensor running_var;   // (1,c,1,1)
  double momentum = 0.1;
  double eps = 1e-5;

  static BnState make(int channels);
};

// Train mode normalizes with batch statistics over (n,h,w) per channel and
// updates the running stats; eval mode normalizes with the running stats.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BnState& state, Mode mode);

// ---------------------------------------------------------------- misc

Tensor relu(const Tensor& input);

Tensor global_avg_pool(const Tensor& input);

// Half-pixel-center bilinear resampling (either direction): the source
// coordinate of output cell d is (d + 0.5) * in/out - 0.5, edge-clamped.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

Tensor concat_channels(const Tensor& a, const Tensor& b);

// Forward-only inverse of concat_channels (testing / inspection).
std::pair<Tensor, Tensor> split_channels(const Tensor& x, int c_first);

// Elementwise arithmetic. Broadcast patterns: equal shapes, (n,c,1,1) or
// (n,1,h,w) or (1,1,1,1) against (n,c,h,w); either operand may be the
// broadcast one. Gradients reduce over broadcast axes by summation.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// mul_const * x + add_const with compile-time constants (not parameters).
Tensor affine(const Tensor& x, double mul_const, double add_const);

}  // namespace acnet
