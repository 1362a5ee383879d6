#pragma once

#include <optional>

#include "acnet/ops.hpp"
#include "acnet/rng.hpp"

namespace acnet {

// Convolution with owned weights. Weight init is fan-in-scaled normal,
// std = sqrt(2 / (in * kh * kw)).
struct ConvLayer {
  ConvSpec spec;
  Tensor weight;
  std::optional<Tensor> bias;

  Tensor forward(const Tensor& x, ConvAlgo algo = ConvAlgo::auto_select) const;
  static ConvLayer make(const ConvSpec& spec, Rng& rng);
};

struct BnLayer {
  Tensor gamma;  // (1,c,1,1), init 1
  Tensor beta;   // (1,c,1,1), init 0
  BnState state;

  Tensor forward(const Tensor& x, Mode mode);
  static BnLayer make(int channels);
};

// conv -> batchnorm -> relu, the block pattern used throughout the network.
struct ConvBnRelu {
  ConvLayer conv;
  BnLayer bn;

  Tensor forward(const Tensor& x, Mode mode);
  static ConvBnRelu make(int in_channels, int out_channels, int kernel, int stride,
                         int padding, int dilation, Rng& rng);
};

}  // namespace acnet
