#include "acnet/layers.hpp"

#include <cmath>

namespace acnet {

Tensor ConvLayer::forward(const Tensor& x, ConvAlgo algo) const {
  if (bias) return conv2d(x, weight, *bias, spec, algo);
  return conv2d(x, weight, spec, algo);
}

ConvLayer ConvLayer::make(const ConvSpec& spec, Rng& rng) {
  spec.validate();
  ConvLayer layer;
  layer.spec = spec;
  layer.weight = Tensor(Shape{spec.out_channels, spec.in_channels, spec.kh, spec.kw});
  const double fan_in = static_cast<double>(spec.in_channels) * spec.kh * spec.kw;
  const double std_dev = std::sqrt(2.0 / fan_in);
  for (double& v : layer.weight.values()) v = rng.normal(0.0, std_dev);
  if (spec.bias) layer.bias = Tensor::zeros(Shape{1, spec.out_channels, 1, 1});
  return layer;
}

Tensor BnLayer::forward(const Tensor& x, Mode mode) {
  return batchnorm2d(x, gamma, beta, state, mode);
}

BnLayer BnLayer::make(int channels) {
  BnLayer layer;
  layer.gamma = Tensor::full(Shape{1, channels, 1, 1}, 1.0);
  layer.beta = Tensor::zeros(Shape{1, channels, 1, 1});
  layer.state = BnState::make(channels);
  return layer;
}

Tensor ConvBnRelu::forward(const Tensor& x, Mode mode) {
  return relu(bn.forward(conv.forward(x), mode));
}

ConvBnRelu ConvBnRelu::make(int in_channels, int out_channels, int kernel, int stride,
                            int padding, int dilation, Rng& rng) {
  ConvSpec spec;
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.kh = spec.kw = kernel;
  spec.stride = stride;
  spec.padding = padding;
  spec.dilation = dilation;
  spec.bias = false;  // batchnorm makes a conv bias redundant
  ConvBnRelu block;
  block.conv = ConvLayer::make(spec, rng);
  block.bn = BnLayer::make(out_channels);
  return block;
}

}  // namespace acnet
