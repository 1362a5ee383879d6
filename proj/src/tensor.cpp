#include "acnet/tensor.hpp"

#include <cmath>
#include <sstream>

namespace acnet {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << "(" << s.n << "," << s.c << "," << s.h << "," << s.w << ")";
  return os.str();
}

Tensor::Tensor(const Shape& s) : impl_(std::make_shared<Impl>()) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw DimensionError("negative dimension in shape " + to_string(s));
  }
  impl_->shape = s;
  impl_->data.assign(static_cast<std::size_t>(s.numel()), 0.0);
}

Tensor Tensor::full(const Shape& s, double value) {
  Tensor t(s);
  for (double& v : t.impl_->data) v = value;
  return t;
}

Tensor Tensor::from_values(const Shape& s, std::vector<double> values) {
  Tensor t(s);
  if (static_cast<std::int64_t>(values.size()) != s.numel()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + to_string(s));
  }
  t.impl_->data = std::move(values);
  return t;
}

Tensor::Impl& Tensor::impl() {
  if (!impl_) throw Error("use of undefined tensor");
  return *impl_;
}

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw Error("use of undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

double* Tensor::data() { return impl().data.data(); }
const double* Tensor::data() const { return impl().data.data(); }

std::vector<double>& Tensor::values() { return impl().data; }
const std::vector<double>& Tensor::values() const { return impl().data; }

double Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = shape();
  return impl().data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

double& Tensor::at(int n, int c, int h, int w) {
  const Shape& s = shape();
  return impl().data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

bool Tensor::has_grad() const { return impl().grad_present; }

std::vector<double>& Tensor::grad() {
  Impl& im = impl();
  if (!im.grad_present) {
    im.grad.assign(im.data.size(), 0.0);
    im.grad_present = true;
  }
  return im.grad;
}

const std::vector<double>& Tensor::grad() const {
  const Impl& im = impl();
  if (!im.grad_present) throw Error("tensor has no gradient buffer");
  return im.grad;
}

void Tensor::clear_grad() {
  Impl& im = impl();
  im.grad.clear();
  im.grad.shrink_to_fit();
  im.grad_present = false;
}

Tensor Tensor::clone() const {
  Tensor t(shape());
  t.impl_->data = impl().data;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : impl().data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace acnet
