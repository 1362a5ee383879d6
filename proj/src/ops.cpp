#include "acnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "acnet/parallel.hpp"

namespace acnet {

namespace {

void check_rank4(const Tensor& t, const char* what) {
  if (!t.defined()) throw DimensionError(std::string(what) + " is undefined");
}

}  // namespace

// ================================================================ conv

int ConvSpec::out_extent(int in, int k) const {
  return static_cast<int>(
      (static_cast<long long>(in) + 2LL * padding - static_cast<long long>(dilation) * (k - 1) - 1) / stride + 1);
}

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ParameterError("conv channels must be >= 1");
  if (kh < 1 || kw < 1) throw ParameterError("conv kernel must be >= 1");
  if (stride < 1) throw ParameterError("conv stride must be >= 1");
  if (padding < 0) throw ParameterError("conv padding must be >= 0");
  if (dilation < 1) throw ParameterError("conv dilation must be >= 1");
}

namespace {

struct ConvDims {
  int n, ic, ih, iw, oc, oh, ow, kh, kw;
  std::int64_t k() const { return static_cast<std::int64_t>(ic) * kh * kw; }
  std::int64_t p() const { return static_cast<std::int64_t>(oh) * ow; }
};

ConvDims conv_dims(const Tensor& input, const Tensor& weights,
                   const std::optional<Tensor>& bias, const ConvSpec& spec) {
  spec.validate();
  const Shape& is = input.shape();
  const Shape& ws = weights.shape();
  if (is.c != spec.in_channels) {
    throw DimensionError("conv2d: input has " + std::to_string(is.c) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
  }
  if (ws.n != spec.out_channels || ws.c != spec.in_channels || ws.h != spec.kh || ws.w != spec.kw) {
    throw DimensionError("conv2d: weight shape " + to_string(ws) + " does not match spec");
  }
  if (spec.bias != bias.has_value()) {
    throw DimensionError("conv2d: bias flag and bias tensor presence disagree");
  }
  if (bias && (bias->shape() != Shape{1, spec.out_channels, 1, 1})) {
    throw DimensionError("conv2d: bias shape " + to_string(bias->shape()) + " must be (1,out,1,1)");
  }
  ConvDims d{is.n, is.c, is.h, is.w, spec.out_channels,
             spec.out_extent(is.h, spec.kh), spec.out_extent(is.w, spec.kw),
             spec.kh, spec.kw};
  if (d.oh < 1 || d.ow < 1) {
    throw GeometryError("conv2d: output size " + std::to_string(d.oh) + "x" +
                        std::to_string(d.ow) + " is degenerate for input " + to_string(is));
  }
  return d;
}

// Patch matrix of one sample: rows indexed by (ic, kh, kw), columns by (oh, ow).
void im2col_sample(const double* x, const ConvDims& d, const ConvSpec& s, double* col) {
  const std::int64_t plane = static_cast<std::int64_t>(d.ih) * d.iw;
  const std::int64_t pcols = d.p();
  for (std::int64_t k = 0; k < d.k(); ++k) {
    const int ic = static_cast<int>(k / (d.kh * d.kw));
    const int rem = static_cast<int>(k % (d.kh * d.kw));
    const int ky = rem / d.kw;
    const int kx = rem % d.kw;
    double* row = col + k * pcols;
    for (int oy = 0; oy < d.oh; ++oy) {
      const int iy = oy * s.stride - s.padding + ky * s.dilation;
      double* out = row + static_cast<std::int64_t>(oy) * d.ow;
      if (iy < 0 || iy >= d.ih) {
        std::fill(out, out + d.ow, 0.0);
        continue;
      }
      const double* src = x + ic * plane + static_cast<std::int64_t>(iy) * d.iw;
      for (int ox = 0; ox < d.ow; ++ox) {
        const int ix = ox * s.stride - s.padding + kx * s.dilation;
        out[ox] = (ix >= 0 && ix < d.iw) ? src[ix] : 0.0;
      }
    }
  }
}

void col2im_add_sample(const double* col, const ConvDims& d, const ConvSpec& s, double* gx) {
  const std::int64_t plane = static_cast<std::int64_t>(d.ih) * d.iw;
  const std::int64_t pcols = d.p();
  for (std::int64_t k = 0; k < d.k(); ++k) {
    const int ic = static_cast<int>(k / (d.kh * d.kw));
    const int rem = static_cast<int>(k % (d.kh * d.kw));
    const int ky = rem / d.kw;
    const int kx = rem % d.kw;
    const double* row = col + k * pcols;
    for (int oy = 0; oy < d.oh; ++oy) {
      const int iy = oy * s.stride - s.padding + ky * s.dilation;
      if (iy < 0 || iy >= d.ih) continue;
      double* dst = gx + ic * plane + static_cast<std::int64_t>(iy) * d.iw;
      const double* src = row + static_cast<std::int64_t>(oy) * d.ow;
      for (int ox = 0; ox < d.ow; ++ox) {
        const int ix = ox * s.stride - s.padding + kx * s.dilation;
        if (ix >= 0 && ix < d.iw) dst[ix] += src[ox];
      }
    }
  }
}

Tensor conv_forward_im2col(const Tensor& input, const Tensor& weights,
                           const std::optional<Tensor>& bias, const ConvSpec& spec,
                           const ConvDims& d,
                           std::shared_ptr<std::vector<double>>* cols_out) {
  const std::int64_t K = d.k(), P = d.p();
  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(d.n) * K * P);
  const double* x = input.data();
  const std::int64_t in_sample = static_cast<std::int64_t>(d.ic) * d.ih * d.iw;

  parallel_for(0, d.n, [&](std::int64_t n) {
    im2col_sample(x + n * in_sample, d, spec, cols->data() + n * K * P);
  });

  Tensor out(Shape{d.n, d.oc, d.oh, d.ow});
  double* y = out.data();
  const double* w = weights.data();
  const double* b = bias ? bias->data() : nullptr;

  parallel_for(0, static_cast<std::int64_t>(d.n) * d.oc, [&](std::int64_t idx) {
    const std::int64_t n = idx / d.oc;
    const int oc = static_cast<int>(idx % d.oc);
    const double* col = cols->data() + n * K * P;
    const double* wrow = w + static_cast<std::int64_t>(oc) * K;
    double* yrow = y + (n * d.oc + oc) * P;
    std::fill(yrow, yrow + P, b ? b[oc] : 0.0);
    for (std::int64_t k = 0; k < K; ++k) {
      const double wk = wrow[k];
      const double* crow = col + k * P;
      for (std::int64_t p = 0; p < P; ++p) yrow[p] += wk * crow[p];
    }
  });

  if (cols_out) *cols_out = std::move(cols);
  return out;
}

void conv_backward_im2col(Tensor input, Tensor weights, std::optional<Tensor> bias,
                          Tensor out, const ConvSpec& spec, const ConvDims& d,
                          const std::shared_ptr<std::vector<double>>& cols) {
  if (!out.has_grad()) return;
  const std::int64_t K = d.k(), P = d.p();
  const std::vector<double>& go = out.grad();
  const double* w = weights.data();

  // weight gradient: rows owned per thread
  std::vector<double>& gw = weights.grad();
  parallel_for(0, d.oc, [&](std::int64_t oc) {
    double* grow = gw.data() + oc * K;
    for (int n = 0; n < d.n; ++n) {
      const double* gorow = go.data() + (static_cast<std::int64_t>(n) * d.oc + oc) * P;
      const double* col = cols->data() + static_cast<std::int64_t>(n) * K * P;
      for (std::int64_t k = 0; k < K; ++k) {
        const double* crow = col + k * P;
        double acc = 0.0;
        for (std::int64_t p = 0; p < P; ++p) acc += gorow[p] * crow[p];
        grow[k] += acc;
      }
    }
  });

  if (bias) {
    std::vector<double>& gb = bias->grad();
    for (int n = 0; n < d.n; ++n) {
      for (int oc = 0; oc < d.oc; ++oc) {
        const double* gorow = go.data() + (static_cast<std::int64_t>(n) * d.oc + oc) * P;
        double acc = 0.0;
        for (std::int64_t p = 0; p < P; ++p) acc += gorow[p];
        gb[oc] += acc;
      }
    }
  }

  // input gradient via dcol = W^T * dout, then col2im scatter
  std::vector<double>& gx = input.grad();
  const std::int64_t in_sample = static_cast<std::int64_t>(d.ic) * d.ih * d.iw;
  std::vector<double> dcol(static_cast<std::size_t>(d.n) * K * P);
  parallel_for(0, static_cast<std::int64_t>(d.n) * K, [&](std::int64_t idx) {
    const std::int64_t n = idx / K;
    const std::int64_t k = idx % K;
    double* drow = dcol.data() + (n * K + k) * P;
    std::fill(drow, drow + P, 0.0);
    const double* gon = go.data() + n * d.oc * P;
    for (int oc = 0; oc < d.oc; ++oc) {
      const double wk = w[static_cast<std::int64_t>(oc) * K + k];
      const double* gorow = gon + static_cast<std::int64_t>(oc) * P;
      for (std::int64_t p = 0; p < P; ++p) drow[p] += wk * gorow[p];
    }
  });
  parallel_for(0, d.n, [&](std::int64_t n) {
    col2im_add_sample(dcol.data() + n * K * P, d, spec, gx.data() + n * in_sample);
  });
}

Tensor conv_forward_direct(const Tensor& input, const Tensor& weights,
                           const std::optional<Tensor>& bias, const ConvSpec& spec,
                           const ConvDims& d) {
  Tensor out(Shape{d.n, d.oc, d.oh, d.ow});
  const double* x = input.data();
  const double* w = weights.data();
  const double* b = bias ? bias->data() : nullptr;
  double* y = out.data();

  parallel_for(0, static_cast<std::int64_t>(d.n) * d.oc, [&](std::int64_t idx) {
    const int n = static_cast<int>(idx / d.oc);
    const int oc = static_cast<int>(idx % d.oc);
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        double acc = b ? b[oc] : 0.0;
        for (int ic = 0; ic < d.ic; ++ic) {
          for (int ky = 0; ky < d.kh; ++ky) {
            const int iy = oy * spec.stride - spec.padding + ky * spec.dilation;
            if (iy < 0 || iy >= d.ih) continue;
            for (int kx = 0; kx < d.kw; ++kx) {
              const int ix = ox * spec.stride - spec.padding + kx * spec.dilation;
              if (ix < 0 || ix >= d.iw) continue;
              acc += x[((static_cast<std::int64_t>(n) * d.ic + ic) * d.ih + iy) * d.iw + ix] *
                     w[((static_cast<std::int64_t>(oc) * d.ic + ic) * d.kh + ky) * d.kw + kx];
            }
          }
        }
        y[((static_cast<std::int64_t>(n) * d.oc + oc) * d.oh + oy) * d.ow + ox] = acc;
      }
    }
  });
  return out;
}

void conv_backward_direct(Tensor input, Tensor weights, std::optional<Tensor> bias,
                          Tensor out, const ConvSpec& spec, const ConvDims& d) {
  if (!out.has_grad()) return;
  const std::vector<double>& go = out.grad();
  const double* x = input.data();
  const double* w = weights.data();

  std::vector<double>& gw = weights.grad();
  parallel_for(0, d.oc, [&](std::int64_t oc) {
    for (int n = 0; n < d.n; ++n) {
      for (int ic = 0; ic < d.ic; ++ic) {
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int kx = 0; kx < d.kw; ++kx) {
            double acc = 0.0;
            for (int oy = 0; oy < d.oh; ++oy) {
              const int iy = oy * spec.stride - spec.padding + ky * spec.dilation;
              if (iy < 0 || iy >= d.ih) continue;
              for (int ox = 0; ox < d.ow; ++ox) {
                const int ix = ox * spec.stride - spec.padding + kx * spec.dilation;
                if (ix < 0 || ix >= d.iw) continue;
                acc += go[((static_cast<std::int64_t>(n) * d.oc + oc) * d.oh + oy) * d.ow + ox] *
                       x[((static_cast<std::int64_t>(n) * d.ic + ic) * d.ih + iy) * d.iw + ix];
              }
            }
            gw[((oc * d.ic + ic) * d.kh + ky) * d.kw + kx] += acc;
          }
        }
      }
    }
  });

  if (bias) {
    std::vector<double>& gb = bias->grad();
    for (int n = 0; n < d.n; ++n)
      for (int oc = 0; oc < d.oc; ++oc)
        for (std::int64_t p = 0; p < d.p(); ++p)
          gb[oc] += go[(static_cast<std::int64_t>(n) * d.oc + oc) * d.p() + p];
  }

  std::vector<double>& gx = input.grad();
  parallel_for(0, d.n, [&](std::int64_t n) {
    for (int oc = 0; oc < d.oc; ++oc) {
      for (int oy = 0; oy < d.oh; ++oy) {
        for (int ox = 0; ox < d.ow; ++ox) {
          const double g = go[((n * d.oc + oc) * d.oh + oy) * d.ow + ox];
          for (int ic = 0; ic < d.ic; ++ic) {
            for (int ky = 0; ky < d.kh; ++ky) {
              const int iy = oy * spec.stride - spec.padding + ky * spec.dilation;
              if (iy < 0 || iy >= d.ih) continue;
              for (int kx = 0; kx < d.kw; ++kx) {
                const int ix = ox * spec.stride - spec.padding + kx * spec.dilation;
                if (ix < 0 || ix >= d.iw) continue;
                gx[((n * d.ic + ic) * d.ih + iy) * d.iw + ix] +=
                    g * w[((static_cast<std::int64_t>(oc) * d.ic + ic) * d.kh + ky) * d.kw + kx];
              }
            }
          }
        }
      }
    }
  });
}

Tensor conv2d_impl(const Tensor& input, const Tensor& weights,
                   const std::optional<Tensor>& bias, const ConvSpec& spec, ConvAlgo algo) {
  check_rank4(input, "conv2d input");
  check_rank4(weights, "conv2d weights");
  const ConvDims d = conv_dims(input, weights, bias, spec);
  const bool direct = (algo == ConvAlgo::direct);

  if (direct) {
    Tensor out = conv_forward_direct(input, weights, bias, spec, d);
    if (Tape* tape = Tape::current()) {
      tape->record([input, weights, bias, out, spec, d]() {
        conv_backward_direct(input, weights, bias, out, spec, d);
      });
    }
    return out;
  }

  std::shared_ptr<std::vector<double>> cols;
  const bool recording = Tape::current() != nullptr;
  Tensor out = conv_forward_im2col(input, weights, bias, spec, d, recording ? &cols : nullptr);
  if (recording) {
    Tape::current()->record([input, weights, bias, out, spec, d, cols]() {
      conv_backward_im2col(input, weights, bias, out, spec, d, cols);
    });
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const ConvSpec& spec, ConvAlgo algo) {
  return conv2d_impl(input, weights, std::nullopt, spec, algo);
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvSpec& spec, ConvAlgo algo) {
  return conv2d_impl(input, weights, bias, spec, algo);
}

// ================================================================ batchnorm

BnState BnState::make(int channels) {
  BnState s;
  s.running_mean = Tensor::zeros(Shape{1, channels, 1, 1});
  s.running_var = Tensor::full(Shape{1, channels, 1, 1}, 1.0);
  return s;
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BnState& state, Mode mode) {
  check_rank4(input, "batchnorm input");
  const Shape& is = input.shape();
  const Shape chan{1, is.c, 1, 1};
  if (gamma.shape() != chan || beta.shape() != chan) {
    throw DimensionError("batchnorm2d: gamma/beta shape must be (1," + std::to_string(is.c) + ",1,1)");
  }
  if (state.running_mean.shape() != chan || state.running_var.shape() != chan) {
    throw DimensionError("batchnorm2d: running stats channel mismatch");
  }

  const std::int64_t plane = static_cast<std::int64_t>(is.h) * is.w;
  const std::int64_t m = static_cast<std::int64_t>(is.n) * plane;
  const double* x = input.data();
  Tensor out(is);
  double* y = out.data();

  if (mode == Mode::eval) {
    const double* rm = state.running_mean.data();
    const double* rv = state.running_var.data();
    const double* g = gamma.data();
    const double* b = beta.data();
    // copies: subsequent train steps may mutate the live running stats
    auto rm_saved = std::make_shared<std::vector<double>>(rm, rm + is.c);
    auto rv_saved = std::make_shared<std::vector<double>>(rv, rv + is.c);
    const double eps = state.eps;
    parallel_for(0, is.c, [&](std::int64_t c) {
      const double inv = 1.0 / std::sqrt(rv[c] + eps);
      const double gc = g[c], bc = b[c], mc = rm[c];
      for (int n = 0; n < is.n; ++n) {
        const double* xr = x + (static_cast<std::int64_t>(n) * is.c + c) * plane;
        double* yr = y + (static_cast<std::int64_t>(n) * is.c + c) * plane;
        for (std::int64_t p = 0; p < plane; ++p) yr[p] = gc * (xr[p] - mc) * inv + bc;
      }
    });
    if (Tape* tape = Tape::current()) {
      Tensor in = input, ga = gamma, be = beta;
      tape->record([in, ga, be, out, rm_saved, rv_saved, eps, is, plane]() {
        if (!out.has_grad()) return;
        const std::vector<double>& go = out.grad();
        std::vector<double>& gx = in.grad();
        std::vector<double>& gg = ga.grad();
        std::vector<double>& gb = be.grad();
        const double* xd = in.data();
        const double* g = ga.data();
        for (int c = 0; c < is.c; ++c) {
          const double inv = 1.0 / std::sqrt((*rv_saved)[c] + eps);
          const double mc = (*rm_saved)[c];
          double sg = 0.0, sgx = 0.0;
          for (int n = 0; n < is.n; ++n) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * is.c + c) * plane;
            for (std::int64_t p = 0; p < plane; ++p) {
              const double d = go[base + p];
              sg += d;
              sgx += d * (xd[base + p] - mc) * inv;
              gx[base + p] += g[c] * inv * d;
            }
          }
          gg[c] += sgx;
          gb[c] += sg;
        }
      });
    }
    return out;
  }

  // train mode
  if (m < 1) throw GeometryError("batchnorm2d: empty reduction set");
  auto xhat = std::make_shared<std::vector<double>>(input.values().size());
  auto inv_std = std::make_shared<std::vector<double>>(is.c);
  std::vector<double> mean(is.c), var(is.c);
  const double* g = gamma.data();
  const double* b = beta.data();

  parallel_for(0, is.c, [&](std::int64_t c) {
    double s = 0.0;
    for (int n = 0; n < is.n; ++n) {
      const double* xr = x + (static_cast<std::int64_t>(n) * is.c + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) s += xr[p];
    }
    const double mu = s / static_cast<double>(m);
    double v = 0.0;
    for (int n = 0; n < is.n; ++n) {
      const double* xr = x + (static_cast<std::int64_t>(n) * is.c + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        const double d = xr[p] - mu;
        v += d * d;
      }
    }
    v /= static_cast<double>(m);
    mean[c] = mu;
    var[c] = v;
    const double inv = 1.0 / std::sqrt(v + state.eps);
    (*inv_std)[c] = inv;
    const double gc = g[c], bc = b[c];
    for (int n = 0; n < is.n; ++n) {
      const std::int64_t base = (static_cast<std::int64_t>(n) * is.c + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        const double xh = (x[base + p] - mu) * inv;
        (*xhat)[base + p] = xh;
        y[base + p] = gc * xh + bc;
      }
    }
  });

  // exponential moving average; running variance uses the unbiased estimate
  double* rm = state.running_mean.data();
  double* rv = state.running_var.data();
  const double mom = state.momentum;
  for (int c = 0; c < is.c; ++c) {
    const double vu = m > 1 ? var[c] * static_cast<double>(m) / static_cast<double>(m - 1) : var[c];
    rm[c] = (1.0 - mom) * rm[c] + mom * mean[c];
    rv[c] = (1.0 - mom) * rv[c] + mom * vu;
  }

  if (Tape* tape = Tape::current()) {
    Tensor in = input, ga = gamma, be = beta;
    tape->record([in, ga, be, out, xhat, inv_std, is, plane, m]() {
      if (!out.has_grad()) return;
      const std::vector<double>& go = out.grad();
      std::vector<double>& gx = in.grad();
      std::vector<double>& gg = ga.grad();
      std::vector<double>& gb = be.grad();
      const double* g = ga.data();
      const double md = static_cast<double>(m);
      parallel_for(0, is.c, [&](std::int64_t c) {
        double sg = 0.0, sgx = 0.0;
        for (int n = 0; n < is.n; ++n) {
          const std::int64_t base = (static_cast<std::int64_t>(n) * is.c + c) * plane;
          for (std::int64_t p = 0; p < plane; ++p) {
            sg += go[base + p];
            sgx += go[base + p] * (*xhat)[base + p];
          }
        }
        gg[c] += sgx;
        gb[c] += sg;
        const double k = g[c] * (*inv_std)[c];
        const double mg = sg / md, mgx = sgx / md;
        for (int n = 0; n < is.n; ++n) {
          const std::int64_t base = (static_cast<std::int64_t>(n) * is.c + c) * plane;
          for (std::int64_t p = 0; p < plane; ++p) {
            gx[base + p] += k * (go[base + p] - mg - (*xhat)[base + p] * mgx);
          }
        }
      });
    });
  }
  return out;
}

// ================================================================ relu

Tensor relu(const Tensor& input) {
  check_rank4(input, "relu input");
  Tensor out(input.shape());
  const double* x = input.data();
  double* y = out.data();
  const std::int64_t n = input.numel();
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;

  if (Tape* tape = Tape::current()) {
    Tensor in = input;
    tape->record([in, out, n]() {
      if (!out.has_grad()) return;
      const std::vector<double>& go = out.grad();
      std::vector<double>& gx = in.grad();
      const double* x = in.data();
      // subgradient at exactly 0 is 0
      for (std::int64_t i = 0; i < n; ++i) gx[i] += x[i] > 0.0 ? go[i] : 0.0;
    });
  }
  return out;
}

// ================================================================ pooling

Tensor global_avg_pool(const Tensor& input) {
  check_rank4(input, "global_avg_pool input");
  const Shape& is = input.shape();
  const std::int64_t plane = static_cast<std::int64_t>(is.h) * is.w;
  if (plane < 1) throw GeometryError("global_avg_pool: empty spatial extent");
  Tensor out(Shape{is.n, is.c, 1, 1});
  const double* x = input.data();
  double* y = out.data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(is.n) * is.c; ++nc) {
    double s = 0.0;
    const double* xr = x + nc * plane;
    for (std::int64_t p = 0; p < plane; ++p) s += xr[p];
    y[nc] = s / static_cast<double>(plane);
  }

  if (Tape* tape = Tape::current()) {
    Tensor in = input;
    tape->record([in, out, is, plane]() {
      if (!out.has_grad()) return;
      const std::vector<double>& go = out.grad();
      std::vector<double>& gx = in.grad();
      const double inv = 1.0 / static_cast<double>(plane);
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(is.n) * is.c; ++nc) {
        const double g = go[nc] * inv;
        double* gr = gx.data() + nc * plane;
        for (std::int64_t p = 0; p < plane; ++p) gr[p] += g;
      }
    });
  }
  return out;
}

// ================================================================ bilinear

namespace {

struct ResampleAxis {
  std::vector<int> i0, i1;
  std::vector<double> t;  // fraction toward i1
};

ResampleAxis make_axis(int in, int out) {
  ResampleAxis a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.t.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int d = 0; d < out; ++d) {
    double s = (d + 0.5) * ratio - 0.5;
    if (s < 0.0) s = 0.0;
    if (s > in - 1) s = in - 1;
    int lo = static_cast<int>(std::floor(s));
    if (lo > in - 1) lo = in - 1;
    a.i0[d] = lo;
    a.i1[d] = std::min(lo + 1, in - 1);
    a.t[d] = s - lo;
  }
  return a;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  check_rank4(input, "bilinear_resize input");
  const Shape& is = input.shape();
  if (out_h < 1 || out_w < 1) throw GeometryError("bilinear_resize: output size must be >= 1");
  if (is.h < 1 || is.w < 1) throw GeometryError("bilinear_resize: empty input");

  auto ay = std::make_shared<ResampleAxis>(make_axis(is.h, out_h));
  auto ax = std::make_shared<ResampleAxis>(make_axis(is.w, out_w));
  Tensor out(Shape{is.n, is.c, out_h, out_w});
  const double* x = input.data();
  double* y = out.data();
  const std::int64_t in_plane = static_cast<std::int64_t>(is.h) * is.w;
  const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;

  parallel_for(0, static_cast<std::int64_t>(is.n) * is.c, [&](std::int64_t nc) {
    const double* xp = x + nc * in_plane;
    double* yp = y + nc * out_plane;
    for (int oy = 0; oy < out_h; ++oy) {
      const int y0 = ay->i0[oy], y1 = ay->i1[oy];
      const double ty = ay->t[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const int x0 = ax->i0[ox], x1 = ax->i1[ox];
        const double tx = ax->t[ox];
        // lerp form preserves constants exactly and stays inside the
        // [min, max] envelope of the four taps
        const double a = xp[static_cast<std::int64_t>(y0) * is.w + x0];
        const double b = xp[static_cast<std::int64_t>(y0) * is.w + x1];
        const double c = xp[static_cast<std::int64_t>(y1) * is.w + x0];
        const double e = xp[static_cast<std::int64_t>(y1) * is.w + x1];
        const double top = a + tx * (b - a);
        const double bot = c + tx * (e - c);
        yp[static_cast<std::int64_t>(oy) * out_w + ox] = top + ty * (bot - top);
      }
    }
  });

  if (Tape* tape = Tape::current()) {
    Tensor in = input;
    tape->record([in, out, ay, ax, is, out_h, out_w, in_plane, out_plane]() {
      if (!out.has_grad()) return;
      const std::vector<double>& go = out.grad();
      std::vector<double>& gx = in.grad();
      parallel_for(0, static_cast<std::int64_t>(is.n) * is.c, [&](std::int64_t nc) {
        double* gp = gx.data() + nc * in_plane;
        const double* gop = go.data() + nc * out_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int y0 = ay->i0[oy], y1 = ay->i1[oy];
          const double ty = ay->t[oy];
          for (int ox = 0; ox < out_w; ++ox) {
            const int x0 = ax->i0[ox], x1 = ax->i1[ox];
            const double tx = ax->t[ox];
            const double g = gop[static_cast<std::int64_t>(oy) * out_w + ox];
            gp[static_cast<std::int64_t>(y0) * is.w + x0] += g * (1.0 - ty) * (1.0 - tx);
            gp[static_cast<std::int64_t>(y0) * is.w + x1] += g * (1.0 - ty) * tx;
            gp[static_cast<std::int64_t>(y1) * is.w + x0] += g * ty * (1.0 - tx);
            gp[static_cast<std::int64_t>(y1) * is.w + x1] += g * ty * tx;
          }
        }
      });
    });
  }
  return out;
}

// ================================================================ concat

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check_rank4(a, "concat operand a");
  check_rank4(b, "concat operand b");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw DimensionError("concat_channels: " + to_string(as) + " vs " + to_string(bs));
  }
  Tensor out(Shape{as.n, as.c + bs.c, as.h, as.w});
  const std::int64_t plane = static_cast<std::int64_t>(as.h) * as.w;
  const std::int64_t a_blk = as.c * plane, b_blk = bs.c * plane;
  double* y = out.data();
  for (int n = 0; n < as.n; ++n) {
    std::memcpy(y + n * (a_blk + b_blk), a.data() + n * a_blk, a_blk * sizeof(double));
    std::memcpy(y + n * (a_blk + b_blk) + a_blk, b.data() + n * b_blk, b_blk * sizeof(double));
  }

  if (Tape* tape = Tape::current()) {
    Tensor ta = a, tb = b;
    tape->record([ta, tb, out, as, a_blk, b_blk]() {
      if (!out.has_grad()) return;
      const std::vector<double>& go = out.grad();
      std::vector<double>& ga = ta.grad();
      std::vector<double>& gb = tb.grad();
      for (int n = 0; n < as.n; ++n) {
        const double* src = go.data() + n * (a_blk + b_blk);
        for (std::int64_t i = 0; i < a_blk; ++i) ga[n * a_blk + i] += src[i];
        for (std::int64_t i = 0; i < b_blk; ++i) gb[n * b_blk + i] += src[a_blk + i];
      }
    });
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, int c_first) {
  const Shape& s = x.shape();
  if (c_first < 0 || c_first > s.c) throw DimensionError("split_channels: bad boundary");
  Tensor a(Shape{s.n, c_first, s.h, s.w});
  Tensor b(Shape{s.n, s.c - c_first, s.h, s.w});
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  const std::int64_t a_blk = static_cast<std::int64_t>(c_first) * plane;
  const std::int64_t b_blk = static_cast<std::int64_t>(s.c - c_first) * plane;
  for (int n = 0; n < s.n; ++n) {
    std::memcpy(a.data() + n * a_blk, x.data() + n * (a_blk + b_blk), a_blk * sizeof(double));
    std::memcpy(b.data() + n * b_blk, x.data() + n * (a_blk + b_blk) + a_blk, b_blk * sizeof(double));
  }
  return {a, b};
}

// ================================================================ elementwise

namespace {

enum class Pattern { same, channel, spatial, scalar };

// b must broadcast against full shape a
Pattern classify(const Shape& a, const Shape& b) {
  if (a == b) return Pattern::same;
  if (b.n == 1 && b.c == 1 && b.h == 1 && b.w == 1) return Pattern::scalar;
  if (b.n == a.n && b.c == a.c && b.h == 1 && b.w == 1) return Pattern::channel;
  if (b.n == a.n && b.c == 1 && b.h == a.h && b.w == a.w) return Pattern::spatial;
  throw DimensionError("elementwise: incompatible shapes " + to_string(a) + " vs " + to_string(b));
}

// index of the broadcast operand's element feeding full index i
struct BcastIndex {
  Pattern pat;
  std::int64_t c, plane;
  std::int64_t operator()(std::int64_t i) const {
    switch (pat) {
      case Pattern::same: return i;
      case Pattern::scalar: return 0;
      case Pattern::channel: return i / plane;
      case Pattern::spatial: {
        const std::int64_t n = i / (c * plane);
        return n * plane + i % plane;
      }
    }
    return 0;
  }
};

template <typename FwdOp>
Tensor binary_op(const Tensor& a, const Tensor& b, FwdOp fwd, bool is_mul) {
  check_rank4(a, "elementwise operand a");
  check_rank4(b, "elementwise operand b");
  // the larger (or equal) shape is the output shape
  const bool b_small = b.numel() <= a.numel();
  const Tensor& big = b_small ? a : b;
  const Tensor& small = b_small ? b : a;
  const Pattern pat = classify(big.shape(), small.shape());

  const Shape& s = big.shape();
  BcastIndex bi{pat, s.c, static_cast<std::int64_t>(s.h) * s.w};
  Tensor out(s);
  const double* xb = big.data();
  const double* xs = small.data();
  double* y = out.data();
  const std::int64_t n = s.numel();
  for (std::int64_t i = 0; i < n; ++i) y[i] = fwd(xb[i], xs[bi(i)]);

  if (Tape* tape = Tape::current()) {
    Tensor tb = big, ts = small;
    tape->record([tb, ts, out, bi, n, is_mul]() {
      if (!out.has_grad()) return;
      const std::vector<double>& go = out.grad();
      std::vector<double>& gb = tb.grad();
      std::vector<double>& gs = ts.grad();
      const double* xb = tb.data();
      const double* xs = ts.data();
      if (is_mul) {
        for (std::int64_t i = 0; i < n; ++i) {
          gb[i] += go[i] * xs[bi(i)];
          gs[bi(i)] += go[i] * xb[i];
        }
      } else {
        for (std::int64_t i = 0; i < n; ++i) {
          gb[i] += go[i];
          gs[bi(i)] += go[i];
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x + y; }, false);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x * y; }, true);
}

Tensor affine(const Tensor& x, double mul_const, double add_const) {
  check_rank4(x, "affine input");
  Tensor out(x.shape());
  const double* xd = x.data();
  double* y = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) y[i] = mul_const * xd[i] + add_const;

  if (Tape* tape = Tape::current()) {
    Tensor in = x;
    tape->record([in, out, mul_const, n]() {
      if (!out.has_grad()) return;
      const std::vector<double>& go = out.grad();
      std::vector<double>& gx = in.grad();
      for (std::int64_t i = 0; i < n; ++i) gx[i] += mul_const * go[i];
    });
  }
  return out;
}

}  // namespace acnet
