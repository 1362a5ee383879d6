#include "acnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "acnet/rng.hpp"
#include "acnet/tape.hpp"

namespace acnet {

namespace {

double sum_all(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  if (!std::isfinite(s)) throw EvaluationError("grad_check: non-finite function output");
  return s;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn, Tensor x,
                           const GradCheckOptions& opt) {
  if (opt.eps <= 0.0) throw ParameterError("grad_check: eps must be > 0");

  // analytic pass
  x.clear_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor out = fn(x);
    if (!out.all_finite()) throw EvaluationError("grad_check: non-finite forward output");
    std::vector<double>& g = out.grad();
    std::fill(g.begin(), g.end(), 1.0);
    tape.backward();
  }
  std::vector<double> analytic(static_cast<std::size_t>(x.numel()), 0.0);
  if (x.has_grad()) analytic = x.grad();
  x.clear_grad();

  // coordinate selection
  const std::int64_t n = x.numel();
  std::vector<std::int64_t> coords;
  if (opt.max_coords > 0 && n > opt.max_coords) {
    Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::int64_t> all(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) all[i] = i;
    for (std::int64_t i = 0; i < opt.max_coords; ++i) {
      const std::int64_t j = i + rng.uniform_int(0, n - 1 - i);
      std::swap(all[i], all[j]);
      coords.push_back(all[i]);
    }
  } else {
    coords.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) coords[i] = i;
  }

  GradCheckReport rep;
  rep.coords_checked = static_cast<std::int64_t>(coords.size());
  double* data = x.data();
  for (std::int64_t i : coords) {
    const double saved = data[i];
    data[i] = saved + opt.eps;
    const double fp = sum_all(fn(x));
    data[i] = saved - opt.eps;
    const double fm = sum_all(fn(x));
    data[i] = saved;
    const double numeric = (fp - fm) / (2.0 * opt.eps);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double abs_err = std::fabs(a - numeric);
    // floored denominator keeps near-zero gradients from dominating
    const double rel = abs_err / std::max({1e-4, std::fabs(a), std::fabs(numeric)});
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_coord = i;
    }
    rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
  }
  rep.pass = rep.max_rel_err < opt.tol;
  return rep;
}

std::string to_string(const GradCheckReport& r) {
  std::ostringstream os;
  os << (r.pass ? "PASS" : "FAIL") << " max_rel_err=" << r.max_rel_err
     << " max_abs_err=" << r.max_abs_err << " coords=" << r.coords_checked;
  if (!r.pass) os << " worst_coord=" << r.worst_coord;
  return os.str();
}

}  // namespace acnet
