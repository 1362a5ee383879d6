#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace acnet {

// ---------------------------------------------------------------- errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };   // shape mismatch
struct GeometryError : Error { using Error::Error; };    // degenerate output size
struct ParameterError : Error { using Error::Error; };   // bad hyperparameter
struct TapeError : Error { using Error::Error; };        // autograd misuse
struct FormatError : Error { using Error::Error; };      // file format
struct DataError : Error { using Error::Error; };        // label / batch content
struct ConfigError : Error { using Error::Error; };      // config parsing
struct ScheduleError : Error { using Error::Error; };    // lr schedule misuse
struct DivergenceError : Error { using Error::Error; };  // non-finite training state
struct EvaluationError : Error { using Error::Error; };  // non-finite check output
struct GenerationError : Error { using Error::Error; };  // synthetic scene placement

// ---------------------------------------------------------------- shape

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// ---------------------------------------------------------------- tensor

// Dense rank-4 array in row-major (n, c, h, w) order with an optional
// gradient buffer of the same shape. Copies share storage; ops never
// mutate their inputs' data once a forward pass has produced them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& s);

  static Tensor zeros(const Shape& s) { return Tensor(s); }
  static Tensor full(const Shape& s, double value);
  static Tensor from_values(const Shape& s, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t numel() const { return shape().numel(); }

  double* data();
  const double* data() const;
  std::vector<double>& values();
  const std::vector<double>& values() const;

  double at(int n, int c, int h, int w) const;
  double& at(int n, int c, int h, int w);

  // Gradient buffer. Absent until ensure_grad() or a backward pass
  // touches this tensor; treated as zero while absent.
  bool has_grad() const;
  std::vector<double>& grad();              // allocates zero-filled if absent
  const std::vector<double>& grad() const;  // throws if absent
  void clear_grad();

  Tensor clone() const;  // deep copy of data only (no grad)
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool all_finite() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool grad_present = false;
  };
  std::shared_ptr<Impl> impl_;

  Impl& impl();
  const Impl& impl() const;
};

}  // namespace acnet
