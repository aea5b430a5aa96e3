#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dabformer {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for any extent/rank disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Raised when an op produces NaN or Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool is_leaf = true;
};

}  // namespace detail

// Dense float64 array in row-major order with optional gradient tracking.
//
// Tensor is a shared handle (copies alias the same storage), mirroring how
// autograd frameworks pass activations around. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  // Negative axes count from the end.
  int64_t dim(int axis) const;
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double item() const;
  double& at(std::initializer_list<int64_t> index);
  double at(std::initializer_list<int64_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  Tensor grad_tensor() const;
  void zero_grad();

  Tensor clone() const;
  // Same values, no gradient history.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  int64_t flat_index(std::initializer_list<int64_t> index) const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace autograd {

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// True when grad mode is on and any input participates in differentiation.
bool any_requires_grad(std::initializer_list<const Tensor*> inputs);
bool any_requires_grad(std::span<const Tensor> inputs);

// Appends one op record to the thread's tape. `outputs` are marked as
// requiring grad; `backward` reads their grads and accumulates into inputs.
void record(std::vector<Tensor> outputs, std::function<void()> backward);

// Grad buffer of `t`, allocated (zero-filled) on first use.
std::span<double> grad_buffer(const std::shared_ptr<detail::TensorImpl>& t);

// Reverse sweep over the tape from a scalar root; the tape is cleared after.
void backward(const Tensor& root);

void clear_tape();
std::size_t tape_size();

}  // namespace autograd

// Throws NonFiniteError naming `where` if any value is NaN or Inf.
void check_finite(std::span<const double> values, const char* where);

}  // namespace dabformer
