#include "dabformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dabformer {

namespace {

#if defined(__GLIBC__)
// Activation buffers are large and short-lived. Keeping them on the heap
// instead of fresh mmaps avoids a page-fault storm on every forward pass.
const bool kMallocTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : impl_(std::make_shared<detail::TensorImpl>()) {
  const int64_t n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  const int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size())) {
    throw ShapeError("shape " + shape_str(shape) + " holds " + std::to_string(n) +
                     " elements but " + std::to_string(values.size()) + " were given");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(r));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

int64_t Tensor::flat_index(std::initializer_list<int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " vs tensor rank " +
                     std::to_string(rank()));
  }
  int64_t flat = 0;
  std::size_t axis = 0;
  for (int64_t i : index) {
    const int64_t extent = impl_->shape[axis];
    if (i < 0 || i >= extent) {
      throw ShapeError("index " + std::to_string(i) + " out of range on axis " +
                       std::to_string(axis) + " of " + shape_str(shape()));
    }
    flat = flat * extent + i;
    ++axis;
  }
  return flat;
}

double& Tensor::at(std::initializer_list<int64_t> index) {
  return impl_->data[static_cast<std::size_t>(flat_index(index))];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
  return impl_->data[static_cast<std::size_t>(flat_index(index))];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() { return autograd::grad_buffer(impl_); }

Tensor Tensor::grad_tensor() const {
  Tensor g(shape());
  if (has_grad()) std::copy(impl_->grad.begin(), impl_->grad.end(), g.impl_->data.begin());
  return g;
}

void Tensor::zero_grad() { std::vector<double>().swap(impl_->grad); }

Tensor Tensor::clone() const {
  Tensor t(shape());
  t.impl_->data = impl_->data;
  return t;
}

Tensor Tensor::detach() const { return clone(); }

void check_finite(std::span<const double> values, const char* where) {
  // x - x is 0 for finite x and NaN otherwise; the sum vectorizes.
  double acc = 0.0;
  for (double v : values) acc += v - v;
  if (acc != 0.0 || std::isnan(acc)) {
    throw NonFiniteError(std::string("non-finite value produced by ") + where);
  }
}

namespace autograd {
namespace {

struct Node {
  std::vector<std::shared_ptr<detail::TensorImpl>> outputs;
  std::function<void()> backward;
};

struct Tape {
  std::vector<Node> nodes;
  bool enabled = true;
};

Tape& tape() {
  thread_local Tape t;
  return t;
}

}  // namespace

bool grad_enabled() { return tape().enabled; }

NoGradGuard::NoGradGuard() : previous_(tape().enabled) { tape().enabled = false; }
NoGradGuard::~NoGradGuard() { tape().enabled = previous_; }

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

bool any_requires_grad(std::span<const Tensor> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

void record(std::vector<Tensor> outputs, std::function<void()> backward) {
  Node node;
  node.outputs.reserve(outputs.size());
  for (Tensor& o : outputs) {
    o.impl()->requires_grad = true;
    o.impl()->is_leaf = false;
    node.outputs.push_back(o.impl());
  }
  node.backward = std::move(backward);
  tape().nodes.push_back(std::move(node));
}

std::span<double> grad_buffer(const std::shared_ptr<detail::TensorImpl>& t) {
  if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
  return t->grad;
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ShapeError("backward() needs a scalar root");
  }
  if (!root.requires_grad()) throw Error("backward() root does not require grad");
  auto& nodes = tape().nodes;
  grad_buffer(root.impl())[0] += 1.0;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    bool live = false;
    for (const auto& o : it->outputs) live = live || !o->grad.empty();
    if (!live) continue;
    for (const auto& o : it->outputs) grad_buffer(o);
    it->backward();
    for (const auto& o : it->outputs) {
      if (!o->is_leaf) std::vector<double>().swap(o->grad);
    }
  }
  nodes.clear();
}

void clear_tape() { tape().nodes.clear(); }

std::size_t tape_size() { return tape().nodes.size(); }

}  // namespace autograd
}  // namespace dabformer
