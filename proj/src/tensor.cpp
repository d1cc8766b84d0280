#include "sdvit/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "sdvit/errors.hpp"

namespace sdvit {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<float>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

static void validate_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw InvalidArgument("tensor dims must be >= 1, got " + shape_str(shape));
  }
}

Tensor::Tensor(Shape shape, float fill, bool requires_grad) : impl_(std::make_shared<TensorImpl>()) {
  validate_shape(shape);
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  validate_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw InvalidArgument("data length " + std::to_string(data.size()) + " does not match shape " +
                          shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(float value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::from_impl(std::shared_ptr<TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw InvalidArgument("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<float> Tensor::data() { return impl_->data; }
std::span<const float> Tensor::data() const { return impl_->data; }

float Tensor::item() const {
  if (numel() != 1) throw InvalidArgument("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!impl_->is_leaf()) throw StateError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const float> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, impl_->requires_grad); }

const char* Tensor::op_name() const { return impl_->op ? impl_->op : "leaf"; }

void Tensor::backward() const {
  if (numel() != 1) {
    throw InvalidArgument("backward() requires a scalar, got shape " + shape_str(shape()));
  }
  if (impl_->released) throw StateError("backward() called twice on the same graph; re-run forward");
  if (!impl_->requires_grad) throw StateError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order (parents first). The
  // order holds owning references so releasing edges below frees nothing early.
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> stack;
  stack.emplace_back(impl_, 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    TensorImpl* node = stack.back().first.get();
    std::size_t& next = stack.back().second;
    if (next < node->parents.size()) {
      const std::shared_ptr<TensorImpl>& parent = node->parents[next++];
      if (parent->requires_grad && !visited.count(parent.get())) {
        if (parent->released) {
          throw StateError(std::string("graph through '") + parent->op +
                           "' was already consumed by a previous backward()");
        }
        visited.insert(parent.get());
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(std::move(stack.back().first));
      stack.pop_back();
    }
  }

  impl_->grad_buffer()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl& node = **it;
    if (node.is_leaf()) continue;
    if (node.backward_fn && !node.grad.empty()) node.backward_fn(node);
    node.backward_fn = nullptr;
    node.parents.clear();
    node.released = true;
  }
}

bool is_grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<float> data, const char* op, const std::vector<Tensor>& inputs,
                   BackwardFn fn) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  TensorImpl& impl = *out.impl();
  impl.requires_grad = true;
  impl.op = op;
  impl.parents.reserve(inputs.size());
  for (const Tensor& t : inputs) impl.parents.push_back(t.impl_ptr());
  impl.backward_fn = std::move(fn);
  return out;
}

Tensor make_result(Shape shape, std::vector<float> data, const char* op, std::initializer_list<Tensor> inputs,
                   BackwardFn fn) {
  return make_result(std::move(shape), std::move(data), op, std::vector<Tensor>(inputs), std::move(fn));
}

float* parent_grad(TensorImpl& self, std::size_t index) {
  TensorImpl& parent = *self.parents[index];
  if (!parent.requires_grad) return nullptr;
  return parent.grad_buffer().data();
}

void accumulate_grad(TensorImpl& self, std::size_t index, std::span<const float> values) {
  float* g = parent_grad(self, index);
  if (!g) return;
  for (std::size_t i = 0; i < values.size(); ++i) g[i] += values[i];
}

}  // namespace sdvit
