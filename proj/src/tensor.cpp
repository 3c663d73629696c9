#include "dbm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace dbm {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& name) {
  if (name == "f64" || name == "64") return Precision::f64;
  if (name == "f32" || name == "32") return Precision::f32;
  throw ConfigError("unknown precision '" + name + "' (expected f64 or f32)");
}

namespace {

void round_values(std::vector<double>& v, Precision p) {
  if (p != Precision::f32) return;
  for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
}

void check_shape(const Shape& shape, std::size_t n) {
  for (auto s : shape)
    if (s == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  if (shape_numel(shape) != n)
    throw ShapeError("shape " + shape_string(shape) + " does not hold " +
                     std::to_string(n) + " values");
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

Tensor Tensor::zeros(Shape shape, Precision p) { return full(std::move(shape), 0.0, p); }

Tensor Tensor::full(Shape shape, double v, Precision p) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, v), p);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, Precision p) {
  check_shape(shape, values.size());
  if (!all_finite(values)) throw NumericError("non-finite value in tensor literal");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->precision = p;
  round_values(node->value, p);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, Precision p) { return from({1}, {v}, p); }

Tensor Tensor::variable(Shape shape, std::vector<double> values, Precision p) {
  Tensor t = from(std::move(shape), std::move(values), p);
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("axis out of range for " + shape_string(shape()));
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_string(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_string(shape()));
  return shape()[1];
}

Precision Tensor::precision() const { return node_->precision; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->leaf; }
std::span<const double> Tensor::values() const { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

std::span<const double> Tensor::grad() const { return node_->grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

std::span<double> Tensor::mutable_values() {
  if (!node_->leaf) throw std::logic_error("in-place update of a non-leaf tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_->leaf) throw std::logic_error("in-place update of a non-leaf gradient");
  return node_->ensure_grad();
}

void Tensor::round_to_precision() { round_values(node_->value, node_->precision); }

Tensor Tensor::detach() const { return from(shape(), node_->value, precision()); }

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn) {
  check_shape(shape, values.size());
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->leaf = false;
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.precision() == Precision::f32) node->precision = Precision::f32;
    needs = needs || in.requires_grad();
  }
  round_values(node->value, node->precision);
  if (!all_finite(node->value)) throw NumericError("non-finite activation in forward pass");
  node->requires_grad = needs;
  if (needs) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.shared_node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  // iterative post-order DFS
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  auto* root = loss.node();
  if (!root->requires_grad) return;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // intermediate gradients belong to this sweep only
  for (auto* n : order)
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* n = *it;
    if (n->leaf || !n->backward_fn) continue;
    n->backward_fn(*n);
  }
  for (auto* n : order)
    if (n->leaf && !all_finite(n->grad))
      throw NumericError("non-finite gradient reached a parameter");
}

// ---------------------------------------------------------------------------

Tensor& ParameterSet::add(std::string name, Tensor tensor, bool trainable, bool decay) {
  if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos)
    throw ConfigError("parameter name '" + name + "' is empty or contains whitespace");
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  if (!tensor.is_leaf()) throw std::logic_error("parameter '" + name + "' is not a leaf");
  if (trainable && !tensor.requires_grad())
    tensor = Tensor::variable(tensor.shape(),
                              std::vector<double>(tensor.values().begin(), tensor.values().end()),
                              tensor.precision());
  items_.push_back({std::move(name), std::move(tensor), trainable, decay});
  return items_.back().tensor;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : items_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  const auto* p = find(name);
  if (!p) throw std::out_of_range("no parameter named '" + name + "'");
  return *p;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

std::vector<std::vector<double>> ParameterSet::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void ParameterSet::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != items_.size()) throw ShapeError("snapshot does not match parameter set");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto dst = items_[i].tensor.mutable_values();
    if (dst.size() != values[i].size())
      throw ShapeError("snapshot size mismatch for '" + items_[i].name + "'");
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

// ---------------------------------------------------------------------------

GradCheckResult finite_diff_check(const std::function<Tensor()>& f,
                                  std::span<Parameter> params, double eps,
                                  Stencil stencil) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  for (const auto& p : params) {
    if (p.tensor.precision() != Precision::f64)
      throw std::invalid_argument("finite_diff_check requires 64-bit parameters");
  }
  for (auto& p : params) p.tensor.zero_grad();
  Tensor loss = f();
  backward(loss);

  GradCheckResult result;
  for (auto& p : params) {
    if (!p.trainable) continue;
    auto values = p.tensor.mutable_values();
    std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    analytic.resize(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        const double v = f().item();
        if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite objective");
        return v;
      };
      double numeric;
      if (stencil == Stencil::two_point) {
        numeric = (at(eps) - at(-eps)) / (2.0 * eps);
      } else {
        const double p1 = at(eps), m1 = at(-eps), p2 = at(2 * eps), m2 = at(-2 * eps);
        numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
      }
      values[i] = saved;
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic[i] - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p.name;
        result.worst_index = i;
      }
    }
  }
  for (auto& p : params) p.tensor.zero_grad();
  return result;
}

}  // namespace dbm
