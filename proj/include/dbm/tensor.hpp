#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// A Tensor is a handle onto an immutable graph node. Ops build new nodes and
// record how to push gradients back to their inputs; backward() walks the graph
// once in reverse topological order. Leaves (parameters) accumulate gradients
// across backward() calls until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dbm/error.hpp"

namespace dbm {

// 32-bit mode stores every produced value rounded through float; the
// arithmetic itself stays in double.
enum class Precision { f64, f32 };

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);
const char* precision_name(Precision p);
Precision parse_precision(const std::string& name);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first touched by backward
  Precision precision = Precision::f64;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, Precision p = Precision::f64);
  static Tensor full(Shape shape, double v, Precision p = Precision::f64);
  static Tensor from(Shape shape, std::vector<double> values,
                     Precision p = Precision::f64);
  static Tensor scalar(double v, Precision p = Precision::f64);
  // Leaf that collects gradients, i.e. a parameter.
  static Tensor variable(Shape shape, std::vector<double> values,
                         Precision p = Precision::f64);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only
  Precision precision() const;
  bool requires_grad() const;
  bool is_leaf() const;

  std::span<const double> values() const;
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const;

  // Empty span when no gradient has reached this node.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  // In-place access is restricted to leaves (parameter updates, perturbations).
  std::span<double> mutable_values();
  std::span<double> mutable_grad();
  // Re-applies the precision rounding after an in-place update.
  void round_to_precision();

  // Same values, cut from the graph.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward_fn);
};

// Builds an op output node. Throws NumericError on non-finite values. The
// backward function is dropped when no input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn);

// Reverse-mode sweep from a scalar loss.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Parameters

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
  bool decay = true;  // AdamW decoupled weight decay applies
};

class ParameterSet {
 public:
  // Throws ConfigError on duplicate names.
  Tensor& add(std::string name, Tensor tensor, bool trainable = true,
              bool decay = true);
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<Parameter> items_;
};

// Central-difference gradient check. Perturbs each coordinate of every
// trainable parameter by +-eps, compares against backward(), and returns the
// worst relative error |a - n| / max(|a|, |n|, 1e-8).
struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

// two_point: (f(x+e) - f(x-e)) / 2e.
// four_point: (8(f(x+e) - f(x-e)) - (f(x+2e) - f(x-2e))) / 12e, truncation
// O(e^4), which lets e be large enough that roundoff stops dominating tiny
// gradients.
enum class Stencil { two_point, four_point };

GradCheckResult finite_diff_check(const std::function<Tensor()>& f,
                                  std::span<Parameter> params, double eps,
                                  Stencil stencil = Stencil::two_point);

}  // namespace dbm
