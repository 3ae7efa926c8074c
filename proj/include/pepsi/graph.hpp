#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pepsi/tensor.hpp"

namespace pepsi {

/// A trainable tensor with its accumulated gradient. `name` is the
/// dot-separated checkpoint address.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

/// Ordered, name-unique collection of parameters with stable addresses.
template <typename T>
class ParamSet {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> value);

  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

  void zero_grad();
  std::size_t numel() const;

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
class Graph;

/// Handle to a node of a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape
/// order is a topological order and backprop is a single reverse sweep.
///
/// With tracking disabled the graph only evaluates values; no backward
/// closures are kept and parameters behave as constants.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t self)>;

  explicit Graph(bool track = true) : track_(track) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracking() const { return track_; }

  Var<T> constant(Tensor<T> value);
  /// Leaf bound to `p`; backward() accumulates into p.grad.
  Var<T> param(Parameter<T>& p);

  /// Appends an op result. `parents` must all be earlier nodes; the node
  /// requires grad iff tracking is on and some parent requires grad.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> parents, Backward backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

  /// Gradient buffer of a node, allocated (zeroed) on first access.
  Tensor<T>& grad(std::size_t id);

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards. Loss must be a
  /// single-element node.
  void backward(Var<T> loss);

  std::size_t size() const { return nodes_.size(); }

  /// Count of recorded nodes by op tag (debug / audit aid).
  void set_tag(std::size_t id, const char* tag) { nodes_[id].tag = tag; }
  std::size_t count_tag(const std::string& tag) const;

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> parents;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    const char* tag = "";
  };

  bool track_;
  std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(id);
}

}  // namespace pepsi
