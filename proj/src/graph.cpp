#include "pepsi/graph.hpp"

#include <algorithm>

namespace pepsi {

template <typename T>
Parameter<T>& ParamSet<T>::add(const std::string& name, Tensor<T> value) {
  if (index_.count(name) != 0) throw ContractError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter<T>>(name, std::move(value)));
  return *params_.back();
}

template <typename T>
Parameter<T>& ParamSet<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <typename T>
const Parameter<T>& ParamSet<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <typename T>
std::size_t ParamSet<T>::numel() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p->value.size();
  return total;
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  node.tag = "const";
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::param(Parameter<T>& p) {
  Node node;
  node.value = p.value;
  node.param = track_ ? &p : nullptr;
  node.requires_grad = track_;
  node.tag = "param";
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, std::vector<std::size_t> parents, Backward backward) {
  Node node;
  node.value = std::move(value);
  const std::size_t self = nodes_.size();
  bool needs = false;
  for (std::size_t p : parents) {
    if (p >= self) throw ContractError("graph: parent node does not precede its child (cycle)");
    needs = needs || nodes_[p].requires_grad;
  }
  node.requires_grad = track_ && needs;
  if (node.requires_grad) {
    node.parents = std::move(parents);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return {this, self};
}

template <typename T>
Tensor<T>& Graph<T>::grad(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.shape() != node.value.shape() || node.grad.size() != node.value.size()) {
    node.grad = Tensor<T>(node.value.shape());
  }
  return node.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
  if (!track_) throw ContractError("backward: graph was built without gradient tracking");
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + to_string(nodes_[loss.id].value.shape()));
  }
  grad(loss.id)[0] = T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, i);
    if (node.param != nullptr) {
      auto& pg = node.param->grad;
      const auto& g = nodes_[i].grad;
      for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
    }
  }
}

template <typename T>
std::size_t Graph<T>::count_tag(const std::string& tag) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [&](const Node& n) { return tag == n.tag; }));
}

template class ParamSet<float>;
template class ParamSet<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace pepsi
