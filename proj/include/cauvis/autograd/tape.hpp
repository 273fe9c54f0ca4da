#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cauvis/numerics/linalg.hpp"

namespace cauvis::ad {

struct Parameter {
  std::string id;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

// Parameters keyed by id. Iteration is in ascending id order, which fixes the
// order of every reduction and optimizer update.
class ParameterStore {
 public:
  Parameter& add(const std::string& id, Matrix value, bool trainable = true) {
    if (params_.contains(id)) throw ConfigError("duplicate parameter id '" + id + "'");
    Parameter p{id, std::move(value), {}, trainable};
    p.zero_grad();
    return params_.emplace(id, std::move(p)).first->second;
  }

  Parameter& at(const std::string& id) {
    auto it = params_.find(id);
    if (it == params_.end()) throw LookupError("unknown parameter '" + id + "'");
    return it->second;
  }
  const Parameter& at(const std::string& id) const {
    auto it = params_.find(id);
    if (it == params_.end()) throw LookupError("unknown parameter '" + id + "'");
    return it->second;
  }

  bool contains(const std::string& id) const { return params_.contains(id); }
  std::size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (auto ia = a.params_.begin(), ib = b.params_.begin(); ia != a.params_.end(); ++ia, ++ib) {
      if (ia->first != ib->first || !(ia->second.value == ib->second.value) ||
          ia->second.trainable != ib->second.trainable)
        return false;
    }
    return true;
  }

 private:
  std::map<std::string, Parameter> params_;
};

class Tape;

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Matrix& value() const;
  std::size_t index() const noexcept { return index_; }
  Tape& tape() const noexcept { return *tape_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Records one forward pass. `backward` walks nodes in reverse creation order,
// so gradient accumulation order is fixed by the forward program.
class Tape {
 public:
  // Called with the gradient of the node's output; pushes contributions to
  // inputs through Tape::accumulate.
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  Var constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}, {}, nullptr, "constant", true});
    return {this, nodes_.size() - 1};
  }

  Var parameter(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, false, {}, {}, &p, p.id, true});
    return {this, nodes_.size() - 1};
  }

  Var record(Matrix value, std::vector<Var> inputs, Backward fn, const char* name) {
    Node n{std::move(value), {}, false, {}, {}, nullptr, name, true};
    if (recording_) {
      n.inputs.reserve(inputs.size());
      for (const auto& v : inputs) n.inputs.push_back(v.index());
      n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  // A node computed outside the supported op set. Values flow forward; a
  // gradient reaching it raises GraphError.
  Var opaque(Matrix value, std::vector<Var> inputs, std::string name) {
    Node n{std::move(value), {}, false, {}, {}, nullptr, std::move(name), false};
    for (const auto& v : inputs) n.inputs.push_back(v.index());
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Matrix& value(std::size_t i) const { return nodes_[i].value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void accumulate(const Var& v, const Matrix& g) {
    Node& n = nodes_[v.index()];
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      add_inplace(n.grad, g);
    }
  }

  // Seeds d(loss)/d(loss) = 1 and propagates; parameter gradients are added
  // to Parameter::grad of trainable parameters.
  void backward(const Var& loss) {
    if (!recording_) throw GraphError("backward on a non-recording tape");
    const Matrix& lv = value(loss.index());
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw GraphError("backward: loss must be 1x1, got " + lv.shape_str());
    }
    accumulate(loss, Matrix(1, 1, 1.0));
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad) continue;
      if (n.param != nullptr) {
        if (n.param->trainable) add_inplace(n.param->grad, n.grad);
        continue;
      }
      if (n.inputs.empty()) continue;
      if (!n.differentiable || !n.backward) {
        throw GraphError("backward: no gradient rule for op '" + n.name + "'");
      }
      // Copy: the callback may push new gradient into earlier nodes only.
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad;
    std::vector<std::size_t> inputs;
    Backward backward;
    Parameter* param;
    std::string name;
    bool differentiable;
  };
  // deque keeps node addresses stable while the forward pass appends.
  std::deque<Node> nodes_;
  bool recording_;
};

inline const Matrix& Var::value() const { return tape_->value(index_); }

}  // namespace cauvis::ad
