#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "causim/numcore/tensor.hpp"

namespace causim::num {

using NodeId = std::size_t;
using ParamId = std::size_t;

enum class OpKind {
    Parameter,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    AddRowBias,
    AddGroupBias,
    Relu,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Square,
    Sum,
    WeightedSum,
    ConcatCols,
    ConcatRows,
    GatherRows,
    GatherCols,
    Reshape,
    Transpose,
    Trace,
    PairAggregate,
    GaussianKL,
    BernoulliKLHalf,
    NodeLinear,
    GraphMean,
    Custom,
};

/// A named trainable tensor. Identity is its index inside a ParameterSet.
struct Parameter {
    std::string name;
    Tensor value;
};

class ParameterSet {
public:
    ParamId add(std::string name, Tensor value) {
        params_.push_back({std::move(name), std::move(value)});
        return params_.size() - 1;
    }

    [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
    Parameter& operator[](ParamId id) { return params_.at(id); }
    const Parameter& operator[](ParamId id) const { return params_.at(id); }
    [[nodiscard]] const std::vector<Parameter>& all() const noexcept { return params_; }
    std::vector<Parameter>& all() noexcept { return params_; }

    [[nodiscard]] ParamId find(const std::string& name) const {
        for (ParamId i = 0; i < params_.size(); ++i)
            if (params_[i].name == name) return i;
        throw ContractViolation("ParameterSet: unknown parameter " + name);
    }

    [[nodiscard]] std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

private:
    std::vector<Parameter> params_;
};

/// Gradient per parameter id, as returned by Tape::backward.
using Gradients = std::map<ParamId, Tensor>;

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    NodeId id = 0;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] std::size_t rows() const { return value().rows(); }
    [[nodiscard]] std::size_t cols() const { return value().cols(); }
};

/// Append-only record of one forward pass. Single owner; not thread-safe.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value) {
        return push(OpKind::Constant, {}, std::move(value), false, nullptr);
    }

    /// Leaf bound to a parameter. Repeated calls for the same id return the same node.
    Var parameter(const ParameterSet& params, ParamId id) {
        if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return {this, it->second};
        Var v = push(OpKind::Parameter, {}, params[id].value, true, nullptr);
        nodes_[v.id].param_id = id;
        param_nodes_.emplace(id, v.id);
        return v;
    }

    /// Records an op. `backward` may be empty when no parent requires a gradient.
    Var record(OpKind kind, std::vector<NodeId> parents, Tensor value, BackwardFn backward) {
        bool needs = false;
        for (NodeId p : parents) needs = needs || nodes_[p].requires_grad;
        return push(kind, std::move(parents), std::move(value), needs, needs ? std::move(backward) : nullptr);
    }

    [[nodiscard]] const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    [[nodiscard]] OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
    [[nodiscard]] bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] const std::vector<NodeId>& parents(NodeId id) const { return nodes_.at(id).parents; }

    /// Gradient accumulator of a node during backward; nullptr when the node needs none.
    Tensor* grad_slot(NodeId id) {
        Node& n = nodes_[id];
        if (!n.requires_grad) return nullptr;
        if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Tensor(n.value.rows(), n.value.cols());
        return &n.grad;
    }

    /// Reverse sweep from a scalar node. Every parameter leaf on the tape gets an
    /// entry; leaves the loss does not depend on receive zeros.
    Gradients backward(Var loss) {
        require(loss.tape == this, "backward: loss belongs to another tape");
        require(nodes_.at(loss.id).value.is_scalar(), "backward: loss node must be scalar");
        for (auto& n : nodes_) n.grad = Tensor();
        if (nodes_[loss.id].requires_grad) {
            *grad_slot(loss.id) = Tensor::scalar(1.0);
            for (NodeId i = loss.id + 1; i-- > 0;) {
                Node& n = nodes_[i];
                if (!n.backward || n.grad.size() == 0) continue;
                n.backward(*this, n.grad);
            }
        }
        Gradients out;
        for (const auto& [pid, nid] : param_nodes_) {
            const Node& n = nodes_[nid];
            out.emplace(pid, n.grad.size() == 0 ? Tensor(n.value.rows(), n.value.cols()) : n.grad);
        }
        return out;
    }

private:
    struct Node {
        OpKind kind = OpKind::Constant;
        std::vector<NodeId> parents;
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        bool requires_grad = false;
        long param_id = -1;
    };

    Var push(OpKind kind, std::vector<NodeId> parents, Tensor value, bool needs, BackwardFn fn) {
        nodes_.push_back(Node{kind, std::move(parents), std::move(value), Tensor(), std::move(fn), needs, -1});
        return {this, nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
    std::map<ParamId, NodeId> param_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace causim::num
