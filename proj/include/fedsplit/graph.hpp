#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedsplit/tensor.hpp"

namespace fedsplit {

struct NodeId {
    std::uint32_t index = 0;
};

// Reverse-mode differentiation tape over dense tensors. Operations compute
// their value eagerly when recorded; backward() replays the tape in reverse.
//
// Determinism contract: node evaluation order is creation order, and gradient
// accumulation order is fixed by the tape, so identical graphs and inputs
// give bitwise-identical results.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Non-trainable leaf.
    NodeId input(Tensor value);

    // Named trainable leaf. Gradients are retrievable by name after backward().
    NodeId parameter(const std::string& name, Tensor value);

    // y = W.x + b with W [m x n], x [n], b [m].
    NodeId affine(NodeId x, NodeId W, NodeId b);

    // Elementwise max(0, x). Gradient is 0 at x == 0.
    NodeId relu(NodeId x);

    // Concatenation of two rank-1 tensors.
    NodeId concat(NodeId a, NodeId b);

    // Row selection from a [U x D] table. The backward pass accumulates only
    // into the selected row; every other row receives exactly zero.
    NodeId embedding_lookup(NodeId table, std::size_t row);

    // Numerically stable binary cross-entropy on a single logit.
    NodeId bce_with_logits(NodeId logit, int label);

    // -log softmax(logits)[label], computed with max subtraction.
    NodeId cross_entropy(NodeId logits, int label);

    // Arithmetic mean of scalar nodes, summed in argument order.
    NodeId mean_of(const std::vector<NodeId>& scalars);

    // Reverse-mode sweep from a scalar root. Visits every node exactly once.
    // Leaves not on a path to the root keep zero gradients.
    void backward(NodeId root);

    const Tensor& value(NodeId id) const { return node(id).value; }
    const Tensor& grad(NodeId id) const;
    const Tensor& grad(const std::string& parameter_name) const;
    NodeId parameter_node(const std::string& name) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Graph&)> backprop;  // empty for leaves
    };

    Node& node(NodeId id) { return nodes_[id.index]; }
    const Node& node(NodeId id) const { return nodes_[id.index]; }
    NodeId push(Tensor value, std::function<void(Graph&)> backprop);

    std::deque<Node> nodes_;
    std::unordered_map<std::string, std::uint32_t> parameters_;
    bool backward_done_ = false;
};

// Compares backward() gradients against central finite differences
// (f(w+eps) - f(w-eps)) / (2 eps) for every coordinate of every parameter,
// and returns the largest relative error with denominator
// max(|analytic|, |numeric|, 1e-4). The floor turns the comparison absolute
// for near-zero gradients, where finite differences bottom out on rounding
// noise long before any relative tolerance could be certified.
//
// `build` must construct the forward graph from the given parameters and
// return the scalar loss node; it is invoked repeatedly on perturbed copies.
class ParamSet;
double grad_check(const std::function<NodeId(Graph&, const ParamSet&)>& build,
                  const ParamSet& params, double eps);

}  // namespace fedsplit
