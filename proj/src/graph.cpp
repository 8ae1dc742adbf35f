#include "fedsplit/graph.hpp"

#include <cmath>

#include "fedsplit/param_set.hpp"

namespace fedsplit {

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

NodeId Graph::push(Tensor value, std::function<void(Graph&)> backprop) {
    nodes_.push_back({std::move(value), Tensor(), std::move(backprop)});
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::input(Tensor value) { return push(std::move(value), {}); }

NodeId Graph::parameter(const std::string& name, Tensor value) {
    if (parameters_.count(name)) {
        throw ContractError("Graph::parameter: duplicate leaf name '" + name + "'");
    }
    NodeId id = push(std::move(value), {});
    parameters_.emplace(name, id.index);
    return id;
}

NodeId Graph::affine(NodeId x, NodeId W, NodeId b) {
    const Tensor& xv = node(x).value;
    const Tensor& Wv = node(W).value;
    const Tensor& bv = node(b).value;
    if (Wv.rank() != 2 || xv.rank() != 1 || bv.rank() != 1 ||
        Wv.cols() != xv.numel() || Wv.rows() != bv.numel()) {
        throw DimensionError("affine: W " + Tensor::shape_string(Wv.shape()) + ", x " +
                             Tensor::shape_string(xv.shape()) + ", b " +
                             Tensor::shape_string(bv.shape()) + " do not conform");
    }
    const std::size_t m = Wv.rows();
    const std::size_t n = Wv.cols();
    Tensor y({m});
    for (std::size_t r = 0; r < m; ++r) {
        double s = bv[r];
        const double* wr = Wv.data() + r * n;
        const double* xd = xv.data();
        for (std::size_t k = 0; k < n; ++k) s += wr[k] * xd[k];
        y[r] = s;
    }
    NodeId out = push(std::move(y), {});
    node(out).backprop = [x, W, b, out, m, n](Graph& g) {
        const Tensor& gy = g.node(out).grad;
        const Tensor& Wv = g.node(W).value;
        const Tensor& xv = g.node(x).value;
        Tensor& gx = g.node(x).grad;
        Tensor& gW = g.node(W).grad;
        Tensor& gb = g.node(b).grad;
        for (std::size_t r = 0; r < m; ++r) {
            const double gr = gy[r];
            const double* wr = Wv.data() + r * n;
            double* gwr = gW.data() + r * n;
            const double* xd = xv.data();
            double* gxd = gx.data();
            for (std::size_t k = 0; k < n; ++k) {
                gxd[k] += wr[k] * gr;
                gwr[k] += gr * xd[k];
            }
            gb[r] += gr;
        }
    };
    return out;
}

NodeId Graph::relu(NodeId x) {
    const Tensor& xv = node(x).value;
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    NodeId out = push(std::move(y), {});
    node(out).backprop = [x, out](Graph& g) {
        const Tensor& xv = g.node(x).value;
        const Tensor& gy = g.node(out).grad;
        Tensor& gx = g.node(x).grad;
        for (std::size_t i = 0; i < xv.numel(); ++i) {
            if (xv[i] > 0.0) gx[i] += gy[i];
        }
    };
    return out;
}

NodeId Graph::concat(NodeId a, NodeId b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    if (av.rank() != 1 || bv.rank() != 1) {
        throw DimensionError("concat: expected rank-1 operands, got " +
                             Tensor::shape_string(av.shape()) + " and " +
                             Tensor::shape_string(bv.shape()));
    }
    Tensor y({av.numel() + bv.numel()});
    for (std::size_t i = 0; i < av.numel(); ++i) y[i] = av[i];
    for (std::size_t i = 0; i < bv.numel(); ++i) y[av.numel() + i] = bv[i];
    NodeId out = push(std::move(y), {});
    node(out).backprop = [a, b, out](Graph& g) {
        const Tensor& gy = g.node(out).grad;
        Tensor& ga = g.node(a).grad;
        Tensor& gb = g.node(b).grad;
        const std::size_t na = ga.numel();
        for (std::size_t i = 0; i < na; ++i) ga[i] += gy[i];
        for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += gy[na + i];
    };
    return out;
}

NodeId Graph::embedding_lookup(NodeId table, std::size_t row) {
    const Tensor& tv = node(table).value;
    if (tv.rank() != 2) {
        throw DimensionError("embedding_lookup: table must be rank 2, got " +
                             Tensor::shape_string(tv.shape()));
    }
    if (row >= tv.rows()) {
        throw BoundsError("embedding_lookup: row " + std::to_string(row) +
                          " out of range for table with " + std::to_string(tv.rows()) +
                          " rows");
    }
    const std::size_t d = tv.cols();
    Tensor y({d});
    for (std::size_t i = 0; i < d; ++i) y[i] = tv.at2(row, i);
    NodeId out = push(std::move(y), {});
    node(out).backprop = [table, row, d, out](Graph& g) {
        const Tensor& gy = g.node(out).grad;
        Tensor& gt = g.node(table).grad;
        for (std::size_t i = 0; i < d; ++i) gt.at2(row, i) += gy[i];
    };
    return out;
}

NodeId Graph::bce_with_logits(NodeId logit, int label) {
    const Tensor& zv = node(logit).value;
    if (zv.numel() != 1) {
        throw DimensionError("bce_with_logits: logit must be a single value, got " +
                             Tensor::shape_string(zv.shape()));
    }
    if (label != 0 && label != 1) {
        throw ContractError("bce_with_logits: label must be 0 or 1, got " +
                            std::to_string(label));
    }
    const double z = zv[0];
    const double y = static_cast<double>(label);
    // max(z,0) - z*y + log(1 + exp(-|z|))
    const double loss = (z > 0.0 ? z : 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    NodeId out = push(Tensor::scalar(loss), {});
    node(out).backprop = [logit, out, z, y](Graph& g) {
        const double gout = g.node(out).grad[0];
        g.node(logit).grad[0] += (stable_sigmoid(z) - y) * gout;
    };
    return out;
}

NodeId Graph::cross_entropy(NodeId logits, int label) {
    const Tensor& lv = node(logits).value;
    if (lv.rank() != 1) {
        throw DimensionError("cross_entropy: logits must be rank 1, got " +
                             Tensor::shape_string(lv.shape()));
    }
    const std::size_t c = lv.numel();
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
        throw BoundsError("cross_entropy: class " + std::to_string(label) +
                          " out of range for " + std::to_string(c) + " classes");
    }
    double mx = lv[0];
    for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, lv[i]);
    double sum = 0.0;
    std::vector<double> probs(c);
    for (std::size_t i = 0; i < c; ++i) {
        probs[i] = std::exp(lv[i] - mx);
        sum += probs[i];
    }
    for (std::size_t i = 0; i < c; ++i) probs[i] /= sum;
    const double loss = std::log(sum) + mx - lv[static_cast<std::size_t>(label)];
    NodeId out = push(Tensor::scalar(loss), {});
    node(out).backprop = [logits, out, probs = std::move(probs), label](Graph& g) {
        const double gout = g.node(out).grad[0];
        Tensor& gl = g.node(logits).grad;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const double onehot = (static_cast<std::size_t>(label) == i) ? 1.0 : 0.0;
            gl[i] += (probs[i] - onehot) * gout;
        }
    };
    return out;
}

NodeId Graph::mean_of(const std::vector<NodeId>& scalars) {
    if (scalars.empty()) throw ContractError("mean_of: empty input list");
    for (NodeId id : scalars) {
        if (node(id).value.numel() != 1) {
            throw ContractError("mean_of: all inputs must be scalars");
        }
    }
    double sum = 0.0;
    for (NodeId id : scalars) sum += node(id).value[0];
    const double inv = 1.0 / static_cast<double>(scalars.size());
    NodeId out = push(Tensor::scalar(sum * inv), {});
    node(out).backprop = [inputs = scalars, inv, out](Graph& g) {
        const double gout = g.node(out).grad[0];
        for (NodeId id : inputs) g.node(id).grad[0] += gout * inv;
    };
    return out;
}

void Graph::backward(NodeId root) {
    if (node(root).value.numel() != 1) {
        throw ContractError("backward: root must be a scalar node");
    }
    // (Re)initialize every gradient buffer, then sweep the tape once in
    // reverse creation order. Creation order is topological by construction.
    for (auto& n : nodes_) {
        n.grad = Tensor::zeros(n.value.shape());
    }
    node(root).grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (i > root.index) continue;  // nodes after the root cannot influence it
        if (nodes_[i].backprop) nodes_[i].backprop(*this);
    }
    backward_done_ = true;
}

const Tensor& Graph::grad(NodeId id) const {
    if (!backward_done_) throw ContractError("grad: backward() has not run");
    return node(id).grad;
}

const Tensor& Graph::grad(const std::string& parameter_name) const {
    return grad(parameter_node(parameter_name));
}

NodeId Graph::parameter_node(const std::string& name) const {
    auto it = parameters_.find(name);
    if (it == parameters_.end()) {
        throw ContractError("Graph: no parameter leaf named '" + name + "'");
    }
    return NodeId{it->second};
}

double grad_check(const std::function<NodeId(Graph&, const ParamSet&)>& build,
                  const ParamSet& params, double eps) {
    if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");

    Graph g;
    NodeId root = build(g, params);
    g.backward(root);

    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        analytic.push_back(g.grad(params.name(p)));
    }

    auto eval = [&](const ParamSet& ps) {
        Graph h;
        NodeId r = build(h, ps);
        return h.value(r)[0];
    };

    double max_rel = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t k = 0; k < params.tensor(p).numel(); ++k) {
            ParamSet plus = params;
            plus.tensor(p)[k] += eps;
            ParamSet minus = params;
            minus.tensor(p)[k] -= eps;
            const double numeric = (eval(plus) - eval(minus)) / (2.0 * eps);
            const double a = analytic[p][k];
            // The floor keeps the comparison meaningful for microgradients:
            // central differences on a loss of order one carry ~1e-10 of
            // rounding noise at eps=1e-6, so coordinates below the floor are
            // held to an absolute tolerance instead of a relative one. A real
            // backward-pass bug perturbs gradients by many orders more.
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace fedsplit
