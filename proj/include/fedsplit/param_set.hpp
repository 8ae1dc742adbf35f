#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fedsplit/tensor.hpp"

namespace fedsplit {

// Named, ordered collection of tensors with a fixed layout. The layout
// (names, shapes, order) is the identity of a parameter set: clients and the
// server must agree on it exactly for aggregation to be meaningful.
class ParamSet {
public:
    void add(std::string name, Tensor t) {
        if (index_.count(name)) {
            throw ContractError("ParamSet: duplicate parameter name '" + name + "'");
        }
        index_.emplace(name, entries_.size());
        entries_.push_back({std::move(name), std::move(t)});
    }

    bool contains(std::string_view name) const {
        return index_.count(std::string(name)) > 0;
    }

    Tensor& at(std::string_view name) {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) {
            throw ContractError("ParamSet: no parameter named '" + std::string(name) + "'");
        }
        return entries_[it->second].tensor;
    }

    const Tensor& at(std::string_view name) const {
        return const_cast<ParamSet*>(this)->at(name);
    }

    std::size_t size() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_[i].name; }
    Tensor& tensor(std::size_t i) { return entries_[i].tensor; }
    const Tensor& tensor(std::size_t i) const { return entries_[i].tensor; }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.tensor.numel();
        return n;
    }

    bool same_layout(const ParamSet& other) const {
        if (entries_.size() != other.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != other.entries_[i].name) return false;
            if (entries_[i].tensor.shape() != other.entries_[i].tensor.shape()) return false;
        }
        return true;
    }

    ParamSet zeros_like() const {
        ParamSet z;
        for (const auto& e : entries_) {
            z.add(e.name, Tensor::zeros(e.tensor.shape()));
        }
        return z;
    }

    bool all_finite() const {
        for (const auto& e : entries_) {
            if (!e.tensor.all_finite()) return false;
        }
        return true;
    }

    double max_abs_diff(const ParamSet& other) const {
        if (!same_layout(other)) throw ContractError("ParamSet::max_abs_diff: layout mismatch");
        double m = 0.0;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            m = std::max(m, entries_[i].tensor.max_abs_diff(other.entries_[i].tensor));
        }
        return m;
    }

    bool bitwise_equal(const ParamSet& other) const {
        if (!same_layout(other)) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (!entries_[i].tensor.bitwise_equal(other.entries_[i].tensor)) return false;
        }
        return true;
    }

private:
    struct Entry {
        std::string name;
        Tensor tensor;
    };
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace fedsplit
