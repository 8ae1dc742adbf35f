#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsplit/client_store.hpp"
#include "fedsplit/tensor.hpp"

namespace fedsplit {

struct EvalResult {
    std::string metric;     // "auc", "accuracy" or "loss"
    double value = 0.0;     // auc and accuracy always land in [0, 1]
    std::string split;
    std::size_t n_examples = 0;
};

// Probability that a uniformly random positive outranks a uniformly random
// negative, ties counting one half (Mann-Whitney normalization, computed via
// average ranks). Requires at least one example of each class.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Same statistic summed pairwise over every positive/negative pair. Slow, but
// a useful independent check: the two must agree exactly on small inputs.
double auc_all_pairs(const std::vector<double>& scores, const std::vector<int>& labels);

// Fraction of exact matches.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// CSV "user_id,e0,...,e{D-1}", one row per user, sorted by user id.
void export_embeddings(const ClientStore& store, const std::string& path);

// Projects centered rows of a [U x D] matrix onto the top principal axes.
// The sign of each axis is fixed by making its largest-magnitude component
// positive, so output is deterministic.
Tensor pca_project(const Tensor& embeddings, int out_dim);

// Best-of-20-restarts seeded k-means assignment, k clusters over the rows.
std::vector<int> kmeans_assign(const Tensor& points, int k, std::uint64_t seed);

// Adjusted Rand Index between two labelings of the same items. 1 = identical
// partitions, about 0 = chance-level agreement.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Clusters the embedding rows with seeded k-means and scores the assignment
// against the ground-truth clusters by ARI. All-identical rows are degenerate
// and score 0 (with a warning on stderr).
double cluster_agreement(const Tensor& embeddings, const std::vector<int>& true_clusters,
                         int k, std::uint64_t seed);

}  // namespace fedsplit
