#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedsplit/model.hpp"
#include "fedsplit/tensor.hpp"

namespace fedsplit {

struct Example {
    std::string user_id;
    std::string text;
    int label = 0;
};

// Synthetic non-IID benchmark where personalization provably matters: each
// user belongs to a latent cluster, each example has a topic visible in the
// text, and the label is (topic + cluster) mod n_clusters. Text alone says
// nothing about the label; text plus user identity determines it up to the
// label noise.
struct SyntheticSpec {
    int n_users = 100;
    int n_clusters = 4;           // also the number of classes
    int examples_per_user = 60;
    int n_topics = 16;
    double label_noise = 0.05;
    double topic_skew = 0.0;      // >0 enables per-user Zipf topic skew
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticDataset {
    std::vector<Example> examples;
    std::map<std::string, int> user_clusters;  // ground truth, never used in training
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Per-user train/eval/test lists split 0.8/0.1/0.1 by count in generation
// order (floor rounding for eval and test, remainder to train).
struct UserSplit {
    std::vector<Example> train;
    std::vector<Example> eval;
    std::vector<Example> test;
};

struct DatasetSplit {
    std::map<std::string, UserSplit> users;

    std::size_t total(const std::vector<Example> UserSplit::*part) const;
};

// Requires every user to have at least 10 examples.
DatasetSplit split_dataset(const std::vector<Example>& examples);

// One JSON object per line: {"user_id": ..., "text": ..., "label": ...}.
// Labels are validated against [0, num_classes).
std::vector<Example> load_jsonl(const std::string& path, int num_classes);

struct DatasetStats {
    std::size_t n_users = 0;
    std::size_t n_samples = 0;
    double samples_per_user = 0.0;
};

DatasetStats dataset_stats(const std::vector<Example>& examples);

// Featurized, ordinal-indexed view of a DatasetSplit as the training engine
// consumes it. User ordinals follow the sorted order of user ids.
struct PreparedData {
    std::vector<std::string> user_ids;                       // ordinal -> id
    std::vector<std::vector<FeaturizedExample>> train;       // per ordinal
    std::vector<std::vector<FeaturizedExample>> eval;
    std::vector<std::vector<FeaturizedExample>> test;

    int n_users() const { return static_cast<int>(user_ids.size()); }
    std::size_t total_train() const;
};

PreparedData prepare_data(const DatasetSplit& split, const ModelConfig& cfg);

}  // namespace fedsplit
