#include "fedsplit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fedsplit/rng.hpp"
#include "fedsplit/text_features.hpp"

namespace fedsplit {

namespace {

constexpr std::uint64_t kClusterSalt = 0x636c7573746572ULL;  // "cluster"
constexpr std::uint64_t kTopicSalt = 0x746f706963ULL;        // "topic"
constexpr std::uint64_t kNoiseSalt = 0x6e6f697365ULL;        // "noise"
constexpr std::uint64_t kSkewSalt = 0x736b6577ULL;           // "skew"

std::string format_user_id(int ordinal, int n_users) {
    int width = 3;
    for (int v = n_users - 1; v >= 1000; v /= 10) ++width;
    std::string digits = std::to_string(ordinal);
    return "u" + std::string(width - digits.size(), '0') + digits;
}

std::string topic_phrase(int topic) {
    const std::string t = std::to_string(topic);
    return "topic" + t + " w" + t + "a w" + t + "b";
}

// Per-user Zipf weights over topics, with a user-specific topic ranking.
std::vector<double> skewed_topic_weights(Rng& rng, int n_topics, double exponent) {
    std::vector<int> order(n_topics);
    for (int t = 0; t < n_topics; ++t) order[t] = t;
    rng.shuffle(order);
    std::vector<double> w(n_topics);
    for (int rank = 0; rank < n_topics; ++rank) {
        w[order[rank]] = 1.0 / std::pow(static_cast<double>(rank + 1), exponent);
    }
    double sum = 0.0;
    for (double x : w) sum += x;
    for (double& x : w) x /= sum;
    return w;
}

int sample_weighted(Rng& rng, const std::vector<double>& weights) {
    double u = rng.next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (n_users < 1) throw ContractError("SyntheticSpec: n_users must be positive");
    if (n_clusters < 2) throw ContractError("SyntheticSpec: n_clusters must be >= 2");
    if (n_topics < n_clusters) {
        throw ContractError("SyntheticSpec: n_topics must be >= n_clusters");
    }
    if (examples_per_user < 10) {
        throw ContractError("SyntheticSpec: examples_per_user must be >= 10");
    }
    if (!(label_noise >= 0.0 && label_noise < 1.0)) {
        throw ContractError("SyntheticSpec: label_noise must be in [0, 1)");
    }
    if (topic_skew < 0.0) throw ContractError("SyntheticSpec: topic_skew must be >= 0");
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticDataset out;
    out.examples.reserve(static_cast<std::size_t>(spec.n_users) *
                         static_cast<std::size_t>(spec.examples_per_user));

    for (int u = 0; u < spec.n_users; ++u) {
        const std::string user_id = format_user_id(u, spec.n_users);
        Rng cluster_rng(derive_seed(spec.seed, kClusterSalt, u));
        const int cluster = static_cast<int>(cluster_rng.below(spec.n_clusters));
        out.user_clusters[user_id] = cluster;

        Rng topic_rng(derive_seed(spec.seed, kTopicSalt, u));
        Rng noise_rng(derive_seed(spec.seed, kNoiseSalt, u));
        std::vector<double> weights;
        if (spec.topic_skew > 0.0) {
            Rng skew_rng(derive_seed(spec.seed, kSkewSalt, u));
            weights = skewed_topic_weights(skew_rng, spec.n_topics, spec.topic_skew);
        }

        for (int k = 0; k < spec.examples_per_user; ++k) {
            const int topic = weights.empty()
                                  ? static_cast<int>(topic_rng.below(spec.n_topics))
                                  : sample_weighted(topic_rng, weights);
            int label = (topic + cluster) % spec.n_clusters;
            if (noise_rng.next_double() < spec.label_noise) {
                // Flip to a uniformly chosen different label.
                const int shift = 1 + static_cast<int>(noise_rng.below(spec.n_clusters - 1));
                label = (label + shift) % spec.n_clusters;
            }
            out.examples.push_back({user_id, topic_phrase(topic), label});
        }
    }
    return out;
}

std::size_t DatasetSplit::total(const std::vector<Example> UserSplit::*part) const {
    std::size_t n = 0;
    for (const auto& [id, split] : users) n += (split.*part).size();
    return n;
}

DatasetSplit split_dataset(const std::vector<Example>& examples) {
    std::map<std::string, std::vector<Example>> by_user;
    for (const Example& ex : examples) by_user[ex.user_id].push_back(ex);

    DatasetSplit out;
    for (auto& [id, list] : by_user) {
        const std::size_t n = list.size();
        if (n < 10) {
            throw ContractError("split_dataset: user '" + id + "' has only " +
                                std::to_string(n) + " examples (minimum 10)");
        }
        const std::size_t n_eval = n / 10;
        const std::size_t n_test = n / 10;
        const std::size_t n_train = n - n_eval - n_test;
        UserSplit split;
        split.train.assign(list.begin(), list.begin() + n_train);
        split.eval.assign(list.begin() + n_train, list.begin() + n_train + n_eval);
        split.test.assign(list.begin() + n_train + n_eval, list.end());
        out.users.emplace(id, std::move(split));
    }
    return out;
}

std::vector<Example> load_jsonl(const std::string& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw IoError("load_jsonl: cannot open '" + path + "'");

    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw IoError("load_jsonl: malformed JSON at " + path + ":" +
                          std::to_string(line_no));
        }
        if (!j.contains("user_id") || !j.contains("text") || !j.contains("label")) {
            throw IoError("load_jsonl: missing user_id/text/label at " + path + ":" +
                          std::to_string(line_no));
        }
        if (!j["user_id"].is_string() || !j["text"].is_string() ||
            !j["label"].is_number_integer()) {
            throw IoError("load_jsonl: wrong field types at " + path + ":" +
                          std::to_string(line_no));
        }
        Example ex{j["user_id"].get<std::string>(), j["text"].get<std::string>(),
                   j["label"].get<int>()};
        if (ex.label < 0 || ex.label >= num_classes) {
            throw IoError("load_jsonl: label " + std::to_string(ex.label) +
                          " out of range [0, " + std::to_string(num_classes) + ") at " +
                          path + ":" + std::to_string(line_no));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

DatasetStats dataset_stats(const std::vector<Example>& examples) {
    DatasetStats stats;
    std::map<std::string, std::size_t> counts;
    for (const Example& ex : examples) ++counts[ex.user_id];
    stats.n_users = counts.size();
    stats.n_samples = examples.size();
    stats.samples_per_user =
        counts.empty() ? 0.0
                       : static_cast<double>(stats.n_samples) /
                             static_cast<double>(stats.n_users);
    return stats;
}

std::size_t PreparedData::total_train() const {
    std::size_t n = 0;
    for (const auto& list : train) n += list.size();
    return n;
}

PreparedData prepare_data(const DatasetSplit& split, const ModelConfig& cfg) {
    PreparedData out;
    out.user_ids.reserve(split.users.size());
    for (const auto& [id, parts] : split.users) out.user_ids.push_back(id);

    auto featurize_part = [&](const std::vector<Example>& part) {
        std::vector<FeaturizedExample> fx;
        fx.reserve(part.size());
        for (const Example& ex : part) {
            if (ex.label < 0 || ex.label >= std::max(cfg.num_classes, 2)) {
                throw ContractError("prepare_data: label " + std::to_string(ex.label) +
                                    " invalid for model with " +
                                    std::to_string(cfg.num_classes) + " classes");
            }
            fx.push_back({featurize_text(ex.text, cfg.ngram_n, cfg.hash_dim), ex.label});
        }
        return fx;
    };

    for (const auto& [id, parts] : split.users) {
        out.train.push_back(featurize_part(parts.train));
        out.eval.push_back(featurize_part(parts.eval));
        out.test.push_back(featurize_part(parts.test));
    }
    return out;
}

}  // namespace fedsplit
