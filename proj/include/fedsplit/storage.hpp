#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsplit/client_store.hpp"
#include "fedsplit/data.hpp"
#include "fedsplit/engine.hpp"
#include "fedsplit/param_set.hpp"

namespace fedsplit {

inline constexpr int kCheckpointFormatVersion = 1;

// Server-side snapshot. Deliberately has no slot for per-user state: the only
// tensors a checkpoint can carry are the shared ones.
struct Checkpoint {
    int format_version = kCheckpointFormatVersion;
    nlohmann::json config;
    int round = 0;
    ParamSet federated;
};

void write_checkpoint(const std::string& path, const nlohmann::json& config, int round,
                      const ParamSet& federated);
Checkpoint read_checkpoint(const std::string& path);

// One JSON file per user that has actually trained, under <dir>/.
void write_client_store(const std::string& dir, const ClientStore& store);
ClientRecord read_client_record(const std::string& path);

void write_metrics_csv(const std::string& path, const MetricsHistory& rows);
MetricsHistory read_metrics_csv(const std::string& path);

void write_dataset_jsonl(const std::string& path, const std::vector<Example>& examples);
void write_clusters_json(const std::string& path, const std::map<std::string, int>& clusters);
std::map<std::string, int> read_clusters_json(const std::string& path);

struct EmbeddingTable {
    std::vector<std::string> user_ids;
    Tensor matrix;  // [users x dim]
};

EmbeddingTable read_embeddings_csv(const std::string& path);

}  // namespace fedsplit
