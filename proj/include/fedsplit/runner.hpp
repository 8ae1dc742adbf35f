#pragma once

#include <string>

#include <json.hpp>

#include "fedsplit/data.hpp"
#include "fedsplit/engine.hpp"

namespace fedsplit {

// Everything one training run produces. `history` already contains the
// round-0 evaluation and the final test-split evaluation.
struct TrainOutcome {
    MetricsHistory history;
    ParamSet params;
    ClientStore store;
    int rounds_completed = 0;
    std::string primary_metric;  // "auc" for a binary head, else "accuracy"
    double final_value = 0.0;    // last eval-split value of the primary metric
    std::size_t skipped_clients = 0;
};

// Runs one mode end to end: evaluate untrained parameters, train, evaluate on
// the held-out test split.
TrainOutcome run_training(const PreparedData& data, const ModelConfig& mcfg,
                          const RunConfig& cfg, const EngineHooks& hooks = {});

// Writes checkpoint.json and metrics.csv under out_dir; personalized modes
// also get embeddings.csv, and personalized federated runs a clients/ tree.
void write_run_outputs(const std::string& out_dir, const TrainOutcome& outcome,
                       const nlohmann::json& config_json, const RunConfig& cfg);

// JSON config parsing with strict key checking: an unrecognized key anywhere
// is an error, so typos cannot silently fall back to defaults.
struct ParsedConfig {
    RunConfig run;
    ModelConfig model;
};

ParsedConfig parse_config_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& run, const ModelConfig& model);

SyntheticSpec parse_synthetic_spec(const nlohmann::json& doc);

}  // namespace fedsplit
