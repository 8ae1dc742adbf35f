#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedsplit/client_store.hpp"
#include "fedsplit/data.hpp"
#include "fedsplit/model.hpp"
#include "fedsplit/param_set.hpp"

namespace fedsplit {

// The four training configurations: centralized training with or without
// user embeddings, and federated training with or without user embeddings.
enum class Mode { global_server, personalized_server, global_fl, personalized_fl };

Mode mode_from_string(const std::string& name);
std::string mode_name(Mode mode);
bool mode_is_federated(Mode mode);
bool mode_is_personalized(Mode mode);

// How a client folds its locally trained embedding back into its stored copy.
// retain keeps the trained value; scaled applies the same example-count weight
// the server-side average would, which makes split training reproduce a full
// federated average exactly.
enum class PrivateRule { scaled, retain };

PrivateRule rule_from_string(const std::string& name);
std::string rule_name(PrivateRule rule);

struct RunConfig {
    Mode mode = Mode::personalized_fl;
    int users_per_round = 10;
    int local_epochs = 1;
    int rounds_or_epochs = 0;     // rounds for federated modes, epochs otherwise
    double lr = 0.1;
    int batch_size = 32;
    PrivateRule private_update = PrivateRule::retain;
    std::uint64_t seed = 0;

    void validate() const;
};

// What one client sends back after local training. Private state never rides
// along to the aggregator; delta_private exists so the client itself can fold
// the update into its own store.
struct ClientUpdate {
    int ordinal = -1;
    std::string client_id;
    ParamSet delta_federated;
    Tensor delta_private;
    std::size_t num_examples = 0;
};

struct GlobalState {
    ParamSet w_f;
    int round = 0;
};

struct MetricsRow {
    int round = 0;             // rounds completed (or epochs for centralized)
    std::string mode;
    std::string split;
    std::string metric;
    double value = 0.0;
};

using MetricsHistory = std::vector<MetricsRow>;

// Test seams. Defaults leave production behavior untouched.
struct EngineHooks {
    double private_lr_scale = 1.0;   // 0 freezes embeddings mid-flight
    bool zero_embedding_init = false;
    bool skip_eval = false;
    int threads = 1;
    std::function<void(const GlobalState&, const ClientStore&)> on_round_end;
};

// One client's local pass: copy the shared parameters, run minibatch SGD over
// its own data, and report the deltas plus its example count.
ClientUpdate local_train(const ParamSet& w_f, const Tensor& w_p_i,
                         const std::vector<FeaturizedExample>& data,
                         const ModelConfig& mcfg, const RunConfig& cfg, int round,
                         int ordinal, const std::string& client_id,
                         double private_lr_scale = 1.0);

// Example-count weighted delta averaging. Updates are summed in ascending
// client order no matter how they arrive, so results do not depend on
// scheduling.
ParamSet aggregate_federated(const ParamSet& w_f, const std::vector<ClientUpdate>& updates);

// Client-side fold of a private delta. c_i and c_total are the client's own
// example count and the round's total.
Tensor update_private(const Tensor& w_p_i, const Tensor& delta, std::size_t c_i,
                      std::size_t c_total, PrivateRule rule);

// k distinct user ordinals, uniform without replacement, sorted ascending.
// Deterministic in (seed, round).
std::vector<int> sample_clients(int n_users, int k, int round, std::uint64_t seed);

// The data ordering local_train uses for one client epoch. Part of the
// engine's contract so an independent reimplementation can replay the exact
// same schedule.
std::vector<std::size_t> local_shuffle_order(std::size_t n, std::uint64_t seed, int round,
                                             int ordinal, int epoch);

struct FlResult {
    GlobalState state;
    ClientStore store;
    MetricsHistory history;
    std::size_t skipped_clients = 0;
};

// Round loop: sample clients, train each locally, average the federated
// deltas, let each participant fold its private delta. Evaluates on the eval
// split after every round.
FlResult run_fl(const PreparedData& data, const ModelConfig& mcfg, const RunConfig& cfg,
                const EngineHooks& hooks = {});

struct CentralResult {
    ParamSet params;
    Tensor embedding_table;   // [n_users x embed_dim]; all zero when not personalized
    MetricsHistory history;
};

// Pooled minibatch SGD over every user's train data, embeddings trained
// jointly (or frozen at zero). Evaluates after every epoch.
CentralResult run_centralized(const PreparedData& data, const ModelConfig& mcfg,
                              const RunConfig& cfg, const EngineHooks& hooks = {});

// Pooled metrics over one split for the current parameters. `table` must have
// one embedding row per user ordinal. Emits the task metric (auc for a binary
// head, accuracy otherwise) plus the mean loss.
std::vector<MetricsRow> evaluate_split(const PreparedData& data,
                                       const std::vector<std::vector<FeaturizedExample>>& split,
                                       const std::string& split_name,
                                       const ModelConfig& mcfg, const ParamSet& params,
                                       const Tensor& table, int round,
                                       const std::string& mode);

// Builds the [n_users x embed_dim] table of initial embeddings, row per
// ordinal. Zeroed when the model is not personalized (or when forced).
Tensor initial_embedding_table(const PreparedData& data, const ModelConfig& mcfg,
                               std::uint64_t seed, bool force_zero = false);

}  // namespace fedsplit
