#include "fedsplit/runner.hpp"

#include <filesystem>
#include <set>

#include "fedsplit/metrics.hpp"
#include "fedsplit/storage.hpp"

namespace fedsplit {

namespace {

Tensor table_from_store(const ClientStore& store) {
    const std::size_t dim =
        store.records.empty() ? 0 : store.records[0].embedding.numel();
    Tensor table({store.size(), dim});
    for (std::size_t u = 0; u < store.size(); ++u) {
        for (std::size_t j = 0; j < dim; ++j) {
            table.at2(u, j) = store.records[u].embedding[j];
        }
    }
    return table;
}

void reject_unknown_keys(const nlohmann::json& doc, const std::set<std::string>& known,
                         const char* where) {
    for (const auto& [key, value] : doc.items()) {
        if (!known.count(key)) {
            throw ContractError(std::string(where) + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T field_or(const nlohmann::json& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ContractError(std::string("config: wrong type for '") + key + "'");
    }
}

}  // namespace

TrainOutcome run_training(const PreparedData& data, const ModelConfig& mcfg,
                          const RunConfig& cfg, const EngineHooks& hooks) {
    mcfg.validate();
    cfg.validate();

    TrainOutcome out;
    out.primary_metric = mcfg.binary() ? "auc" : "accuracy";
    const std::string mode = mode_name(cfg.mode);

    if (!hooks.skip_eval) {
        const ParamSet init_params = init_federated_params(mcfg, cfg.seed);
        const Tensor init_table =
            initial_embedding_table(data, mcfg, cfg.seed, hooks.zero_embedding_init);
        auto rows = evaluate_split(data, data.eval, "eval", mcfg, init_params,
                                   init_table, 0, mode);
        out.history.insert(out.history.end(), rows.begin(), rows.end());
    }

    if (mode_is_federated(cfg.mode)) {
        FlResult res = run_fl(data, mcfg, cfg, hooks);
        out.history.insert(out.history.end(), res.history.begin(), res.history.end());
        out.params = std::move(res.state.w_f);
        out.store = std::move(res.store);
        out.rounds_completed = res.state.round;
        out.skipped_clients = res.skipped_clients;
    } else {
        CentralResult res = run_centralized(data, mcfg, cfg, hooks);
        out.history.insert(out.history.end(), res.history.begin(), res.history.end());
        out.params = std::move(res.params);
        const int marker = cfg.rounds_or_epochs > 0 ? cfg.rounds_or_epochs - 1 : -1;
        out.store.records.reserve(static_cast<std::size_t>(data.n_users()));
        for (int u = 0; u < data.n_users(); ++u) {
            Tensor emb({static_cast<std::size_t>(mcfg.embed_dim)});
            for (std::size_t j = 0; j < emb.numel(); ++j) {
                emb[j] = res.embedding_table.at2(static_cast<std::size_t>(u), j);
            }
            out.store.records.push_back(
                {data.user_ids[static_cast<std::size_t>(u)], std::move(emb), marker});
        }
        out.rounds_completed = cfg.rounds_or_epochs;
    }

    if (!hooks.skip_eval) {
        const Tensor table = table_from_store(out.store);
        auto rows = evaluate_split(data, data.test, "test", mcfg, out.params, table,
                                   out.rounds_completed, mode);
        out.history.insert(out.history.end(), rows.begin(), rows.end());
    }

    for (auto it = out.history.rbegin(); it != out.history.rend(); ++it) {
        if (it->split == "eval" && it->metric == out.primary_metric) {
            out.final_value = it->value;
            break;
        }
    }
    return out;
}

void write_run_outputs(const std::string& out_dir, const TrainOutcome& outcome,
                       const nlohmann::json& config_json, const RunConfig& cfg) {
    std::filesystem::create_directories(out_dir);
    write_checkpoint(out_dir + "/checkpoint.json", config_json,
                     outcome.rounds_completed, outcome.params);
    write_metrics_csv(out_dir + "/metrics.csv", outcome.history);
    if (mode_is_personalized(cfg.mode)) {
        export_embeddings(outcome.store, out_dir + "/embeddings.csv");
        if (mode_is_federated(cfg.mode)) {
            write_client_store(out_dir + "/clients", outcome.store);
        }
    }
}

ParsedConfig parse_config_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ContractError("config: expected a JSON object");
    reject_unknown_keys(doc,
                        {"mode", "users_per_round", "local_epochs", "rounds_or_epochs",
                         "lr", "batch_size", "private_update", "seed", "model"},
                        "config");

    ParsedConfig parsed;
    parsed.run.mode = mode_from_string(
        field_or<std::string>(doc, "mode", mode_name(parsed.run.mode)));
    parsed.run.users_per_round =
        field_or<int>(doc, "users_per_round", parsed.run.users_per_round);
    parsed.run.local_epochs = field_or<int>(doc, "local_epochs", parsed.run.local_epochs);
    parsed.run.rounds_or_epochs =
        field_or<int>(doc, "rounds_or_epochs", parsed.run.rounds_or_epochs);
    parsed.run.lr = field_or<double>(doc, "lr", parsed.run.lr);
    parsed.run.batch_size = field_or<int>(doc, "batch_size", parsed.run.batch_size);
    parsed.run.private_update = rule_from_string(
        field_or<std::string>(doc, "private_update", rule_name(parsed.run.private_update)));
    parsed.run.seed = field_or<std::uint64_t>(doc, "seed", parsed.run.seed);

    if (doc.contains("model")) {
        const nlohmann::json& m = doc.at("model");
        if (!m.is_object()) throw ContractError("config: 'model' must be an object");
        reject_unknown_keys(
            m, {"hash_dim", "ngram_n", "embed_dim", "hidden_dims", "num_classes"},
            "config.model");
        parsed.model.hash_dim = field_or<int>(m, "hash_dim", parsed.model.hash_dim);
        parsed.model.ngram_n = field_or<int>(m, "ngram_n", parsed.model.ngram_n);
        parsed.model.embed_dim = field_or<int>(m, "embed_dim", parsed.model.embed_dim);
        parsed.model.hidden_dims =
            field_or<std::vector<int>>(m, "hidden_dims", parsed.model.hidden_dims);
        parsed.model.num_classes =
            field_or<int>(m, "num_classes", parsed.model.num_classes);
    }
    // Whether embeddings exist at all follows from the mode, not a config key.
    parsed.model.personalized = mode_is_personalized(parsed.run.mode);

    parsed.run.validate();
    parsed.model.validate();
    return parsed;
}

nlohmann::json config_to_json(const RunConfig& run, const ModelConfig& model) {
    nlohmann::json doc;
    doc["mode"] = mode_name(run.mode);
    doc["users_per_round"] = run.users_per_round;
    doc["local_epochs"] = run.local_epochs;
    doc["rounds_or_epochs"] = run.rounds_or_epochs;
    doc["lr"] = run.lr;
    doc["batch_size"] = run.batch_size;
    doc["private_update"] = rule_name(run.private_update);
    doc["seed"] = run.seed;
    doc["model"] = {{"hash_dim", model.hash_dim},
                    {"ngram_n", model.ngram_n},
                    {"embed_dim", model.embed_dim},
                    {"hidden_dims", model.hidden_dims},
                    {"num_classes", model.num_classes}};
    return doc;
}

SyntheticSpec parse_synthetic_spec(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ContractError("spec: expected a JSON object");
    reject_unknown_keys(doc,
                        {"n_users", "n_clusters", "examples_per_user", "n_topics",
                         "label_noise", "topic_skew", "seed"},
                        "spec");
    SyntheticSpec spec;
    spec.n_users = field_or<int>(doc, "n_users", spec.n_users);
    spec.n_clusters = field_or<int>(doc, "n_clusters", spec.n_clusters);
    spec.examples_per_user =
        field_or<int>(doc, "examples_per_user", spec.examples_per_user);
    spec.n_topics = field_or<int>(doc, "n_topics", spec.n_topics);
    spec.label_noise = field_or<double>(doc, "label_noise", spec.label_noise);
    spec.topic_skew = field_or<double>(doc, "topic_skew", spec.topic_skew);
    spec.seed = field_or<std::uint64_t>(doc, "seed", spec.seed);
    spec.validate();
    return spec;
}

}  // namespace fedsplit
