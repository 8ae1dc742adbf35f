#include "fedsplit/engine.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <mutex>
#include <numeric>
#include <thread>

#include "fedsplit/metrics.hpp"
#include "fedsplit/rng.hpp"

namespace fedsplit {

namespace {

constexpr std::uint64_t kSampleSalt = 0x73616d706c65ULL;    // "sample"
constexpr std::uint64_t kLocalSalt = 0x6c6f63616cULL;       // "local"
constexpr std::uint64_t kCentralSalt = 0x706f6f6c6564ULL;   // "pooled"

// u[k] -= lr * g[k] for every registered leaf. A zero gradient must leave the
// stored bits alone, which plain subtraction guarantees.
void sgd_step(ParamSet& params, const Graph& g, double lr) {
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = params.tensor(p);
        const Tensor& grad = g.grad(params.name(p));
        for (std::size_t k = 0; k < t.numel(); ++k) t[k] -= lr * grad[k];
    }
}

ParamSet param_diff(const ParamSet& trained, const ParamSet& base) {
    ParamSet delta = base.zeros_like();
    for (std::size_t p = 0; p < delta.size(); ++p) {
        Tensor& d = delta.tensor(p);
        const Tensor& u = trained.tensor(p);
        const Tensor& w = base.tensor(p);
        for (std::size_t k = 0; k < d.numel(); ++k) d[k] = u[k] - w[k];
    }
    return delta;
}

Tensor tensor_diff(const Tensor& trained, const Tensor& base) {
    Tensor d = Tensor::zeros(base.shape());
    for (std::size_t k = 0; k < d.numel(); ++k) d[k] = trained[k] - base[k];
    return d;
}

Tensor store_to_table(const ClientStore& store) {
    const std::size_t dim = store.records.empty() ? 0 : store.records[0].embedding.numel();
    Tensor table({store.size(), dim});
    for (std::size_t u = 0; u < store.size(); ++u) {
        for (std::size_t j = 0; j < dim; ++j) {
            table.at2(u, j) = store.records[u].embedding[j];
        }
    }
    return table;
}

}  // namespace

Mode mode_from_string(const std::string& name) {
    if (name == "global_server") return Mode::global_server;
    if (name == "personalized_server") return Mode::personalized_server;
    if (name == "global_fl") return Mode::global_fl;
    if (name == "personalized_fl") return Mode::personalized_fl;
    throw ContractError("unknown mode '" + name + "'");
}

std::string mode_name(Mode mode) {
    switch (mode) {
        case Mode::global_server: return "global_server";
        case Mode::personalized_server: return "personalized_server";
        case Mode::global_fl: return "global_fl";
        case Mode::personalized_fl: return "personalized_fl";
    }
    throw ContractError("unknown mode value");
}

bool mode_is_federated(Mode mode) {
    return mode == Mode::global_fl || mode == Mode::personalized_fl;
}

bool mode_is_personalized(Mode mode) {
    return mode == Mode::personalized_server || mode == Mode::personalized_fl;
}

PrivateRule rule_from_string(const std::string& name) {
    if (name == "scaled") return PrivateRule::scaled;
    if (name == "retain") return PrivateRule::retain;
    throw ContractError("unknown private update rule '" + name + "'");
}

std::string rule_name(PrivateRule rule) {
    return rule == PrivateRule::scaled ? "scaled" : "retain";
}

void RunConfig::validate() const {
    if (users_per_round < 1) throw ContractError("RunConfig: users_per_round must be >= 1");
    if (local_epochs < 1) throw ContractError("RunConfig: local_epochs must be >= 1");
    if (rounds_or_epochs < 0) throw ContractError("RunConfig: rounds_or_epochs must be >= 0");
    if (!(lr > 0.0)) throw ContractError("RunConfig: lr must be positive");
    if (batch_size < 1) throw ContractError("RunConfig: batch_size must be >= 1");
}

ClientUpdate local_train(const ParamSet& w_f, const Tensor& w_p_i,
                         const std::vector<FeaturizedExample>& data,
                         const ModelConfig& mcfg, const RunConfig& cfg, int round,
                         int ordinal, const std::string& client_id,
                         double private_lr_scale) {
    if (data.empty()) {
        throw ContractError("local_train: client '" + client_id + "' has no data");
    }
    ParamSet u = w_f;
    Tensor e = w_p_i;

    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        const std::vector<std::size_t> order =
            local_shuffle_order(data.size(), cfg.seed, round, ordinal, epoch);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const FeaturizedExample*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);

            Graph g;
            NodeId loss = build_local_loss(g, mcfg, u, e, batch);
            g.backward(loss);
            sgd_step(u, g, cfg.lr);
            if (mcfg.personalized) {
                const Tensor& ge = g.grad("user_embedding");
                const double step = cfg.lr * private_lr_scale;
                for (std::size_t k = 0; k < e.numel(); ++k) e[k] -= step * ge[k];
            }
        }
    }

    ClientUpdate upd;
    upd.ordinal = ordinal;
    upd.client_id = client_id;
    upd.delta_federated = param_diff(u, w_f);
    upd.delta_private = tensor_diff(e, w_p_i);
    upd.num_examples = data.size();
    return upd;
}

ParamSet aggregate_federated(const ParamSet& w_f, const std::vector<ClientUpdate>& updates) {
    if (updates.empty()) throw ContractError("aggregate_federated: no updates");

    std::vector<const ClientUpdate*> ordered;
    ordered.reserve(updates.size());
    for (const ClientUpdate& u : updates) ordered.push_back(&u);
    std::sort(ordered.begin(), ordered.end(), [](const ClientUpdate* a, const ClientUpdate* b) {
        if (a->ordinal != b->ordinal) return a->ordinal < b->ordinal;
        return a->client_id < b->client_id;
    });

    unsigned long long c_total = 0;
    for (const ClientUpdate* u : ordered) {
        if (!u->delta_federated.same_layout(w_f)) {
            throw ContractError("aggregate_federated: layout mismatch from client '" +
                                u->client_id + "'");
        }
        c_total += u->num_examples;
    }
    if (c_total == 0) {
        throw AggregationError("aggregate_federated: total example count is zero");
    }
    const double denom = static_cast<double>(c_total);

    // Weighted deltas are summed per element in ascending client order; f64
    // addition is not associative, so the order is part of the contract.
    ParamSet out = w_f;
    for (std::size_t p = 0; p < out.size(); ++p) {
        Tensor& t = out.tensor(p);
        Tensor acc = Tensor::zeros(t.shape());
        for (const ClientUpdate* u : ordered) {
            const Tensor& d = u->delta_federated.tensor(p);
            const double weight = static_cast<double>(u->num_examples);
            for (std::size_t k = 0; k < acc.numel(); ++k) acc[k] += d[k] * weight;
        }
        // An exactly-zero step must leave the parameter bitwise untouched
        // (adding +0.0 would flip a stored -0.0), so zero is a true no-op.
        for (std::size_t k = 0; k < t.numel(); ++k) {
            const double step = acc[k] / denom;
            if (step != 0.0) t[k] += step;
        }
    }
    return out;
}

Tensor update_private(const Tensor& w_p_i, const Tensor& delta, std::size_t c_i,
                      std::size_t c_total, PrivateRule rule) {
    if (!w_p_i.same_shape(delta)) {
        throw DimensionError("update_private: shape mismatch " +
                             Tensor::shape_string(w_p_i.shape()) + " vs " +
                             Tensor::shape_string(delta.shape()));
    }
    if (c_i < 1 || c_total < c_i) {
        throw ContractError("update_private: need c_total >= c_i >= 1");
    }
    Tensor out = w_p_i;
    if (rule == PrivateRule::retain) {
        for (std::size_t k = 0; k < out.numel(); ++k) out[k] = w_p_i[k] + delta[k];
    } else {
        // Same expression the server-side average evaluates for a delta only
        // this client contributes to; keep it in this exact form.
        const double ci = static_cast<double>(c_i);
        const double ct = static_cast<double>(c_total);
        for (std::size_t k = 0; k < out.numel(); ++k) {
            out[k] = w_p_i[k] + (delta[k] * ci) / ct;
        }
    }
    return out;
}

std::vector<int> sample_clients(int n_users, int k, int round, std::uint64_t seed) {
    if (n_users < 1) throw ContractError("sample_clients: no users");
    if (k < 1 || k > n_users) {
        throw ContractError("sample_clients: k " + std::to_string(k) +
                            " out of range for " + std::to_string(n_users) + " users");
    }
    std::vector<int> pool(static_cast<std::size_t>(n_users));
    std::iota(pool.begin(), pool.end(), 0);
    Rng rng(derive_seed(seed, kSampleSalt, static_cast<std::uint64_t>(round)));
    for (int i = 0; i < k; ++i) {
        const std::size_t j = static_cast<std::size_t>(i) +
                              static_cast<std::size_t>(rng.below(
                                  static_cast<std::uint64_t>(n_users - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::vector<std::size_t> local_shuffle_order(std::size_t n, std::uint64_t seed, int round,
                                             int ordinal, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed ^ kLocalSalt, static_cast<std::uint64_t>(round),
                        static_cast<std::uint64_t>(ordinal),
                        static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    return order;
}

Tensor initial_embedding_table(const PreparedData& data, const ModelConfig& mcfg,
                               std::uint64_t seed, bool force_zero) {
    const auto n = static_cast<std::size_t>(data.n_users());
    const auto dim = static_cast<std::size_t>(mcfg.embed_dim);
    Tensor table({n, dim});
    for (std::size_t u = 0; u < n; ++u) {
        const Tensor row = force_zero
                               ? Tensor::zeros({dim})
                               : init_user_embedding(mcfg, seed, data.user_ids[u]);
        for (std::size_t j = 0; j < dim; ++j) table.at2(u, j) = row[j];
    }
    return table;
}

std::vector<MetricsRow> evaluate_split(const PreparedData& data,
                                       const std::vector<std::vector<FeaturizedExample>>& split,
                                       const std::string& split_name,
                                       const ModelConfig& mcfg, const ParamSet& params,
                                       const Tensor& table, int round,
                                       const std::string& mode) {
    double loss_sum = 0.0;
    std::size_t n = 0;
    std::vector<double> scores;
    std::vector<int> bin_labels;
    std::vector<int> preds;
    std::vector<int> labels;

    for (int u = 0; u < data.n_users(); ++u) {
        const auto& examples = split[static_cast<std::size_t>(u)];
        if (examples.empty()) continue;

        Graph g;
        register_federated_leaves(g, params);
        Tensor emb({static_cast<std::size_t>(mcfg.embed_dim)});
        for (std::size_t j = 0; j < emb.numel(); ++j) {
            emb[j] = table.at2(static_cast<std::size_t>(u), j);
        }
        NodeId emb_node = g.input(emb);

        for (const FeaturizedExample& ex : examples) {
            NodeId logits = build_logits(g, mcfg, emb_node, ex.features);
            NodeId loss = mcfg.binary() ? g.bce_with_logits(logits, ex.label)
                                        : g.cross_entropy(logits, ex.label);
            loss_sum += g.value(loss)[0];
            ++n;
            const Tensor& z = g.value(logits);
            if (mcfg.binary()) {
                scores.push_back(z[0]);
                bin_labels.push_back(ex.label);
            } else {
                std::size_t best = 0;
                for (std::size_t c = 1; c < z.numel(); ++c) {
                    if (z[c] > z[best]) best = c;
                }
                preds.push_back(static_cast<int>(best));
                labels.push_back(ex.label);
            }
        }
    }

    std::vector<MetricsRow> rows;
    if (n == 0) return rows;
    if (mcfg.binary()) {
        rows.push_back({round, mode, split_name, "auc", auc(scores, bin_labels)});
    } else {
        rows.push_back({round, mode, split_name, "accuracy", accuracy(preds, labels)});
    }
    rows.push_back({round, mode, split_name, "loss", loss_sum / static_cast<double>(n)});
    return rows;
}

FlResult run_fl(const PreparedData& data, const ModelConfig& mcfg, const RunConfig& cfg,
                const EngineHooks& hooks) {
    mcfg.validate();
    cfg.validate();
    if (!mode_is_federated(cfg.mode)) {
        throw ContractError("run_fl: mode " + mode_name(cfg.mode) + " is not federated");
    }
    if (cfg.users_per_round > data.n_users()) {
        throw ContractError("run_fl: users_per_round " +
                            std::to_string(cfg.users_per_round) + " exceeds " +
                            std::to_string(data.n_users()) + " users");
    }

    FlResult res;
    res.state.w_f = init_federated_params(mcfg, cfg.seed);
    res.state.round = 0;
    res.store.records.reserve(static_cast<std::size_t>(data.n_users()));
    for (int u = 0; u < data.n_users(); ++u) {
        const std::string& id = data.user_ids[static_cast<std::size_t>(u)];
        Tensor emb = hooks.zero_embedding_init
                         ? Tensor::zeros({static_cast<std::size_t>(mcfg.embed_dim)})
                         : init_user_embedding(mcfg, cfg.seed, id);
        res.store.records.push_back({id, std::move(emb), -1});
    }

    const std::string mode = mode_name(cfg.mode);
    for (int round = 0; round < cfg.rounds_or_epochs; ++round) {
        const std::vector<int> sampled =
            sample_clients(data.n_users(), cfg.users_per_round, round, cfg.seed);
        std::vector<int> active;
        active.reserve(sampled.size());
        for (int u : sampled) {
            if (data.train[static_cast<std::size_t>(u)].empty()) {
                ++res.skipped_clients;
                std::cerr << "warning: skipping client '"
                          << data.user_ids[static_cast<std::size_t>(u)]
                          << "' with no training data in round " << round << "\n";
            } else {
                active.push_back(u);
            }
        }

        if (!active.empty()) {
            std::vector<ClientUpdate> updates(active.size());
            auto train_one = [&](std::size_t idx) {
                const int u = active[idx];
                updates[idx] = local_train(
                    res.state.w_f, res.store.at(static_cast<std::size_t>(u)).embedding,
                    data.train[static_cast<std::size_t>(u)], mcfg, cfg, round, u,
                    data.user_ids[static_cast<std::size_t>(u)], hooks.private_lr_scale);
            };
            if (hooks.threads > 1 && active.size() > 1) {
                std::atomic<std::size_t> next{0};
                std::exception_ptr first_error;
                std::mutex error_mutex;
                auto worker = [&]() {
                    for (;;) {
                        const std::size_t idx = next.fetch_add(1);
                        if (idx >= active.size()) return;
                        try {
                            train_one(idx);
                        } catch (...) {
                            std::lock_guard<std::mutex> lock(error_mutex);
                            if (!first_error) first_error = std::current_exception();
                            return;
                        }
                    }
                };
                const std::size_t n_threads =
                    std::min(static_cast<std::size_t>(hooks.threads), active.size());
                std::vector<std::thread> threads;
                threads.reserve(n_threads);
                for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
                for (auto& t : threads) t.join();
                if (first_error) std::rethrow_exception(first_error);
            } else {
                for (std::size_t idx = 0; idx < active.size(); ++idx) train_one(idx);
            }

            std::size_t c_total = 0;
            for (const ClientUpdate& upd : updates) c_total += upd.num_examples;
            res.state.w_f = aggregate_federated(res.state.w_f, updates);
            for (const ClientUpdate& upd : updates) {
                ClientRecord& rec = res.store.at(static_cast<std::size_t>(upd.ordinal));
                if (mcfg.personalized) {
                    rec.embedding = update_private(rec.embedding, upd.delta_private,
                                                   upd.num_examples, c_total,
                                                   cfg.private_update);
                }
                rec.last_round = round;
            }
        }

        res.state.round = round + 1;
        if (!hooks.skip_eval) {
            const Tensor table = store_to_table(res.store);
            auto rows = evaluate_split(data, data.eval, "eval", mcfg, res.state.w_f,
                                       table, round + 1, mode);
            res.history.insert(res.history.end(), rows.begin(), rows.end());
        }
        if (hooks.on_round_end) hooks.on_round_end(res.state, res.store);
    }
    return res;
}

CentralResult run_centralized(const PreparedData& data, const ModelConfig& mcfg,
                              const RunConfig& cfg, const EngineHooks& hooks) {
    mcfg.validate();
    cfg.validate();
    if (mode_is_federated(cfg.mode)) {
        throw ContractError("run_centralized: mode " + mode_name(cfg.mode) +
                            " is federated");
    }

    CentralResult res;
    res.params = init_federated_params(mcfg, cfg.seed);
    res.embedding_table =
        initial_embedding_table(data, mcfg, cfg.seed, hooks.zero_embedding_init);

    std::vector<std::pair<int, const FeaturizedExample*>> pool;
    for (int u = 0; u < data.n_users(); ++u) {
        for (const FeaturizedExample& ex : data.train[static_cast<std::size_t>(u)]) {
            pool.push_back({u, &ex});
        }
    }
    if (pool.empty() && cfg.rounds_or_epochs > 0) {
        throw ContractError("run_centralized: no training data");
    }

    const std::string mode = mode_name(cfg.mode);
    for (int epoch = 0; epoch < cfg.rounds_or_epochs; ++epoch) {
        std::vector<std::size_t> order(pool.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed ^ kCentralSalt, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::pair<int, const FeaturizedExample*>> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(pool[order[i]]);

            Graph g;
            NodeId loss = build_pooled_loss(g, mcfg, res.params, res.embedding_table, batch);
            g.backward(loss);
            sgd_step(res.params, g, cfg.lr);
            if (mcfg.personalized) {
                const Tensor& gt = g.grad("user_embeddings");
                const double step = cfg.lr * hooks.private_lr_scale;
                for (std::size_t k = 0; k < res.embedding_table.numel(); ++k) {
                    res.embedding_table[k] -= step * gt[k];
                }
            }
        }

        if (!hooks.skip_eval) {
            auto rows = evaluate_split(data, data.eval, "eval", mcfg, res.params,
                                       res.embedding_table, epoch + 1, mode);
            res.history.insert(res.history.end(), rows.begin(), rows.end());
        }
    }
    return res;
}

}  // namespace fedsplit
