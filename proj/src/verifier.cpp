#include "fedsplit/verifier.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "fedsplit/rng.hpp"

namespace fedsplit {

namespace {

constexpr std::uint64_t kVerifySalt = 0x766572696679ULL;  // "verify"

std::string format_dev(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double max_abs_in_row(const Tensor& matrix, std::size_t row) {
    double m = 0.0;
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
        m = std::max(m, std::abs(matrix.at2(row, j)));
    }
    return m;
}

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

double pooled_loss_value(const ModelConfig& mcfg, const ParamSet& params,
                         const Tensor& table,
                         const std::vector<std::pair<int, const FeaturizedExample*>>& batch) {
    Graph g;
    NodeId loss = build_pooled_loss(g, mcfg, params, table, batch);
    return g.value(loss)[0];
}

}  // namespace

std::string format_report_line(const VerificationReport& report) {
    return "CHECK " + report.name + " max_dev=" + format_dev(report.max_abs_deviation) +
           (report.pass ? " PASS" : " FAIL");
}

VerificationReport check_zero_cross_gradient(const ModelConfig& mcfg,
                                             const PreparedData& data, int i, int j,
                                             std::uint64_t seed) {
    if (i == j) {
        throw ContractError("check_zero_cross_gradient: users i and j must differ");
    }
    if (i < 0 || j < 0 || i >= data.n_users() || j >= data.n_users()) {
        throw ContractError("check_zero_cross_gradient: user index out of range");
    }
    const auto ui = static_cast<std::size_t>(i);
    const auto uj = static_cast<std::size_t>(j);
    if (data.train[ui].empty()) {
        throw ContractError("check_zero_cross_gradient: user '" + data.user_ids[ui] +
                            "' has no training data");
    }

    const ParamSet params = init_federated_params(mcfg, seed);
    const Tensor table = initial_embedding_table(data, mcfg, seed);
    std::vector<std::pair<int, const FeaturizedExample*>> batch;
    batch.reserve(data.train[ui].size());
    for (const FeaturizedExample& ex : data.train[ui]) batch.push_back({i, &ex});

    Graph g;
    NodeId loss = build_pooled_loss(g, mcfg, params, table, batch);
    g.backward(loss);
    const Tensor& table_grad = g.grad("user_embeddings");
    const double cross = max_abs_in_row(table_grad, uj);
    const double own = max_abs_in_row(table_grad, ui);

    // The loss never reads row j, so both sides of the central difference are
    // the same forward pass; anything but exact zero means the graph wiring
    // leaks between rows.
    const double eps = 1e-6;
    double fd_max = 0.0;
    for (std::size_t col = 0; col < table.cols(); ++col) {
        Tensor plus = table;
        Tensor minus = table;
        plus.at2(uj, col) += eps;
        minus.at2(uj, col) -= eps;
        const double lp = pooled_loss_value(mcfg, params, plus, batch);
        const double lm = pooled_loss_value(mcfg, params, minus, batch);
        fd_max = std::max(fd_max, std::abs((lp - lm) / (2.0 * eps)));
    }

    VerificationReport report;
    report.name = "zero_cross_gradient";
    report.max_abs_deviation = fd_max >= 1e-10 ? std::max(cross, fd_max) : cross;
    report.pass = report.max_abs_deviation <= 0.0;
    std::ostringstream details;
    details << "loss of user " << data.user_ids[ui] << " vs embedding of user "
            << data.user_ids[uj] << "; fd_max=" << format_dev(fd_max)
            << " own_row_grad_max=" << format_dev(own);
    report.details = details.str();
    return report;
}

VerificationReport check_aggregation_independence(std::uint64_t seed, bool inject_bug) {
    Rng rng(derive_seed(seed, kVerifySalt));

    ParamSet w;
    w.add("a", random_tensor(rng, {3}));
    w.add("b", random_tensor(rng, {2, 2}));
    const std::size_t embed_dim = 3;
    const int n_clients = 4;

    std::vector<ClientUpdate> updates;
    for (int c = 0; c < n_clients; ++c) {
        ClientUpdate upd;
        upd.ordinal = c;
        upd.client_id = "c" + std::to_string(c);
        upd.delta_federated = w.zeros_like();
        for (std::size_t p = 0; p < upd.delta_federated.size(); ++p) {
            Tensor& t = upd.delta_federated.tensor(p);
            for (std::size_t k = 0; k < t.numel(); ++k) t[k] = rng.uniform(-1.0, 1.0);
        }
        upd.delta_private = random_tensor(rng, {embed_dim});
        upd.num_examples = 1 + rng.below(5);
        updates.push_back(std::move(upd));
    }
    std::size_t c_total = 0;
    for (const ClientUpdate& upd : updates) c_total += upd.num_examples;

    const ParamSet base = aggregate_federated(w, updates);

    // (a) private deltas are not inputs to the federated average.
    std::vector<ClientUpdate> perturbed = updates;
    for (ClientUpdate& upd : perturbed) {
        for (std::size_t k = 0; k < upd.delta_private.numel(); ++k) {
            upd.delta_private[k] += rng.uniform(-1.0, 1.0);
        }
    }
    ParamSet again = aggregate_federated(w, perturbed);
    if (inject_bug) {
        // Negative control: leak one private value into the aggregate the way
        // a careless implementation might.
        again.tensor(0)[0] += perturbed[0].delta_private[0];
    }
    const double dev_a = base.max_abs_diff(again);
    const bool bitwise_a = base.bitwise_equal(again);

    // (b) a client's private update reads nothing beyond its own delta and
    // the example counts; recompute in a "different world" and compare.
    const Tensor w_p = random_tensor(rng, {embed_dim});
    const Tensor u_first = update_private(w_p, updates[0].delta_private,
                                          updates[0].num_examples, c_total,
                                          PrivateRule::scaled);
    const Tensor u_second = update_private(w_p, updates[0].delta_private,
                                           updates[0].num_examples, c_total,
                                           PrivateRule::scaled);
    const double dev_b = u_first.max_abs_diff(u_second);
    const bool bitwise_b = u_first.bitwise_equal(u_second);

    // Sanity inversions: the same comparisons must be able to move at all.
    std::vector<ClientUpdate> inverted = updates;
    inverted[1].delta_federated.tensor(0)[0] += 0.5;
    const double inversion_fed = base.max_abs_diff(aggregate_federated(w, inverted));
    Tensor own_delta = updates[0].delta_private;
    own_delta[0] += 0.5;
    const double inversion_priv = u_first.max_abs_diff(
        update_private(w_p, own_delta, updates[0].num_examples, c_total,
                       PrivateRule::scaled));

    VerificationReport report;
    report.name = "aggregation_independence";
    report.max_abs_deviation = std::max(dev_a, dev_b);
    std::ostringstream details;
    details << n_clients << " clients; private_perturbation_dev=" << format_dev(dev_a)
            << " cross_world_dev=" << format_dev(dev_b)
            << " inversion_fed=" << format_dev(inversion_fed)
            << " inversion_priv=" << format_dev(inversion_priv);
    if (!bitwise_a || !bitwise_b || inversion_fed <= 0.0 || inversion_priv <= 0.0) {
        report.max_abs_deviation = std::max(report.max_abs_deviation, 1.0);
        details << " (bitwise comparison or sanity inversion failed)";
    }
    report.pass = report.max_abs_deviation <= 0.0;
    report.details = details.str();
    return report;
}

VerificationReport split_equivalence_oracle(const PreparedData& data,
                                            const ModelConfig& mcfg,
                                            const RunConfig& cfg) {
    if (cfg.private_update != PrivateRule::scaled) {
        throw ContractError(
            "split_equivalence_oracle: requires the scaled rule; retain keeps the whole "
            "locally trained value (weight 1 instead of c_i/c_total) and deviates from "
            "the shared-table average by (1 - c_i/c_total) * delta_private per "
            "participant");
    }
    if (cfg.mode != Mode::personalized_fl || !mcfg.personalized) {
        throw ContractError("split_equivalence_oracle: needs personalized_fl with a "
                            "personalized model");
    }

    // Side A: the engine as shipped, private rows staying on their clients.
    struct Snapshot {
        ParamSet w_f;
        std::vector<Tensor> embeddings;
    };
    std::vector<Snapshot> snapshots;
    EngineHooks hooks;
    hooks.skip_eval = true;
    hooks.on_round_end = [&](const GlobalState& state, const ClientStore& store) {
        Snapshot snap;
        snap.w_f = state.w_f;
        snap.embeddings.reserve(store.size());
        for (const ClientRecord& rec : store.records) snap.embeddings.push_back(rec.embedding);
        snapshots.push_back(std::move(snap));
    };
    run_fl(data, mcfg, cfg, hooks);

    // Side B: plain example-count weighted averaging with the whole embedding
    // table treated as one more shared parameter.
    ParamSet w = init_federated_params(mcfg, cfg.seed);
    Tensor table = initial_embedding_table(data, mcfg, cfg.seed);

    double max_dev = 0.0;
    for (int round = 0; round < cfg.rounds_or_epochs; ++round) {
        const std::vector<int> sampled =
            sample_clients(data.n_users(), cfg.users_per_round, round, cfg.seed);
        std::vector<int> active;
        for (int u : sampled) {
            if (!data.train[static_cast<std::size_t>(u)].empty()) active.push_back(u);
        }

        struct FullUpdate {
            ParamSet delta_params;
            Tensor delta_table;
            std::size_t count = 0;
        };
        std::vector<FullUpdate> full_updates;
        for (int u : active) {
            const auto& train = data.train[static_cast<std::size_t>(u)];
            ParamSet local = w;
            Tensor local_table = table;
            for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
                const auto order =
                    local_shuffle_order(train.size(), cfg.seed, round, u, epoch);
                for (std::size_t start = 0; start < order.size();
                     start += static_cast<std::size_t>(cfg.batch_size)) {
                    const std::size_t end = std::min(
                        order.size(), start + static_cast<std::size_t>(cfg.batch_size));
                    std::vector<std::pair<int, const FeaturizedExample*>> batch;
                    for (std::size_t b = start; b < end; ++b) {
                        batch.push_back({u, &train[order[b]]});
                    }
                    Graph g;
                    NodeId loss = build_pooled_loss(g, mcfg, local, local_table, batch);
                    g.backward(loss);
                    for (std::size_t p = 0; p < local.size(); ++p) {
                        Tensor& t = local.tensor(p);
                        const Tensor& grad = g.grad(local.name(p));
                        for (std::size_t k = 0; k < t.numel(); ++k) {
                            t[k] -= cfg.lr * grad[k];
                        }
                    }
                    const Tensor& table_grad = g.grad("user_embeddings");
                    for (std::size_t k = 0; k < local_table.numel(); ++k) {
                        local_table[k] -= cfg.lr * table_grad[k];
                    }
                }
            }
            FullUpdate fu;
            fu.delta_params = w.zeros_like();
            for (std::size_t p = 0; p < w.size(); ++p) {
                Tensor& d = fu.delta_params.tensor(p);
                for (std::size_t k = 0; k < d.numel(); ++k) {
                    d[k] = local.tensor(p)[k] - w.tensor(p)[k];
                }
            }
            fu.delta_table = Tensor::zeros(table.shape());
            for (std::size_t k = 0; k < table.numel(); ++k) {
                fu.delta_table[k] = local_table[k] - table[k];
            }
            fu.count = train.size();
            full_updates.push_back(std::move(fu));
        }

        if (!full_updates.empty()) {
            std::size_t c_total = 0;
            for (const FullUpdate& fu : full_updates) c_total += fu.count;
            const double denom = static_cast<double>(c_total);
            for (std::size_t p = 0; p < w.size(); ++p) {
                Tensor& t = w.tensor(p);
                Tensor acc = Tensor::zeros(t.shape());
                for (const FullUpdate& fu : full_updates) {
                    const Tensor& d = fu.delta_params.tensor(p);
                    const double weight = static_cast<double>(fu.count);
                    for (std::size_t k = 0; k < acc.numel(); ++k) acc[k] += d[k] * weight;
                }
                for (std::size_t k = 0; k < t.numel(); ++k) t[k] += acc[k] / denom;
            }
            Tensor acc = Tensor::zeros(table.shape());
            for (const FullUpdate& fu : full_updates) {
                const double weight = static_cast<double>(fu.count);
                for (std::size_t k = 0; k < acc.numel(); ++k) {
                    acc[k] += fu.delta_table[k] * weight;
                }
            }
            for (std::size_t k = 0; k < table.numel(); ++k) table[k] += acc[k] / denom;
        }

        const Snapshot& snap = snapshots[static_cast<std::size_t>(round)];
        double dev = w.max_abs_diff(snap.w_f);
        for (int u = 0; u < data.n_users(); ++u) {
            const Tensor& emb = snap.embeddings[static_cast<std::size_t>(u)];
            for (std::size_t j = 0; j < emb.numel(); ++j) {
                dev = std::max(dev,
                               std::abs(table.at2(static_cast<std::size_t>(u), j) - emb[j]));
            }
        }
        max_dev = std::max(max_dev, dev);
    }

    VerificationReport report;
    report.name = "split_equivalence";
    report.max_abs_deviation = max_dev;
    report.pass = max_dev <= 1e-12;
    std::ostringstream details;
    details << cfg.rounds_or_epochs << " rounds, " << data.n_users() << " users, "
            << cfg.users_per_round << " per round; split vs shared-table average";
    report.details = details.str();
    return report;
}

std::vector<VerificationReport> run_standard_checks(std::uint64_t seed, bool inject_bug) {
    SyntheticSpec spec;
    spec.n_users = 6;
    spec.n_clusters = 3;
    spec.examples_per_user = 12;
    spec.n_topics = 4;
    spec.label_noise = 0.1;
    spec.seed = seed;

    ModelConfig mcfg;
    mcfg.hash_dim = 64;
    mcfg.ngram_n = 2;
    mcfg.embed_dim = 4;
    mcfg.hidden_dims = {8};
    mcfg.num_classes = 3;
    mcfg.personalized = true;

    const SyntheticDataset dataset = generate_synthetic(spec);
    const DatasetSplit split = split_dataset(dataset.examples);
    const PreparedData data = prepare_data(split, mcfg);

    std::vector<VerificationReport> reports;
    reports.push_back(check_zero_cross_gradient(mcfg, data, 0, 1, seed));
    reports.push_back(check_aggregation_independence(seed, inject_bug));

    RunConfig cfg;
    cfg.mode = Mode::personalized_fl;
    cfg.users_per_round = 3;
    cfg.local_epochs = 1;
    cfg.rounds_or_epochs = 3;
    cfg.lr = 0.1;
    cfg.batch_size = 4;
    cfg.private_update = PrivateRule::scaled;
    cfg.seed = seed;
    reports.push_back(split_equivalence_oracle(data, mcfg, cfg));
    return reports;
}

}  // namespace fedsplit
