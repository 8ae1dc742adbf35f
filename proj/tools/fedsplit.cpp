#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsplit/data.hpp"
#include "fedsplit/engine.hpp"
#include "fedsplit/metrics.hpp"
#include "fedsplit/runner.hpp"
#include "fedsplit/storage.hpp"
#include "fedsplit/verifier.hpp"

namespace {

using namespace fedsplit;

nlohmann::json load_json_or(const std::string& path, nlohmann::json fallback) {
    if (path.empty()) return fallback;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ContractError("malformed JSON in '" + path + "'");
    return doc;
}

std::string sibling_path(const std::string& anchor, const std::string& name) {
    const std::filesystem::path parent = std::filesystem::path(anchor).parent_path();
    return parent.empty() ? name : (parent / name).string();
}

struct GenArgs {
    std::string spec_path;
    std::string out;
};

int cmd_gen_data(const GenArgs& args) {
    const SyntheticSpec spec =
        parse_synthetic_spec(load_json_or(args.spec_path, nlohmann::json::object()));
    const SyntheticDataset dataset = generate_synthetic(spec);
    write_dataset_jsonl(args.out, dataset.examples);
    const std::string clusters_path = sibling_path(args.out, "clusters.json");
    write_clusters_json(clusters_path, dataset.user_clusters);

    const DatasetStats stats = dataset_stats(dataset.examples);
    std::printf("wrote %s (%zu examples, %zu users, %.1f per user)\n", args.out.c_str(),
                stats.n_samples, stats.n_users, stats.samples_per_user);
    std::printf("wrote %s\n", clusters_path.c_str());
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::string data_path;
    std::string out_dir;
    int threads = 1;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int cmd_train(const TrainArgs& args) {
    ParsedConfig parsed = parse_config_json(
        load_json_or(args.config_path, nlohmann::json::object()));
    if (args.seed_given) parsed.run.seed = args.seed;

    const int label_classes =
        parsed.model.binary() ? 2 : parsed.model.num_classes;
    const std::vector<Example> examples = load_jsonl(args.data_path, label_classes);
    const DatasetSplit split = split_dataset(examples);
    const PreparedData data = prepare_data(split, parsed.model);

    EngineHooks hooks;
    hooks.threads = args.threads;
    const TrainOutcome outcome = run_training(data, parsed.model, parsed.run, hooks);
    write_run_outputs(args.out_dir, outcome,
                      config_to_json(parsed.run, parsed.model), parsed.run);

    std::printf("final eval %s=%.6f (%s, %d %s)\n", outcome.primary_metric.c_str(),
                outcome.final_value, mode_name(parsed.run.mode).c_str(),
                outcome.rounds_completed,
                mode_is_federated(parsed.run.mode) ? "rounds" : "epochs");
    return 0;
}

struct VerifyArgs {
    std::uint64_t seed = 0;
    bool inject_bug = false;
};

int cmd_verify(const VerifyArgs& args) {
    const std::vector<VerificationReport> reports =
        run_standard_checks(args.seed, args.inject_bug);
    bool all_pass = true;
    for (const VerificationReport& report : reports) {
        std::printf("%s\n", format_report_line(report).c_str());
        all_pass = all_pass && report.pass;
    }
    return all_pass ? 0 : 1;
}

struct ReportArgs {
    std::vector<std::string> run_dirs;
    std::string out;
    std::string clusters_path;
    std::string analysis_out;
    std::uint64_t seed = 0;
};

int cmd_report(const ReportArgs& args) {
    MetricsHistory merged;
    struct Final {
        std::string mode;
        std::string metric;
        double value = 0.0;
    };
    std::vector<Final> finals;

    for (const std::string& dir : args.run_dirs) {
        const std::string csv = dir + "/metrics.csv";
        if (!std::filesystem::exists(csv)) {
            throw IoError("report: no metrics.csv in '" + dir + "'");
        }
        const MetricsHistory rows = read_metrics_csv(csv);
        merged.insert(merged.end(), rows.begin(), rows.end());

        Final fin;
        for (const MetricsRow& row : rows) {
            if (row.split == "eval" && row.metric != "loss") {
                fin.mode = row.mode;
                fin.metric = row.metric;
                fin.value = row.value;
            }
        }
        if (!fin.mode.empty()) finals.push_back(fin);
    }
    if (!args.out.empty()) write_metrics_csv(args.out, merged);

    std::printf("%-22s %-10s %s\n", "mode", "metric", "final_eval");
    for (const Final& fin : finals) {
        std::printf("%-22s %-10s %.4f\n", fin.mode.c_str(), fin.metric.c_str(), fin.value);
    }

    if (!args.clusters_path.empty()) {
        const std::map<std::string, int> clusters = read_clusters_json(args.clusters_path);
        std::set<int> distinct;
        for (const auto& [id, c] : clusters) distinct.insert(c);
        const int k = static_cast<int>(distinct.size());

        nlohmann::json analysis = nlohmann::json::array();
        for (const std::string& dir : args.run_dirs) {
            const std::string emb_path = dir + "/embeddings.csv";
            if (!std::filesystem::exists(emb_path)) continue;
            const EmbeddingTable table = read_embeddings_csv(emb_path);
            std::vector<int> truth;
            truth.reserve(table.user_ids.size());
            for (const std::string& id : table.user_ids) {
                auto it = clusters.find(id);
                if (it == clusters.end()) {
                    throw ContractError("report: user '" + id + "' missing from '" +
                                        args.clusters_path + "'");
                }
                truth.push_back(it->second);
            }
            const double ari = cluster_agreement(table.matrix, truth, k, args.seed);

            std::string mode = "unknown";
            const std::string csv = dir + "/metrics.csv";
            const MetricsHistory rows = read_metrics_csv(csv);
            if (!rows.empty()) mode = rows.back().mode;
            analysis.push_back({{"mode", mode},
                                {"ari", ari},
                                {"n_users", table.user_ids.size()}});
            std::printf("%-22s ari=%.4f (%zu users, k=%d)\n", mode.c_str(), ari,
                        table.user_ids.size(), k);
        }
        if (!args.analysis_out.empty()) {
            std::ofstream out(args.analysis_out);
            if (!out) throw IoError("report: cannot open '" + args.analysis_out + "'");
            out << analysis.dump(2) << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Split-parameter personalization workbench: synthetic data, four "
                 "training configurations, invariant checks, and reporting."};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App* gen_cmd =
        app.add_subcommand("gen-data", "Generate a synthetic non-IID dataset");
    gen_cmd->add_option("--spec", gen.spec_path,
                        "Spec JSON; defaults: n_users=100 n_clusters=4 "
                        "examples_per_user=60 n_topics=16 label_noise=0.05 "
                        "topic_skew=0 seed=0");
    gen_cmd->add_option("--out", gen.out, "Output JSONL path")->required();
    gen_cmd->footer("Writes the dataset plus clusters.json beside it.");

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "Train one configuration");
    train_cmd->add_option("--config", train.config_path,
                          "Run config JSON; defaults: mode=personalized_fl "
                          "users_per_round=10 local_epochs=1 rounds_or_epochs=0 "
                          "lr=0.1 batch_size=32 private_update=retain seed=0");
    train_cmd->add_option("--data", train.data_path, "Dataset JSONL")->required();
    train_cmd->add_option("--out", train.out_dir, "Output directory")->required();
    train_cmd->add_option("--threads", train.threads, "Parallel client training")
        ->check(CLI::PositiveNumber);
    CLI::Option* seed_opt =
        train_cmd->add_option("--seed", train.seed, "Overrides the config seed");
    train_cmd->footer(
        "config.model defaults: hash_dim=1024 ngram_n=2 embed_dim=8 hidden_dims=[64] "
        "num_classes=1; whether embeddings train follows from the mode. Unknown "
        "config keys are rejected. Outputs: checkpoint.json, metrics.csv, and for "
        "personalized modes embeddings.csv (FL also writes clients/).");

    VerifyArgs verify;
    CLI::App* verify_cmd =
        app.add_subcommand("verify", "Run the training-equivalence checks");
    verify_cmd->add_option("--seed", verify.seed, "Instance seed (default 0)");
    verify_cmd->add_flag("--inject-bug", verify.inject_bug, "")->group("");

    ReportArgs report;
    CLI::App* report_cmd =
        app.add_subcommand("report", "Merge run metrics and compare final values");
    report_cmd->add_option("--runs", report.run_dirs, "Run output directories")
        ->required()
        ->expected(-1);
    report_cmd->add_option("--out", report.out, "Merged long-format CSV path");
    report_cmd->add_option("--clusters", report.clusters_path,
                           "clusters.json for embedding-structure scoring");
    report_cmd->add_option("--analysis-out", report.analysis_out,
                           "Where to write the analysis JSON");
    report_cmd->add_option("--seed", report.seed, "Clustering seed (default 0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (train_cmd->parsed()) {
            train.seed_given = seed_opt->count() > 0;
            return cmd_train(train);
        }
        if (verify_cmd->parsed()) return cmd_verify(verify);
        if (report_cmd->parsed()) return cmd_report(report);
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
