#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fedsplit/client_store.hpp"
#include "fedsplit/engine.hpp"
#include "fedsplit/metrics.hpp"
#include "fedsplit/model.hpp"
#include "fedsplit/storage.hpp"

using namespace fedsplit;
using nlohmann::json;

namespace {

// Every file this suite creates goes under one scratch root.
struct ScratchDir {
    std::filesystem::path root;
    explicit ScratchDir(const std::string& name) : root(name) {
        std::filesystem::remove_all(root);
        std::filesystem::create_directories(root);
    }
    ~ScratchDir() { std::filesystem::remove_all(root); }
    std::string path(const std::string& leaf) const { return (root / leaf).string(); }
};

ParamSet sample_params() {
    ModelConfig cfg;
    cfg.hash_dim = 8;
    cfg.embed_dim = 2;
    cfg.hidden_dims = {4};
    cfg.num_classes = 3;
    return init_federated_params(cfg, 77);
}

}  // namespace

TEST_CASE("checkpoint: write and read reproduce every bit and the layout order") {
    ScratchDir dir("test_storage_ckpt");
    ParamSet params = sample_params();
    json config = {{"mode", "personalized_fl"}, {"seed", 4}};

    write_checkpoint(dir.path("checkpoint.json"), config, 12, params);
    Checkpoint ck = read_checkpoint(dir.path("checkpoint.json"));

    CHECK(ck.format_version == kCheckpointFormatVersion);
    CHECK(ck.round == 12);
    CHECK(ck.config["mode"] == "personalized_fl");
    REQUIRE(ck.federated.same_layout(params));
    CHECK(ck.federated.bitwise_equal(params));
    // Layout order must survive even though JSON objects sort keys.
    CHECK(ck.federated.name(0) == params.name(0));
    CHECK(ck.federated.name(ck.federated.size() - 1) == params.name(params.size() - 1));
}

TEST_CASE("checkpoint: documents carry a config hash and refuse foreign versions") {
    ScratchDir dir("test_storage_ckpt2");
    ParamSet params = sample_params();
    write_checkpoint(dir.path("checkpoint.json"), json::object(), 0, params);

    std::ifstream in(dir.path("checkpoint.json"));
    json doc = json::parse(in);
    CHECK(doc.contains("config_hash"));
    CHECK(doc["config_hash"].is_string());

    doc["format_version"] = 999;
    std::ofstream out(dir.path("future.json"));
    out << doc.dump();
    out.close();
    CHECK_THROWS_AS(read_checkpoint(dir.path("future.json")), IoError);

    CHECK_THROWS_AS(read_checkpoint(dir.path("missing.json")), IoError);
}

TEST_CASE("checkpoint: holds exactly the shared model and metadata, nothing else") {
    // The file format has no field that could carry per-user state; assert
    // the whole key set so an accidental addition trips this test.
    ScratchDir dir("test_storage_keys");
    write_checkpoint(dir.path("checkpoint.json"), json::object(), 3, sample_params());
    std::ifstream in(dir.path("checkpoint.json"));
    json doc = json::parse(in);
    for (const auto& [key, value] : doc.items()) {
        const bool known = key == "format_version" || key == "config" ||
                           key == "config_hash" || key == "round" ||
                           key == "federated" || key == "layer_order";
        INFO("unexpected checkpoint key: " << key);
        CHECK(known);
    }
}

TEST_CASE("client store: one file per trained user, untouched users left out") {
    ScratchDir dir("test_storage_clients");
    ClientStore store;
    store.records.push_back({"u000", Tensor::vector({0.1, -0.2}), 5});
    store.records.push_back({"u001", Tensor::vector({0.3, 0.4}), -1});  // never trained
    store.records.push_back({"u002", Tensor::vector({-0.5, 0.6}), 2});

    write_client_store(dir.path("clients"), store);
    CHECK(std::filesystem::exists(dir.path("clients/u000.json")));
    CHECK_FALSE(std::filesystem::exists(dir.path("clients/u001.json")));
    CHECK(std::filesystem::exists(dir.path("clients/u002.json")));

    ClientRecord rec = read_client_record(dir.path("clients/u002.json"));
    CHECK(rec.user_id == "u002");
    CHECK(rec.last_round == 2);
    CHECK(rec.embedding.bitwise_equal(Tensor::vector({-0.5, 0.6})));
}

TEST_CASE("metrics csv: values survive the round trip exactly") {
    ScratchDir dir("test_storage_metrics");
    MetricsHistory rows = {
        {0, "personalized_fl", "eval", "accuracy", 0.1 + 0.2},  // not representable nicely
        {1, "personalized_fl", "eval", "loss", 1.0 / 3.0},
        {1, "personalized_fl", "test", "accuracy", 1e-17},
    };
    write_metrics_csv(dir.path("metrics.csv"), rows);
    MetricsHistory back = read_metrics_csv(dir.path("metrics.csv"));
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].round == rows[i].round);
        CHECK(back[i].mode == rows[i].mode);
        CHECK(back[i].split == rows[i].split);
        CHECK(back[i].metric == rows[i].metric);
        CHECK(back[i].value == rows[i].value);  // exact, not approximate
    }

    std::ifstream in(dir.path("metrics.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "round,mode,split,metric,value");
}

TEST_CASE("metrics csv: bad headers and rows are rejected with a location") {
    ScratchDir dir("test_storage_badcsv");
    {
        std::ofstream out(dir.path("wrong_header.csv"));
        out << "round,mode,split,value\n0,m,eval,0.5\n";
    }
    CHECK_THROWS_AS(read_metrics_csv(dir.path("wrong_header.csv")), IoError);

    {
        std::ofstream out(dir.path("short_row.csv"));
        out << "round,mode,split,metric,value\n0,m,eval,accuracy\n";
    }
    try {
        read_metrics_csv(dir.path("short_row.csv"));
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }

    {
        std::ofstream out(dir.path("bad_value.csv"));
        out << "round,mode,split,metric,value\nzero,m,eval,accuracy,0.5\n";
    }
    CHECK_THROWS_AS(read_metrics_csv(dir.path("bad_value.csv")), IoError);
}

TEST_CASE("clusters json: map round trip") {
    ScratchDir dir("test_storage_clusters");
    std::map<std::string, int> clusters = {{"u000", 2}, {"u001", 0}, {"u002", 3}};
    write_clusters_json(dir.path("clusters.json"), clusters);
    CHECK(read_clusters_json(dir.path("clusters.json")) == clusters);
    CHECK_THROWS_AS(read_clusters_json(dir.path("nope.json")), IoError);
}

TEST_CASE("embeddings csv: reads what export wrote, in sorted order") {
    ScratchDir dir("test_storage_emb");
    ClientStore store;
    store.records.push_back({"u001", Tensor::vector({0.5, -0.25}), 0});
    store.records.push_back({"u000", Tensor::vector({1.0 / 3.0, 0.125}), 1});
    export_embeddings(store, dir.path("embeddings.csv"));

    EmbeddingTable table = read_embeddings_csv(dir.path("embeddings.csv"));
    REQUIRE(table.user_ids.size() == 2u);
    CHECK(table.user_ids[0] == "u000");
    CHECK(table.user_ids[1] == "u001");
    CHECK(table.matrix.at2(0, 0) == 1.0 / 3.0);  // exact through the text format
    CHECK(table.matrix.at2(1, 1) == -0.25);

    {
        std::ofstream out(dir.path("empty.csv"));
    }
    CHECK_THROWS_AS(read_embeddings_csv(dir.path("empty.csv")), IoError);
    {
        std::ofstream out(dir.path("headeronly.csv"));
        out << "user_id,e0\n";
    }
    CHECK_THROWS_AS(read_embeddings_csv(dir.path("headeronly.csv")), IoError);
}
