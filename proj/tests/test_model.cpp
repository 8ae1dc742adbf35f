#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedsplit/model.hpp"
#include "fedsplit/rng.hpp"
#include "fedsplit/text_features.hpp"

using namespace fedsplit;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.hash_dim = 16;
    cfg.ngram_n = 2;
    cfg.embed_dim = 4;
    cfg.hidden_dims = {8};
    cfg.num_classes = 3;
    cfg.personalized = true;
    return cfg;
}

}  // namespace

TEST_CASE("featurize: one bigram maps to a single unit coordinate") {
    Tensor v = featurize_text("ab", 2, 8);
    const std::size_t expect = fnv1a64("ab") % 8;
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(v[i] == (i == expect ? 1.0 : 0.0));
    }
}

TEST_CASE("featurize: deterministic, unit norm, zero for degenerate text") {
    Tensor a = featurize_text("hello world", 2, 64);
    Tensor b = featurize_text("hello world", 2, 64);
    CHECK(a.bitwise_equal(b));

    double norm2 = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) norm2 += a[i] * a[i];
    CHECK(norm2 == doctest::Approx(1.0).epsilon(1e-12));

    Tensor empty = featurize_text("", 2, 64);
    CHECK(empty.max_abs() == 0.0);
    Tensor too_short = featurize_text("x", 2, 64);  // shorter than one n-gram
    CHECK(too_short.max_abs() == 0.0);
}

TEST_CASE("model config: validation rejects nonsense dimensions") {
    ModelConfig cfg = small_config();
    cfg.hash_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = small_config();
    cfg.embed_dim = -1;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = small_config();
    cfg.hidden_dims = {8, 0};
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = small_config();
    cfg.num_classes = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("model init: layer shapes chain from joined input to classes") {
    ModelConfig cfg = small_config();
    ParamSet p = init_federated_params(cfg, 42);
    CHECK(p.size() == 4);
    CHECK(p.name(0) == "mlp0/weight");
    CHECK(p.at("mlp0/weight").rows() == 8);
    CHECK(p.at("mlp0/weight").cols() == 20);  // hash_dim + embed_dim
    CHECK(p.at("mlp0/bias").numel() == 8);
    CHECK(p.at("head/weight").rows() == 3);
    CHECK(p.at("head/weight").cols() == 8);
    CHECK(p.at("head/bias").numel() == 3);

    // Weights live inside the fan-in bound, biases start at zero.
    const double bound = 1.0 / std::sqrt(20.0);
    const Tensor& w = p.at("mlp0/weight");
    for (std::size_t i = 0; i < w.numel(); ++i) {
        CHECK(std::abs(w[i]) <= bound);
    }
    CHECK(p.at("mlp0/bias").max_abs() == 0.0);

    // Same seed, same weights; different seed, different weights.
    CHECK(p.bitwise_equal(init_federated_params(cfg, 42)));
    CHECK_FALSE(p.bitwise_equal(init_federated_params(cfg, 43)));
}

TEST_CASE("model init: user embeddings are seeded per id and bounded") {
    ModelConfig cfg = small_config();
    Tensor e1 = init_user_embedding(cfg, 7, "u001");
    Tensor e2 = init_user_embedding(cfg, 7, "u002");
    CHECK(e1.numel() == 4);
    CHECK(e1.max_abs() <= 0.05);
    CHECK_FALSE(e1.bitwise_equal(e2));
    CHECK(e1.bitwise_equal(init_user_embedding(cfg, 7, "u001")));

    // Non-personalized models pin the embedding at zero.
    cfg.personalized = false;
    CHECK(init_user_embedding(cfg, 7, "u001").max_abs() == 0.0);
}

TEST_CASE("model forward: all-zero parameters give all-zero logits") {
    ModelConfig cfg = small_config();
    ParamSet zeros = init_federated_params(cfg, 0).zeros_like();
    Graph g;
    register_federated_leaves(g, zeros);
    NodeId emb = g.parameter("user_embedding", Tensor::zeros({4}));
    Tensor x = featurize_text("some words here", cfg.ngram_n, cfg.hash_dim);
    NodeId logits = build_logits(g, cfg, emb, x);
    CHECK(g.value(logits).numel() == 3);
    CHECK(g.value(logits).max_abs() == 0.0);
}

TEST_CASE("model forward: logits depend on the embedding") {
    ModelConfig cfg = small_config();
    ParamSet p = init_federated_params(cfg, 5);
    Tensor x = featurize_text("abcdef", cfg.ngram_n, cfg.hash_dim);

    Graph ga;
    register_federated_leaves(ga, p);
    NodeId ea = ga.parameter("user_embedding", Tensor::vector({0.5, 0.0, 0.0, 0.0}));
    Tensor la = ga.value(build_logits(ga, cfg, ea, x));

    Graph gb;
    register_federated_leaves(gb, p);
    NodeId eb = gb.parameter("user_embedding", Tensor::vector({-0.5, 0.0, 0.0, 0.0}));
    Tensor lb = gb.value(build_logits(gb, cfg, eb, x));

    CHECK_FALSE(la.bitwise_equal(lb));
}

TEST_CASE("model forward: feature length must match hash_dim") {
    ModelConfig cfg = small_config();
    ParamSet p = init_federated_params(cfg, 5);
    Graph g;
    register_federated_leaves(g, p);
    NodeId emb = g.parameter("user_embedding", Tensor::zeros({4}));
    Tensor wrong = Tensor::zeros({8});
    CHECK_THROWS_AS(build_logits(g, cfg, emb, wrong), DimensionError);
}

TEST_CASE("model loss: batch mean makes duplicates a no-op") {
    ModelConfig cfg = small_config();
    ParamSet p = init_federated_params(cfg, 9);
    Tensor emb = init_user_embedding(cfg, 9, "u000");
    FeaturizedExample ex{featurize_text("repeat me", cfg.ngram_n, cfg.hash_dim), 1};

    Graph g1;
    double single = g1.value(build_local_loss(g1, cfg, p, emb, {&ex}))[0];
    Graph g2;
    double doubled = g2.value(build_local_loss(g2, cfg, p, emb, {&ex, &ex}))[0];
    CHECK(single == doctest::Approx(doubled).epsilon(1e-15));

    Graph g3;
    CHECK_THROWS_AS(build_local_loss(g3, cfg, p, emb, {}), ContractError);
}

TEST_CASE("model loss: binary head with zero parameters costs ln 2") {
    ModelConfig cfg = small_config();
    cfg.num_classes = 1;
    ParamSet zeros = init_federated_params(cfg, 0).zeros_like();
    Tensor emb = Tensor::zeros({4});
    FeaturizedExample ex{featurize_text("anything at all", cfg.ngram_n, cfg.hash_dim), 0};
    Graph g;
    double loss = g.value(build_local_loss(g, cfg, zeros, emb, {&ex}))[0];
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("model loss: gradients never reach another user's embedding row") {
    ModelConfig cfg = small_config();
    ParamSet p = init_federated_params(cfg, 11);
    Tensor table({5, 4});
    Rng rng(3);
    for (std::size_t i = 0; i < table.numel(); ++i) table[i] = rng.uniform(-0.05, 0.05);

    // A batch touching users 1 and 3 only.
    FeaturizedExample a{featurize_text("first text", cfg.ngram_n, cfg.hash_dim), 0};
    FeaturizedExample b{featurize_text("second text", cfg.ngram_n, cfg.hash_dim), 2};
    Graph g;
    NodeId loss = build_pooled_loss(g, cfg, p, table, {{1, &a}, {3, &b}});
    g.backward(loss);

    const Tensor& grad = g.grad("user_embeddings");
    for (std::size_t row : {0u, 2u, 4u}) {
        for (std::size_t d = 0; d < 4; ++d) {
            // Exactly zero, bit for bit: untouched rows never enter the graph.
            CHECK(grad.at2(row, d) == 0.0);
            CHECK_FALSE(std::signbit(grad.at2(row, d)));
        }
    }
    double touched = 0.0;
    for (std::size_t d = 0; d < 4; ++d) {
        touched += std::abs(grad.at2(1, d)) + std::abs(grad.at2(3, d));
    }
    CHECK(touched > 0.0);
}

TEST_CASE("model: gradient check over the whole network") {
    ModelConfig cfg = small_config();
    ParamSet params = init_federated_params(cfg, 21);
    Tensor emb = init_user_embedding(cfg, 21, "u007");
    params.add("user_embedding", emb);
    FeaturizedExample ex1{featurize_text("check the gradients", cfg.ngram_n, cfg.hash_dim), 2};
    FeaturizedExample ex2{featurize_text("one more example", cfg.ngram_n, cfg.hash_dim), 0};

    auto build = [&](Graph& g, const ParamSet& p) {
        ParamSet fed;
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
            fed.add(p.name(i), p.tensor(i));
        }
        register_federated_leaves(g, fed);
        NodeId e = g.parameter("user_embedding", p.at("user_embedding"));
        NodeId l1 = build_logits(g, cfg, e, ex1.features);
        NodeId l2 = build_logits(g, cfg, e, ex2.features);
        return g.mean_of({g.cross_entropy(l1, ex1.label), g.cross_entropy(l2, ex2.label)});
    };
    CHECK(grad_check(build, params, 1e-6) <= 1e-5);
}
