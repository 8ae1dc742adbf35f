#include "fedsplit/model.hpp"

#include <cmath>

#include "fedsplit/rng.hpp"

namespace fedsplit {

namespace {

constexpr std::uint64_t kWeightSalt = 0x77656967687473ULL;  // "weights"
constexpr std::uint64_t kEmbedSalt = 0x656d626564ULL;       // "embed"

Tensor uniform_tensor(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

void ModelConfig::validate() const {
    if (hash_dim <= 0) throw ContractError("ModelConfig: hash_dim must be positive");
    if (ngram_n <= 0) throw ContractError("ModelConfig: ngram_n must be positive");
    if (embed_dim <= 0) throw ContractError("ModelConfig: embed_dim must be positive");
    if (num_classes < 1) throw ContractError("ModelConfig: num_classes must be >= 1");
    for (int h : hidden_dims) {
        if (h <= 0) throw ContractError("ModelConfig: hidden dims must be positive");
    }
}

int ModelConfig::head_inputs() const {
    return hidden_dims.empty() ? hash_dim + embed_dim : hidden_dims.back();
}

ParamSet init_federated_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamSet params;
    int in_dim = cfg.hash_dim + cfg.embed_dim;
    for (std::size_t layer = 0; layer < cfg.hidden_dims.size(); ++layer) {
        const int out_dim = cfg.hidden_dims[layer];
        Rng rng(derive_seed(seed, kWeightSalt, layer));
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
        const std::string stem = "mlp" + std::to_string(layer);
        params.add(stem + "/weight",
                   uniform_tensor(rng, {static_cast<std::size_t>(out_dim),
                                        static_cast<std::size_t>(in_dim)},
                                  -bound, bound));
        params.add(stem + "/bias", Tensor::zeros({static_cast<std::size_t>(out_dim)}));
        in_dim = out_dim;
    }
    const int head_in = cfg.head_inputs();
    Rng rng(derive_seed(seed, kWeightSalt, cfg.hidden_dims.size()));
    const double bound = 1.0 / std::sqrt(static_cast<double>(head_in));
    params.add("head/weight",
               uniform_tensor(rng, {static_cast<std::size_t>(cfg.num_classes),
                                    static_cast<std::size_t>(head_in)},
                              -bound, bound));
    params.add("head/bias", Tensor::zeros({static_cast<std::size_t>(cfg.num_classes)}));
    return params;
}

Tensor init_user_embedding(const ModelConfig& cfg, std::uint64_t seed,
                           const std::string& user_id) {
    if (!cfg.personalized) {
        return Tensor::zeros({static_cast<std::size_t>(cfg.embed_dim)});
    }
    Rng rng(derive_seed(seed, kEmbedSalt, fnv1a64(user_id)));
    return uniform_tensor(rng, {static_cast<std::size_t>(cfg.embed_dim)}, -0.05, 0.05);
}

std::vector<NodeId> register_federated_leaves(Graph& g, const ParamSet& federated) {
    std::vector<NodeId> leaves;
    leaves.reserve(federated.size());
    for (std::size_t i = 0; i < federated.size(); ++i) {
        leaves.push_back(g.parameter(federated.name(i), federated.tensor(i)));
    }
    return leaves;
}

NodeId build_logits(Graph& g, const ModelConfig& cfg, NodeId embedding,
                    const Tensor& features) {
    if (features.numel() != static_cast<std::size_t>(cfg.hash_dim)) {
        throw DimensionError("build_logits: feature vector " +
                             Tensor::shape_string(features.shape()) +
                             " does not match hash_dim " + std::to_string(cfg.hash_dim));
    }
    NodeId h = g.concat(g.input(features), embedding);
    for (std::size_t layer = 0; layer < cfg.hidden_dims.size(); ++layer) {
        const std::string stem = "mlp" + std::to_string(layer);
        h = g.relu(g.affine(h, g.parameter_node(stem + "/weight"),
                            g.parameter_node(stem + "/bias")));
    }
    return g.affine(h, g.parameter_node("head/weight"), g.parameter_node("head/bias"));
}

NodeId build_local_loss(Graph& g, const ModelConfig& cfg, const ParamSet& federated,
                        const Tensor& user_embedding,
                        const std::vector<const FeaturizedExample*>& batch) {
    if (batch.empty()) throw ContractError("build_local_loss: empty batch");
    register_federated_leaves(g, federated);
    NodeId emb = g.parameter("user_embedding", user_embedding);
    std::vector<NodeId> losses;
    losses.reserve(batch.size());
    for (const FeaturizedExample* ex : batch) {
        NodeId logits = build_logits(g, cfg, emb, ex->features);
        losses.push_back(cfg.binary() ? g.bce_with_logits(logits, ex->label)
                                      : g.cross_entropy(logits, ex->label));
    }
    return g.mean_of(losses);
}

NodeId build_pooled_loss(Graph& g, const ModelConfig& cfg, const ParamSet& federated,
                         const Tensor& embedding_table,
                         const std::vector<std::pair<int, const FeaturizedExample*>>& batch) {
    if (batch.empty()) throw ContractError("build_pooled_loss: empty batch");
    if (embedding_table.rank() != 2 ||
        embedding_table.cols() != static_cast<std::size_t>(cfg.embed_dim)) {
        throw DimensionError("build_pooled_loss: embedding table must be [users x " +
                             std::to_string(cfg.embed_dim) + "], got " +
                             Tensor::shape_string(embedding_table.shape()));
    }
    register_federated_leaves(g, federated);
    NodeId table = g.parameter("user_embeddings", embedding_table);
    std::vector<NodeId> losses;
    losses.reserve(batch.size());
    for (const auto& [ordinal, ex] : batch) {
        NodeId emb = g.embedding_lookup(table, static_cast<std::size_t>(ordinal));
        NodeId logits = build_logits(g, cfg, emb, ex->features);
        losses.push_back(cfg.binary() ? g.bce_with_logits(logits, ex->label)
                                      : g.cross_entropy(logits, ex->label));
    }
    return g.mean_of(losses);
}

Tensor predict(const ModelConfig& cfg, const ParamSet& federated,
               const Tensor& user_embedding, const Tensor& features) {
    Graph g;
    register_federated_leaves(g, federated);
    NodeId emb = g.parameter("user_embedding", user_embedding);
    NodeId logits = build_logits(g, cfg, emb, features);
    return g.value(logits);
}

double local_loss(const ModelConfig& cfg, const ParamSet& federated,
                  const Tensor& user_embedding,
                  const std::vector<const FeaturizedExample*>& batch) {
    Graph g;
    NodeId loss = build_local_loss(g, cfg, federated, user_embedding, batch);
    return g.value(loss)[0];
}

}  // namespace fedsplit
