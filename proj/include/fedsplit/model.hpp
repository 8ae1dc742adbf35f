#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedsplit/graph.hpp"
#include "fedsplit/param_set.hpp"
#include "fedsplit/tensor.hpp"

namespace fedsplit {

// Text classifier: hashed-n-gram features concatenated with a per-user
// embedding -> MLP -> linear head. The embedding enters before the hidden
// layers so the network can model interactions between text and user; a
// head that only sees the embedding additively could never learn per-user
// label shifts. The MLP and head weights are federated (shared by every
// user); the embedding is each user's private parameter.
struct ModelConfig {
    int hash_dim = 1024;            // feature vector length
    int ngram_n = 2;                // character n-gram size
    int embed_dim = 8;              // user embedding length D
    std::vector<int> hidden_dims = {64};
    int num_classes = 1;            // 1 = binary via single logit, >1 = multiclass
    bool personalized = true;

    void validate() const;
    int head_inputs() const;        // width of the head's input
    bool binary() const { return num_classes == 1; }
};

// A labeled, featurized example as the model consumes it.
struct FeaturizedExample {
    Tensor features;   // [hash_dim], L2-normalized
    int label = 0;
};

// The federated/private split of the model's trainable parameters.
// `federated` has the same layout on every client and the server;
// `private_embeddings` holds w_p per user and never leaves its client.
struct ParameterPartition {
    ParamSet federated;
    std::map<std::string, Tensor> private_embeddings;  // user id -> [embed_dim]
};

// Seeded initialization. Weights are uniform in +-1/sqrt(fan_in); biases zero.
ParamSet init_federated_params(const ModelConfig& cfg, std::uint64_t seed);

// Per-user deterministic init, uniform in [-0.05, 0.05]. Keyed by the user id
// string so it does not depend on dataset ordering.
Tensor init_user_embedding(const ModelConfig& cfg, std::uint64_t seed,
                           const std::string& user_id);

// Registers every federated parameter as a named graph leaf, in layout order.
std::vector<NodeId> register_federated_leaves(Graph& g, const ParamSet& federated);

// Forward pass to logits given an already-created embedding node (either a
// private leaf or an embedding_lookup into a full table). The federated
// leaves must already be registered on the graph. Keeps gradients for
// everything that was registered as a parameter leaf.
NodeId build_logits(Graph& g, const ModelConfig& cfg, NodeId embedding,
                    const Tensor& features);

// Mean per-example loss over a batch for one user, with the user's embedding
// as a leaf named "user_embedding".
NodeId build_local_loss(Graph& g, const ModelConfig& cfg, const ParamSet& federated,
                        const Tensor& user_embedding,
                        const std::vector<const FeaturizedExample*>& batch);

// Mean per-example loss over a mixed-user batch. The whole embedding table
// (one row per user ordinal) is the leaf "user_embeddings"; each example
// looks up its own row. Pairs are (user ordinal, example).
NodeId build_pooled_loss(Graph& g, const ModelConfig& cfg, const ParamSet& federated,
                         const Tensor& embedding_table,
                         const std::vector<std::pair<int, const FeaturizedExample*>>& batch);

// Convenience forward: logits for one example.
Tensor predict(const ModelConfig& cfg, const ParamSet& federated,
               const Tensor& user_embedding, const Tensor& features);

// Mean loss value over a nonempty batch (no training).
double local_loss(const ModelConfig& cfg, const ParamSet& federated,
                  const Tensor& user_embedding,
                  const std::vector<const FeaturizedExample*>& batch);

}  // namespace fedsplit
