#include "fedsplit/text_features.hpp"

#include <cmath>

#include "fedsplit/rng.hpp"

namespace fedsplit {

Tensor featurize_text(std::string_view text, int ngram_n, int hash_dim) {
    if (ngram_n < 1) throw ContractError("featurize_text: ngram_n must be >= 1");
    if (hash_dim < 1) throw ContractError("featurize_text: hash_dim must be >= 1");

    Tensor v({static_cast<std::size_t>(hash_dim)});
    const std::size_t n = static_cast<std::size_t>(ngram_n);
    if (text.size() >= n) {
        for (std::size_t i = 0; i + n <= text.size(); ++i) {
            const std::uint64_t h = fnv1a64(text.substr(i, n));
            v[h % static_cast<std::uint64_t>(hash_dim)] += 1.0;
        }
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < v.numel(); ++i) sq += v[i] * v[i];
    if (sq > 0.0) {
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t i = 0; i < v.numel(); ++i) v[i] *= inv;
    }
    return v;
}

}  // namespace fedsplit
