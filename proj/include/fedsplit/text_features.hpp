#pragma once

#include <cstdint>
#include <string_view>

#include "fedsplit/tensor.hpp"

namespace fedsplit {

// L2-normalized counts of hashed character n-grams. The hash is FNV-1a
// 64-bit over the raw bytes of each n-gram, reduced modulo hash_dim.
// Deterministic; empty or too-short text maps to the zero vector.
Tensor featurize_text(std::string_view text, int ngram_n, int hash_dim);

}  // namespace fedsplit
