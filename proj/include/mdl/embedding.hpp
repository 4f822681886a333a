#pragma once

#include <cstdint>
#include <vector>

#include "mdl/mat.hpp"
#include "mdl/schema.hpp"
#include "mdl/tape.hpp"

namespace mdl {

/// Embedding matrix V plus the per-field column layout. Each vocab-backed
/// field owns d_i consecutive columns; a numeric-raw field owns one.
struct EmbeddingState {
  int k = 0;
  std::vector<int> offsets;     // start column per field, strictly increasing
  std::vector<int> widths;      // d_i per field
  std::vector<uint8_t> is_raw;  // numeric-raw flag per field
  Mat v;                        // k x (d_1 + ... + d_m)

  int field_count() const { return static_cast<int>(offsets.size()); }
  int total_cols() const { return v.cols; }
};

// Entries i.i.d. normal(0, scale^2), deterministic in seed.
EmbeddingState init_embeddings(const FieldSchema& schema, int k, uint64_t seed,
                               double scale = 0.01);

// Column selection for one instance: the one-hot pick per vocab-backed field,
// or the V column scaled by the raw value for numeric-raw fields.
std::vector<EmbedCol> embed_columns(const SparseInstance& inst, const EmbeddingState& state);

// E = [e_1, ..., e_m], k x m.
Mat embed(const SparseInstance& inst, const EmbeddingState& state);

}  // namespace mdl
