#include "mdl/embedding.hpp"

#include <stdexcept>
#include <string>

#include "mdl/rng.hpp"

namespace mdl {

EmbeddingState init_embeddings(const FieldSchema& schema, int k, uint64_t seed, double scale) {
  if (k < 1) throw std::invalid_argument("embedding dimension k must be at least 1");
  EmbeddingState state;
  state.k = k;
  int offset = 0;
  for (const auto& f : schema.fields) {
    state.offsets.push_back(offset);
    state.widths.push_back(f.cardinality);
    state.is_raw.push_back(f.kind == FieldKind::kNumericRaw ? 1 : 0);
    offset += f.cardinality;
  }
  state.v.assign_zero(k, offset);
  Rng rng(mix_seed(seed, 0xe0bed));
  for (double& x : state.v.data) x = rng.normal(0.0, scale);
  return state;
}

std::vector<EmbedCol> embed_columns(const SparseInstance& inst, const EmbeddingState& state) {
  int m = state.field_count();
  if (static_cast<int>(inst.feature.size()) != m)
    throw std::invalid_argument("instance has " + std::to_string(inst.feature.size()) +
                                " fields, embedding expects " + std::to_string(m));
  std::vector<EmbedCol> cols(m);
  for (int f = 0; f < m; ++f) {
    if (state.is_raw[f]) {
      cols[f] = {state.offsets[f], inst.feature[f]};
    } else {
      uint32_t idx = inst.index(f);
      if (idx >= static_cast<uint32_t>(state.widths[f]))
        throw std::invalid_argument("field " + std::to_string(f) + ": feature index " +
                                    std::to_string(idx) + " out of range [0, " +
                                    std::to_string(state.widths[f]) + ")");
      cols[f] = {state.offsets[f] + static_cast<int>(idx), 1.0};
    }
  }
  return cols;
}

Mat embed(const SparseInstance& inst, const EmbeddingState& state) {
  std::vector<EmbedCol> cols = embed_columns(inst, state);
  int m = static_cast<int>(cols.size());
  Mat e(state.k, m);
  for (int f = 0; f < m; ++f)
    for (int r = 0; r < state.k; ++r) e.at(r, f) = cols[f].scale * state.v.at(r, cols[f].col);
  return e;
}

}  // namespace mdl
