#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace mdl {

enum class FieldKind { kCategorical, kNumericBinned, kNumericRaw };

std::string field_kind_name(FieldKind k);
FieldKind field_kind_from_name(const std::string& s);

constexpr int kNoIndex = -1;

// Raw CSV cells that are empty are treated as this token and counted like
// any other (so frequent missingness earns its own feature).
inline const char* kMissingToken = "<missing>";
// Token assigned to negative values of numeric-binned fields.
inline const char* kNegativeToken = "neg";

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::kCategorical;
  int min_count = 0;
  std::unordered_map<std::string, int> vocab;  // raw token -> feature index
  int rare_index = kNoIndex;  // allocated only if some token was aggregated
  int oov_index = kNoIndex;   // always allocated for vocab-backed fields
  int cardinality = 0;        // d_i; 1 for numeric-raw
};

struct FieldDecl {
  std::string name;
  FieldKind kind = FieldKind::kCategorical;
  int min_count = 0;
};

struct FieldSchema {
  std::vector<FieldSpec> fields;

  int field_count() const { return static_cast<int>(fields.size()); }
  int total_features() const;
  uint64_t content_hash() const;

  std::string to_text() const;
  static FieldSchema from_text(const std::string& text);
  void save(const std::string& path) const;
  static FieldSchema load(const std::string& path);
};

// One value per field: a feature index (stored exactly in a double) for
// vocab-backed fields, or the raw numeric value for numeric-raw fields.
struct SparseInstance {
  std::vector<double> feature;
  double label = 0.0;

  uint32_t index(int field) const { return static_cast<uint32_t>(feature[field]); }
};

struct DatasetSplit {
  std::vector<SparseInstance> train;
  std::vector<SparseInstance> validation;
  std::vector<SparseInstance> test;
  uint64_t seed = 0;
};

// floor(ln(1 + v)) for v >= 0; rejects non-finite input. Negative values are
// handled in token space, see numeric_bin_token.
int log_bin_numeric(double v);
std::string numeric_bin_token(double v);

// Minimal RFC-4180-ish reader: quoted fields, "" escapes, UTF-8 passthrough.
class CsvReader {
 public:
  explicit CsvReader(const std::string& path);
  ~CsvReader();
  CsvReader(const CsvReader&) = delete;
  CsvReader& operator=(const CsvReader&) = delete;

  const std::vector<std::string>& header() const { return header_; }
  // Fills `row` with exactly header-width cells; throws on ragged rows,
  // naming the offending row number. Returns false at end of input.
  bool next(std::vector<std::string>& row);
  long row_number() const { return row_; }

 private:
  struct Impl;
  Impl* impl_;
  std::vector<std::string> header_;
  long row_ = 0;
};

std::vector<std::string> split_csv_line(const std::string& line);

// Two-pass construction: feed every training row, then finalize. Tokens seen
// fewer than min_count times collapse into one rare feature per field.
class SchemaBuilder {
 public:
  explicit SchemaBuilder(std::vector<FieldDecl> decls);

  // Resolves declared fields against the CSV header. label_col must exist and
  // may not be declared as a field.
  void bind_header(const std::vector<std::string>& header, const std::string& label_col);
  void add_row(const std::vector<std::string>& row, long row_number);
  FieldSchema finalize();

  int label_column() const { return label_col_; }
  const std::vector<int>& field_columns() const { return field_cols_; }

 private:
  std::vector<FieldDecl> decls_;
  std::vector<std::unordered_map<std::string, long>> counts_;
  std::vector<int> field_cols_;
  int label_col_ = -1;
  long rows_seen_ = 0;
  bool bound_ = false;
};

// Column binding of a schema against a CSV header (used when encoding).
struct ColumnBinding {
  std::vector<int> field_cols;
  int label_col = -1;
};
ColumnBinding bind_columns(const FieldSchema& schema, const std::vector<std::string>& header,
                           const std::string& label_col);

SparseInstance encode_instance(const std::vector<std::string>& row, const FieldSchema& schema,
                               const ColumnBinding& bind);

FieldSchema build_schema_from_csv(const std::string& path, const std::vector<FieldDecl>& decls,
                                  const std::string& label_col);
std::vector<SparseInstance> encode_csv(const std::string& path, const FieldSchema& schema,
                                       const std::string& label_col);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

// Deterministic shuffle + largest-remainder allocation; every instance lands
// in exactly one split and sizes are within one of the requested fractions.
DatasetSplit split_dataset(std::vector<SparseInstance> data, const SplitRatios& ratios,
                           uint64_t seed);

// Instance visit order for one epoch; a pure function of (n, seed, epoch).
std::vector<size_t> epoch_order(size_t n, uint64_t seed, uint64_t epoch);

struct BatchRange {
  size_t begin = 0;
  size_t end = 0;
  size_t size() const { return end - begin; }
};
std::vector<BatchRange> batch_ranges(size_t n, size_t batch_size);

// Length-prefixed binary instance cache keyed by the schema hash.
void write_cache(const std::string& path, const FieldSchema& schema,
                 const std::vector<SparseInstance>& instances);
std::vector<SparseInstance> read_cache(const std::string& path, const FieldSchema& schema);
bool cache_matches(const std::string& path, const FieldSchema& schema);

}  // namespace mdl
