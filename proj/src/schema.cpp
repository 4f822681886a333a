#include "mdl/schema.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mdl/rng.hpp"

namespace mdl {

std::string field_kind_name(FieldKind k) {
  switch (k) {
    case FieldKind::kCategorical: return "categorical";
    case FieldKind::kNumericBinned: return "numeric-binned";
    case FieldKind::kNumericRaw: return "numeric-raw";
  }
  return "?";
}

FieldKind field_kind_from_name(const std::string& s) {
  if (s == "categorical") return FieldKind::kCategorical;
  if (s == "numeric-binned") return FieldKind::kNumericBinned;
  if (s == "numeric-raw") return FieldKind::kNumericRaw;
  throw std::invalid_argument("unknown field kind: " + s);
}

int FieldSchema::total_features() const {
  int total = 0;
  for (const auto& f : fields) total += f.cardinality;
  return total;
}

namespace {

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double parse_full_double(const std::string& s, const std::string& field) {
  if (s.empty()) throw std::invalid_argument("empty numeric value in field '" + field + "'");
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + s.size())
    throw std::invalid_argument("malformed numeric value '" + s + "' in field '" + field + "'");
  if (!std::isfinite(v))
    throw std::invalid_argument("non-finite numeric value '" + s + "' in field '" + field + "'");
  return v;
}

void check_token(const std::string& tok, const std::string& field) {
  if (tok.find_first_of("\t\n\r") != std::string::npos)
    throw std::invalid_argument("token with tab/newline in field '" + field +
                                "' cannot be represented in the schema file");
}

}  // namespace

uint64_t FieldSchema::content_hash() const { return fnv1a64(to_text()); }

int log_bin_numeric(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("log_bin_numeric: non-finite input");
  double clamped = v > 0.0 ? v : 0.0;
  return static_cast<int>(std::floor(std::log1p(clamped)));
}

std::string numeric_bin_token(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("numeric_bin_token: non-finite input");
  if (v < 0.0) return kNegativeToken;
  return std::to_string(log_bin_numeric(v));
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

struct CsvReader::Impl {
  std::ifstream in;
  std::string line;
};

CsvReader::CsvReader(const std::string& path) : impl_(new Impl) {
  impl_->in.open(path);
  if (!impl_->in) {
    delete impl_;
    throw std::runtime_error("cannot open CSV file: " + path);
  }
  if (!std::getline(impl_->in, impl_->line)) {
    delete impl_;
    throw std::invalid_argument("empty CSV file: " + path);
  }
  if (!impl_->line.empty() && impl_->line.back() == '\r') impl_->line.pop_back();
  header_ = split_csv_line(impl_->line);
  row_ = 0;
}

CsvReader::~CsvReader() { delete impl_; }

bool CsvReader::next(std::vector<std::string>& row) {
  if (!std::getline(impl_->in, impl_->line)) return false;
  if (!impl_->line.empty() && impl_->line.back() == '\r') impl_->line.pop_back();
  ++row_;
  row = split_csv_line(impl_->line);
  if (row.size() != header_.size())
    throw std::invalid_argument("row " + std::to_string(row_) + ": expected " +
                                std::to_string(header_.size()) + " columns, got " +
                                std::to_string(row.size()));
  return true;
}

// ---------------------------------------------------------------------------
// Schema building
// ---------------------------------------------------------------------------

SchemaBuilder::SchemaBuilder(std::vector<FieldDecl> decls) : decls_(std::move(decls)) {
  if (decls_.size() < 2)
    throw std::invalid_argument("schema needs at least two fields, got " +
                                std::to_string(decls_.size()));
  for (size_t i = 0; i < decls_.size(); ++i)
    for (size_t j = i + 1; j < decls_.size(); ++j)
      if (decls_[i].name == decls_[j].name)
        throw std::invalid_argument("duplicate field name: " + decls_[i].name);
  counts_.resize(decls_.size());
}

void SchemaBuilder::bind_header(const std::vector<std::string>& header,
                                const std::string& label_col) {
  field_cols_.assign(decls_.size(), -1);
  label_col_ = -1;
  for (size_t c = 0; c < header.size(); ++c) {
    if (header[c] == label_col) label_col_ = static_cast<int>(c);
    for (size_t f = 0; f < decls_.size(); ++f)
      if (header[c] == decls_[f].name) field_cols_[f] = static_cast<int>(c);
  }
  if (label_col_ < 0)
    throw std::invalid_argument("label column '" + label_col + "' not found in header");
  for (size_t f = 0; f < decls_.size(); ++f)
    if (field_cols_[f] < 0)
      throw std::invalid_argument("declared field '" + decls_[f].name + "' not found in header");
  bound_ = true;
}

void SchemaBuilder::add_row(const std::vector<std::string>& row, long row_number) {
  if (!bound_) throw std::invalid_argument("bind_header must run before add_row");
  for (size_t f = 0; f < decls_.size(); ++f) {
    const std::string& raw = row[field_cols_[f]];
    switch (decls_[f].kind) {
      case FieldKind::kCategorical: {
        const std::string& tok = raw.empty() ? kMissingToken : raw;
        check_token(tok, decls_[f].name);
        ++counts_[f][tok];
        break;
      }
      case FieldKind::kNumericBinned: {
        std::string tok;
        if (raw.empty()) {
          tok = kMissingToken;
        } else {
          try {
            tok = numeric_bin_token(parse_full_double(raw, decls_[f].name));
          } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("row " + std::to_string(row_number) + ": " + e.what());
          }
        }
        ++counts_[f][tok];
        break;
      }
      case FieldKind::kNumericRaw:
        if (!raw.empty()) parse_full_double(raw, decls_[f].name);  // validate only
        break;
    }
  }
  ++rows_seen_;
}

FieldSchema SchemaBuilder::finalize() {
  if (rows_seen_ == 0) throw std::invalid_argument("no input rows: cannot build schema");
  FieldSchema schema;
  schema.fields.resize(decls_.size());
  for (size_t f = 0; f < decls_.size(); ++f) {
    FieldSpec& spec = schema.fields[f];
    spec.name = decls_[f].name;
    spec.kind = decls_[f].kind;
    spec.min_count = decls_[f].min_count;
    if (spec.kind == FieldKind::kNumericRaw) {
      spec.cardinality = 1;
      continue;
    }
    // Survivors get indices in lexicographic order, then the rare bucket
    // (only if some token fell below min_count), then the OOV slot.
    std::map<std::string, long> ordered(counts_[f].begin(), counts_[f].end());
    std::vector<const std::string*> rare;
    int next = 0;
    for (const auto& [tok, cnt] : ordered) {
      if (cnt < spec.min_count)
        rare.push_back(&tok);
      else
        spec.vocab[tok] = next++;
    }
    if (!rare.empty()) {
      spec.rare_index = next++;
      for (const std::string* tok : rare) spec.vocab[*tok] = spec.rare_index;
    }
    spec.oov_index = next++;
    spec.cardinality = next;
  }
  return schema;
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

ColumnBinding bind_columns(const FieldSchema& schema, const std::vector<std::string>& header,
                           const std::string& label_col) {
  ColumnBinding b;
  b.field_cols.assign(schema.fields.size(), -1);
  for (size_t c = 0; c < header.size(); ++c) {
    if (header[c] == label_col) b.label_col = static_cast<int>(c);
    for (size_t f = 0; f < schema.fields.size(); ++f)
      if (header[c] == schema.fields[f].name) b.field_cols[f] = static_cast<int>(c);
  }
  if (b.label_col < 0)
    throw std::invalid_argument("label column '" + label_col + "' not found in header");
  for (size_t f = 0; f < schema.fields.size(); ++f)
    if (b.field_cols[f] < 0)
      throw std::invalid_argument("schema field '" + schema.fields[f].name +
                                  "' not found in header");
  return b;
}

SparseInstance encode_instance(const std::vector<std::string>& row, const FieldSchema& schema,
                               const ColumnBinding& bind) {
  SparseInstance inst;
  inst.feature.resize(schema.fields.size());
  for (size_t f = 0; f < schema.fields.size(); ++f) {
    const FieldSpec& spec = schema.fields[f];
    const std::string& raw = row[bind.field_cols[f]];
    switch (spec.kind) {
      case FieldKind::kCategorical: {
        const std::string& tok = raw.empty() ? kMissingToken : raw;
        auto it = spec.vocab.find(tok);
        inst.feature[f] = it != spec.vocab.end() ? it->second : spec.oov_index;
        break;
      }
      case FieldKind::kNumericBinned: {
        std::string tok =
            raw.empty() ? kMissingToken : numeric_bin_token(parse_full_double(raw, spec.name));
        auto it = spec.vocab.find(tok);
        inst.feature[f] = it != spec.vocab.end() ? it->second : spec.oov_index;
        break;
      }
      case FieldKind::kNumericRaw:
        inst.feature[f] = raw.empty() ? 0.0 : parse_full_double(raw, spec.name);
        break;
    }
  }
  inst.label = parse_full_double(row[bind.label_col], "label");
  return inst;
}

FieldSchema build_schema_from_csv(const std::string& path, const std::vector<FieldDecl>& decls,
                                  const std::string& label_col) {
  CsvReader reader(path);
  SchemaBuilder builder(decls);
  builder.bind_header(reader.header(), label_col);
  std::vector<std::string> row;
  while (reader.next(row)) builder.add_row(row, reader.row_number());
  return builder.finalize();
}

std::vector<SparseInstance> encode_csv(const std::string& path, const FieldSchema& schema,
                                       const std::string& label_col) {
  CsvReader reader(path);
  ColumnBinding bind = bind_columns(schema, reader.header(), label_col);
  std::vector<SparseInstance> out;
  std::vector<std::string> row;
  while (reader.next(row)) {
    try {
      out.push_back(encode_instance(row, schema, bind));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("row " + std::to_string(reader.row_number()) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schema file
// ---------------------------------------------------------------------------

std::string FieldSchema::to_text() const {
  std::ostringstream os;
  os << "# mdl-schema v1\n";
  os << "# numeric-binned: floor(ln(1+v)), negatives -> \"" << kNegativeToken << "\"\n";
  for (const auto& f : fields) {
    os << f.name << '\t' << field_kind_name(f.kind) << '\t' << f.min_count << '\t'
       << f.cardinality << '\n';
    if (f.kind == FieldKind::kNumericRaw) continue;
    os << "#special\t" << f.rare_index << '\t' << f.oov_index << '\n';
    std::vector<std::pair<std::string, int>> entries(f.vocab.begin(), f.vocab.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    for (const auto& [tok, idx] : entries) os << tok << '\t' << idx << '\n';
  }
  return os.str();
}

FieldSchema FieldSchema::from_text(const std::string& text) {
  FieldSchema schema;
  std::istringstream is(text);
  std::string line;
  FieldSpec* cur = nullptr;
  long lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("#special\t", 0) == 0) {
      if (!cur) throw std::invalid_argument("schema line " + std::to_string(lineno) +
                                            ": #special before any field");
      std::vector<std::string> parts;
      std::istringstream ls(line);
      std::string p;
      while (std::getline(ls, p, '\t')) parts.push_back(p);
      if (parts.size() != 3)
        throw std::invalid_argument("schema line " + std::to_string(lineno) + ": bad #special");
      cur->rare_index = std::stoi(parts[1]);
      cur->oov_index = std::stoi(parts[2]);
      continue;
    }
    if (line[0] == '#') continue;
    size_t tabs = static_cast<size_t>(std::count(line.begin(), line.end(), '\t'));
    if (tabs == 3) {
      std::istringstream ls(line);
      std::string name, kind, min_count, card;
      std::getline(ls, name, '\t');
      std::getline(ls, kind, '\t');
      std::getline(ls, min_count, '\t');
      std::getline(ls, card, '\t');
      FieldSpec spec;
      spec.name = name;
      spec.kind = field_kind_from_name(kind);
      spec.min_count = std::stoi(min_count);
      spec.cardinality = std::stoi(card);
      schema.fields.push_back(std::move(spec));
      cur = &schema.fields.back();
    } else if (tabs == 1) {
      if (!cur) throw std::invalid_argument("schema line " + std::to_string(lineno) +
                                            ": vocab entry before any field");
      size_t tab = line.find('\t');
      cur->vocab[line.substr(0, tab)] = std::stoi(line.substr(tab + 1));
    } else {
      throw std::invalid_argument("schema line " + std::to_string(lineno) + ": cannot parse");
    }
  }
  if (schema.fields.empty()) throw std::invalid_argument("schema file has no fields");
  return schema;
}

void FieldSchema::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write schema file: " + path);
  out << to_text();
  if (!out) throw std::runtime_error("failed writing schema file: " + path);
}

FieldSchema FieldSchema::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open schema file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

// ---------------------------------------------------------------------------
// Splits and batches
// ---------------------------------------------------------------------------

DatasetSplit split_dataset(std::vector<SparseInstance> data, const SplitRatios& ratios,
                           uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("split_dataset: empty input");
  double sum = ratios.train + ratios.validation + ratios.test;
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");

  size_t n = data.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5011));
  rng.shuffle(order);

  // largest-remainder allocation over the three splits
  double want[3] = {ratios.train * n, ratios.validation * n, ratios.test * n};
  size_t count[3];
  double frac[3];
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    count[i] = static_cast<size_t>(std::floor(want[i]));
    frac[i] = want[i] - static_cast<double>(count[i]);
    assigned += count[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (frac[i] > frac[best]) best = i;
    ++count[best];
    frac[best] = -1.0;
    ++assigned;
  }

  DatasetSplit split;
  split.seed = seed;
  split.train.reserve(count[0]);
  split.validation.reserve(count[1]);
  split.test.reserve(count[2]);
  size_t pos = 0;
  for (size_t i = 0; i < count[0]; ++i) split.train.push_back(std::move(data[order[pos++]]));
  for (size_t i = 0; i < count[1]; ++i) split.validation.push_back(std::move(data[order[pos++]]));
  for (size_t i = 0; i < count[2]; ++i) split.test.push_back(std::move(data[order[pos++]]));
  return split;
}

std::vector<size_t> epoch_order(size_t n, uint64_t seed, uint64_t epoch) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x9e0 + epoch));
  rng.shuffle(order);
  return order;
}

std::vector<BatchRange> batch_ranges(size_t n, size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  std::vector<BatchRange> out;
  for (size_t begin = 0; begin < n; begin += batch_size)
    out.push_back({begin, std::min(n, begin + batch_size)});
  return out;
}

// ---------------------------------------------------------------------------
// Binary cache
// ---------------------------------------------------------------------------

namespace {

constexpr char kCacheMagic[4] = {'M', 'D', 'L', 'C'};
constexpr uint32_t kCacheVersion = 1;

void require_little_endian() {
  uint32_t probe = 1;
  char byte;
  std::memcpy(&byte, &probe, 1);
  if (byte != 1) throw std::runtime_error("binary cache requires a little-endian host");
}

template <class T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated cache file");
  return v;
}

}  // namespace

void write_cache(const std::string& path, const FieldSchema& schema,
                 const std::vector<SparseInstance>& instances) {
  require_little_endian();
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cache file: " + tmp);
    out.write(kCacheMagic, 4);
    write_pod(out, kCacheVersion);
    write_pod(out, schema.content_hash());
    uint32_t m = static_cast<uint32_t>(schema.fields.size());
    write_pod(out, m);
    for (const auto& f : schema.fields)
      write_pod<uint8_t>(out, f.kind == FieldKind::kNumericRaw ? 1 : 0);
    write_pod<uint64_t>(out, instances.size());
    for (const auto& inst : instances) {
      for (uint32_t f = 0; f < m; ++f) {
        if (schema.fields[f].kind == FieldKind::kNumericRaw)
          write_pod<double>(out, inst.feature[f]);
        else
          write_pod<uint32_t>(out, inst.index(f));
      }
      write_pod<double>(out, inst.label);
    }
    if (!out) throw std::runtime_error("failed writing cache file: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename cache file into place: " + path);
}

std::vector<SparseInstance> read_cache(const std::string& path, const FieldSchema& schema) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open cache file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCacheMagic, 4) != 0)
    throw std::runtime_error("bad cache magic in " + path);
  uint32_t version = read_pod<uint32_t>(in);
  if (version != kCacheVersion)
    throw std::runtime_error("unsupported cache version " + std::to_string(version));
  uint64_t hash = read_pod<uint64_t>(in);
  if (hash != schema.content_hash())
    throw std::runtime_error("cache was built for a different schema (hash mismatch)");
  uint32_t m = read_pod<uint32_t>(in);
  if (m != schema.fields.size()) throw std::runtime_error("cache field count mismatch");
  std::vector<uint8_t> raw_flags(m);
  for (uint32_t f = 0; f < m; ++f) raw_flags[f] = read_pod<uint8_t>(in);
  uint64_t count = read_pod<uint64_t>(in);
  std::vector<SparseInstance> out;
  out.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    SparseInstance inst;
    inst.feature.resize(m);
    for (uint32_t f = 0; f < m; ++f) {
      if (raw_flags[f])
        inst.feature[f] = read_pod<double>(in);
      else
        inst.feature[f] = read_pod<uint32_t>(in);
    }
    inst.label = read_pod<double>(in);
    out.push_back(std::move(inst));
  }
  return out;
}

bool cache_matches(const std::string& path, const FieldSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCacheMagic, 4) != 0) return false;
  uint32_t version;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  uint64_t hash;
  in.read(reinterpret_cast<char*>(&hash), sizeof hash);
  return in && version == kCacheVersion && hash == schema.content_hash();
}

}  // namespace mdl
