#include "mdl/model.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mdl/dependency.hpp"

namespace mdl {

std::string task_name(TaskKind t) {
  return t == TaskKind::kBinary ? "binary" : "regression";
}
std::string mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kMdl: return "mdl";
    case TrainMode::kNoDep: return "no_dep";
    case TrainMode::kGlobalDep: return "global_dep";
  }
  return "?";
}
std::string optimizer_name(OptimizerKind o) {
  return o == OptimizerKind::kAdam ? "adam" : "adagrad";
}
TaskKind task_from_name(const std::string& s) {
  if (s == "binary") return TaskKind::kBinary;
  if (s == "regression") return TaskKind::kRegression;
  throw std::invalid_argument("unknown task: " + s);
}
TrainMode mode_from_name(const std::string& s) {
  if (s == "mdl") return TrainMode::kMdl;
  if (s == "no_dep") return TrainMode::kNoDep;
  if (s == "global_dep") return TrainMode::kGlobalDep;
  throw std::invalid_argument("unknown mode: " + s);
}
OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "adagrad") return OptimizerKind::kAdagrad;
  throw std::invalid_argument("unknown optimizer: " + s);
}

std::string format_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

void TrainConfig::validate() const {
  if (k < 1) throw std::invalid_argument("config: k must be >= 1");
  if (T < 0) throw std::invalid_argument("config: T must be >= 0");
  if (!(eta > 0)) throw std::invalid_argument("config: eta must be positive");
  if (!(gamma >= 0)) throw std::invalid_argument("config: gamma must be non-negative");
  if (!(lambda > 0)) throw std::invalid_argument("config: lambda must be positive");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("config: patience must be >= 1");
  if (!(init_scale >= 0)) throw std::invalid_argument("config: init_scale must be >= 0");
  if (!(clip_norm >= 0)) throw std::invalid_argument("config: clip_norm must be >= 0");
  if (threads < 0) throw std::invalid_argument("config: threads must be >= 0");
  if (mode == TrainMode::kGlobalDep && !(zeta >= 0))
    throw std::invalid_argument("config: zeta must be >= 0 for mode=global_dep");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_kv() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("k", std::to_string(k));
  kv.emplace_back("T", std::to_string(T));
  kv.emplace_back("eta", format_double(eta));
  kv.emplace_back("gamma", format_double(gamma));
  kv.emplace_back("lambda", format_double(lambda));
  kv.emplace_back("batch_size", std::to_string(batch_size));
  kv.emplace_back("optimizer", optimizer_name(optimizer));
  kv.emplace_back("epochs", std::to_string(epochs));
  kv.emplace_back("patience", std::to_string(patience));
  kv.emplace_back("seed", std::to_string(seed));
  kv.emplace_back("task", task_name(task));
  kv.emplace_back("mode", mode_name(mode));
  kv.emplace_back("zeta", format_double(zeta));
  kv.emplace_back("first_order", first_order ? "1" : "0");
  kv.emplace_back("mu0_ones", mu0_ones ? "1" : "0");
  kv.emplace_back("init_scale", format_double(init_scale));
  kv.emplace_back("clip_norm", format_double(clip_norm));
  kv.emplace_back("threads", std::to_string(threads));
  return kv;
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

double parse_double_kv(const std::string& v, const std::string& key) {
  char* end = nullptr;
  double d = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || !std::isfinite(d))
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  return d;
}

long parse_long_kv(const std::string& v, const std::string& key) {
  char* end = nullptr;
  long d = std::strtol(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size())
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  return d;
}

}  // namespace

void TrainConfig::apply_kv(const std::string& key, const std::string& value) {
  if (key == "k") k = static_cast<int>(parse_long_kv(value, key));
  else if (key == "T") T = static_cast<int>(parse_long_kv(value, key));
  else if (key == "eta") eta = parse_double_kv(value, key);
  else if (key == "gamma") gamma = parse_double_kv(value, key);
  else if (key == "lambda") lambda = parse_double_kv(value, key);
  else if (key == "batch_size") batch_size = static_cast<int>(parse_long_kv(value, key));
  else if (key == "optimizer") optimizer = optimizer_from_name(value);
  else if (key == "epochs") epochs = static_cast<int>(parse_long_kv(value, key));
  else if (key == "patience") patience = static_cast<int>(parse_long_kv(value, key));
  else if (key == "seed") seed = static_cast<uint64_t>(parse_long_kv(value, key));
  else if (key == "task") task = task_from_name(value);
  else if (key == "mode") mode = mode_from_name(value);
  else if (key == "zeta") zeta = parse_double_kv(value, key);
  else if (key == "first_order") first_order = parse_bool(value, key);
  else if (key == "mu0_ones") mu0_ones = parse_bool(value, key);
  else if (key == "init_scale") init_scale = parse_double_kv(value, key);
  else if (key == "clip_norm") clip_norm = parse_double_kv(value, key);
  else if (key == "threads") threads = static_cast<int>(parse_long_kv(value, key));
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig cfg;
  for (const auto& [key, value] : kv) cfg.apply_kv(key, value);
  cfg.validate();
  return cfg;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

Model init_model(const FieldSchema& schema, const TrainConfig& cfg) {
  cfg.validate();
  Model model;
  model.cfg = cfg;
  model.schema_hash = schema.content_hash();
  model.emb = init_embeddings(schema, cfg.k, cfg.seed, cfg.init_scale);
  int m = schema.field_count();
  model.w0 = fix_diag(Mat(m, m), -1.0);
  model.backbone = init_backbone(m, cfg.k, cfg.seed, cfg.init_scale);
  model.best_val = std::nan("");
  return model;
}

std::vector<Mat*> param_blocks(Model& model) {
  std::vector<Mat*> blocks{&model.emb.v, &model.w0, &model.backbone.phi};
  for (auto& layer : model.backbone.mlp) {
    blocks.push_back(&layer.w);
    blocks.push_back(&layer.b);
  }
  return blocks;
}

std::vector<const Mat*> param_blocks(const Model& model) {
  std::vector<const Mat*> blocks{&model.emb.v, &model.w0, &model.backbone.phi};
  for (const auto& layer : model.backbone.mlp) {
    blocks.push_back(&layer.w);
    blocks.push_back(&layer.b);
  }
  return blocks;
}

std::vector<std::string> param_block_names(const Model& model) {
  std::vector<std::string> names{"V", "W0", "Phi"};
  for (size_t l = 0; l < model.backbone.mlp.size(); ++l) {
    names.push_back("mlp" + std::to_string(l) + ".w");
    names.push_back("mlp" + std::to_string(l) + ".b");
  }
  return names;
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'M', 'D', 'L', '1'};

void require_le() {
  uint32_t probe = 1;
  char byte;
  std::memcpy(&byte, &probe, 1);
  if (byte != 1) throw std::runtime_error("checkpoint format requires a little-endian host");
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s.push_back(',');
    s += std::to_string(v[i]);
  }
  return s;
}

std::string join_ints(const std::vector<uint8_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s.push_back(',');
    s += std::to_string(static_cast<int>(v[i]));
  }
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, ',')) out.push_back(std::stoi(part));
  return out;
}

void write_block(std::ofstream& out, const Mat& m) {
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

void read_block(std::ifstream& in, Mat& m) {
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint parameter block");
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  require_le();
  std::ostringstream hdr;
  hdr << "schema_hash=" << model.schema_hash << '\n';
  for (const auto& [key, value] : model.cfg.to_kv()) hdr << key << '=' << value << '\n';
  hdr << "m=" << model.field_count() << '\n';
  hdr << "v_rows=" << model.emb.v.rows << '\n';
  hdr << "v_cols=" << model.emb.v.cols << '\n';
  hdr << "offsets=" << join_ints(model.emb.offsets) << '\n';
  hdr << "widths=" << join_ints(model.emb.widths) << '\n';
  hdr << "raw=" << join_ints(model.emb.is_raw) << '\n';
  hdr << "best_val=" << format_double(model.best_val) << '\n';
  hdr << "opt_state=" << (model.opt.present ? "1" : "0") << '\n';
  if (model.opt.present) {
    hdr << "opt_kind=" << optimizer_name(model.opt.kind) << '\n';
    hdr << "opt_step=" << model.opt.step << '\n';
  }
  std::string header = hdr.str();

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp);
    out.write(kCkptMagic, 4);
    uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    uint32_t hlen = static_cast<uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Mat* block : param_blocks(model)) write_block(out, *block);
    if (model.opt.present) {
      for (const Mat& m : model.opt.m1) write_block(out, m);
      if (model.opt.kind == OptimizerKind::kAdam)
        for (const Mat& m : model.opt.m2) write_block(out, m);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename checkpoint into place: " + path);
}

Model load_checkpoint(const std::string& path) {
  require_le();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  uint32_t version = 0, hlen = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (!in || version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw std::runtime_error("truncated checkpoint header");

  std::map<std::string, std::string> kv;
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad checkpoint header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }

  Model model;
  std::map<std::string, std::string> cfg_kv;
  static const char* cfg_keys[] = {"k", "T", "eta", "gamma", "lambda", "batch_size",
                                   "optimizer", "epochs", "patience", "seed", "task", "mode",
                                   "zeta", "first_order", "mu0_ones", "init_scale",
                                   "clip_norm", "threads"};
  for (const char* key : cfg_keys) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("checkpoint header missing key: " + std::string(key));
    cfg_kv[key] = it->second;
  }
  model.cfg = TrainConfig::from_kv(cfg_kv);
  model.schema_hash = std::stoull(kv.at("schema_hash"));
  model.best_val = std::strtod(kv.at("best_val").c_str(), nullptr);

  int m = std::stoi(kv.at("m"));
  int v_rows = std::stoi(kv.at("v_rows"));
  int v_cols = std::stoi(kv.at("v_cols"));
  model.emb.k = v_rows;
  model.emb.offsets = split_ints(kv.at("offsets"));
  model.emb.widths = split_ints(kv.at("widths"));
  for (int f : split_ints(kv.at("raw"))) model.emb.is_raw.push_back(static_cast<uint8_t>(f));
  model.emb.v.assign_zero(v_rows, v_cols);
  model.w0.assign_zero(m, m);
  model.backbone.m = m;
  model.backbone.k = v_rows;
  model.backbone.phi.assign_zero(model.backbone.pair_count() * v_rows, v_rows);
  int in_w = model.backbone.input_width();
  for (int l = 0; l < kMlpHiddenLayers + 1; ++l) {
    MlpLayer layer;
    int out_w = l < kMlpHiddenLayers ? kMlpHiddenWidth : 1;
    layer.w.assign_zero(out_w, in_w);
    layer.b.assign_zero(out_w, 1);
    model.backbone.mlp.push_back(std::move(layer));
    in_w = out_w;
  }
  for (Mat* block : param_blocks(model)) read_block(in, *block);

  model.opt.present = kv.at("opt_state") == "1";
  if (model.opt.present) {
    model.opt.kind = optimizer_from_name(kv.at("opt_kind"));
    model.opt.step = std::stol(kv.at("opt_step"));
    for (const Mat* block : param_blocks(model)) {
      model.opt.m1.emplace_back(block->rows, block->cols);
    }
    for (Mat& mat : model.opt.m1) read_block(in, mat);
    if (model.opt.kind == OptimizerKind::kAdam) {
      for (const Mat* block : param_blocks(model))
        model.opt.m2.emplace_back(block->rows, block->cols);
      for (Mat& mat : model.opt.m2) read_block(in, mat);
    }
  }
  return model;
}

double predict_logit(const Model& model, const SparseInstance& inst) {
  Mat e = embed(inst, model.emb);
  const TrainConfig& cfg = model.cfg;
  switch (cfg.mode) {
    case TrainMode::kMdl: {
      RefineResult r = refine(e, model.w0, cfg.T, cfg.eta, cfg.lambda, cfg.mu0_ones);
      return backbone_forward(e, r.w, r.mu, model.backbone, cfg.lambda);
    }
    case TrainMode::kNoDep: {
      Mat zeros(model.field_count() * model.field_count(), 1);
      return backbone_forward(e, zeros, model.backbone);
    }
    case TrainMode::kGlobalDep: {
      Mat mu0 = initial_mu(model.field_count(), cfg.lambda, cfg.mu0_ones);
      return backbone_forward(e, model.w0, mu0, model.backbone, cfg.lambda);
    }
  }
  throw std::logic_error("predict_logit: unhandled mode");
}

}  // namespace mdl
