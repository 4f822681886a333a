#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdl/dependency.hpp"
#include "mdl/eval.hpp"
#include "mdl/model.hpp"
#include "mdl/schema.hpp"
#include "mdl/trainer.hpp"

namespace {

using namespace mdl;

std::vector<FieldDecl> parse_field_decls(const std::vector<std::string>& specs,
                                         int default_min_count) {
  std::vector<FieldDecl> decls;
  for (const std::string& spec : specs) {
    // name[:kind[:min_count]]
    FieldDecl d;
    d.min_count = default_min_count;
    size_t c1 = spec.find(':');
    if (c1 == std::string::npos) {
      d.name = spec;
    } else {
      d.name = spec.substr(0, c1);
      size_t c2 = spec.find(':', c1 + 1);
      std::string kind = spec.substr(c1 + 1, c2 == std::string::npos ? std::string::npos
                                                                     : c2 - c1 - 1);
      d.kind = field_kind_from_name(kind);
      if (c2 != std::string::npos) d.min_count = std::stoi(spec.substr(c2 + 1));
    }
    decls.push_back(std::move(d));
  }
  return decls;
}

void print_config(const TrainConfig& cfg) {
  std::cout << "# config:";
  for (const auto& [k, v] : cfg.to_kv()) std::cout << ' ' << k << '=' << v;
  std::cout << '\n';
}

std::vector<SparseInstance> load_instances(const std::string& csv_path,
                                           const std::string& cache_path,
                                           const FieldSchema& schema,
                                           const std::string& label_col) {
  if (!cache_path.empty() && cache_matches(cache_path, schema)) {
    std::cout << "# cache hit: " << cache_path << '\n';
    return read_cache(cache_path, schema);
  }
  std::vector<SparseInstance> insts = encode_csv(csv_path, schema, label_col);
  if (!cache_path.empty()) {
    write_cache(cache_path, schema, insts);
    std::cout << "# cache written: " << cache_path << '\n';
  }
  return insts;
}

Model load_model_checked(const std::string& model_path, const FieldSchema& schema) {
  Model model = load_checkpoint(model_path);
  if (model.schema_hash != schema.content_hash())
    throw std::invalid_argument("schema hash mismatch: checkpoint was trained with a "
                                "different schema");
  return model;
}

SplitRatios parse_ratios(const std::string& s) {
  SplitRatios r;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &r.train, &r.validation, &r.test) != 3)
    throw std::invalid_argument("bad --ratios, expected three comma-separated numbers");
  return r;
}

int run(int argc, char** argv) {
  CLI::App app{"Field-dependency learner for sparse categorical data"};
  app.require_subcommand(1);
  app.set_version_flag("--version",
                       "checkpoint format v" + std::to_string(kCheckpointVersion));

  // ---- build-schema ----
  auto* cmd_schema = app.add_subcommand("build-schema", "Build a field schema from CSV");
  std::string bs_data, bs_out, bs_label = "label";
  std::vector<std::string> bs_fields;
  bool bs_auto = false;
  int bs_min_count = 1;
  cmd_schema->add_option("--data", bs_data, "input CSV with header")->required();
  cmd_schema->add_option("--out", bs_out, "schema file to write")->required();
  cmd_schema->add_option("--label", bs_label, "label column name");
  cmd_schema->add_option("--field", bs_fields,
                         "field declaration name[:kind[:min_count]]; repeatable");
  cmd_schema->add_flag("--auto-categorical", bs_auto,
                       "declare every non-label column as categorical");
  cmd_schema->add_option("--min-count", bs_min_count,
                         "default aggregation threshold for rare features");

  // ---- train ----
  auto* cmd_train = app.add_subcommand("train", "Train a model");
  std::string tr_data, tr_val, tr_schema, tr_out, tr_config, tr_cache, tr_log;
  std::string tr_label = "label", tr_ratios = "0.8,0.1,0.1";
  TrainConfig tr_cfg;
  cmd_train->add_option("--data", tr_data, "training CSV")->required();
  cmd_train->add_option("--val-data", tr_val,
                        "validation CSV (otherwise --data is split by --ratios)");
  cmd_train->add_option("--schema", tr_schema, "schema file")->required();
  cmd_train->add_option("--out", tr_out, "checkpoint to write")->required();
  cmd_train->add_option("--config", tr_config, "key=value config file");
  cmd_train->add_option("--cache", tr_cache, "binary instance cache path");
  cmd_train->add_option("--log", tr_log, "epoch log file (stdout otherwise)");
  cmd_train->add_option("--label", tr_label, "label column name");
  cmd_train->add_option("--ratios", tr_ratios, "train,val,test split fractions");
  double tr_eta = 0, tr_gamma = 0, tr_lambda = 0, tr_zeta = 0, tr_scale = 0, tr_clip = 0;
  int tr_k = 0, tr_T = 0, tr_batch = 0, tr_epochs = 0, tr_patience = 0, tr_threads = 0;
  std::string tr_opt, tr_task, tr_mode;
  uint64_t tr_seed = 0;
  bool tr_first_order = false, tr_mu0_ones = false;
  auto* o_k = cmd_train->add_option("--k", tr_k, "embedding dimension");
  auto* o_T = cmd_train->add_option("--T", tr_T, "inner-loop steps");
  auto* o_eta = cmd_train->add_option("--eta", tr_eta, "inner step size");
  auto* o_gamma = cmd_train->add_option("--gamma", tr_gamma, "outer learning rate");
  auto* o_lambda = cmd_train->add_option("--lambda", tr_lambda, "simplex budget");
  auto* o_batch = cmd_train->add_option("--batch-size", tr_batch, "mini-batch size");
  auto* o_opt = cmd_train->add_option("--optimizer", tr_opt, "adam|adagrad");
  auto* o_epochs = cmd_train->add_option("--epochs", tr_epochs, "max epochs");
  auto* o_patience = cmd_train->add_option("--patience", tr_patience, "early-stop patience");
  auto* o_seed = cmd_train->add_option("--seed", tr_seed, "random seed");
  auto* o_task = cmd_train->add_option("--task", tr_task, "binary|regression");
  auto* o_mode = cmd_train->add_option("--mode", tr_mode, "mdl|no_dep|global_dep");
  auto* o_zeta = cmd_train->add_option("--zeta", tr_zeta, "global-dep regularizer weight");
  auto* o_fo = cmd_train->add_flag("--first-order", tr_first_order,
                                   "first-order outer gradients");
  auto* o_m1 = cmd_train->add_flag("--mu0-ones", tr_mu0_ones, "start mu at all-ones");
  auto* o_scale = cmd_train->add_option("--init-scale", tr_scale, "init stddev");
  auto* o_clip = cmd_train->add_option("--clip-norm", tr_clip, "gradient clip (0 = off)");
  auto* o_threads = cmd_train->add_option("--threads", tr_threads, "worker threads");

  // ---- evaluate ----
  auto* cmd_eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on a CSV");
  std::string ev_model, ev_schema, ev_data, ev_out, ev_label = "label", ev_cache;
  cmd_eval->add_option("--model", ev_model)->required();
  cmd_eval->add_option("--schema", ev_schema)->required();
  cmd_eval->add_option("--data", ev_data)->required();
  cmd_eval->add_option("--label", ev_label, "label column name");
  cmd_eval->add_option("--cache", ev_cache, "binary instance cache path");
  cmd_eval->add_option("--out", ev_out, "also write the report here");

  // ---- predict ----
  auto* cmd_pred = app.add_subcommand("predict", "Write per-row scores");
  std::string pr_model, pr_schema, pr_data, pr_out, pr_label = "label";
  cmd_pred->add_option("--model", pr_model)->required();
  cmd_pred->add_option("--schema", pr_schema)->required();
  cmd_pred->add_option("--data", pr_data)->required();
  cmd_pred->add_option("--out", pr_out, "predictions CSV")->required();
  cmd_pred->add_option("--label", pr_label, "label column name");

  // ---- dump-deps ----
  auto* cmd_dump = app.add_subcommand("dump-deps", "Export dependency matrices for one row");
  std::string dd_model, dd_schema, dd_data, dd_out, dd_label = "label";
  long dd_row = 0;
  cmd_dump->add_option("--model", dd_model)->required();
  cmd_dump->add_option("--schema", dd_schema)->required();
  cmd_dump->add_option("--data", dd_data)->required();
  cmd_dump->add_option("--row", dd_row, "0-based row index");
  cmd_dump->add_option("--out", dd_out, "output CSV")->required();
  cmd_dump->add_option("--label", dd_label, "label column name");

  // ---- project-simplex ----
  auto* cmd_proj = app.add_subcommand("project-simplex",
                                      "Project a vector read from stdin onto the simplex");
  double ps_lambda = 1.0;
  std::string ps_input;
  cmd_proj->add_option("--lambda", ps_lambda, "simplex budget")->required();
  cmd_proj->add_option("--input", ps_input, "whitespace-separated values (stdin otherwise)");

  CLI11_PARSE(app, argc, argv);

  if (cmd_schema->parsed()) {
    CsvReader reader(bs_data);
    std::vector<FieldDecl> decls;
    if (bs_auto) {
      for (const std::string& col : reader.header())
        if (col != bs_label) decls.push_back({col, FieldKind::kCategorical, bs_min_count});
    }
    for (auto& d : parse_field_decls(bs_fields, bs_min_count)) decls.push_back(std::move(d));
    std::cout << "# config: data=" << bs_data << " label=" << bs_label
              << " fields=" << decls.size() << " min_count=" << bs_min_count << '\n';
    SchemaBuilder builder(decls);
    builder.bind_header(reader.header(), bs_label);
    std::vector<std::string> row;
    while (reader.next(row)) builder.add_row(row, reader.row_number());
    FieldSchema schema = builder.finalize();
    schema.save(bs_out);
    std::cout << "schema: " << schema.field_count() << " fields, "
              << schema.total_features() << " features, hash=" << schema.content_hash()
              << '\n';
    for (const auto& f : schema.fields)
      std::cout << "  " << f.name << " (" << field_kind_name(f.kind) << "): d="
                << f.cardinality << '\n';
    return 0;
  }

  if (cmd_train->parsed()) {
    TrainConfig cfg;
    if (!tr_config.empty()) cfg = TrainConfig::from_kv(read_kv_file(tr_config));
    if (o_k->count()) cfg.k = tr_k;
    if (o_T->count()) cfg.T = tr_T;
    if (o_eta->count()) cfg.eta = tr_eta;
    if (o_gamma->count()) cfg.gamma = tr_gamma;
    if (o_lambda->count()) cfg.lambda = tr_lambda;
    if (o_batch->count()) cfg.batch_size = tr_batch;
    if (o_opt->count()) cfg.optimizer = optimizer_from_name(tr_opt);
    if (o_epochs->count()) cfg.epochs = tr_epochs;
    if (o_patience->count()) cfg.patience = tr_patience;
    if (o_seed->count()) cfg.seed = tr_seed;
    if (o_task->count()) cfg.task = task_from_name(tr_task);
    if (o_mode->count()) cfg.mode = mode_from_name(tr_mode);
    if (o_zeta->count()) cfg.zeta = tr_zeta;
    if (o_fo->count()) cfg.first_order = tr_first_order;
    if (o_m1->count()) cfg.mu0_ones = tr_mu0_ones;
    if (o_scale->count()) cfg.init_scale = tr_scale;
    if (o_clip->count()) cfg.clip_norm = tr_clip;
    if (o_threads->count()) cfg.threads = tr_threads;
    cfg.validate();
    print_config(cfg);

    FieldSchema schema = FieldSchema::load(tr_schema);
    DatasetSplit split;
    if (!tr_val.empty()) {
      split.train = load_instances(tr_data, tr_cache, schema, tr_label);
      split.validation = encode_csv(tr_val, schema, tr_label);
      split.seed = cfg.seed;
    } else {
      split = split_dataset(load_instances(tr_data, tr_cache, schema, tr_label),
                            parse_ratios(tr_ratios), cfg.seed);
    }
    std::cout << "# split: train=" << split.train.size() << " val="
              << split.validation.size() << " test=" << split.test.size() << '\n';

    Model model;
    if (!tr_log.empty()) {
      std::ofstream log(tr_log);
      if (!log) throw std::runtime_error("cannot open log file: " + tr_log);
      log << "# epoch,train_loss,val_loss,val_auc_or_mse,seconds\n";
      model = train(split, schema, cfg, &log);
    } else {
      std::cout << "# epoch,train_loss,val_loss,val_auc_or_mse,seconds\n";
      model = train(split, schema, cfg, &std::cout);
    }
    save_checkpoint(model, tr_out);
    std::cout << "checkpoint: " << tr_out << " best_val=" << format_double(model.best_val)
              << '\n';
    return 0;
  }

  if (cmd_eval->parsed()) {
    std::cout << "# config: model=" << ev_model << " data=" << ev_data << '\n';
    FieldSchema schema = FieldSchema::load(ev_schema);
    Model model = load_model_checked(ev_model, schema);
    std::vector<SparseInstance> insts = load_instances(ev_data, ev_cache, schema, ev_label);
    EvalReport rep = evaluate(model, insts);
    std::cout << rep.summary_line() << '\n' << rep.kv_block();
    if (!ev_out.empty()) {
      std::ofstream out(ev_out);
      if (!out) throw std::runtime_error("cannot write report: " + ev_out);
      out << rep.summary_line() << '\n' << rep.kv_block();
    }
    return 0;
  }

  if (cmd_pred->parsed()) {
    std::cout << "# config: model=" << pr_model << " data=" << pr_data << " out=" << pr_out
              << '\n';
    FieldSchema schema = FieldSchema::load(pr_schema);
    Model model = load_model_checked(pr_model, schema);
    std::vector<SparseInstance> insts = encode_csv(pr_data, schema, pr_label);
    write_predictions_csv(pr_out, predict_many(model, insts));
    std::cout << "predictions: " << insts.size() << " rows -> " << pr_out << '\n';
    return 0;
  }

  if (cmd_dump->parsed()) {
    std::cout << "# config: model=" << dd_model << " data=" << dd_data << " row=" << dd_row
              << '\n';
    FieldSchema schema = FieldSchema::load(dd_schema);
    Model model = load_model_checked(dd_model, schema);
    std::vector<SparseInstance> insts = encode_csv(dd_data, schema, dd_label);
    if (dd_row < 0 || dd_row >= static_cast<long>(insts.size()))
      throw std::invalid_argument("--row out of range, file has " +
                                  std::to_string(insts.size()) + " rows");
    dump_dependencies(model, insts[dd_row], schema, dd_out);
    std::cout << "dependency matrices -> " << dd_out << '\n';
    return 0;
  }

  if (cmd_proj->parsed()) {
    std::string line = ps_input;
    if (line.empty()) std::getline(std::cin, line);
    std::istringstream is(line);
    std::vector<double> values;
    double v;
    while (is >> v) values.push_back(v);
    if (values.empty()) throw std::invalid_argument("project-simplex: no input values");
    ProjectionResult res = simplex_project(Mat::col(values), ps_lambda);
    std::cout << "mu=";
    for (int i = 0; i < res.mu.rows; ++i)
      std::cout << (i ? " " : "") << format_double(res.mu.data[i]);
    std::cout << " K=" << res.K << " beta=" << format_double(res.beta) << '\n';
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
