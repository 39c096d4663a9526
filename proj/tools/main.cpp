#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "essaynet/errors.hpp"
#include "essaynet/gradcheck.hpp"
#include "essaynet/metrics.hpp"
#include "essaynet/model.hpp"
#include "essaynet/training.hpp"

namespace fs = std::filesystem;
using namespace essaynet;

namespace {

// Resolution order: built-in defaults < config file < command-line flags.
// The resolved snapshot written to the output directory is the audit record.
struct RunConfig {
  ModelConfig model;
  std::string train_path, dev_path, test_path, embeddings_path;
  std::string out_dir = "run-out";
  std::uint64_t seed = 1;
  std::size_t batch_size = 8;
  std::size_t patience = 7;
  std::size_t max_epochs = 200;
  std::size_t min_count = 1;
  std::string selection_metric = "auto";
};

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::map<std::string, std::string> read_keyvalue_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + " line " + std::to_string(line_no) + ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void apply_config_file(RunConfig& rc, const std::string& path) {
  for (const auto& [key, value] : read_keyvalue_file(path)) {
    try {
      if (key == "embedding_dim") rc.model.embedding_dim = std::stoull(value);
      else if (key == "hidden_dim") rc.model.hidden_dim = std::stoull(value);
      else if (key == "score_min") rc.model.score_min = std::stod(value);
      else if (key == "score_max") rc.model.score_max = std::stod(value);
      else if (key == "gamma_lm") rc.model.gamma_lm = std::stod(value);
      else if (key == "gamma_aes") rc.model.gamma_aes = std::stod(value);
      else if (key == "ged_threshold") rc.model.ged_threshold = std::stod(value);
      else if (key == "lm_vocab_cap") rc.model.lm_vocab_cap = std::stoull(value);
      else if (key == "lm_combination") rc.model.lm_sum_directions = (value == "sum");
      else if (key == "train") rc.train_path = value;
      else if (key == "dev") rc.dev_path = value;
      else if (key == "test") rc.test_path = value;
      else if (key == "embeddings") rc.embeddings_path = value;
      else if (key == "out") rc.out_dir = value;
      else if (key == "seed") rc.seed = std::stoull(value);
      else if (key == "batch_size") rc.batch_size = std::stoull(value);
      else if (key == "patience") rc.patience = std::stoull(value);
      else if (key == "max_epochs") rc.max_epochs = std::stoull(value);
      else if (key == "min_count") rc.min_count = std::stoull(value);
      else if (key == "selection_metric") rc.selection_metric = value;
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(path + ": bad value for '" + key + "': " + value);
    }
  }
}

std::map<std::string, std::string> resolved_snapshot(const RunConfig& rc) {
  return {
      {"embedding_dim", std::to_string(rc.model.embedding_dim)},
      {"hidden_dim", std::to_string(rc.model.hidden_dim)},
      {"score_min", format_double(rc.model.score_min)},
      {"score_max", format_double(rc.model.score_max)},
      {"gamma_lm", format_double(rc.model.gamma_lm)},
      {"gamma_aes", format_double(rc.model.gamma_aes)},
      {"ged_threshold", format_double(rc.model.ged_threshold)},
      {"lm_vocab_cap", std::to_string(rc.model.lm_vocab_cap)},
      {"lm_combination", rc.model.lm_sum_directions ? "sum" : "average"},
      {"train", rc.train_path},
      {"dev", rc.dev_path},
      {"test", rc.test_path},
      {"embeddings", rc.embeddings_path},
      {"out", rc.out_dir},
      {"seed", std::to_string(rc.seed)},
      {"batch_size", std::to_string(rc.batch_size)},
      {"patience", std::to_string(rc.patience)},
      {"max_epochs", std::to_string(rc.max_epochs)},
      {"min_count", std::to_string(rc.min_count)},
      {"selection_metric", rc.selection_metric},
  };
}

void write_keyvalue_file(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

void require_path(const std::string& value, const char* field) {
  if (value.empty()) throw ConfigError(std::string("missing required field '") + field + "'");
  if (!fs::exists(value)) {
    throw ConfigError(std::string("field '") + field + "' points to missing path: " + value);
  }
}

}  // namespace

static void add_train_options(CLI::App* cmd, RunConfig& defaults,
                              std::map<std::string, std::string>& flag_values) {
  // Flags are staged as strings and applied after the config file.
  static const std::vector<std::pair<const char*, const char*>> options = {
      {"--train", "training corpus path"},
      {"--dev", "development corpus path"},
      {"--test", "test corpus path (optional)"},
      {"--embeddings", "pretrained embeddings path (optional)"},
      {"--out", "output directory"},
      {"--seed", "run seed"},
      {"--batch-size", "mini-batch size in essays"},
      {"--patience", "early stopping patience in epochs"},
      {"--max-epochs", "epoch cap"},
      {"--min-count", "vocabulary frequency cutoff"},
      {"--embedding-dim", "embedding dimension"},
      {"--hidden-dim", "hidden units per direction"},
      {"--gamma-lm", "language-modelling loss weight"},
      {"--gamma-aes", "essay-scoring loss weight in [0,1]"},
      {"--ged-threshold", "decision threshold for the incorrect class"},
      {"--lm-vocab-cap", "cap on LM output vocabulary (0 = full)"},
      {"--lm-combination", "average|sum of the two LM directions"},
      {"--selection-metric", "auto|f05|qwk"},
  };
  (void)defaults;
  for (const auto& [flag, help] : options) {
    cmd->add_option_function<std::string>(
        flag, [&flag_values, name = std::string(flag)](const std::string& v) {
          flag_values[name] = v;
        },
        help);
  }
}

static void apply_flag_overrides(RunConfig& rc,
                                 const std::map<std::string, std::string>& flags) {
  const auto get = [&](const char* name) -> const std::string* {
    const auto it = flags.find(name);
    return it == flags.end() ? nullptr : &it->second;
  };
  try {
    if (const auto* v = get("--train")) rc.train_path = *v;
    if (const auto* v = get("--dev")) rc.dev_path = *v;
    if (const auto* v = get("--test")) rc.test_path = *v;
    if (const auto* v = get("--embeddings")) rc.embeddings_path = *v;
    if (const auto* v = get("--out")) rc.out_dir = *v;
    if (const auto* v = get("--seed")) rc.seed = std::stoull(*v);
    if (const auto* v = get("--batch-size")) rc.batch_size = std::stoull(*v);
    if (const auto* v = get("--patience")) rc.patience = std::stoull(*v);
    if (const auto* v = get("--max-epochs")) rc.max_epochs = std::stoull(*v);
    if (const auto* v = get("--min-count")) rc.min_count = std::stoull(*v);
    if (const auto* v = get("--embedding-dim")) rc.model.embedding_dim = std::stoull(*v);
    if (const auto* v = get("--hidden-dim")) rc.model.hidden_dim = std::stoull(*v);
    if (const auto* v = get("--gamma-lm")) rc.model.gamma_lm = std::stod(*v);
    if (const auto* v = get("--gamma-aes")) rc.model.gamma_aes = std::stod(*v);
    if (const auto* v = get("--ged-threshold")) rc.model.ged_threshold = std::stod(*v);
    if (const auto* v = get("--lm-vocab-cap")) rc.model.lm_vocab_cap = std::stoull(*v);
    if (const auto* v = get("--lm-combination")) rc.model.lm_sum_directions = (*v == "sum");
    if (const auto* v = get("--selection-metric")) rc.selection_metric = *v;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad flag value: ") + e.what());
  }
}

namespace {

struct LoadedData {
  std::vector<Essay> train, dev, test;
  Vocabulary vocab;
  ModelParams params;
};

LoadedData prepare_training_inputs(const RunConfig& rc) {
  require_path(rc.train_path, "train");
  require_path(rc.dev_path, "dev");
  if (!rc.test_path.empty()) require_path(rc.test_path, "test");

  std::vector<Essay> train_essays = parse_corpus(rc.train_path);
  Vocabulary vocab = Vocabulary::build(train_essays, rc.min_count);
  LoadedData d{std::move(train_essays), parse_corpus(rc.dev_path), {}, std::move(vocab),
               ModelParams{}};
  if (!rc.test_path.empty()) d.test = parse_corpus(rc.test_path);

  Rng rng(rc.seed);
  EmbeddingMatrix emb;
  if (!rc.embeddings_path.empty()) {
    require_path(rc.embeddings_path, "embeddings");
    emb = load_embeddings(rc.embeddings_path, d.vocab, rc.model.embedding_dim, rng);
    if (emb.matrix.dim(1) != rc.model.embedding_dim) {
      throw ConfigError("embeddings file dimension " + std::to_string(emb.matrix.dim(1)) +
                        " does not match embedding_dim " +
                        std::to_string(rc.model.embedding_dim));
    }
  } else {
    emb = random_embeddings(d.vocab.size(), rc.model.embedding_dim, rng);
  }
  d.params = ModelParams::init(rc.model, d.vocab.size(), std::move(emb.matrix), rc.seed);
  return d;
}

TrainOptions train_options_from(const RunConfig& rc) {
  TrainOptions opt;
  opt.batch_size = rc.batch_size;
  opt.patience = rc.patience;
  opt.max_epochs = rc.max_epochs;
  opt.seed = rc.seed;
  opt.selection = selection_metric_from_string(rc.selection_metric);
  return opt;
}

std::map<std::string, std::string> checkpoint_manifest(const RunConfig& rc,
                                                       const Vocabulary& vocab) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(vocab.hash()));
  return {{"vocab_hash", hex},
          {"vocab_size", std::to_string(vocab.size())},
          {"seed", std::to_string(rc.seed)}};
}

void check_vocab_hash(const Checkpoint& ck, const Vocabulary& vocab,
                      const std::string& vocab_path) {
  const auto it = ck.manifest.find("vocab_hash");
  if (it == ck.manifest.end()) throw DataError("checkpoint manifest has no vocab_hash");
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(vocab.hash()));
  if (it->second != std::string(hex)) {
    throw DataError("vocab hash mismatch: checkpoint expects " + it->second + ", " +
                    vocab_path + " hashes to " + hex);
  }
}

int cmd_train(const RunConfig& rc) {
  rc.model.validate();
  fs::create_directories(rc.out_dir);
  write_keyvalue_file(rc.out_dir + "/config.resolved", resolved_snapshot(rc));

  const LoadedData d = prepare_training_inputs(rc);
  const TrainResult res = train(rc.model, d.train, d.dev, d.vocab, d.params,
                                train_options_from(rc));

  d.vocab.save(rc.out_dir + "/vocab.txt");
  save_checkpoint(rc.out_dir + "/checkpoint.bin", res.best_params, rc.model,
                  checkpoint_manifest(rc, d.vocab));
  {
    std::ofstream rec(rc.out_dir + "/train_record.txt", std::ios::binary);
    rec << res.record.to_lines();
  }
  std::cout << "trained " << res.record.epochs.size() << " epochs, best epoch "
            << res.record.best_epoch << " (" << res.record.stop_reason << ")\n";
  if (res.record.stop_reason == "divergence") {
    std::cerr << "warning: run diverged; artifacts in " << rc.out_dir
              << " hold the last best checkpoint\n";
    return 3;
  }
  return 0;
}

int cmd_sweep(const RunConfig& rc, const std::string& grid_arg) {
  rc.model.validate();
  fs::create_directories(rc.out_dir);
  write_keyvalue_file(rc.out_dir + "/config.resolved", resolved_snapshot(rc));

  std::vector<double> grid;
  if (grid_arg.empty()) {
    grid = default_gamma_grid();
  } else {
    std::istringstream is(grid_arg);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      try {
        grid.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ConfigError("bad grid value '" + tok + "'");
      }
    }
  }

  const LoadedData d = prepare_training_inputs(rc);
  const std::vector<SweepRow> rows =
      sweep_gamma(rc.model, d.train, d.dev, d.test.empty() ? nullptr : &d.test, d.vocab,
                  d.params, train_options_from(rc), grid);

  const std::string path = rc.out_dir + "/sweep.txt";
  write_sweep_file(path, rows);
  const std::vector<SweepRow> reread = parse_sweep_file(path);  // self-check
  if (reread.size() != rows.size()) {
    throw NumericalError("sweep file failed round-trip validation");
  }
  const SweepArgmax am = sweep_argmax(rows);
  for (const SweepRow& r : rows) {
    std::cout << "gamma_aes=" << r.gamma_aes << " dev_f05=" << r.dev_f05
              << " dev_qwk=" << r.dev_qwk << '\n';
  }
  std::cout << "argmax dev_f05 at gamma_aes=" << am.ged_gamma << '\n';
  std::cout << "argmax dev_qwk at gamma_aes=" << am.aes_gamma << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& vocab_path,
             const std::string& corpus_path, const std::string& out_dir,
             const std::string& baseline_path, std::uint64_t seed) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  check_vocab_hash(ck, vocab, vocab_path);
  const std::vector<Essay> essays = parse_corpus(corpus_path);

  EvalReport report;
  PrfCounts counts;
  std::vector<int> pred_scores, gold_scores;
  std::vector<double> pred_raw, gold_raw;
  for (const Essay& e : essays) {
    if (!e.gold_score) throw DataError("eval: essay '" + e.id + "' has no gold score");
    const ModelOutputs out = forward(ck.params, ck.config, vocab.encode(e.tokens));
    counts += count_token_errors(predict_labels(out.ged_probs, ck.config.ged_threshold),
                                 e.labels);
    pred_scores.push_back(round_score(out.predicted_score, ck.config));
    gold_scores.push_back(*e.gold_score);
    pred_raw.push_back(out.predicted_score);
    gold_raw.push_back(static_cast<double>(*e.gold_score));
  }
  report.counts = counts;
  const Prf prf = prf_from_counts(counts);
  report.precision = prf.precision;
  report.recall = prf.recall;
  report.f_half = prf.f_half;
  if (essays.size() >= 2) {
    report.qwk = qwk(pred_scores, gold_scores,
                     static_cast<int>(std::lround(ck.config.score_min)),
                     static_cast<int>(std::lround(ck.config.score_max)));
    report.spearman = spearman(pred_raw, gold_raw);
  }

  if (!baseline_path.empty()) {
    const Checkpoint base = load_checkpoint(baseline_path);
    check_vocab_hash(base, vocab, vocab_path);
    std::vector<int> base_scores;
    for (const Essay& e : essays) {
      const ModelOutputs out = forward(base.params, base.config, vocab.encode(e.tokens));
      base_scores.push_back(round_score(out.predicted_score, base.config));
    }
    const int lo = static_cast<int>(std::lround(ck.config.score_min));
    const int hi = static_cast<int>(std::lround(ck.config.score_max));
    const std::function<double(const std::vector<int>&, const std::vector<int>&)> metric =
        [&](const std::vector<int>& sys, const std::vector<int>& gold) {
          return qwk(sys, gold, lo, hi).value_or(0.0);
        };
    report.p_value = significance_test(metric, pred_scores, base_scores, gold_scores,
                                       10000, seed);
  }

  std::cout << report.to_table();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir + "/eval_report.txt", std::ios::binary);
    out << report.to_keyvalue_lines();
  }
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& vocab_path,
                const std::string& input_path, const std::string& output_path) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  check_vocab_hash(ck, vocab, vocab_path);
  std::vector<Essay> essays =
      parse_corpus(input_path, ParseOptions{.require_labels = false, .require_scores = false});
  for (Essay& e : essays) {
    const ModelOutputs out = forward(ck.params, ck.config, vocab.encode(e.tokens));
    e.labels = predict_labels(out.ged_probs, ck.config.ged_threshold);
    e.gold_score = round_score(out.predicted_score, ck.config);
    e.labeled = true;
  }
  write_corpus(output_path, essays);
  std::cout << "annotated " << essays.size() << " essays -> " << output_path << '\n';
  return 0;
}

int cmd_gen_synthetic(const SyntheticConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const SyntheticCorpora corpora = generate_synthetic(cfg);
  write_corpus(out_dir + "/train.txt", corpora.train);
  write_corpus(out_dir + "/dev.txt", corpora.dev);
  write_corpus(out_dir + "/test.txt", corpora.test);
  std::cout << "wrote " << corpora.train.size() << '/' << corpora.dev.size() << '/'
            << corpora.test.size() << " essays to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint per-token error detection and essay scoring"};
  app.require_subcommand(1);

  RunConfig rc;
  std::map<std::string, std::string> flag_values;
  std::string config_path, grid_arg;

  CLI::App* train_cmd = app.add_subcommand("train", "train a model, write checkpoint");
  train_cmd->add_option("--config", config_path, "key=value config file");
  add_train_options(train_cmd, rc, flag_values);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train across a gamma_aes grid");
  sweep_cmd->add_option("--config", config_path, "key=value config file");
  sweep_cmd->add_option("--grid", grid_arg, "comma-separated gamma_aes values");
  add_train_options(sweep_cmd, rc, flag_values);

  std::string checkpoint_path, vocab_path, corpus_path, out_arg, baseline_path;
  std::uint64_t eval_seed = 1;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
  eval_cmd->add_option("--vocab", vocab_path, "vocabulary path (default: sibling vocab.txt)");
  eval_cmd->add_option("--test", corpus_path, "corpus to evaluate")->required();
  eval_cmd->add_option("--out", out_arg, "directory for eval_report.txt");
  eval_cmd->add_option("--baseline-checkpoint", baseline_path,
                       "second system for a paired significance test");
  eval_cmd->add_option("--seed", eval_seed, "randomization seed for the significance test");

  std::string in_path, pred_out;
  CLI::App* predict_cmd = app.add_subcommand("predict", "annotate a corpus with predictions");
  predict_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
  predict_cmd->add_option("--vocab", vocab_path, "vocabulary path (default: sibling vocab.txt)");
  predict_cmd->add_option("--input", in_path, "corpus to annotate (labels/scores optional)")
      ->required();
  predict_cmd->add_option("--output", pred_out, "annotated corpus path")->required();

  SyntheticConfig syn;
  std::string syn_out = "synthetic";
  CLI::App* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic corpus triple");
  gen_cmd->add_option("--vocab-size", syn.vocab_size, "word types");
  gen_cmd->add_option("--essays", syn.essay_count, "training essays (dev/test get 1/10 each)");
  gen_cmd->add_option("--min-length", syn.min_length, "min tokens per essay");
  gen_cmd->add_option("--max-length", syn.max_length, "max tokens per essay");
  gen_cmd->add_option("--error-min", syn.error_rate_min, "lower error rate bound");
  gen_cmd->add_option("--error-max", syn.error_rate_max, "upper error rate bound");
  gen_cmd->add_option("--noise", syn.score_noise, "max |integer noise| on gold scores");
  gen_cmd->add_option("--seed", syn.seed, "generator seed");
  gen_cmd->add_option("--out", syn_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed() || sweep_cmd->parsed()) {
      if (!config_path.empty()) apply_config_file(rc, config_path);
      apply_flag_overrides(rc, flag_values);
      return train_cmd->parsed() ? cmd_train(rc) : cmd_sweep(rc, grid_arg);
    }
    if (eval_cmd->parsed() || predict_cmd->parsed()) {
      if (vocab_path.empty()) {
        vocab_path = (fs::path(checkpoint_path).parent_path() / "vocab.txt").string();
      }
      if (eval_cmd->parsed()) {
        return cmd_eval(checkpoint_path, vocab_path, corpus_path, out_arg, baseline_path,
                        eval_seed);
      }
      return cmd_predict(checkpoint_path, vocab_path, in_path, pred_out);
    }
    if (gen_cmd->parsed()) return cmd_gen_synthetic(syn, syn_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
