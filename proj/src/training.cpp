#include "essaynet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "essaynet/errors.hpp"

namespace essaynet {

AdadeltaState AdadeltaState::init(const ModelParams& shape_like, const AdadeltaConfig& cfg) {
  AdadeltaState s;
  s.acc_grad = ModelParams::zeros_like(shape_like);
  s.acc_update = ModelParams::zeros_like(shape_like);
  s.config = cfg;
  return s;
}

bool adadelta_update(AdadeltaState& state, ModelParams& params, const ModelParams& grads,
                     std::string* diagnostic) {
  bool finite = true;
  std::string offender;
  grads.visit([&](const std::string& name, const Tensor& g) {
    if (finite && !g.all_finite()) {
      finite = false;
      offender = name;
    }
  });
  if (!finite) {
    if (diagnostic) {
      *diagnostic = "adadelta: non-finite gradient in '" + offender + "'; step rejected";
    }
    return false;
  }

  const double rho = state.config.rho;
  const double eps = state.config.epsilon;
  params.visit([&](const std::string& name, Tensor& p) {
    const Tensor& g = grads.tensor_by_name(name);
    Tensor& ag = state.acc_grad.tensor_by_name(name);
    Tensor& au = state.acc_update.tensor_by_name(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      ag[i] = rho * ag[i] + (1.0 - rho) * gi * gi;
      const double delta = -std::sqrt(au[i] + eps) / std::sqrt(ag[i] + eps) * gi;
      au[i] = rho * au[i] + (1.0 - rho) * delta * delta;
      p[i] += delta;
    }
  });
  return true;
}

SelectionMetric selection_metric_from_string(const std::string& name) {
  if (name == "auto") return SelectionMetric::kAuto;
  if (name == "f05") return SelectionMetric::kF05;
  if (name == "qwk") return SelectionMetric::kQwk;
  throw ConfigError("unknown selection_metric '" + name + "' (expected auto|f05|qwk)");
}

const char* selection_metric_name(SelectionMetric m) {
  switch (m) {
    case SelectionMetric::kAuto: return "auto";
    case SelectionMetric::kF05: return "f05";
    case SelectionMetric::kQwk: return "qwk";
  }
  return "?";
}

SelectionMetric resolve_selection(SelectionMetric m, double gamma_aes) {
  if (m != SelectionMetric::kAuto) return m;
  return gamma_aes < 1.0 ? SelectionMetric::kF05 : SelectionMetric::kQwk;
}

CorpusEval evaluate_corpus(const ModelParams& params, const ModelConfig& config,
                           const Vocabulary& vocab, const std::vector<Essay>& essays) {
  if (essays.empty()) throw DataError("evaluate_corpus: empty corpus");
  PrfCounts counts;
  std::vector<int> pred_scores, gold_scores;
  std::vector<double> pred_raw, gold_raw;
  for (const Essay& e : essays) {
    if (!e.gold_score) throw DataError("evaluate_corpus: essay '" + e.id + "' has no gold score");
    const ModelOutputs out = forward(params, config, vocab.encode(e.tokens));
    counts += count_token_errors(predict_labels(out.ged_probs, config.ged_threshold), e.labels);
    const int rounded = round_score(out.predicted_score, config);
    pred_scores.push_back(rounded);
    gold_scores.push_back(*e.gold_score);
    pred_raw.push_back(out.predicted_score);
    gold_raw.push_back(static_cast<double>(*e.gold_score));
  }
  const Prf prf = prf_from_counts(counts);
  CorpusEval ev;
  ev.precision = prf.precision;
  ev.recall = prf.recall;
  ev.f05 = prf.f_half;
  if (essays.size() >= 2) {
    ev.qwk = qwk(pred_scores, gold_scores, static_cast<int>(std::lround(config.score_min)),
                 static_cast<int>(std::lround(config.score_max)));
    ev.spearman = spearman(pred_raw, gold_raw);
  }
  return ev;
}

LossBreakdown accumulate_essay_gradients(Tape& tape, const ModelParams& params,
                                         const ModelConfig& config,
                                         const std::vector<std::size_t>& token_ids,
                                         const Essay& essay, ModelParams& grads) {
  if (!essay.gold_score) {
    throw DataError("training: essay '" + essay.id + "' has no gold score");
  }
  tape.clear();
  const ForwardGraph g = build_forward_graph(tape, params, config, token_ids);
  const LossGraph loss =
      build_loss_graph(tape, g, token_ids, essay.labels, *essay.gold_score, config);
  tape.backward(loss.total);

  for (const auto& [name, node] : g.param_leaves) {
    if (!tape.has_gradient(node)) continue;
    axpy(grads.tensor_by_name(name), tape.grad(node));
  }
  Tensor& emb = grads.embedding;
  const std::size_t dim = emb.dim(1);
  for (const auto& [token_id, node] : g.embedding_row_leaves) {
    if (!tape.has_gradient(node)) continue;
    const Tensor& rg = tape.grad(node);
    for (std::size_t j = 0; j < dim; ++j) emb.at(token_id, j) += rg[j];
  }
  return loss.values;
}

void TrainOptions::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
}

namespace {

double pick_metric(const CorpusEval& ev, SelectionMetric m) {
  if (m == SelectionMetric::kF05) return ev.f05;
  return ev.qwk ? *ev.qwk : -std::numeric_limits<double>::infinity();
}

}  // namespace

TrainResult train(const ModelConfig& config, const std::vector<Essay>& train_corpus,
                  const std::vector<Essay>& dev_corpus, const Vocabulary& vocab,
                  const ModelParams& initial, const TrainOptions& options) {
  config.validate();
  options.validate();
  if (train_corpus.empty()) throw DataError("train: empty training corpus");
  if (dev_corpus.empty() && !options.dev_metric_override) {
    throw DataError("train: empty development corpus");
  }
  const SelectionMetric selection = resolve_selection(options.selection, config.gamma_aes);

  std::vector<std::vector<std::size_t>> encoded;
  encoded.reserve(train_corpus.size());
  for (const Essay& e : train_corpus) encoded.push_back(vocab.encode(e.tokens));

  ModelParams params = initial;
  AdadeltaState state = AdadeltaState::init(params);
  Rng shuffle_rng(options.seed);
  Tape tape;

  TrainResult result;
  result.best_params = params;
  TrainRecord& record = result.record;
  record.best_metric = -std::numeric_limits<double>::infinity();
  std::size_t epochs_without_improvement = 0;

  std::vector<std::size_t> order(train_corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    bool diverged = false;
    std::string diagnostic;
    for (std::size_t start = 0; start < order.size() && !diverged;
         start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      ModelParams grads = ModelParams::zeros_like(params);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        const LossBreakdown lb = accumulate_essay_gradients(
            tape, params, config, encoded[idx], train_corpus[idx], grads);
        if (!std::isfinite(lb.total)) {
          diverged = true;
          diagnostic = "non-finite loss on essay '" + train_corpus[idx].id + "'";
          break;
        }
        loss_sum += lb.total;
        ++seen;
      }
      if (diverged) break;
      const double inv = 1.0 / static_cast<double>(stop - start);
      grads.visit([&](const std::string&, Tensor& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= inv;
      });
      if (!adadelta_update(state, params, grads, &diagnostic)) diverged = true;
    }

    if (diverged) {
      std::cerr << "training diverged at epoch " << epoch << ": " << diagnostic << '\n';
      record.stop_reason = "divergence";
      break;
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
    double metric;
    if (options.dev_metric_override) {
      metric = options.dev_metric_override(epoch, params);
      es.dev_f05 = metric;
      es.dev_qwk = metric;
    } else {
      const CorpusEval ev = evaluate_corpus(params, config, vocab, dev_corpus);
      es.dev_f05 = ev.f05;
      es.dev_qwk = ev.qwk.value_or(0.0);
      es.dev_spearman = ev.spearman.value_or(0.0);
      metric = pick_metric(ev, selection);
    }
    es.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record.epochs.push_back(es);

    if (metric > record.best_metric) {
      record.best_metric = metric;
      record.best_epoch = epoch;
      result.best_params = params;
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement >= options.patience) {
        record.stop_reason = "patience";
        break;
      }
    }
  }
  if (record.stop_reason.empty()) record.stop_reason = "max_epochs";
  return result;
}

std::string TrainRecord::to_lines() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  for (const EpochStats& e : epochs) {
    os << "epoch=" << e.epoch << " train_loss=" << e.train_loss << " dev_f05=" << e.dev_f05
       << " dev_qwk=" << e.dev_qwk << " dev_spearman=" << e.dev_spearman
       << " seconds=" << e.seconds << '\n';
  }
  os << "best_epoch=" << best_epoch << " best_metric=" << best_metric
     << " stop_reason=" << stop_reason << '\n';
  return os.str();
}

std::vector<double> default_gamma_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(static_cast<double>(i) / 10.0);
  return grid;
}

std::vector<SweepRow> sweep_gamma(const ModelConfig& config,
                                  const std::vector<Essay>& train_corpus,
                                  const std::vector<Essay>& dev_corpus,
                                  const std::vector<Essay>* test_corpus,
                                  const Vocabulary& vocab, const ModelParams& initial,
                                  const TrainOptions& options,
                                  const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("sweep: empty gamma grid");
  for (double g : grid) {
    if (g < 0.0 || g > 1.0) throw ConfigError("sweep: gamma_aes grid values must lie in [0,1]");
  }
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double gamma : grid) {
    ModelConfig point = config;
    point.gamma_aes = gamma;
    const TrainResult res = train(point, train_corpus, dev_corpus, vocab, initial, options);
    SweepRow row;
    row.gamma_aes = gamma;
    row.best_epoch = res.record.best_epoch;
    if (res.record.best_epoch > 0) {
      const EpochStats& best = res.record.epochs[res.record.best_epoch - 1];
      row.dev_f05 = best.dev_f05;
      row.dev_qwk = best.dev_qwk;
      row.dev_spearman = best.dev_spearman;
    }
    if (test_corpus && !test_corpus->empty()) {
      const CorpusEval ev = evaluate_corpus(res.best_params, point, vocab, *test_corpus);
      row.test_f05 = ev.f05;
      row.test_qwk = ev.qwk.value_or(0.0);
      row.has_test = true;
    }
    rows.push_back(row);
  }
  return rows;
}

SweepArgmax sweep_argmax(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw DataError("sweep_argmax: no rows");
  SweepArgmax best;
  double best_f = -std::numeric_limits<double>::infinity();
  double best_q = -std::numeric_limits<double>::infinity();
  for (const SweepRow& r : rows) {
    if (r.dev_f05 > best_f) {
      best_f = r.dev_f05;
      best.ged_gamma = r.gamma_aes;
    }
    if (r.dev_qwk > best_q) {
      best_q = r.dev_qwk;
      best.aes_gamma = r.gamma_aes;
    }
  }
  return best;
}

void write_sweep_file(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write sweep file " + path);
  out.precision(6);
  out << std::fixed;
  for (const SweepRow& r : rows) {
    out << "gamma_aes=" << r.gamma_aes << " dev_f05=" << r.dev_f05 << " dev_qwk=" << r.dev_qwk
        << " dev_spearman=" << r.dev_spearman;
    if (r.has_test) out << " test_f05=" << r.test_f05 << " test_qwk=" << r.test_qwk;
    out << " best_epoch=" << r.best_epoch << '\n';
  }
  const SweepArgmax am = sweep_argmax(rows);
  out << "# argmax dev_f05 at gamma_aes=" << am.ged_gamma << '\n';
  out << "# argmax dev_qwk at gamma_aes=" << am.aes_gamma << '\n';
}

std::vector<SweepRow> parse_sweep_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read sweep file " + path);
  std::vector<SweepRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string field;
    SweepRow row;
    bool saw_gamma = false;
    while (is >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) {
        throw DataError(path + " line " + std::to_string(line_no) + ": malformed field '" +
                        field + "'");
      }
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      try {
        if (key == "gamma_aes") {
          row.gamma_aes = std::stod(value);
          saw_gamma = true;
        } else if (key == "dev_f05") {
          row.dev_f05 = std::stod(value);
        } else if (key == "dev_qwk") {
          row.dev_qwk = std::stod(value);
        } else if (key == "dev_spearman") {
          row.dev_spearman = std::stod(value);
        } else if (key == "test_f05") {
          row.test_f05 = std::stod(value);
          row.has_test = true;
        } else if (key == "test_qwk") {
          row.test_qwk = std::stod(value);
          row.has_test = true;
        } else if (key == "best_epoch") {
          row.best_epoch = std::stoull(value);
        } else {
          throw DataError("unknown key '" + key + "'");
        }
      } catch (const std::exception& e) {
        throw DataError(path + " line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (!saw_gamma || row.gamma_aes < 0.0 || row.gamma_aes > 1.0) {
      throw DataError(path + " line " + std::to_string(line_no) + ": missing or invalid gamma_aes");
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace essaynet
