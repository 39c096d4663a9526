#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "essaynet/metrics.hpp"
#include "essaynet/model.hpp"

namespace essaynet {

struct AdadeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
};

struct AdadeltaState {
  ModelParams acc_grad;    // running average of squared gradients
  ModelParams acc_update;  // running average of squared updates
  AdadeltaConfig config;

  static AdadeltaState init(const ModelParams& shape_like, const AdadeltaConfig& cfg = {});
};

// One Adadelta step, elementwise:
//   acc_g <- rho*acc_g + (1-rho)*g^2
//   delta  = -sqrt(acc_u + eps)/sqrt(acc_g + eps) * g
//   acc_u <- rho*acc_u + (1-rho)*delta^2
//   param <- param + delta
// A non-finite gradient rejects the whole step: nothing is mutated, false is
// returned and *diagnostic names the offending tensor.
bool adadelta_update(AdadeltaState& state, ModelParams& params, const ModelParams& grads,
                     std::string* diagnostic = nullptr);

enum class SelectionMetric { kAuto, kF05, kQwk };
SelectionMetric selection_metric_from_string(const std::string& name);
const char* selection_metric_name(SelectionMetric m);
// kAuto resolves to F0.5 while the detection loss carries weight (gamma_aes<1)
// and QWK for the scoring-only corner (gamma_aes=1).
SelectionMetric resolve_selection(SelectionMetric m, double gamma_aes);

struct CorpusEval {
  double precision = 0.0, recall = 0.0, f05 = 0.0;
  std::optional<double> qwk;
  std::optional<double> spearman;
};

CorpusEval evaluate_corpus(const ModelParams& params, const ModelConfig& config,
                           const Vocabulary& vocab, const std::vector<Essay>& essays);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_f05 = 0.0;
  double dev_qwk = 0.0;
  double dev_spearman = 0.0;
  double seconds = 0.0;
};

struct TrainRecord {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 = never improved
  double best_metric = 0.0;
  std::string stop_reason;  // "patience" | "max_epochs" | "divergence"

  std::string to_lines() const;
};

struct TrainOptions {
  std::size_t batch_size = 8;
  std::size_t patience = 7;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 1;
  SelectionMetric selection = SelectionMetric::kAuto;
  // Test seam: when set, replaces the dev evaluation entirely. Receives the
  // 1-based epoch and the parameters after that epoch's updates.
  std::function<double(std::size_t, const ModelParams&)> dev_metric_override;

  void validate() const;
};

struct TrainResult {
  ModelParams best_params;
  TrainRecord record;
};

// Shuffled mini-batches, batch-averaged gradients, Adadelta, early stopping on
// the dev selection metric with strict improvement. Returns the checkpoint of
// the best recorded epoch. Divergence (non-finite loss or gradients) aborts
// with the last best checkpoint and stop_reason "divergence".
TrainResult train(const ModelConfig& config, const std::vector<Essay>& train_corpus,
                  const std::vector<Essay>& dev_corpus, const Vocabulary& vocab,
                  const ModelParams& initial, const TrainOptions& options);

struct SweepRow {
  double gamma_aes = 0.0;
  double dev_f05 = 0.0;
  double dev_qwk = 0.0;
  double dev_spearman = 0.0;
  double test_f05 = 0.0;
  double test_qwk = 0.0;
  bool has_test = false;
  std::size_t best_epoch = 0;
};

std::vector<double> default_gamma_grid();  // {0.0, 0.1, ..., 1.0}

// One full training run per grid point, identical seed, data and initial
// parameters. `test_corpus` may be null.
std::vector<SweepRow> sweep_gamma(const ModelConfig& config,
                                  const std::vector<Essay>& train_corpus,
                                  const std::vector<Essay>& dev_corpus,
                                  const std::vector<Essay>* test_corpus,
                                  const Vocabulary& vocab, const ModelParams& initial,
                                  const TrainOptions& options,
                                  const std::vector<double>& grid);

struct SweepArgmax {
  double ged_gamma = 0.0;  // argmax of dev F0.5
  double aes_gamma = 0.0;  // argmax of dev QWK
};
SweepArgmax sweep_argmax(const std::vector<SweepRow>& rows);

void write_sweep_file(const std::string& path, const std::vector<SweepRow>& rows);
// Parses what write_sweep_file emits; throws DataError on malformed rows.
// Doubles as the plot-data validator.
std::vector<SweepRow> parse_sweep_file(const std::string& path);

// Gradients of the combined loss for one essay, accumulated into `grads`.
// Returns the loss breakdown. Exposed for tests.
LossBreakdown accumulate_essay_gradients(Tape& tape, const ModelParams& params,
                                         const ModelConfig& config,
                                         const std::vector<std::size_t>& token_ids,
                                         const Essay& essay, ModelParams& grads);

}  // namespace essaynet
