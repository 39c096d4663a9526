#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "essaynet/errors.hpp"
#include "essaynet/training.hpp"

using namespace essaynet;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.embedding_dim = 6;
  cfg.hidden_dim = 8;
  cfg.gamma_lm = 0.1;
  cfg.gamma_aes = 0.4;
  return cfg;
}

struct Fixture {
  std::vector<Essay> train, dev;
  Vocabulary vocab;
  ModelParams params;
};

Fixture make_fixture(const ModelConfig& cfg, std::size_t essays, std::uint64_t seed) {
  SyntheticConfig syn;
  syn.vocab_size = 12;
  syn.essay_count = essays;
  syn.min_length = 4;
  syn.max_length = 8;
  syn.error_rate_min = 0.0;
  syn.error_rate_max = 0.6;
  syn.score_noise = 1;
  syn.seed = seed;
  SyntheticCorpora corpora = generate_synthetic(syn);
  Vocabulary vocab = Vocabulary::build(corpora.train, 1);
  Rng rng(seed);
  EmbeddingMatrix emb = random_embeddings(vocab.size(), cfg.embedding_dim, rng);
  ModelParams params = ModelParams::init(cfg, vocab.size(), std::move(emb.matrix), seed);
  return {std::move(corpora.train), std::move(corpora.dev), std::move(vocab),
          std::move(params)};
}

}  // namespace

TEST_CASE("adadelta first step from cold accumulators") {
  const ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 4, 1);
  AdadeltaState state = AdadeltaState::init(f.params);
  ModelParams grads = ModelParams::zeros_like(f.params);
  grads.aes_b[0] = 1.0;
  const double before = f.params.aes_b[0];
  REQUIRE(adadelta_update(state, f.params, grads));
  const double delta = f.params.aes_b[0] - before;
  CHECK(std::fabs(delta - (-4.4721e-3)) < 1e-6);
  CHECK(state.acc_grad.aes_b[0] == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(state.acc_update.aes_b[0] == doctest::Approx(0.05 * delta * delta).epsilon(1e-9));
}

TEST_CASE("adadelta with zero gradients leaves parameters unchanged and decays accumulators") {
  const ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 4, 2);
  AdadeltaState state = AdadeltaState::init(f.params);
  ModelParams grads = ModelParams::zeros_like(f.params);
  grads.aes_b[0] = 1.0;
  REQUIRE(adadelta_update(state, f.params, grads));
  const double acc_after_one = state.acc_grad.aes_b[0];

  const ModelParams snapshot = f.params;
  ModelParams zero_grads = ModelParams::zeros_like(f.params);
  REQUIRE(adadelta_update(state, f.params, zero_grads));
  CHECK(f.params.same_values(snapshot));
  CHECK(state.acc_grad.aes_b[0] == doctest::Approx(0.95 * acc_after_one).epsilon(1e-12));
}

TEST_CASE("adadelta steps oppose the gradient sign") {
  const ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 4, 3);
  AdadeltaState state = AdadeltaState::init(f.params);
  ModelParams grads = ModelParams::zeros_like(f.params);
  Rng rng(9);
  grads.visit([&](const std::string&, Tensor& g) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = rng.uniform(-2.0, 2.0);
  });
  const ModelParams before = f.params;
  REQUIRE(adadelta_update(state, f.params, grads));
  f.params.visit([&](const std::string& name, Tensor& p) {
    const Tensor& b = before.tensor_by_name(name);
    const Tensor& g = grads.tensor_by_name(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (g[i] == 0.0) continue;
      const double step = p[i] - b[i];
      CHECK(step * g[i] < 0.0);
    }
  });
}

TEST_CASE("adadelta rejects non-finite gradients with a named diagnostic") {
  const ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 4, 4);
  AdadeltaState state = AdadeltaState::init(f.params);
  ModelParams grads = ModelParams::zeros_like(f.params);
  grads.ged_b[0] = std::numeric_limits<double>::quiet_NaN();
  const ModelParams snapshot = f.params;
  std::string diag;
  CHECK_FALSE(adadelta_update(state, f.params, grads, &diag));
  CHECK(f.params.same_values(snapshot));
  CHECK(diag.find("ged.bias") != std::string::npos);
}

TEST_CASE("early stopping: 3 improving epochs then a plateau halts at epoch 10") {
  const ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 6, 5);
  TrainOptions opt;
  opt.batch_size = 3;
  opt.patience = 7;
  opt.max_epochs = 50;
  opt.seed = 5;
  std::map<std::size_t, ModelParams> snapshots;
  opt.dev_metric_override = [&](std::size_t epoch, const ModelParams& params) {
    snapshots.emplace(epoch, params);
    return epoch <= 3 ? 0.1 * static_cast<double>(epoch) : 0.3;
  };
  const TrainResult res = train(cfg, f.train, f.dev, f.vocab, f.params, opt);
  CHECK(res.record.epochs.size() == 10);
  CHECK(res.record.best_epoch == 3);
  CHECK(res.record.stop_reason == "patience");
  REQUIRE(snapshots.count(3) == 1);
  CHECK(res.best_params.same_values(snapshots.at(3)));
}

TEST_CASE("a max-epoch cap of one trains exactly one epoch and returns its parameters") {
  const ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 6, 6);
  TrainOptions opt;
  opt.batch_size = 2;
  opt.max_epochs = 1;
  opt.seed = 6;
  const TrainResult res = train(cfg, f.train, f.dev, f.vocab, f.params, opt);
  CHECK(res.record.epochs.size() == 1);
  CHECK(res.record.best_epoch == 1);
  CHECK(res.record.stop_reason == "max_epochs");
  CHECK_FALSE(res.best_params.same_values(f.params));  // an update happened
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  const ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 10, 7);
  TrainOptions opt;
  opt.batch_size = 4;
  opt.max_epochs = 4;
  opt.seed = 7;
  const TrainResult a = train(cfg, f.train, f.dev, f.vocab, f.params, opt);
  const TrainResult b = train(cfg, f.train, f.dev, f.vocab, f.params, opt);
  CHECK(a.best_params.same_values(b.best_params));
  REQUIRE(a.record.epochs.size() == b.record.epochs.size());
  for (std::size_t i = 0; i < a.record.epochs.size(); ++i) {
    CHECK(a.record.epochs[i].train_loss == b.record.epochs[i].train_loss);
    CHECK(a.record.epochs[i].dev_f05 == b.record.epochs[i].dev_f05);
    CHECK(a.record.epochs[i].dev_qwk == b.record.epochs[i].dev_qwk);
  }
  CHECK(a.record.best_epoch == b.record.best_epoch);
}

TEST_CASE("training reduces the loss on a small corpus") {
  const ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 8, 8);
  TrainOptions opt;
  opt.batch_size = 8;
  opt.max_epochs = 40;
  opt.patience = 40;
  opt.seed = 8;
  const TrainResult res = train(cfg, f.train, f.dev, f.vocab, f.params, opt);
  REQUIRE(res.record.epochs.size() >= 2);
  CHECK(res.record.epochs.back().train_loss < res.record.epochs.front().train_loss);
}

TEST_CASE("divergence aborts with the last good checkpoint and a reason") {
  const ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 6, 9);
  // gates squash mere overflow, so poison a parameter outright
  f.params.embedding.fill(std::numeric_limits<double>::quiet_NaN());
  TrainOptions opt;
  opt.batch_size = 2;
  opt.max_epochs = 5;
  opt.seed = 9;
  const TrainResult res = train(cfg, f.train, f.dev, f.vocab, f.params, opt);
  CHECK(res.record.stop_reason == "divergence");
  CHECK(res.record.best_epoch == 0);
  CHECK(res.best_params.same_values(f.params));  // never improved past the initial copy
}

TEST_CASE("selection metric resolution follows the task mix") {
  CHECK(resolve_selection(SelectionMetric::kAuto, 0.0) == SelectionMetric::kF05);
  CHECK(resolve_selection(SelectionMetric::kAuto, 0.5) == SelectionMetric::kF05);
  CHECK(resolve_selection(SelectionMetric::kAuto, 1.0) == SelectionMetric::kQwk);
  CHECK(resolve_selection(SelectionMetric::kQwk, 0.0) == SelectionMetric::kQwk);
  CHECK(selection_metric_from_string("f05") == SelectionMetric::kF05);
  CHECK_THROWS_AS(selection_metric_from_string("bogus"), ConfigError);
}

TEST_CASE("gamma sweep: detection gradients vanish at gamma_aes = 1") {
  ModelConfig cfg = tiny_config();
  cfg.gamma_aes = 1.0;
  Fixture f = make_fixture(cfg, 4, 10);
  Tape tape;
  ModelParams grads = ModelParams::zeros_like(f.params);
  const std::vector<std::size_t> ids = f.vocab.encode(f.train[0].tokens);
  accumulate_essay_gradients(tape, f.params, cfg, ids, f.train[0], grads);
  bool all_zero = true;
  for (std::size_t i = 0; i < grads.ged_w.size(); ++i) {
    if (grads.ged_w[i] != 0.0) all_zero = false;
  }
  CHECK(all_zero);
  // the scoring head still learns
  bool aes_nonzero = false;
  for (std::size_t i = 0; i < grads.aes_w.size(); ++i) {
    if (grads.aes_w[i] != 0.0) aes_nonzero = true;
  }
  CHECK(aes_nonzero);
}

TEST_CASE("sweep produces one row per grid point with a fixed seed across points") {
  ModelConfig cfg = tiny_config();
  Fixture f = make_fixture(cfg, 8, 11);
  TrainOptions opt;
  opt.batch_size = 4;
  opt.max_epochs = 2;
  opt.seed = 11;
  const std::vector<double> grid = {0.0, 1.0};
  const std::vector<SweepRow> rows =
      sweep_gamma(cfg, f.train, f.dev, nullptr, f.vocab, f.params, opt, grid);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].gamma_aes == 0.0);
  CHECK(rows[1].gamma_aes == 1.0);

  const std::vector<SweepRow> again =
      sweep_gamma(cfg, f.train, f.dev, nullptr, f.vocab, f.params, opt, grid);
  CHECK(rows[0].dev_f05 == again[0].dev_f05);
  CHECK(rows[1].dev_qwk == again[1].dev_qwk);
}

TEST_CASE("sweep files round-trip through the parser") {
  std::vector<SweepRow> rows;
  for (int i = 0; i <= 10; ++i) {
    SweepRow r;
    r.gamma_aes = static_cast<double>(i) / 10.0;
    r.dev_f05 = 0.1 * i;
    r.dev_qwk = 0.05 * i;
    r.dev_spearman = 0.02 * i;
    r.best_epoch = static_cast<std::size_t>(i + 1);
    rows.push_back(r);
  }
  const std::string path = "sweep_roundtrip_test.txt";
  write_sweep_file(path, rows);
  const std::vector<SweepRow> reread = parse_sweep_file(path);
  REQUIRE(reread.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(reread[i].gamma_aes == doctest::Approx(rows[i].gamma_aes).epsilon(1e-9));
    CHECK(reread[i].dev_f05 == doctest::Approx(rows[i].dev_f05).epsilon(1e-6));
    CHECK(reread[i].best_epoch == rows[i].best_epoch);
  }
  const SweepArgmax am = sweep_argmax(reread);
  CHECK(am.ged_gamma == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(am.aes_gamma == doctest::Approx(1.0).epsilon(1e-9));
  std::remove(path.c_str());
}

TEST_CASE("train record serialization carries the stop reason and best epoch") {
  TrainRecord rec;
  rec.epochs.push_back({1, 2.5, 0.3, 0.2, 0.1, 0.01});
  rec.best_epoch = 1;
  rec.best_metric = 0.3;
  rec.stop_reason = "patience";
  const std::string lines = rec.to_lines();
  CHECK(lines.find("epoch=1") != std::string::npos);
  CHECK(lines.find("stop_reason=patience") != std::string::npos);
  CHECK(lines.find("best_epoch=1") != std::string::npos);
}
