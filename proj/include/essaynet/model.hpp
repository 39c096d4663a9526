#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "essaynet/corpus.hpp"
#include "essaynet/rng.hpp"
#include "essaynet/tape.hpp"

namespace essaynet {

struct ModelConfig {
  std::size_t embedding_dim = 300;
  std::size_t hidden_dim = 100;  // per direction
  double score_min = 1.0;
  double score_max = 20.0;
  double gamma_lm = 0.1;
  double gamma_aes = 0.1;
  double ged_threshold = 0.5;
  std::size_t lm_vocab_cap = 0;    // 0 = full vocabulary
  bool lm_sum_directions = false;  // default: average forward and backward losses

  void validate() const;  // throws ConfigError
  std::size_t lm_output_size(std::size_t vocab_size) const;
};

struct LstmWeights {
  Tensor w_input, u_input, b_input;
  Tensor w_forget, u_forget, b_forget;
  Tensor w_output, u_output, b_output;
  Tensor w_cell, u_cell, b_cell;
};

// All trainable weights. Tensor shapes (V vocab, E embedding, H hidden,
// C LM output size): embedding {V,E}; LSTM w {H,E}, u {H,H}, b {H};
// ged {2,2H}+{2}; lm heads {C,H}+{C}; aes {1,2H}+{1}.
struct ModelParams {
  Tensor embedding;
  LstmWeights fwd, bwd;
  Tensor ged_w, ged_b;
  Tensor lm_fwd_w, lm_fwd_b;
  Tensor lm_bwd_w, lm_bwd_b;
  Tensor aes_w, aes_b;

  // Non-embedding weights uniform in +-(6/(fan_in+fan_out))^0.5, biases zero;
  // the embedding matrix is taken as given (pretrained and/or random rows).
  static ModelParams init(const ModelConfig& config, std::size_t vocab_size,
                          Tensor embedding, std::uint64_t seed);
  static ModelParams zeros_like(const ModelParams& other);

  std::size_t vocab_size() const { return embedding.dim(0); }
  std::size_t hidden_dim() const { return fwd.u_input.dim(0); }

  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }
  Tensor& tensor_by_name(const std::string& name);
  const Tensor& tensor_by_name(const std::string& name) const;

  bool all_finite() const;
  bool same_values(const ModelParams& other) const;  // bitwise

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f("embedding", self.embedding);
    visit_lstm(self.fwd, "lstm_fwd.", f);
    visit_lstm(self.bwd, "lstm_bwd.", f);
    f("ged.weight", self.ged_w);
    f("ged.bias", self.ged_b);
    f("lm_fwd.weight", self.lm_fwd_w);
    f("lm_fwd.bias", self.lm_fwd_b);
    f("lm_bwd.weight", self.lm_bwd_w);
    f("lm_bwd.bias", self.lm_bwd_b);
    f("aes.weight", self.aes_w);
    f("aes.bias", self.aes_b);
  }
  template <class W, class F>
  static void visit_lstm(W& w, const char* prefix, F& f) {
    const std::string p(prefix);
    f(p + "w_input", w.w_input);
    f(p + "u_input", w.u_input);
    f(p + "b_input", w.b_input);
    f(p + "w_forget", w.w_forget);
    f(p + "u_forget", w.u_forget);
    f(p + "b_forget", w.b_forget);
    f(p + "w_output", w.w_output);
    f(p + "u_output", w.u_output);
    f(p + "b_output", w.b_output);
    f(p + "w_cell", w.w_cell);
    f(p + "u_cell", w.u_cell);
    f(p + "b_cell", w.b_cell);
  }
};

struct LstmNodeIds {
  NodeId w_input, u_input, b_input;
  NodeId w_forget, u_forget, b_forget;
  NodeId w_output, u_output, b_output;
  NodeId w_cell, u_cell, b_cell;
};

struct LstmStep {
  NodeId h, c;
};

// One standard LSTM step (forget gates, no peepholes):
//   i,f,o = sigmoid(Wx + Uh + b), g = tanh(...), c' = f.c + i.g, h' = o.tanh(c')
LstmStep lstm_cell(Tape& tape, NodeId x, NodeId h_prev, NodeId c_prev,
                   const LstmNodeIds& w);

struct ForwardGraph {
  std::vector<NodeId> concat_states;   // per token [h_fwd; h_bwd], shape {2H}
  std::vector<NodeId> ged_logits;      // per token, shape {2}: [correct, incorrect]
  std::vector<NodeId> lm_fwd_logits;   // entry k predicts token k+1 from h_fwd(k)
  std::vector<NodeId> lm_bwd_logits;   // entry k predicts token k from h_bwd(k+1)
  NodeId pooled = 0;
  NodeId score_preact = 0;
  NodeId score = 0;  // score_min + (score_max - score_min) * sigmoid(preact)
  std::map<std::string, NodeId> param_leaves;
  std::map<std::size_t, NodeId> embedding_row_leaves;  // token id -> leaf
};

ForwardGraph build_forward_graph(Tape& tape, const ModelParams& params,
                                 const ModelConfig& config,
                                 const std::vector<std::size_t>& token_ids);

struct LossBreakdown {
  double e_ged = 0.0;
  double e_lm = 0.0;
  double e_aes = 0.0;
  double gamma_lm = 0.0;
  double gamma_aes = 0.0;
  double total = 0.0;
};

// Combined objective. Interpolation form, algebraically equal to
// (1-g_aes)*(e_ged + g_lm*e_lm) + g_aes*e_aes; exact at g_aes = 1 and for
// decimal hand values, within one rounding of the direct form everywhere.
double combined_loss(double e_ged, double e_lm, double e_aes, double gamma_lm,
                     double gamma_aes);

struct LossGraph {
  NodeId e_ged = 0, e_lm = 0, e_aes = 0, total = 0;
  LossBreakdown values;
};

LossGraph build_loss_graph(Tape& tape, const ForwardGraph& graph,
                           const std::vector<std::size_t>& token_ids,
                           const std::vector<Label>& labels, int gold_score,
                           const ModelConfig& config);

struct ModelOutputs {
  std::vector<std::size_t> token_ids;
  std::vector<std::array<double, 2>> ged_probs;  // rows sum to 1
  std::vector<std::vector<double>> lm_fwd_logits;
  std::vector<std::vector<double>> lm_bwd_logits;
  double predicted_score = 0.0;  // strictly inside (score_min, score_max)
};

ModelOutputs forward(const ModelParams& params, const ModelConfig& config,
                     const std::vector<std::size_t>& token_ids);

// Pure recomputation of the loss from recorded outputs; matches the tape's
// loss graph up to elementary rounding differences.
LossBreakdown compute_loss(const ModelOutputs& outputs, const Essay& essay,
                           const ModelConfig& config);

std::vector<Label> predict_labels(const std::vector<std::array<double, 2>>& ged_probs,
                                  double threshold);

int round_score(double predicted, const ModelConfig& config);

// --------------------------------------------------------------- checkpoints
// Text manifest plus named little-endian f64 tensors; write-then-read is
// bit-exact. A trailing FNV-1a checksum over the tensor payload guards
// against truncation/corruption.

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
  std::map<std::string, std::string> manifest;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& config,
                     const std::map<std::string, std::string>& extra_manifest);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace essaynet
