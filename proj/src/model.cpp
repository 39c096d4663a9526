#include "essaynet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "essaynet/errors.hpp"

namespace essaynet {

void ModelConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (!(score_min < score_max)) throw ConfigError("score_min must be < score_max");
  if (gamma_lm < 0.0) throw ConfigError("gamma_lm must be >= 0");
  if (gamma_aes < 0.0 || gamma_aes > 1.0) throw ConfigError("gamma_aes must be in [0,1]");
  if (ged_threshold <= 0.0 || ged_threshold >= 1.0) {
    throw ConfigError("ged_threshold must be in (0,1)");
  }
}

std::size_t ModelConfig::lm_output_size(std::size_t vocab_size) const {
  if (lm_vocab_cap == 0) return vocab_size;
  return std::min(lm_vocab_cap, vocab_size);
}

namespace {

Tensor glorot(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
              Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

LstmWeights init_lstm(std::size_t hidden, std::size_t input, Rng& rng) {
  LstmWeights w;
  const auto gate_w = [&] { return glorot({hidden, input}, input, hidden, rng); };
  const auto gate_u = [&] { return glorot({hidden, hidden}, hidden, hidden, rng); };
  w.w_input = gate_w();
  w.u_input = gate_u();
  w.b_input = Tensor({hidden});
  w.w_forget = gate_w();
  w.u_forget = gate_u();
  w.b_forget = Tensor({hidden});
  w.w_output = gate_w();
  w.u_output = gate_u();
  w.b_output = Tensor({hidden});
  w.w_cell = gate_w();
  w.u_cell = gate_u();
  w.b_cell = Tensor({hidden});
  return w;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::size_t vocab_size,
                              Tensor embedding, std::uint64_t seed) {
  config.validate();
  if (embedding.rank() != 2 || embedding.dim(0) != vocab_size ||
      embedding.dim(1) != config.embedding_dim) {
    throw ConfigError("embedding matrix shape " + embedding.shape_str() +
                      " does not match vocab size " + std::to_string(vocab_size) +
                      " x embedding_dim " + std::to_string(config.embedding_dim));
  }
  Rng rng(seed);
  const std::size_t h = config.hidden_dim;
  const std::size_t e = config.embedding_dim;
  const std::size_t c = config.lm_output_size(vocab_size);

  ModelParams p;
  p.embedding = std::move(embedding);
  p.fwd = init_lstm(h, e, rng);
  p.bwd = init_lstm(h, e, rng);
  p.ged_w = glorot({2, 2 * h}, 2 * h, 2, rng);
  p.ged_b = Tensor({2});
  p.lm_fwd_w = glorot({c, h}, h, c, rng);
  p.lm_fwd_b = Tensor({c});
  p.lm_bwd_w = glorot({c, h}, h, c, rng);
  p.lm_bwd_b = Tensor({c});
  p.aes_w = glorot({1, 2 * h}, 2 * h, 1, rng);
  p.aes_b = Tensor({1});
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p;
  std::vector<Tensor*> dst;
  p.visit([&](const std::string&, Tensor& t) { dst.push_back(&t); });
  std::size_t i = 0;
  other.visit([&](const std::string&, const Tensor& t) { *dst[i++] = Tensor(t.shape()); });
  return p;
}

Tensor& ModelParams::tensor_by_name(const std::string& name) {
  Tensor* found = nullptr;
  visit([&](const std::string& n, Tensor& t) {
    if (n == name) found = &t;
  });
  if (!found) throw std::invalid_argument("ModelParams: unknown tensor '" + name + "'");
  return *found;
}

const Tensor& ModelParams::tensor_by_name(const std::string& name) const {
  const Tensor* found = nullptr;
  visit([&](const std::string& n, const Tensor& t) {
    if (n == name) found = &t;
  });
  if (!found) throw std::invalid_argument("ModelParams: unknown tensor '" + name + "'");
  return *found;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Tensor& t) { ok = ok && t.all_finite(); });
  return ok;
}

bool ModelParams::same_values(const ModelParams& other) const {
  bool same = true;
  visit([&](const std::string& name, const Tensor& t) {
    const Tensor& u = other.tensor_by_name(name);
    if (!t.same_shape(u) ||
        std::memcmp(t.data(), u.data(), t.size() * sizeof(double)) != 0) {
      same = false;
    }
  });
  return same;
}

LstmStep lstm_cell(Tape& tape, NodeId x, NodeId h_prev, NodeId c_prev,
                   const LstmNodeIds& w) {
  const auto gate = [&](NodeId wx, NodeId uh, NodeId b) {
    return tape.add(tape.add(tape.matmul(wx, x), tape.matmul(uh, h_prev)), b);
  };
  const NodeId i = tape.sigmoid(gate(w.w_input, w.u_input, w.b_input));
  const NodeId f = tape.sigmoid(gate(w.w_forget, w.u_forget, w.b_forget));
  const NodeId o = tape.sigmoid(gate(w.w_output, w.u_output, w.b_output));
  const NodeId g = tape.tanh(gate(w.w_cell, w.u_cell, w.b_cell));
  const NodeId c = tape.add(tape.multiply(f, c_prev), tape.multiply(i, g));
  const NodeId h = tape.multiply(o, tape.tanh(c));
  return {h, c};
}

namespace {

LstmNodeIds bind_lstm(Tape& tape, const LstmWeights& w, const std::string& prefix,
                      std::map<std::string, NodeId>& leaves) {
  const auto bind = [&](const char* name, const Tensor& t) {
    const NodeId id = tape.leaf(t);
    leaves[prefix + name] = id;
    return id;
  };
  LstmNodeIds ids;
  ids.w_input = bind("w_input", w.w_input);
  ids.u_input = bind("u_input", w.u_input);
  ids.b_input = bind("b_input", w.b_input);
  ids.w_forget = bind("w_forget", w.w_forget);
  ids.u_forget = bind("u_forget", w.u_forget);
  ids.b_forget = bind("b_forget", w.b_forget);
  ids.w_output = bind("w_output", w.w_output);
  ids.u_output = bind("u_output", w.u_output);
  ids.b_output = bind("b_output", w.b_output);
  ids.w_cell = bind("w_cell", w.w_cell);
  ids.u_cell = bind("u_cell", w.u_cell);
  ids.b_cell = bind("b_cell", w.b_cell);
  return ids;
}

}  // namespace

ForwardGraph build_forward_graph(Tape& tape, const ModelParams& params,
                                 const ModelConfig& config,
                                 const std::vector<std::size_t>& token_ids) {
  if (token_ids.empty()) throw DataError("forward: empty token sequence");
  const std::size_t n = token_ids.size();
  const std::size_t v = params.vocab_size();
  for (std::size_t id : token_ids) {
    if (id >= v) {
      throw DataError("forward: token id " + std::to_string(id) +
                      " outside vocabulary of size " + std::to_string(v));
    }
  }

  ForwardGraph g;
  const LstmNodeIds fwd = bind_lstm(tape, params.fwd, "lstm_fwd.", g.param_leaves);
  const LstmNodeIds bwd = bind_lstm(tape, params.bwd, "lstm_bwd.", g.param_leaves);
  const auto bind = [&](const char* name, const Tensor& t) {
    const NodeId id = tape.leaf(t);
    g.param_leaves[name] = id;
    return id;
  };
  const NodeId ged_w = bind("ged.weight", params.ged_w);
  const NodeId ged_b = bind("ged.bias", params.ged_b);
  const NodeId lmf_w = bind("lm_fwd.weight", params.lm_fwd_w);
  const NodeId lmf_b = bind("lm_fwd.bias", params.lm_fwd_b);
  const NodeId lmb_w = bind("lm_bwd.weight", params.lm_bwd_w);
  const NodeId lmb_b = bind("lm_bwd.bias", params.lm_bwd_b);
  const NodeId aes_w = bind("aes.weight", params.aes_w);
  const NodeId aes_b = bind("aes.bias", params.aes_b);

  std::vector<NodeId> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto it = g.embedding_row_leaves.find(token_ids[t]);
    if (it == g.embedding_row_leaves.end()) {
      it = g.embedding_row_leaves
               .emplace(token_ids[t], tape.leaf(params.embedding.row(token_ids[t])))
               .first;
    }
    x[t] = it->second;
  }

  const std::size_t h = config.hidden_dim;
  std::vector<NodeId> h_fwd(n), h_bwd(n);
  NodeId state_h = tape.leaf(Tensor({h}));
  NodeId state_c = tape.leaf(Tensor({h}));
  for (std::size_t t = 0; t < n; ++t) {
    const LstmStep s = lstm_cell(tape, x[t], state_h, state_c, fwd);
    h_fwd[t] = s.h;
    state_h = s.h;
    state_c = s.c;
  }
  state_h = tape.leaf(Tensor({h}));
  state_c = tape.leaf(Tensor({h}));
  for (std::size_t t = n; t-- > 0;) {
    const LstmStep s = lstm_cell(tape, x[t], state_h, state_c, bwd);
    h_bwd[t] = s.h;
    state_h = s.h;
    state_c = s.c;
  }

  g.concat_states.resize(n);
  g.ged_logits.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    g.concat_states[t] = tape.concat({h_fwd[t], h_bwd[t]});
    g.ged_logits[t] = tape.add(tape.matmul(ged_w, g.concat_states[t]), ged_b);
  }
  for (std::size_t t = 0; t + 1 < n; ++t) {
    g.lm_fwd_logits.push_back(tape.add(tape.matmul(lmf_w, h_fwd[t]), lmf_b));
    g.lm_bwd_logits.push_back(tape.add(tape.matmul(lmb_w, h_bwd[t + 1]), lmb_b));
  }

  g.pooled = tape.mean_over_time(g.concat_states);
  g.score_preact = tape.add(tape.matmul(aes_w, g.pooled), aes_b);
  g.score = tape.scale_shift(tape.sigmoid(g.score_preact),
                             config.score_max - config.score_min, config.score_min);
  return g;
}

double combined_loss(double e_ged, double e_lm, double e_aes, double gamma_lm,
                     double gamma_aes) {
  const double detection = e_ged + gamma_lm * e_lm;
  return e_aes + (1.0 - gamma_aes) * (detection - e_aes);
}

LossGraph build_loss_graph(Tape& tape, const ForwardGraph& graph,
                           const std::vector<std::size_t>& token_ids,
                           const std::vector<Label>& labels, int gold_score,
                           const ModelConfig& config) {
  const std::size_t n = token_ids.size();
  if (labels.size() != n || graph.ged_logits.size() != n) {
    throw DataError("loss: token/label count mismatch (" + std::to_string(n) + " tokens, " +
                    std::to_string(labels.size()) + " labels)");
  }

  LossGraph out;
  std::vector<NodeId> ged_ces(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t target = labels[t] == Label::kIncorrect ? 1 : 0;
    ged_ces[t] = tape.softmax_cross_entropy(graph.ged_logits[t], target);
  }
  out.e_ged = tape.mean_over_time(ged_ces);

  const std::size_t lm_size =
      graph.lm_fwd_logits.empty() ? 0 : tape.value(graph.lm_fwd_logits[0]).size();
  const auto cap = [&](std::size_t id) {
    return id < lm_size ? id : Vocabulary::kUnkId;
  };
  if (n >= 2) {
    std::vector<NodeId> fwd_ces, bwd_ces;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      fwd_ces.push_back(tape.softmax_cross_entropy(graph.lm_fwd_logits[k], cap(token_ids[k + 1])));
      bwd_ces.push_back(tape.softmax_cross_entropy(graph.lm_bwd_logits[k], cap(token_ids[k])));
    }
    const NodeId fwd_mean = tape.mean_over_time(fwd_ces);
    const NodeId bwd_mean = tape.mean_over_time(bwd_ces);
    const NodeId both = tape.add(fwd_mean, bwd_mean);
    out.e_lm = config.lm_sum_directions ? both : tape.scale_shift(both, 0.5, 0.0);
  } else {
    out.e_lm = tape.leaf(Tensor::scalar(0.0));
  }

  out.e_aes = tape.squared_error(graph.score, tape.leaf(Tensor::scalar(gold_score)));

  // total = e_aes + (1 - g_aes) * ((e_ged + g_lm * e_lm) - e_aes); see combined_loss
  const NodeId detection = tape.add(out.e_ged, tape.scale_shift(out.e_lm, config.gamma_lm, 0.0));
  const NodeId diff = tape.add(detection, tape.scale_shift(out.e_aes, -1.0, 0.0));
  out.total = tape.add(out.e_aes, tape.scale_shift(diff, 1.0 - config.gamma_aes, 0.0));

  out.values.e_ged = tape.value(out.e_ged)[0];
  out.values.e_lm = tape.value(out.e_lm)[0];
  out.values.e_aes = tape.value(out.e_aes)[0];
  out.values.gamma_lm = config.gamma_lm;
  out.values.gamma_aes = config.gamma_aes;
  out.values.total = tape.value(out.total)[0];
  return out;
}

namespace {

std::array<double, 2> softmax2(const Tensor& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

double cross_entropy_from_logits(const std::vector<double>& logits, std::size_t target) {
  double m = logits[0];
  for (double z : logits) m = std::max(m, z);
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return m + std::log(s) - logits[target];
}

}  // namespace

ModelOutputs forward(const ModelParams& params, const ModelConfig& config,
                     const std::vector<std::size_t>& token_ids) {
  Tape tape;
  const ForwardGraph g = build_forward_graph(tape, params, config, token_ids);

  ModelOutputs out;
  out.token_ids = token_ids;
  out.ged_probs.reserve(token_ids.size());
  for (NodeId id : g.ged_logits) out.ged_probs.push_back(softmax2(tape.value(id)));
  for (NodeId id : g.lm_fwd_logits) out.lm_fwd_logits.push_back(tape.value(id).values());
  for (NodeId id : g.lm_bwd_logits) out.lm_bwd_logits.push_back(tape.value(id).values());

  // Keep the reported score strictly inside the open interval even when the
  // sigmoid saturates to 0 or 1 in f64.
  const double lo = std::nextafter(config.score_min, config.score_max);
  const double hi = std::nextafter(config.score_max, config.score_min);
  out.predicted_score = std::clamp(tape.value(g.score)[0], lo, hi);
  return out;
}

LossBreakdown compute_loss(const ModelOutputs& outputs, const Essay& essay,
                           const ModelConfig& config) {
  const std::size_t n = essay.tokens.size();
  if (outputs.token_ids.size() != n || outputs.ged_probs.size() != n ||
      essay.labels.size() != n) {
    throw DataError("compute_loss: outputs/essay length mismatch");
  }
  if (!essay.gold_score) throw DataError("compute_loss: essay '" + essay.id + "' has no gold score");

  std::vector<double> ged_ces(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t target = essay.labels[t] == Label::kIncorrect ? 1 : 0;
    ged_ces[t] = -std::log(outputs.ged_probs[t][target]);
  }

  LossBreakdown b;
  b.e_ged = stable_mean(ged_ces.data(), n);
  b.gamma_lm = config.gamma_lm;
  b.gamma_aes = config.gamma_aes;

  if (n >= 2) {
    const std::size_t lm_size = outputs.lm_fwd_logits[0].size();
    const auto cap = [&](std::size_t id) { return id < lm_size ? id : Vocabulary::kUnkId; };
    std::vector<double> fwd_ces, bwd_ces;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      fwd_ces.push_back(cross_entropy_from_logits(outputs.lm_fwd_logits[k],
                                                  cap(outputs.token_ids[k + 1])));
      bwd_ces.push_back(cross_entropy_from_logits(outputs.lm_bwd_logits[k],
                                                  cap(outputs.token_ids[k])));
    }
    const double both = stable_mean(fwd_ces.data(), fwd_ces.size()) +
                        stable_mean(bwd_ces.data(), bwd_ces.size());
    b.e_lm = config.lm_sum_directions ? both : 0.5 * both;
  }

  const double d = outputs.predicted_score - static_cast<double>(*essay.gold_score);
  b.e_aes = d * d;
  b.total = combined_loss(b.e_ged, b.e_lm, b.e_aes, b.gamma_lm, b.gamma_aes);
  return b;
}

std::vector<Label> predict_labels(const std::vector<std::array<double, 2>>& ged_probs,
                                  double threshold) {
  std::vector<Label> out;
  out.reserve(ged_probs.size());
  for (const auto& p : ged_probs) {
    out.push_back(p[1] >= threshold ? Label::kIncorrect : Label::kCorrect);
  }
  return out;
}

int round_score(double predicted, const ModelConfig& config) {
  const int lo = static_cast<int>(std::lround(config.score_min));
  const int hi = static_cast<int>(std::lround(config.score_max));
  return std::clamp(static_cast<int>(std::floor(predicted + 0.5)), lo, hi);
}

// --------------------------------------------------------------- checkpoints

namespace {

constexpr char kCheckpointMagic[] = "essaynet-checkpoint v1";

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void append_le_u64(std::string& out, std::uint64_t bits) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint64_t read_le_u64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return bits;
}

std::map<std::string, std::string> config_manifest(const ModelConfig& c) {
  return {
      {"embedding_dim", std::to_string(c.embedding_dim)},
      {"hidden_dim", std::to_string(c.hidden_dim)},
      {"score_min", format_double(c.score_min)},
      {"score_max", format_double(c.score_max)},
      {"gamma_lm", format_double(c.gamma_lm)},
      {"gamma_aes", format_double(c.gamma_aes)},
      {"ged_threshold", format_double(c.ged_threshold)},
      {"lm_vocab_cap", std::to_string(c.lm_vocab_cap)},
      {"lm_combination", c.lm_sum_directions ? "sum" : "average"},
  };
}

ModelConfig config_from_manifest(const std::map<std::string, std::string>& m,
                                 const std::string& path) {
  const auto get = [&](const char* key) -> const std::string& {
    const auto it = m.find(key);
    if (it == m.end()) throw DataError(path + ": checkpoint manifest missing key " + key);
    return it->second;
  };
  ModelConfig c;
  c.embedding_dim = std::stoull(get("embedding_dim"));
  c.hidden_dim = std::stoull(get("hidden_dim"));
  c.score_min = std::stod(get("score_min"));
  c.score_max = std::stod(get("score_max"));
  c.gamma_lm = std::stod(get("gamma_lm"));
  c.gamma_aes = std::stod(get("gamma_aes"));
  c.ged_threshold = std::stod(get("ged_threshold"));
  c.lm_vocab_cap = std::stoull(get("lm_vocab_cap"));
  c.lm_sum_directions = get("lm_combination") == "sum";
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& config,
                     const std::map<std::string, std::string>& extra_manifest) {
  std::map<std::string, std::string> manifest = config_manifest(config);
  for (const auto& [k, v] : extra_manifest) manifest[k] = v;

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  params.visit([&](const std::string& name, const Tensor& t) {
    tensors.emplace_back(name, &t);
  });

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << kCheckpointMagic << '\n';
  out << "manifest " << manifest.size() << '\n';
  for (const auto& [k, v] : manifest) out << k << '=' << v << '\n';
  out << "tensors " << tensors.size() << '\n';

  std::uint64_t checksum = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : tensors) {
    out << "tensor " << name << ' ' << t->rank();
    for (std::size_t d : t->shape()) out << ' ' << d;
    out << '\n';
    std::string payload;
    payload.reserve(t->size() * 8);
    for (std::size_t i = 0; i < t->size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &t->data()[i], 8);
      append_le_u64(payload, bits);
    }
    checksum = fnv1a64(payload.data(), payload.size(), checksum);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out << '\n';
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(checksum));
  out << "checksum " << hex << '\n';
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  const auto integrity_fail = [&](const std::string& why) -> void {
    throw DataError(path + ": checkpoint integrity check failed (" + why + ")");
  };

  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) integrity_fail("bad magic");

  Checkpoint ck;
  if (!std::getline(in, line) || line.rfind("manifest ", 0) != 0) integrity_fail("missing manifest");
  const std::size_t manifest_count = std::stoull(line.substr(9));
  for (std::size_t i = 0; i < manifest_count; ++i) {
    if (!std::getline(in, line)) integrity_fail("truncated manifest");
    const auto eq = line.find('=');
    if (eq == std::string::npos) integrity_fail("malformed manifest line");
    ck.manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ck.config = config_from_manifest(ck.manifest, path);

  if (!std::getline(in, line) || line.rfind("tensors ", 0) != 0) integrity_fail("missing tensors");
  const std::size_t tensor_count = std::stoull(line.substr(8));

  std::map<std::string, Tensor> loaded;
  std::uint64_t checksum = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < tensor_count; ++i) {
    if (!std::getline(in, line)) integrity_fail("truncated tensor header");
    std::istringstream hs(line);
    std::string tag, name;
    std::size_t rank = 0;
    hs >> tag >> name >> rank;
    if (tag != "tensor" || rank == 0 || rank > 2) integrity_fail("malformed tensor header");
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (std::size_t d = 0; d < rank; ++d) {
      hs >> shape[d];
      count *= shape[d];
    }
    if (!hs || count == 0) integrity_fail("malformed tensor shape");

    std::vector<char> payload(count * 8);
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (in.gcount() != static_cast<std::streamsize>(payload.size())) {
      integrity_fail("truncated tensor payload");
    }
    in.get();  // trailing newline
    checksum = fnv1a64(payload.data(), payload.size(), checksum);

    std::vector<double> values(count);
    for (std::size_t e = 0; e < count; ++e) {
      const std::uint64_t bits =
          read_le_u64(reinterpret_cast<const unsigned char*>(payload.data()) + e * 8);
      std::memcpy(&values[e], &bits, 8);
    }
    loaded.emplace(name, Tensor(std::move(shape), std::move(values)));
  }

  if (!std::getline(in, line) || line.rfind("checksum ", 0) != 0) integrity_fail("missing checksum");
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(checksum));
  if (line.substr(9) != hex) integrity_fail("checksum mismatch");

  ck.params.visit([&](const std::string& name, Tensor& t) {
    const auto it = loaded.find(name);
    if (it == loaded.end()) integrity_fail("missing tensor " + name);
    t = std::move(it->second);
  });
  if (ck.params.embedding.dim(1) != ck.config.embedding_dim ||
      ck.params.fwd.u_input.dim(0) != ck.config.hidden_dim) {
    integrity_fail("tensor shapes disagree with manifest config");
  }
  return ck;
}

}  // namespace essaynet
