#include "essaynet/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "essaynet/errors.hpp"

namespace essaynet {

const char* const Vocabulary::kUnkToken = "<unk>";
const char* const Vocabulary::kBoundaryToken = "<s>";

double Essay::error_fraction() const {
  if (tokens.empty()) return 0.0;
  std::size_t bad = 0;
  for (Label l : labels) bad += (l == Label::kIncorrect) ? 1 : 0;
  return static_cast<double>(bad) / static_cast<double>(tokens.size());
}

const std::vector<std::string>& exam_grade_order() {
  static const std::vector<std::string> order = {"1.1", "1.2", "1.3", "2.1", "2.2",
                                                 "2.3", "3.1", "3.2", "3.3", "4.1",
                                                 "4.2", "4.3", "5.1", "5.2", "5.3"};
  return order;
}

std::optional<int> map_exam_score(const std::string& exam_score) {
  static const std::map<std::string, int> table = {
      {"1.1", 1},  {"1.2", 4},  {"1.3", 8},  {"2.1", 9},  {"2.2", 10},
      {"2.3", 11}, {"3.1", 12}, {"3.2", 13}, {"3.3", 14}, {"4.1", 15},
      {"4.2", 16}, {"4.3", 17}, {"5.1", 18}, {"5.2", 19}, {"5.3", 20}};
  if (exam_score == "0") return std::nullopt;
  const auto it = table.find(exam_score);
  if (it == table.end()) {
    throw DataError("unknown exam grade '" + exam_score + "' (expected 1.1..5.3 or 0)");
  }
  return it->second;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary Vocabulary::build(const std::vector<Essay>& essays, std::size_t min_count) {
  if (min_count < 1) throw ConfigError("build_vocabulary: min_count must be >= 1");
  if (essays.empty()) throw DataError("build_vocabulary: empty corpus");

  std::map<std::string, std::size_t> counts;
  for (const Essay& e : essays) {
    for (const std::string& t : e.tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens = {kUnkToken, kBoundaryToken};
  for (const auto& [tok, count] : entries) {
    if (count < min_count) continue;
    if (tok == kUnkToken || tok == kBoundaryToken) continue;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
  if (id_to_token.size() < 2 || id_to_token[0] != kUnkToken ||
      id_to_token[1] != kBoundaryToken) {
    throw DataError("vocabulary must start with reserved tokens <unk>, <s>");
  }
  Vocabulary v;
  v.id_to_token_ = std::move(id_to_token);
  for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
    if (!v.token_to_id_.emplace(v.id_to_token_[i], i).second) {
      throw DataError("vocabulary: duplicate token '" + v.id_to_token_[i] + "'");
    }
  }
  return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
  const auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(id(t));
  return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& t : id_to_token_) {
    h = fnv1a64(t.data(), t.size(), h);
    h = fnv1a64("\n", 1, h);
  }
  return h;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path);
  for (const std::string& t : id_to_token_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary file " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

// ---------------------------------------------------------------- embeddings

EmbeddingMatrix random_embeddings(std::size_t vocab_size, std::size_t dim, Rng& rng) {
  EmbeddingMatrix emb;
  emb.matrix = Tensor({vocab_size, dim});
  emb.sources.assign(vocab_size, RowSource::kRandomInit);
  for (std::size_t i = 0; i < emb.matrix.size(); ++i) {
    emb.matrix[i] = rng.uniform(-0.05, 0.05);
  }
  return emb;
}

EmbeddingMatrix load_embeddings(const std::string& path, const Vocabulary& vocab,
                                std::size_t fallback_dim, Rng& rng) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read embeddings file " + path);

  std::unordered_map<std::string, std::vector<double>> rows;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string token;
    is >> token;
    std::vector<double> v;
    double x;
    while (is >> x) v.push_back(x);
    if (v.empty()) {
      throw DataError(path + " line " + std::to_string(line_no) + ": no vector values");
    }
    if (dim == 0) {
      dim = v.size();
    } else if (v.size() != dim) {
      throw DataError(path + " line " + std::to_string(line_no) + ": dimension " +
                      std::to_string(v.size()) + " != " + std::to_string(dim));
    }
    rows[token] = std::move(v);
  }

  if (rows.empty()) {
    std::cerr << "warning: embeddings file " << path
              << " is empty; all rows randomly initialised\n";
    dim = fallback_dim;
  }

  EmbeddingMatrix emb = random_embeddings(vocab.size(), dim, rng);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto it = rows.find(vocab.token(i));
    if (it == rows.end()) continue;
    for (std::size_t j = 0; j < dim; ++j) emb.matrix.at(i, j) = it->second[j];
    emb.sources[i] = RowSource::kPretrained;
  }
  return emb;
}

// ------------------------------------------------------------------- parsing

namespace {

[[noreturn]] void parse_fail(const std::string& name, std::size_t line_no,
                             const std::string& msg) {
  throw DataError(name + " line " + std::to_string(line_no) + ": " + msg);
}

struct HeaderFields {
  std::string id;
  std::string score;  // empty if absent
};

HeaderFields parse_header(const std::string& name, std::size_t line_no,
                          const std::string& line) {
  HeaderFields h;
  std::istringstream is(line.substr(1));
  std::string field;
  while (is >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) parse_fail(name, line_no, "malformed header field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string value = field.substr(eq + 1);
    if (key == "id") {
      h.id = value;
    } else if (key == "score") {
      h.score = value;
    } else {
      parse_fail(name, line_no, "unknown header key '" + key + "'");
    }
  }
  if (h.id.empty()) parse_fail(name, line_no, "header missing id=");
  return h;
}

// Returns nullopt when the score marks a removed essay.
std::optional<int> resolve_score(const std::string& name, std::size_t line_no,
                                 const std::string& score) {
  if (score.find('.') != std::string::npos) {
    try {
      return map_exam_score(score);
    } catch (const DataError& e) {
      parse_fail(name, line_no, e.what());
    }
  }
  int v = 0;
  try {
    std::size_t used = 0;
    v = std::stoi(score, &used);
    if (used != score.size()) throw std::invalid_argument(score);
  } catch (const std::exception&) {
    parse_fail(name, line_no, "malformed score '" + score + "'");
  }
  if (v == 0) return std::nullopt;  // grade 0: removed essay
  if (v < 1 || v > 20) parse_fail(name, line_no, "score " + std::to_string(v) + " outside [1,20]");
  return v;
}

}  // namespace

std::vector<Essay> parse_corpus_stream(std::istream& in, const std::string& name,
                                       const ParseOptions& opts) {
  std::vector<Essay> essays;
  Essay current;
  bool in_essay = false;
  bool removed = false;
  bool any_unlabeled = false;
  std::size_t header_line = 0;

  const auto flush = [&](std::size_t line_no) {
    if (!in_essay) return;
    // drop a trailing sentence boundary
    if (!current.tokens.empty() && current.tokens.back() == Vocabulary::kBoundaryToken) {
      current.tokens.pop_back();
      current.labels.pop_back();
    }
    if (!removed) {
      if (current.tokens.empty()) {
        parse_fail(name, header_line > 0 ? header_line : line_no,
                   "essay '" + current.id + "' has no tokens");
      }
      current.labeled = !any_unlabeled;
      essays.push_back(std::move(current));
    }
    current = Essay{};
    in_essay = false;
    removed = false;
    any_unlabeled = false;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    if (!line.empty() && line[0] == '#') {
      flush(line_no);
      const HeaderFields h = parse_header(name, line_no, line);
      header_line = line_no;
      in_essay = true;
      current.id = h.id;
      if (h.score.empty()) {
        if (opts.require_scores) parse_fail(name, line_no, "header missing score=");
        current.gold_score = std::nullopt;
      } else {
        current.gold_score = resolve_score(name, line_no, h.score);
        removed = !current.gold_score.has_value();
      }
      continue;
    }

    if (line.empty()) {
      // sentence boundary inside an essay; coalesce consecutive blanks
      if (in_essay && !current.tokens.empty() &&
          current.tokens.back() != Vocabulary::kBoundaryToken) {
        current.tokens.push_back(Vocabulary::kBoundaryToken);
        current.labels.push_back(Label::kCorrect);
      }
      continue;
    }

    if (!in_essay) parse_fail(name, line_no, "token line before any essay header");

    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      if (opts.require_labels) {
        parse_fail(name, line_no, "token line missing label (expected <token>\\t<c|i>)");
      }
      current.tokens.push_back(line);
      current.labels.push_back(Label::kCorrect);
      any_unlabeled = true;
      continue;
    }
    const std::string token = line.substr(0, tab);
    const std::string label = line.substr(tab + 1);
    if (token.empty()) parse_fail(name, line_no, "empty token");
    if (label == "c") {
      current.labels.push_back(Label::kCorrect);
    } else if (label == "i") {
      current.labels.push_back(Label::kIncorrect);
    } else {
      parse_fail(name, line_no, "label '" + label + "' is not 'c' or 'i'");
    }
    current.tokens.push_back(token);
  }
  flush(line_no + 1);
  return essays;
}

std::vector<Essay> parse_corpus(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file " + path);
  return parse_corpus_stream(in, path, opts);
}

void serialize_corpus(std::ostream& out, const std::vector<Essay>& essays) {
  for (const Essay& e : essays) {
    out << "# id=" << e.id;
    if (e.gold_score) out << " score=" << *e.gold_score;
    out << '\n';
    for (std::size_t t = 0; t < e.tokens.size(); ++t) {
      if (e.tokens[t] == Vocabulary::kBoundaryToken) {
        out << '\n';
        continue;
      }
      out << e.tokens[t];
      if (e.labeled) out << '\t' << (e.labels[t] == Label::kIncorrect ? 'i' : 'c');
      out << '\n';
    }
  }
}

void write_corpus(const std::string& path, const std::vector<Essay>& essays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path);
  serialize_corpus(out, essays);
}

// ----------------------------------------------------------------- synthetic

void SyntheticConfig::validate() const {
  if (vocab_size < 4) throw ConfigError("synthetic: vocab_size must be >= 4");
  if (essay_count < 1) throw ConfigError("synthetic: essay_count must be >= 1");
  if (min_length < 1 || max_length < min_length) {
    throw ConfigError("synthetic: need 1 <= min_length <= max_length");
  }
  if (error_rate_min < 0.0 || error_rate_max > 1.0 || error_rate_min > error_rate_max) {
    throw ConfigError("synthetic: error rate range must satisfy 0 <= min <= max <= 1");
  }
  if (score_noise < 0) throw ConfigError("synthetic: score_noise must be >= 0");
}

namespace {

std::string synthetic_token(std::size_t k, std::size_t vocab_size) {
  std::size_t width = 1;
  for (std::size_t v = vocab_size - 1; v >= 10; v /= 10) ++width;
  std::ostringstream os;
  os << 'w';
  std::string digits = std::to_string(k);
  os << std::string(width - digits.size(), '0') << digits;
  return os.str();
}

std::vector<Essay> synthetic_split(const SyntheticConfig& cfg, Rng& rng,
                                   const std::string& split, std::size_t count,
                                   const std::vector<std::string>& words) {
  std::vector<Essay> essays;
  essays.reserve(count);
  const std::size_t v = cfg.vocab_size;
  for (std::size_t n = 0; n < count; ++n) {
    Essay e;
    {
      std::ostringstream os;
      os << "syn-" << split << '-' << n;
      e.id = os.str();
    }
    const std::size_t len =
        cfg.min_length + rng.uniform_index(cfg.max_length - cfg.min_length + 1);
    const double rate = rng.uniform(cfg.error_rate_min, cfg.error_rate_max);

    // Clean text: token k is usually followed by k+1..k+3 (mod v), with rare
    // jumps. The walk's stationary distribution is uniform, so the uniform
    // corruption draw leaves the corpus token distribution untouched and an
    // error shows only as a locally implausible transition. The walk
    // continues from the clean token, keeping the damage local.
    std::size_t state = rng.uniform_index(v);
    std::size_t bad = 0;
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0) {
        if (rng.uniform() < 0.05) {
          state = rng.uniform_index(v);
        } else {
          const double u = rng.uniform();
          const std::size_t step = u < 0.7 ? 1 : (u < 0.9 ? 2 : 3);
          state = (state + step) % v;
        }
      }
      std::size_t emitted = state;
      Label label = Label::kCorrect;
      if (rng.uniform() < rate) {
        emitted = rng.uniform_index(v);
        label = Label::kIncorrect;
        ++bad;
      }
      e.tokens.push_back(words[emitted]);
      e.labels.push_back(label);
    }

    const double fraction = static_cast<double>(bad) / static_cast<double>(len);
    int score = static_cast<int>(std::lround(20.0 - 19.0 * fraction));
    if (cfg.score_noise > 0) score += rng.uniform_int(-cfg.score_noise, cfg.score_noise);
    e.gold_score = std::clamp(score, 1, 20);
    e.labeled = true;
    essays.push_back(std::move(e));
  }
  return essays;
}

}  // namespace

SyntheticCorpora generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::vector<std::string> words;
  words.reserve(config.vocab_size);
  for (std::size_t k = 0; k < config.vocab_size; ++k) {
    words.push_back(synthetic_token(k, config.vocab_size));
  }
  const std::size_t held = std::max<std::size_t>(1, config.essay_count / 10);
  SyntheticCorpora out;
  out.train = synthetic_split(config, rng, "train", config.essay_count, words);
  out.dev = synthetic_split(config, rng, "dev", held, words);
  out.test = synthetic_split(config, rng, "test", held, words);
  return out;
}

}  // namespace essaynet
