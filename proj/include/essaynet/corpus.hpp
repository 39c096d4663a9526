#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "essaynet/rng.hpp"
#include "essaynet/tensor.hpp"

namespace essaynet {

enum class Label : std::uint8_t { kCorrect = 0, kIncorrect = 1 };

// One essay: the entire text is a single token sequence. A missing-word error
// is carried by the token following the gap (upstream annotation convention).
// Unlabeled/unscored essays occur only on the prediction path.
struct Essay {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<Label> labels;  // always tokens.size() entries; kCorrect when !labeled
  std::optional<int> gold_score;  // in [1, 20] when present
  bool labeled = false;

  double error_fraction() const;
};

// Maps an exam grade string ("1.1".."5.3") to the 1-20 essay score. "0" means
// the essay is removed: returns nullopt. Unknown grades throw DataError.
// Interior rows 3.2..5.2 continue the printed table by unit steps, the only
// continuation consistent with endpoints 3.1->12 and 5.3->20.
std::optional<int> map_exam_score(const std::string& exam_score);

// The 15 grades in increasing order, for iteration in tests/tools.
const std::vector<std::string>& exam_grade_order();

class Vocabulary {
 public:
  static constexpr std::size_t kUnkId = 0;
  static constexpr std::size_t kBoundaryId = 1;
  static const char* const kUnkToken;       // "<unk>"
  static const char* const kBoundaryToken;  // "<s>"

  // Tokens with corpus frequency >= min_count get ids, ordered by frequency
  // descending then lexicographic; everything else maps to UNK.
  static Vocabulary build(const std::vector<Essay>& essays, std::size_t min_count);

  std::size_t id(const std::string& token) const;  // UNK for unknown tokens
  const std::string& token(std::size_t id) const { return id_to_token_[id]; }
  std::size_t size() const { return id_to_token_.size(); }
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;

  std::uint64_t hash() const;  // FNV-1a over the token list
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  static Vocabulary from_tokens(std::vector<std::string> id_to_token);

 private:
  Vocabulary() = default;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::size_t> token_to_id_;
};

enum class RowSource : std::uint8_t { kPretrained, kRandomInit };

struct EmbeddingMatrix {
  Tensor matrix;  // vocab size x dim
  std::vector<RowSource> sources;
};

// Text embeddings: one "<token> v1 .. vd" line each. Vocab rows found in the
// file are copied; absent rows are drawn uniform in [-0.05, 0.05] from rng.
// Inconsistent dimensions across lines throw DataError. An empty file yields
// all-random rows and a warning on stderr.
EmbeddingMatrix load_embeddings(const std::string& path, const Vocabulary& vocab,
                                std::size_t fallback_dim, Rng& rng);

// All rows random, same init range as load_embeddings uses for absent rows.
EmbeddingMatrix random_embeddings(std::size_t vocab_size, std::size_t dim, Rng& rng);

struct ParseOptions {
  bool require_labels = true;
  bool require_scores = true;
};

// Corpus file format (UTF-8 text):
//   # id=<string> score=<exam-grade-or-integer>
//   <token>\t<c|i>
//   ...
// A blank line marks a sentence boundary: the parser inserts the boundary
// marker token labeled correct (consecutive blanks coalesce; a trailing
// boundary is dropped). Essays whose exam score maps to "removed" (grade 0)
// are skipped. Malformed input throws DataError naming the line.
std::vector<Essay> parse_corpus(const std::string& path, const ParseOptions& opts = {});
std::vector<Essay> parse_corpus_stream(std::istream& in, const std::string& name,
                                       const ParseOptions& opts = {});

void serialize_corpus(std::ostream& out, const std::vector<Essay>& essays);
void write_corpus(const std::string& path, const std::vector<Essay>& essays);

struct SyntheticConfig {
  std::size_t vocab_size = 50;
  std::size_t essay_count = 2000;  // train size; dev and test get count/10 each (min 1)
  std::size_t min_length = 10;
  std::size_t max_length = 30;
  double error_rate_min = 0.0;
  double error_rate_max = 0.5;
  int score_noise = 1;  // max |integer offset| added to the gold score
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

struct SyntheticCorpora {
  std::vector<Essay> train, dev, test;
};

// Clean text follows a seeded near-deterministic token chain; each token is
// independently corrupted (replaced by a uniform draw and labeled incorrect)
// with a per-essay rate from the configured range. The gold score is
// round(20 - 19 * realized_error_fraction) plus integer noise, clipped to
// [1, 20], so score and error density are anticorrelated by construction.
SyntheticCorpora generate_synthetic(const SyntheticConfig& config);

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace essaynet
