#pragma once

#include <chrono>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "acsr/ctc.hpp"

namespace acsr {

/// Pronunciation dictionary and the prefix tree over its phone classes.
class Lexicon {
 public:
  struct Node {
    std::map<int, int> children;  // phone class -> node
    std::vector<int> words;       // word ids ending here
  };
  static constexpr int kRoot = 0;

  explicit Lexicon(int classes = 0);

  /// Adds (word, pronunciation); duplicate pairs are ignored.
  void add(const std::string& word, const LabelSequence& pronunciation);

  int classes() const { return classes_; }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  /// -1 when absent.
  int child(int node, int phone) const;
  int word_id(const std::string& word) const;
  std::size_t entry_count() const { return entry_count_; }

  /// Every (word, pronunciation) pair reachable in the trie, depth-first by phone class.
  std::vector<std::pair<std::string, LabelSequence>> enumerate() const;

 private:
  int classes_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> word_index_;
  std::vector<Node> nodes_;
  std::size_t entry_count_ = 0;
};

/// `word<TAB>phone phone ...` per line. Errors carry the line number.
Lexicon parse_lexicon(std::istream& in, const PhoneInventory& inventory);
Lexicon load_lexicon(const std::string& path, const PhoneInventory& inventory);

/// Backoff n-gram model read from ARPA text. Values are log10.
class NGramModel {
 public:
  static constexpr double kOovLog10 = -100.0;
  static constexpr int kAbsent = -1;

  struct Entry {
    double logprob = 0.0;
    double backoff = 0.0;
  };

  int order() const { return order_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  /// Id of `token`; unknown words map to <unk> when the model has it, else kAbsent.
  int token_id(const std::string& token) const;
  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int unk() const { return unk_; }
  std::size_t count(int n) const { return tables_[static_cast<std::size_t>(n - 1)].size(); }

  /// log10 p(token | context) with Katz backoff; context is oldest-first and may be longer than order - 1.
  double logprob(std::span<const int> context, int token) const;
  const Entry* find(std::span<const int> ngram) const;

  friend NGramModel parse_arpa(std::istream& in);

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<int>& k) const noexcept;
  };
  int order_ = 0;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::unordered_map<std::vector<int>, Entry, KeyHash>> tables_;
  int bos_ = kAbsent, eos_ = kAbsent, unk_ = kAbsent;
};

NGramModel parse_arpa(std::istream& in);
NGramModel load_arpa(const std::string& path);

/// log10 p(token | context) over word strings.
double ngram_logprob(const NGramModel& model, const std::vector<std::string>& context, const std::string& token);

struct DecodeConfig {
  std::size_t beam_width = 1000;
  double lm_weight = 0.2;
  double word_score = 0.0;
  std::size_t n_best = 30;

  void validate() const;
};

nlohmann::json to_json(const DecodeConfig& c);
DecodeConfig decode_config_from_json(const nlohmann::json& j, DecodeConfig base = {});

struct NBestEntry {
  std::vector<std::string> words;
  double score = 0.0;     // acoustic + lm_weight * lm + word_score * |words|
  double acoustic = 0.0;  // ln of the summed CTC prefix probability
  double lm = 0.0;        // natural-log LM score including sentence end
};

/// Lexicon-constrained CTC prefix beam search with word-level LM fusion.
/// `lm` may be null (lexicon only). Throws EmptyDecode when nothing ends at the trie root.
std::vector<NBestEntry> beam_search(const Posteriorgram& post, const Lexicon& lexicon, const NGramModel* lm,
                                    const DecodeConfig& config);

struct ScoredText {
  double logprob_sum = 0.0;  // natural log
  long token_count = 0;
};

class LMScorer {
 public:
  virtual ~LMScorer() = default;
  virtual ScoredText score(const std::vector<std::string>& tokens) = 0;
};

/// Chain rule from <s>, no sentence end; one token per word.
class NGramScorer : public LMScorer {
 public:
  explicit NGramScorer(const NGramModel& model) : model_(model) {}
  ScoredText score(const std::vector<std::string>& tokens) override;

 private:
  const NGramModel& model_;
};

/// Talks NDJSON to a child process: `{"id","text"}` out, `{"id","logprob_sum","token_count"}` back.
class ProcessScorer : public LMScorer {
 public:
  explicit ProcessScorer(const std::string& command,
                         std::chrono::milliseconds timeout = std::chrono::milliseconds(10000));
  ~ProcessScorer() override;
  ProcessScorer(const ProcessScorer&) = delete;
  ProcessScorer& operator=(const ProcessScorer&) = delete;

  ScoredText score(const std::vector<std::string>& tokens) override;

 private:
  void fail(const std::string& why);
  int fd_ = -1;
  int pid_ = -1;
  std::chrono::milliseconds timeout_;
  std::int64_t next_id_ = 0;
  std::string buffer_;
  bool broken_ = false;
};

/// exp(-logprob_sum / token_count). ScorerUnavailable on scorer failure.
double perplexity(LMScorer& scorer, const std::vector<std::string>& tokens);

struct RescoreResult {
  std::size_t chosen = 0;
  std::vector<std::string> words;
  std::vector<double> perplexities;  // per candidate; +inf for empty ones
  bool fallback = false;
  std::string error;
};

/// Minimal perplexity; ties go to the higher beam score, then the lexicographically smaller sequence.
RescoreResult rescore_topk(std::span<const NBestEntry> nbest, LMScorer& scorer);

struct OracleResult {
  std::size_t index = 0;
  std::vector<std::string> words;
  double acc = 0.0;  // percent
};

/// Candidate with maximal word Acc against `reference`; ties go to the higher beam score.
OracleResult oracle_best(std::span<const NBestEntry> nbest, const std::vector<std::string>& reference);

/// One line per candidate: {"id","rank","words","beam_score","perplexity"}.
void write_nbest_jsonl(std::ostream& out, const std::string& id, std::span<const NBestEntry> nbest,
                       const std::vector<double>* perplexities = nullptr);

}  // namespace acsr
