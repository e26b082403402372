#include "acsr/search.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "acsr/error.hpp"
#include "acsr/math.hpp"
#include "acsr/metrics.hpp"

namespace acsr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kProbFloor = 1e-30;

bool lexicographic_less(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- lexicon

Lexicon::Lexicon(int classes) : classes_(classes), nodes_(1) {}

int Lexicon::child(int node, int phone) const {
  const auto& ch = nodes_[static_cast<std::size_t>(node)].children;
  auto it = ch.find(phone);
  return it == ch.end() ? -1 : it->second;
}

int Lexicon::word_id(const std::string& word) const {
  auto it = word_index_.find(word);
  return it == word_index_.end() ? -1 : it->second;
}

void Lexicon::add(const std::string& word, const LabelSequence& pronunciation) {
  if (word.empty()) throw MalformedInput("empty word");
  if (pronunciation.empty()) throw MalformedInput("empty pronunciation for '" + word + "'");
  for (int p : pronunciation)
    if (p <= 0 || p >= classes_) throw MalformedInput("phone class " + std::to_string(p) + " outside inventory");
  int id = word_id(word);
  if (id < 0) {
    id = static_cast<int>(words_.size());
    words_.push_back(word);
    word_index_.emplace(word, id);
  }
  int node = kRoot;
  for (int p : pronunciation) {
    int next = child(node, p);
    if (next < 0) {
      next = static_cast<int>(nodes_.size());
      nodes_.emplace_back();
      nodes_[static_cast<std::size_t>(node)].children.emplace(p, next);
    }
    node = next;
  }
  auto& ends = nodes_[static_cast<std::size_t>(node)].words;
  if (std::find(ends.begin(), ends.end(), id) != ends.end()) return;
  ends.push_back(id);
  ++entry_count_;
}

std::vector<std::pair<std::string, LabelSequence>> Lexicon::enumerate() const {
  std::vector<std::pair<std::string, LabelSequence>> out;
  LabelSequence path;
  auto walk = [&](auto&& self, int node) -> void {
    for (int w : nodes_[static_cast<std::size_t>(node)].words) out.emplace_back(words_[static_cast<std::size_t>(w)], path);
    for (auto [phone, next] : nodes_[static_cast<std::size_t>(node)].children) {
      path.push_back(phone);
      self(self, next);
      path.pop_back();
    }
  };
  walk(walk, kRoot);
  return out;
}

Lexicon parse_lexicon(std::istream& in, const PhoneInventory& inventory) {
  Lexicon lex(inventory.classes());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw MalformedInput("lexicon line " + std::to_string(lineno) + ": missing tab");
    const std::string word = line.substr(0, tab);
    LabelSequence pron;
    for (const auto& sym : split_ws(line.substr(tab + 1))) {
      const int c = inventory.class_of(sym);
      if (c <= 0)
        throw MalformedInput("lexicon line " + std::to_string(lineno) + ": unknown phone '" + sym + "'");
      pron.push_back(c);
    }
    if (word.empty() || pron.empty())
      throw MalformedInput("lexicon line " + std::to_string(lineno) + ": empty word or pronunciation");
    lex.add(word, pron);
  }
  return lex;
}

Lexicon load_lexicon(const std::string& path, const PhoneInventory& inventory) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open lexicon " + path);
  return parse_lexicon(in, inventory);
}

// ---------------------------------------------------------------- n-gram

std::size_t NGramModel::KeyHash::operator()(const std::vector<int>& k) const noexcept {
  std::size_t h = 0xcbf29ce484222325ull;
  for (int v : k) h = (h ^ static_cast<std::size_t>(static_cast<unsigned>(v))) * 0x100000001b3ull;
  return h;
}

int NGramModel::token_id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_ : it->second;
}

const NGramModel::Entry* NGramModel::find(std::span<const int> ngram) const {
  if (ngram.empty() || static_cast<int>(ngram.size()) > order_) return nullptr;
  const auto& table = tables_[ngram.size() - 1];
  auto it = table.find(std::vector<int>(ngram.begin(), ngram.end()));
  return it == table.end() ? nullptr : &it->second;
}

double NGramModel::logprob(std::span<const int> context, int token) const {
  if (token == kAbsent) return kOovLog10;
  if (static_cast<int>(context.size()) > order_ - 1) context = context.last(static_cast<std::size_t>(order_ - 1));
  // an OOV word without <unk> cuts the history
  for (std::size_t i = context.size(); i-- > 0;)
    if (context[i] == kAbsent) {
      context = context.subspan(i + 1);
      break;
    }
  std::vector<int> key(context.begin(), context.end());
  key.push_back(token);
  double backoff = 0.0;
  for (std::size_t drop = 0; drop <= context.size(); ++drop) {
    const std::span<const int> gram(key.data() + drop, key.size() - drop);
    if (const Entry* e = find(gram)) return backoff + e->logprob;
    if (const Entry* ctx = find(gram.first(gram.size() - 1))) backoff += ctx->backoff;
  }
  return kOovLog10;
}

NGramModel parse_arpa(std::istream& in) {
  NGramModel m;
  std::vector<std::size_t> declared;
  std::string line;
  int lineno = 0;
  int section = -1;  // 0 = \data\, n > 0 = n-grams
  bool ended = false;
  auto bad = [&](const std::string& why) { return MalformedInput("ARPA line " + std::to_string(lineno) + ": " + why); };
  auto intern = [&](const std::string& tok) {
    auto [it, inserted] = m.index_.emplace(tok, static_cast<int>(m.vocab_.size()));
    if (inserted) m.vocab_.push_back(tok);
    return it->second;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (ended) throw bad("content after \\end\\");
    if (fields[0] == "\\data\\") {
      section = 0;
      continue;
    }
    if (fields[0] == "\\end\\") {
      ended = true;
      continue;
    }
    if (fields[0].size() >= 9 && fields[0].front() == '\\' && fields[0].ends_with("-grams:")) {
      int n = 0;
      try {
        n = std::stoi(fields[0].substr(1));
      } catch (const std::exception&) {
        throw bad("bad section header");
      }
      if (n < 1 || n > static_cast<int>(declared.size())) throw bad("undeclared order " + std::to_string(n));
      section = n;
      continue;
    }
    if (section == 0) {
      if (fields[0] != "ngram" || fields.size() != 2) throw bad("expected 'ngram N=count'");
      const auto eq = fields[1].find('=');
      if (eq == std::string::npos) throw bad("expected 'ngram N=count'");
      const int n = std::stoi(fields[1].substr(0, eq));
      const long count = std::stol(fields[1].substr(eq + 1));
      if (n != static_cast<int>(declared.size()) + 1 || count < 0) throw bad("n-gram orders must be declared in sequence");
      declared.push_back(static_cast<std::size_t>(count));
      continue;
    }
    if (section < 1) throw bad("unexpected content before \\data\\");
    const auto n = static_cast<std::size_t>(section);
    if (fields.size() != n + 1 && fields.size() != n + 2) throw bad("expected " + std::to_string(n) + " tokens");
    NGramModel::Entry e;
    try {
      e.logprob = std::stod(fields[0]);
      if (fields.size() == n + 2) e.backoff = std::stod(fields[n + 1]);
    } catch (const std::exception&) {
      throw bad("non-numeric value");
    }
    if (!std::isfinite(e.backoff) || std::isnan(e.logprob) || e.logprob > 0.0) throw bad("log probability must be <= 0");
    if (m.tables_.size() < n) m.tables_.resize(declared.size());
    std::vector<int> key;
    for (std::size_t i = 1; i <= n; ++i) {
      if (n == 1) {
        key.push_back(intern(fields[i]));
      } else {
        auto it = m.index_.find(fields[i]);
        if (it == m.index_.end()) throw bad("token '" + fields[i] + "' missing from unigrams");
        key.push_back(it->second);
      }
    }
    if (!m.tables_[n - 1].emplace(std::move(key), e).second) throw bad("duplicate n-gram");
  }
  if (!ended) throw MalformedInput("ARPA: missing \\end\\");
  if (declared.empty()) throw MalformedInput("ARPA: no \\data\\ counts");
  m.order_ = static_cast<int>(declared.size());
  m.tables_.resize(declared.size());
  for (std::size_t n = 0; n < declared.size(); ++n)
    if (m.tables_[n].size() != declared[n])
      throw MalformedInput("ARPA: " + std::to_string(n + 1) + "-gram count " + std::to_string(m.tables_[n].size()) +
                           " differs from declared " + std::to_string(declared[n]));
  for (std::size_t n = 1; n < m.tables_.size(); ++n)
    for (const auto& [key, e] : m.tables_[n])
      if (!m.find(std::span<const int>(key.data(), key.size() - 1)))
        throw MalformedInput("ARPA: context of a " + std::to_string(n + 1) + "-gram is not listed");
  auto lookup = [&](const char* tok) {
    auto it = m.index_.find(tok);
    return it == m.index_.end() ? NGramModel::kAbsent : it->second;
  };
  m.bos_ = lookup("<s>");
  m.eos_ = lookup("</s>");
  m.unk_ = lookup("<unk>");
  return m;
}

NGramModel load_arpa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open ARPA file " + path);
  return parse_arpa(in);
}

double ngram_logprob(const NGramModel& model, const std::vector<std::string>& context, const std::string& token) {
  std::vector<int> ids;
  for (const auto& w : context) ids.push_back(model.token_id(w));
  return model.logprob(ids, model.token_id(token));
}

// ---------------------------------------------------------------- decoding

void DecodeConfig::validate() const {
  if (beam_width < 1) throw InvalidConfig("beam_width must be >= 1");
  if (n_best < 1) throw InvalidConfig("n_best must be >= 1");
  if (!std::isfinite(lm_weight) || !std::isfinite(word_score)) throw InvalidConfig("lm_weight and word_score must be finite");
}

nlohmann::json to_json(const DecodeConfig& c) {
  return {{"beam_width", c.beam_width}, {"lm_weight", c.lm_weight}, {"word_score", c.word_score}, {"n_best", c.n_best}};
}

DecodeConfig decode_config_from_json(const nlohmann::json& j, DecodeConfig c) {
  if (!j.is_object()) throw InvalidConfig("decode config must be an object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "beam_width") c.beam_width = v.get<std::size_t>();
      else if (k == "lm_weight") c.lm_weight = v.get<double>();
      else if (k == "word_score") c.word_score = v.get<double>();
      else if (k == "n_best") c.n_best = v.get<std::size_t>();
      else throw InvalidConfig("unknown decode config field '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("decode config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

/// Interned word histories with their cumulative natural-log LM score.
class Histories {
 public:
  Histories(const Lexicon& lex, const NGramModel* lm) : lm_(lm) {
    parent_.push_back(-1);
    word_.push_back(-1);
    length_.push_back(0);
    score_.push_back(0.0);
    if (lm) {
      for (const auto& w : lex.words()) token_.push_back(lm->token_id(w));
    }
  }

  int extend(int h, int w) {
    auto [it, inserted] = index_.try_emplace({h, w}, static_cast<int>(parent_.size()));
    if (!inserted) return it->second;
    double inc = 0.0;
    if (lm_) inc = std::numbers::ln10 * lm_->logprob(context(h), token_[static_cast<std::size_t>(w)]);
    parent_.push_back(h);
    word_.push_back(w);
    length_.push_back(length_[static_cast<std::size_t>(h)] + 1);
    score_.push_back(score_[static_cast<std::size_t>(h)] + inc);
    return it->second;
  }

  double lm(int h) const { return score_[static_cast<std::size_t>(h)]; }
  int length(int h) const { return length_[static_cast<std::size_t>(h)]; }

  double end_score(int h) const {
    if (!lm_) return 0.0;
    return std::numbers::ln10 * lm_->logprob(context(h), lm_->eos());
  }

  std::vector<int> word_ids(int h) const {
    std::vector<int> out;
    for (; h > 0; h = parent_[static_cast<std::size_t>(h)]) out.push_back(word_[static_cast<std::size_t>(h)]);
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  std::vector<int> context(int h) const {
    std::vector<int> ctx;
    const auto keep = static_cast<std::size_t>(std::max(0, lm_->order() - 1));
    for (; h > 0 && ctx.size() < keep; h = parent_[static_cast<std::size_t>(h)])
      ctx.push_back(token_[static_cast<std::size_t>(word_[static_cast<std::size_t>(h)])]);
    if (ctx.size() < keep) ctx.push_back(lm_->bos());
    std::reverse(ctx.begin(), ctx.end());
    return ctx;
  }

  struct PairHash {
    std::size_t operator()(const std::pair<int, int>& p) const noexcept {
      return std::hash<std::uint64_t>()((static_cast<std::uint64_t>(static_cast<unsigned>(p.first)) << 32) |
                                        static_cast<unsigned>(p.second));
    }
  };

  const NGramModel* lm_;
  std::vector<int> parent_, word_, length_, token_;
  std::vector<double> score_;
  std::unordered_map<std::pair<int, int>, int, PairHash> index_;
};

struct HypKey {
  int history;
  int node;
  int last;  // last emitted phone class, -1 before the first
  bool operator==(const HypKey&) const = default;
  bool operator<(const HypKey& o) const {
    return std::tie(history, node, last) < std::tie(o.history, o.node, o.last);
  }
};

struct HypKeyHash {
  std::size_t operator()(const HypKey& k) const noexcept {
    std::size_t h = static_cast<std::size_t>(static_cast<unsigned>(k.history)) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::size_t>(static_cast<unsigned>(k.node)) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::size_t>(static_cast<unsigned>(k.last + 1)) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return h;
  }
};

struct Hyp {
  HypKey key;
  double pb = kNegInf;
  double pnb = kNegInf;
  double score = kNegInf;
};

}  // namespace

std::vector<NBestEntry> beam_search(const Posteriorgram& post, const Lexicon& lexicon, const NGramModel* lm,
                                    const DecodeConfig& config) {
  config.validate();
  post.validate();
  if (post.blank_index != PhoneInventory::kBlank) throw MalformedInput("decoder expects the blank at class 0");
  if (post.classes() != lexicon.classes())
    throw MalformedInput("posteriorgram has " + std::to_string(post.classes()) + " classes, lexicon expects " +
                         std::to_string(lexicon.classes()));

  Histories hist(lexicon, lm);
  auto rescore = [&](Hyp& h) {
    h.score = log_add(h.pb, h.pnb) + config.lm_weight * hist.lm(h.key.history) +
              config.word_score * hist.length(h.key.history);
  };

  std::vector<Hyp> beam{Hyp{{0, Lexicon::kRoot, -1}, 0.0, kNegInf, 0.0}};
  std::unordered_map<HypKey, std::size_t, HypKeyHash> slot;
  std::vector<Hyp> next;
  std::vector<double> ly(static_cast<std::size_t>(post.classes()));

  for (Eigen::Index t = 0; t < post.frames(); ++t) {
    for (Eigen::Index c = 0; c < post.classes(); ++c)
      ly[static_cast<std::size_t>(c)] = std::log(std::max(post.probs(t, c), kProbFloor));
    next.clear();
    slot.clear();
    auto at = [&](const HypKey& k) -> Hyp& {
      auto [it, inserted] = slot.try_emplace(k, next.size());
      if (inserted) next.push_back(Hyp{k});
      return next[it->second];
    };

    for (const Hyp& h : beam) {
      const double total = log_add(h.pb, h.pnb);
      {
        Hyp& same = at(h.key);
        same.pb = log_add(same.pb, total + ly[0]);
        if (h.key.last > 0) same.pnb = log_add(same.pnb, h.pnb + ly[static_cast<std::size_t>(h.key.last)]);
      }
      for (auto [c, child] : lexicon.node(h.key.node).children) {
        const double from = c == h.key.last ? h.pb : total;
        if (from == kNegInf) continue;
        const double v = from + ly[static_cast<std::size_t>(c)];
        const auto& node = lexicon.node(child);
        if (!node.children.empty()) {
          Hyp& ext = at({h.key.history, child, c});
          ext.pnb = log_add(ext.pnb, v);
        }
        for (int w : node.words) {
          Hyp& done = at({hist.extend(h.key.history, w), Lexicon::kRoot, c});
          done.pnb = log_add(done.pnb, v);
        }
      }
    }

    for (Hyp& h : next) rescore(h);
    if (next.size() > config.beam_width) {
      auto better = [](const Hyp& a, const Hyp& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.key < b.key;
      };
      std::nth_element(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(config.beam_width), next.end(), better);
      next.resize(config.beam_width);
    }
    std::swap(beam, next);
  }

  std::map<int, double> complete;  // history -> acoustic
  for (const Hyp& h : beam) {
    if (h.key.node != Lexicon::kRoot) continue;
    auto [it, inserted] = complete.try_emplace(h.key.history, kNegInf);
    it->second = log_add(it->second, log_add(h.pb, h.pnb));
  }
  if (complete.empty()) throw EmptyDecode("no hypothesis ends on a word boundary");

  std::vector<NBestEntry> out;
  out.reserve(complete.size());
  for (const auto& [h, acoustic] : complete) {
    NBestEntry e;
    for (int w : hist.word_ids(h)) e.words.push_back(lexicon.words()[static_cast<std::size_t>(w)]);
    e.acoustic = acoustic;
    e.lm = hist.lm(h) + hist.end_score(h);
    e.score = acoustic + config.lm_weight * e.lm + config.word_score * static_cast<double>(e.words.size());
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const NBestEntry& a, const NBestEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return lexicographic_less(a.words, b.words);
  });
  if (out.size() > config.n_best) out.resize(config.n_best);
  return out;
}

// ---------------------------------------------------------------- scorers

ScoredText NGramScorer::score(const std::vector<std::string>& tokens) {
  ScoredText s;
  std::vector<int> ctx{model_.bos()};
  for (const auto& tok : tokens) {
    const int id = model_.token_id(tok);
    s.logprob_sum += std::numbers::ln10 * model_.logprob(ctx, id);
    ctx.push_back(id);
  }
  s.token_count = static_cast<long>(tokens.size());
  return s;
}

ProcessScorer::ProcessScorer(const std::string& command, std::chrono::milliseconds timeout) : timeout_(timeout) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
    throw ScorerUnavailable(std::string("socketpair: ") + std::strerror(errno));
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw ScorerUnavailable(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  fd_ = sv[0];
  pid_ = pid;
}

ProcessScorer::~ProcessScorer() {
  if (fd_ >= 0) ::close(fd_);
  if (pid_ > 0) {
    int status = 0;
    if (::waitpid(pid_, &status, WNOHANG) == 0) {
      ::kill(pid_, SIGTERM);
      ::waitpid(pid_, &status, 0);
    }
  }
}

void ProcessScorer::fail(const std::string& why) {
  broken_ = true;
  throw ScorerUnavailable("external scorer: " + why);
}

ScoredText ProcessScorer::score(const std::vector<std::string>& tokens) {
  if (broken_) throw ScorerUnavailable("external scorer: connection unusable after an earlier failure");
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  auto remaining_ms = [&] {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    return static_cast<int>(std::max<std::int64_t>(0, left.count()));
  };

  const std::int64_t id = next_id_++;
  const std::string request = nlohmann::json{{"id", id}, {"text", join(tokens)}}.dump() + "\n";
  std::size_t sent = 0;
  while (sent < request.size()) {
    pollfd p{fd_, POLLOUT, 0};
    const int r = ::poll(&p, 1, remaining_ms());
    if (r == 0) fail("timed out sending request");
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(std::string("poll: ") + std::strerror(errno));
    }
    const ssize_t n = ::send(fd_, request.data() + sent, request.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail(std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }

  std::size_t nl;
  while ((nl = buffer_.find('\n')) == std::string::npos) {
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, remaining_ms());
    if (r == 0) fail("timed out after " + std::to_string(timeout_.count()) + " ms");
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(std::string("poll: ") + std::strerror(errno));
    }
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n == 0) fail("process closed its output");
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail(std::string("recv: ") + std::strerror(errno));
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  const std::string line = buffer_.substr(0, nl);
  buffer_.erase(0, nl + 1);

  ScoredText s;
  try {
    const auto j = nlohmann::json::parse(line);
    if (j.at("id").get<std::int64_t>() != id) fail("response id does not match request " + std::to_string(id));
    s.logprob_sum = j.at("logprob_sum").get<double>();
    s.token_count = j.at("token_count").get<long>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad response: ") + e.what());
  }
  if (!std::isfinite(s.logprob_sum) || s.logprob_sum > 0.0 || s.token_count < 0) fail("response values out of range");
  return s;
}

double perplexity(LMScorer& scorer, const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw MalformedInput("perplexity of an empty sequence");
  ScoredText s;
  try {
    s = scorer.score(tokens);
  } catch (const ScorerUnavailable&) {
    throw;
  } catch (const std::exception& e) {
    throw ScorerUnavailable(e.what());
  }
  if (s.token_count <= 0) throw ScorerUnavailable("scorer reported no tokens for '" + join(tokens) + "'");
  return std::exp(-s.logprob_sum / static_cast<double>(s.token_count));
}

RescoreResult rescore_topk(std::span<const NBestEntry> nbest, LMScorer& scorer) {
  if (nbest.empty()) throw MalformedInput("rescoring needs at least one candidate");
  RescoreResult r;
  try {
    for (const auto& e : nbest)
      r.perplexities.push_back(e.words.empty() ? std::numeric_limits<double>::infinity() : perplexity(scorer, e.words));
  } catch (const ScorerUnavailable& e) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < nbest.size(); ++i)
      if (nbest[i].score > nbest[best].score ||
          (nbest[i].score == nbest[best].score && lexicographic_less(nbest[i].words, nbest[best].words)))
        best = i;
    r.chosen = best;
    r.words = nbest[best].words;
    r.perplexities.clear();
    r.fallback = true;
    r.error = e.what();
    return r;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < nbest.size(); ++i) {
    const double a = r.perplexities[i], b = r.perplexities[best];
    if (a < b || (a == b && (nbest[i].score > nbest[best].score ||
                             (nbest[i].score == nbest[best].score && lexicographic_less(nbest[i].words, nbest[best].words)))))
      best = i;
  }
  r.chosen = best;
  r.words = nbest[best].words;
  return r;
}

OracleResult oracle_best(std::span<const NBestEntry> nbest, const std::vector<std::string>& reference) {
  if (nbest.empty()) throw MalformedInput("oracle selection needs at least one candidate");
  OracleResult r;
  r.acc = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nbest.size(); ++i) {
    const double acc = corr_acc(edit_align(reference, nbest[i].words)).acc;
    if (acc > r.acc || (acc == r.acc && nbest[i].score > nbest[r.index].score)) {
      r.acc = acc;
      r.index = i;
    }
  }
  r.words = nbest[r.index].words;
  return r;
}

void write_nbest_jsonl(std::ostream& out, const std::string& id, std::span<const NBestEntry> nbest,
                       const std::vector<double>* perplexities) {
  for (std::size_t i = 0; i < nbest.size(); ++i) {
    nlohmann::json j{{"id", id}, {"rank", i + 1}, {"words", nbest[i].words}, {"beam_score", nbest[i].score}};
    if (perplexities && i < perplexities->size() && std::isfinite((*perplexities)[i]))
      j["perplexity"] = (*perplexities)[i];
    else
      j["perplexity"] = nullptr;
    out << j.dump() << '\n';
  }
}

}  // namespace acsr
