#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "acsr/error.hpp"
#include "acsr/metrics.hpp"
#include "acsr/search.hpp"
#include "oracles.hpp"

using namespace acsr;

namespace {

PhoneInventory ab_inventory() { return PhoneInventory{{"a", "b"}}; }

NGramModel arpa(const std::string& text) {
  std::istringstream in(text);
  return parse_arpa(in);
}

NGramModel fixture(const std::string& name) { return load_arpa(std::string(ACSR_FIXTURES) + "/" + name); }

Lexicon lexicon(const std::string& text, const PhoneInventory& inv) {
  std::istringstream in(text);
  return parse_lexicon(in, inv);
}

Posteriorgram delta(const std::vector<int>& frames, int classes) {
  Posteriorgram p;
  p.probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(frames.size()), classes);
  for (std::size_t t = 0; t < frames.size(); ++t) p.probs(static_cast<Eigen::Index>(t), frames[t]) = 1.0;
  return p;
}

class UniformScorer : public LMScorer {
 public:
  explicit UniformScorer(double v) : v_(v) {}
  ScoredText score(const std::vector<std::string>& tokens) override {
    return {-static_cast<double>(tokens.size()) * std::log(v_), static_cast<long>(tokens.size())};
  }

 private:
  double v_;
};

/// Per-word probabilities from a table; unknown words get 0.01.
class TableScorer : public LMScorer {
 public:
  std::map<std::string, double> p;
  int calls = 0;
  ScoredText score(const std::vector<std::string>& tokens) override {
    ++calls;
    ScoredText s;
    for (const auto& t : tokens) s.logprob_sum += std::log(p.count(t) ? p.at(t) : 0.01);
    s.token_count = static_cast<long>(tokens.size());
    return s;
  }
};

class BrokenScorer : public LMScorer {
 public:
  ScoredText score(const std::vector<std::string>&) override { throw std::runtime_error("model not loaded"); }
};

NBestEntry entry(std::vector<std::string> words, double score) {
  NBestEntry e;
  e.words = std::move(words);
  e.score = score;
  return e;
}

}  // namespace

TEST_SUITE("lexicon") {
  TEST_CASE("single entry builds one path with a word-final marker") {
    const auto lex = lexicon("ab\ta b\n", ab_inventory());
    const int a = lex.child(Lexicon::kRoot, 1);
    REQUIRE(a > 0);
    const int b = lex.child(a, 2);
    REQUIRE(b > 0);
    CHECK(lex.node(a).words.empty());
    REQUIRE(lex.node(b).words.size() == 1);
    CHECK(lex.words()[static_cast<std::size_t>(lex.node(b).words[0])] == "ab");
  }

  TEST_CASE("homophones share a node") {
    const auto lex = lexicon("a\ta\nà\ta\n", ab_inventory());
    const int n = lex.child(Lexicon::kRoot, 1);
    CHECK(lex.node(n).words.size() == 2);
    CHECK(lex.nodes().size() == 2);
  }

  TEST_CASE("duplicates are dropped, variants kept") {
    const auto lex = lexicon("ab\ta b\nab\ta b\nab\tb\n", ab_inventory());
    CHECK(lex.entry_count() == 2);
    CHECK(lex.words().size() == 1);
  }

  TEST_CASE("enumeration recovers 100 random entries") {
    PhoneInventory inv{{"p", "t", "k", "a", "i", "u"}};
    Rng rng(11);
    std::vector<std::pair<std::string, LabelSequence>> input;
    std::ostringstream text;
    for (int i = 0; i < 100; ++i) {
      std::string w = "w" + std::to_string(rng.below(70));
      LabelSequence pron(1 + rng.below(4));
      for (int& p : pron) p = 1 + static_cast<int>(rng.below(6));
      if (std::find(input.begin(), input.end(), std::make_pair(w, pron)) == input.end()) input.emplace_back(w, pron);
      text << w << '\t';
      for (std::size_t j = 0; j < pron.size(); ++j) text << (j ? " " : "") << inv.symbol(pron[j]);
      text << '\n';
    }
    auto out = lexicon(text.str(), inv).enumerate();
    std::sort(input.begin(), input.end());
    std::sort(out.begin(), out.end());
    CHECK(out == input);
  }

  TEST_CASE("errors name the line") {
    try {
      lexicon("ab\ta b\nzz\ta q\n", ab_inventory());
      FAIL("expected an error");
    } catch (const MalformedInput& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(lexicon("ab\t\n", ab_inventory()), MalformedInput);
    CHECK_THROWS_AS(lexicon("ab a b\n", ab_inventory()), MalformedInput);
  }
}

TEST_SUITE("ngram") {
  TEST_CASE("uniform unigram model") {
    const auto m = arpa("\\data\\\nngram 1=4\n\n\\1-grams:\n-0.60206 x\n-0.60206 y\n-0.60206 z\n-0.60206 </s>\n\\end\\\n");
    for (const char* w : {"x", "y", "z", "</s>"}) CHECK(ngram_logprob(m, {"x", "y"}, w) == doctest::Approx(std::log10(0.25)));
  }

  TEST_CASE("direct bigram and backoff on the tiny fixture") {
    const auto m = fixture("tiny.arpa");
    CHECK(m.order() == 2);
    CHECK(ngram_logprob(m, {"<s>"}, "a") == -0.2);
    CHECK(ngram_logprob(m, {"a"}, "b") == -0.4);
    CHECK(ngram_logprob(m, {"<s>"}, "b") == doctest::Approx(-0.5 - 0.7).epsilon(1e-12));
    CHECK(ngram_logprob(m, {"b"}, "a") == doctest::Approx(-0.2 - 0.5).epsilon(1e-12));
    CHECK(ngram_logprob(m, {"a"}, "</s>") == doctest::Approx(-0.3 - 0.6).epsilon(1e-12));
    CHECK(ngram_logprob(m, {"</s>"}, "a") == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(ngram_logprob(m, {"x", "y", "a"}, "b") == -0.4);
  }

  TEST_CASE("unknown words") {
    const auto m = fixture("tiny.arpa");
    CHECK(m.unk() == NGramModel::kAbsent);
    CHECK(ngram_logprob(m, {"a"}, "zzz") == NGramModel::kOovLog10);
    CHECK(ngram_logprob(m, {"zzz"}, "a") == -0.5);
    const auto u = arpa("\\data\\\nngram 1=2\n\\1-grams:\n-0.3 <unk>\n-0.5 x\n\\end\\\n");
    CHECK(ngram_logprob(u, {}, "never-seen") == -0.3);
  }

  TEST_CASE("probability mass over the vocabulary is at most one") {
    for (const char* name : {"tiny.arpa", "words.arpa"}) {
      const auto m = fixture(name);
      for (const auto& ctx : m.vocabulary()) {
        double mass = 0.0;
        for (const auto& w : m.vocabulary()) mass += std::pow(10.0, ngram_logprob(m, {ctx}, w));
        CHECK(std::log10(mass) <= 1e-6);
      }
    }
  }

  TEST_CASE("malformed ARPA") {
    CHECK_THROWS_AS(arpa("\\data\\\nngram 1=2\n\\1-grams:\n-0.3 x\n\\end\\\n"), MalformedInput);
    CHECK_THROWS_AS(arpa("\\data\\\nngram 1=1\n\\1-grams:\n0.3 x\n\\end\\\n"), MalformedInput);
    CHECK_THROWS_AS(arpa("\\data\\\nngram 1=1\n\\1-grams:\n-0.3 x\n"), MalformedInput);
    CHECK_THROWS_AS(arpa("\\data\\\nngram 1=1\nngram 2=1\n\\1-grams:\n-0.3 x\n\\2-grams:\n-0.1 x y\n\\end\\\n"),
                    MalformedInput);
    CHECK_THROWS_AS(arpa("\\data\\\nngram 1=2\nngram 3=1\n\\end\\\n"), MalformedInput);
  }
}

TEST_SUITE("beam search") {
  TEST_CASE("deterministic single path") {
    const auto lex = lexicon("ab\ta b\n", ab_inventory());
    DecodeConfig cfg;
    const auto out = beam_search(delta({1, 2}, 3), lex, nullptr, cfg);
    REQUIRE(!out.empty());
    CHECK(out[0].words == std::vector<std::string>{"ab"});
    CHECK(out[0].acoustic == doctest::Approx(0.0));
  }

  TEST_CASE("matches the exhaustive decoder") {
    const auto lm = fixture("words.arpa");
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      auto inst = oracle::random_beam_instance(seed);
      for (const NGramModel* model : {static_cast<const NGramModel*>(nullptr), &lm}) {
        Posteriorgram post{inst.probs};
        const auto got = beam_search(post, inst.lexicon, model, inst.config);
        const auto want = oracle::exhaustive_decode(inst.probs, inst.lexicon, model, inst.config);
        CAPTURE(seed);
        CHECK(got[0].words == want.words);
        CHECK(got[0].score == doctest::Approx(want.score).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("n-best is sorted and made of lexicon words") {
    const auto lm = fixture("words.arpa");
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
      auto inst = oracle::random_beam_instance(seed);
      inst.config.n_best = 5;
      const auto out = beam_search(Posteriorgram{inst.probs}, inst.lexicon, &lm, inst.config);
      CHECK(out.size() <= 5);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (i) CHECK(out[i - 1].score >= out[i].score);
        for (const auto& w : out[i].words) CHECK(inst.lexicon.word_id(w) >= 0);
      }
    }
  }

  TEST_CASE("a very negative word score prefers fewer words") {
    const auto lex = lexicon("ab\ta b\na\ta\nb\tb\n", ab_inventory());
    Posteriorgram p;
    p.probs.resize(4, 3);
    p.probs << 0.1, 0.8, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8, 0.8, 0.1, 0.1;
    DecodeConfig cfg;
    cfg.word_score = -1e6;
    const auto out = beam_search(p, lex, nullptr, cfg);
    CHECK(out[0].words.empty());
    cfg.word_score = 0.0;
    const auto tied = beam_search(p, lex, nullptr, cfg);
    CHECK(tied[0].words == std::vector<std::string>{"a", "b"});
    CHECK(tied[1].words == std::vector<std::string>{"ab"});
    CHECK(tied[0].score == tied[1].score);
  }

  TEST_CASE("wider beams never score worse") {
    PhoneInventory inv{{"a", "b", "c", "d"}};
    const auto lex = lexicon("ab\ta b\nba\tb a\ncd\tc d\nd\td\nabc\ta b c\nc\tc\n", inv);
    const auto lm = fixture("words.arpa");
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      Posteriorgram p{oracle::random_posteriorgram(rng, 12, 5)};
      double prev = -std::numeric_limits<double>::infinity();
      for (std::size_t b : {1, 2, 4, 16, 64, 1000}) {
        DecodeConfig cfg;
        cfg.beam_width = b;
        double best;
        try {
          best = beam_search(p, lex, &lm, cfg)[0].score;
        } catch (const EmptyDecode&) {
          best = -std::numeric_limits<double>::infinity();
        }
        CHECK(best >= prev - 1e-12);
        prev = best;
      }
    }
  }

  TEST_CASE("nothing at a word boundary") {
    const auto lex = lexicon("ab\ta b\n", ab_inventory());
    DecodeConfig cfg;
    cfg.beam_width = 1;
    CHECK_THROWS_AS(beam_search(delta({1, 1, 1}, 3), lex, nullptr, cfg), EmptyDecode);
  }

  TEST_CASE("inventory mismatch and bad config") {
    const auto lex = lexicon("ab\ta b\n", ab_inventory());
    CHECK_THROWS_AS(beam_search(delta({1, 2}, 4), lex, nullptr, {}), MalformedInput);
    DecodeConfig cfg;
    cfg.beam_width = 0;
    CHECK_THROWS_AS(beam_search(delta({1, 2}, 3), lex, nullptr, cfg), InvalidConfig);
  }

  TEST_CASE("config json") {
    const auto c = decode_config_from_json(nlohmann::json{{"beam_width", 7}, {"lm_weight", 0.5}});
    CHECK(c.beam_width == 7);
    CHECK(c.lm_weight == 0.5);
    CHECK(c.n_best == 30);
    CHECK(decode_config_from_json(to_json(c)).beam_width == 7);
    CHECK_THROWS_AS(decode_config_from_json(nlohmann::json{{"beam", 7}}), InvalidConfig);
    CHECK_THROWS_AS(decode_config_from_json(nlohmann::json{{"n_best", 0}}), InvalidConfig);
  }
}

TEST_SUITE("rescoring") {
  TEST_CASE("perplexity limits") {
    UniformScorer u(10.0);
    CHECK(perplexity(u, {"x", "y", "z", "w"}) == doctest::Approx(10.0));
    UniformScorer certain(1.0);
    CHECK(perplexity(certain, {"x"}) == 1.0);
    CHECK_THROWS_AS(perplexity(u, {}), MalformedInput);
    BrokenScorer broken;
    CHECK_THROWS_AS(perplexity(broken, {"x"}), ScorerUnavailable);
  }

  TEST_CASE("n-gram scorer follows the chain rule") {
    const auto m = fixture("tiny.arpa");
    NGramScorer s(m);
    const double log10p = -0.2 + -0.4 + (-0.2 - 0.5);  // a|<s>, b|a, a|b
    const auto scored = s.score({"a", "b", "a"});
    CHECK(scored.token_count == 3);
    CHECK(scored.logprob_sum == doctest::Approx(log10p * std::numbers::ln10).epsilon(1e-12));
    CHECK(perplexity(s, {"a", "b", "a"}) == doctest::Approx(std::pow(10.0, -log10p / 3.0)).epsilon(1e-12));
  }

  TEST_CASE("single candidate is returned unchanged") {
    UniformScorer u(10.0);
    const std::vector<NBestEntry> nb{entry({"x", "y"}, -3.0)};
    const auto r = rescore_topk(nb, u);
    CHECK(r.chosen == 0);
    CHECK(r.words == nb[0].words);
    CHECK(!r.fallback);
  }

  TEST_CASE("more probable candidate wins") {
    TableScorer s;
    s.p = {{"good", 0.5}, {"bad", 0.1}};
    const std::vector<NBestEntry> nb{entry({"bad", "bad"}, -1.0), entry({"good", "good"}, -2.0)};
    CHECK(rescore_topk(nb, s).chosen == 1);
  }

  TEST_CASE("thirty candidates against a full perplexity scan") {
    const auto m = fixture("words.arpa");
    NGramScorer s(m);
    Rng rng(3);
    const std::vector<std::string> vocab{"a", "b", "ab", "ba", "q"};
    std::vector<NBestEntry> nb;
    for (int i = 0; i < 30; ++i) {
      std::vector<std::string> w(1 + rng.below(4));
      for (auto& x : w) x = vocab[rng.below(vocab.size())];
      nb.push_back(entry(w, -rng.uniform(0, 10)));
    }
    std::size_t best = 0;
    double best_ppl = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nb.size(); ++i) {
      double lp = 0.0;
      std::vector<std::string> ctx{"<s>"};
      for (const auto& w : nb[i].words) {
        lp += ngram_logprob(m, ctx, w);
        ctx.push_back(w);
      }
      const double ppl = std::pow(10.0, -lp / static_cast<double>(nb[i].words.size()));
      const bool tie = std::abs(ppl - best_ppl) <= 1e-9 * best_ppl;
      if ((!tie && ppl < best_ppl) ||
          (tie && (nb[i].score > nb[best].score || (nb[i].score == nb[best].score && nb[i].words < nb[best].words)))) {
        best_ppl = ppl;
        best = i;
      }
    }
    const auto r = rescore_topk(nb, s);
    CHECK(r.chosen == best);
    CHECK(r.perplexities[best] == doctest::Approx(best_ppl).epsilon(1e-9));
  }

  TEST_CASE("choice does not depend on candidate order") {
    UniformScorer u(4.0);
    std::vector<NBestEntry> nb{entry({"c"}, -2.0), entry({"a"}, -1.0), entry({"b"}, -1.0), entry({}, 0.0)};
    const auto first = rescore_topk(nb, u).words;
    CHECK(first == std::vector<std::string>{"a"});
    std::sort(nb.begin(), nb.end(), [](const auto& x, const auto& y) { return x.words < y.words; });
    do {
      CHECK(rescore_topk(nb, u).words == first);
    } while (std::next_permutation(nb.begin(), nb.end(), [](const auto& x, const auto& y) { return x.words < y.words; }));
  }

  TEST_CASE("scorer failure falls back to the 1-best") {
    BrokenScorer broken;
    const std::vector<NBestEntry> nb{entry({"x"}, -5.0), entry({"y"}, -1.0)};
    const auto r = rescore_topk(nb, broken);
    CHECK(r.fallback);
    CHECK(r.chosen == 1);
    CHECK(r.error.find("model not loaded") != std::string::npos);
  }

  TEST_CASE("oracle selection") {
    const std::vector<std::string> ref{"le", "chat", "dort"};
    std::vector<NBestEntry> nb{entry({"le", "chas", "dort"}, -1.0), entry(ref, -4.0), entry({"dort"}, -0.5)};
    auto r = oracle_best(nb, ref);
    CHECK(r.index == 1);
    CHECK(r.acc == 100.0);
    const std::vector<NBestEntry> one{entry({"x"}, -1.0)};
    CHECK(oracle_best(one, ref).index == 0);

    Rng rng(9);
    const std::vector<std::string> vocab{"a", "b", "c", "d"};
    for (int trial = 0; trial < 20; ++trial) {
      nb.clear();
      for (int i = 0; i < 10; ++i) {
        std::vector<std::string> w(rng.below(5));
        for (auto& x : w) x = vocab[rng.below(4)];
        nb.push_back(entry(w, -rng.uniform(0, 5)));
      }
      std::size_t best = 0;
      for (std::size_t i = 1; i < nb.size(); ++i) {
        const double a = corr_acc(edit_align(ref, nb[i].words)).acc, b = corr_acc(edit_align(ref, nb[best].words)).acc;
        if (a > b || (a == b && nb[i].score > nb[best].score)) best = i;
      }
      r = oracle_best(nb, ref);
      CHECK(r.index == best);
    }
  }

  TEST_CASE("n-best lines") {
    std::ostringstream out;
    const std::vector<NBestEntry> nb{entry({"x"}, -1.0), entry({}, -2.0)};
    const std::vector<double> ppl{3.0, std::numeric_limits<double>::infinity()};
    write_nbest_jsonl(out, "u1", nb, &ppl);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    auto j = nlohmann::json::parse(line);
    CHECK(j["rank"] == 1);
    CHECK(j["perplexity"] == 3.0);
    std::getline(in, line);
    j = nlohmann::json::parse(line);
    CHECK(j["words"].empty());
    CHECK(j["perplexity"].is_null());
  }
}

TEST_SUITE("external scorer") {
  const std::string helper = ACSR_FAKE_SCORER;

  TEST_CASE("round trip") {
    ProcessScorer s(helper + " uniform 10");
    CHECK(perplexity(s, {"a", "b", "c"}) == doctest::Approx(10.0));
    CHECK(perplexity(s, {"a"}) == doctest::Approx(10.0));
    const std::vector<NBestEntry> nb{entry({"x", "y"}, -1.0), entry({"z"}, -2.0)};
    CHECK(rescore_topk(nb, s).chosen == 0);
  }

  TEST_CASE("timeout") {
    ProcessScorer s(helper + " silent", std::chrono::milliseconds(200));
    CHECK_THROWS_AS(s.score({"a"}), ScorerUnavailable);
    CHECK_THROWS_AS(s.score({"a"}), ScorerUnavailable);
  }

  TEST_CASE("protocol errors") {
    ProcessScorer wrong(helper + " wrong-id");
    CHECK_THROWS_AS(wrong.score({"a"}), ScorerUnavailable);
    ProcessScorer gone(helper + " exit");
    CHECK_THROWS_AS(gone.score({"a"}), ScorerUnavailable);
    ProcessScorer missing("/nonexistent/scorer-binary");
    const std::vector<NBestEntry> nb{entry({"x"}, -3.0), entry({"y"}, -1.0)};
    const auto r = rescore_topk(nb, missing);
    CHECK(r.fallback);
    CHECK(r.chosen == 1);
  }
}
