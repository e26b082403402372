#pragma once
// Brute-force reference implementations shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "acsr/ctc.hpp"
#include "acsr/rng.hpp"
#include "acsr/search.hpp"
#include "acsr/segmentation.hpp"

namespace oracle {

inline Eigen::MatrixXd random_posteriorgram(acsr::Rng& rng, Eigen::Index T, Eigen::Index k) {
  Eigen::MatrixXd p(T, k);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index c = 0; c < k; ++c) p(t, c) = std::exp(2.0 * rng.normal());
    p.row(t) /= p.row(t).sum();
  }
  return p;
}

/// Calls f(labelling, probability) for every framewise labelling.
inline void for_each_labelling(const Eigen::MatrixXd& probs, double floor,
                               const std::function<void(const std::vector<int>&, double)>& f) {
  const auto T = static_cast<std::size_t>(probs.rows());
  const int k = static_cast<int>(probs.cols());
  std::vector<int> lab(T, 0);
  while (true) {
    double p = 1.0;
    for (std::size_t t = 0; t < T; ++t) p *= std::max(probs(static_cast<Eigen::Index>(t), lab[t]), floor);
    f(lab, p);
    std::size_t i = 0;
    while (i < T && ++lab[i] == k) lab[i++] = 0;
    if (i == T) break;
  }
}

/// Sum over all labellings collapsing to `labels`.
inline double ctc_probability(const Eigen::MatrixXd& probs, const acsr::LabelSequence& labels) {
  double total = 0.0;
  for_each_labelling(probs, 0.0, [&](const std::vector<int>& lab, double p) {
    if (acsr::ctc_collapse(lab) == labels) total += p;
  });
  return total;
}

struct Decoded {
  std::vector<std::string> words;
  double score = -std::numeric_limits<double>::infinity();
};

/// Exhaustive decoder: every labelling, every way to spell its phone string
/// with lexicon words, summed per word sequence and scored like the beam search.
inline Decoded exhaustive_decode(const Eigen::MatrixXd& probs, const acsr::Lexicon& lex, const acsr::NGramModel* lm,
                                 const acsr::DecodeConfig& cfg) {
  const auto entries = lex.enumerate();
  std::map<std::vector<std::string>, double> mass;
  for_each_labelling(probs, 1e-30, [&](const std::vector<int>& lab, double p) {
    const auto phones = acsr::ctc_collapse(lab);
    std::vector<std::string> words;
    std::function<void(std::size_t)> spell = [&](std::size_t pos) {
      if (pos == phones.size()) {
        mass[words] += p;
        return;
      }
      for (const auto& [w, pron] : entries) {
        if (pos + pron.size() > phones.size() || !std::equal(pron.begin(), pron.end(), phones.begin() + static_cast<std::ptrdiff_t>(pos)))
          continue;
        words.push_back(w);
        spell(pos + pron.size());
        words.pop_back();
      }
    };
    spell(0);
  });
  Decoded best;
  for (const auto& [words, m] : mass) {
    double lm_score = 0.0;
    if (lm) {
      std::vector<std::string> ctx{"<s>"};
      for (const auto& w : words) {
        lm_score += acsr::ngram_logprob(*lm, ctx, w);
        ctx.push_back(w);
      }
      lm_score += acsr::ngram_logprob(*lm, ctx, "</s>");
      lm_score *= std::numbers::ln10;
    }
    const double s = std::log(m) + cfg.lm_weight * lm_score + cfg.word_score * static_cast<double>(words.size());
    if (s > best.score) best = {words, s};  // map order makes ties go to the lexicographically smaller sequence
  }
  return best;
}

/// Small random decoding problem: classes {blank, a, b}, up to three words
/// drawn from {a, b, ab, ba} with one- or two-phone spellings.
struct BeamInstance {
  Eigen::MatrixXd probs;
  acsr::Lexicon lexicon{3};
  acsr::DecodeConfig config;
};

inline BeamInstance random_beam_instance(std::uint64_t seed) {
  acsr::Rng rng(seed);
  BeamInstance inst;
  const std::vector<std::string> pool{"a", "b", "ab", "ba"};
  const auto words = 1 + rng.below(3);
  for (std::size_t i = 0; i < words; ++i) {
    acsr::LabelSequence pron(1 + rng.below(2));
    for (int& p : pron) p = 1 + static_cast<int>(rng.below(2));
    inst.lexicon.add(pool[rng.below(pool.size())], pron);
  }
  inst.probs = random_posteriorgram(rng, 1 + static_cast<Eigen::Index>(rng.below(5)), 3);
  inst.config.beam_width = 1000000;
  inst.config.lm_weight = rng.uniform(0.0, 1.0);
  inst.config.word_score = rng.uniform(-1.0, 1.0);
  return inst;
}

/// Best banded monotone path by depth-first enumeration of every path.
struct BrutePath {
  std::vector<acsr::PathStep> steps;
  double objective = -1.0;
  long paths = 0;
};

inline BrutePath brute_force_path(const Eigen::MatrixXd& map, Eigen::Index band) {
  const Eigen::Index T = map.rows();
  BrutePath best;
  std::vector<acsr::PathStep> cur{{0, 0}};
  std::function<void(double)> walk = [&](double score) {
    const auto [i, j] = cur.back();
    if (i == T - 1 && j == T - 1) {
      ++best.paths;
      if (score > best.objective) {
        best.objective = score;
        best.steps = cur;
      }
      return;
    }
    const Eigen::Index moves[3][2] = {{1, 1}, {1, 0}, {0, 1}};
    for (const auto& m : moves) {
      const Eigen::Index ni = i + m[0], nj = j + m[1];
      if (ni >= T || nj >= T || std::abs(ni - nj) > band) continue;
      cur.push_back({ni, nj});
      walk(score + (m[0] && m[1] ? acsr::kDiagonalWeight : 1.0) * map(ni, nj));
      cur.pop_back();
    }
  };
  walk(map(0, 0));
  return best;
}

/// Row-stochastic map with strictly positive entries.
inline Eigen::MatrixXd random_attention(acsr::Rng& rng, Eigen::Index T) {
  Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(T, T, [&] { return std::exp(1.5 * rng.normal()); });
  for (Eigen::Index i = 0; i < T; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

}  // namespace oracle
