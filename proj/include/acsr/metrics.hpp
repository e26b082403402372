#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "acsr/error.hpp"

namespace acsr {

struct EditAlignment {
  long n = 0;  // reference length
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;

  long cost() const { return substitutions + deletions + insertions; }
  EditAlignment& operator+=(const EditAlignment& o) {
    n += o.n;
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    return *this;
  }
  friend bool operator==(const EditAlignment&, const EditAlignment&) = default;
};

/// Unit-cost Levenshtein alignment. Backtrace prefers substitution/match,
/// then insertion, then deletion.
template <typename T>
EditAlignment edit_align(std::span<const T> ref, std::span<const T> hyp) {
  const auto n = static_cast<Eigen::Index>(ref.size());
  const auto m = static_cast<Eigen::Index>(hyp.size());
  Eigen::MatrixXi d(n + 1, m + 1);
  for (Eigen::Index i = 0; i <= n; ++i) d(i, 0) = static_cast<int>(i);
  for (Eigen::Index j = 0; j <= m; ++j) d(0, j) = static_cast<int>(j);
  for (Eigen::Index i = 1; i <= n; ++i)
    for (Eigen::Index j = 1; j <= m; ++j) {
      const int sub = d(i - 1, j - 1) + (ref[static_cast<std::size_t>(i - 1)] == hyp[static_cast<std::size_t>(j - 1)] ? 0 : 1);
      d(i, j) = std::min({sub, d(i, j - 1) + 1, d(i - 1, j) + 1});
    }

  EditAlignment a;
  a.n = static_cast<long>(n);
  Eigen::Index i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[static_cast<std::size_t>(i - 1)] == hyp[static_cast<std::size_t>(j - 1)];
      if (d(i, j) == d(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++a.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && d(i, j) == d(i, j - 1) + 1) {
      ++a.insertions;
      --j;
    } else {
      ++a.deletions;
      --i;
    }
  }
  return a;
}

template <typename T>
EditAlignment edit_align(const std::vector<T>& ref, const std::vector<T>& hyp) {
  return edit_align(std::span<const T>(ref), std::span<const T>(hyp));
}

struct CorrAcc {
  double corr = 0.0;  // percent
  double acc = 0.0;   // percent, may be negative
};

/// Corr = 100 (N - S - D) / N, Acc = 100 (N - S - D - I) / N. UndefinedScore when N = 0.
CorrAcc corr_acc(const EditAlignment& a);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Two-sided standard normal quantile for a confidence level in percent (1.96 at 95).
double normal_quantile_two_sided(double confidence_percent);

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(long successes, long n, double confidence_percent = 95.0);

struct ScoreReport {
  EditAlignment counts;
  double corr = 0.0;
  double acc = 0.0;
  double corr_delta = 0.0;  // Wilson half-width, percent
  double acc_delta = 0.0;
  double confidence = 95.0;
};

/// Micro-averaged report over already-summed counts.
ScoreReport score_report(const EditAlignment& totals, double confidence_percent = 95.0);

nlohmann::json to_json(const ScoreReport& r);
/// Aligned plain-text table, one row per (label, report).
std::string render_score_table(const std::vector<std::pair<std::string, ScoreReport>>& rows);

}  // namespace acsr
