#include "acsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace acsr {

CorrAcc corr_acc(const EditAlignment& a) {
  if (a.n <= 0) throw UndefinedScore("Corr/Acc need a non-empty reference");
  const double n = static_cast<double>(a.n);
  return {100.0 * static_cast<double>(a.n - a.substitutions - a.deletions) / n,
          100.0 * static_cast<double>(a.n - a.substitutions - a.deletions - a.insertions) / n};
}

double normal_quantile_two_sided(double confidence_percent) {
  if (!(confidence_percent > 0 && confidence_percent < 100)) throw InvalidConfig("confidence must be in (0, 100)");
  // Upper quantile p of the standard normal: rational initial guess refined by
  // Newton steps on erfc.
  const double p = 0.5 + confidence_percent / 200.0;
  const double q = 1.0 - p;
  const double t = std::sqrt(-2.0 * std::log(q));
  double z = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
  for (int it = 0; it < 4; ++it) {
    const double tail = 0.5 * std::erfc(z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    z += (tail - q) / pdf;
  }
  return z;
}

Interval wilson_interval(long successes, long n, double confidence_percent) {
  if (n < 1 || successes < 0 || successes > n) throw MalformedInput("Wilson interval needs 0 <= successes <= n and n >= 1");
  const double z = normal_quantile_two_sided(confidence_percent);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

ScoreReport score_report(const EditAlignment& totals, double confidence_percent) {
  ScoreReport r;
  r.counts = totals;
  r.confidence = confidence_percent;
  const CorrAcc ca = corr_acc(totals);
  r.corr = ca.corr;
  r.acc = ca.acc;
  auto half_width = [&](long successes) {
    const Interval iv = wilson_interval(std::clamp(successes, 0L, totals.n), totals.n, confidence_percent);
    return 100.0 * (iv.upper - iv.lower) / 2.0;
  };
  r.corr_delta = half_width(totals.n - totals.substitutions - totals.deletions);
  r.acc_delta = half_width(totals.n - totals.substitutions - totals.deletions - totals.insertions);
  return r;
}

nlohmann::json to_json(const ScoreReport& r) {
  return {{"corr", r.corr},
          {"acc", r.acc},
          {"wilson_delta", r.acc_delta},
          {"corr_wilson_delta", r.corr_delta},
          {"confidence", r.confidence},
          {"counts",
           {{"n", r.counts.n},
            {"substitutions", r.counts.substitutions},
            {"deletions", r.counts.deletions},
            {"insertions", r.counts.insertions}}}};
}

std::string render_score_table(const std::vector<std::pair<std::string, ScoreReport>>& rows) {
  std::size_t width = std::string("Configuration").size();
  for (const auto& [label, r] : rows) width = std::max(width, label.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "Configuration" << std::right << std::setw(8) << "N"
      << std::setw(18) << "Corr +- D95" << std::setw(18) << "Acc +- D95" << '\n';
  out << std::fixed << std::setprecision(1);
  for (const auto& [label, r] : rows) {
    std::ostringstream corr, acc;
    corr << std::fixed << std::setprecision(1) << r.corr << " +- " << r.corr_delta;
    acc << std::fixed << std::setprecision(1) << r.acc << " +- " << r.acc_delta;
    out << std::left << std::setw(static_cast<int>(width)) << label << std::right << std::setw(8) << r.counts.n
        << std::setw(18) << corr.str() << std::setw(18) << acc.str() << '\n';
  }
  return out.str();
}

}  // namespace acsr
