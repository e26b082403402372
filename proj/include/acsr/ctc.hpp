#pragma once

#include <istream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "acsr/math.hpp"

namespace acsr {

/// Phone symbols in class order. Class 0 is the CTC blank and is implicit;
/// phone i (0-based) is class i + 1.
struct PhoneInventory {
  static constexpr int kBlank = 0;
  std::vector<std::string> phones;

  int classes() const { return static_cast<int>(phones.size()) + 1; }
  /// Class index of `symbol`, or -1 when unknown.
  int class_of(const std::string& symbol) const;
  const std::string& symbol(int cls) const;
  void validate() const;
};

/// Plain text, one symbol per line; blank lines ignored.
PhoneInventory parse_inventory(std::istream& in);
PhoneInventory read_inventory(const std::string& path);
void write_inventory(const PhoneInventory& inv, const std::string& path);

/// Class indices (never the blank).
using LabelSequence = std::vector<int>;

struct Posteriorgram {
  Eigen::MatrixXd probs;  // T x classes, rows sum to 1
  int blank_index = PhoneInventory::kBlank;

  Eigen::Index frames() const { return probs.rows(); }
  Eigen::Index classes() const { return probs.cols(); }
  /// Throws MalformedInput unless rows are stochastic within 1e-6.
  void validate() const;
};

struct CtcLoss {
  double loss = 0.0;     // -ln p(labels | posteriorgram)
  Eigen::MatrixXd grad;  // d loss / d pre-softmax logits, T x classes
};

/// Smallest T that admits an alignment: labels plus one blank per adjacent repeat.
Eigen::Index ctc_min_frames(const LabelSequence& labels);

/// Forward-backward CTC negative log-likelihood in log space.
/// Throws InfeasibleAlignment when T < ctc_min_frames(labels).
CtcLoss ctc_loss(const Posteriorgram& post, const LabelSequence& labels);

/// Best-path decoding: framewise argmax (lowest class on ties), collapse repeats, drop blanks.
LabelSequence ctc_greedy_decode(const Posteriorgram& post);

/// Sum over every frame labelling whose collapse equals `labels`. Exponential;
/// limited to T <= 8 and at most 5 classes (OracleLimit otherwise).
double ctc_path_oracle(const Posteriorgram& post, const LabelSequence& labels);

/// Negative log-likelihood only (forward recursion), in any floating scalar.
/// Labels must already be valid and feasible for the frame count.
template <typename Derived>
typename Derived::Scalar ctc_neg_log_likelihood(const Eigen::MatrixBase<Derived>& probs, const LabelSequence& labels,
                                                int blank_index = PhoneInventory::kBlank) {
  using Scalar = typename Derived::Scalar;
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  const Scalar floor = Scalar(1e-30);
  const Eigen::Index T = probs.rows();
  const Eigen::Index S = 2 * static_cast<Eigen::Index>(labels.size()) + 1;
  std::vector<int> ext(static_cast<std::size_t>(S), blank_index);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto ly = [&](Eigen::Index t, Eigen::Index s) {
    using std::log;
    using std::max;
    return log(max(probs(t, ext[static_cast<std::size_t>(s)]), floor));
  };
  std::vector<Scalar> alpha(static_cast<std::size_t>(S), neg_inf), next(static_cast<std::size_t>(S));
  alpha[0] = ly(0, 0);
  if (S > 1) alpha[1] = ly(0, 1);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      const auto us = static_cast<std::size_t>(s);
      Scalar a = alpha[us];
      if (s >= 1) a = log_add(a, alpha[us - 1]);
      if (s >= 2 && ext[us] != blank_index && ext[us] != ext[us - 2]) a = log_add(a, alpha[us - 2]);
      next[us] = a + ly(t, s);
    }
    std::swap(alpha, next);
  }
  Scalar log_p = alpha[static_cast<std::size_t>(S - 1)];
  if (S > 1) log_p = log_add(log_p, alpha[static_cast<std::size_t>(S - 2)]);
  return -log_p;
}

/// Collapse a framewise class sequence under the CTC rule.
LabelSequence ctc_collapse(const std::vector<int>& frame_classes, int blank_index = PhoneInventory::kBlank);

}  // namespace acsr
