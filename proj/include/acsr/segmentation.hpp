#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "acsr/ctc.hpp"
#include "acsr/error.hpp"
#include "acsr/features.hpp"

namespace acsr {

inline constexpr Eigen::Index kDefaultBand = 30;

struct PathStep {
  Eigen::Index i = 0;
  Eigen::Index j = 0;
  friend bool operator==(const PathStep&, const PathStep&) = default;
};

/// Monotone path from (0, 0) to (T-1, T-1) through an attention map.
struct AttentionPath {
  std::vector<PathStep> steps;
  double cumulative = 0.0;  // plain sum of the visited cells
  double objective = 0.0;   // DTW score (diagonal moves count their cell twice)
};

/// Step weights of the symmetric DTW recursion. A diagonal move covers two
/// unit moves, so it is charged its destination cell twice; this makes every
/// complete path carry the same total weight 2(T-1) + 1.
inline constexpr double kDiagonalWeight = 2.0;

/// DTW path of maximal cumulative attention inside a Sakoe-Chiba band.
/// Moves are (1,1), (1,0), (0,1); ties prefer (1,1), then (1,0).
template <typename Derived>
AttentionPath attention_path(const Eigen::MatrixBase<Derived>& map, Eigen::Index band = kDefaultBand) {
  if (map.rows() != map.cols() || map.rows() < 1) throw MalformedInput("attention map must be square and non-empty");
  if (band < 0) throw InvalidConfig("band must be >= 0");
  const Eigen::Index T = map.rows();
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd score = Eigen::MatrixXd::Constant(T, T, neg_inf);
  Eigen::Matrix<signed char, Eigen::Dynamic, Eigen::Dynamic> move(T, T);  // 0 diag, 1 from (i-1,j), 2 from (i,j-1)
  move.setConstant(-1);
  score(0, 0) = static_cast<double>(map(0, 0));

  auto better = [neg_inf](double cand, double best) {
    if (cand == neg_inf) return false;
    if (best == neg_inf) return true;
    return cand > best + 1e-12 * std::max({1.0, std::abs(cand), std::abs(best)});
  };
  for (Eigen::Index i = 0; i < T; ++i) {
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - band); j <= std::min(T - 1, i + band); ++j) {
      if (i == 0 && j == 0) continue;
      const double cell = static_cast<double>(map(i, j));
      double best = neg_inf;
      signed char arg = -1;
      if (i > 0 && j > 0 && score(i - 1, j - 1) != neg_inf) {
        best = score(i - 1, j - 1) + kDiagonalWeight * cell;
        arg = 0;
      }
      if (i > 0 && score(i - 1, j) != neg_inf && better(score(i - 1, j) + cell, best)) {
        best = score(i - 1, j) + cell;
        arg = 1;
      }
      if (j > 0 && score(i, j - 1) != neg_inf && better(score(i, j - 1) + cell, best)) {
        best = score(i, j - 1) + cell;
        arg = 2;
      }
      score(i, j) = best;
      move(i, j) = arg;
    }
  }

  AttentionPath path;
  path.objective = score(T - 1, T - 1);
  Eigen::Index i = T - 1, j = T - 1;
  while (true) {
    path.steps.push_back({i, j});
    path.cumulative += static_cast<double>(map(i, j));
    if (i == 0 && j == 0) break;
    switch (move(i, j)) {
      case 0: --i; --j; break;
      case 1: --i; break;
      default: --j; break;
    }
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

/// DTW objective of an arbitrary monotone path, for oracles and reports.
template <typename Derived>
double path_objective(const Eigen::MatrixBase<Derived>& map, const std::vector<PathStep>& steps) {
  double total = static_cast<double>(map(steps.front().i, steps.front().j));
  for (std::size_t k = 1; k < steps.size(); ++k) {
    const bool diagonal = steps[k].i != steps[k - 1].i && steps[k].j != steps[k - 1].j;
    total += (diagonal ? kDiagonalWeight : 1.0) * static_cast<double>(map(steps[k].i, steps[k].j));
  }
  return total;
}

struct Onset {
  Eigen::Index frame = 0;       // middle i-frame of the deviation run
  Eigen::Index run_length = 0;  // number of off-diagonal moves in the run
  friend bool operator==(const Onset&, const Onset&) = default;
};

/// Groups maximal runs of off-diagonal moves; one onset per run at the i-frame
/// of the run's middle cell (lower median), counting the cell it departs from.
std::vector<Onset> detect_onsets(const AttentionPath& path);

struct Segment {
  int phone = 0;
  Eigen::Index start = 0;  // half-open [start, end)
  Eigen::Index end = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct Segmentation {
  std::vector<Segment> segments;
  Stream modality = Stream::kLips;
  Eigen::Index frames = 0;

  void validate() const;
  LabelSequence phones() const;
  /// Interior segment starts (every start except the first segment's when it is 0).
  std::vector<Eigen::Index> boundaries() const;
};

/// Keeps at most |phones| - 1 onsets (longest runs first, earliest on ties),
/// uses them as boundaries and labels the resulting segments in order. Missing
/// boundaries are filled by splitting the trailing segment evenly.
Segmentation assign_boundaries(std::span<const Onset> onsets, const LabelSequence& phones, Eigen::Index frames,
                               Stream modality = Stream::kLips);

struct SegmentationEval {
  std::vector<double> iou;  // one per true segment
  double mean = 0.0;
};

/// Mean temporal IoU: each true segment against the predicted segment of
/// largest frame overlap (earliest on ties).
SegmentationEval tiou(const Segmentation& truth, const Segmentation& predicted);

struct AsynchronyProfile {
  std::vector<double> delays_ms;  // positive: hand leads
  double mean_ms = 0.0;
  double stddev_ms = 0.0;  // population
};

AsynchronyProfile asynchrony_profile(const Segmentation& lips, const Segmentation& hand, double rate);

/// JSON lines: {"modality", "phone", "start_frame", "end_frame"}. Phones are
/// written as symbols of `inventory`.
void write_segmentation_jsonl(std::span<const Segmentation> segs, const PhoneInventory& inventory,
                              const std::string& path);
std::vector<Segmentation> read_segmentation_jsonl(const std::string& path, const PhoneInventory& inventory,
                                                  Eigen::Index frames);

/// Tab-separated manual annotations `tier start_ms end_ms label`, converted to
/// frames at `rate` (nearest frame). Returns one segmentation per tier found,
/// in lips, hand_shape, hand_position order.
std::vector<Segmentation> read_annotation_tsv(const std::string& path, const PhoneInventory& inventory, double rate,
                                              Eigen::Index frames);

}  // namespace acsr
