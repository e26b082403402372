#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace acsr {

inline constexpr int kHandPoints = 21;
inline constexpr int kLipPoints = 42;
inline constexpr int kHandDim = 2 * kHandPoints;  // flattened (x, y)
inline constexpr int kLipDim = 2 * kLipPoints;
inline constexpr double kDefaultFrameRate = 60.0;

/// One pose-estimation frame. Points are stored flattened as x0, y0, x1, y1, ...
struct LandmarkFrame {
  double t = 0.0;
  Eigen::VectorXd hand = Eigen::VectorXd::Zero(kHandDim);
  Eigen::VectorXd lips = Eigen::VectorXd::Zero(kLipDim);
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
};

struct LandmarkSequence {
  std::vector<LandmarkFrame> frames;

  /// Throws MalformedInput unless timestamps strictly increase, point counts
  /// match the layout and every coordinate is finite.
  void validate() const;
};

/// T x D feature rows sampled at `rate` frames per second.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  double rate = kDefaultFrameRate;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // n_comp x D, orthonormal rows
  Eigen::VectorXd explained_variance_ratio;

  Eigen::Index n_components() const { return components.rows(); }
  Eigen::Index input_dim() const { return mean.size(); }
};

struct KMeansModel {
  Eigen::MatrixXd centroids;  // k x D
  std::vector<double> inertia_history;
  int iterations = 0;

  Eigen::Index k() const { return centroids.rows(); }
  /// Nearest centroid under Euclidean distance, lowest index on ties.
  Eigen::Index assign(const Eigen::Ref<const Eigen::VectorXd>& point) const;
};

enum class Stream { kLips = 0, kHandShape = 1, kHandPosition = 2 };
inline constexpr std::array<Stream, 3> kAllStreams{Stream::kLips, Stream::kHandShape, Stream::kHandPosition};
std::string stream_name(Stream s);
Stream stream_from_name(const std::string& name);

struct StreamBundle {
  std::string utterance_id;
  FeatureMatrix lips;
  FeatureMatrix hand_shape;
  FeatureMatrix hand_position;  // one-hot rows

  const FeatureMatrix& stream(Stream s) const;
  FeatureMatrix& stream(Stream s);
  Eigen::Index frames() const { return lips.frames(); }
  void validate() const;
};

LandmarkSequence resample_landmarks(const LandmarkSequence& seq, double target_rate);

PcaModel fit_pca(const Eigen::Ref<const Eigen::MatrixXd>& data, Eigen::Index n_comp);
Eigen::MatrixXd transform_pca(const PcaModel& model, const Eigen::Ref<const Eigen::MatrixXd>& data);
Eigen::MatrixXd inverse_transform_pca(const PcaModel& model, const Eigen::Ref<const Eigen::MatrixXd>& projected);

/// k-means++ seeded Lloyd iterations, at most `max_iter`. Rows are put in a
/// canonical (lexicographic) order first, so the result depends only on the
/// multiset of rows and the seed.
KMeansModel fit_position_clusters(const Eigen::Ref<const Eigen::MatrixXd>& anchors, Eigen::Index k,
                                  std::uint64_t seed, int max_iter = 300);

/// Per-frame layout matrices used for fitting and stream building.
Eigen::MatrixXd lip_matrix(const LandmarkSequence& seq);
Eigen::MatrixXd hand_shape_matrix(const LandmarkSequence& seq);  // hand points relative to anchor
Eigen::MatrixXd anchor_matrix(const LandmarkSequence& seq);

StreamBundle build_streams(const LandmarkSequence& seq, const PcaModel& lips_pca, const PcaModel& hand_pca,
                           const KMeansModel& pos_model, double rate = kDefaultFrameRate,
                           std::string utterance_id = {});

/// Fitted models for the three streams, serialized together.
struct FeatureModels {
  PcaModel lips;
  PcaModel hand;
  KMeansModel positions;
};

// JSON I/O. Landmark files are JSON lines: {"t": s, "hand": [42], "lips": [84], "anchor": [2]}.
LandmarkSequence read_landmarks_jsonl(const std::string& path);
void write_landmarks_jsonl(const LandmarkSequence& seq, const std::string& path);
nlohmann::json to_json(const FeatureModels& models);
FeatureModels feature_models_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const StreamBundle& bundle);
StreamBundle stream_bundle_from_json(const nlohmann::json& doc);

}  // namespace acsr
