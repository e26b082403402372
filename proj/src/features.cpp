#include "acsr/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "acsr/error.hpp"
#include "acsr/json_eigen.hpp"
#include "acsr/rng.hpp"

namespace acsr {

namespace {

constexpr double kTimeSnap = 1e-6;  // seconds

LandmarkFrame lerp(const LandmarkFrame& a, const LandmarkFrame& b, double t) {
  const double w = (t - a.t) / (b.t - a.t);
  LandmarkFrame out;
  out.t = t;
  out.hand = (1.0 - w) * a.hand + w * b.hand;
  out.lips = (1.0 - w) * a.lips + w * b.lips;
  out.anchor = (1.0 - w) * a.anchor + w * b.anchor;
  return out;
}

}  // namespace

void LandmarkSequence::validate() const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.hand.size() != kHandDim || f.lips.size() != kLipDim)
      throw MalformedInput("frame " + std::to_string(i) + ": expected 21 hand and 42 lip points");
    if (!std::isfinite(f.t) || !f.hand.allFinite() || !f.lips.allFinite() || !f.anchor.allFinite())
      throw MalformedInput("frame " + std::to_string(i) + ": non-finite coordinate");
    if (i > 0 && !(f.t > frames[i - 1].t))
      throw MalformedInput("frame " + std::to_string(i) + ": timestamps must strictly increase");
  }
}

std::string stream_name(Stream s) {
  switch (s) {
    case Stream::kLips: return "lips";
    case Stream::kHandShape: return "hand_shape";
    case Stream::kHandPosition: return "hand_position";
  }
  return "?";
}

Stream stream_from_name(const std::string& name) {
  for (Stream s : kAllStreams)
    if (stream_name(s) == name) return s;
  throw MalformedInput("unknown stream '" + name + "'");
}

const FeatureMatrix& StreamBundle::stream(Stream s) const {
  switch (s) {
    case Stream::kLips: return lips;
    case Stream::kHandShape: return hand_shape;
    case Stream::kHandPosition: return hand_position;
  }
  return lips;
}

FeatureMatrix& StreamBundle::stream(Stream s) {
  return const_cast<FeatureMatrix&>(std::as_const(*this).stream(s));
}

void StreamBundle::validate() const {
  const Eigen::Index t = lips.frames();
  if (t < 1) throw MalformedInput(utterance_id + ": empty stream bundle");
  for (Stream s : kAllStreams) {
    const auto& m = stream(s);
    if (m.frames() != t) throw MalformedInput(utterance_id + ": streams disagree on frame count");
    if (m.rate != lips.rate || !(m.rate > 0)) throw MalformedInput(utterance_id + ": streams disagree on rate");
    if (!m.values.allFinite()) throw MalformedInput(utterance_id + ": non-finite feature");
  }
  for (Eigen::Index r = 0; r < t; ++r) {
    const auto row = hand_position.values.row(r);
    const auto ones = (row.array() == 1.0).count();
    const auto zeros = (row.array() == 0.0).count();
    if (ones != 1 || ones + zeros != row.size())
      throw MalformedInput(utterance_id + ": hand_position row " + std::to_string(r) + " is not one-hot");
  }
}

LandmarkSequence resample_landmarks(const LandmarkSequence& seq, double target_rate) {
  if (!(target_rate > 0)) throw InvalidConfig("target rate must be positive");
  if (seq.frames.size() < 2) throw InsufficientData("resampling needs at least 2 frames");
  seq.validate();

  const double first = seq.frames.front().t;
  const double last = seq.frames.back().t;
  const auto steps = static_cast<std::size_t>(std::floor((last - first) * target_rate + kTimeSnap));

  LandmarkSequence out;
  out.frames.reserve(steps + 1);
  std::size_t hi = 1;
  for (std::size_t k = 0; k <= steps; ++k) {
    double t = first + static_cast<double>(k) / target_rate;
    if (std::abs(t - last) < kTimeSnap) t = last;
    while (hi + 1 < seq.frames.size() && seq.frames[hi].t < t) ++hi;
    const auto& a = seq.frames[hi - 1];
    const auto& b = seq.frames[hi];
    if (std::abs(t - a.t) < 1e-9) {
      out.frames.push_back(a);
    } else if (std::abs(t - b.t) < 1e-9) {
      out.frames.push_back(b);
    } else {
      out.frames.push_back(lerp(a, b, t));
    }
  }
  return out;
}

PcaModel fit_pca(const Eigen::Ref<const Eigen::MatrixXd>& data, Eigen::Index n_comp) {
  if (data.rows() < 2) throw InsufficientData("PCA needs at least 2 rows");
  if (n_comp < 1 || n_comp > std::min(data.rows() - 1, data.cols()))
    throw InvalidConfig("n_comp must be in [1, min(rows - 1, cols)]");

  PcaModel model;
  model.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - model.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(data.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::VectorXd eigenvalues = solver.eigenvalues().cwiseMax(0.0);  // ascending
  const double total = eigenvalues.sum();
  const Eigen::Index d = data.cols();

  model.components.resize(n_comp, d);
  model.explained_variance_ratio.resize(n_comp);
  for (Eigen::Index c = 0; c < n_comp; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0) v = -v;
    model.components.row(c) = v.transpose();
    model.explained_variance_ratio(c) = total > 0 ? eigenvalues(d - 1 - c) / total : 0.0;
  }
  return model;
}

Eigen::MatrixXd transform_pca(const PcaModel& model, const Eigen::Ref<const Eigen::MatrixXd>& data) {
  if (data.cols() != model.input_dim())
    throw MalformedInput("PCA input has " + std::to_string(data.cols()) + " columns, model expects " +
                         std::to_string(model.input_dim()));
  return (data.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Eigen::MatrixXd inverse_transform_pca(const PcaModel& model, const Eigen::Ref<const Eigen::MatrixXd>& projected) {
  if (projected.cols() != model.n_components()) throw MalformedInput("projection width does not match model");
  return (projected * model.components).rowwise() + model.mean.transpose();
}

Eigen::Index KMeansModel::assign(const Eigen::Ref<const Eigen::VectorXd>& point) const {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c).transpose() - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

KMeansModel fit_position_clusters(const Eigen::Ref<const Eigen::MatrixXd>& anchors, Eigen::Index k,
                                  std::uint64_t seed, int max_iter) {
  if (k < 1) throw InvalidConfig("k must be at least 1");
  if (anchors.rows() < k) throw InsufficientData("k-means needs at least k rows");
  if (!anchors.allFinite()) throw MalformedInput("non-finite anchor coordinates");

  // Canonical row order so the fit is a function of the multiset of rows.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(anchors.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < anchors.cols(); ++c) {
      if (anchors(a, c) != anchors(b, c)) return anchors(a, c) < anchors(b, c);
    }
    return false;
  });
  Eigen::MatrixXd data(anchors.rows(), anchors.cols());
  for (Eigen::Index r = 0; r < data.rows(); ++r) data.row(r) = anchors.row(order[static_cast<std::size_t>(r)]);

  const Eigen::Index n = data.rows();
  Rng rng(seed);
  KMeansModel model;
  model.centroids.resize(k, data.cols());

  // k-means++ seeding.
  model.centroids.row(0) = data.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd nearest = (data.rowwise() - model.centroids.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < k; ++c) {
    const double total = nearest.sum();
    if (!(total > 0)) throw InsufficientData("fewer distinct anchor points than clusters");
    const double target = rng.uniform() * total;
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (nearest(r) <= 0) continue;
      pick = r;
      acc += nearest(r);
      if (acc > target) break;
    }
    model.centroids.row(c) = data.row(pick);
    nearest = nearest.cwiseMin((data.rowwise() - model.centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<Eigen::Index> labels(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const Eigen::Index c = model.assign(data.row(r).transpose());
      inertia += (data.row(r) - model.centroids.row(c)).squaredNorm();
      if (labels[static_cast<std::size_t>(r)] != c) {
        labels[static_cast<std::size_t>(r)] = c;
        changed = true;
      }
    }
    model.inertia_history.push_back(inertia);
    model.iterations = iter + 1;
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, data.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index r = 0; r < n; ++r) {
      sums.row(labels[static_cast<std::size_t>(r)]) += data.row(r);
      counts(labels[static_cast<std::size_t>(r)]) += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts(c) > 0) model.centroids.row(c) = sums.row(c) / counts(c);
    }
  }
  return model;
}

Eigen::MatrixXd lip_matrix(const LandmarkSequence& seq) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(seq.frames.size()), kLipDim);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = seq.frames[i].lips.transpose();
  return m;
}

Eigen::MatrixXd hand_shape_matrix(const LandmarkSequence& seq) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(seq.frames.size()), kHandDim);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    Eigen::VectorXd centered = f.hand;
    for (int p = 0; p < kHandPoints; ++p) centered.segment<2>(2 * p) -= f.anchor;
    m.row(static_cast<Eigen::Index>(i)) = centered.transpose();
  }
  return m;
}

Eigen::MatrixXd anchor_matrix(const LandmarkSequence& seq) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(seq.frames.size()), 2);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = seq.frames[i].anchor.transpose();
  return m;
}

StreamBundle build_streams(const LandmarkSequence& seq, const PcaModel& lips_pca, const PcaModel& hand_pca,
                           const KMeansModel& pos_model, double rate, std::string utterance_id) {
  if (lips_pca.input_dim() != kLipDim) throw MalformedInput("lip PCA must take 84-dimensional input");
  if (hand_pca.input_dim() != kHandDim) throw MalformedInput("hand PCA must take 42-dimensional input");
  if (pos_model.centroids.cols() != 2) throw MalformedInput("position clusters must be 2-dimensional");
  if (seq.frames.empty()) throw InsufficientData("no frames to featurize");
  seq.validate();

  StreamBundle out;
  out.utterance_id = std::move(utterance_id);
  out.lips = {transform_pca(lips_pca, lip_matrix(seq)), rate};
  out.hand_shape = {transform_pca(hand_pca, hand_shape_matrix(seq)), rate};
  const Eigen::MatrixXd anchors = anchor_matrix(seq);
  out.hand_position = {Eigen::MatrixXd::Zero(anchors.rows(), pos_model.k()), rate};
  for (Eigen::Index r = 0; r < anchors.rows(); ++r)
    out.hand_position.values(r, pos_model.assign(anchors.row(r).transpose())) = 1.0;
  return out;
}

LandmarkSequence read_landmarks_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open landmark file " + path);
  LandmarkSequence seq;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedInput(where + ": " + e.what());
    }
    if (!j.contains("t") || !j.contains("hand") || !j.contains("lips") || !j.contains("anchor"))
      throw MalformedInput(where + ": frame needs t, hand, lips and anchor");
    LandmarkFrame f;
    if (!j["t"].is_number()) throw MalformedInput(where + ": t must be a number");
    f.t = j["t"].get<double>();
    f.hand = json_io::to_vector(j["hand"], where);
    f.lips = json_io::to_vector(j["lips"], where);
    const Eigen::VectorXd anchor = json_io::to_vector(j["anchor"], where);
    if (anchor.size() != 2) throw MalformedInput(where + ": anchor needs 2 numbers");
    f.anchor = anchor;
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  return seq;
}

void write_landmarks_jsonl(const LandmarkSequence& seq, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MalformedInput("cannot write " + path);
  for (const auto& f : seq.frames) {
    nlohmann::json j{{"t", f.t}, {"hand", json_io::vector(f.hand)}, {"lips", json_io::vector(f.lips)},
                     {"anchor", json_io::vector(f.anchor)}};
    out << j.dump() << '\n';
  }
}

namespace {

nlohmann::json pca_json(const PcaModel& m) {
  return {{"mean", json_io::vector(m.mean)},
          {"components", json_io::matrix(m.components)},
          {"explained_variance_ratio", json_io::vector(m.explained_variance_ratio)}};
}

PcaModel pca_from_json(const nlohmann::json& j, const std::string& what) {
  PcaModel m;
  m.mean = json_io::to_vector(j.at("mean"), what + ".mean");
  m.components = json_io::to_matrix(j.at("components"), what + ".components", m.mean.size());
  m.explained_variance_ratio = json_io::to_vector(j.at("explained_variance_ratio"), what + ".explained_variance_ratio");
  if (m.components.cols() != m.mean.size() || m.explained_variance_ratio.size() != m.components.rows())
    throw MalformedInput(what + ": inconsistent PCA dimensions");
  return m;
}

}  // namespace

nlohmann::json to_json(const FeatureModels& models) {
  return {{"format", "acsr-features"},
          {"version", 1},
          {"lips", pca_json(models.lips)},
          {"hand", pca_json(models.hand)},
          {"positions", {{"centroids", json_io::matrix(models.positions.centroids)}}}};
}

FeatureModels feature_models_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "acsr-features" || doc.value("version", 0) != 1)
      throw MalformedInput("not a version-1 feature model document");
    FeatureModels m;
    m.lips = pca_from_json(doc.at("lips"), "lips");
    m.hand = pca_from_json(doc.at("hand"), "hand");
    m.positions.centroids = json_io::to_matrix(doc.at("positions").at("centroids"), "positions.centroids");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(std::string("feature models: ") + e.what());
  }
}

nlohmann::json to_json(const StreamBundle& bundle) {
  nlohmann::json j{{"utterance_id", bundle.utterance_id}, {"rate", bundle.lips.rate}};
  for (Stream s : kAllStreams) j[stream_name(s)] = json_io::matrix(bundle.stream(s).values);
  return j;
}

StreamBundle stream_bundle_from_json(const nlohmann::json& doc) {
  try {
    StreamBundle b;
    b.utterance_id = doc.value("utterance_id", "");
    const double rate = doc.at("rate").get<double>();
    for (Stream s : kAllStreams) b.stream(s) = {json_io::to_matrix(doc.at(stream_name(s)), stream_name(s)), rate};
    b.validate();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(std::string("stream bundle: ") + e.what());
  }
}

}  // namespace acsr
