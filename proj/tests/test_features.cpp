#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "acsr/error.hpp"
#include "acsr/features.hpp"
#include "acsr/rng.hpp"

using namespace acsr;

namespace {

LandmarkSequence random_sequence(Rng& rng, int frames, double rate = 60.0, double jitter = 0.0) {
  LandmarkSequence seq;
  for (int i = 0; i < frames; ++i) {
    LandmarkFrame f;
    f.t = i / rate + (i > 0 && i + 1 < frames ? jitter * rng.uniform(-1, 1) / rate : 0.0);
    for (Eigen::Index j = 0; j < f.hand.size(); ++j) f.hand(j) = rng.normal();
    for (Eigen::Index j = 0; j < f.lips.size(); ++j) f.lips(j) = rng.normal();
    f.anchor = Eigen::Vector2d(rng.normal(), rng.normal());
    seq.frames.push_back(f);
  }
  return seq;
}

LandmarkFrame scalar_frame(double t, double v) {
  LandmarkFrame f;
  f.t = t;
  f.hand.setConstant(v);
  f.lips.setConstant(v);
  f.anchor.setConstant(v);
  return f;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

FeatureModels fitted_models(Rng& rng) {
  const auto seq = random_sequence(rng, 60);
  return {fit_pca(lip_matrix(seq), 20), fit_pca(hand_shape_matrix(seq), 20),
          fit_position_clusters(anchor_matrix(seq), 8, 3)};
}

}  // namespace

TEST_SUITE("resample") {
  TEST_CASE("uniform input at the target rate is unchanged") {
    Rng rng(1);
    const auto seq = random_sequence(rng, 30);
    const auto out = resample_landmarks(seq, 60.0);
    REQUIRE(out.frames.size() == seq.frames.size());
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      CHECK(out.frames[i].t == doctest::Approx(seq.frames[i].t).epsilon(1e-12));
      CHECK(out.frames[i].hand == seq.frames[i].hand);
      CHECK(out.frames[i].lips == seq.frames[i].lips);
      CHECK(out.frames[i].anchor == seq.frames[i].anchor);
    }
  }

  TEST_CASE("midpoint of two frames") {
    LandmarkSequence seq{{scalar_frame(0.0, 0.0), scalar_frame(1.0 / 30.0, 1.0)}};
    const auto out = resample_landmarks(seq, 60.0);
    REQUIRE(out.frames.size() == 3);
    CHECK(out.frames[1].t == doctest::Approx(1.0 / 60.0));
    CHECK(out.frames[1].lips(5) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.frames[1].anchor(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.frames[2].hand(0) == 1.0);
  }

  TEST_CASE("gap is filled at the bracketing midpoint") {
    LandmarkSequence seq{{scalar_frame(0.0, 0.0), scalar_frame(1.0 / 60.0, 2.0), scalar_frame(3.0 / 60.0, 4.0)}};
    const auto out = resample_landmarks(seq, 60.0);
    REQUIRE(out.frames.size() == 4);
    CHECK(out.frames[2].t == doctest::Approx(2.0 / 60.0));
    CHECK(out.frames[2].hand(3) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(out.frames[3].t == 3.0 / 60.0);
    CHECK(out.frames[3].lips(0) == 4.0);
  }

  TEST_CASE("idempotent") {
    Rng rng(2);
    const auto once = resample_landmarks(random_sequence(rng, 40, 55.0, 0.3), 60.0);
    const auto twice = resample_landmarks(once, 60.0);
    REQUIRE(once.frames.size() == twice.frames.size());
    for (std::size_t i = 0; i < once.frames.size(); ++i)
      CHECK((once.frames[i].lips - twice.frames[i].lips).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("errors") {
    Rng rng(3);
    auto seq = random_sequence(rng, 1);
    CHECK_THROWS_AS(resample_landmarks(seq, 60.0), InsufficientData);
    seq = random_sequence(rng, 3);
    std::swap(seq.frames[1].t, seq.frames[2].t);
    CHECK_THROWS_AS(resample_landmarks(seq, 60.0), MalformedInput);
    seq = random_sequence(rng, 3);
    seq.frames[1].lips(0) = std::nan("");
    CHECK_THROWS_AS(resample_landmarks(seq, 60.0), MalformedInput);
    seq = random_sequence(rng, 3);
    seq.frames[1].hand.resize(10);
    CHECK_THROWS_AS(resample_landmarks(seq, 60.0), MalformedInput);
    CHECK_THROWS_AS(resample_landmarks(random_sequence(rng, 3), 0.0), InvalidConfig);
  }
}

TEST_SUITE("pca") {
  TEST_CASE("points on a line") {
    Eigen::MatrixXd d(5, 2);
    for (int i = 0; i < 5; ++i) d.row(i) << i - 1.5, 2.0 * (i - 1.5);
    const auto m = fit_pca(d, 1);
    CHECK(m.explained_variance_ratio(0) == doctest::Approx(1.0));
    CHECK(m.components(0, 0) == doctest::Approx(1.0 / std::sqrt(5.0)));
    CHECK(m.components(0, 1) == doctest::Approx(2.0 / std::sqrt(5.0)));
  }

  TEST_CASE("constant data") {
    const Eigen::MatrixXd d = Eigen::RowVector3d(1, 2, 3).replicate(6, 1);
    const auto m = fit_pca(d, 3);
    CHECK(m.explained_variance_ratio.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("random data against an SVD oracle") {
    Rng rng(4);
    const Eigen::MatrixXd d = random_matrix(rng, 50, 6);
    const auto m = fit_pca(d, 6);
    const Eigen::MatrixXd back = inverse_transform_pca(m, transform_pca(m, d));
    CHECK((back - d).cwiseAbs().maxCoeff() < 1e-8);

    const Eigen::MatrixXd centered = d.rowwise() - d.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    const Eigen::VectorXd ev = svd.singularValues().array().square();
    for (int i = 0; i < 6; ++i) CHECK(m.explained_variance_ratio(i) == doctest::Approx(ev(i) / ev.sum()).epsilon(1e-10));

    CHECK((m.components * m.components.transpose() - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
    for (int i = 0; i < 6; ++i) {
      if (i) CHECK(m.explained_variance_ratio(i) <= m.explained_variance_ratio(i - 1));
      Eigen::Index arg;
      m.components.row(i).cwiseAbs().maxCoeff(&arg);
      CHECK(m.components(i, arg) > 0);
    }
  }

  TEST_CASE("component count limits") {
    Rng rng(5);
    const Eigen::MatrixXd d = random_matrix(rng, 4, 6);
    CHECK_NOTHROW(fit_pca(d, 3));
    CHECK_THROWS_AS(fit_pca(d, 4), InvalidConfig);
    CHECK_THROWS_AS(fit_pca(d.topRows(1), 1), InsufficientData);
  }

  TEST_CASE("transform") {
    Rng rng(6);
    const Eigen::MatrixXd d = random_matrix(rng, 20, 5);
    const auto m = fit_pca(d, 3);
    CHECK(transform_pca(m, m.mean.transpose().replicate(4, 1)).cwiseAbs().maxCoeff() == 0.0);

    PcaModel id{Eigen::VectorXd::Constant(5, 0.5), Eigen::MatrixXd::Identity(5, 5), Eigen::VectorXd::Constant(5, 0.2)};
    CHECK(((transform_pca(id, d).array() - (d.array() - 0.5)).abs().maxCoeff()) < 1e-15);

    const Eigen::MatrixXd x = random_matrix(rng, 7, 5);
    const Eigen::MatrixXd got = transform_pca(m, x);
    for (int i = 0; i < 7; ++i)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int j = 0; j < 5; ++j) s += (x(i, j) - m.mean(j)) * m.components(c, j);
        CHECK(std::abs(got(i, c) - s) < 1e-10);
      }
    CHECK_THROWS_AS(transform_pca(m, random_matrix(rng, 3, 4)), MalformedInput);
  }
}

TEST_SUITE("kmeans") {
  TEST_CASE("exact fit") {
    Rng rng(7);
    const Eigen::MatrixXd pts = random_matrix(rng, 5, 2);
    const auto m = fit_position_clusters(pts, 5, 1);
    CHECK(m.inertia_history.back() == 0.0);
    for (int i = 0; i < 5; ++i) CHECK((m.centroids.row(m.assign(pts.row(i).transpose())) - pts.row(i)).norm() == 0.0);
  }

  TEST_CASE("recovers well-separated generators") {
    Rng rng(8);
    Eigen::MatrixXd gen(8, 2);
    for (int g = 0; g < 8; ++g) gen.row(g) << (g % 4) * 1.0, (g / 4) * 1.0;
    Eigen::MatrixXd pts(400, 2);
    for (int i = 0; i < 400; ++i) pts.row(i) = gen.row(i % 8) + 0.01 * Eigen::RowVector2d(rng.normal(), rng.normal());
    const auto m = fit_position_clusters(pts, 8, 42);
    std::vector<bool> used(8, false);
    for (int g = 0; g < 8; ++g) {
      Eigen::Index c;
      const double dist = (m.centroids.rowwise() - gen.row(g)).rowwise().norm().minCoeff(&c);
      CHECK(dist < 0.05);
      CHECK(!used[static_cast<std::size_t>(c)]);
      used[static_cast<std::size_t>(c)] = true;
    }
  }

  TEST_CASE("inertia never increases") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      const auto m = fit_position_clusters(random_matrix(rng, 120, 2), 8, seed);
      for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
        CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] * (1 + 1e-12));
    }
  }

  TEST_CASE("row order does not matter") {
    Rng rng(9);
    Eigen::MatrixXd pts = random_matrix(rng, 60, 2);
    const auto a = fit_position_clusters(pts, 6, 5);
    Eigen::MatrixXd shuffled = pts.colwise().reverse();
    for (int i = 59; i > 0; --i) shuffled.row(i).swap(shuffled.row(static_cast<Eigen::Index>(rng.below(i + 1))));
    const auto b = fit_position_clusters(shuffled, 6, 5);
    CHECK(a.centroids == b.centroids);
  }

  TEST_CASE("ties go to the lowest index and too few rows fail") {
    KMeansModel m;
    m.centroids.resize(3, 1);
    m.centroids << -1.0, 1.0, 3.0;
    CHECK(m.assign(Eigen::VectorXd::Constant(1, 0.0)) == 0);
    CHECK(m.assign(Eigen::VectorXd::Constant(1, 2.0)) == 1);
    Rng rng(10);
    CHECK_THROWS_AS(fit_position_clusters(random_matrix(rng, 3, 2), 4, 1), InsufficientData);
  }
}

TEST_SUITE("streams") {
  TEST_CASE("single frame") {
    Rng rng(11);
    const auto models = fitted_models(rng);
    const auto b = build_streams(random_sequence(rng, 1), models.lips, models.hand, models.positions, 60.0, "one");
    CHECK(b.frames() == 1);
    CHECK(b.lips.dims() == 20);
    CHECK(b.hand_shape.dims() == 20);
    CHECK(b.hand_position.dims() == 8);
    CHECK(b.hand_position.values.sum() == 1.0);
    CHECK_NOTHROW(b.validate());
  }

  TEST_CASE("anchor on a centroid") {
    Rng rng(12);
    const auto models = fitted_models(rng);
    auto seq = random_sequence(rng, 2);
    seq.frames[0].anchor = models.positions.centroids.row(3).transpose();
    const auto b = build_streams(seq, models.lips, models.hand, models.positions);
    CHECK(b.hand_position.values(0, 3) == 1.0);
    CHECK(b.hand_position.values.row(0).sum() == 1.0);
  }

  TEST_CASE("position codes match a nearest-centroid scan") {
    Rng rng(13);
    const auto models = fitted_models(rng);
    const auto seq = random_sequence(rng, 80);
    const auto b = build_streams(seq, models.lips, models.hand, models.positions);
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < 8; ++c) {
        const double d = (models.positions.centroids.row(c).transpose() - seq.frames[t].anchor).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      Eigen::Index got;
      b.hand_position.values.row(static_cast<Eigen::Index>(t)).maxCoeff(&got);
      CHECK(got == best);
    }
  }

  TEST_CASE("hand shape ignores the anchor") {
    Rng rng(14);
    const auto models = fitted_models(rng);
    auto seq = random_sequence(rng, 3);
    auto moved = seq;
    for (auto& f : moved.frames) {
      f.hand.reshaped(2, kHandPoints).colwise() += Eigen::Vector2d(0.3, -0.2);
      f.anchor += Eigen::Vector2d(0.3, -0.2);
    }
    const auto a = build_streams(seq, models.lips, models.hand, models.positions);
    const auto b = build_streams(moved, models.lips, models.hand, models.positions);
    CHECK((a.hand_shape.values - b.hand_shape.values).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("dimension mismatch") {
    Rng rng(15);
    auto models = fitted_models(rng);
    const auto seq = random_sequence(rng, 2);
    PcaModel small = fit_pca(random_matrix(rng, 10, 5), 2);
    CHECK_THROWS_AS(build_streams(seq, small, models.hand, models.positions), MalformedInput);
    KMeansModel wide;
    wide.centroids = random_matrix(rng, 8, 3);
    CHECK_THROWS_AS(build_streams(seq, models.lips, models.hand, wide), MalformedInput);
  }

  TEST_CASE("invalid bundles") {
    Rng rng(16);
    const auto models = fitted_models(rng);
    auto b = build_streams(random_sequence(rng, 4), models.lips, models.hand, models.positions);
    auto bad = b;
    bad.hand_position.values(1, 0) += 0.5;
    CHECK_THROWS_AS(bad.validate(), MalformedInput);
    bad = b;
    bad.lips.values.conservativeResize(3, Eigen::NoChange);
    CHECK_THROWS_AS(bad.validate(), MalformedInput);
  }
}

TEST_SUITE("feature io") {
  TEST_CASE("round trips") {
    Rng rng(17);
    const auto models = fitted_models(rng);
    const auto back = feature_models_from_json(nlohmann::json::parse(to_json(models).dump()));
    CHECK(back.lips.components == models.lips.components);
    CHECK(back.hand.mean == models.hand.mean);
    CHECK(back.positions.centroids == models.positions.centroids);
    CHECK(back.lips.explained_variance_ratio == models.lips.explained_variance_ratio);

    const auto seq = random_sequence(rng, 5);
    const auto path = (std::filesystem::temp_directory_path() / "acsr_landmarks_test.jsonl").string();
    write_landmarks_jsonl(seq, path);
    const auto read = read_landmarks_jsonl(path);
    std::filesystem::remove(path);
    REQUIRE(read.frames.size() == 5);
    CHECK(read.frames[4].t == seq.frames[4].t);
    CHECK(read.frames[2].lips == seq.frames[2].lips);
    CHECK(read.frames[3].anchor == seq.frames[3].anchor);

    const auto b = build_streams(seq, models.lips, models.hand, models.positions, 60.0, "u7");
    const auto b2 = stream_bundle_from_json(nlohmann::json::parse(to_json(b).dump()));
    CHECK(b2.utterance_id == "u7");
    CHECK(b2.lips.values == b.lips.values);
    CHECK(b2.hand_position.values == b.hand_position.values);
  }

  TEST_CASE("bad documents") {
    CHECK_THROWS_AS(feature_models_from_json(nlohmann::json{{"format", "other"}}), MalformedInput);
    CHECK_THROWS_AS(stream_bundle_from_json(nlohmann::json::array()), MalformedInput);
    CHECK_THROWS_AS(read_landmarks_jsonl("/nonexistent/file.jsonl"), MalformedInput);
  }
}
