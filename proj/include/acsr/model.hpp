#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "acsr/ctc.hpp"
#include "acsr/features.hpp"
#include "acsr/nn.hpp"

namespace acsr {

struct ModelDims {
  Eigen::Index lips_dim = 20;
  Eigen::Index hand_dim = 20;
  Eigen::Index position_dim = 8;
  Eigen::Index hidden = 32;  // per direction, every Bi-GRU
  Eigen::Index d_k = 32;

  Eigen::Index stream_dim(Stream s) const;
};

struct AttentionMap {
  Eigen::MatrixXd scores;  // T x T, row-stochastic
  Stream stream = Stream::kLips;
};

/// Three-stream recognizer: per stream Bi-GRU then self-attention, the
/// attention outputs concatenated frame-wise into a joint Bi-GRU, then an
/// affine layer and softmax over phones + blank.
///
/// Parameter order (used by flatten(), checkpoints and gradient checks):
///   for stream in lips, hand_shape, hand_position:
///     gru.forward.{input, recurrent, bias}, gru.backward.{input, recurrent, bias},
///     attention.{query, key, value}
///   joint.forward.{input, recurrent, bias}, joint.backward.{input, recurrent, bias}
///   output.{weight, bias}
/// Each block is flattened row-major.
class AcsrModel {
 public:
  AcsrModel() = default;
  AcsrModel(const ModelDims& dims, PhoneInventory inventory);

  /// Uniform initialization in +-1/sqrt(fan_in).
  static AcsrModel initialized(const ModelDims& dims, PhoneInventory inventory, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  const PhoneInventory& inventory() const { return inventory_; }
  Eigen::Index classes() const { return inventory_.classes(); }

  std::array<BiGruLayer<double>, 3> stream_gru;
  std::array<AttentionLayer<double>, 3> attention;
  BiGruLayer<double> joint;
  OutputLayer<double> output;

  /// Calls f(name, block) for every parameter block in the documented order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, std::forward<F>(f));
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, std::forward<F>(f));
  }

  Eigen::Index parameter_count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat);
  /// Same shapes, all zeros; used as a gradient accumulator.
  AcsrModel zeros_like() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& m, F&& f) {
    static constexpr const char* kStreams[] = {"lips", "hand_shape", "hand_position"};
    auto gru = [&](const std::string& prefix, auto& layer) {
      f(prefix + ".forward.input", layer.forward.input);
      f(prefix + ".forward.recurrent", layer.forward.recurrent);
      f(prefix + ".forward.bias", layer.forward.bias);
      f(prefix + ".backward.input", layer.backward.input);
      f(prefix + ".backward.recurrent", layer.backward.recurrent);
      f(prefix + ".backward.bias", layer.backward.bias);
    };
    for (std::size_t s = 0; s < 3; ++s) {
      const std::string p = kStreams[s];
      gru(p + ".gru", m.stream_gru[s]);
      f(p + ".attention.query", m.attention[s].query);
      f(p + ".attention.key", m.attention[s].key);
      f(p + ".attention.value", m.attention[s].value);
    }
    gru("joint", m.joint);
    f(std::string("output.weight"), m.output.weight);
    f(std::string("output.bias"), m.output.bias);
  }

  ModelDims dims_;
  PhoneInventory inventory_;
};

struct ForwardResult {
  Posteriorgram posteriorgram;
  std::array<AttentionMap, 3> maps;  // lips, hand_shape, hand_position
};

ForwardResult model_forward(const AcsrModel& model, const StreamBundle& streams);

/// CTC loss of one utterance; when `grad` is given the parameter gradient is
/// added into it (it must have the model's shapes).
double loss_and_gradient(const AcsrModel& model, const StreamBundle& streams, const LabelSequence& labels,
                         AcsrModel* grad);

struct TrainingConfig {
  double learning_rate = 1e-3;
  int epochs = 120;
  int batch_size = 16;
  int plateau_patience = 5;
  double plateau_factor = 0.5;
  double min_learning_rate = 1e-5;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;

  void validate() const;
};

nlohmann::json to_json(const TrainingConfig& c);
/// Unknown fields raise InvalidConfig; missing ones keep `base`.
TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base = {});
nlohmann::json to_json(const ModelDims& d);
ModelDims model_dims_from_json(const nlohmann::json& j, ModelDims base = {});

/// Reduce-on-plateau learning-rate schedule.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor, double min_lr)
      : lr_(lr), patience_(patience), factor_(factor), min_lr_(min_lr) {}
  explicit PlateauScheduler(const TrainingConfig& c)
      : PlateauScheduler(c.learning_rate, c.plateau_patience, c.plateau_factor, c.min_learning_rate) {}

  double learning_rate() const { return lr_; }
  /// Records an epoch loss; returns the rate for the next epoch.
  double step(double loss);

 private:
  double lr_;
  int patience_;
  double factor_;
  double min_lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

struct TrainingSample {
  StreamBundle streams;
  LabelSequence labels;
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainingResult {
  AcsrModel model;
  std::vector<EpochRecord> history;
};

/// Mini-batch Adam on the mean CTC loss with a reduce-on-plateau schedule.
/// Deterministic for a fixed seed. Throws InsufficientData on an empty corpus
/// and DivergenceError on a non-finite loss.
TrainingResult train(AcsrModel model, std::span<const TrainingSample> corpus, const TrainingConfig& config,
                     const std::function<void(const EpochRecord&, const AcsrModel&)>& on_epoch = {});

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::size_t samples = 200;
  std::uint64_t seed = 7;
  /// Applied to the flattened analytic gradient before comparison (test hook).
  std::function<void(Eigen::VectorXd&)> gradient_hook;
};

struct GradCheckEntry {
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|), defined as 0 when both are below 1e-12.
double gradient_relative_error(double analytic, double numeric);

/// Compares analytic gradients with central finite differences on a random
/// subset of parameters (all of them when the model is smaller than `samples`).
GradCheckReport grad_check(const AcsrModel& model, const TrainingSample& sample, const GradCheckOptions& options = {});

nlohmann::json to_json(const AcsrModel& model);
AcsrModel model_from_json(const nlohmann::json& doc);
void save_model(const AcsrModel& model, const std::string& path);
AcsrModel load_model(const std::string& path);

/// CSV with header epoch,mean_loss,learning_rate.
void write_training_log(const std::vector<EpochRecord>& history, const std::string& path);

}  // namespace acsr
