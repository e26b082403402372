#include "acsr/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "acsr/error.hpp"
#include "acsr/rng.hpp"

namespace acsr {

namespace {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;

struct ForwardTrace {
  std::array<Matrix, 3> inputs;
  std::array<BiGruTrace<double>, 3> stream_gru;
  std::array<Matrix, 3> stream_states;  // Bi-GRU outputs
  std::array<AttentionTrace<double>, 3> attention;
  Matrix joint_input;
  BiGruTrace<double> joint;
  Matrix joint_states;
  Matrix probs;
};

void check_streams(const AcsrModel& model, const StreamBundle& streams) {
  const Eigen::Index t = streams.lips.frames();
  if (t < 1) throw MalformedInput("empty utterance");
  for (Stream s : kAllStreams) {
    const auto& m = streams.stream(s);
    if (m.frames() != t) throw MalformedInput(streams.utterance_id + ": streams disagree on frame count");
    if (m.dims() != model.dims().stream_dim(s))
      throw MalformedInput(streams.utterance_id + ": " + stream_name(s) + " has " + std::to_string(m.dims()) +
                           " columns, model expects " + std::to_string(model.dims().stream_dim(s)));
  }
}

Matrix forward_pass(const AcsrModel& model, const StreamBundle& streams, ForwardTrace* trace,
                    std::array<Matrix, 3>* maps) {
  check_streams(model, streams);
  const Eigen::Index T = streams.frames();
  const Eigen::Index dk = model.dims().d_k;
  Matrix joint_input(T, 3 * dk);
  for (std::size_t s = 0; s < 3; ++s) {
    const Matrix& x = streams.stream(kAllStreams[s]).values;
    Matrix states = bigru_forward(model.stream_gru[s], x, trace ? &trace->stream_gru[s] : nullptr);
    auto att = self_attention(model.attention[s], states, trace ? &trace->attention[s] : nullptr);
    joint_input.middleCols(static_cast<Eigen::Index>(s) * dk, dk) = att.output;
    if (maps) (*maps)[s] = std::move(att.map);
    if (trace) {
      trace->inputs[s] = x;
      trace->stream_states[s] = std::move(states);
    }
  }
  Matrix joint_states = bigru_forward(model.joint, joint_input, trace ? &trace->joint : nullptr);
  const Matrix logits = (joint_states * model.output.weight.transpose()).rowwise() + model.output.bias.transpose();
  Matrix probs = row_softmax(logits);
  if (trace) {
    trace->joint_input = std::move(joint_input);
    trace->joint_states = std::move(joint_states);
    trace->probs = probs;
  }
  return probs;
}

/// Back-propagates through one GRU direction; accumulates weight gradients
/// and returns d loss / d input rows.
Matrix gru_backward(const GruWeights<double>& w, const GruTrace<double>& tr, const Matrix& x, const Matrix& d_out,
                    GruWeights<double>& g) {
  const Eigen::Index T = x.rows();
  const Eigen::Index H = w.hidden();
  const auto rec_z = w.recurrent.topRows(H);
  const auto rec_r = w.recurrent.middleRows(H, H);
  const auto rec_n = w.recurrent.bottomRows(H);

  Matrix d_pre(T, 3 * H);
  RowVector dh_next = RowVector::Zero(H);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto z = tr.update.row(t).array();
    const auto r = tr.reset.row(t).array();
    const auto n = tr.candidate.row(t).array();
    const auto hp = tr.h_prev.row(t).array();

    const RowVector dh = d_out.row(t) + dh_next;
    const RowArray dn = dh.array() * (1.0 - z);
    const RowArray dz = dh.array() * (hp - n);
    const RowVector da_n = (dn * (1.0 - n.square())).matrix();
    const RowVector da_z = (dz * z * (1.0 - z)).matrix();
    const RowVector d_rh = da_n * rec_n;
    const RowVector da_r = (d_rh.array() * hp * r * (1.0 - r)).matrix();

    dh_next = (dh.array() * z + d_rh.array() * r).matrix() + da_z * rec_z + da_r * rec_r;
    d_pre.row(t) << da_z, da_r, da_n;
  }
  g.recurrent.topRows(H).noalias() += d_pre.leftCols(H).transpose() * tr.h_prev;
  g.recurrent.middleRows(H, H).noalias() += d_pre.middleCols(H, H).transpose() * tr.h_prev;
  g.recurrent.bottomRows(H).noalias() += d_pre.rightCols(H).transpose() * tr.reset_h;
  g.input.noalias() += d_pre.transpose() * x;
  g.bias += d_pre.colwise().sum().transpose();
  return d_pre * w.input;
}

Matrix bigru_backward(const BiGruLayer<double>& layer, const BiGruTrace<double>& tr, const Matrix& x,
                      const Matrix& d_out, BiGruLayer<double>& g) {
  const Eigen::Index H = layer.hidden_dim();
  Matrix dx = gru_backward(layer.forward, tr.forward, x, d_out.leftCols(H), g.forward);
  const Matrix x_rev = x.colwise().reverse();
  const Matrix d_rev = d_out.rightCols(H).colwise().reverse();
  dx += gru_backward(layer.backward, tr.backward, x_rev, d_rev, g.backward).colwise().reverse();
  return dx;
}

Matrix attention_backward(const AttentionLayer<double>& layer, const AttentionTrace<double>& tr, const Matrix& x,
                          const Matrix& d_out, AttentionLayer<double>& g) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(layer.d_k()));
  const Matrix& a = tr.weights;
  const Matrix d_v = a.transpose() * d_out;
  const Matrix d_a = d_out * tr.value.transpose();
  const Eigen::VectorXd row_dot = (d_a.array() * a.array()).rowwise().sum();
  const Matrix d_s = (a.array() * (d_a.colwise() - row_dot).array()).matrix() * scale;
  const Matrix d_q = d_s * tr.key;
  const Matrix d_k = d_s.transpose() * tr.query;
  g.query.noalias() += x.transpose() * d_q;
  g.key.noalias() += x.transpose() * d_k;
  g.value.noalias() += x.transpose() * d_v;
  return d_q * layer.query.transpose() + d_k * layer.key.transpose() + d_v * layer.value.transpose();
}

/// Loss-only forward pass in an arbitrary scalar type.
template <typename Scalar>
Scalar loss_value(const AcsrModel& model, const StreamBundle& streams, const LabelSequence& labels) {
  check_streams(model, streams);
  const Eigen::Index T = streams.frames();
  const Eigen::Index dk = model.dims().d_k;
  Mat<Scalar> joint_input(T, 3 * dk);
  for (std::size_t s = 0; s < 3; ++s) {
    const Mat<Scalar> x = streams.stream(kAllStreams[s]).values.template cast<Scalar>();
    const Mat<Scalar> states = bigru_forward(model.stream_gru[s].template cast<Scalar>(), x);
    joint_input.middleCols(static_cast<Eigen::Index>(s) * dk, dk) =
        self_attention(model.attention[s].template cast<Scalar>(), states).output;
  }
  const Mat<Scalar> joint_states = bigru_forward(model.joint.template cast<Scalar>(), joint_input);
  const auto out = model.output.template cast<Scalar>();
  const Mat<Scalar> logits = (joint_states * out.weight.transpose()).rowwise() + out.bias.transpose();
  return ctc_neg_log_likelihood(row_softmax(logits), labels);
}

}  // namespace

Eigen::Index ModelDims::stream_dim(Stream s) const {
  switch (s) {
    case Stream::kLips: return lips_dim;
    case Stream::kHandShape: return hand_dim;
    case Stream::kHandPosition: return position_dim;
  }
  return 0;
}

AcsrModel::AcsrModel(const ModelDims& dims, PhoneInventory inventory) : dims_(dims), inventory_(std::move(inventory)) {
  if (dims.hidden < 1 || dims.d_k < 1 || dims.lips_dim < 1 || dims.hand_dim < 1 || dims.position_dim < 1)
    throw InvalidConfig("model dimensions must be positive");
  inventory_.validate();
  if (inventory_.phones.empty()) throw InvalidConfig("phone inventory is empty");
  for (std::size_t s = 0; s < 3; ++s) {
    stream_gru[s] = BiGruLayer<double>(dims.stream_dim(kAllStreams[s]), dims.hidden);
    attention[s] = AttentionLayer<double>(2 * dims.hidden, dims.d_k);
  }
  joint = BiGruLayer<double>(3 * dims.d_k, dims.hidden);
  output = OutputLayer<double>(2 * dims.hidden, inventory_.classes());
}

AcsrModel AcsrModel::initialized(const ModelDims& dims, PhoneInventory inventory, std::uint64_t seed) {
  AcsrModel m(dims, std::move(inventory));
  Rng rng(seed);
  auto fill = [&](auto& block, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = rng.uniform(-bound, bound);
  };
  auto gru = [&](GruWeights<double>& w) {
    fill(w.input, static_cast<double>(w.input_dim()));
    fill(w.recurrent, static_cast<double>(w.hidden()));
    fill(w.bias, static_cast<double>(w.hidden()));
  };
  for (std::size_t s = 0; s < 3; ++s) {
    gru(m.stream_gru[s].forward);
    gru(m.stream_gru[s].backward);
    fill(m.attention[s].query, static_cast<double>(m.attention[s].input_dim()));
    fill(m.attention[s].key, static_cast<double>(m.attention[s].input_dim()));
    fill(m.attention[s].value, static_cast<double>(m.attention[s].input_dim()));
  }
  gru(m.joint.forward);
  gru(m.joint.backward);
  fill(m.output.weight, static_cast<double>(m.output.weight.cols()));
  fill(m.output.bias, static_cast<double>(m.output.weight.cols()));
  return m;
}

Eigen::Index AcsrModel::parameter_count() const {
  Eigen::Index n = 0;
  visit([&](const std::string&, const auto& block) { n += block.size(); });
  return n;
}

Eigen::VectorXd AcsrModel::flatten() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index offset = 0;
  visit([&](const std::string&, const auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) flat(offset++) = block(r, c);
  });
  return flat;
}

void AcsrModel::unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != parameter_count()) throw MalformedInput("flat parameter vector has the wrong length");
  Eigen::Index offset = 0;
  visit([&](const std::string&, auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = flat(offset++);
  });
}

AcsrModel AcsrModel::zeros_like() const {
  AcsrModel z = *this;
  z.visit([](const std::string&, auto& block) { block.setZero(); });
  return z;
}

ForwardResult model_forward(const AcsrModel& model, const StreamBundle& streams) {
  std::array<Matrix, 3> maps;
  ForwardResult out;
  out.posteriorgram.probs = forward_pass(model, streams, nullptr, &maps);
  out.posteriorgram.blank_index = PhoneInventory::kBlank;
  for (std::size_t s = 0; s < 3; ++s) out.maps[s] = {std::move(maps[s]), kAllStreams[s]};
  return out;
}

double loss_and_gradient(const AcsrModel& model, const StreamBundle& streams, const LabelSequence& labels,
                         AcsrModel* grad) {
  ForwardTrace tr;
  Posteriorgram post;
  post.probs = forward_pass(model, streams, grad ? &tr : nullptr, nullptr);
  const CtcLoss ctc = ctc_loss(post, labels);
  if (!grad) return ctc.loss;

  const Matrix& d_logits = ctc.grad;
  grad->output.weight.noalias() += d_logits.transpose() * tr.joint_states;
  grad->output.bias += d_logits.colwise().sum().transpose();
  const Matrix d_joint_states = d_logits * model.output.weight;
  const Matrix d_joint_input = bigru_backward(model.joint, tr.joint, tr.joint_input, d_joint_states, grad->joint);

  const Eigen::Index dk = model.dims().d_k;
  for (std::size_t s = 0; s < 3; ++s) {
    const Matrix d_att = d_joint_input.middleCols(static_cast<Eigen::Index>(s) * dk, dk);
    const Matrix d_states =
        attention_backward(model.attention[s], tr.attention[s], tr.stream_states[s], d_att, grad->attention[s]);
    bigru_backward(model.stream_gru[s], tr.stream_gru[s], tr.inputs[s], d_states, grad->stream_gru[s]);
  }
  return ctc.loss;
}

void TrainingConfig::validate() const {
  if (!(learning_rate >= 0)) throw InvalidConfig("learning_rate must be >= 0");
  if (epochs < 1 || batch_size < 1 || plateau_patience < 1) throw InvalidConfig("epochs, batch_size and patience must be positive");
  if (!(plateau_factor > 0 && plateau_factor < 1)) throw InvalidConfig("plateau factor must be in (0, 1)");
  if (!(min_learning_rate >= 0)) throw InvalidConfig("min learning rate must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_epsilon > 0)) throw InvalidConfig("invalid Adam constants");
  if (!(clip_norm >= 0)) throw InvalidConfig("clip_norm must be >= 0");
}

nlohmann::json to_json(const TrainingConfig& c) {
  return {{"learning_rate", c.learning_rate},   {"epochs", c.epochs},
          {"batch_size", c.batch_size},         {"plateau_patience", c.plateau_patience},
          {"plateau_factor", c.plateau_factor}, {"min_learning_rate", c.min_learning_rate},
          {"seed", c.seed},                     {"beta1", c.beta1},
          {"beta2", c.beta2},                   {"adam_epsilon", c.adam_epsilon},
          {"clip_norm", c.clip_norm}};
}

TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig c) {
  if (!j.is_object()) throw InvalidConfig("training config must be an object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "plateau_patience") c.plateau_patience = v.get<int>();
      else if (k == "plateau_factor") c.plateau_factor = v.get<double>();
      else if (k == "min_learning_rate") c.min_learning_rate = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "beta1") c.beta1 = v.get<double>();
      else if (k == "beta2") c.beta2 = v.get<double>();
      else if (k == "adam_epsilon") c.adam_epsilon = v.get<double>();
      else if (k == "clip_norm") c.clip_norm = v.get<double>();
      else throw InvalidConfig("unknown training config field '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const ModelDims& d) {
  return {{"lips_dim", d.lips_dim}, {"hand_dim", d.hand_dim}, {"position_dim", d.position_dim},
          {"hidden", d.hidden},     {"d_k", d.d_k}};
}

ModelDims model_dims_from_json(const nlohmann::json& j, ModelDims d) {
  if (!j.is_object()) throw InvalidConfig("model dims must be an object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "lips_dim") d.lips_dim = v.get<Eigen::Index>();
      else if (k == "hand_dim") d.hand_dim = v.get<Eigen::Index>();
      else if (k == "position_dim") d.position_dim = v.get<Eigen::Index>();
      else if (k == "hidden") d.hidden = v.get<Eigen::Index>();
      else if (k == "d_k") d.d_k = v.get<Eigen::Index>();
      else throw InvalidConfig("unknown model field '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("model dims: ") + e.what());
  }
  if (d.lips_dim < 1 || d.hand_dim < 1 || d.position_dim < 1 || d.hidden < 1 || d.d_k < 1)
    throw InvalidConfig("model dimensions must be positive");
  return d;
}

double PlateauScheduler::step(double loss) {
  if (loss < best_) {
    best_ = loss;
    stale_ = 0;
  } else if (++stale_ >= patience_) {
    lr_ = std::max(lr_ * factor_, std::min(lr_, min_lr_));
    stale_ = 0;
  }
  return lr_;
}

TrainingResult train(AcsrModel model, std::span<const TrainingSample> corpus, const TrainingConfig& config,
                     const std::function<void(const EpochRecord&, const AcsrModel&)>& on_epoch) {
  config.validate();
  if (corpus.empty()) throw InsufficientData("training corpus is empty");
  for (const auto& sample : corpus) {
    check_streams(model, sample.streams);
    if (sample.labels.empty()) throw MalformedInput(sample.streams.utterance_id + ": empty label sequence");
    for (int l : sample.labels)
      if (l <= 0 || l >= model.classes()) throw MalformedInput(sample.streams.utterance_id + ": label outside inventory");
  }

  Rng rng(config.seed);
  Eigen::VectorXd params = model.flatten();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(params.size());
  std::int64_t step = 0;
  PlateauScheduler schedule(config);
  double lr = schedule.learning_rate();

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> losses(corpus.size(), 0.0);

  TrainingResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      AcsrModel grad = model.zeros_like();
      for (std::size_t b = start; b < end; ++b) {
        const auto& sample = corpus[order[b]];
        const double loss = loss_and_gradient(model, sample.streams, sample.labels, &grad);
        if (!std::isfinite(loss)) throw DivergenceError(epoch, "non-finite CTC loss on " + sample.streams.utterance_id);
        losses[order[b]] = loss;
      }
      Eigen::VectorXd g = grad.flatten() / static_cast<double>(end - start);
      if (!g.allFinite()) throw DivergenceError(epoch, "non-finite gradient");
      if (config.clip_norm > 0) {
        const double norm = g.norm();
        if (norm > config.clip_norm) g *= config.clip_norm / norm;
      }
      ++step;
      m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
      m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      params.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.adam_epsilon);
      model.unflatten(params);
    }

    // Summed in corpus order so the mean does not depend on the shuffle.
    const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    if (!std::isfinite(mean)) throw DivergenceError(epoch, "non-finite mean loss");
    const EpochRecord record{epoch + 1, mean, lr};
    result.history.push_back(record);
    if (on_epoch) on_epoch(record, model);

    lr = schedule.step(mean);
  }
  result.model = std::move(model);
  return result;
}

double gradient_relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-12) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(const AcsrModel& model, const TrainingSample& sample, const GradCheckOptions& options) {
  if (sample.labels.empty()) throw MalformedInput("gradient check needs a non-empty label sequence");
  AcsrModel grad = model.zeros_like();
  loss_and_gradient(model, sample.streams, sample.labels, &grad);
  Eigen::VectorXd analytic = grad.flatten();
  if (options.gradient_hook) options.gradient_hook(analytic);

  const Eigen::VectorXd base = model.flatten();
  std::vector<Eigen::Index> indices(static_cast<std::size_t>(base.size()));
  std::iota(indices.begin(), indices.end(), 0);
  if (options.samples < indices.size()) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < options.samples; ++i)
      std::swap(indices[i], indices[i + rng.below(indices.size() - i)]);
    indices.resize(options.samples);
    std::sort(indices.begin(), indices.end());
  }

  GradCheckReport report;
  AcsrModel probe = model;
  Eigen::VectorXd theta = base;
  for (Eigen::Index idx : indices) {
    theta(idx) = base(idx) + options.epsilon;
    probe.unflatten(theta);
    const long double plus = loss_value<long double>(probe, sample.streams, sample.labels);
    theta(idx) = base(idx) - options.epsilon;
    probe.unflatten(theta);
    const long double minus = loss_value<long double>(probe, sample.streams, sample.labels);
    theta(idx) = base(idx);

    GradCheckEntry e;
    e.index = idx;
    e.analytic = analytic(idx);
    e.numeric = static_cast<double>((plus - minus) / (2.0L * static_cast<long double>(options.epsilon)));
    e.relative_error = gradient_relative_error(e.analytic, e.numeric);
    report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
    report.entries.push_back(e);
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

nlohmann::json to_json(const AcsrModel& model) {
  const auto& d = model.dims();
  nlohmann::json params = nlohmann::json::array();
  model.visit([&](const std::string& name, const auto& block) {
    nlohmann::json values = nlohmann::json::array();
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) values.push_back(block(r, c));
    params.push_back({{"name", name}, {"rows", block.rows()}, {"cols", block.cols()}, {"values", std::move(values)}});
  });
  return {{"format", "acsr-model"},
          {"version", 1},
          {"dims",
           {{"lips_dim", d.lips_dim}, {"hand_dim", d.hand_dim}, {"position_dim", d.position_dim},
            {"hidden", d.hidden}, {"d_k", d.d_k}}},
          {"inventory", model.inventory().phones},
          {"parameters", std::move(params)}};
}

AcsrModel model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "acsr-model" || doc.value("version", 0) != 1)
      throw MalformedInput("not a version-1 model checkpoint");
    const auto& jd = doc.at("dims");
    ModelDims d;
    d.lips_dim = jd.at("lips_dim").get<Eigen::Index>();
    d.hand_dim = jd.at("hand_dim").get<Eigen::Index>();
    d.position_dim = jd.at("position_dim").get<Eigen::Index>();
    d.hidden = jd.at("hidden").get<Eigen::Index>();
    d.d_k = jd.at("d_k").get<Eigen::Index>();
    PhoneInventory inv;
    inv.phones = doc.at("inventory").get<std::vector<std::string>>();
    AcsrModel model(d, inv);

    const auto& params = doc.at("parameters");
    std::size_t i = 0;
    model.visit([&](const std::string& name, auto& block) {
      if (i >= params.size()) throw MalformedInput("checkpoint is missing parameter " + name);
      const auto& p = params[i++];
      if (p.at("name").get<std::string>() != name || p.at("rows").get<Eigen::Index>() != block.rows() ||
          p.at("cols").get<Eigen::Index>() != block.cols())
        throw MalformedInput("checkpoint parameter " + std::to_string(i - 1) + " does not match " + name);
      const auto& values = p.at("values");
      if (static_cast<Eigen::Index>(values.size()) != block.size())
        throw MalformedInput("checkpoint parameter " + name + " has the wrong number of values");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < block.rows(); ++r)
        for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = values[k++].template get<double>();
    });
    if (i != params.size()) throw MalformedInput("checkpoint has extra parameters");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(std::string("model checkpoint: ") + e.what());
  }
}

void save_model(const AcsrModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MalformedInput("cannot write " + path);
  out << to_json(model).dump() << '\n';
}

AcsrModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open model " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(path + ": " + e.what());
  }
  return model_from_json(doc);
}

void write_training_log(const std::vector<EpochRecord>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MalformedInput("cannot write " + path);
  out << "epoch,mean_loss,learning_rate\n" << std::setprecision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.mean_loss << ',' << r.learning_rate << '\n';
}

}  // namespace acsr
