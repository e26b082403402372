#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "acsr/error.hpp"
#include "acsr/math.hpp"

namespace acsr {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// One GRU direction. Gate blocks are stacked [update; reset; candidate]:
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wn x + Un (r * h) + bn)
///   h' = (1 - z) * n + z * h
template <typename Scalar>
struct GruWeights {
  Mat<Scalar> input;      // 3H x In
  Mat<Scalar> recurrent;  // 3H x H
  Vec<Scalar> bias;       // 3H

  GruWeights() = default;
  GruWeights(Eigen::Index input_dim, Eigen::Index hidden)
      : input(Mat<Scalar>::Zero(3 * hidden, input_dim)),
        recurrent(Mat<Scalar>::Zero(3 * hidden, hidden)),
        bias(Vec<Scalar>::Zero(3 * hidden)) {}

  Eigen::Index hidden() const { return recurrent.cols(); }
  Eigen::Index input_dim() const { return input.cols(); }

  template <typename Other>
  GruWeights<Other> cast() const {
    GruWeights<Other> out;
    out.input = input.template cast<Other>();
    out.recurrent = recurrent.template cast<Other>();
    out.bias = bias.template cast<Other>();
    return out;
  }
};

template <typename Scalar>
struct BiGruLayer {
  GruWeights<Scalar> forward;
  GruWeights<Scalar> backward;

  BiGruLayer() = default;
  BiGruLayer(Eigen::Index input_dim, Eigen::Index hidden) : forward(input_dim, hidden), backward(input_dim, hidden) {}

  Eigen::Index input_dim() const { return forward.input_dim(); }
  Eigen::Index hidden_dim() const { return forward.hidden(); }
  Eigen::Index output_dim() const { return 2 * forward.hidden(); }

  template <typename Other>
  BiGruLayer<Other> cast() const {
    BiGruLayer<Other> out;
    out.forward = forward.template cast<Other>();
    out.backward = backward.template cast<Other>();
    return out;
  }
};

/// Single-head scaled dot-product self-attention; projections are In x d_k.
template <typename Scalar>
struct AttentionLayer {
  Mat<Scalar> query;
  Mat<Scalar> key;
  Mat<Scalar> value;

  AttentionLayer() = default;
  AttentionLayer(Eigen::Index input_dim, Eigen::Index d_k)
      : query(Mat<Scalar>::Zero(input_dim, d_k)),
        key(Mat<Scalar>::Zero(input_dim, d_k)),
        value(Mat<Scalar>::Zero(input_dim, d_k)) {}

  Eigen::Index input_dim() const { return query.rows(); }
  Eigen::Index d_k() const { return query.cols(); }

  template <typename Other>
  AttentionLayer<Other> cast() const {
    AttentionLayer<Other> out;
    out.query = query.template cast<Other>();
    out.key = key.template cast<Other>();
    out.value = value.template cast<Other>();
    return out;
  }
};

/// Affine map to class logits: logits = x W^T + b.
template <typename Scalar>
struct OutputLayer {
  Mat<Scalar> weight;  // classes x In
  Vec<Scalar> bias;

  OutputLayer() = default;
  OutputLayer(Eigen::Index input_dim, Eigen::Index classes)
      : weight(Mat<Scalar>::Zero(classes, input_dim)), bias(Vec<Scalar>::Zero(classes)) {}

  template <typename Other>
  OutputLayer<Other> cast() const {
    OutputLayer<Other> out;
    out.weight = weight.template cast<Other>();
    out.bias = bias.template cast<Other>();
    return out;
  }
};

/// Per-step activations kept for back-propagation (all T x H).
template <typename Scalar>
struct GruTrace {
  Mat<Scalar> update, reset, candidate, h_prev, reset_h;
};

template <typename Scalar>
struct BiGruTrace {
  GruTrace<Scalar> forward, backward;
};

template <typename Scalar>
struct AttentionTrace {
  Mat<Scalar> query, key, value, weights;
};

/// Runs one direction over the rows of `x` in order; returns T x H states.
template <typename Scalar, typename Derived>
Mat<Scalar> gru_run(const GruWeights<Scalar>& w, const Eigen::MatrixBase<Derived>& x, GruTrace<Scalar>* trace = nullptr) {
  const Eigen::Index T = x.rows();
  const Eigen::Index H = w.hidden();
  const Mat<Scalar> gates_in = (x * w.input.transpose()).rowwise() + w.bias.transpose();
  const Mat<Scalar> rec_zr_t = w.recurrent.topRows(2 * H).transpose();  // H x 2H
  const Mat<Scalar> rec_n_t = w.recurrent.bottomRows(H).transpose();    // H x H

  Mat<Scalar> out(T, H);
  if (trace) {
    trace->update.resize(T, H);
    trace->reset.resize(T, H);
    trace->candidate.resize(T, H);
    trace->h_prev.resize(T, H);
    trace->reset_h.resize(T, H);
  }
  RowVec<Scalar> h = RowVec<Scalar>::Zero(H);
  for (Eigen::Index t = 0; t < T; ++t) {
    const RowVec<Scalar> zr_pre = gates_in.row(t).head(2 * H) + h * rec_zr_t;
    const RowVec<Scalar> z = sigmoid(zr_pre.head(H).array()).matrix();
    const RowVec<Scalar> r = sigmoid(zr_pre.tail(H).array()).matrix();
    const RowVec<Scalar> rh = r.cwiseProduct(h);
    const RowVec<Scalar> n = (gates_in.row(t).tail(H) + rh * rec_n_t).array().tanh().matrix();
    if (trace) {
      trace->update.row(t) = z;
      trace->reset.row(t) = r;
      trace->candidate.row(t) = n;
      trace->h_prev.row(t) = h;
      trace->reset_h.row(t) = rh;
    }
    h = (RowVec<Scalar>::Ones(H) - z).cwiseProduct(n) + z.cwiseProduct(h);
    out.row(t) = h;
  }
  return out;
}

/// T x 2H output, forward states then backward states for each frame.
template <typename Scalar, typename Derived>
Mat<Scalar> bigru_forward(const BiGruLayer<Scalar>& layer, const Eigen::MatrixBase<Derived>& x,
                          BiGruTrace<Scalar>* trace = nullptr) {
  if (x.cols() != layer.input_dim())
    throw MalformedInput("Bi-GRU expects " + std::to_string(layer.input_dim()) + " input columns, got " +
                         std::to_string(x.cols()));
  const Eigen::Index H = layer.hidden_dim();
  Mat<Scalar> out(x.rows(), 2 * H);
  out.leftCols(H) = gru_run(layer.forward, x, trace ? &trace->forward : nullptr);
  const Mat<Scalar> reversed = x.colwise().reverse();
  out.rightCols(H) = gru_run(layer.backward, reversed, trace ? &trace->backward : nullptr).colwise().reverse();
  return out;
}

template <typename Scalar>
struct AttentionOutput {
  Mat<Scalar> output;  // T x d_k
  Mat<Scalar> map;     // T x T, row-stochastic
};

/// softmax(Q K^T / sqrt(d_k)) V with Q, K, V projected from the rows of `x`.
template <typename Scalar, typename Derived>
AttentionOutput<Scalar> self_attention(const AttentionLayer<Scalar>& layer, const Eigen::MatrixBase<Derived>& x,
                                       AttentionTrace<Scalar>* trace = nullptr) {
  if (x.cols() != layer.input_dim())
    throw MalformedInput("attention expects " + std::to_string(layer.input_dim()) + " input columns, got " +
                         std::to_string(x.cols()));
  const Mat<Scalar> q = x * layer.query;
  const Mat<Scalar> k = x * layer.key;
  const Mat<Scalar> v = x * layer.value;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(layer.d_k()));
  AttentionOutput<Scalar> out;
  out.map = row_softmax(((q * k.transpose()) * scale).eval());
  out.output = out.map * v;
  if (trace) {
    trace->query = q;
    trace->key = k;
    trace->value = v;
    trace->weights = out.map;
  }
  return out;
}

}  // namespace acsr
