#pragma once

#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "acsr/error.hpp"

namespace acsr::json_io {

/// Row-major nested arrays: [[row0...], [row1...], ...].
inline nlohmann::json matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Eigen::VectorXd to_vector(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw MalformedInput(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw MalformedInput(what + ": expected numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// `cols` is used when the array is empty.
inline Eigen::MatrixXd to_matrix(const nlohmann::json& j, const std::string& what, Eigen::Index cols = 0) {
  if (!j.is_array()) throw MalformedInput(what + ": expected an array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, cols);
  const auto n_cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), n_cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != n_cols)
      throw MalformedInput(what + ": ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = to_vector(j[r], what).transpose();
  }
  return m;
}

}  // namespace acsr::json_io
