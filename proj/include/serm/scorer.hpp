#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "serm/errors.hpp"

namespace serm {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Fixed (never trained) representation z = phi(x). Responses and costs live in
// representation space; the map is applied once, before the linear head.
template <typename Scalar>
class FeatureMap {
 public:
  using Fn = std::function<VectorX<Scalar>(const VectorX<Scalar>&)>;

  FeatureMap(std::string id, Eigen::Index dim_in, Eigen::Index dim_out, Fn fn)
      : id_(std::move(id)), dim_in_(dim_in), dim_out_(dim_out), fn_(std::move(fn)) {
    if (dim_in <= 0 || dim_out <= 0)
      throw InvalidConfig("feature map dimensions must be positive");
  }

  const std::string& id() const { return id_; }
  Eigen::Index dim_in() const { return dim_in_; }
  Eigen::Index dim_out() const { return dim_out_; }

  VectorX<Scalar> operator()(const VectorX<Scalar>& x) const {
    if (x.size() != dim_in_) throw InvalidInput("feature map input has wrong dimension");
    VectorX<Scalar> z = fn_(x);
    if (z.size() != dim_out_) throw InvalidInput("feature map produced wrong dimension");
    return z;
  }

  // Row-wise application to an m x dim_in matrix.
  MatrixX<Scalar> apply_rows(const MatrixX<Scalar>& X) const {
    MatrixX<Scalar> Z(X.rows(), dim_out_);
    for (Eigen::Index i = 0; i < X.rows(); ++i) Z.row(i) = (*this)(X.row(i).transpose()).transpose();
    return Z;
  }

 private:
  std::string id_;
  Eigen::Index dim_in_;
  Eigen::Index dim_out_;
  Fn fn_;
};

template <typename Scalar>
FeatureMap<Scalar> identity_map(Eigen::Index d) {
  return FeatureMap<Scalar>("identity", d, d, [](const VectorX<Scalar>& x) { return x; });
}

// [x, x_i * x_j for i <= j]
template <typename Scalar>
FeatureMap<Scalar> quadratic_map(Eigen::Index d) {
  const Eigen::Index out = d + d * (d + 1) / 2;
  return FeatureMap<Scalar>("quadratic", d, out, [d, out](const VectorX<Scalar>& x) {
    VectorX<Scalar> z(out);
    z.head(d) = x;
    Eigen::Index k = d;
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i; j < d; ++j) z(k++) = x(i) * x(j);
    return z;
  });
}

// Looks up a built-in map by its identifier.
template <typename Scalar>
FeatureMap<Scalar> feature_map_by_id(const std::string& id, Eigen::Index d) {
  if (id == "identity") return identity_map<Scalar>(d);
  if (id == "quadratic") return quadratic_map<Scalar>(d);
  throw InvalidConfig("unknown feature map '" + id + "'");
}

// f(x) = w . phi(x) + b
template <typename Scalar>
struct LinearScorer {
  VectorX<Scalar> w;
  Scalar b = Scalar(0);
  std::optional<FeatureMap<Scalar>> feature_map;

  LinearScorer() = default;
  LinearScorer(VectorX<Scalar> weights, Scalar bias,
               std::optional<FeatureMap<Scalar>> map = std::nullopt)
      : w(std::move(weights)), b(bias), feature_map(std::move(map)) {
    validate();
  }

  Eigen::Index dim() const { return w.size(); }
  Eigen::Index input_dim() const { return feature_map ? feature_map->dim_in() : w.size(); }

  void validate() const {
    if (w.size() < 1) throw InvalidInput("scorer needs at least one weight");
    if (!w.allFinite() || !std::isfinite(static_cast<double>(b)))
      throw InvalidInput("scorer parameters must be finite");
    if (feature_map && feature_map->dim_out() != w.size())
      throw InvalidInput("weight length does not match feature map output");
  }

  // Score on an already-mapped representation (the linear head alone).
  Scalar head(const VectorX<Scalar>& z) const {
    if (z.size() != w.size()) throw InvalidInput("representation has wrong dimension");
    return w.dot(z) + b;
  }

  // Linear head without the feature map, for response-layer use.
  LinearScorer linear_head() const { return LinearScorer(w, b); }
};

template <typename Scalar>
Scalar score(const LinearScorer<Scalar>& model, const VectorX<Scalar>& x) {
  if (x.size() != model.input_dim()) throw InvalidInput("input has wrong dimension for scorer");
  if (model.feature_map) return model.head((*model.feature_map)(x));
  return model.w.dot(x) + model.b;
}

}  // namespace serm
