#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "streamgate/error.hpp"

namespace streamgate {

using Features = Eigen::MatrixXd;  // rows are samples
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

inline constexpr double kVarianceFloor = 1e-8;

/// Deployable classifier state: a normalization layer (running statistics
/// plus affine) followed by a linear softmax head.
struct ModelParams {
  Vector mu;
  Vector var;
  Vector gamma;
  Vector beta;
  Eigen::MatrixXd W;  // classes x features
  Vector b;

  Eigen::Index dim() const { return mu.size(); }
  Eigen::Index num_classes() const { return b.size(); }

  static ModelParams identity(Eigen::Index dim, Eigen::Index classes) {
    ModelParams p;
    p.mu = Vector::Zero(dim);
    p.var = Vector::Ones(dim);
    p.gamma = Vector::Ones(dim);
    p.beta = Vector::Zero(dim);
    p.W = Eigen::MatrixXd::Zero(classes, dim);
    p.b = Vector::Zero(classes);
    return p;
  }

  bool same_shape(const ModelParams& o) const {
    return mu.size() == o.mu.size() && var.size() == o.var.size() &&
           gamma.size() == o.gamma.size() && beta.size() == o.beta.size() &&
           W.rows() == o.W.rows() && W.cols() == o.W.cols() && b.size() == o.b.size();
  }

  bool shape_consistent() const {
    const auto d = mu.size();
    return d > 0 && var.size() == d && gamma.size() == d && beta.size() == d &&
           W.cols() == d && W.rows() == b.size() && b.size() > 0;
  }

  bool all_finite() const {
    return mu.allFinite() && var.allFinite() && gamma.allFinite() && beta.allFinite() &&
           W.allFinite() && b.allFinite();
  }

  void validate() const {
    if (!shape_consistent()) throw InvalidArgument("ModelParams: inconsistent shapes");
    if (!all_finite()) throw NumericError("ModelParams: non-finite entries");
    if ((var.array() <= 0.0).any()) throw InvalidArgument("ModelParams: non-positive variance");
  }

  bool operator==(const ModelParams& o) const {
    return same_shape(o) && mu == o.mu && var == o.var && gamma == o.gamma && beta == o.beta &&
           W == o.W && b == o.b;
  }
};

/// FNV-1a over the raw bytes of every field. Equal fingerprints for
/// byte-equal parameters; used to detect state carried across domains.
inline std::uint64_t fingerprint(const ModelParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, data + i, sizeof bits);
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (bits >> (8 * byte)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  };
  feed(p.mu.data(), p.mu.size());
  feed(p.var.data(), p.var.size());
  feed(p.gamma.data(), p.gamma.size());
  feed(p.beta.data(), p.beta.size());
  feed(p.W.data(), p.W.size());
  feed(p.b.data(), p.b.size());
  return h;
}

inline Vector floor_variance(Vector var) {
  return var.cwiseMax(kVarianceFloor);
}

/// (x - mu) / sqrt(var), row-wise.
inline Features standardize(const ModelParams& p, const Features& x) {
  const Eigen::RowVectorXd inv_sd = p.var.cwiseSqrt().cwiseInverse().transpose();
  return (x.rowwise() - p.mu.transpose()).array().rowwise() * inv_sd.array();
}

inline Features logits_from_normalized(const ModelParams& p, const Features& n) {
  Features z = (n.array().rowwise() * p.gamma.transpose().array()).rowwise() +
               p.beta.transpose().array();
  Features l = z * p.W.transpose();
  l.rowwise() += p.b.transpose();
  return l;
}

/// Row-wise softmax with max subtraction.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

/// Shannon entropy of each probability row, with 0 log 0 = 0.
inline Vector row_entropy(const Eigen::MatrixXd& probs) {
  Vector h(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const double q = probs(i, k);
      if (q > 0.0) s -= q * std::log(q);
    }
    h(i) = s;
  }
  return h;
}

// Lowest index wins ties.
inline Labels argmax_rows(const Eigen::MatrixXd& m) {
  Labels out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < m.cols(); ++k)
      if (m(i, k) > m(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

struct Prediction {
  Labels labels;
  Eigen::MatrixXd probs;  // batch x classes
};

/// Forward pass of the classifier: normalize, affine, linear head, softmax.
inline Prediction predict(const ModelParams& p, const Features& x) {
  if (x.cols() != p.dim()) throw InvalidArgument("predict: feature dimension mismatch");
  if (!x.allFinite()) throw NumericError("predict: non-finite features");
  const Features logits = logits_from_normalized(p, standardize(p, x));
  if (!logits.allFinite()) throw NumericError("predict: non-finite logits");
  Prediction out;
  out.probs = softmax_rows(logits);
  out.labels = argmax_rows(out.probs);
  return out;
}

inline std::int64_t count_errors(const Labels& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) throw InvalidArgument("label length mismatch");
  std::int64_t n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) n += predicted[i] != truth[i];
  return n;
}

}  // namespace streamgate
