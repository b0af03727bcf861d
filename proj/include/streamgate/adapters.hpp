#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "streamgate/batch.hpp"
#include "streamgate/error.hpp"
#include "streamgate/latency.hpp"
#include "streamgate/model.hpp"

namespace streamgate {

/// Result of one adaptation step on one batch.
struct AdaptOutcome {
  Features x_hat;
  ModelParams theta_hat;
  Labels y_hat;
  double cost = kMinCost;  // seconds
  bool updated = true;     // false when the adapter abstained
  bool degraded = false;   // a documented fallback path was taken
};

/// A test-time adaptation method. adapt() proposes adapted parameters and
/// predictions from the current state without committing them; the protocol
/// decides what becomes the next state through set_params().
class Adapter {
 public:
  Adapter(std::string name, ModelParams pretrained, LatencyModel latency)
      : name_(std::move(name)), pretrained_(std::move(pretrained)), latency_(std::move(latency)) {
    pretrained_.validate();
    state_ = pretrained_;
  }
  virtual ~Adapter() = default;

  const std::string& name() const noexcept { return name_; }
  const ModelParams& params() const noexcept { return state_; }
  const ModelParams& pretrained() const noexcept { return pretrained_; }
  LatencyModel& latency() noexcept { return latency_; }
  const LatencyModel& latency() const noexcept { return latency_; }
  void set_latency(LatencyModel m) { latency_ = std::move(m); }

  void set_params(ModelParams p) {
    if (!p.same_shape(pretrained_)) throw InvalidArgument(name_ + ": parameter shape mismatch");
    state_ = std::move(p);
  }

  Prediction predict(const Features& x) const { return streamgate::predict(state_, x); }

  AdaptOutcome adapt(const Batch& batch) {
    if (batch.size() < 1) throw InvalidArgument(name_ + ": empty batch");
    if (batch.features.cols() != state_.dim())
      throw InvalidArgument(name_ + ": batch dimension mismatch");
    AdaptOutcome out = do_adapt(batch);
    out.cost = std::max(draw_cost(out, batch), kMinCost);
    return out;
  }

  void reset() {
    state_ = pretrained_;
    latency_.reset();
    reset_aux();
  }

  virtual std::unique_ptr<Adapter> clone() const = 0;

 protected:
  virtual AdaptOutcome do_adapt(const Batch& batch) = 0;
  virtual double draw_cost(const AdaptOutcome&, const Batch& batch) {
    return latency_.draw(batch.size());
  }
  virtual void reset_aux() {}

  AdaptOutcome unchanged(const Batch& batch) const {
    AdaptOutcome out;
    out.x_hat = batch.features;
    out.theta_hat = state_;
    out.y_hat = streamgate::predict(state_, batch.features).labels;
    out.updated = false;
    return out;
  }

 private:
  std::string name_;
  ModelParams pretrained_;
  ModelParams state_;
  LatencyModel latency_;
};

// ---------------------------------------------------------------------------
// Objectives on the normalization affine parameters

struct AffineGradient {
  Vector gamma;
  Vector beta;

  double squared_norm() const { return gamma.squaredNorm() + beta.squaredNorm(); }
};

namespace detail {

struct ForwardCache {
  Features normalized;  // (x - mu) / sd
  Eigen::MatrixXd logits;
  Eigen::MatrixXd log_probs;
  Eigen::MatrixXd probs;
};

inline ForwardCache forward(const ModelParams& p, const Features& x) {
  if (x.cols() != p.dim()) throw InvalidArgument("feature dimension mismatch");
  ForwardCache c;
  c.normalized = standardize(p, x);
  c.logits = logits_from_normalized(p, c.normalized);
  c.log_probs.resize(c.logits.rows(), c.logits.cols());
  for (Eigen::Index i = 0; i < c.logits.rows(); ++i) {
    const double m = c.logits.row(i).maxCoeff();
    const double lse = m + std::log((c.logits.row(i).array() - m).exp().sum());
    c.log_probs.row(i) = c.logits.row(i).array() - lse;
  }
  c.probs = c.log_probs.array().exp();
  return c;
}

// Back-propagates dL/dlogits through the linear head and the affine.
inline AffineGradient backprop_affine(const ModelParams& p, const ForwardCache& c,
                                      const Eigen::MatrixXd& dlogits) {
  const Eigen::MatrixXd dz = dlogits * p.W;  // batch x dim
  AffineGradient g;
  g.gamma = (dz.array() * c.normalized.array()).colwise().sum().transpose();
  g.beta = dz.colwise().sum().transpose();
  return g;
}

inline Vector entropies(const ForwardCache& c) {
  return -(c.probs.array() * c.log_probs.array()).rowwise().sum();
}

inline std::vector<bool> all_rows(Eigen::Index n) {
  return std::vector<bool>(static_cast<std::size_t>(n), true);
}

}  // namespace detail

/// Per-sample prediction entropies under `p`.
inline Vector sample_entropies(const ModelParams& p, const Features& x) {
  return detail::entropies(detail::forward(p, x));
}

/// Mean prediction entropy over the rows selected by `mask`.
inline double entropy_loss(const ModelParams& p, const Features& x, const std::vector<bool>& mask) {
  const Vector h = sample_entropies(p, x);
  double s = 0.0;
  std::int64_t n = 0;
  for (Eigen::Index i = 0; i < h.size(); ++i)
    if (mask[static_cast<std::size_t>(i)]) s += h(i), ++n;
  return n == 0 ? 0.0 : s / double(n);
}

inline double entropy_loss(const ModelParams& p, const Features& x) {
  return entropy_loss(p, x, detail::all_rows(x.rows()));
}

/// Gradient of entropy_loss w.r.t. (gamma, beta). Uses
/// dH_i/dlogit_ik = -p_ik (log p_ik + H_i).
inline AffineGradient entropy_gradient(const ModelParams& p, const Features& x,
                                       const std::vector<bool>& mask) {
  const auto c = detail::forward(p, x);
  const Vector h = detail::entropies(c);
  std::int64_t admitted = 0;
  for (bool m : mask) admitted += m;
  Eigen::MatrixXd dl = Eigen::MatrixXd::Zero(c.logits.rows(), c.logits.cols());
  if (admitted > 0) {
    for (Eigen::Index i = 0; i < dl.rows(); ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      dl.row(i) = -(c.probs.row(i).array() * (c.log_probs.row(i).array() + h(i))) /
                  double(admitted);
    }
  }
  return detail::backprop_affine(p, c, dl);
}

inline AffineGradient entropy_gradient(const ModelParams& p, const Features& x) {
  return entropy_gradient(p, x, detail::all_rows(x.rows()));
}

/// Mean cross-entropy against fixed pseudo-labels.
inline double pseudo_label_loss(const ModelParams& p, const Features& x, const Labels& targets) {
  const auto c = detail::forward(p, x);
  double s = 0.0;
  for (Eigen::Index i = 0; i < c.log_probs.rows(); ++i)
    s -= c.log_probs(i, targets[static_cast<std::size_t>(i)]);
  return s / double(c.log_probs.rows());
}

inline AffineGradient pseudo_label_gradient(const ModelParams& p, const Features& x,
                                            const Labels& targets) {
  const auto c = detail::forward(p, x);
  Eigen::MatrixXd dl = c.probs;
  for (Eigen::Index i = 0; i < dl.rows(); ++i) dl(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
  dl /= double(dl.rows());
  return detail::backprop_affine(p, c, dl);
}

// ---------------------------------------------------------------------------
// Adapters

/// The unadapted base model.
class SourceAdapter final : public Adapter {
 public:
  explicit SourceAdapter(ModelParams pretrained,
                         LatencyModel latency = LatencyModel::constant(1.0))
      : Adapter("source", std::move(pretrained), std::move(latency)) {}

  std::unique_ptr<Adapter> clone() const override { return std::make_unique<SourceAdapter>(*this); }

 protected:
  AdaptOutcome do_adapt(const Batch& batch) override { return unchanged(batch); }
};

/// Re-estimates normalization statistics on each test batch.
class NormStatAdapter final : public Adapter {
 public:
  enum class Mode {
    AdaBN,  // replace with batch statistics
    BN,     // mix batch statistics with the source prior
  };

  explicit NormStatAdapter(ModelParams pretrained, Mode mode = Mode::AdaBN,
                           double prior_weight = 0.0,
                           LatencyModel latency = LatencyModel::constant(1.0))
      : Adapter("norm_stat", std::move(pretrained), std::move(latency)),
        mode_(mode),
        prior_weight_(prior_weight) {
    if (!(prior_weight >= 0.0 && prior_weight <= 1.0))
      throw InvalidArgument("norm_stat: prior weight must be in [0, 1]");
  }

  Mode mode() const noexcept { return mode_; }
  double prior_weight() const noexcept { return prior_weight_; }

  std::unique_ptr<Adapter> clone() const override {
    return std::make_unique<NormStatAdapter>(*this);
  }

 protected:
  AdaptOutcome do_adapt(const Batch& batch) override {
    AdaptOutcome out;
    out.x_hat = batch.features;
    out.theta_hat = params();
    const ModelParams& src = pretrained();
    if (batch.size() < 2) {
      out.theta_hat.mu = src.mu;
      out.theta_hat.var = src.var;
      out.degraded = true;
    } else {
      const Vector mean = batch.features.colwise().mean().transpose();
      const Vector var =
          (batch.features.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
      const double w = mode_ == Mode::AdaBN ? 0.0 : prior_weight_;
      out.theta_hat.mu = w * src.mu + (1.0 - w) * mean;
      out.theta_hat.var = floor_variance(w * src.var + (1.0 - w) * var);
    }
    out.y_hat = streamgate::predict(out.theta_hat, out.x_hat).labels;
    return out;
  }

 private:
  Mode mode_;
  double prior_weight_;
};

namespace detail {

inline ModelParams descend(const ModelParams& p, const AffineGradient& g, double lr,
                           std::int64_t t, const std::string& who) {
  if (!g.gamma.allFinite() || !g.beta.allFinite())
    throw NumericError(who + ": non-finite gradient at batch " + std::to_string(t));
  ModelParams next = p;
  next.gamma -= lr * g.gamma;
  next.beta -= lr * g.beta;
  return next;
}

// Folds the batch moments into the running statistics: (1 - m) * running + m * batch.
// A single-sample batch has no variance estimate and leaves them as they are.
inline ModelParams with_running_statistics(const ModelParams& p, const Features& x, double m) {
  if (x.rows() < 2 || m == 0.0) return p;
  ModelParams out = p;
  const Vector mean = x.colwise().mean().transpose();
  const Vector var = (x.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  out.mu = (1.0 - m) * p.mu + m * mean;
  out.var = floor_variance((1.0 - m) * p.var + m * var);
  return out;
}

inline void check_learning_rate(double lr, const char* who) {
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw InvalidArgument(std::string(who) + ": learning rate must be > 0");
}

inline void check_momentum(double m, const char* who) {
  if (!(m >= 0.0 && m <= 1.0))
    throw InvalidArgument(std::string(who) + ": statistics momentum must be in [0, 1]");
}

}  // namespace detail

inline constexpr double kDefaultStatsMomentum = 0.1;

/// One gradient step on (gamma, beta) minimizing mean prediction entropy.
/// The normalization statistics are running estimates: each adapted batch is
/// folded in with `stats_momentum` before the step (0 freezes them).
class EntropyMinAdapter final : public Adapter {
 public:
  explicit EntropyMinAdapter(ModelParams pretrained, double learning_rate = 1e-3,
                             LatencyModel latency = LatencyModel::constant(3.0),
                             double stats_momentum = kDefaultStatsMomentum)
      : Adapter("entropy_min", std::move(pretrained), std::move(latency)),
        lr_(learning_rate),
        momentum_(stats_momentum) {
    detail::check_learning_rate(lr_, "entropy_min");
    detail::check_momentum(momentum_, "entropy_min");
  }

  double learning_rate() const noexcept { return lr_; }
  double stats_momentum() const noexcept { return momentum_; }
  std::unique_ptr<Adapter> clone() const override {
    return std::make_unique<EntropyMinAdapter>(*this);
  }

 protected:
  AdaptOutcome do_adapt(const Batch& batch) override {
    AdaptOutcome out;
    out.x_hat = batch.features;
    const ModelParams start = detail::with_running_statistics(params(), batch.features, momentum_);
    const auto g = entropy_gradient(start, batch.features);
    out.theta_hat = detail::descend(start, g, lr_, batch.t, name());
    out.y_hat = streamgate::predict(out.theta_hat, out.x_hat).labels;
    return out;
  }

 private:
  double lr_;
  double momentum_;
};

/// One gradient step on (gamma, beta) towards the model's own argmax labels,
/// with running statistics as in EntropyMinAdapter. Pseudo-labels come from
/// the state before the step.
class PseudoLabelAdapter final : public Adapter {
 public:
  explicit PseudoLabelAdapter(ModelParams pretrained, double learning_rate = 1e-3,
                              LatencyModel latency = LatencyModel::constant(3.0),
                              double stats_momentum = kDefaultStatsMomentum)
      : Adapter("pseudo_label", std::move(pretrained), std::move(latency)),
        lr_(learning_rate),
        momentum_(stats_momentum) {
    detail::check_learning_rate(lr_, "pseudo_label");
    detail::check_momentum(momentum_, "pseudo_label");
  }

  std::unique_ptr<Adapter> clone() const override {
    return std::make_unique<PseudoLabelAdapter>(*this);
  }

 protected:
  AdaptOutcome do_adapt(const Batch& batch) override {
    AdaptOutcome out;
    out.x_hat = batch.features;
    const Labels pseudo = streamgate::predict(params(), batch.features).labels;
    const ModelParams start = detail::with_running_statistics(params(), batch.features, momentum_);
    const auto g = pseudo_label_gradient(start, batch.features, pseudo);
    out.theta_hat = detail::descend(start, g, lr_, batch.t, name());
    out.y_hat = streamgate::predict(out.theta_hat, out.x_hat).labels;
    return out;
  }

 private:
  double lr_;
  double momentum_;
};

/// Entropy minimization on the samples whose forward-pass entropy is at most
/// the threshold. When nothing is admitted the state is left untouched and
/// the step costs a forward pass only, so the adaptation speed depends on
/// the input.
class RejectionEntropyAdapter final : public Adapter {
 public:
  RejectionEntropyAdapter(ModelParams pretrained, double learning_rate,
                          std::optional<double> entropy_threshold = std::nullopt,
                          LatencyModel update_latency = LatencyModel::constant(3.0),
                          LatencyModel forward_latency = LatencyModel::constant(1.0),
                          double stats_momentum = kDefaultStatsMomentum)
      : Adapter("rejection_entropy", std::move(pretrained), std::move(update_latency)),
        lr_(learning_rate),
        momentum_(stats_momentum),
        forward_latency_(std::move(forward_latency)) {
    detail::check_learning_rate(lr_, "rejection_entropy");
    detail::check_momentum(momentum_, "rejection_entropy");
    threshold_ = entropy_threshold.value_or(0.4 * std::log(double(this->pretrained().num_classes())));
    if (!(threshold_ > 0.0)) throw InvalidArgument("rejection_entropy: threshold must be > 0");
  }

  double threshold() const noexcept { return threshold_; }
  LatencyModel& forward_latency() noexcept { return forward_latency_; }

  /// Rows admitted to the update: entropy under the current state <= threshold.
  std::vector<bool> admitted(const Features& x) const {
    const Vector h = sample_entropies(params(), x);
    std::vector<bool> mask(static_cast<std::size_t>(h.size()));
    for (Eigen::Index i = 0; i < h.size(); ++i) mask[static_cast<std::size_t>(i)] = h(i) <= threshold_;
    return mask;
  }

  std::unique_ptr<Adapter> clone() const override {
    return std::make_unique<RejectionEntropyAdapter>(*this);
  }

 protected:
  AdaptOutcome do_adapt(const Batch& batch) override {
    const auto mask = admitted(batch.features);
    bool any = false;
    for (bool m : mask) any = any || m;
    if (!any) return unchanged(batch);
    AdaptOutcome out;
    out.x_hat = batch.features;
    const ModelParams start = detail::with_running_statistics(params(), batch.features, momentum_);
    const auto g = entropy_gradient(start, batch.features, mask);
    out.theta_hat = detail::descend(start, g, lr_, batch.t, name());
    out.y_hat = streamgate::predict(out.theta_hat, out.x_hat).labels;
    return out;
  }

  double draw_cost(const AdaptOutcome& out, const Batch& batch) override {
    return out.updated ? latency().draw(batch.size()) : forward_latency_.draw(batch.size());
  }

  void reset_aux() override { forward_latency_.reset(); }

 private:
  double lr_;
  double momentum_;
  double threshold_ = 0.0;
  LatencyModel forward_latency_;
};

/// Maps each test batch back onto the source feature statistics by moment
/// matching; parameters are left untouched.
class InputRestoreAdapter final : public Adapter {
 public:
  explicit InputRestoreAdapter(ModelParams pretrained,
                               LatencyModel latency = LatencyModel::constant(810.0))
      : Adapter("input_restore", std::move(pretrained), std::move(latency)) {}

  /// (x - batch_mean) / batch_sd * source_sd + source_mean, per feature.
  /// A single-sample batch has no spread estimate and uses the source sd.
  Features restore(const Features& x) const {
    const ModelParams& src = pretrained();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::RowVectorXd src_sd = src.var.cwiseSqrt().transpose();
    Eigen::RowVectorXd sd = src_sd;
    if (x.rows() >= 2) {
      sd = (x.rowwise() - mean).array().square().colwise().mean().sqrt().matrix();
      sd = sd.cwiseMax(std::sqrt(kVarianceFloor));
    }
    const Eigen::RowVectorXd gain = src_sd.array() / sd.array();
    return ((x.rowwise() - mean).array().rowwise() * gain.array()).rowwise() +
           src.mu.transpose().array();
  }

  std::unique_ptr<Adapter> clone() const override {
    return std::make_unique<InputRestoreAdapter>(*this);
  }

 protected:
  AdaptOutcome do_adapt(const Batch& batch) override {
    AdaptOutcome out;
    out.x_hat = restore(batch.features);
    out.theta_hat = params();
    out.y_hat = streamgate::predict(out.theta_hat, out.x_hat).labels;
    out.degraded = batch.size() < 2;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Registry

struct AdapterSettings {
  double learning_rate = 1e-3;
  std::optional<double> entropy_threshold;
  NormStatAdapter::Mode norm_mode = NormStatAdapter::Mode::AdaBN;
  double prior_weight = 0.0;
  double stats_momentum = kDefaultStatsMomentum;
  std::optional<LatencyModel> latency;          // overrides the method default
  std::optional<LatencyModel> forward_latency;  // rejection_entropy, no-update steps
};

inline const std::vector<std::string>& adapter_names() {
  static const std::vector<std::string> names{"source",       "norm_stat",         "entropy_min",
                                              "pseudo_label", "rejection_entropy", "input_restore"};
  return names;
}

inline bool is_adapter_name(const std::string& name) {
  for (const auto& n : adapter_names())
    if (n == name) return true;
  return false;
}

inline std::unique_ptr<Adapter> make_adapter(const std::string& name, const ModelParams& pretrained,
                                             const AdapterSettings& s = {}) {
  auto lat = [&](double fallback) { return s.latency.value_or(LatencyModel::constant(fallback)); };
  if (name == "source") return std::make_unique<SourceAdapter>(pretrained, lat(1.0));
  if (name == "norm_stat")
    return std::make_unique<NormStatAdapter>(pretrained, s.norm_mode, s.prior_weight, lat(1.0));
  if (name == "entropy_min")
    return std::make_unique<EntropyMinAdapter>(pretrained, s.learning_rate, lat(3.0),
                                               s.stats_momentum);
  if (name == "pseudo_label")
    return std::make_unique<PseudoLabelAdapter>(pretrained, s.learning_rate, lat(3.0),
                                                s.stats_momentum);
  if (name == "rejection_entropy")
    return std::make_unique<RejectionEntropyAdapter>(
        pretrained, s.learning_rate, s.entropy_threshold, lat(3.0),
        s.forward_latency.value_or(LatencyModel::constant(1.0)), s.stats_momentum);
  if (name == "input_restore") return std::make_unique<InputRestoreAdapter>(pretrained, lat(810.0));
  throw InvalidArgument("unknown adapter '" + name + "'");
}

}  // namespace streamgate
