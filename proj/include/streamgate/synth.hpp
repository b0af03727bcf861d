#pragma once

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "streamgate/batch.hpp"
#include "streamgate/error.hpp"
#include "streamgate/model.hpp"
#include "streamgate/random.hpp"

namespace streamgate {

/// Gaussian-mixture source distribution.
struct SourceSpec {
  int num_classes = 10;
  int dim = 32;
  // Scale of class-mean placement. Means are drawn per coordinate with std
  // class_separation / sqrt(dim), so the typical mean norm is
  // class_separation whatever the dimension.
  double class_separation = 3.0;
  int samples_per_class = 500;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) throw InvalidArgument("SourceSpec: num_classes must be >= 2");
    if (dim < 1) throw InvalidArgument("SourceSpec: dim must be >= 1");
    if (!(class_separation > 0.0)) throw InvalidArgument("SourceSpec: class_separation must be > 0");
    if (samples_per_class < 1) throw InvalidArgument("SourceSpec: samples_per_class must be >= 1");
  }
};

struct Dataset {
  Features features;
  Labels labels;
  std::vector<int> domain_ids;  // empty means all zero

  Eigen::Index size() const { return features.rows(); }
};

namespace detail {

inline Features gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Features m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

}  // namespace detail

/// Class means of the source mixture; a pure function of the spec.
inline Eigen::MatrixXd class_means(const SourceSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(mix_seed({spec.seed, 0x6d65616eULL}));
  return detail::gaussian_matrix(spec.num_classes, spec.dim, rng,
                                 spec.class_separation / std::sqrt(double(spec.dim)));
}

/// Draws `n` samples with uniformly random labels from the source mixture.
inline Dataset sample_source(const SourceSpec& spec, const Eigen::MatrixXd& means, Eigen::Index n,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> label(0, spec.num_classes - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset out;
  out.features.resize(n, spec.dim);
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = label(rng);
    out.labels[static_cast<std::size_t>(i)] = y;
    for (int j = 0; j < spec.dim; ++j) out.features(i, j) = means(y, j) + noise(rng);
  }
  return out;
}

/// Training split: samples_per_class samples of every class, class-major.
inline Dataset make_source_dataset(const SourceSpec& spec) {
  const Eigen::MatrixXd means = class_means(spec);
  std::mt19937_64 rng(mix_seed({spec.seed, 0x747261696eULL}));
  std::normal_distribution<double> noise(0.0, 1.0);
  const Eigen::Index n = Eigen::Index(spec.num_classes) * spec.samples_per_class;
  Dataset out;
  out.features.resize(n, spec.dim);
  out.labels.resize(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int y = 0; y < spec.num_classes; ++y) {
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      out.labels[static_cast<std::size_t>(row)] = y;
      for (int j = 0; j < spec.dim; ++j) out.features(row, j) = means(y, j) + noise(rng);
    }
  }
  return out;
}

/// Error of the nearest-class-mean rule using the true means. Serves as the
/// reference accuracy for the pretrained head.
inline double nearest_mean_error(const Dataset& data, const Eigen::MatrixXd& means) {
  std::int64_t wrong = 0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    Eigen::Index best = 0;
    double best_d = (means.row(0) - data.features.row(i)).squaredNorm();
    for (Eigen::Index k = 1; k < means.rows(); ++k) {
      const double d = (means.row(k) - data.features.row(i)).squaredNorm();
      if (d < best_d) best_d = d, best = k;
    }
    wrong += best != data.labels[static_cast<std::size_t>(i)];
  }
  return double(wrong) / double(data.size());
}

struct PretrainConfig {
  double learning_rate = 0.5;
  int iterations = 300;
  std::uint64_t seed = 0;
  double init_scale = 0.0;  // std of the random initial head; 0 starts from W = 0
};

/// Fits the normalization statistics to the data and the linear head by
/// full-batch gradient descent on the multinomial logistic loss.
inline ModelParams pretrain_source_model(const Dataset& data, int num_classes,
                                         const PretrainConfig& hyper = {}) {
  if (data.size() == 0) throw InvalidArgument("pretrain: empty dataset");
  if (!(hyper.learning_rate > 0.0) || hyper.iterations < 0)
    throw InvalidArgument("pretrain: learning rate must be > 0 and iterations >= 0");
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.features.cols();

  ModelParams p = ModelParams::identity(d, num_classes);
  p.mu = data.features.colwise().mean().transpose();
  p.var = floor_variance(
      (data.features.rowwise() - p.mu.transpose()).array().square().colwise().mean().transpose());
  if (hyper.init_scale > 0.0) {
    std::mt19937_64 rng(hyper.seed);
    p.W = detail::gaussian_matrix(num_classes, d, rng, hyper.init_scale);
  }

  const Features z = standardize(p, data.features);
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = data.labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= num_classes) throw InvalidArgument("pretrain: label out of range");
    onehot(i, y) = 1.0;
  }

  for (int it = 0; it < hyper.iterations; ++it) {
    Eigen::MatrixXd logits = z * p.W.transpose();
    logits.rowwise() += p.b.transpose();
    const Eigen::VectorXd m = logits.rowwise().maxCoeff();
    const Eigen::VectorXd lse =
        m.array() + (logits.colwise() - m).array().exp().rowwise().sum().log();
    const double loss = (lse.sum() - (onehot.array() * logits.array()).sum()) / double(n);
    if (!std::isfinite(loss)) throw TrainingError("non-finite training loss", it);
    const Eigen::MatrixXd probs = softmax_rows(logits);
    const Eigen::MatrixXd g = (probs - onehot) / double(n);  // dL/dlogits
    p.W -= hyper.learning_rate * (g.transpose() * z);
    p.b -= hyper.learning_rate * g.colwise().sum().transpose();
  }
  if (!p.all_finite()) throw TrainingError("non-finite parameters", hyper.iterations);
  return p;
}

// ---------------------------------------------------------------------------
// Corruptions

enum class CorruptionKind { Clean, GaussianNoise, MeanShift, FeatureScale, Rotation, FeatureMask };

inline constexpr std::string_view to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::Clean: return "clean";
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::MeanShift: return "mean_shift";
    case CorruptionKind::FeatureScale: return "feature_scale";
    case CorruptionKind::Rotation: return "rotation";
    case CorruptionKind::FeatureMask: return "feature_mask";
  }
  return "?";
}

inline CorruptionKind parse_corruption_kind(std::string_view s) {
  for (auto k : {CorruptionKind::Clean, CorruptionKind::GaussianNoise, CorruptionKind::MeanShift,
                 CorruptionKind::FeatureScale, CorruptionKind::Rotation, CorruptionKind::FeatureMask})
    if (to_string(k) == s) return k;
  throw InvalidArgument("unknown corruption kind '" + std::string(s) + "'");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::Clean;
  int severity = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (severity < 1 || severity > 5) throw InvalidArgument("corruption severity must be in 1..5");
  }

  // Category tag used for grouped averages.
  std::string category() const { return std::string(to_string(kind)); }
  std::string label() const {
    return std::string(to_string(kind)) + ":" + std::to_string(severity) + ":" +
           std::to_string(seed);
  }
};

/// Per-unit-severity strengths. Defaults are tuned for class_separation 3.
struct CorruptionStrengths {
  double noise_sd = 0.4;
  double shift = 1.5;
  double scale_base = 1.3;
  double mask_fraction = 0.06;
  double rotation_fraction = 0.2;
  double rotation_angle = 1.5707963267948966;  // largest principal angle at fraction 1

  static CorruptionStrengths for_separation(double class_separation) {
    CorruptionStrengths s;
    s.shift = 0.5 * class_separation;
    return s;
  }
};

/// Orthogonal matrix exp(f * A) for a seeded skew-symmetric A whose largest
/// principal angle is `rotation_angle`; f = rotation_fraction * severity.
inline Eigen::MatrixXd corruption_rotation(Eigen::Index dim, const CorruptionSpec& spec,
                                           const CorruptionStrengths& s = {}) {
  std::mt19937_64 rng(mix_seed({spec.seed, 0x726f74ULL}));
  const Eigen::MatrixXd g = detail::gaussian_matrix(dim, dim, rng);
  Eigen::MatrixXd a = g - g.transpose();
  if (dim > 1) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const double top = svd.singularValues()(0);
    if (top > 0.0) a *= s.rotation_angle / top;
  }
  const double f = s.rotation_fraction * spec.severity;
  return (f * a).exp();
}

/// Label-preserving feature corruption; deterministic given spec.seed.
inline Features apply_corruption(const Features& x, const CorruptionSpec& spec,
                                 const CorruptionStrengths& s = {}) {
  spec.validate();
  const Eigen::Index d = x.cols();
  const double sev = spec.severity;
  switch (spec.kind) {
    case CorruptionKind::Clean:
      return x;
    case CorruptionKind::GaussianNoise: {
      const double sd = s.noise_sd * sev;
      if (sd == 0.0) return x;
      std::mt19937_64 rng(mix_seed({spec.seed, 0x6e6f697365ULL}));
      return x + detail::gaussian_matrix(x.rows(), d, rng, sd);
    }
    case CorruptionKind::MeanShift: {
      std::mt19937_64 rng(mix_seed({spec.seed, 0x7368696674ULL}));
      Vector u = detail::gaussian_matrix(d, 1, rng);
      u.normalize();
      return x.rowwise() + (s.shift * sev * u).transpose();
    }
    case CorruptionKind::FeatureScale: {
      std::mt19937_64 rng(mix_seed({spec.seed, 0x7363616c65ULL}));
      std::bernoulli_distribution up(0.5);
      Eigen::RowVectorXd factor(d);
      for (Eigen::Index j = 0; j < d; ++j)
        factor(j) = std::pow(s.scale_base, up(rng) ? sev : -sev);
      return x.array().rowwise() * factor.array();
    }
    case CorruptionKind::Rotation:
      return x * corruption_rotation(d, spec, s).transpose();
    case CorruptionKind::FeatureMask: {
      std::mt19937_64 rng(mix_seed({spec.seed, 0x6d61736bULL}));
      std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::shuffle(order.begin(), order.end(), rng);
      const auto masked = static_cast<std::size_t>(
          std::min<double>(double(d), std::round(s.mask_fraction * sev * double(d))));
      Features out = x;
      for (std::size_t m = 0; m < masked; ++m) out.col(order[m]).setZero();
      return out;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Scenarios

enum class ScenarioMode { Episodic, Continual };

struct ScenarioSpec {
  ScenarioMode mode = ScenarioMode::Episodic;
  std::vector<CorruptionSpec> domain_order;
  int batch_size = 64;
  bool append_clean = false;  // continual only: finish on the clean source split

  bool reset_between_domains() const { return mode == ScenarioMode::Episodic; }
};

/// Fifteen severity-`severity` domains: every corruption kind with three
/// different seeds.
inline std::vector<CorruptionSpec> default_domains(int severity = 5, std::uint64_t seed = 0) {
  std::vector<CorruptionSpec> out;
  for (std::uint64_t rep = 0; rep < 3; ++rep)
    for (auto k : {CorruptionKind::GaussianNoise, CorruptionKind::MeanShift,
                   CorruptionKind::FeatureScale, CorruptionKind::Rotation,
                   CorruptionKind::FeatureMask})
      out.push_back({k, severity, mix_seed({seed, rep, std::uint64_t(k)})});
  return out;
}

/// Samples of one domain. The draw depends on the domain's own spec and the
/// data seed, not on its position in the order.
inline Dataset make_domain_samples(const SourceSpec& source, const Eigen::MatrixXd& means,
                                   const CorruptionSpec& domain, Eigen::Index n,
                                   std::uint64_t data_seed, const CorruptionStrengths& s) {
  const std::uint64_t seed =
      mix_seed({data_seed, std::uint64_t(domain.kind), std::uint64_t(domain.severity), domain.seed});
  Dataset d = sample_source(source, means, n, seed);
  if (domain.kind != CorruptionKind::Clean) d.features = apply_corruption(d.features, domain, s);
  return d;
}

/// Builds the batch streams for a scenario. Episodic yields one stream per
/// domain, each reset; continual yields a single stream with time indices
/// running across domain boundaries. A trailing partial batch is dropped.
inline std::vector<Stream> compose_stream(const ScenarioSpec& scenario, const SourceSpec& source,
                                          Eigen::Index samples_per_domain,
                                          std::uint64_t data_seed,
                                          const CorruptionStrengths& strengths) {
  if (scenario.domain_order.empty()) throw InvalidArgument("compose_stream: empty domain list");
  if (scenario.batch_size < 1) throw InvalidArgument("compose_stream: batch_size must be >= 1");
  if (samples_per_domain < scenario.batch_size)
    throw InvalidArgument("compose_stream: fewer samples per domain than one batch");
  for (const auto& d : scenario.domain_order) d.validate();

  const Eigen::MatrixXd means = class_means(source);
  std::vector<CorruptionSpec> order = scenario.domain_order;
  if (scenario.mode == ScenarioMode::Continual && scenario.append_clean)
    order.push_back({CorruptionKind::Clean, 1, 0});

  const Eigen::Index b = scenario.batch_size;
  const Eigen::Index per_domain = samples_per_domain / b;
  std::vector<Stream> streams;
  std::int64_t t = 0;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const Dataset data =
        make_domain_samples(source, means, order[pos], samples_per_domain, data_seed, strengths);
    if (scenario.mode == ScenarioMode::Episodic || streams.empty()) {
      streams.push_back(Stream{{}, true});
      if (scenario.mode == ScenarioMode::Episodic) t = 0;
    }
    auto& batches = streams.back().batches;
    for (Eigen::Index k = 0; k < per_domain; ++k) {
      Batch batch;
      batch.features = data.features.middleRows(k * b, b);
      batch.labels.assign(data.labels.begin() + k * b, data.labels.begin() + (k + 1) * b);
      batch.domain_id = static_cast<int>(pos);
      batch.t = t++;
      batches.push_back(std::move(batch));
    }
  }
  return streams;
}

inline std::vector<Stream> compose_stream(const ScenarioSpec& scenario, const SourceSpec& source,
                                          Eigen::Index samples_per_domain,
                                          std::uint64_t data_seed) {
  return compose_stream(scenario, source, samples_per_domain, data_seed,
                        CorruptionStrengths::for_separation(source.class_separation));
}

// ---------------------------------------------------------------------------
// CSV dump / load: feature_0..feature_{d-1},label,domain_id

inline void write_dataset_csv(std::ostream& os, const Dataset& data) {
  const Eigen::Index d = data.features.cols();
  for (Eigen::Index j = 0; j < d; ++j) os << "feature_" << j << ',';
  os << "label,domain_id\n";
  char buf[32];
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      auto r = std::to_chars(buf, buf + sizeof buf, data.features(i, j));
      os.write(buf, r.ptr - buf);
      os << ',';
    }
    const auto row = static_cast<std::size_t>(i);
    os << data.labels[row] << ',' << (data.domain_ids.empty() ? 0 : data.domain_ids[row]) << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("missing header", 1);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "domain_id")
    throw ParseError("header must end with label,domain_id", 1);
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != "feature_" + std::to_string(j))
      throw ParseError("expected column feature_" + std::to_string(j), 1);

  std::vector<std::vector<double>> rows;
  Dataset out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != d + 2) throw ParseError("wrong number of columns", lineno);
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) {
      auto r = std::from_chars(cells[j].data(), cells[j].data() + cells[j].size(), row[j]);
      if (r.ec != std::errc{} || r.ptr != cells[j].data() + cells[j].size())
        throw ParseError("bad number in column " + header[j], lineno);
    }
    int label = 0, domain = 0;
    auto r1 = std::from_chars(cells[d].data(), cells[d].data() + cells[d].size(), label);
    auto r2 = std::from_chars(cells[d + 1].data(), cells[d + 1].data() + cells[d + 1].size(), domain);
    if (r1.ec != std::errc{} || r2.ec != std::errc{}) throw ParseError("bad label/domain", lineno);
    rows.push_back(std::move(row));
    out.labels.push_back(label);
    out.domain_ids.push_back(domain);
  }
  out.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

}  // namespace streamgate
