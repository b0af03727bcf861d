#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "streamgate/metrics.hpp"
#include "streamgate/synth.hpp"

using namespace streamgate;

namespace {

double source_error(const ModelParams& p, const Dataset& d) {
  return error_rate(predict(p, d.features).labels, d.labels);
}

ScenarioSpec three_domains(ScenarioMode mode) {
  ScenarioSpec s;
  s.mode = mode;
  s.batch_size = 64;
  s.domain_order = {{CorruptionKind::GaussianNoise, 3, 1},
                    {CorruptionKind::MeanShift, 3, 2},
                    {CorruptionKind::Rotation, 3, 3}};
  return s;
}

}  // namespace

TEST(SourceDataset, WellSeparatedOneDimensional) {
  SourceSpec spec;
  spec.num_classes = 2;
  spec.dim = 1;
  spec.class_separation = 10.0;
  spec.samples_per_class = 100;
  spec.seed = 1;
  const Dataset d = make_source_dataset(spec);
  EXPECT_LT(nearest_mean_error(d, class_means(spec)), 0.01);
}

TEST(SourceDataset, Deterministic) {
  SourceSpec spec;
  spec.seed = 42;
  const Dataset a = make_source_dataset(spec);
  const Dataset b = make_source_dataset(spec);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  spec.seed = 43;
  EXPECT_NE(make_source_dataset(spec).features, a.features);
}

TEST(SourceDataset, DefaultSpecNearestMeanErrorBelowFifteenPercent) {
  // Monte-Carlo estimate over independent draws of the class means.
  double total = 0.0;
  const int draws = 10;
  for (int s = 0; s < draws; ++s) {
    SourceSpec spec;
    spec.seed = static_cast<std::uint64_t>(s);
    total += nearest_mean_error(make_source_dataset(spec), class_means(spec));
  }
  EXPECT_LT(total / draws, 0.15);
}

TEST(SourceDataset, RejectsInvalidSpec) {
  SourceSpec spec;
  spec.num_classes = 1;
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = {};
  spec.class_separation = 0.0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(Pretrain, SeparableTwoClassReachesZeroTrainingError) {
  SourceSpec spec;
  spec.num_classes = 2;
  spec.dim = 2;
  spec.class_separation = 20.0;
  spec.samples_per_class = 100;
  spec.seed = 3;
  const Dataset d = make_source_dataset(spec);
  ASSERT_EQ(nearest_mean_error(d, class_means(spec)), 0.0);
  EXPECT_EQ(source_error(pretrain_source_model(d, 2), d), 0.0);
}

TEST(Pretrain, DefaultSpecErrorAndShiftPenalty) {
  double clean = 0.0, noisy = 0.0;
  const int draws = 5;
  for (int s = 0; s < draws; ++s) {
    SourceSpec spec;
    spec.seed = static_cast<std::uint64_t>(s);
    const Dataset train = make_source_dataset(spec);
    const ModelParams p = pretrain_source_model(train, spec.num_classes);
    // Never much worse than the nearest-mean rule on the training data.
    EXPECT_LE(source_error(p, train), nearest_mean_error(train, class_means(spec)) + 0.02);
    Dataset test = sample_source(spec, class_means(spec), 5000, 1000 + s);
    clean += source_error(p, test);
    test.features = apply_corruption(test.features, {CorruptionKind::GaussianNoise, 5, 7},
                                     CorruptionStrengths::for_separation(spec.class_separation));
    noisy += source_error(p, test);
  }
  EXPECT_LT(clean / draws, 0.15);
  EXPECT_GT(noisy / draws, 0.30);
}

TEST(Pretrain, ZeroIterationsIsChance) {
  SourceSpec spec;
  PretrainConfig hyper;
  hyper.iterations = 0;
  const Dataset d = make_source_dataset(spec);
  const ModelParams p = pretrain_source_model(d, spec.num_classes, hyper);
  EXPECT_NEAR(source_error(p, d), 1.0 - 1.0 / spec.num_classes, 1e-12);
  EXPECT_EQ(p.gamma, Vector::Ones(spec.dim));
  EXPECT_EQ(p.beta, Vector::Zero(spec.dim));
}

TEST(Pretrain, DivergenceReportsIteration) {
  SourceSpec spec;
  spec.class_separation = 50.0;
  PretrainConfig hyper;
  hyper.learning_rate = 1e307;
  hyper.iterations = 50;
  try {
    pretrain_source_model(make_source_dataset(spec), spec.num_classes, hyper);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.iteration(), 0);
  }
}

TEST(Corruption, ZeroStrengthNoiseIsIdentity) {
  CorruptionStrengths s;
  s.noise_sd = 0.0;
  const Features x = Features::Random(20, 5);
  EXPECT_EQ(apply_corruption(x, {CorruptionKind::GaussianNoise, 1, 9}, s), x);
}

TEST(Corruption, RotationIsInvertible) {
  for (int sev = 1; sev <= 5; ++sev) {
    const CorruptionSpec spec{CorruptionKind::Rotation, sev, 11};
    const Eigen::MatrixXd q = corruption_rotation(16, spec);
    const Features x = Features::Random(30, 16);
    const Features y = apply_corruption(x, spec);
    EXPECT_LT((q.transpose() * q - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff(), 1e-10);
    const double err = (y * q - x).cwiseAbs().maxCoeff();
    EXPECT_LT(err, 1e-10) << "severity " << sev;
  }
}

TEST(Corruption, LabelsAndShapesPreserved) {
  const Features x = Features::Random(12, 6);
  for (auto k : {CorruptionKind::GaussianNoise, CorruptionKind::MeanShift, CorruptionKind::FeatureScale,
                 CorruptionKind::Rotation, CorruptionKind::FeatureMask}) {
    const Features y = apply_corruption(x, {k, 5, 1});
    EXPECT_EQ(y.rows(), x.rows());
    EXPECT_EQ(y.cols(), x.cols());
    EXPECT_EQ(apply_corruption(x, {k, 5, 1}), y) << to_string(k);
  }
}

TEST(Corruption, NoiseErrorNonDecreasingInSeverity) {
  std::vector<double> err(5, 0.0);
  for (int s = 0; s < 5; ++s) {
    SourceSpec spec;
    spec.seed = static_cast<std::uint64_t>(s);
    const ModelParams p = pretrain_source_model(make_source_dataset(spec), spec.num_classes);
    const Dataset test = sample_source(spec, class_means(spec), 5000, 500 + s);
    for (int sev = 1; sev <= 5; ++sev) {
      Features x = apply_corruption(test.features, {CorruptionKind::GaussianNoise, sev, 3});
      err[sev - 1] += error_rate(predict(p, x).labels, test.labels) / 5.0;
    }
  }
  for (int sev = 1; sev < 5; ++sev) EXPECT_LE(err[sev - 1], err[sev]) << "severity " << sev + 1;
}

TEST(Corruption, SeverityOutOfRangeRejected) {
  EXPECT_THROW((CorruptionSpec{CorruptionKind::MeanShift, 0, 0}.validate()), InvalidArgument);
  EXPECT_THROW((CorruptionSpec{CorruptionKind::MeanShift, 6, 0}.validate()), InvalidArgument);
}

TEST(Corruption, KindNamesRoundTrip) {
  for (auto k : {CorruptionKind::Clean, CorruptionKind::GaussianNoise, CorruptionKind::MeanShift,
                 CorruptionKind::FeatureScale, CorruptionKind::Rotation, CorruptionKind::FeatureMask})
    EXPECT_EQ(parse_corruption_kind(to_string(k)), k);
  EXPECT_THROW(parse_corruption_kind("fog"), InvalidArgument);
}

TEST(ComposeStream, EpisodicArithmetic) {
  const auto streams = compose_stream(three_domains(ScenarioMode::Episodic), SourceSpec{}, 640, 5);
  ASSERT_EQ(streams.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(streams[i].reset_before);
    ASSERT_EQ(streams[i].batches.size(), 10u);
    for (std::size_t t = 0; t < 10; ++t) {
      EXPECT_EQ(streams[i].batches[t].t, static_cast<std::int64_t>(t));
      EXPECT_EQ(streams[i].batches[t].domain_id, static_cast<int>(i));
      EXPECT_EQ(streams[i].batches[t].size(), 64);
    }
  }
}

TEST(ComposeStream, ContinualArithmetic) {
  const auto streams = compose_stream(three_domains(ScenarioMode::Continual), SourceSpec{}, 640, 5);
  ASSERT_EQ(streams.size(), 1u);
  const auto& b = streams[0].batches;
  ASSERT_EQ(b.size(), 30u);
  for (std::size_t t = 0; t < 30; ++t) {
    EXPECT_EQ(b[t].t, static_cast<std::int64_t>(t));
    EXPECT_EQ(b[t].domain_id, static_cast<int>(t / 10));
  }
}

TEST(ComposeStream, ContinualCleanSegmentAppended) {
  ScenarioSpec s = three_domains(ScenarioMode::Continual);
  s.append_clean = true;
  const auto streams = compose_stream(s, SourceSpec{}, 640, 5);
  ASSERT_EQ(streams[0].batches.size(), 40u);
  EXPECT_EQ(streams[0].batches.back().domain_id, 3);
}

TEST(ComposeStream, PartialBatchDropped) {
  const auto streams = compose_stream(three_domains(ScenarioMode::Episodic), SourceSpec{}, 700, 5);
  EXPECT_EQ(streams[0].batches.size(), 10u);
}

TEST(ComposeStream, EmptyDomainListRejected) {
  ScenarioSpec s;
  EXPECT_THROW(compose_stream(s, SourceSpec{}, 640, 0), InvalidArgument);
}

TEST(ComposeStream, PermutedOrderSameMultiset) {
  ScenarioSpec a = three_domains(ScenarioMode::Continual);
  ScenarioSpec b = a;
  std::reverse(b.domain_order.begin(), b.domain_order.end());
  const auto sa = compose_stream(a, SourceSpec{}, 640, 5);
  const auto sb = compose_stream(b, SourceSpec{}, 640, 5);
  auto key = [](const Batch& x) {
    std::ostringstream os;
    os.precision(17);
    os << x.features << '|';
    for (int y : x.labels) os << y << ',';
    return os.str();
  };
  std::vector<std::string> ka, kb;
  for (const auto& x : sa[0].batches) ka.push_back(key(x));
  for (const auto& x : sb[0].batches) kb.push_back(key(x));
  EXPECT_NE(ka, kb);
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  EXPECT_EQ(ka, kb);
}

TEST(DatasetCsv, RoundTrip) {
  SourceSpec spec;
  spec.dim = 3;
  spec.num_classes = 2;
  spec.samples_per_class = 4;
  Dataset d = make_source_dataset(spec);
  d.domain_ids.assign(static_cast<std::size_t>(d.size()), 2);
  std::stringstream ss;
  write_dataset_csv(ss, d);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "feature_0,feature_1,feature_2,label,domain_id");
  ss.seekg(0);
  const Dataset back = read_dataset_csv(ss);
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.domain_ids, d.domain_ids);
}
