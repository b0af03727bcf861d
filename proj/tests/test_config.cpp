#include <gtest/gtest.h>

#include "streamgate/config.hpp"

using namespace streamgate;

namespace {

ExperimentConfig resolve(const std::string& text) {
  return resolve_config(KeyValueConfig::parse_string(text));
}

std::string failing_field(const std::string& text) {
  try {
    resolve(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsWhenEmpty) {
  const ExperimentConfig c = resolve("");
  EXPECT_EQ(c.bench.source.num_classes, 10);
  EXPECT_EQ(c.bench.source.dim, 32);
  EXPECT_EQ(c.bench.scenario.batch_size, 64);
  EXPECT_EQ(c.bench.scenario.domain_order.size(), 15u);
  EXPECT_EQ(c.bench.samples_per_domain, 5000);
  ASSERT_EQ(c.adapters.size(), 1u);
  EXPECT_EQ(c.adapters[0].name, "entropy_min");
  EXPECT_EQ(c.protocols, (std::vector<Protocol>{Protocol::Offline, Protocol::Online}));
  EXPECT_EQ(c.eta_values, (std::vector<double>{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
}

TEST(Config, ParsesDottedKeys) {
  const ExperimentConfig c = resolve(
      "# comment\n"
      "stream.batch_size = 32\n"
      "stream.mode=continual\n"
      "stream.append_clean=true\n"
      "stream.domains=gaussian_noise:3:7, rotation\n"
      "adapter.name=entropy_min,input_restore\n"
      "adapter.learning_rate=0.01\n"
      "adapter.latency.kind=constant\n"
      "adapter.latency.seconds=3.0\n"
      "adapter.input_restore.latency.kind=profile\n"
      "adapter.input_restore.latency.profile=diffusion\n"
      "protocol.mode=online\n"
      "protocol.schedule=fixed_modulo\n"
      "protocol.modulo_k=4\n"
      "protocol.alpha=0.25\n"
      "protocol.fallback_visibility=delayed\n"
      "clock.eta=0.5\n"
      "run.seeds=4,5\n"
      "output.dir=out\n");
  EXPECT_EQ(c.bench.scenario.batch_size, 32);
  EXPECT_EQ(c.bench.scenario.mode, ScenarioMode::Continual);
  EXPECT_TRUE(c.bench.scenario.append_clean);
  ASSERT_EQ(c.bench.scenario.domain_order.size(), 2u);
  EXPECT_EQ(c.bench.scenario.domain_order[0].kind, CorruptionKind::GaussianNoise);
  EXPECT_EQ(c.bench.scenario.domain_order[0].severity, 3);
  EXPECT_EQ(c.bench.scenario.domain_order[0].seed, 7u);
  EXPECT_EQ(c.bench.scenario.domain_order[1].severity, 5);
  ASSERT_EQ(c.adapters.size(), 2u);
  EXPECT_EQ(c.adapters[0].settings.learning_rate, 0.01);
  EXPECT_EQ(LatencyModel(*c.adapters[0].settings.latency).draw(1), 3.0);
  EXPECT_EQ(LatencyModel(*c.adapters[1].settings.latency).draw(1), 810.0);
  EXPECT_EQ(c.protocols, std::vector<Protocol>{Protocol::Online});
  EXPECT_EQ(c.protocol.schedule.kind, SchedulePolicy::Kind::FixedModulo);
  EXPECT_EQ(c.protocol.schedule.k, 4);
  EXPECT_EQ(c.protocol.alpha, 0.25);
  EXPECT_EQ(c.protocol.fallback_visibility, FallbackVisibility::Delayed);
  EXPECT_EQ(c.protocol.clock.effective_interval(), 2.0);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.out_dir, "out");
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(failing_field("adapter.name=tent\n"), "adapter.name");
  EXPECT_EQ(failing_field("stream.batch_size=abc\n"), "stream.batch_size");
  EXPECT_EQ(failing_field("stream.bach_size=64\n"), "stream.bach_size");
  EXPECT_EQ(failing_field("clock.eta=1.5\n"), "clock.eta");
  EXPECT_EQ(failing_field("protocol.alpha=2\n"), "protocol.alpha");
  EXPECT_EQ(failing_field("protocol.mode=sometimes\n"), "protocol.mode");
  EXPECT_EQ(failing_field("sweep.eta_values=0.5,0\n"), "sweep.eta_values");
  EXPECT_EQ(failing_field("stream.domains=fog:5\n"), "stream.domains");
  EXPECT_EQ(failing_field("stream.domains=rotation:9\n"), "stream.domains");
  EXPECT_EQ(failing_field("adapter.latency.kind=gamma\n"), "adapter.latency.kind");
  EXPECT_EQ(failing_field("adapter.pseudo_label.learning_rate=0.1\n"),
            "adapter.pseudo_label.learning_rate");
  EXPECT_EQ(failing_field("stream.append_clean=true\n"), "stream.append_clean");
  EXPECT_EQ(failing_field("run.seeds=\n"), "run.seeds");
  EXPECT_EQ(failing_field("a=1\na=2\n"), "a");
  EXPECT_EQ(failing_field("no equals sign\n"), "line 1");
}
