#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamgate/adapters.hpp"
#include "streamgate/protocol.hpp"
#include "streamgate/random.hpp"
#include "streamgate/synth.hpp"

namespace streamgate {

/// Everything that defines the synthetic benchmark for one seed.
struct BenchmarkSpec {
  SourceSpec source;
  PretrainConfig pretrain;
  ScenarioSpec scenario{ScenarioMode::Episodic, default_domains(5), 64, false};
  Eigen::Index samples_per_domain = 5000;
};

struct Benchmark {
  ModelParams pretrained;
  std::vector<Stream> streams;
  std::vector<CorruptionSpec> domains;  // indexed by domain_id
  int num_classes = 0;
};

/// Pretrains the source model and composes the test streams. The run seed
/// drives the source mixture, the test draws and every corruption.
inline Benchmark build_benchmark(const BenchmarkSpec& spec, std::uint64_t seed) {
  SourceSpec source = spec.source;
  source.seed = mix_seed({seed, 0x736f75726365ULL});
  PretrainConfig pre = spec.pretrain;
  pre.seed = mix_seed({seed, 0x707265ULL});

  ScenarioSpec scenario = spec.scenario;
  for (auto& d : scenario.domain_order) d.seed = mix_seed({d.seed, seed});

  Benchmark b;
  b.num_classes = source.num_classes;
  b.pretrained = pretrain_source_model(make_source_dataset(source), source.num_classes, pre);
  b.streams = compose_stream(scenario, source, spec.samples_per_domain,
                             mix_seed({seed, 0x64617461ULL}),
                             CorruptionStrengths::for_separation(source.class_separation));
  b.domains = scenario.domain_order;
  if (scenario.mode == ScenarioMode::Continual && scenario.append_clean)
    b.domains.push_back({CorruptionKind::Clean, 1, 0});
  return b;
}

inline std::string scenario_name(const ScenarioSpec& s) {
  return s.mode == ScenarioMode::Episodic ? "episodic" : "continual";
}

/// Runs one adapter over a prepared benchmark and tags domains with their
/// corruption category.
inline RunReport evaluate(const Benchmark& bench, Adapter& adapter, const ProtocolConfig& cfg) {
  RunReport r = run(bench.streams, adapter, cfg, bench.num_classes);
  for (auto& d : r.per_domain)
    if (d.domain_id >= 0 && static_cast<std::size_t>(d.domain_id) < bench.domains.size())
      d.category = bench.domains[static_cast<std::size_t>(d.domain_id)].category();
  return r;
}

}  // namespace streamgate
