#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "streamgate/adapters.hpp"
#include "streamgate/error.hpp"
#include "streamgate/experiment.hpp"
#include "streamgate/protocol.hpp"

namespace streamgate {

/// Raw `dotted.key=value` pairs. Blank lines and lines starting with '#' are
/// ignored; whitespace around keys and values is trimmed.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is) {
    KeyValueConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::string_view text = trim(line);
      if (text.empty() || text.front() == '#') continue;
      const auto eq = text.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("line " + std::to_string(lineno), "expected key=value");
      const std::string key(trim(text.substr(0, eq)));
      const std::string value(trim(text.substr(eq + 1)));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
      if (!cfg.values_.emplace(key, value).second) throw ConfigError(key, "duplicate key");
    }
    return cfg;
  }

  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
    return parse(in);
  }

  static KeyValueConfig parse_string(const std::string& text) {
    std::istringstream ss(text);
    return parse(ss);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  template <class T>
  T get_number(const std::string& key, T fallback) {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return to_number<T>(key, it->second);
  }

  bool get_bool(const std::string& key, bool fallback) {
    const std::string v = get(key, fallback ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key, "expected a boolean, got '" + v + "'");
  }

  template <class T>
  std::vector<T> get_list(const std::string& key, std::vector<T> fallback) {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_list<T>(key, it->second);
  }

  std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return split(it->second);
  }

  /// Keys that were present but never read.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  template <class T>
  static T to_number(const std::string& key, std::string_view text) {
    T v{};
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc{} || r.ptr != text.data() + text.size())
      throw ConfigError(key, "expected a number, got '" + std::string(text) + "'");
    return v;
  }

  static std::vector<std::string> split(std::string_view text) {
    std::vector<std::string> out;
    while (!text.empty()) {
      const auto comma = text.find(',');
      const auto item = trim(text.substr(0, comma));
      if (!item.empty()) out.emplace_back(item);
      if (comma == std::string_view::npos) break;
      text.remove_prefix(comma + 1);
    }
    return out;
  }

  template <class T>
  static std::vector<T> parse_list(const std::string& key, std::string_view text) {
    std::vector<T> out;
    for (const auto& item : split(text)) out.push_back(to_number<T>(key, item));
    if (out.empty()) throw ConfigError(key, "empty list");
    return out;
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
      s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    return s;
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

struct AdapterEntry {
  std::string name;
  AdapterSettings settings;
};

/// A fully resolved experiment; every run it describes is a pure function of
/// this value and a seed (under simulated timing).
struct ExperimentConfig {
  BenchmarkSpec bench;
  std::vector<AdapterEntry> adapters;
  std::vector<Protocol> protocols{Protocol::Offline, Protocol::Online};
  ProtocolConfig protocol;  // shared schedule / alpha / visibility / timing / clock
  std::vector<double> eta_values{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string out_dir = "results";
};

namespace detail {

inline std::optional<LatencyModel> read_latency(KeyValueConfig& kv, const std::string& prefix,
                                                const std::string& fallback_prefix) {
  auto key = [&](const std::string& leaf) {
    const std::string own = prefix + "." + leaf;
    if (kv.has(own) || fallback_prefix.empty()) return own;
    return fallback_prefix + "." + leaf;
  };
  const std::string kind_key = key("kind");
  if (!kv.has(kind_key)) return std::nullopt;
  const std::string kind = kv.get(kind_key, "");
  try {
    if (kind == "constant") return LatencyModel::constant(kv.get_number<double>(key("seconds"), 1.0));
    if (kind == "per_sample")
      return LatencyModel::per_sample(kv.get_number<double>(key("per_sample"), 0.0),
                                      kv.get_number<double>(key("base"), 0.0));
    if (kind == "stochastic")
      return LatencyModel::stochastic(kv.get_number<double>(key("mean"), 1.0),
                                      kv.get_number<double>(key("jitter"), 0.0),
                                      kv.get_number<std::uint64_t>(key("seed"), 0));
    if (kind == "profile") return latency_profile(kv.get(key("profile"), "forward"));
  } catch (const InvalidArgument& e) {
    throw ConfigError(kind_key, e.what());
  }
  throw ConfigError(kind_key, "unknown latency kind '" + kind + "'");
}

inline AdapterSettings read_adapter_settings(KeyValueConfig& kv, const std::string& name) {
  const std::string own = "adapter." + name;
  auto key = [&](const std::string& leaf) {
    return kv.has(own + "." + leaf) ? own + "." + leaf : "adapter." + leaf;
  };
  AdapterSettings s;
  s.learning_rate = kv.get_number<double>(key("learning_rate"), s.learning_rate);
  if (kv.has(key("entropy_threshold")))
    s.entropy_threshold = kv.get_number<double>(key("entropy_threshold"), 0.0);
  const std::string mode = kv.get(key("norm_mode"), "adabn");
  if (mode == "adabn")
    s.norm_mode = NormStatAdapter::Mode::AdaBN;
  else if (mode == "bn")
    s.norm_mode = NormStatAdapter::Mode::BN;
  else
    throw ConfigError(key("norm_mode"), "expected adabn or bn");
  s.prior_weight = kv.get_number<double>(key("prior_weight"), s.prior_weight);
  s.stats_momentum = kv.get_number<double>(key("stats_momentum"), s.stats_momentum);
  s.latency = read_latency(kv, own + ".latency", "adapter.latency");
  s.forward_latency = read_latency(kv, own + ".forward_latency", "adapter.forward_latency");
  return s;
}

inline std::vector<CorruptionSpec> read_domains(KeyValueConfig& kv, int severity) {
  const std::string key = "stream.domains";
  const std::string text = kv.get(key, "default");
  if (text == "default") return default_domains(severity);
  std::vector<CorruptionSpec> out;
  for (const auto& item : KeyValueConfig::split(text)) {
    // kind[:severity[:seed]]
    std::vector<std::string> parts;
    std::stringstream ss(item);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    CorruptionSpec c;
    try {
      c.kind = parse_corruption_kind(parts.at(0));
    } catch (const InvalidArgument& e) {
      throw ConfigError(key, e.what());
    }
    c.severity = parts.size() > 1 ? KeyValueConfig::to_number<int>(key, parts[1]) : severity;
    c.seed = parts.size() > 2 ? KeyValueConfig::to_number<std::uint64_t>(key, parts[2])
                              : std::uint64_t(out.size());
    if (parts.size() > 3) throw ConfigError(key, "expected kind[:severity[:seed]]");
    if (c.severity < 1 || c.severity > 5) throw ConfigError(key, "severity must be in 1..5");
    out.push_back(c);
  }
  if (out.empty()) throw ConfigError(key, "empty domain list");
  return out;
}

}  // namespace detail

/// Resolves a key=value config; unknown keys and invalid values raise
/// ConfigError naming the offending key.
inline ExperimentConfig resolve_config(KeyValueConfig kv) {
  ExperimentConfig cfg;
  auto& src = cfg.bench.source;
  src.num_classes = kv.get_number<int>("source.num_classes", src.num_classes);
  src.dim = kv.get_number<int>("source.dim", src.dim);
  src.class_separation = kv.get_number<double>("source.class_separation", src.class_separation);
  src.samples_per_class = kv.get_number<int>("source.samples_per_class", src.samples_per_class);
  try {
    src.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("source", e.what());
  }
  cfg.bench.pretrain.learning_rate =
      kv.get_number<double>("pretrain.learning_rate", cfg.bench.pretrain.learning_rate);
  cfg.bench.pretrain.iterations =
      kv.get_number<int>("pretrain.iterations", cfg.bench.pretrain.iterations);
  if (!(cfg.bench.pretrain.learning_rate > 0.0))
    throw ConfigError("pretrain.learning_rate", "must be > 0");
  if (cfg.bench.pretrain.iterations < 0) throw ConfigError("pretrain.iterations", "must be >= 0");

  auto& sc = cfg.bench.scenario;
  const std::string mode = kv.get("stream.mode", "episodic");
  if (mode == "episodic")
    sc.mode = ScenarioMode::Episodic;
  else if (mode == "continual")
    sc.mode = ScenarioMode::Continual;
  else
    throw ConfigError("stream.mode", "expected episodic or continual");
  sc.batch_size = kv.get_number<int>("stream.batch_size", sc.batch_size);
  if (sc.batch_size < 1) throw ConfigError("stream.batch_size", "must be >= 1");
  cfg.bench.samples_per_domain =
      kv.get_number<Eigen::Index>("stream.samples_per_domain", cfg.bench.samples_per_domain);
  if (cfg.bench.samples_per_domain < sc.batch_size)
    throw ConfigError("stream.samples_per_domain", "must hold at least one batch");
  const int severity = kv.get_number<int>("stream.severity", 5);
  if (severity < 1 || severity > 5) throw ConfigError("stream.severity", "must be in 1..5");
  sc.domain_order = detail::read_domains(kv, severity);
  sc.append_clean = kv.get_bool("stream.append_clean", false);
  if (sc.append_clean && sc.mode != ScenarioMode::Continual)
    throw ConfigError("stream.append_clean", "only valid in continual mode");

  for (const auto& name : kv.get_strings("adapter.name", {"entropy_min"})) {
    if (!is_adapter_name(name)) throw ConfigError("adapter.name", "unknown adapter '" + name + "'");
    try {
      cfg.adapters.push_back({name, detail::read_adapter_settings(kv, name)});
    } catch (const InvalidArgument& e) {
      throw ConfigError("adapter." + name, e.what());
    }
  }

  cfg.protocols.clear();
  for (const auto& p : kv.get_strings("protocol.mode", {"offline", "online"})) {
    try {
      cfg.protocols.push_back(parse_protocol(p));
    } catch (const InvalidArgument& e) {
      throw ConfigError("protocol.mode", e.what());
    }
  }
  if (cfg.protocols.empty()) throw ConfigError("protocol.mode", "empty list");

  auto& pc = cfg.protocol;
  const std::string schedule = kv.get("protocol.schedule", "busy_window");
  if (schedule == "busy_window")
    pc.schedule = SchedulePolicy::busy_window();
  else if (schedule == "fixed_modulo")
    pc.schedule = SchedulePolicy::fixed_modulo(kv.get_number<StepCount>("protocol.modulo_k", 1));
  else
    throw ConfigError("protocol.schedule", "expected busy_window or fixed_modulo");
  if (pc.schedule.k < 1) throw ConfigError("protocol.modulo_k", "must be >= 1");
  pc.alpha = kv.get_number<double>("protocol.alpha", 0.0);
  if (!(pc.alpha >= 0.0 && pc.alpha <= 1.0)) throw ConfigError("protocol.alpha", "must be in [0, 1]");
  const std::string vis = kv.get("protocol.fallback_visibility", "immediate");
  if (vis == "immediate")
    pc.fallback_visibility = FallbackVisibility::Immediate;
  else if (vis == "delayed")
    pc.fallback_visibility = FallbackVisibility::Delayed;
  else
    throw ConfigError("protocol.fallback_visibility", "expected immediate or delayed");
  const std::string timing = kv.get("protocol.timing", "simulated");
  if (timing == "simulated")
    pc.timing = Timing::Simulated;
  else if (timing == "measured")
    pc.timing = Timing::Measured;
  else
    throw ConfigError("protocol.timing", "expected simulated or measured");

  const double base_rate = kv.get_number<double>("clock.base_rate", 1.0);
  const double eta = kv.get_number<double>("clock.eta", 1.0);
  try {
    pc.clock = StreamClock(base_rate, eta);
  } catch (const InvalidArgument& e) {
    throw ConfigError(base_rate > 0.0 ? "clock.eta" : "clock.base_rate", e.what());
  }

  cfg.eta_values = kv.get_list<double>("sweep.eta_values", cfg.eta_values);
  for (double e : cfg.eta_values)
    if (!(e > 0.0 && e <= 1.0)) throw ConfigError("sweep.eta_values", "values must lie in (0, 1]");
  cfg.seeds = kv.get_list<std::uint64_t>("run.seeds", cfg.seeds);
  cfg.out_dir = kv.get("output.dir", cfg.out_dir);

  // Per-adapter keys of adapters that were not selected are still unknown.
  const auto unused = kv.unused();
  if (!unused.empty()) throw ConfigError(unused.front(), "unknown configuration key");
  return cfg;
}

}  // namespace streamgate
