#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "streamgate/metrics.hpp"
#include "streamgate/schedule.hpp"

namespace streamgate {

inline constexpr std::string_view kResultsHeader =
    "run_id,protocol,scenario,adapter,domain_id,eta,seed,n_batches,n_adapted,mean_c,error_rate";
inline constexpr std::string_view kScheduleHeader =
    "step,action,c_value,params_version,error_count,batch_size";

/// Shortest decimal that reads back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// One row per (run, domain).
inline void write_results_csv(std::ostream& os, std::span<const RunReport> reports,
                              bool header = true) {
  if (header) os << kResultsHeader << '\n';
  for (const auto& r : reports) {
    for (const auto& d : r.per_domain) {
      const auto mc = d.mean_c();
      os << r.run_id << ',' << r.protocol << ',' << r.scenario << ',' << r.adapter << ','
         << d.domain_id << ',' << format_number(r.eta) << ',' << r.seed << ',' << d.n_batches << ','
         << d.n_adapted << ',' << (mc ? format_number(*mc) : std::string()) << ','
         << format_number(d.error_rate) << '\n';
    }
  }
}

inline void write_schedule_csv(std::ostream& os, std::span<const ScheduleRecord> schedule) {
  os << kScheduleHeader << '\n';
  for (const auto& s : schedule) {
    os << s.step << ',' << to_string(s.action) << ','
       << (s.c_value ? std::to_string(*s.c_value) : std::string()) << ',' << s.params_version
       << ',' << s.error_count << ',' << s.batch_size << '\n';
  }
}

// --- JSON --------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ScheduleRecord& s) {
  j = {{"step", s.step},
       {"action", std::string(to_string(s.action))},
       {"c_value", s.c_value ? nlohmann::json(*s.c_value) : nlohmann::json(nullptr)},
       {"params_version", s.params_version},
       {"error_count", s.error_count},
       {"batch_size", s.batch_size},
       {"domain_id", s.domain_id},
       {"degraded", s.degraded}};
}

inline void from_json(const nlohmann::json& j, ScheduleRecord& s) {
  s.step = j.at("step").get<StepCount>();
  s.action = parse_step_action(j.at("action").get<std::string>());
  s.c_value = j.at("c_value").is_null() ? std::nullopt
                                        : std::optional<StepCount>(j.at("c_value").get<StepCount>());
  s.params_version = j.at("params_version").get<std::int64_t>();
  s.error_count = j.at("error_count").get<std::int64_t>();
  s.batch_size = j.at("batch_size").get<std::int64_t>();
  s.domain_id = j.value("domain_id", 0);
  s.degraded = j.value("degraded", false);
}

inline void to_json(nlohmann::json& j, const DomainResult& d) {
  const auto mc = d.mean_c();
  j = {{"domain_id", d.domain_id},
       {"category", d.category},
       {"n_batches", d.n_batches},
       {"n_adapted", d.n_adapted},
       {"n_samples", d.n_samples},
       {"n_errors", d.n_errors},
       {"c_total", d.c_total},
       {"mean_c", mc ? nlohmann::json(*mc) : nlohmann::json(nullptr)},
       {"error_rate", d.error_rate}};
}

inline void from_json(const nlohmann::json& j, DomainResult& d) {
  d.domain_id = j.at("domain_id").get<int>();
  d.category = j.value("category", std::string());
  d.n_batches = j.at("n_batches").get<std::int64_t>();
  d.n_adapted = j.at("n_adapted").get<std::int64_t>();
  d.n_samples = j.at("n_samples").get<std::int64_t>();
  d.n_errors = j.at("n_errors").get<double>();
  d.c_total = j.at("c_total").get<std::int64_t>();
  d.error_rate = j.at("error_rate").get<double>();
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
  j = {{"run_id", r.run_id},
       {"protocol", r.protocol},
       {"scenario", r.scenario},
       {"adapter", r.adapter},
       {"eta", r.eta},
       {"seed", r.seed},
       {"per_domain", r.per_domain},
       {"avg_error", r.avg_error},
       {"mean_c", r.mean_c ? nlohmann::json(*r.mean_c) : nlohmann::json(nullptr)},
       {"adapted_fraction", r.adapted_fraction},
       {"notes", r.notes}};
  if (!r.schedule.empty()) j["schedule"] = r.schedule;
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
  r.run_id = j.at("run_id").get<std::string>();
  r.protocol = j.at("protocol").get<std::string>();
  r.scenario = j.at("scenario").get<std::string>();
  r.adapter = j.at("adapter").get<std::string>();
  r.eta = j.at("eta").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.per_domain = j.at("per_domain").get<std::vector<DomainResult>>();
  r.avg_error = j.at("avg_error").get<double>();
  r.mean_c = j.at("mean_c").is_null() ? std::nullopt
                                      : std::optional<double>(j.at("mean_c").get<double>());
  r.adapted_fraction = j.at("adapted_fraction").get<double>();
  r.notes = j.value("notes", std::vector<std::string>{});
  r.schedule = j.contains("schedule") ? j.at("schedule").get<std::vector<ScheduleRecord>>()
                                      : std::vector<ScheduleRecord>{};
}

/// Percentage with one decimal, as in result tables.
inline std::string format_percent(double fraction) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(1) << 100.0 * fraction;
  return ss.str();
}

}  // namespace streamgate
