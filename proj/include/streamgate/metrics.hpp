#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "streamgate/error.hpp"
#include "streamgate/model.hpp"
#include "streamgate/schedule.hpp"

namespace streamgate {

/// Fraction of mismatched labels.
inline double error_rate(const Labels& predicted, const Labels& truth) {
  if (predicted.empty() || truth.empty()) throw InvalidArgument("error_rate: empty input");
  return double(count_errors(predicted, truth)) / double(truth.size());
}

struct DomainResult {
  int domain_id = 0;
  std::string category;  // optional grouping tag
  std::int64_t n_batches = 0;
  std::int64_t n_adapted = 0;
  std::int64_t n_samples = 0;
  double n_errors = 0.0;  // integral except for approximated replays
  std::int64_t c_total = 0;  // sum of C over adapted batches
  double error_rate = 0.0;

  std::optional<double> mean_c() const {
    if (n_adapted == 0) return std::nullopt;
    return double(c_total) / double(n_adapted);
  }

  bool operator==(const DomainResult&) const = default;
};

struct RunReport {
  std::string run_id;
  std::string protocol;
  std::string scenario;
  std::string adapter;
  double eta = 1.0;
  std::uint64_t seed = 0;

  std::vector<DomainResult> per_domain;
  double avg_error = 0.0;
  std::optional<double> mean_c;
  double adapted_fraction = 0.0;
  std::vector<ScheduleRecord> schedule;  // empty unless requested
  std::vector<std::string> notes;

  /// Equality of everything measured, ignoring run metadata.
  bool same_metrics(const RunReport& o) const {
    return per_domain == o.per_domain && avg_error == o.avg_error && mean_c == o.mean_c &&
           adapted_fraction == o.adapted_fraction && schedule == o.schedule;
  }

  bool operator==(const RunReport&) const = default;
};

/// Fills the summary fields from per-domain results. Domains are averaged
/// without weights, in domain-id order so the result does not depend on the
/// order they were supplied in.
inline RunReport aggregate(std::vector<DomainResult> domains) {
  if (domains.empty()) throw InvalidArgument("aggregate: no domains");
  std::sort(domains.begin(), domains.end(), [](const DomainResult& a, const DomainResult& b) {
    return std::tie(a.domain_id, a.category, a.error_rate) <
           std::tie(b.domain_id, b.category, b.error_rate);
  });
  RunReport r;
  double err_sum = 0.0;
  std::int64_t batches = 0, adapted = 0, c_total = 0;
  for (const auto& d : domains) {
    err_sum += d.error_rate;
    batches += d.n_batches;
    adapted += d.n_adapted;
    c_total += d.c_total;
    if (d.n_samples != domains.front().n_samples &&
        r.notes.empty())
      r.notes.push_back("warning: domains have unequal sizes; averages remain unweighted");
  }
  r.avg_error = err_sum / double(domains.size());
  r.adapted_fraction = batches > 0 ? double(adapted) / double(batches) : 0.0;
  if (adapted > 0) r.mean_c = double(c_total) / double(adapted);
  r.per_domain = std::move(domains);
  return r;
}

/// Unweighted mean error per category tag.
inline std::map<std::string, double> category_averages(const std::vector<DomainResult>& domains) {
  std::map<std::string, std::pair<double, int>> acc;
  auto sorted = domains;
  std::sort(sorted.begin(), sorted.end(), [](const DomainResult& a, const DomainResult& b) {
    return std::tie(a.domain_id, a.error_rate) < std::tie(b.domain_id, b.error_rate);
  });
  for (const auto& d : sorted) {
    auto& [sum, n] = acc[d.category];
    sum += d.error_rate;
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [cat, v] : acc) out[cat] = v.first / double(v.second);
  return out;
}

/// online - offline average error; positive means the online protocol cost
/// the method accuracy.
inline double delta(const RunReport& offline, const RunReport& online) {
  if (offline.adapter != online.adapter || offline.scenario != online.scenario ||
      offline.seed != online.seed)
    throw InvalidArgument("delta: reports describe different adapter/scenario/seed");
  return online.avg_error - offline.avg_error;
}

/// Mean C over adapted steps; absent when nothing was adapted.
inline std::optional<double> mean_c(std::span<const ScheduleRecord> schedule) {
  std::int64_t sum = 0, n = 0;
  for (const auto& r : schedule)
    if (r.action == StepAction::Adapted) sum += *r.c_value, ++n;
  if (n == 0) return std::nullopt;
  return double(sum) / double(n);
}

/// Per-domain tallies from a schedule ledger.
inline std::vector<DomainResult> tally_domains(std::span<const ScheduleRecord> schedule) {
  std::map<int, DomainResult> by_domain;
  for (const auto& r : schedule) {
    r.validate();
    auto& d = by_domain[r.domain_id];
    d.domain_id = r.domain_id;
    ++d.n_batches;
    d.n_samples += r.batch_size;
    d.n_errors += double(r.error_count);
    if (r.action == StepAction::Adapted) {
      ++d.n_adapted;
      d.c_total += *r.c_value;
    }
  }
  std::vector<DomainResult> out;
  for (auto& [id, d] : by_domain) {
    d.error_rate = d.n_errors / double(d.n_samples);
    out.push_back(std::move(d));
  }
  return out;
}

inline RunReport build_report(std::span<const ScheduleRecord> schedule, bool keep_schedule) {
  if (schedule.empty()) throw InvalidArgument("build_report: empty schedule");
  RunReport r = aggregate(tally_domains(schedule));
  if (keep_schedule) r.schedule.assign(schedule.begin(), schedule.end());
  return r;
}

}  // namespace streamgate
