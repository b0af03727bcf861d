#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "streamgate/clock.hpp"
#include "streamgate/error.hpp"
#include "streamgate/metrics.hpp"
#include "streamgate/schedule.hpp"
#include "streamgate/trace.hpp"

namespace streamgate {

inline constexpr std::string_view kTraceHeader =
    "step,latency,correct_adapted,correct_fallback,domain_id,batch_size";
// Accepted when fallback correctness was not recorded; replay then needs an
// assumed fallback error rate.
inline constexpr std::string_view kTraceHeaderNoFallback =
    "step,latency,correct_adapted,domain_id,batch_size";

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = line.find(',');
    out.push_back(line.substr(0, comma));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return out;
}

template <class T>
T parse_cell(std::string_view cell, std::size_t lineno, const char* column) {
  T v{};
  auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (r.ec != std::errc{} || r.ptr != cell.data() + cell.size())
    throw ParseError(std::string("bad value '") + std::string(cell) + "' in column " + column,
                     lineno);
  return v;
}

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Reads and validates a trace CSV.
inline std::vector<TraceRecord> parse_trace(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty trace file", 1);
  const std::string_view header = detail::trim_cr(line);
  bool has_fallback = true;
  if (header == kTraceHeaderNoFallback)
    has_fallback = false;
  else if (header != kTraceHeader)
    throw ParseError("expected header '" + std::string(kTraceHeader) + "'", 1);
  const std::size_t ncols = has_fallback ? 6 : 5;

  std::vector<TraceRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string_view row = detail::trim_cr(line);
    if (row.empty()) continue;
    const auto cells = detail::split_csv(row);
    if (cells.size() != ncols)
      throw ParseError("expected " + std::to_string(ncols) + " columns, got " +
                           std::to_string(cells.size()),
                       lineno);
    TraceRecord r;
    std::size_t c = 0;
    r.step = detail::parse_cell<std::int64_t>(cells[c++], lineno, "step");
    r.latency = detail::parse_cell<double>(cells[c++], lineno, "latency");
    r.correct_adapted = detail::parse_cell<std::int64_t>(cells[c++], lineno, "correct_adapted");
    if (has_fallback)
      r.correct_fallback = detail::parse_cell<std::int64_t>(cells[c++], lineno, "correct_fallback");
    r.domain_id = detail::parse_cell<int>(cells[c++], lineno, "domain_id");
    r.batch_size = detail::parse_cell<std::int64_t>(cells[c++], lineno, "batch_size");

    if (!(r.latency > 0.0) || !std::isfinite(r.latency))
      throw ValidationError("line " + std::to_string(lineno) + ": latency must be > 0");
    if (r.batch_size < 1)
      throw ValidationError("line " + std::to_string(lineno) + ": batch_size must be >= 1");
    if (r.correct_adapted < 0 || r.correct_adapted > r.batch_size)
      throw ValidationError("line " + std::to_string(lineno) +
                            ": correct_adapted outside [0, batch_size]");
    if (r.correct_fallback && (*r.correct_fallback < 0 || *r.correct_fallback > r.batch_size))
      throw ValidationError("line " + std::to_string(lineno) +
                            ": correct_fallback outside [0, batch_size]");
    if (r.step != static_cast<std::int64_t>(out.size()))
      throw ValidationError("line " + std::to_string(lineno) + ": expected step " +
                            std::to_string(out.size()) + ", got " + std::to_string(r.step));
    out.push_back(r);
  }
  if (out.empty()) throw ValidationError("trace has no records");
  return out;
}

inline std::vector<TraceRecord> parse_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open trace '" + path + "'");
  return parse_trace(in);
}

/// Writes a trace; numbers use the shortest round-trip representation.
inline void write_trace(std::ostream& os, std::span<const TraceRecord> trace) {
  bool with_fallback = true;
  for (const auto& r : trace) with_fallback = with_fallback && r.correct_fallback.has_value();
  os << (with_fallback ? kTraceHeader : kTraceHeaderNoFallback) << '\n';
  char buf[32];
  for (const auto& r : trace) {
    auto res = std::to_chars(buf, buf + sizeof buf, r.latency);
    os << r.step << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << ','
       << r.correct_adapted << ',';
    if (with_fallback) os << *r.correct_fallback << ',';
    os << r.domain_id << ',' << r.batch_size << '\n';
  }
}

struct ReplayOptions {
  // Used for every skipped batch that has no recorded fallback correctness.
  std::optional<double> fallback_error_rate;
};

/// Recomputes the online protocol on recorded costs: busy-window schedule
/// with C = ceil(latency / interval) at each adapted step; adapted steps
/// score correct_adapted, skipped steps correct_fallback.
inline RunReport replay_online(std::span<const TraceRecord> trace, const StreamClock& clock,
                               const ReplayOptions& opts = {}) {
  if (trace.empty()) throw ValidationError("trace has no records");
  const double interval = clock.effective_interval();
  std::vector<ScheduleRecord> ledger;
  ledger.reserve(trace.size());
  StepCount busy_until = 0;
  std::int64_t version = 0;
  bool approximated = false;
  // Fractional error counts are only possible under an assumed fallback rate.
  std::vector<double> approx_errors;

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceRecord& r = trace[i];
    if (r.step != static_cast<std::int64_t>(i)) throw ValidationError("trace steps not contiguous");
    const auto t = static_cast<StepCount>(i);
    ScheduleRecord rec;
    rec.step = r.step;
    rec.batch_size = r.batch_size;
    rec.domain_id = r.domain_id;
    double errors = 0.0;
    if (schedule_decision(t, busy_until) == StepDecision::Adapt) {
      const StepCount c = relative_adaptation_speed(interval, r.latency);
      busy_until = t + c;
      rec.action = StepAction::Adapted;
      rec.c_value = c;
      rec.params_version = ++version;
      errors = double(r.batch_size - r.correct_adapted);
    } else {
      rec.action = StepAction::SkippedFallback;
      rec.params_version = version;
      if (r.correct_fallback) {
        errors = double(r.batch_size - *r.correct_fallback);
      } else if (opts.fallback_error_rate) {
        errors = *opts.fallback_error_rate * double(r.batch_size);
        approximated = true;
      } else {
        throw ValidationError("step " + std::to_string(r.step) +
                              " was skipped but has no correct_fallback; supply a fallback "
                              "error rate");
      }
    }
    rec.error_count = static_cast<std::int64_t>(std::llround(errors));
    approx_errors.push_back(errors);
    ledger.push_back(rec);
  }

  std::vector<DomainResult> domains = tally_domains(ledger);
  if (approximated) {
    for (auto& d : domains) d.n_errors = 0.0;
    for (std::size_t i = 0; i < ledger.size(); ++i)
      for (auto& d : domains)
        if (d.domain_id == ledger[i].domain_id) d.n_errors += approx_errors[i];
    for (auto& d : domains) d.error_rate = d.n_errors / double(d.n_samples);
  }
  RunReport report = aggregate(std::move(domains));
  report.protocol = "online";
  report.scenario = "replay";
  report.adapter = "trace";
  report.eta = clock.eta();
  report.notes.push_back(
      "approximation: skipped batches are scored with the recorded fallback correctness, not a "
      "re-simulated fallback model");
  if (approximated)
    report.notes.push_back("approximation: missing fallback correctness replaced by a constant "
                           "fallback error rate of " +
                           std::to_string(*opts.fallback_error_rate));
  return report;
}

}  // namespace streamgate
