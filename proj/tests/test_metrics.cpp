#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "streamgate/metrics.hpp"
#include "streamgate/report_io.hpp"

using namespace streamgate;

namespace {

DomainResult domain(int id, double rate, std::string cat = "", std::int64_t n = 100) {
  DomainResult d;
  d.domain_id = id;
  d.category = std::move(cat);
  d.n_batches = 4;
  d.n_adapted = 2;
  d.n_samples = n;
  d.n_errors = rate * double(n);
  d.c_total = 6;
  d.error_rate = rate;
  return d;
}

ScheduleRecord adapted(StepCount step, StepCount c, std::int64_t errors = 0) {
  ScheduleRecord r;
  r.step = step;
  r.action = StepAction::Adapted;
  r.c_value = c;
  r.params_version = step + 1;
  r.error_count = errors;
  r.batch_size = 10;
  return r;
}

ScheduleRecord skipped(StepCount step, std::int64_t errors = 0) {
  ScheduleRecord r;
  r.step = step;
  r.action = StepAction::SkippedFallback;
  r.params_version = 1;
  r.error_count = errors;
  r.batch_size = 10;
  return r;
}

RunReport named(double avg, std::string adapter = "entropy_min") {
  RunReport r;
  r.adapter = std::move(adapter);
  r.scenario = "episodic";
  r.seed = 1;
  r.avg_error = avg;
  return r;
}

}  // namespace

TEST(ErrorRate, Examples) {
  EXPECT_EQ(error_rate({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_EQ(error_rate({0, 0}, {1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(error_rate({0, 0, 0, 0, 0, 0, 0, 1, 1, 1}, Labels(10, 0)), 0.3);
  EXPECT_THROW(error_rate({}, {}), InvalidArgument);
}

TEST(Aggregate, UnweightedMean) {
  EXPECT_DOUBLE_EQ(aggregate({domain(0, 0.2), domain(1, 0.4)}).avg_error, 0.3);
  EXPECT_EQ(aggregate({domain(0, 0.37)}).avg_error, 0.37);
  EXPECT_THROW(aggregate({}), InvalidArgument);
}

TEST(Aggregate, PermutationInvariant) {
  std::vector<DomainResult> d;
  for (int i = 0; i < 15; ++i) d.push_back(domain(i, 0.013 * i + 0.1 / (i + 1)));
  const RunReport ref = aggregate(d);
  std::mt19937 rng(3);
  for (int k = 0; k < 20; ++k) {
    std::shuffle(d.begin(), d.end(), rng);
    EXPECT_EQ(aggregate(d), ref);
  }
}

TEST(Aggregate, UnequalSizesWarnButStayUnweighted) {
  const RunReport r = aggregate({domain(0, 0.2, "", 100), domain(1, 0.4, "", 300)});
  EXPECT_DOUBLE_EQ(r.avg_error, 0.3);
  ASSERT_EQ(r.notes.size(), 1u);
}

TEST(Aggregate, AdaptedFractionAndMeanC) {
  const RunReport r = aggregate({domain(0, 0.1), domain(1, 0.2)});
  EXPECT_EQ(r.adapted_fraction, 0.5);
  EXPECT_EQ(r.mean_c, 3.0);
}

TEST(CategoryAverages, GroupsByTag) {
  const auto c = category_averages({domain(0, 0.1, "a"), domain(1, 0.3, "a"), domain(2, 0.5, "b")});
  ASSERT_EQ(c.size(), 2u);
  EXPECT_DOUBLE_EQ(c.at("a"), 0.2);
  EXPECT_DOUBLE_EQ(c.at("b"), 0.5);
}

TEST(Delta, Examples) {
  EXPECT_EQ(delta(named(0.5), named(0.5)), 0.0);
  EXPECT_NEAR(delta(named(0.573), named(0.616)), 0.043, 1e-12);
  EXPECT_NEAR(delta(named(0.599), named(0.591)), -0.008, 1e-12);
  EXPECT_THROW(delta(named(0.5), named(0.5, "pseudo_label")), InvalidArgument);
  RunReport other = named(0.5);
  other.seed = 2;
  EXPECT_THROW(delta(named(0.5), other), InvalidArgument);
}

TEST(MeanC, Examples) {
  std::vector<ScheduleRecord> three{adapted(0, 3), skipped(1), skipped(2), adapted(3, 3)};
  EXPECT_EQ(mean_c(three), 3.0);
  std::vector<ScheduleRecord> ones{adapted(0, 1), adapted(1, 1)};
  EXPECT_EQ(mean_c(ones), 1.0);
  std::vector<ScheduleRecord> alt{adapted(0, 2), adapted(2, 4), adapted(6, 2), adapted(8, 4)};
  EXPECT_EQ(mean_c(alt), 3.0);
  std::vector<ScheduleRecord> none{skipped(0)};
  EXPECT_FALSE(mean_c(none).has_value());
}

TEST(BuildReport, TalliesLedger) {
  std::vector<ScheduleRecord> s{adapted(0, 2, 3), skipped(1, 5), adapted(2, 2, 1), skipped(3, 7)};
  s[2].domain_id = s[3].domain_id = 1;
  const RunReport r = build_report(s, true);
  ASSERT_EQ(r.per_domain.size(), 2u);
  EXPECT_DOUBLE_EQ(r.per_domain[0].error_rate, 0.4);
  EXPECT_DOUBLE_EQ(r.per_domain[1].error_rate, 0.4);
  EXPECT_EQ(r.adapted_fraction, 0.5);
  EXPECT_EQ(r.schedule, s);
  EXPECT_TRUE(build_report(s, false).schedule.empty());
}

TEST(ScheduleRecord, Invariants) {
  ScheduleRecord r = adapted(0, 1);
  r.c_value.reset();
  EXPECT_THROW(r.validate(), ValidationError);
  r = skipped(0, 11);
  EXPECT_THROW(r.validate(), ValidationError);
}

TEST(Serialization, JsonRoundTripIsLossless) {
  RunReport r = aggregate({domain(0, 0.1 + 1e-17, "gaussian_noise"), domain(1, 1.0 / 3.0, "rotation")});
  r.run_id = "entropy_min/online/eta=0.25/seed=3";
  r.protocol = "online";
  r.scenario = "episodic";
  r.adapter = "entropy_min";
  r.eta = 0.25;
  r.seed = 3;
  r.schedule = {adapted(0, 3, 2), skipped(1, 4), skipped(2, 1)};
  r.schedule[1].degraded = true;
  const std::string text = nlohmann::json(r).dump();
  const RunReport back = nlohmann::json::parse(text).get<RunReport>();
  EXPECT_EQ(back, r);
}

TEST(Serialization, ResultsCsvColumns) {
  RunReport r = aggregate({domain(0, 0.25), domain(1, 0.5)});
  r.run_id = "x";
  r.protocol = "offline";
  r.scenario = "episodic";
  r.adapter = "source";
  r.eta = 1.0;
  r.seed = 7;
  r.per_domain[1].n_adapted = 0;
  r.per_domain[1].c_total = 0;
  std::ostringstream os;
  write_results_csv(os, std::span<const RunReport>(&r, 1));
  EXPECT_EQ(os.str(),
            "run_id,protocol,scenario,adapter,domain_id,eta,seed,n_batches,n_adapted,mean_c,error_rate\n"
            "x,offline,episodic,source,0,1,7,4,2,3,0.25\n"
            "x,offline,episodic,source,1,1,7,4,0,,0.5\n");
}

TEST(Serialization, ScheduleCsv) {
  std::vector<ScheduleRecord> s{adapted(0, 3, 2), skipped(1, 4)};
  std::ostringstream os;
  write_schedule_csv(os, s);
  EXPECT_EQ(os.str(),
            "step,action,c_value,params_version,error_count,batch_size\n"
            "0,adapted,3,1,2,10\n"
            "1,skipped_fallback,,1,4,10\n");
}

TEST(Formatting, PercentOneDecimal) {
  EXPECT_EQ(format_percent(0.573), "57.3");
  EXPECT_EQ(format_percent(0.043), "4.3");
  EXPECT_EQ(format_number(0.1), "0.1");
}
