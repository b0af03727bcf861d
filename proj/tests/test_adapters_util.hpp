#pragma once

#include <memory>
#include <vector>

#include "streamgate/adapters.hpp"

namespace sgtest {

using namespace streamgate;

/// Test-only adapter that gets exactly `wrong` labels of every batch wrong
/// (the first rows, shifted by one class) and leaves the parameters alone.
class FixedAccuracyAdapter final : public Adapter {
 public:
  FixedAccuracyAdapter(ModelParams p, int wrong, double latency)
      : Adapter("fixed_accuracy", std::move(p), LatencyModel::constant(latency)), wrong_(wrong) {}

  std::unique_ptr<Adapter> clone() const override {
    return std::make_unique<FixedAccuracyAdapter>(*this);
  }

 protected:
  AdaptOutcome do_adapt(const Batch& batch) override {
    AdaptOutcome out;
    out.x_hat = batch.features;
    out.theta_hat = params();
    out.y_hat = batch.labels;
    const int k = static_cast<int>(params().num_classes());
    for (int i = 0; i < wrong_ && i < static_cast<int>(out.y_hat.size()); ++i)
      out.y_hat[static_cast<std::size_t>(i)] = (out.y_hat[static_cast<std::size_t>(i)] + 1) % k;
    return out;
  }

 private:
  int wrong_;
};

/// Wraps an adapter and records every prediction it emits from adapt().
class RecordingAdapter final : public Adapter {
 public:
  explicit RecordingAdapter(std::unique_ptr<Adapter> inner)
      : Adapter(inner->name(), inner->pretrained(), inner->latency()), inner_(std::move(inner)) {}
  RecordingAdapter(const RecordingAdapter& o)
      : Adapter(o), inner_(o.inner_->clone()), log_(o.log_), last_cost_(o.last_cost_) {}

  std::unique_ptr<Adapter> clone() const override { return std::make_unique<RecordingAdapter>(*this); }
  const std::vector<Labels>& log() const { return log_; }

 protected:
  AdaptOutcome do_adapt(const Batch& batch) override {
    inner_->set_params(params());
    AdaptOutcome out = inner_->adapt(batch);
    last_cost_ = out.cost;
    log_.push_back(out.y_hat);
    return out;
  }
  double draw_cost(const AdaptOutcome&, const Batch&) override { return last_cost_; }
  void reset_aux() override {
    inner_->reset();
  }

 private:
  std::unique_ptr<Adapter> inner_;
  std::vector<Labels> log_;
  double last_cost_ = 1.0;
};

/// Throws from adapt() at a given stream index.
class FailingAdapter final : public Adapter {
 public:
  FailingAdapter(ModelParams p, std::int64_t fail_at)
      : Adapter("failing", std::move(p), LatencyModel::constant(1.0)), fail_at_(fail_at) {}
  std::unique_ptr<Adapter> clone() const override { return std::make_unique<FailingAdapter>(*this); }

 protected:
  AdaptOutcome do_adapt(const Batch& batch) override {
    if (batch.t == fail_at_) throw NumericError("injected failure");
    return unchanged(batch);
  }

 private:
  std::int64_t fail_at_;
};

}  // namespace sgtest
