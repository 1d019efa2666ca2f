#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "barsctr/error.hpp"
#include "barsctr/train/config.hpp"

// Reduce-on-plateau and early stopping as pure state machines over the
// monitored validation series.
namespace barsctr::train {

// Better than `best` by at least min_delta in the monitor's direction. The
// first value always improves.
inline bool improves(Monitor m, double value, const std::optional<double>& best, double min_delta) {
  if (!best) return true;
  return m == Monitor::auc ? value >= *best + min_delta : value <= *best - min_delta;
}

inline void require_finite_monitor(double v) {
  if (!std::isfinite(v)) throw NumericError("monitored metric is not finite");
}

class PlateauScheduler {
 public:
  PlateauScheduler(Monitor monitor, double lr, double factor, double min_lr, std::size_t patience, double min_delta)
      : monitor_(monitor), lr_(lr), factor_(factor), min_lr_(min_lr), patience_(patience), min_delta_(min_delta) {}

  explicit PlateauScheduler(const TrainConfig& c)
      : PlateauScheduler(c.monitor, c.learning_rate, c.lr_reduce_factor, c.min_lr, c.scheduler_patience, c.min_delta) {}

  // Feeds one evaluation; returns the learning rate for what follows.
  double step(double monitored) {
    require_finite_monitor(monitored);
    reduced_ = false;
    if (!has_best_ || improves(monitor_, monitored, best_, min_delta_)) {
      best_ = monitored;
      has_best_ = true;
      bad_ = 0;
      return lr_;
    }
    if (++bad_ >= patience_) {
      const double next = std::max(lr_ / factor_, min_lr_);
      reduced_ = next < lr_;
      lr_ = next;
      bad_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }
  bool reduced_last_step() const { return reduced_; }
  std::optional<double> best() const { return has_best_ ? std::optional<double>(best_) : std::nullopt; }

 private:
  Monitor monitor_;
  double lr_, factor_, min_lr_;
  std::size_t patience_;
  double min_delta_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t bad_ = 0;
  bool reduced_ = false;
};

class EarlyStopper {
 public:
  EarlyStopper(Monitor monitor, std::size_t patience, double min_delta)
      : monitor_(monitor), patience_(patience), min_delta_(min_delta) {}

  explicit EarlyStopper(const TrainConfig& c) : EarlyStopper(c.monitor, c.patience, c.min_delta) {}

  // True when this evaluation is the patience-th consecutive non-improvement.
  bool step(double monitored) {
    require_finite_monitor(monitored);
    ++seen_;
    if (!has_best_ || improves(monitor_, monitored, best_, min_delta_)) {
      best_ = monitored;
      has_best_ = true;
      best_index_ = seen_ - 1;
      bad_ = 0;
      return false;
    }
    return ++bad_ >= patience_;
  }

  std::optional<double> best() const { return has_best_ ? std::optional<double>(best_) : std::nullopt; }
  std::size_t best_index() const { return best_index_; }

 private:
  Monitor monitor_;
  std::size_t patience_;
  double min_delta_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t best_index_ = 0;
  std::size_t seen_ = 0;
  std::size_t bad_ = 0;
};

struct ScheduleReplay {
  std::vector<double> lr_used;   // lr in effect during each evaluated epoch
  std::optional<std::size_t> stop_after;  // 1-based evaluation count, if stopped
  std::size_t best_index = 0;
};

// Runs both machines over a monitor series exactly as the trainer does.
inline ScheduleReplay replay_schedule(const std::vector<double>& series, const TrainConfig& c) {
  PlateauScheduler sched(c);
  EarlyStopper stop(c);
  ScheduleReplay r;
  for (std::size_t i = 0; i < series.size(); ++i) {
    r.lr_used.push_back(sched.lr());
    sched.step(series[i]);
    if (stop.step(series[i])) {
      r.stop_after = i + 1;
      break;
    }
  }
  r.best_index = stop.best_index();
  return r;
}

}  // namespace barsctr::train
