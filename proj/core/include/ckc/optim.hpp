#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckc/autodiff.hpp"
#include "ckc/params.hpp"

namespace ckc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double epoch_decay = 0.9;
};

// Adam with bias correction; the learning rate decays once per epoch.
class Adam {
 public:
  Adam(ParamStore& params, AdamConfig config = {});

  // Applies one update from the accumulated gradients, scaled by
  // `grad_scale` (e.g. 1/batch). Throws DivergenceError naming the first
  // parameter with a non-finite gradient; nothing is updated in that case.
  void step(double grad_scale = 1.0);
  void end_epoch() { lr_ *= config_.epoch_decay; }

  double lr() const { return lr_; }
  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParamStore* params_;
  AdamConfig config_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

// Central-difference check of d loss / d params. `loss` builds the scalar
// on a fresh tape each call. `max_coords` caps the coordinates probed per
// parameter (0 = all), sampled deterministically with a stride.
GradCheckResult grad_check(ParamStore& params, const std::function<Var(Tape&)>& loss, double eps = 1e-5,
                           std::size_t max_coords = 0, double floor = kGradCheckFloor);

// For piecewise-smooth losses (max pooling): each coordinate is probed with
// every step in `steps` and keeps the smallest error, so a step straddling a
// kink does not count against an otherwise correct gradient. `rescued`
// counts coordinates whose first step alone would have exceeded `tolerance`.
struct LadderCheckResult {
  GradCheckResult worst;
  std::size_t rescued = 0;
};
LadderCheckResult grad_check_ladder(ParamStore& params, const std::function<Var(Tape&)>& loss,
                                    std::span<const double> steps, double tolerance,
                                    double floor = kGradCheckFloor);

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = kGradCheckFloor);

}  // namespace ckc
