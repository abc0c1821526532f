#include "ckc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ckc/errors.hpp"

namespace ckc {

Adam::Adam(ParamStore& params, AdamConfig config) : params_(&params), config_(config), lr_(config.lr) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params.at(i).value;
    m_.emplace_back(v.rows(), v.cols());
    v_.emplace_back(v.rows(), v.cols());
  }
}

void Adam::step(double grad_scale) {
  if (m_.size() != params_->size()) throw ContractViolation("parameter store changed after Adam was created");
  for (std::size_t i = 0; i < params_->size(); ++i) {
    for (double g : params_->at(i).grad.data())
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter '" + params_->at(i).name + "'");
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_->size(); ++i) {
    auto& p = params_->at(i);
    auto& m = m_[i].data();
    auto& v = v_[i].data();
    auto& w = p.value.data();
    const auto& gr = p.grad.data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = gr[j] * grad_scale;
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(ParamStore& params, const std::function<Var(Tape&)>& loss, double eps,
                           std::size_t max_coords, double floor) {
  params.zero_grad();
  {
    Tape t;
    auto l = loss(t);
    t.backward(l);
  }
  auto eval = [&] {
    Tape t(false);
    return t.scalar(loss(t));
  };
  GradCheckResult res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i);
    const std::size_t n = p.value.size();
    const std::size_t stride = (max_coords == 0 || n <= max_coords) ? 1 : (n + max_coords - 1) / max_coords;
    for (std::size_t j = 0; j < n; j += stride) {
      const double orig = p.value[j];
      p.value[j] = orig + eps;
      const double fp = eval();
      p.value[j] = orig - eps;
      const double fm = eval();
      p.value[j] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double err = relative_error(p.grad[j], numeric, floor);
      res.max_abs_error = std::max(res.max_abs_error, std::abs(p.grad[j] - numeric));
      ++res.checked;
      if (err > res.max_rel_error || res.worst_param.empty()) {
        res.max_rel_error = err;
        res.worst_param = p.name;
        res.worst_index = j;
        res.worst_analytic = p.grad[j];
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

LadderCheckResult grad_check_ladder(ParamStore& params, const std::function<Var(Tape&)>& loss,
                                    std::span<const double> steps, double tolerance, double floor) {
  if (steps.empty()) throw ContractViolation("grad_check_ladder needs at least one step");
  params.zero_grad();
  {
    Tape t;
    auto l = loss(t);
    t.backward(l);
  }
  auto eval = [&] {
    Tape t(false);
    return t.scalar(loss(t));
  };
  LadderCheckResult res;
  auto& w = res.worst;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i);
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double orig = p.value[j];
      double best = std::numeric_limits<double>::infinity(), best_numeric = 0.0;
      for (std::size_t s = 0; s < steps.size(); ++s) {
        p.value[j] = orig + steps[s];
        const double fp = eval();
        p.value[j] = orig - steps[s];
        const double fm = eval();
        p.value[j] = orig;
        const double numeric = (fp - fm) / (2.0 * steps[s]);
        const double err = relative_error(p.grad[j], numeric, floor);
        if (s == 0 && err > tolerance) ++res.rescued;
        if (err < best) {
          best = err;
          best_numeric = numeric;
        }
        if (best <= tolerance) break;
      }
      w.max_abs_error = std::max(w.max_abs_error, std::abs(p.grad[j] - best_numeric));
      ++w.checked;
      if (best > w.max_rel_error || w.worst_param.empty()) {
        w.max_rel_error = best;
        w.worst_param = p.name;
        w.worst_index = j;
        w.worst_analytic = p.grad[j];
        w.worst_numeric = best_numeric;
      }
    }
  }
  return res;
}

}  // namespace ckc
