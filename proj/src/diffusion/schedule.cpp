#include "deepinv/diffusion/schedule.hpp"

#include <cmath>
#include <numbers>

#include "deepinv/core/errors.hpp"

namespace deepinv {

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "linear") return ScheduleKind::kLinear;
  if (s == "cosine") return ScheduleKind::kCosine;
  throw ContractError("unknown schedule kind '" + s + "'");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, std::vector<Real> alpha_bar)
    : kind_(kind), alpha_bar_(std::move(alpha_bar)) {
  if (alpha_bar_.size() < 2) throw ContractError("schedule needs at least one step");
  if (alpha_bar_.front() != 1.0) throw ContractError("schedule must start at alpha_bar = 1");
  for (std::size_t i = 1; i < alpha_bar_.size(); ++i) {
    if (!(alpha_bar_[i] < alpha_bar_[i - 1]) || !(alpha_bar_[i] > 0.0)) {
      throw ContractError("schedule must be strictly decreasing in (0, 1]");
    }
  }
}

Real NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) {
    throw DomainError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

NoiseSchedule make_schedule(int steps, ScheduleKind kind) {
  if (steps < 1) throw ContractError("schedule needs T >= 1");
  std::vector<Real> ab(static_cast<std::size_t>(steps) + 1);
  const Real T = static_cast<Real>(steps);
  const Real span = 1.0 - NoiseSchedule::kFinalAlphaBar;
  if (kind == ScheduleKind::kLinear) {
    for (int t = 0; t <= steps; ++t) ab[t] = 1.0 - span * static_cast<Real>(t) / T;
  } else {
    const Real s = NoiseSchedule::kCosineOffset;
    auto f = [&](Real t) {
      const Real c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    const Real f0 = f(0.0);
    for (int t = 0; t <= steps; ++t) ab[t] = NoiseSchedule::kFinalAlphaBar + span * f(t) / f0;
    ab[steps] = NoiseSchedule::kFinalAlphaBar;
  }
  ab[0] = 1.0;
  return NoiseSchedule(kind, std::move(ab));
}

std::vector<int> make_timeline(const NoiseSchedule& schedule, int count) {
  const int T = schedule.steps();
  if (count < 1 || count > T) {
    throw ContractError("timeline of " + std::to_string(count) + " steps over a " + std::to_string(T) +
                        "-step schedule");
  }
  std::vector<int> idx(static_cast<std::size_t>(count) + 1);
  for (int j = 0; j <= count; ++j) {
    idx[j] = static_cast<int>(std::lround(static_cast<double>(j) * T / count));
  }
  return idx;
}

}  // namespace deepinv
