#pragma once

#include <span>
#include <string>
#include <vector>

#include "deepinv/core/tensor.hpp"

namespace deepinv {

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind parse_schedule_kind(const std::string& s);
std::string to_string(ScheduleKind kind);

/// Cumulative signal coefficients alpha_bar[0..T]. Index 0 is the clean
/// latent (alpha_bar = 1) and index T the noisiest (alpha_bar = 0.01).
class NoiseSchedule {
 public:
  static constexpr Real kFinalAlphaBar = 0.01;
  static constexpr Real kCosineOffset = 0.008;

  NoiseSchedule() = default;
  NoiseSchedule(ScheduleKind kind, std::vector<Real> alpha_bar);

  int steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
  ScheduleKind kind() const noexcept { return kind_; }
  Real alpha_bar(int t) const;
  std::span<const Real> alpha_bars() const noexcept { return alpha_bar_; }

  bool operator==(const NoiseSchedule&) const = default;

 private:
  ScheduleKind kind_ = ScheduleKind::kLinear;
  std::vector<Real> alpha_bar_;
};

/// linear: alpha_bar_t = 1 - 0.99 t / T.
/// cosine: alpha_bar_t = 0.01 + 0.99 f(t) / f(0) with
///         f(t) = cos^2(((t / T) + s) / (1 + s) * pi / 2), s = 0.008,
///         which is strictly decreasing and lands exactly on 0.01 at t = T.
NoiseSchedule make_schedule(int steps, ScheduleKind kind);

/// `count` + 1 evenly spaced schedule indices from 0 to T (rounded), used
/// when a coarser discretization of the same schedule is needed.
std::vector<int> make_timeline(const NoiseSchedule& schedule, int count);

}  // namespace deepinv
