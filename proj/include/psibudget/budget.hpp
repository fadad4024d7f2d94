//
// Copyright 2026 The psibudget Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#ifndef PSIBUDGET_BUDGET_HPP
#define PSIBUDGET_BUDGET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psibudget/accuracy.hpp"
#include "psibudget/status.hpp"

namespace psibudget::budget {

// Slack allowed when comparing sums of allocations with the usable budget.
inline constexpr double kBudgetTolerance = 1e-12;

struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;

  friend bool operator==(const PrivacyBudget&, const PrivacyBudget&) = default;
};

// n rows drawn uniformly and secretly from a population of m >= n.
struct SamplingInfo {
  std::uint64_t sample_size = 0;
  std::uint64_t population_size = 0;

  static Expected<SamplingInfo> Create(std::uint64_t n, std::uint64_t m) {
    if (n == 0) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "sample size must be at least 1");
    }
    if (m < n) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "population size must be at least the sample size");
    }
    return SamplingInfo{n, m};
  }

  double ratio() const {
    return static_cast<double>(population_size) /
           static_cast<double>(sample_size);
  }

  friend bool operator==(const SamplingInfo&, const SamplingInfo&) = default;
};

// ---------------------------------------------------------------------------
// Parameter checks and recommendations
// ---------------------------------------------------------------------------

struct ParamVerdict {
  enum class Level { kOk, kWarn, kReject };

  Level level = Level::kOk;
  std::vector<std::string> messages;

  bool ok() const { return level == Level::kOk; }
  bool rejected() const { return level == Level::kReject; }
};

inline constexpr char kEpsilonNotPositive[] = "EPSILON_NOT_POSITIVE";
inline constexpr char kDeltaOutOfRange[] = "DELTA_OUT_OF_RANGE";
inline constexpr char kSwapSuspected[] = "SWAP_SUSPECTED";
inline constexpr char kAboveRecommendedEpsilon[] = "ABOVE_RECOMMENDED_EPSILON";
inline constexpr char kAboveRecommendedDelta[] = "ABOVE_RECOMMENDED_DELTA";

inline constexpr double kRecommendedMaxEpsilon = 1.0;
inline constexpr double kRecommendedMaxDelta = 1e-5;

inline ParamVerdict ValidateParams(double epsilon, double delta) {
  ParamVerdict verdict;
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    verdict.messages.push_back(kEpsilonNotPositive);
  }
  if (!(delta >= 0.0 && delta < 1.0)) {
    verdict.messages.push_back(kDeltaOutOfRange);
  }
  if (!verdict.messages.empty()) {
    verdict.level = ParamVerdict::Level::kReject;
    return verdict;
  }
  // A tiny epsilon next to a large delta almost always means the two fields
  // were entered the wrong way round.
  if (epsilon < 1e-4 && delta > 1e-2) {
    verdict.messages.push_back(kSwapSuspected);
  }
  if (epsilon > kRecommendedMaxEpsilon) {
    verdict.messages.push_back(kAboveRecommendedEpsilon);
  }
  if (delta > kRecommendedMaxDelta) {
    verdict.messages.push_back(kAboveRecommendedDelta);
  }
  if (!verdict.messages.empty()) verdict.level = ParamVerdict::Level::kWarn;
  return verdict;
}

// Presets keyed by data sensitivity level.
inline Expected<PrivacyBudget> RecommendParams(int tier) {
  switch (tier) {
    case 1:
      return MakeError(ErrorCode::kUnsupportedTier,
                       "public information: differential privacy is not "
                       "necessary");
    case 2:
      return PrivacyBudget{1.0, 1e-5};
    case 3:
      return PrivacyBudget{0.25, 1e-6};
    case 4:
      return PrivacyBudget{0.05, 1e-7};
    case 5:
      return MakeError(ErrorCode::kUnsupportedTier,
                       "severely sensitive data: use of this tool is not "
                       "recommended");
    default:
      return MakeError(ErrorCode::kInvalidArgument,
                       "tier must be between 1 and 5");
  }
}

inline std::string_view TierDescription(int tier) {
  switch (tier) {
    case 1: return "Public information";
    case 2:
      return "Disclosure would not cause material harm, but the data is "
             "kept confidential";
    case 3:
      return "Disclosure could cause risk of material harm to individuals "
             "or the institution";
    case 4:
      return "Disclosure would likely cause serious harm to individuals or "
             "the institution";
    case 5:
      return "Disclosure would cause severe harm to individuals or the "
             "institution";
    default: return "";
  }
}

// ---------------------------------------------------------------------------
// Composition and amplification
// ---------------------------------------------------------------------------

// Basic composition: losses add.
inline PrivacyBudget Compose(std::span<const PrivacyBudget> parts) {
  PrivacyBudget total;
  for (const auto& p : parts) {
    total.epsilon += p.epsilon;
    total.delta += p.delta;
  }
  return total;
}

// Internal budget that, run on a secret uniform sample of n out of m, meets
// the owner's global budget. Solves (e^eps - 1) * n/m = eps_global for eps,
// and never goes below the global epsilon.
inline Expected<PrivacyBudget> AmplifyBySampling(const PrivacyBudget& global,
                                                 const SamplingInfo& info) {
  if (info.sample_size == 0 || info.population_size < info.sample_size) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "population size must be at least the sample size");
  }
  const double ratio = info.ratio();
  PrivacyBudget internal;
  internal.epsilon =
      std::max(global.epsilon, std::log1p(ratio * global.epsilon));
  internal.delta =
      std::min(ratio * global.delta, std::nextafter(1.0, 0.0));
  return internal;
}

inline Expected<PrivacyBudget> UsableBudget(const PrivacyBudget& internal,
                                            double reserve_fraction) {
  if (!(reserve_fraction >= 0.0 && reserve_fraction < 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "reserve fraction must lie in [0, 1)");
  }
  return PrivacyBudget{internal.epsilon * (1.0 - reserve_fraction),
                       internal.delta * (1.0 - reserve_fraction)};
}

// ---------------------------------------------------------------------------
// Allocation state
// ---------------------------------------------------------------------------

struct Allocation {
  std::string id;
  double epsilon = 0.0;
  bool held = false;
  accuracy::ErrorModel model;
};

// Every in-scope mechanism is pure-epsilon, so per-statistic delta is zero
// and the whole delta budget stays with the analyst reserve.
struct AllocationState {
  std::vector<Allocation> allocations;
  double reserve_fraction = 0.0;
  PrivacyBudget internal;
  double unspent = 0.0;

  double usable_epsilon() const {
    return internal.epsilon * (1.0 - reserve_fraction);
  }

  double spent_epsilon() const {
    double total = 0.0;
    for (const auto& a : allocations) total += a.epsilon;
    return total;
  }

  double held_epsilon() const {
    double total = 0.0;
    for (const auto& a : allocations) {
      if (a.held) total += a.epsilon;
    }
    return total;
  }

  size_t unheld_count() const {
    return static_cast<size_t>(
        std::count_if(allocations.begin(), allocations.end(),
                      [](const Allocation& a) { return !a.held; }));
  }

  const Allocation* Find(std::string_view id) const {
    for (const auto& a : allocations) {
      if (a.id == id) return &a;
    }
    return nullptr;
  }
  Allocation* Find(std::string_view id) {
    for (auto& a : allocations) {
      if (a.id == id) return &a;
    }
    return nullptr;
  }

  std::vector<PrivacyBudget> AsBudgets() const {
    std::vector<PrivacyBudget> out;
    out.reserve(allocations.size());
    for (const auto& a : allocations) out.push_back({a.epsilon, 0.0});
    return out;
  }
};

inline Expected<AllocationState> MakeAllocationState(
    const PrivacyBudget& internal, double reserve_fraction = 0.0) {
  PSIBUDGET_ASSIGN_OR_RETURN(PrivacyBudget usable,
                             UsableBudget(internal, reserve_fraction));
  AllocationState state;
  state.internal = internal;
  state.reserve_fraction = reserve_fraction;
  state.unspent = usable.epsilon;
  return state;
}

namespace internal {

inline std::string FormatNumber(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Restores sum(epsilon_i) + unspent == usable after floating-point drift.
// Drift above the usable budget is taken from the largest allocation that
// `may_touch` allows.
template <typename Pred>
void Settle(AllocationState& state, Pred may_touch) {
  const double usable = state.usable_epsilon();
  double spent = state.spent_epsilon();
  if (spent > usable) {
    Allocation* largest = nullptr;
    for (auto& a : state.allocations) {
      if (may_touch(a) && (largest == nullptr || a.epsilon > largest->epsilon)) {
        largest = &a;
      }
    }
    if (largest != nullptr) {
      largest->epsilon = std::max(0.0, largest->epsilon - (spent - usable));
      spent = state.spent_epsilon();
    }
  }
  state.unspent = std::max(0.0, usable - spent);
}

inline void SettleUnheld(AllocationState& state) {
  Settle(state, [](const Allocation& a) { return !a.held; });
}

}  // namespace internal

// Unheld statistics share what the held ones leave of the usable budget.
inline Expected<AllocationState> DefaultSplit(AllocationState state) {
  const size_t unheld = state.unheld_count();
  if (unheld == 0) {
    return MakeError(ErrorCode::kNoUnheldStatistic,
                     "there is no unheld statistic to give budget to");
  }
  double remainder = state.usable_epsilon() - state.held_epsilon();
  if (remainder < -kBudgetTolerance) {
    return MakeError(ErrorCode::kInfeasible,
                     "held statistics use " +
                         internal::FormatNumber(state.held_epsilon()) +
                         " epsilon but only " +
                         internal::FormatNumber(state.usable_epsilon()) +
                         " is usable; release a hold or raise the budget");
  }
  remainder = std::max(0.0, remainder);
  const double share = remainder / static_cast<double>(unheld);
  for (auto& a : state.allocations) {
    if (!a.held) a.epsilon = share;
  }
  internal::SettleUnheld(state);
  state.unspent = 0.0;
  return state;
}

// Re-splits unheld statistics evenly, or records everything left as unspent
// when every statistic is held (or none exist).
inline Expected<AllocationState> Rebalance(AllocationState state) {
  if (state.unheld_count() == 0) {
    const double remainder = state.usable_epsilon() - state.held_epsilon();
    if (remainder < -kBudgetTolerance) {
      return MakeError(ErrorCode::kInfeasible,
                       "held statistics exceed the usable budget");
    }
    state.unspent = std::max(0.0, remainder);
    return state;
  }
  return DefaultSplit(std::move(state));
}

// Gives statistic `id` exactly the budget that achieves `target_error`, then
// rescales the other unheld statistics proportionally into what remains.
inline Expected<AllocationState> SetErrorTarget(
    AllocationState state, std::string_view id, double target_error,
    accuracy::ConfidenceLevel confidence) {
  Allocation* target = state.Find(id);
  if (target == nullptr) {
    return MakeError(ErrorCode::kNotFound,
                     "unknown statistic '" + std::string(id) + "'");
  }
  if (target->held) {
    return MakeError(ErrorCode::kHeldStatistic,
                     "statistic '" + std::string(id) +
                         "' is held; release the hold before editing its "
                         "error");
  }
  PSIBUDGET_ASSIGN_OR_RETURN(
      accuracy::ErrorEstimate current,
      accuracy::ErrorBound(target->model, target->epsilon, confidence));
  if (current.value == target_error) return state;

  PSIBUDGET_ASSIGN_OR_RETURN(
      double needed,
      accuracy::EpsilonForError(target->model, target_error, confidence));
  const double free_budget = state.usable_epsilon() - state.held_epsilon();
  double remainder = free_budget - needed;
  if (remainder < -kBudgetTolerance) {
    auto best = accuracy::ErrorBound(target->model, std::max(0.0, free_budget),
                                     confidence);
    const double best_error = best.ok() ? best->value : 0.0;
    return MakeError(
        ErrorCode::kInfeasibleTarget,
        "target error " + internal::FormatNumber(target_error) + " for '" +
            std::string(id) + "' needs epsilon " +
            internal::FormatNumber(needed) + " but only " +
            internal::FormatNumber(free_budget) +
            " is not held; the best achievable error is " +
            internal::FormatNumber(best_error),
        {"best_error=" + internal::FormatNumber(best_error),
         "available_epsilon=" + internal::FormatNumber(free_budget)});
  }
  remainder = std::max(0.0, remainder);
  target->epsilon = needed;

  double others_total = 0.0;
  size_t others = 0;
  for (const auto& a : state.allocations) {
    if (!a.held && a.id != id) {
      others_total += a.epsilon;
      ++others;
    }
  }
  if (others == 0) {
    state.unspent = remainder;
    internal::SettleUnheld(state);
    return state;
  }
  for (auto& a : state.allocations) {
    if (a.held || a.id == id) continue;
    a.epsilon = others_total > 0.0
                    ? a.epsilon * (remainder / others_total)
                    : remainder / static_cast<double>(others);
  }
  internal::SettleUnheld(state);
  state.unspent = std::max(0.0, state.usable_epsilon() - state.spent_epsilon());
  return state;
}

inline Expected<AllocationState> ToggleHold(AllocationState state,
                                            std::string_view id, bool held) {
  Allocation* a = state.Find(id);
  if (a == nullptr) {
    return MakeError(ErrorCode::kNotFound,
                     "unknown statistic '" + std::string(id) + "'");
  }
  a->held = held;
  return state;
}

// Multiplies every allocation (held ones included) and the unspent remainder
// by new_usable / old_usable.
inline AllocationState RescaleToUsable(AllocationState state,
                                       const PrivacyBudget& new_internal,
                                       double new_reserve) {
  const double old_usable = state.usable_epsilon();
  state.internal = new_internal;
  state.reserve_fraction = new_reserve;
  const double ratio = state.usable_epsilon() / old_usable;
  if (ratio != 1.0) {
    for (auto& a : state.allocations) a.epsilon *= ratio;
  }
  internal::Settle(state, [](const Allocation&) { return true; });
  return state;
}

struct BudgetChange {
  AllocationState state;
  std::vector<std::string> warnings;
};

inline constexpr char kHeldRescaled[] = "HELD_ERRORS_CHANGED";

// Applies a new global budget (and optionally sampling information), rescaling
// every allocation with the usable budget. Holds do not protect against a
// change of the global budget, so a warning is emitted when any exist.
inline Expected<BudgetChange> UpdateGlobal(
    AllocationState state, const PrivacyBudget& new_global,
    const std::optional<SamplingInfo>& info) {
  const ParamVerdict verdict = ValidateParams(new_global.epsilon,
                                              new_global.delta);
  if (verdict.rejected()) {
    return MakeError(ErrorCode::kParamsRejected,
                     "privacy parameters rejected", verdict.messages);
  }
  PrivacyBudget internal = new_global;
  if (info) {
    PSIBUDGET_ASSIGN_OR_RETURN(internal, AmplifyBySampling(new_global, *info));
  }
  BudgetChange change;
  const bool any_held = state.unheld_count() < state.allocations.size();
  const bool changed = !(internal == state.internal);
  const double reserve = state.reserve_fraction;
  change.state = RescaleToUsable(std::move(state), internal, reserve);
  if (changed && any_held) change.warnings.push_back(kHeldRescaled);
  return change;
}

// Moves a fraction of the internal budget into the analyst reserve. Like a
// global change, this rescales every allocation.
inline Expected<BudgetChange> SetReserve(AllocationState state,
                                         double reserve_fraction) {
  PSIBUDGET_RETURN_IF_ERROR(UsableBudget(state.internal, reserve_fraction));
  BudgetChange change;
  const bool any_held = state.unheld_count() < state.allocations.size();
  const bool changed = reserve_fraction != state.reserve_fraction;
  const PrivacyBudget internal = state.internal;
  change.state = RescaleToUsable(std::move(state), internal, reserve_fraction);
  if (changed && any_held) change.warnings.push_back(kHeldRescaled);
  return change;
}

}  // namespace psibudget::budget

#endif  // PSIBUDGET_BUDGET_HPP
