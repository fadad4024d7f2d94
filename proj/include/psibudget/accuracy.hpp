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
#ifndef PSIBUDGET_ACCURACY_HPP
#define PSIBUDGET_ACCURACY_HPP

#include <cmath>
#include <limits>
#include <string_view>

#include "psibudget/metadata.hpp"
#include "psibudget/status.hpp"

// A priori worst-case error at confidence 1 - alpha, and its exact inverse.
// Nothing here reads data: every bound is a function of the statistic kind,
// its metadata, the public row count n, epsilon and alpha.
//
//   mean       (U - L) ln(1/alpha) / (n eps)        statistic units
//   histogram  (2 / eps) ln(1/alpha)                counts, each bin
//   quantile   (2 / (eps n)) ln(G/alpha)            quantile fraction
//   cdf        (2 G / (eps n)) ln(G/alpha)          CDF fraction, each point
//
// Mean and histogram are exact Laplace tail inversions. The quantile bound is
// the exponential-mechanism utility bound. The CDF bound is a union bound over
// the G noisy bins, each contributing at most (2/eps) ln(G/alpha) to every
// cumulative sum, and is therefore conservative.
namespace psibudget::accuracy {

enum class ErrorUnits { kStatistic, kCount, kQuantileFraction, kCdfFraction };

inline std::string_view ErrorUnitsName(ErrorUnits units) {
  switch (units) {
    case ErrorUnits::kStatistic: return "statistic units";
    case ErrorUnits::kCount: return "count";
    case ErrorUnits::kQuantileFraction: return "quantile fraction";
    case ErrorUnits::kCdfFraction: return "CDF fraction";
  }
  return "statistic units";
}

inline ErrorUnits UnitsFor(StatisticKind kind) {
  switch (kind) {
    case StatisticKind::kMean: return ErrorUnits::kStatistic;
    case StatisticKind::kHistogram: return ErrorUnits::kCount;
    case StatisticKind::kQuantile: return ErrorUnits::kQuantileFraction;
    case StatisticKind::kCdf: return ErrorUnits::kCdfFraction;
  }
  return ErrorUnits::kStatistic;
}

inline constexpr double kDefaultAlpha = 0.05;

// alpha in (0, 0.5]; the reported bound holds with probability 1 - alpha.
class ConfidenceLevel {
 public:
  ConfidenceLevel() = default;

  static Expected<ConfidenceLevel> Create(double alpha) {
    if (!(alpha > 0.0 && alpha <= 0.5)) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "alpha must lie in (0, 0.5]");
    }
    return ConfidenceLevel(alpha);
  }

  // From a percentage such as 95 or 98.
  static Expected<ConfidenceLevel> FromPercent(double percent) {
    return Create(1.0 - percent / 100.0);
  }

  double alpha() const { return alpha_; }

  friend bool operator==(ConfidenceLevel, ConfidenceLevel) = default;

 private:
  explicit ConfidenceLevel(double alpha) : alpha_(alpha) {}
  double alpha_ = kDefaultAlpha;
};

struct ErrorEstimate {
  double value = 0.0;
  ErrorUnits units = ErrorUnits::kStatistic;
  ConfidenceLevel confidence;
};

// Everything a bound depends on besides epsilon and alpha.
struct ErrorModel {
  StatisticKind kind = StatisticKind::kMean;
  VariableMetadata meta;
  size_t n = 0;

  friend bool operator==(const ErrorModel&, const ErrorModel&) = default;
};

namespace internal {

// Error = coefficient / epsilon for every kind.
inline Expected<double> Coefficient(const ErrorModel& model, double alpha) {
  const double n = static_cast<double>(model.n);
  const bool needs_n = model.kind != StatisticKind::kHistogram;
  if (needs_n && model.n == 0) {
    return MakeError(ErrorCode::kEmptyDataset,
                     "error bounds need at least one row");
  }
  switch (model.kind) {
    case StatisticKind::kMean:
      return (model.meta.upper - model.meta.lower) * std::log(1.0 / alpha) / n;
    case StatisticKind::kHistogram:
      return 2.0 * std::log(1.0 / alpha);
    case StatisticKind::kQuantile:
    case StatisticKind::kCdf: {
      const int grid = model.meta.grid_cells == 0
                           ? DefaultGridCells(model.kind)
                           : model.meta.grid_cells;
      const double g = static_cast<double>(grid);
      const double per_bin = 2.0 * std::log(g / alpha) / n;
      return model.kind == StatisticKind::kCdf ? g * per_bin : per_bin;
    }
  }
  return MakeError(ErrorCode::kInvalidArgument, "unknown statistic kind");
}

}  // namespace internal

// Worst-case error of `model` released with `epsilon`. Zero epsilon gives an
// infinite bound (the statistic is starved of budget).
inline Expected<ErrorEstimate> ErrorBound(const ErrorModel& model,
                                          double epsilon,
                                          ConfidenceLevel confidence) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "epsilon must be nonnegative and finite");
  }
  PSIBUDGET_ASSIGN_OR_RETURN(double coefficient,
                             internal::Coefficient(model, confidence.alpha()));
  const double value = epsilon == 0.0
                           ? std::numeric_limits<double>::infinity()
                           : coefficient / epsilon;
  return ErrorEstimate{value, UnitsFor(model.kind), confidence};
}

// Epsilon needed so that ErrorBound(model, result, confidence) == target.
inline Expected<double> EpsilonForError(const ErrorModel& model,
                                        double target_error,
                                        ConfidenceLevel confidence) {
  if (!(target_error > 0.0) || !std::isfinite(target_error)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "target error must be positive and finite");
  }
  PSIBUDGET_ASSIGN_OR_RETURN(double coefficient,
                             internal::Coefficient(model, confidence.alpha()));
  return coefficient / target_error;
}

}  // namespace psibudget::accuracy

#endif  // PSIBUDGET_ACCURACY_HPP
