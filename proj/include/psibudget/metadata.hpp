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
#ifndef PSIBUDGET_METADATA_HPP
#define PSIBUDGET_METADATA_HPP

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "psibudget/status.hpp"

namespace psibudget {

enum class VariableKind { kNumerical, kCategorical, kBoolean };

enum class StatisticKind { kMean, kHistogram, kQuantile, kCdf };

inline std::string_view VariableKindName(VariableKind kind) {
  switch (kind) {
    case VariableKind::kNumerical: return "numerical";
    case VariableKind::kCategorical: return "categorical";
    case VariableKind::kBoolean: return "boolean";
  }
  return "numerical";
}

inline std::optional<VariableKind> ParseVariableKind(std::string_view name) {
  if (name == "numerical") return VariableKind::kNumerical;
  if (name == "categorical") return VariableKind::kCategorical;
  if (name == "boolean") return VariableKind::kBoolean;
  return std::nullopt;
}

inline std::string_view StatisticKindName(StatisticKind kind) {
  switch (kind) {
    case StatisticKind::kMean: return "mean";
    case StatisticKind::kHistogram: return "histogram";
    case StatisticKind::kQuantile: return "quantile";
    case StatisticKind::kCdf: return "cdf";
  }
  return "mean";
}

inline std::optional<StatisticKind> ParseStatisticKind(std::string_view name) {
  if (name == "mean") return StatisticKind::kMean;
  if (name == "histogram") return StatisticKind::kHistogram;
  if (name == "quantile") return StatisticKind::kQuantile;
  if (name == "cdf") return StatisticKind::kCdf;
  return std::nullopt;
}

// Grid sizes used when the metadata leaves grid_cells unset.
inline constexpr int kDefaultQuantileGrid = 100;
inline constexpr int kDefaultCdfGrid = 20;
inline constexpr int kDefaultHistogramGrid = 10;

inline int DefaultGridCells(StatisticKind kind) {
  switch (kind) {
    case StatisticKind::kQuantile: return kDefaultQuantileGrid;
    case StatisticKind::kCdf: return kDefaultCdfGrid;
    default: return kDefaultHistogramGrid;
  }
}

// Data-independent description of one variable. Bounds apply to numerical
// variables, categories to categorical and boolean ones. grid_cells == 0
// means "use the statistic's default".
struct VariableMetadata {
  VariableKind kind = VariableKind::kNumerical;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::string> categories;
  int grid_cells = 0;

  bool is_numerical() const { return kind == VariableKind::kNumerical; }
  double midpoint() const { return lower + (upper - lower) / 2.0; }

  friend bool operator==(const VariableMetadata&,
                         const VariableMetadata&) = default;
};

// Structural checks only; never looks at data. Each message says how to fix
// the problem.
inline std::vector<std::string> MetadataProblems(const VariableMetadata& meta) {
  std::vector<std::string> problems;
  if (meta.is_numerical()) {
    if (!std::isfinite(meta.lower) || !std::isfinite(meta.upper)) {
      problems.push_back(
          "bounds must be finite numbers; supply a plausible a priori range");
    } else if (!(meta.lower < meta.upper)) {
      problems.push_back(
          "lower bound must be strictly below upper bound; swap or widen "
          "the range");
    }
  } else {
    if (meta.categories.empty()) {
      problems.push_back(
          "at least one category label is required; list every possible "
          "value");
    }
    std::set<std::string> seen;
    for (const auto& label : meta.categories) {
      if (!seen.insert(label).second) {
        problems.push_back("category label '" + label +
                           "' is listed more than once; remove duplicates");
      }
    }
    if (meta.kind == VariableKind::kBoolean && meta.categories.size() != 2) {
      problems.push_back(
          "a boolean variable needs exactly two labels, e.g. 0 and 1");
    }
  }
  if (meta.grid_cells != 0 && meta.grid_cells < 2) {
    problems.push_back("grid_cells must be at least 2");
  }
  return problems;
}

inline Status CheckMetadata(const VariableMetadata& meta) {
  auto problems = MetadataProblems(meta);
  if (problems.empty()) return OkStatus();
  std::string message = problems.front();
  return MakeError(ErrorCode::kInvalidArgument, message, std::move(problems));
}

// Right edges of `cells` equal-width cells covering [lower, upper]. The last
// edge is exactly `upper`.
inline std::vector<double> GridRightEdges(double lower, double upper,
                                          int cells) {
  std::vector<double> edges(static_cast<size_t>(cells));
  const double width = (upper - lower) / cells;
  for (int c = 0; c < cells; ++c) {
    edges[static_cast<size_t>(c)] = lower + (c + 1) * width;
  }
  edges.back() = upper;
  return edges;
}

}  // namespace psibudget

#endif  // PSIBUDGET_METADATA_HPP
