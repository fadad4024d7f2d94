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
#ifndef PSIBUDGET_MECHANISMS_HPP
#define PSIBUDGET_MECHANISMS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psibudget/metadata.hpp"
#include "psibudget/random.hpp"
#include "psibudget/status.hpp"

// Pure-epsilon mechanisms for the supported statistics. Neighboring datasets
// differ by replacing one row, and the row count n is public.
namespace psibudget::mechanisms {

inline constexpr char kUncategorizedLabel[] = "uncategorized";

// Laplace scale b, always positive and finite.
class NoiseScale {
 public:
  static Expected<NoiseScale> Create(double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "noise scale must be positive and finite");
    }
    return NoiseScale(scale);
  }

  double value() const { return scale_; }

 private:
  explicit NoiseScale(double scale) : scale_(scale) {}
  double scale_;
};

struct HistogramBin {
  std::string label;
  double count = 0.0;
};

struct CdfPoint {
  double x = 0.0;
  double fraction = 0.0;
};

namespace internal {

inline Status CheckEpsilon(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "epsilon must be positive and finite");
  }
  return OkStatus();
}

inline Status CheckNumerical(const VariableMetadata& meta) {
  if (!meta.is_numerical()) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "statistic requires a numerical variable");
  }
  return CheckMetadata(meta);
}

inline Expected<int> ResolveGrid(const VariableMetadata& meta,
                                 StatisticKind kind) {
  const int cells =
      meta.grid_cells == 0 ? DefaultGridCells(kind) : meta.grid_cells;
  if (cells < 2) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "grid_cells must be at least 2");
  }
  return cells;
}

// Index of the cell (lower + c*w, lower + (c+1)*w] holding x; the first cell
// also holds `lower`. Input must already be clipped.
inline int CellIndex(std::span<const double> right_edges, double x) {
  auto it = std::lower_bound(right_edges.begin(), right_edges.end(), x);
  if (it == right_edges.end()) return static_cast<int>(right_edges.size()) - 1;
  return static_cast<int>(it - right_edges.begin());
}

inline std::vector<double> CellCounts(std::span<const double> clipped,
                                      std::span<const double> right_edges) {
  std::vector<double> counts(right_edges.size(), 0.0);
  for (double x : clipped) {
    counts[static_cast<size_t>(CellIndex(right_edges, x))] += 1.0;
  }
  return counts;
}

inline std::string FormatCellLabel(double left, double right, bool first) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s%.6g, %.6g]", first ? "[" : "(", left,
                right);
  return buf;
}

}  // namespace internal

// Maps every value into [lower, upper]; in-range values pass through.
inline std::vector<double> ClipNumeric(std::span<const double> values,
                                       const VariableMetadata& meta) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(std::clamp(v, meta.lower, meta.upper));
  return out;
}

// Missing numerical values are replaced by the midpoint of the declared range
// so that n stays fixed and the rule stays data-independent.
inline std::vector<double> ImputeMissing(
    std::span<const std::optional<double>> values,
    const VariableMetadata& meta) {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(v.value_or(meta.midpoint()));
  return out;
}

// One draw from Laplace(0, scale) by inverse CDF. Zero under the test hook.
inline double SampleLaplace(NoiseScale scale, RandomSource& rng) {
  if (rng.zero_noise()) return 0.0;
  const double centered = rng.Uniform() - 0.5;
  const double magnitude = -scale.value() * std::log1p(-2.0 * std::abs(centered));
  return centered < 0.0 ? -magnitude : magnitude;
}

inline Expected<NoiseScale> MeanNoiseScale(const VariableMetadata& meta,
                                           size_t n, double epsilon) {
  PSIBUDGET_RETURN_IF_ERROR(internal::CheckEpsilon(epsilon));
  if (n == 0) {
    return MakeError(ErrorCode::kEmptyDataset, "mean of an empty dataset");
  }
  return NoiseScale::Create((meta.upper - meta.lower) /
                            (static_cast<double>(n) * epsilon));
}

// The count vector moves by at most 2 in L1 when one row is replaced.
inline Expected<NoiseScale> HistogramNoiseScale(double epsilon) {
  PSIBUDGET_RETURN_IF_ERROR(internal::CheckEpsilon(epsilon));
  return NoiseScale::Create(2.0 / epsilon);
}

inline Expected<double> DpMean(std::span<const double> values,
                               const VariableMetadata& meta, double epsilon,
                               RandomSource& rng) {
  PSIBUDGET_RETURN_IF_ERROR(internal::CheckNumerical(meta));
  PSIBUDGET_ASSIGN_OR_RETURN(NoiseScale scale,
                             MeanNoiseScale(meta, values.size(), epsilon));
  double sum = 0.0;
  for (double v : ClipNumeric(values, meta)) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  return mean + SampleLaplace(scale, rng);
}

// Categorical/boolean histogram. Values outside the declared categories, and
// missing values, are counted in a trailing "uncategorized" bin.
inline Expected<std::vector<HistogramBin>> DpHistogram(
    std::span<const std::optional<std::string>> values,
    const VariableMetadata& meta, double epsilon, RandomSource& rng) {
  if (meta.is_numerical()) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "categorical histogram needs categorical metadata");
  }
  PSIBUDGET_RETURN_IF_ERROR(CheckMetadata(meta));
  PSIBUDGET_ASSIGN_OR_RETURN(NoiseScale scale, HistogramNoiseScale(epsilon));

  std::map<std::string, size_t, std::less<>> index;
  std::vector<HistogramBin> bins;
  for (const auto& label : meta.categories) {
    index.emplace(label, bins.size());
    bins.push_back({label, 0.0});
  }
  const size_t uncategorized = bins.size();
  bins.push_back({kUncategorizedLabel, 0.0});

  for (const auto& v : values) {
    size_t bin = uncategorized;
    if (v) {
      if (auto it = index.find(*v); it != index.end()) bin = it->second;
    }
    bins[bin].count += 1.0;
  }
  for (auto& bin : bins) bin.count += SampleLaplace(scale, rng);
  return bins;
}

// Numerical histogram over grid_cells equal-width cells of [lower, upper].
// Clipping routes every value into some cell, so no extra bin is needed.
inline Expected<std::vector<HistogramBin>> DpHistogram(
    std::span<const double> values, const VariableMetadata& meta,
    double epsilon, RandomSource& rng) {
  PSIBUDGET_RETURN_IF_ERROR(internal::CheckNumerical(meta));
  PSIBUDGET_ASSIGN_OR_RETURN(NoiseScale scale, HistogramNoiseScale(epsilon));
  PSIBUDGET_ASSIGN_OR_RETURN(
      int cells, internal::ResolveGrid(meta, StatisticKind::kHistogram));
  const auto edges = GridRightEdges(meta.lower, meta.upper, cells);
  const auto counts = internal::CellCounts(ClipNumeric(values, meta), edges);

  std::vector<HistogramBin> bins;
  bins.reserve(counts.size());
  for (size_t c = 0; c < counts.size(); ++c) {
    const double left = c == 0 ? meta.lower : edges[c - 1];
    bins.push_back({internal::FormatCellLabel(left, edges[c], c == 0),
                    counts[c] + SampleLaplace(scale, rng)});
  }
  return bins;
}

// Exponential mechanism over the quantile grid. Utility of cell c is
// -|#{x <= right_edge(c)} - p*n|, sensitivity 1, selection weight
// exp(epsilon * u / 2). Returns the selected cell index; the zero-noise hook
// returns the first utility maximizer.
inline Expected<int> DpQuantileCell(std::span<const double> values, double p,
                                    const VariableMetadata& meta,
                                    double epsilon, RandomSource& rng) {
  PSIBUDGET_RETURN_IF_ERROR(internal::CheckNumerical(meta));
  PSIBUDGET_RETURN_IF_ERROR(internal::CheckEpsilon(epsilon));
  if (!(p > 0.0 && p < 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "quantile fraction must lie strictly between 0 and 1");
  }
  PSIBUDGET_ASSIGN_OR_RETURN(
      int cells, internal::ResolveGrid(meta, StatisticKind::kQuantile));
  const auto edges = GridRightEdges(meta.lower, meta.upper, cells);
  const auto counts = internal::CellCounts(ClipNumeric(values, meta), edges);
  const double target = p * static_cast<double>(values.size());

  std::vector<double> utility(counts.size());
  double running = 0.0;
  for (size_t c = 0; c < counts.size(); ++c) {
    running += counts[c];
    utility[c] = -std::abs(running - target);
  }
  const auto best = std::max_element(utility.begin(), utility.end());
  if (rng.zero_noise()) return static_cast<int>(best - utility.begin());

  std::vector<double> weight(utility.size());
  double total = 0.0;
  for (size_t c = 0; c < utility.size(); ++c) {
    weight[c] = std::exp(epsilon * (utility[c] - *best) / 2.0);
    total += weight[c];
  }
  double draw = rng.Uniform() * total;
  for (size_t c = 0; c < weight.size(); ++c) {
    draw -= weight[c];
    if (draw < 0.0) return static_cast<int>(c);
  }
  return static_cast<int>(weight.size()) - 1;
}

// Midpoint of the cell chosen by DpQuantileCell.
inline Expected<double> DpQuantile(std::span<const double> values, double p,
                                   const VariableMetadata& meta,
                                   double epsilon, RandomSource& rng) {
  PSIBUDGET_ASSIGN_OR_RETURN(int cell,
                             DpQuantileCell(values, p, meta, epsilon, rng));
  const int cells = meta.grid_cells == 0 ? kDefaultQuantileGrid
                                         : meta.grid_cells;
  const auto edges = GridRightEdges(meta.lower, meta.upper, cells);
  const double left =
      cell == 0 ? meta.lower : edges[static_cast<size_t>(cell) - 1];
  return left + (edges[static_cast<size_t>(cell)] - left) / 2.0;
}

// Clamps to [0, 1] and replaces each value by the running maximum.
inline void EnforceCdfShape(std::span<double> fractions) {
  double floor = 0.0;
  for (double& f : fractions) {
    floor = std::max(floor, std::clamp(f, 0.0, 1.0));
    f = floor;
  }
}

// Noisy cumulative histogram normalized by n, clamped to [0, 1], made
// monotone by a running maximum, with the last grid point pinned to 1.
inline Expected<std::vector<CdfPoint>> DpCdf(std::span<const double> values,
                                             const VariableMetadata& meta,
                                             double epsilon,
                                             RandomSource& rng) {
  PSIBUDGET_RETURN_IF_ERROR(internal::CheckNumerical(meta));
  PSIBUDGET_ASSIGN_OR_RETURN(NoiseScale scale, HistogramNoiseScale(epsilon));
  if (values.empty()) {
    return MakeError(ErrorCode::kEmptyDataset, "CDF of an empty dataset");
  }
  PSIBUDGET_ASSIGN_OR_RETURN(int cells,
                             internal::ResolveGrid(meta, StatisticKind::kCdf));
  const auto edges = GridRightEdges(meta.lower, meta.upper, cells);
  const auto counts = internal::CellCounts(ClipNumeric(values, meta), edges);
  const double n = static_cast<double>(values.size());

  std::vector<double> fractions;
  fractions.reserve(counts.size());
  double cumulative = 0.0;
  for (double count : counts) {
    cumulative += count + SampleLaplace(scale, rng);
    fractions.push_back(cumulative / n);
  }
  EnforceCdfShape(fractions);
  fractions.back() = 1.0;

  std::vector<CdfPoint> cdf;
  cdf.reserve(counts.size());
  for (size_t c = 0; c < counts.size(); ++c) {
    cdf.push_back({edges[c], fractions[c]});
  }
  return cdf;
}

}  // namespace psibudget::mechanisms

#endif  // PSIBUDGET_MECHANISMS_HPP
