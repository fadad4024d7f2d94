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
#include "psibudget/accuracy.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"

namespace psibudget::accuracy {
namespace {

ErrorModel Model(StatisticKind kind, double lower = 0, double upper = 150,
                 size_t n = 1000, int grid = 0) {
  ErrorModel m;
  m.kind = kind;
  m.meta.kind = kind == StatisticKind::kHistogram ? VariableKind::kCategorical
                                                  : VariableKind::kNumerical;
  m.meta.lower = lower;
  m.meta.upper = upper;
  if (kind == StatisticKind::kHistogram) m.meta.categories = {"a", "b"};
  m.meta.grid_cells = grid;
  m.n = n;
  return m;
}

const ConfidenceLevel k95 = *ConfidenceLevel::Create(0.05);

TEST(ConfidenceLevelTest, Range) {
  EXPECT_EQ(ConfidenceLevel().alpha(), 0.05);
  EXPECT_FALSE(ConfidenceLevel::Create(0.0).ok());
  EXPECT_FALSE(ConfidenceLevel::Create(0.51).ok());
  EXPECT_TRUE(ConfidenceLevel::Create(0.5).ok());
  EXPECT_NEAR(ConfidenceLevel::FromPercent(98)->alpha(), 0.02, 1e-15);
}

// (U-L) ln(1/alpha) / (n eps) = 150 ln 20 / 100.
TEST(ErrorBoundTest, MeanClosedForm) {
  auto e = *ErrorBound(Model(StatisticKind::kMean), 0.1, k95);
  EXPECT_NEAR(e.value, 4.4935984103309865, 1e-12);
  EXPECT_EQ(e.units, ErrorUnits::kStatistic);
}

TEST(ErrorBoundTest, HistogramClosedForm) {
  auto e = *ErrorBound(Model(StatisticKind::kHistogram), 0.5, k95);
  EXPECT_NEAR(e.value, 11.982929094215963, 1e-12);
  EXPECT_EQ(e.units, ErrorUnits::kCount);
}

TEST(ErrorBoundTest, QuantileAndCdfClosedForms) {
  auto q = *ErrorBound(Model(StatisticKind::kQuantile, 0, 150, 1000, 100),
                       0.1, k95);
  EXPECT_NEAR(q.value, 2.0 / (0.1 * 1000) * std::log(100 / 0.05), 1e-12);
  EXPECT_EQ(q.units, ErrorUnits::kQuantileFraction);
  // Default grid for CDFs is 20.
  auto c = *ErrorBound(Model(StatisticKind::kCdf), 0.1, k95);
  EXPECT_NEAR(c.value, 2.0 * 20 / (0.1 * 1000) * std::log(20 / 0.05), 1e-12);
  EXPECT_EQ(c.units, ErrorUnits::kCdfFraction);
}

TEST(ErrorBoundTest, DoublingEpsilonHalvesError) {
  for (auto kind : {StatisticKind::kMean, StatisticKind::kHistogram}) {
    const double a = ErrorBound(Model(kind), 0.2, k95)->value;
    const double b = ErrorBound(Model(kind), 0.4, k95)->value;
    EXPECT_DOUBLE_EQ(b, a / 2);
  }
}

TEST(ErrorBoundTest, ZeroEpsilonIsInfinite) {
  EXPECT_TRUE(std::isinf(ErrorBound(Model(StatisticKind::kMean), 0.0, k95)
                             ->value));
  EXPECT_FALSE(ErrorBound(Model(StatisticKind::kMean), -1.0, k95).ok());
  EXPECT_FALSE(
      ErrorBound(Model(StatisticKind::kMean, 0, 1, 0), 1.0, k95).ok());
}

TEST(EpsilonForErrorTest, StudyTargets) {
  // Mean age off by at most one year.
  EXPECT_NEAR(*EpsilonForError(Model(StatisticKind::kMean), 1.0, k95),
              0.4493598410330986, 1e-12);
  // Each histogram count off by at most 5 people.
  EXPECT_NEAR(*EpsilonForError(Model(StatisticKind::kHistogram), 5.0, k95),
              1.1982929094215964, 1e-12);
}

TEST(EpsilonForErrorTest, RejectsNonPositiveTarget) {
  EXPECT_FALSE(EpsilonForError(Model(StatisticKind::kMean), 0.0, k95).ok());
  EXPECT_FALSE(EpsilonForError(Model(StatisticKind::kMean), -2.0, k95).ok());
}

TEST(EpsilonForErrorTest, RoundTrip) {
  for (auto kind : {StatisticKind::kMean, StatisticKind::kHistogram,
                    StatisticKind::kQuantile, StatisticKind::kCdf}) {
    const auto model = Model(kind);
    const double e = ErrorBound(model, 0.3, k95)->value;
    EXPECT_NEAR(*EpsilonForError(model, e, k95), 0.3, 1e-15);
  }
}

TEST(ErrorBoundTest, MonotoneInEpsilonAndAlpha) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> eps(0.01, 5.0);
  std::uniform_real_distribution<double> alpha(0.001, 0.49);
  for (int i = 0; i < 500; ++i) {
    for (auto kind : {StatisticKind::kMean, StatisticKind::kHistogram,
                      StatisticKind::kQuantile, StatisticKind::kCdf}) {
      const auto model = Model(kind);
      const double e1 = eps(gen);
      const double e2 = e1 * 1.01;
      const double a1 = alpha(gen);
      const double a2 = a1 * 0.99;
      const auto c1 = *ConfidenceLevel::Create(a1);
      const auto c2 = *ConfidenceLevel::Create(a2);
      EXPECT_GT(ErrorBound(model, e1, c1)->value,
                ErrorBound(model, e2, c1)->value);
      EXPECT_LT(ErrorBound(model, e1, c1)->value,
                ErrorBound(model, e1, c2)->value);
    }
  }
}

// 95% -> 98% scales the mean bound by ln 50 / ln 20.
TEST(ErrorBoundTest, ConfidenceRatio) {
  const auto model = Model(StatisticKind::kMean);
  const double a = ErrorBound(model, 0.2, k95)->value;
  const double b =
      ErrorBound(model, 0.2, *ConfidenceLevel::FromPercent(98))->value;
  EXPECT_NEAR(b / a, 1.3058653605207224, 1e-12);
}

}  // namespace
}  // namespace psibudget::accuracy
