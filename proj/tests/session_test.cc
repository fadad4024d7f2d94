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
#include "psibudget/session.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "oracles.hpp"
#include "psibudget/persistence.hpp"
#include "test_files.hpp"

namespace psibudget::session {
namespace {

using ::psibudget::testing::SurveyCsv;
using ::psibudget::testing::TempDir;
using ::testing::Contains;
using ::testing::ElementsAre;
using ::testing::HasSubstr;

constexpr char kSmallCsv[] =
    "age,race\n"
    "10,white\n"
    "20,black\n"
    "30,\n"
    "NA,purple\n"
    "200,white\n";

VariableMetadata Age() {
  VariableMetadata m;
  m.lower = 0;
  m.upper = 150;
  return m;
}

VariableMetadata Race() {
  VariableMetadata m;
  m.kind = VariableKind::kCategorical;
  m.categories = {"white", "black", "asian"};
  return m;
}

Session Open(const std::string& path, double eps = 1.0, double delta = 1e-6,
             std::optional<std::uint64_t> population = std::nullopt) {
  auto handle = data::DatasetHandle::LoadCsv(path);
  EXPECT_TRUE(handle.ok());
  auto created = CreateSession(*handle, eps, delta, population, false);
  EXPECT_TRUE(created.ok()) << created.error().ToString();
  return std::move(created->session);
}

std::string Add(Session& s, const std::string& var, StatisticKind kind,
                const VariableMetadata& meta, double p = 0.5) {
  auto id = AddStatistic(s, {var, kind, p, meta});
  EXPECT_TRUE(id.ok()) << id.error().ToString();
  return id.ok() ? *id : "";
}

TEST(CreateSessionTest, SamplingAmplifiesInternalBudget) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(1000)), 0.5, 1e-6, 350000);
  EXPECT_NEAR(s.allocation.internal.epsilon, std::log(176.0), 1e-12);
  EXPECT_DOUBLE_EQ(s.allocation.internal.delta, 350 * 1e-6);
  EXPECT_DOUBLE_EQ(s.allocation.usable_epsilon(), s.allocation.internal.epsilon);
  EXPECT_EQ(s.id.size(), 16u);
  EXPECT_EQ(s.phase, Phase::kConfiguring);
}

TEST(CreateSessionTest, WithoutPopulationInternalEqualsGlobal) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(10)), 0.25, 1e-6);
  EXPECT_EQ(s.allocation.internal, (budget::PrivacyBudget{0.25, 1e-6}));
  EXPECT_FALSE(s.sampling.has_value());
}

TEST(CreateSessionTest, WarningsNeedAcknowledgment) {
  TempDir dir;
  auto handle = *data::DatasetHandle::LoadCsv(dir.Write("s.csv", SurveyCsv(10)));
  auto refused = CreateSession(handle, 1e-5, 0.05, std::nullopt, false);
  ASSERT_FALSE(refused.ok());
  EXPECT_EQ(refused.error().code, ErrorCode::kAcknowledgmentRequired);
  EXPECT_THAT(refused.error().details, Contains(budget::kSwapSuspected));
  auto accepted = CreateSession(handle, 1e-5, 0.05, std::nullopt, true);
  ASSERT_TRUE(accepted.ok());
  EXPECT_THAT(accepted->warnings, Contains(budget::kSwapSuspected));
}

TEST(CreateSessionTest, RejectionsCannotBeAcknowledged) {
  TempDir dir;
  auto handle = *data::DatasetHandle::LoadCsv(dir.Write("s.csv", SurveyCsv(10)));
  EXPECT_EQ(CreateSession(handle, 0.0, 1e-6, std::nullopt, true).error().code,
            ErrorCode::kParamsRejected);
  EXPECT_EQ(CreateSession(handle, 1.0, 1.0, std::nullopt, true).error().code,
            ErrorCode::kParamsRejected);
  EXPECT_EQ(CreateSession(handle, 1.0, 1e-6, 5, true).error().code,
            ErrorCode::kInvalidArgument);
}

TEST(AddStatisticTest, SplitsEvenly) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(100)), 0.5);
  EXPECT_EQ(Add(s, "age", StatisticKind::kMean, Age()), "s1");
  EXPECT_DOUBLE_EQ(s.allocation.Find("s1")->epsilon, 0.5);
  EXPECT_EQ(Add(s, "race", StatisticKind::kHistogram, Race()), "s2");
  EXPECT_DOUBLE_EQ(s.allocation.Find("s1")->epsilon, 0.25);
  EXPECT_DOUBLE_EQ(s.allocation.Find("s2")->epsilon, 0.25);
  Add(s, "age", StatisticKind::kQuantile, Age(), 0.9);
  Add(s, "age", StatisticKind::kCdf, Age());
  for (const auto& a : s.allocation.allocations) {
    EXPECT_DOUBLE_EQ(a.epsilon, 0.125);
  }
  EXPECT_EQ(s.FindStatistic("s3")->schema.metadata.grid_cells, 100);
  EXPECT_EQ(s.FindStatistic("s4")->schema.metadata.grid_cells, 20);
  EXPECT_EQ(s.FindStatistic("s1")->schema.metadata.grid_cells, 0);
}

TEST(AddStatisticTest, RejectsBadRequests) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(100)));
  EXPECT_EQ(AddStatistic(s, {"height", StatisticKind::kMean, 0.5, Age()})
                .error()
                .code,
            ErrorCode::kNotFound);
  EXPECT_EQ(AddStatistic(s, {"race", StatisticKind::kQuantile, 0.5, Race()})
                .error()
                .code,
            ErrorCode::kInvalidArgument);
  EXPECT_FALSE(AddStatistic(s, {"age", StatisticKind::kQuantile, 1.0, Age()}).ok());
  VariableMetadata reversed = Age();
  std::swap(reversed.lower, reversed.upper);
  auto bad = AddStatistic(s, {"age", StatisticKind::kMean, 0.5, reversed});
  ASSERT_FALSE(bad.ok());
  EXPECT_THAT(bad.error().message, HasSubstr("lower bound"));
  EXPECT_TRUE(s.statistics.empty());
  EXPECT_EQ(s.next_statistic, 1u);
}

TEST(AddStatisticTest, EmptyDatasetCannotRelease) {
  TempDir dir;
  Session s = Open(dir.Write("h.csv", "age,race\n"));
  EXPECT_EQ(AddStatistic(s, {"age", StatisticKind::kMean, 0.5, Age()})
                .error()
                .code,
            ErrorCode::kEmptyDataset);
}

TEST(DeleteStatisticTest, SurvivorTakesEverything) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(100)), 0.5);
  Add(s, "age", StatisticKind::kMean, Age());
  Add(s, "race", StatisticKind::kHistogram, Race());
  ASSERT_TRUE(DeleteStatistic(s, "s1").ok());
  EXPECT_DOUBLE_EQ(s.allocation.Find("s2")->epsilon, 0.5);
  EXPECT_EQ(DeleteStatistic(s, "s1").error().code, ErrorCode::kNotFound);
  ASSERT_TRUE(DeleteStatistic(s, "s2").ok());
  EXPECT_TRUE(s.allocation.allocations.empty());
  EXPECT_DOUBLE_EQ(s.allocation.unspent, 0.5);
  EXPECT_EQ(Add(s, "age", StatisticKind::kMean, Age()), "s3");
}

TEST(ConfidenceTest, RaisingConfidenceScalesErrors) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(100)));
  Add(s, "age", StatisticKind::kMean, Age());
  const double e95 = ErrorTable(s)[0].error.value;
  ASSERT_TRUE(SetConfidence(s, 0.02).ok());
  const double e98 = ErrorTable(s)[0].error.value;
  EXPECT_NEAR(e98 / e95, std::log(50.0) / std::log(20.0), 1e-12);
  EXPECT_EQ(SetConfidence(s, 0.0).error().code, ErrorCode::kInvalidArgument);
  EXPECT_DOUBLE_EQ(s.confidence.alpha(), 0.02);
}

TEST(UpdateParamsTest, PopulationCannotGrow) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(100)), 0.5, 1e-6, 10000);
  Add(s, "age", StatisticKind::kMean, Age());
  EXPECT_EQ(UpdateParams(s, 0.5, 1e-6, PopulationEdit::Set(20000), false)
                .error()
                .code,
            ErrorCode::kPopulationIncrease);
  ASSERT_TRUE(UpdateParams(s, 0.5, 1e-6, PopulationEdit::Clear(), false).ok());
  EXPECT_DOUBLE_EQ(s.allocation.Find("s1")->epsilon, 0.5);
  EXPECT_EQ(UpdateParams(s, 0.5, 1e-6, PopulationEdit::Set(20000), false)
                .error()
                .code,
            ErrorCode::kPopulationIncrease);
  ASSERT_TRUE(UpdateParams(s, 0.5, 1e-6, PopulationEdit::Set(5000), false).ok());
  EXPECT_NEAR(s.allocation.Find("s1")->epsilon, std::log1p(25.0), 1e-12);
}

TEST(UpdateParamsTest, HeldStatisticsWarn) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(100)), 0.5);
  Add(s, "age", StatisticKind::kMean, Age());
  Add(s, "race", StatisticKind::kHistogram, Race());
  ASSERT_TRUE(SetHold(s, "s1", true).ok());
  auto warnings = UpdateParams(s, 0.25, 1e-6, PopulationEdit::Keep(), false);
  ASSERT_TRUE(warnings.ok());
  EXPECT_THAT(*warnings, Contains(budget::kHeldRescaled));
  EXPECT_DOUBLE_EQ(s.allocation.Find("s1")->epsilon, 0.125);
  EXPECT_EQ(UpdateParams(s, 2.0, 1e-6, PopulationEdit::Keep(), false)
                .error()
                .code,
            ErrorCode::kAcknowledgmentRequired);
  EXPECT_DOUBLE_EQ(s.global.epsilon, 0.25);
}

TEST(FinalizeTest, ZeroNoiseMatchesPlainStatistics) {
  TempDir dir;
  Session s = Open(dir.Write("small.csv", kSmallCsv));
  Add(s, "age", StatisticKind::kMean, Age());
  Add(s, "race", StatisticKind::kHistogram, Race());
  Add(s, "age", StatisticKind::kQuantile, Age(), 0.5);
  Add(s, "age", StatisticKind::kCdf, Age());
  Add(s, "age", StatisticKind::kHistogram, Age());
  auto rng = RandomSource::ZeroNoise();
  auto releases = Finalize(s, rng);
  ASSERT_TRUE(releases.ok()) << releases.error().ToString();
  ASSERT_EQ(releases->size(), 5u);

  // Missing age imputed at the midpoint 75; 200 clips to 150.
  const std::vector<double> ages = {10, 20, 30, 75, 200};
  EXPECT_DOUBLE_EQ(std::get<double>((*releases)[0].value),
                   oracle::Mean(ages, 0, 150));

  const auto counts = oracle::CategoryCounts(
      {"white", "black", std::nullopt, "purple", "white"},
      {"white", "black", "asian"});
  const auto& bins = std::get<std::vector<mechanisms::HistogramBin>>(
      (*releases)[1].value);
  ASSERT_EQ(bins.size(), 4u);
  for (size_t i = 0; i < bins.size(); ++i) {
    EXPECT_EQ(bins[i].count, counts[i]);
  }
  EXPECT_EQ(bins.back().label, mechanisms::kUncategorizedLabel);

  const auto utilities = oracle::QuantileUtilities(ages, 0.5, 0, 150, 100);
  const size_t best =
      std::max_element(utilities.begin(), utilities.end()) - utilities.begin();
  const auto grid = oracle::Grid(0, 150, 100);
  const double left = best == 0 ? 0.0 : grid[best - 1];
  EXPECT_DOUBLE_EQ(std::get<double>((*releases)[2].value),
                   (left + grid[best]) / 2);

  const auto cdf = oracle::EmpiricalCdf(ages, 0, 150, 20);
  const auto& points =
      std::get<std::vector<mechanisms::CdfPoint>>((*releases)[3].value);
  ASSERT_EQ(points.size(), 20u);
  for (size_t i = 0; i < points.size(); ++i) {
    EXPECT_DOUBLE_EQ(points[i].fraction, cdf[i]);
  }

  const auto ranks = oracle::RankCounts(ages, 0, 150, 10);
  const auto& cells = std::get<std::vector<mechanisms::HistogramBin>>(
      (*releases)[4].value);
  ASSERT_EQ(cells.size(), 10u);
  for (size_t i = 0; i < cells.size(); ++i) {
    EXPECT_EQ(cells[i].count, ranks[i] - (i == 0 ? 0 : ranks[i - 1]));
  }

  EXPECT_EQ(s.phase, Phase::kFinalized);
  EXPECT_EQ(s.dataset.firewall_state(), data::FirewallState::kOpened);
  EXPECT_EQ(s.dataset.read_audit(), 10u);
  EXPECT_EQ((*releases)[0].n, 5u);
  EXPECT_EQ((*releases)[0].engine_version, kEngineVersion);
}

TEST(FinalizeTest, SecondCallReturnsStoredReleases) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(200)));
  Add(s, "age", StatisticKind::kMean, Age());
  Add(s, "race", StatisticKind::kHistogram, Race());
  auto rng = RandomSource::Seeded(7);
  ASSERT_TRUE(Finalize(s, rng).ok());
  const std::string first = persistence::ReleaseDocument(s).dump();
  const std::uint64_t audit = s.dataset.read_audit();
  auto again = Finalize(s, rng);
  ASSERT_TRUE(again.ok());
  EXPECT_EQ(persistence::ReleaseDocument(s).dump(), first);
  EXPECT_EQ(s.dataset.read_audit(), audit);
  EXPECT_EQ(AddStatistic(s, {"age", StatisticKind::kMean, 0.5, Age()})
                .error()
                .code,
            ErrorCode::kFinalized);
  EXPECT_EQ(SetHold(s, "s1", true).error().code, ErrorCode::kFinalized);
  EXPECT_EQ(SetConfidence(s, 0.1).error().code, ErrorCode::kFinalized);
}

TEST(FinalizeTest, BadCellLeavesSessionUntouched) {
  TempDir dir;
  Session s = Open(dir.Write("bad.csv", "age,race\n10,white\nabc,black\n"));
  Add(s, "race", StatisticKind::kHistogram, Race());
  Add(s, "age", StatisticKind::kMean, Age());
  const std::string before = persistence::SerializeSession(s);
  auto rng = RandomSource::ZeroNoise();
  auto releases = Finalize(s, rng);
  ASSERT_FALSE(releases.ok());
  EXPECT_EQ(releases.error().code, ErrorCode::kMalformedData);
  EXPECT_THAT(releases.error().message, HasSubstr("line 3"));
  EXPECT_THAT(releases.error().message, HasSubstr("'age'"));
  EXPECT_EQ(persistence::SerializeSession(s), before);
  EXPECT_EQ(s.dataset.firewall_state(), data::FirewallState::kSealed);
  EXPECT_TRUE(s.releases.empty());
}

TEST(FinalizeTest, NeedsStatisticsAndBudget) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(20)));
  auto rng = RandomSource::ZeroNoise();
  EXPECT_EQ(Finalize(s, rng).error().code, ErrorCode::kInvalidArgument);
}

TEST(FinalizeTest, ChangedFileIsRefused) {
  TempDir dir;
  const auto path = dir.Write("s.csv", SurveyCsv(20));
  Session s = Open(path);
  Add(s, "age", StatisticKind::kMean, Age());
  dir.Write("s.csv", SurveyCsv(20, 9));
  auto rng = RandomSource::ZeroNoise();
  EXPECT_EQ(Finalize(s, rng).error().code, ErrorCode::kDigestMismatch);
  EXPECT_EQ(s.phase, Phase::kConfiguring);
}

TEST(ErrorTableTest, DoesNotDependOnRowOrder) {
  TempDir dir;
  const std::string csv = SurveyCsv(300);
  std::vector<std::string> lines;
  size_t start = csv.find('\n') + 1;
  while (start < csv.size()) {
    const size_t end = csv.find('\n', start);
    lines.push_back(csv.substr(start, end - start + 1));
    start = end + 1;
  }
  std::reverse(lines.begin(), lines.end());
  std::string shuffled = csv.substr(0, csv.find('\n') + 1);
  for (const auto& l : lines) shuffled += l;

  auto build = [&](const std::string& path) {
    Session s = Open(path, 0.7);
    Add(s, "age", StatisticKind::kMean, Age());
    Add(s, "race", StatisticKind::kHistogram, Race());
    Add(s, "age", StatisticKind::kQuantile, Age(), 0.25);
    EXPECT_TRUE(SetErrorTarget(s, "s1", 4.0).ok());
    return persistence::ErrorTableToJson(s).dump();
  };
  EXPECT_EQ(build(dir.Write("a.csv", csv)), build(dir.Write("b.csv", shuffled)));
}

TEST(PersistenceTest, SaveLoadSaveIsStable) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(100)), 0.5, 1e-6, 4000);
  Add(s, "age", StatisticKind::kMean, Age());
  Add(s, "race", StatisticKind::kHistogram, Race());
  Add(s, "age", StatisticKind::kCdf, Age());
  ASSERT_TRUE(SetErrorTarget(s, "s1", 3.0).ok());
  ASSERT_TRUE(SetHold(s, "s1", true).ok());
  ASSERT_TRUE(SetReserve(s, 0.1).ok());
  ASSERT_TRUE(SetConfidence(s, 0.1).ok());
  const auto file = dir.File("session.json");
  ASSERT_TRUE(persistence::SaveSession(s, file).ok());
  auto loaded = persistence::LoadSession(file);
  ASSERT_TRUE(loaded.ok()) << loaded.error().ToString();
  EXPECT_EQ(persistence::SerializeSession(*loaded),
            persistence::SerializeSession(s));
  EXPECT_EQ(loaded->allocation.allocations.size(), 3u);
  EXPECT_EQ(loaded->next_statistic, 4u);
}

TEST(PersistenceTest, FinalizedSessionReloadsReadOnly) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(100)));
  Add(s, "age", StatisticKind::kQuantile, Age(), 0.5);
  Add(s, "race", StatisticKind::kHistogram, Race());
  auto rng = RandomSource::Seeded(3);
  ASSERT_TRUE(Finalize(s, rng).ok());
  const auto file = dir.File("session.json");
  ASSERT_TRUE(persistence::SaveSession(s, file).ok());
  auto loaded = persistence::LoadSession(file);
  ASSERT_TRUE(loaded.ok()) << loaded.error().ToString();
  EXPECT_EQ(loaded->phase, Phase::kFinalized);
  EXPECT_EQ(persistence::ReleaseDocument(*loaded).dump(),
            persistence::ReleaseDocument(s).dump());
  EXPECT_EQ(DeleteStatistic(*loaded, "s1").error().code, ErrorCode::kFinalized);
  auto again = Finalize(*loaded, rng);
  ASSERT_TRUE(again.ok());
  EXPECT_EQ(loaded->dataset.read_audit(), s.dataset.read_audit());
}

TEST(PersistenceTest, TamperedDataIsRefused) {
  TempDir dir;
  const auto path = dir.Write("s.csv", SurveyCsv(100));
  Session s = Open(path);
  Add(s, "age", StatisticKind::kMean, Age());
  const auto file = dir.File("session.json");
  ASSERT_TRUE(persistence::SaveSession(s, file).ok());
  dir.Write("s.csv", SurveyCsv(100) + "1,female,1,none,white,single\n");
  EXPECT_EQ(persistence::LoadSession(file).error().code,
            ErrorCode::kDigestMismatch);
}

TEST(PersistenceTest, InconsistentBudgetIsRefused) {
  TempDir dir;
  Session s = Open(dir.Write("s.csv", SurveyCsv(100)));
  Add(s, "age", StatisticKind::kMean, Age());
  auto json = persistence::SessionToJson(s);
  json["statistics"][0]["epsilon"] = 5.0;
  EXPECT_EQ(persistence::SessionFromJson(json).error().code,
            ErrorCode::kSchemaViolation);

  json = persistence::SessionToJson(s);
  json["dataset"]["firewall"] = "opened";
  EXPECT_FALSE(persistence::SessionFromJson(json).ok());

  json = persistence::SessionToJson(s);
  json["format"] = "something/2";
  EXPECT_FALSE(persistence::SessionFromJson(json).ok());
}

}  // namespace
}  // namespace psibudget::session
