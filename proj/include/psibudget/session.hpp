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
#ifndef PSIBUDGET_SESSION_HPP
#define PSIBUDGET_SESSION_HPP

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "psibudget/accuracy.hpp"
#include "psibudget/budget.hpp"
#include "psibudget/data.hpp"
#include "psibudget/mechanisms.hpp"
#include "psibudget/metadata.hpp"
#include "psibudget/random.hpp"
#include "psibudget/status.hpp"

namespace psibudget::session {

inline constexpr char kEngineVersion[] = "psibudget 0.1.0";

enum class Phase { kConfiguring, kFinalized };

inline std::string_view PhaseName(Phase phase) {
  return phase == Phase::kConfiguring ? "configuring" : "finalized";
}

struct StatisticSpec {
  std::string id;
  std::string variable;
  StatisticKind kind = StatisticKind::kMean;
  // Quantile fraction; only meaningful for quantiles.
  double p = 0.5;
  data::VariableSchema schema;
};

using ReleaseValue = std::variant<double, std::vector<mechanisms::HistogramBin>,
                                  std::vector<mechanisms::CdfPoint>>;

struct Release {
  std::string statistic_id;
  StatisticKind kind = StatisticKind::kMean;
  std::string variable;
  double p = 0.5;
  VariableMetadata metadata;
  size_t n = 0;
  double epsilon_spent = 0.0;
  double alpha = accuracy::kDefaultAlpha;
  accuracy::ErrorEstimate error;
  ReleaseValue value;
  std::string released_at;
  std::string engine_version;
};

struct Session {
  explicit Session(data::DatasetHandle handle) : dataset(std::move(handle)) {}

  std::string id;
  data::DatasetHandle dataset;
  budget::PrivacyBudget global;
  std::optional<budget::SamplingInfo> sampling;
  // Largest population size ever declared; later declarations may not exceed
  // it.
  std::optional<std::uint64_t> population_ceiling;
  budget::AllocationState allocation;
  accuracy::ConfidenceLevel confidence;
  std::vector<StatisticSpec> statistics;
  Phase phase = Phase::kConfiguring;
  std::uint64_t next_statistic = 1;
  std::string created_at;
  std::string updated_at;
  std::vector<Release> releases;

  const StatisticSpec* FindStatistic(std::string_view sid) const {
    for (const auto& s : statistics) {
      if (s.id == sid) return &s;
    }
    return nullptr;
  }
};

inline std::string NowUtc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string NewSessionId() {
  auto rng = RandomSource::Secure();
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(rng.NextBits()));
  return buf;
}

namespace internal {

inline Status RequireConfiguring(const Session& s) {
  if (s.phase != Phase::kConfiguring) {
    return MakeError(ErrorCode::kFinalized,
                     "session " + s.id + " is finalized and read-only");
  }
  return OkStatus();
}

inline void Touch(Session& s) { s.updated_at = NowUtc(); }

// Checks a parameter verdict: rejections always block, warnings block until
// acknowledged.
inline Status CheckVerdict(const budget::ParamVerdict& verdict,
                           bool acknowledge_warnings) {
  if (verdict.rejected()) {
    return MakeError(ErrorCode::kParamsRejected,
                     "privacy parameters rejected", verdict.messages);
  }
  if (!verdict.ok() && !acknowledge_warnings) {
    return MakeError(ErrorCode::kAcknowledgmentRequired,
                     "privacy parameters need explicit acknowledgment",
                     verdict.messages);
  }
  return OkStatus();
}

inline Expected<std::optional<budget::SamplingInfo>> MakeSampling(
    const data::DatasetHandle& dataset,
    std::optional<std::uint64_t> population) {
  if (!population) return std::optional<budget::SamplingInfo>{};
  PSIBUDGET_ASSIGN_OR_RETURN(
      budget::SamplingInfo info,
      budget::SamplingInfo::Create(dataset.row_count(), *population));
  return std::optional<budget::SamplingInfo>(info);
}

}  // namespace internal

struct Created {
  Session session;
  std::vector<std::string> warnings;
};

// Opens a configuring session on `dataset` with global budget (epsilon,
// delta). A population size enables secrecy-of-the-sample amplification.
inline Expected<Created> CreateSession(
    data::DatasetHandle dataset, double epsilon, double delta,
    std::optional<std::uint64_t> population_size, bool acknowledge_warnings) {
  const auto verdict = budget::ValidateParams(epsilon, delta);
  PSIBUDGET_RETURN_IF_ERROR(
      internal::CheckVerdict(verdict, acknowledge_warnings));
  PSIBUDGET_ASSIGN_OR_RETURN(auto sampling,
                             internal::MakeSampling(dataset, population_size));

  Session s(std::move(dataset));
  s.id = NewSessionId();
  s.global = {epsilon, delta};
  s.sampling = sampling;
  s.population_ceiling = population_size;
  budget::PrivacyBudget internal = s.global;
  if (sampling) {
    PSIBUDGET_ASSIGN_OR_RETURN(internal,
                               budget::AmplifyBySampling(s.global, *sampling));
  }
  PSIBUDGET_ASSIGN_OR_RETURN(s.allocation,
                             budget::MakeAllocationState(internal));
  s.created_at = NowUtc();
  s.updated_at = s.created_at;
  return Created{std::move(s), verdict.messages};
}

struct StatisticRequest {
  std::string variable;
  StatisticKind kind = StatisticKind::kMean;
  double p = 0.5;
  VariableMetadata metadata;
};

// Adds a statistic and re-splits the budget evenly over unheld statistics.
// Returns the new statistic id.
inline Expected<std::string> AddStatistic(Session& s,
                                          const StatisticRequest& request) {
  PSIBUDGET_RETURN_IF_ERROR(internal::RequireConfiguring(s));
  if (s.dataset.row_count() == 0) {
    return MakeError(ErrorCode::kEmptyDataset,
                     "the dataset has no rows; nothing can be released");
  }
  if (!s.dataset.HasVariable(request.variable)) {
    return MakeError(ErrorCode::kNotFound,
                     "no variable named '" + request.variable + "'");
  }
  data::VariableSchema schema{request.variable, request.metadata.kind,
                              request.metadata};
  PSIBUDGET_RETURN_IF_ERROR(data::ValidateMetadata(schema));
  const bool numerical = schema.metadata.is_numerical();
  if (request.kind != StatisticKind::kHistogram && !numerical) {
    return MakeError(ErrorCode::kInvalidArgument,
                     std::string(StatisticKindName(request.kind)) +
                         " requires a numerical variable");
  }
  if (request.kind == StatisticKind::kQuantile &&
      !(request.p > 0.0 && request.p < 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "quantile fraction must lie strictly between 0 and 1");
  }
  if (numerical && schema.metadata.grid_cells == 0 &&
      request.kind != StatisticKind::kMean) {
    schema.metadata.grid_cells = DefaultGridCells(request.kind);
  }

  StatisticSpec spec;
  spec.id = "s" + std::to_string(s.next_statistic);
  spec.variable = request.variable;
  spec.kind = request.kind;
  spec.p = request.kind == StatisticKind::kQuantile ? request.p : 0.5;
  spec.schema = schema;

  budget::AllocationState next = s.allocation;
  next.allocations.push_back(
      {spec.id, 0.0, false,
       accuracy::ErrorModel{spec.kind, schema.metadata,
                            s.dataset.row_count()}});
  PSIBUDGET_ASSIGN_OR_RETURN(s.allocation, budget::Rebalance(std::move(next)));
  s.statistics.push_back(std::move(spec));
  ++s.next_statistic;
  internal::Touch(s);
  return s.statistics.back().id;
}

inline Status DeleteStatistic(Session& s, std::string_view sid) {
  PSIBUDGET_RETURN_IF_ERROR(internal::RequireConfiguring(s));
  if (s.FindStatistic(sid) == nullptr) {
    return MakeError(ErrorCode::kNotFound,
                     "unknown statistic '" + std::string(sid) + "'");
  }
  budget::AllocationState next = s.allocation;
  std::erase_if(next.allocations,
                [&](const budget::Allocation& a) { return a.id == sid; });
  PSIBUDGET_ASSIGN_OR_RETURN(s.allocation, budget::Rebalance(std::move(next)));
  std::erase_if(s.statistics,
                [&](const StatisticSpec& spec) { return spec.id == sid; });
  internal::Touch(s);
  return OkStatus();
}

inline Status SetConfidence(Session& s, double alpha) {
  PSIBUDGET_RETURN_IF_ERROR(internal::RequireConfiguring(s));
  PSIBUDGET_ASSIGN_OR_RETURN(s.confidence,
                             accuracy::ConfidenceLevel::Create(alpha));
  internal::Touch(s);
  return OkStatus();
}

inline Status SetErrorTarget(Session& s, std::string_view sid,
                             double target_error) {
  PSIBUDGET_RETURN_IF_ERROR(internal::RequireConfiguring(s));
  PSIBUDGET_ASSIGN_OR_RETURN(
      s.allocation,
      budget::SetErrorTarget(s.allocation, sid, target_error, s.confidence));
  internal::Touch(s);
  return OkStatus();
}

inline Status SetHold(Session& s, std::string_view sid, bool held) {
  PSIBUDGET_RETURN_IF_ERROR(internal::RequireConfiguring(s));
  PSIBUDGET_ASSIGN_OR_RETURN(s.allocation,
                             budget::ToggleHold(s.allocation, sid, held));
  internal::Touch(s);
  return OkStatus();
}

inline Expected<std::vector<std::string>> SetReserve(Session& s,
                                                     double fraction) {
  PSIBUDGET_RETURN_IF_ERROR(internal::RequireConfiguring(s));
  PSIBUDGET_ASSIGN_OR_RETURN(budget::BudgetChange change,
                             budget::SetReserve(s.allocation, fraction));
  s.allocation = std::move(change.state);
  internal::Touch(s);
  return change.warnings;
}

// What to do with the population size when parameters are edited.
struct PopulationEdit {
  enum class Action { kKeep, kSet, kClear };
  Action action = Action::kKeep;
  std::uint64_t size = 0;

  static PopulationEdit Keep() { return {}; }
  static PopulationEdit Set(std::uint64_t m) { return {Action::kSet, m}; }
  static PopulationEdit Clear() { return {Action::kClear, 0}; }
};

// The deliberately separate parameter-editing path. Always re-validates, and
// a population size can never grow past the first one declared.
inline Expected<std::vector<std::string>> UpdateParams(
    Session& s, double epsilon, double delta, PopulationEdit population,
    bool acknowledge_warnings) {
  PSIBUDGET_RETURN_IF_ERROR(internal::RequireConfiguring(s));
  const auto verdict = budget::ValidateParams(epsilon, delta);
  PSIBUDGET_RETURN_IF_ERROR(
      internal::CheckVerdict(verdict, acknowledge_warnings));

  std::optional<budget::SamplingInfo> sampling = s.sampling;
  std::optional<std::uint64_t> ceiling = s.population_ceiling;
  switch (population.action) {
    case PopulationEdit::Action::kKeep:
      break;
    case PopulationEdit::Action::kClear:
      sampling.reset();
      break;
    case PopulationEdit::Action::kSet: {
      if (ceiling && population.size > *ceiling) {
        return MakeError(ErrorCode::kPopulationIncrease,
                         "population size was already declared as " +
                             std::to_string(*ceiling) +
                             " and cannot be increased");
      }
      PSIBUDGET_ASSIGN_OR_RETURN(
          sampling, internal::MakeSampling(s.dataset, population.size));
      if (!ceiling) ceiling = population.size;
      break;
    }
  }
  const budget::PrivacyBudget global{epsilon, delta};
  PSIBUDGET_ASSIGN_OR_RETURN(
      budget::BudgetChange change,
      budget::UpdateGlobal(s.allocation, global, sampling));
  s.global = global;
  s.sampling = sampling;
  s.population_ceiling = ceiling;
  s.allocation = std::move(change.state);
  std::vector<std::string> warnings = verdict.messages;
  warnings.insert(warnings.end(), change.warnings.begin(),
                  change.warnings.end());
  internal::Touch(s);
  return warnings;
}

struct ErrorRow {
  std::string id;
  std::string variable;
  StatisticKind kind = StatisticKind::kMean;
  double p = 0.5;
  double epsilon = 0.0;
  bool held = false;
  accuracy::ErrorEstimate error;
};

// The error table: a function of metadata, n, allocations and alpha only.
inline std::vector<ErrorRow> ErrorTable(const Session& s) {
  std::vector<ErrorRow> rows;
  for (const auto& spec : s.statistics) {
    const budget::Allocation* a = s.allocation.Find(spec.id);
    if (a == nullptr) continue;
    ErrorRow row{spec.id, spec.variable, spec.kind, spec.p, a->epsilon,
                 a->held, {}};
    auto bound = accuracy::ErrorBound(a->model, a->epsilon, s.confidence);
    if (bound.ok()) row.error = *bound;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace internal {

struct ColumnCache {
  data::ColumnAccessor& accessor;
  std::map<std::string, std::vector<std::optional<double>>, std::less<>>
      numeric;
  std::map<std::string, std::vector<std::optional<std::string>>, std::less<>>
      labels;

  Expected<const std::vector<std::optional<double>>*> Numeric(
      const std::string& name) {
    if (auto it = numeric.find(name); it != numeric.end()) return &it->second;
    PSIBUDGET_ASSIGN_OR_RETURN(auto column, accessor.NumericColumn(name));
    return &numeric.emplace(name, std::move(column)).first->second;
  }

  Expected<const std::vector<std::optional<std::string>>*> Labels(
      const std::string& name) {
    if (auto it = labels.find(name); it != labels.end()) return &it->second;
    PSIBUDGET_ASSIGN_OR_RETURN(auto column, accessor.LabelColumn(name));
    return &labels.emplace(name, std::move(column)).first->second;
  }
};

inline Expected<ReleaseValue> RunMechanism(const StatisticSpec& spec,
                                           double epsilon, ColumnCache& cache,
                                           RandomSource& rng) {
  const VariableMetadata& meta = spec.schema.metadata;
  if (!meta.is_numerical()) {
    PSIBUDGET_ASSIGN_OR_RETURN(auto* column, cache.Labels(spec.variable));
    PSIBUDGET_ASSIGN_OR_RETURN(
        auto bins, mechanisms::DpHistogram(*column, meta, epsilon, rng));
    return ReleaseValue(std::move(bins));
  }
  PSIBUDGET_ASSIGN_OR_RETURN(auto* raw, cache.Numeric(spec.variable));
  const std::vector<double> values = mechanisms::ImputeMissing(*raw, meta);
  switch (spec.kind) {
    case StatisticKind::kMean: {
      PSIBUDGET_ASSIGN_OR_RETURN(double v,
                                 mechanisms::DpMean(values, meta, epsilon, rng));
      return ReleaseValue(v);
    }
    case StatisticKind::kHistogram: {
      PSIBUDGET_ASSIGN_OR_RETURN(
          auto bins, mechanisms::DpHistogram(std::span<const double>(values),
                                             meta, epsilon, rng));
      return ReleaseValue(std::move(bins));
    }
    case StatisticKind::kQuantile: {
      PSIBUDGET_ASSIGN_OR_RETURN(
          double v, mechanisms::DpQuantile(values, spec.p, meta, epsilon, rng));
      return ReleaseValue(v);
    }
    case StatisticKind::kCdf: {
      PSIBUDGET_ASSIGN_OR_RETURN(auto points,
                                 mechanisms::DpCdf(values, meta, epsilon, rng));
      return ReleaseValue(std::move(points));
    }
  }
  return MakeError(ErrorCode::kInvalidArgument, "unknown statistic kind");
}

}  // namespace internal

// Opens the firewall and runs every mechanism with its allocation. Either
// every statistic is released or the session is left exactly as it was.
// Finalizing an already finalized session returns the stored releases.
inline Expected<std::vector<Release>> Finalize(Session& s, RandomSource& rng) {
  if (s.phase == Phase::kFinalized) return s.releases;
  if (s.statistics.empty()) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "add at least one statistic before finalizing");
  }
  const double usable = s.allocation.usable_epsilon();
  if (s.allocation.spent_epsilon() > usable + budget::kBudgetTolerance) {
    return MakeError(ErrorCode::kInfeasible,
                     "allocations exceed the usable budget");
  }
  for (const auto& a : s.allocation.allocations) {
    if (!(a.epsilon > 0.0)) {
      return MakeError(ErrorCode::kInfeasible,
                       "statistic '" + a.id +
                           "' has no budget; raise its error target or "
                           "delete it");
    }
  }

  data::DatasetHandle handle = s.dataset;
  PSIBUDGET_ASSIGN_OR_RETURN(data::ColumnAccessor accessor,
                             data::OpenForFinalize(handle));
  internal::ColumnCache cache{accessor, {}, {}};

  // Parse every column first so a bad cell stops the run before any noise
  // is drawn.
  for (const auto& spec : s.statistics) {
    if (spec.schema.metadata.is_numerical()) {
      PSIBUDGET_RETURN_IF_ERROR(cache.Numeric(spec.variable));
    } else {
      PSIBUDGET_RETURN_IF_ERROR(cache.Labels(spec.variable));
    }
  }

  const std::string now = NowUtc();
  std::vector<Release> releases;
  for (const auto& spec : s.statistics) {
    const budget::Allocation* a = s.allocation.Find(spec.id);
    PSIBUDGET_ASSIGN_OR_RETURN(
        ReleaseValue value,
        internal::RunMechanism(spec, a->epsilon, cache, rng));
    PSIBUDGET_ASSIGN_OR_RETURN(
        accuracy::ErrorEstimate error,
        accuracy::ErrorBound(a->model, a->epsilon, s.confidence));
    releases.push_back(Release{spec.id, spec.kind, spec.variable, spec.p,
                               spec.schema.metadata, a->model.n, a->epsilon,
                               s.confidence.alpha(), error, std::move(value),
                               now, kEngineVersion});
  }

  s.dataset = std::move(handle);
  s.releases = releases;
  s.phase = Phase::kFinalized;
  s.updated_at = now;
  return releases;
}

}  // namespace psibudget::session

#endif  // PSIBUDGET_SESSION_HPP
