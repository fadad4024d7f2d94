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
#ifndef PSIBUDGET_PERSISTENCE_HPP
#define PSIBUDGET_PERSISTENCE_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "psibudget/session.hpp"

// JSON documents for sessions and releases. The raw dataset is referenced by
// path and SHA-256 digest, never embedded.
namespace psibudget::persistence {

using Json = nlohmann::json;

inline constexpr char kSessionFormat[] = "psibudget.session/1";
inline constexpr char kReleaseFormat[] = "psibudget.releases/1";

inline Json NumberOrNull(double v) {
  return std::isfinite(v) ? Json(v) : Json(nullptr);
}

inline Json MetadataToJson(const VariableMetadata& meta) {
  Json j;
  j["kind"] = VariableKindName(meta.kind);
  if (meta.is_numerical()) {
    j["lower"] = meta.lower;
    j["upper"] = meta.upper;
  } else {
    j["categories"] = meta.categories;
  }
  j["grid_cells"] = meta.grid_cells;
  return j;
}

inline Expected<VariableMetadata> MetadataFromJson(const Json& j) {
  if (!j.is_object()) {
    return MakeError(ErrorCode::kSchemaViolation, "metadata must be an object");
  }
  VariableMetadata meta;
  try {
    const auto kind = ParseVariableKind(j.value("kind", "numerical"));
    if (!kind) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "unknown variable kind '" +
                           j.value("kind", std::string()) + "'");
    }
    meta.kind = *kind;
    if (meta.is_numerical()) {
      if (!j.contains("lower") || !j.contains("upper")) {
        return MakeError(ErrorCode::kInvalidArgument,
                         "numerical metadata needs lower and upper bounds");
      }
      meta.lower = j.at("lower").get<double>();
      meta.upper = j.at("upper").get<double>();
    } else {
      meta.categories =
          j.value("categories", std::vector<std::string>{});
    }
    meta.grid_cells = j.value("grid_cells", 0);
  } catch (const Json::exception& e) {
    return MakeError(ErrorCode::kSchemaViolation,
                     std::string("bad metadata: ") + e.what());
  }
  return meta;
}

inline Json BudgetToJson(const budget::PrivacyBudget& b) {
  return Json{{"epsilon", b.epsilon}, {"delta", b.delta}};
}

inline Json ErrorToJson(const accuracy::ErrorEstimate& e) {
  return Json{{"value", NumberOrNull(e.value)},
              {"units", accuracy::ErrorUnitsName(e.units)},
              {"alpha", e.confidence.alpha()}};
}

inline Json ReleaseValueToJson(const session::ReleaseValue& value) {
  if (const double* v = std::get_if<double>(&value)) return *v;
  Json arr = Json::array();
  if (const auto* bins =
          std::get_if<std::vector<mechanisms::HistogramBin>>(&value)) {
    for (const auto& b : *bins) {
      arr.push_back({{"label", b.label}, {"count", b.count}});
    }
  } else {
    for (const auto& p : std::get<std::vector<mechanisms::CdfPoint>>(value)) {
      arr.push_back({{"x", p.x}, {"fraction", p.fraction}});
    }
  }
  return arr;
}

inline session::ReleaseValue ReleaseValueFromJson(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.empty() && j.front().contains("label")) {
    std::vector<mechanisms::HistogramBin> bins;
    for (const auto& b : j) {
      bins.push_back({b.at("label").get<std::string>(),
                      b.at("count").get<double>()});
    }
    return bins;
  }
  std::vector<mechanisms::CdfPoint> points;
  for (const auto& p : j) {
    points.push_back({p.at("x").get<double>(), p.at("fraction").get<double>()});
  }
  return points;
}

inline Json ReleaseToJson(const session::Release& r) {
  Json j;
  j["statistic_id"] = r.statistic_id;
  j["kind"] = StatisticKindName(r.kind);
  j["variable"] = r.variable;
  if (r.kind == StatisticKind::kQuantile) j["p"] = r.p;
  j["metadata"] = MetadataToJson(r.metadata);
  j["n"] = r.n;
  j["epsilon_spent"] = r.epsilon_spent;
  j["delta_spent"] = 0.0;
  j["alpha"] = r.alpha;
  j["error"] = ErrorToJson(r.error);
  j["value"] = ReleaseValueToJson(r.value);
  j["released_at"] = r.released_at;
  j["engine_version"] = r.engine_version;
  return j;
}

inline Expected<session::Release> ReleaseFromJson(const Json& j) {
  try {
    session::Release r;
    r.statistic_id = j.at("statistic_id").get<std::string>();
    const auto kind = ParseStatisticKind(j.at("kind").get<std::string>());
    if (!kind) {
      return MakeError(ErrorCode::kSchemaViolation, "unknown release kind");
    }
    r.kind = *kind;
    r.variable = j.at("variable").get<std::string>();
    r.p = j.value("p", 0.5);
    PSIBUDGET_ASSIGN_OR_RETURN(r.metadata, MetadataFromJson(j.at("metadata")));
    r.n = j.at("n").get<size_t>();
    r.epsilon_spent = j.at("epsilon_spent").get<double>();
    r.alpha = j.at("alpha").get<double>();
    PSIBUDGET_ASSIGN_OR_RETURN(auto confidence,
                               accuracy::ConfidenceLevel::Create(r.alpha));
    const auto& error = j.at("error");
    r.error = {error.at("value").is_null()
                   ? std::numeric_limits<double>::infinity()
                   : error.at("value").get<double>(),
               accuracy::UnitsFor(r.kind), confidence};
    r.value = ReleaseValueFromJson(j.at("value"));
    r.released_at = j.at("released_at").get<std::string>();
    r.engine_version = j.at("engine_version").get<std::string>();
    return r;
  } catch (const Json::exception& e) {
    return MakeError(ErrorCode::kSchemaViolation,
                     std::string("bad release: ") + e.what());
  }
}

inline Json ErrorTableToJson(const session::Session& s) {
  Json rows = Json::array();
  for (const auto& row : session::ErrorTable(s)) {
    Json j{{"id", row.id},
           {"variable", row.variable},
           {"kind", StatisticKindName(row.kind)},
           {"epsilon", row.epsilon},
           {"held", row.held},
           {"error", ErrorToJson(row.error)}};
    if (row.kind == StatisticKind::kQuantile) j["p"] = row.p;
    rows.push_back(std::move(j));
  }
  return rows;
}

inline Json SessionToJson(const session::Session& s) {
  Json j;
  j["format"] = kSessionFormat;
  j["id"] = s.id;
  j["phase"] = session::PhaseName(s.phase);
  j["created_at"] = s.created_at;
  j["updated_at"] = s.updated_at;
  j["dataset"] = {{"path", s.dataset.path()},
                  {"sha256", s.dataset.digest()},
                  {"header", s.dataset.header()},
                  {"row_count", s.dataset.row_count()},
                  {"firewall", data::FirewallStateName(
                                   s.dataset.firewall_state())},
                  {"read_audit", s.dataset.read_audit()}};
  j["global"] = BudgetToJson(s.global);
  j["sampling"] = s.sampling
                      ? Json{{"sample_size", s.sampling->sample_size},
                             {"population_size", s.sampling->population_size}}
                      : Json(nullptr);
  j["population_ceiling"] =
      s.population_ceiling ? Json(*s.population_ceiling) : Json(nullptr);
  j["internal"] = BudgetToJson(s.allocation.internal);
  j["reserve_fraction"] = s.allocation.reserve_fraction;
  j["unspent_epsilon"] = s.allocation.unspent;
  j["alpha"] = s.confidence.alpha();
  j["next_statistic"] = s.next_statistic;
  Json stats = Json::array();
  for (const auto& spec : s.statistics) {
    const budget::Allocation* a = s.allocation.Find(spec.id);
    Json st{{"id", spec.id},
            {"variable", spec.variable},
            {"kind", StatisticKindName(spec.kind)},
            {"metadata", MetadataToJson(spec.schema.metadata)},
            {"epsilon", a ? a->epsilon : 0.0},
            {"held", a ? a->held : false}};
    if (spec.kind == StatisticKind::kQuantile) st["p"] = spec.p;
    stats.push_back(std::move(st));
  }
  j["statistics"] = std::move(stats);
  Json releases = Json::array();
  for (const auto& r : s.releases) releases.push_back(ReleaseToJson(r));
  j["releases"] = std::move(releases);
  return j;
}

// Rebuilds a session, verifying the dataset digest and the internal
// consistency of the budget fields.
inline Expected<session::Session> SessionFromJson(const Json& j) {
  try {
    if (j.value("format", std::string()) != kSessionFormat) {
      return MakeError(ErrorCode::kSchemaViolation,
                       "not a psibudget session document");
    }
    const Json& d = j.at("dataset");
    const std::string firewall = d.at("firewall").get<std::string>();
    if (firewall != "sealed" && firewall != "opened") {
      return MakeError(ErrorCode::kSchemaViolation, "bad firewall state");
    }
    PSIBUDGET_ASSIGN_OR_RETURN(
        data::DatasetHandle handle,
        data::DatasetHandle::Restore(
            d.at("path").get<std::string>(), d.at("sha256").get<std::string>(),
            d.at("header").get<std::vector<std::string>>(),
            d.at("row_count").get<size_t>(),
            firewall == "sealed" ? data::FirewallState::kSealed
                                 : data::FirewallState::kOpened,
            d.at("read_audit").get<std::uint64_t>()));

    session::Session s(std::move(handle));
    s.id = j.at("id").get<std::string>();
    const std::string phase = j.at("phase").get<std::string>();
    if (phase != "configuring" && phase != "finalized") {
      return MakeError(ErrorCode::kSchemaViolation, "bad phase");
    }
    s.phase = phase == "configuring" ? session::Phase::kConfiguring
                                     : session::Phase::kFinalized;
    if (s.phase == session::Phase::kConfiguring &&
        s.dataset.firewall_state() != data::FirewallState::kSealed) {
      return MakeError(ErrorCode::kSchemaViolation,
                       "a configuring session must have a sealed dataset");
    }
    s.created_at = j.at("created_at").get<std::string>();
    s.updated_at = j.at("updated_at").get<std::string>();
    s.global = {j.at("global").at("epsilon").get<double>(),
                j.at("global").at("delta").get<double>()};
    if (!j.at("sampling").is_null()) {
      PSIBUDGET_ASSIGN_OR_RETURN(
          auto info,
          budget::SamplingInfo::Create(
              j.at("sampling").at("sample_size").get<std::uint64_t>(),
              j.at("sampling").at("population_size").get<std::uint64_t>()));
      s.sampling = info;
    }
    if (!j.at("population_ceiling").is_null()) {
      s.population_ceiling = j.at("population_ceiling").get<std::uint64_t>();
    }
    PSIBUDGET_ASSIGN_OR_RETURN(s.confidence, accuracy::ConfidenceLevel::Create(
                                                 j.at("alpha").get<double>()));
    s.next_statistic = j.at("next_statistic").get<std::uint64_t>();

    budget::PrivacyBudget expected_internal = s.global;
    if (s.sampling) {
      if (s.sampling->sample_size != s.dataset.row_count()) {
        return MakeError(ErrorCode::kSchemaViolation,
                         "sample size does not match the dataset");
      }
      PSIBUDGET_ASSIGN_OR_RETURN(
          expected_internal, budget::AmplifyBySampling(s.global, *s.sampling));
    }
    const budget::PrivacyBudget internal{
        j.at("internal").at("epsilon").get<double>(),
        j.at("internal").at("delta").get<double>()};
    if (!(internal == expected_internal)) {
      return MakeError(ErrorCode::kSchemaViolation,
                       "internal budget is inconsistent with the global "
                       "budget");
    }
    PSIBUDGET_ASSIGN_OR_RETURN(
        s.allocation, budget::MakeAllocationState(
                          internal, j.at("reserve_fraction").get<double>()));
    s.allocation.unspent = j.at("unspent_epsilon").get<double>();

    for (const auto& st : j.at("statistics")) {
      session::StatisticSpec spec;
      spec.id = st.at("id").get<std::string>();
      spec.variable = st.at("variable").get<std::string>();
      const auto kind = ParseStatisticKind(st.at("kind").get<std::string>());
      if (!kind) {
        return MakeError(ErrorCode::kSchemaViolation, "unknown statistic kind");
      }
      spec.kind = *kind;
      spec.p = st.value("p", 0.5);
      PSIBUDGET_ASSIGN_OR_RETURN(VariableMetadata meta,
                                 MetadataFromJson(st.at("metadata")));
      spec.schema = {spec.variable, meta.kind, meta};
      PSIBUDGET_RETURN_IF_ERROR(data::ValidateMetadata(spec.schema));
      if (!s.dataset.HasVariable(spec.variable) ||
          s.FindStatistic(spec.id) != nullptr) {
        return MakeError(ErrorCode::kSchemaViolation,
                         "bad statistic '" + spec.id + "'");
      }
      const double eps = st.at("epsilon").get<double>();
      if (!(eps >= 0.0)) {
        return MakeError(ErrorCode::kSchemaViolation, "negative allocation");
      }
      s.allocation.allocations.push_back(
          {spec.id, eps, st.at("held").get<bool>(),
           accuracy::ErrorModel{spec.kind, meta, s.dataset.row_count()}});
      s.statistics.push_back(std::move(spec));
    }
    const double usable = s.allocation.usable_epsilon();
    if (s.allocation.unspent < 0.0 ||
        std::abs(s.allocation.spent_epsilon() + s.allocation.unspent -
                 usable) > 1e-9 * std::max(1.0, usable)) {
      return MakeError(ErrorCode::kSchemaViolation,
                       "allocations do not add up to the usable budget");
    }
    for (const auto& r : j.at("releases")) {
      PSIBUDGET_ASSIGN_OR_RETURN(session::Release release, ReleaseFromJson(r));
      s.releases.push_back(std::move(release));
    }
    return s;
  } catch (const Json::exception& e) {
    return MakeError(ErrorCode::kSchemaViolation,
                     std::string("bad session document: ") + e.what());
  }
}

// Everything a reader needs to interpret the releases of one session.
inline Json ReleaseDocument(const session::Session& s) {
  Json j;
  j["format"] = kReleaseFormat;
  j["session_id"] = s.id;
  j["global"] = BudgetToJson(s.global);
  j["internal"] = BudgetToJson(s.allocation.internal);
  j["sampling_amplified"] = s.sampling.has_value();
  j["reserve_fraction"] = s.allocation.reserve_fraction;
  j["epsilon_spent"] = s.allocation.spent_epsilon();
  j["unspent_epsilon"] = s.allocation.unspent;
  j["epsilon_reserved"] =
      s.allocation.internal.epsilon * s.allocation.reserve_fraction;
  // Every mechanism is pure-epsilon: all of delta stays with the reserve.
  j["delta_reserved"] = s.allocation.internal.delta;
  Json releases = Json::array();
  for (const auto& r : s.releases) releases.push_back(ReleaseToJson(r));
  j["releases"] = std::move(releases);
  return j;
}

inline Status WriteFileAtomically(const std::string& path,
                                  const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return MakeError(ErrorCode::kIo, "cannot write '" + tmp + "'");
    out << contents;
    out.flush();
    if (!out) return MakeError(ErrorCode::kIo, "cannot write '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    return MakeError(ErrorCode::kIo,
                     "cannot rename '" + tmp + "': " + ec.message());
  }
  return OkStatus();
}

inline std::string SerializeSession(const session::Session& s) {
  return SessionToJson(s).dump(2) + "\n";
}

inline Status SaveSession(const session::Session& s, const std::string& path) {
  return WriteFileAtomically(path, SerializeSession(s));
}

inline Expected<session::Session> LoadSession(const std::string& path) {
  PSIBUDGET_ASSIGN_OR_RETURN(std::string text, data::ReadFile(path));
  Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    return MakeError(ErrorCode::kSchemaViolation,
                     "'" + path + "' is not valid JSON");
  }
  return SessionFromJson(j);
}

}  // namespace psibudget::persistence

#endif  // PSIBUDGET_PERSISTENCE_HPP
