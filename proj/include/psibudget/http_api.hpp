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
#ifndef PSIBUDGET_HTTP_API_HPP
#define PSIBUDGET_HTTP_API_HPP

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "psibudget/persistence.hpp"
#include "psibudget/session.hpp"

// Transport-independent request handling for the budgeting service. The
// httplib binding in http_server.hpp only forwards method, path and body.
//
//   POST   /sessions
//   GET    /sessions/{id}
//   PUT    /sessions/{id}/params
//   PUT    /sessions/{id}/confidence
//   PUT    /sessions/{id}/reserve
//   POST   /sessions/{id}/statistics
//   DELETE /sessions/{id}/statistics/{sid}
//   PUT    /sessions/{id}/statistics/{sid}/error-target
//   PUT    /sessions/{id}/statistics/{sid}/hold
//   POST   /sessions/{id}/finalize
//   GET    /sessions/{id}/releases
//   GET    /recommendations
namespace psibudget::http {

using Json = nlohmann::json;

struct Request {
  std::string method;
  std::string path;
  std::string body;
};

struct Response {
  int status = 200;
  Json body;
};

inline int HttpStatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kMalformedData:
    case ErrorCode::kSchemaViolation:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kAcknowledgmentRequired:
    case ErrorCode::kFinalized:
    case ErrorCode::kFirewall:
    case ErrorCode::kDigestMismatch:
    case ErrorCode::kPopulationIncrease:
    case ErrorCode::kBusy:
      return 409;
    case ErrorCode::kParamsRejected:
    case ErrorCode::kInfeasible:
    case ErrorCode::kInfeasibleTarget:
    case ErrorCode::kHeldStatistic:
    case ErrorCode::kNoUnheldStatistic:
    case ErrorCode::kEmptyDataset:
    case ErrorCode::kUnsupportedTier:
      return 422;
    case ErrorCode::kIo:
      return 500;
  }
  return 500;
}

inline Response ErrorResponse(const Error& e) {
  return {HttpStatusFor(e.code),
          Json{{"error",
                {{"code", ErrorCodeName(e.code)},
                 {"message", e.message},
                 {"details", e.details}}}}};
}

// Full state plus the live error table, as rendered by clients.
inline Json SessionView(const session::Session& s) {
  Json j = persistence::SessionToJson(s);
  j["usable_epsilon"] = s.allocation.usable_epsilon();
  j["spent_epsilon"] = s.allocation.spent_epsilon();
  j["confidence_percent"] = 100.0 * (1.0 - s.confidence.alpha());
  j["error_table"] = persistence::ErrorTableToJson(s);
  return j;
}

struct ApiOptions {
  // When set, every session is written to <dir>/<id>.json after each
  // mutation and before the response is sent.
  std::optional<std::filesystem::path> persist_dir;
  std::function<RandomSource()> rng_factory = [] {
    return RandomSource::Secure();
  };
};

class Api {
 public:
  explicit Api(ApiOptions options = {}) : options_(std::move(options)) {}

  // Loads every session document found in the persistence directory.
  Status LoadPersisted() {
    if (!options_.persist_dir) return OkStatus();
    std::error_code ec;
    for (const auto& entry :
         std::filesystem::directory_iterator(*options_.persist_dir, ec)) {
      if (entry.path().extension() != ".json") continue;
      PSIBUDGET_ASSIGN_OR_RETURN(
          session::Session s, persistence::LoadSession(entry.path().string()));
      Insert(std::move(s));
    }
    return OkStatus();
  }

  Response Handle(const Request& request) {
    try {
      return Dispatch(request);
    } catch (const std::exception& e) {
      return ErrorResponse(
          MakeError(ErrorCode::kInvalidArgument, std::string(e.what())));
    }
  }

  size_t session_count() const {
    std::lock_guard lock(map_mutex_);
    return slots_.size();
  }

 private:
  struct Slot {
    std::shared_mutex mutex;
    session::Session session;
    explicit Slot(session::Session s) : session(std::move(s)) {}
  };

  std::string Insert(session::Session s) {
    std::string id = s.id;
    std::lock_guard lock(map_mutex_);
    slots_[id] = std::make_shared<Slot>(std::move(s));
    return id;
  }

  std::shared_ptr<Slot> Find(const std::string& id) const {
    std::lock_guard lock(map_mutex_);
    auto it = slots_.find(id);
    return it == slots_.end() ? nullptr : it->second;
  }

  Status Persist(const session::Session& s) const {
    if (!options_.persist_dir) return OkStatus();
    return persistence::SaveSession(
        s, (*options_.persist_dir / (s.id + ".json")).string());
  }

  static std::vector<std::string> Segments(std::string_view path) {
    std::vector<std::string> out;
    const auto query = path.find('?');
    if (query != std::string_view::npos) path = path.substr(0, query);
    size_t start = 0;
    while (start < path.size()) {
      size_t end = path.find('/', start);
      if (end == std::string_view::npos) end = path.size();
      if (end > start) out.emplace_back(path.substr(start, end - start));
      start = end + 1;
    }
    return out;
  }

  static Expected<Json> ParseBody(const Request& request) {
    if (request.body.empty()) return Json::object();
    Json j = Json::parse(request.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "request body must be a JSON object");
    }
    return j;
  }

  static Expected<double> RequireNumber(const Json& body,
                                        const std::string& key) {
    if (!body.contains(key) || !body.at(key).is_number()) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "'" + key + "' must be a number");
    }
    return body.at(key).get<double>();
  }

  static Response NotFound() {
    return ErrorResponse(MakeError(ErrorCode::kNotFound, "no such route"));
  }

  Response Dispatch(const Request& request) {
    const auto seg = Segments(request.path);
    const std::string& method = request.method;

    if (seg.size() == 1 && seg[0] == "recommendations" && method == "GET") {
      return Recommendations();
    }
    if (seg.empty() || seg[0] != "sessions") return NotFound();
    auto body = ParseBody(request);
    if (!body.ok()) return ErrorResponse(body.error());

    if (seg.size() == 1) {
      if (method == "POST") return CreateSession(*body);
      return NotFound();
    }
    auto slot = Find(seg[1]);
    if (slot == nullptr) {
      return ErrorResponse(
          MakeError(ErrorCode::kNotFound, "unknown session '" + seg[1] + "'"));
    }

    if (seg.size() == 2 && method == "GET") {
      std::shared_lock lock(slot->mutex);
      return {200, SessionView(slot->session)};
    }
    if (seg.size() == 3 && seg[2] == "releases" && method == "GET") {
      std::shared_lock lock(slot->mutex);
      if (slot->session.phase != session::Phase::kFinalized) {
        return ErrorResponse(MakeError(ErrorCode::kInvalidArgument,
                                       "session is not finalized yet"));
      }
      return {200, persistence::ReleaseDocument(slot->session)};
    }

    // Everything below mutates: one writer per session at a time.
    // Work on a copy and commit only after it has been persisted.
    std::unique_lock lock(slot->mutex);
    session::Session s = slot->session;
    Json warnings = Json::array();
    Status result = OkStatus();
    int success_status = 200;
    Json extra = Json::object();

    if (seg.size() == 3 && seg[2] == "params" && method == "PUT") {
      result = UpdateParams(s, *body, warnings);
    } else if (seg.size() == 3 && seg[2] == "confidence" && method == "PUT") {
      result = SetConfidence(s, *body);
    } else if (seg.size() == 3 && seg[2] == "reserve" && method == "PUT") {
      auto fraction = RequireNumber(*body, "fraction");
      if (!fraction.ok()) return ErrorResponse(fraction.error());
      auto w = session::SetReserve(s, *fraction);
      if (w.ok()) {
        for (const auto& x : *w) warnings.push_back(x);
      } else {
        result = w.error();
      }
    } else if (seg.size() == 3 && seg[2] == "statistics" && method == "POST") {
      auto id = AddStatistic(s, *body);
      if (id.ok()) {
        extra["id"] = *id;
        success_status = 201;
      } else {
        result = id.error();
      }
    } else if (seg.size() == 4 && seg[2] == "statistics" &&
               method == "DELETE") {
      result = session::DeleteStatistic(s, seg[3]);
    } else if (seg.size() == 5 && seg[2] == "statistics" &&
               seg[4] == "error-target" && method == "PUT") {
      auto target = RequireNumber(*body, "error");
      if (!target.ok()) return ErrorResponse(target.error());
      result = session::SetErrorTarget(s, seg[3], *target);
    } else if (seg.size() == 5 && seg[2] == "statistics" &&
               seg[4] == "hold" && method == "PUT") {
      if (!body->contains("held") || !body->at("held").is_boolean()) {
        return ErrorResponse(
            MakeError(ErrorCode::kInvalidArgument, "'held' must be a boolean"));
      }
      result = session::SetHold(s, seg[3], body->at("held").get<bool>());
    } else if (seg.size() == 3 && seg[2] == "finalize" && method == "POST") {
      Response response = Finalize(s);
      if (response.status == 200) slot->session = std::move(s);
      return response;
    } else {
      return NotFound();
    }

    if (!result.ok()) return ErrorResponse(result.error());
    if (auto saved = Persist(s); !saved.ok()) {
      return ErrorResponse(saved.error());
    }
    slot->session = s;
    Json out = {{"session", SessionView(s)}, {"warnings", warnings}};
    for (auto& [k, v] : extra.items()) out[k] = v;
    return {success_status, out};
  }

  Response Recommendations() const {
    Json tiers = Json::array();
    for (int tier = 1; tier <= 5; ++tier) {
      Json t{{"tier", tier}, {"description", budget::TierDescription(tier)}};
      auto rec = budget::RecommendParams(tier);
      if (rec.ok()) {
        t["epsilon"] = rec->epsilon;
        t["delta"] = rec->delta;
      } else {
        t["refusal"] = rec.error().message;
      }
      tiers.push_back(std::move(t));
    }
    return {200, Json{{"tiers", tiers}}};
  }

  static std::optional<std::uint64_t> OptionalPopulation(const Json& body) {
    if (!body.contains("population_size") ||
        body.at("population_size").is_null()) {
      return std::nullopt;
    }
    return body.at("population_size").get<std::uint64_t>();
  }

  Response CreateSession(const Json& body) {
    if (!body.contains("data_path") || !body.at("data_path").is_string()) {
      return ErrorResponse(
          MakeError(ErrorCode::kInvalidArgument, "'data_path' is required"));
    }
    double epsilon = 0.0;
    double delta = 0.0;
    if (body.contains("tier")) {
      auto rec = budget::RecommendParams(body.at("tier").get<int>());
      if (!rec.ok()) return ErrorResponse(rec.error());
      epsilon = rec->epsilon;
      delta = rec->delta;
    } else {
      auto e = RequireNumber(body, "epsilon");
      if (!e.ok()) return ErrorResponse(e.error());
      auto d = RequireNumber(body, "delta");
      if (!d.ok()) return ErrorResponse(d.error());
      epsilon = *e;
      delta = *d;
    }
    auto handle =
        data::DatasetHandle::LoadCsv(body.at("data_path").get<std::string>());
    if (!handle.ok()) return ErrorResponse(handle.error());
    auto created = session::CreateSession(
        std::move(handle).value(), epsilon, delta, OptionalPopulation(body),
        body.value("acknowledge_warnings", false));
    if (!created.ok()) return ErrorResponse(created.error());
    Json view = SessionView(created->session);
    if (auto saved = Persist(created->session); !saved.ok()) {
      return ErrorResponse(saved.error());
    }
    Insert(std::move(created->session));
    return {201, Json{{"session", view}, {"warnings", created->warnings}}};
  }

  static Status UpdateParams(session::Session& s, const Json& body,
                             Json& warnings) {
    PSIBUDGET_ASSIGN_OR_RETURN(double epsilon, RequireNumber(body, "epsilon"));
    PSIBUDGET_ASSIGN_OR_RETURN(double delta, RequireNumber(body, "delta"));
    session::PopulationEdit population = session::PopulationEdit::Keep();
    if (body.contains("population_size")) {
      population = body.at("population_size").is_null()
                       ? session::PopulationEdit::Clear()
                       : session::PopulationEdit::Set(
                             body.at("population_size").get<std::uint64_t>());
    }
    PSIBUDGET_ASSIGN_OR_RETURN(
        auto w, session::UpdateParams(s, epsilon, delta, population,
                                      body.value("acknowledge_warnings",
                                                 false)));
    for (const auto& x : w) warnings.push_back(x);
    return OkStatus();
  }

  static Status SetConfidence(session::Session& s, const Json& body) {
    if (body.contains("percent")) {
      PSIBUDGET_ASSIGN_OR_RETURN(double percent,
                                 RequireNumber(body, "percent"));
      return session::SetConfidence(s, 1.0 - percent / 100.0);
    }
    PSIBUDGET_ASSIGN_OR_RETURN(double alpha, RequireNumber(body, "alpha"));
    return session::SetConfidence(s, alpha);
  }

  static Expected<std::string> AddStatistic(session::Session& s,
                                            const Json& body) {
    session::StatisticRequest request;
    if (!body.contains("variable") || !body.contains("kind")) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "'variable' and 'kind' are required");
    }
    request.variable = body.at("variable").get<std::string>();
    const auto kind = ParseStatisticKind(body.at("kind").get<std::string>());
    if (!kind) {
      return MakeError(ErrorCode::kInvalidArgument, "unknown statistic kind");
    }
    request.kind = *kind;
    request.p = body.value("p", 0.5);
    PSIBUDGET_ASSIGN_OR_RETURN(
        request.metadata,
        persistence::MetadataFromJson(body.value("metadata", Json::object())));
    return session::AddStatistic(s, request);
  }

  Response Finalize(session::Session& s) {
    auto rng = options_.rng_factory();
    const bool already = s.phase == session::Phase::kFinalized;
    auto releases = session::Finalize(s, rng);
    if (!releases.ok()) return ErrorResponse(releases.error());
    if (!already) {
      if (auto saved = Persist(s); !saved.ok()) {
        return ErrorResponse(saved.error());
      }
    }
    return {200, persistence::ReleaseDocument(s)};
  }

  ApiOptions options_;
  mutable std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

}  // namespace psibudget::http

#endif  // PSIBUDGET_HTTP_API_HPP
