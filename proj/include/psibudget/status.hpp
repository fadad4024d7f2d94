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
#ifndef PSIBUDGET_STATUS_HPP
#define PSIBUDGET_STATUS_HPP

#include <cassert>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace psibudget {

// Machine-readable failure codes. The string forms are part of the HTTP and
// CLI surfaces, so they must stay stable.
enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kParamsRejected,
  kAcknowledgmentRequired,
  kInfeasible,
  kInfeasibleTarget,
  kHeldStatistic,
  kNoUnheldStatistic,
  kFinalized,
  kEmptyDataset,
  kMalformedData,
  kDigestMismatch,
  kSchemaViolation,
  kFirewall,
  kPopulationIncrease,
  kUnsupportedTier,
  kIo,
  kBusy,
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kNotFound: return "NOT_FOUND";
    case ErrorCode::kParamsRejected: return "PARAMS_REJECTED";
    case ErrorCode::kAcknowledgmentRequired: return "ACKNOWLEDGMENT_REQUIRED";
    case ErrorCode::kInfeasible: return "INFEASIBLE_ALLOCATION";
    case ErrorCode::kInfeasibleTarget: return "INFEASIBLE_TARGET";
    case ErrorCode::kHeldStatistic: return "HELD_STATISTIC";
    case ErrorCode::kNoUnheldStatistic: return "NO_UNHELD_STATISTIC";
    case ErrorCode::kFinalized: return "SESSION_FINALIZED";
    case ErrorCode::kEmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::kMalformedData: return "MALFORMED_DATA";
    case ErrorCode::kDigestMismatch: return "DIGEST_MISMATCH";
    case ErrorCode::kSchemaViolation: return "SCHEMA_VIOLATION";
    case ErrorCode::kFirewall: return "FIREWALL_VIOLATION";
    case ErrorCode::kPopulationIncrease: return "POPULATION_INCREASE";
    case ErrorCode::kUnsupportedTier: return "UNSUPPORTED_TIER";
    case ErrorCode::kIo: return "IO_ERROR";
    case ErrorCode::kBusy: return "SESSION_BUSY";
  }
  return "UNKNOWN";
}

struct Error {
  ErrorCode code = ErrorCode::kInvalidArgument;
  std::string message;
  // Secondary codes, e.g. the ParamVerdict warnings that need acknowledgment.
  std::vector<std::string> details;

  std::string ToString() const {
    std::string out(ErrorCodeName(code));
    out += ": ";
    out += message;
    for (const auto& d : details) {
      out += " [";
      out += d;
      out += "]";
    }
    return out;
  }
};

inline Error MakeError(ErrorCode code, std::string message,
                       std::vector<std::string> details = {}) {
  return Error{code, std::move(message), std::move(details)};
}

// Either a value or an Error. Minimal stand-in for std::expected.
template <typename T>
class [[nodiscard]] Expected {
 public:
  Expected(T value) : state_(std::move(value)) {}  // NOLINT
  Expected(Error error) : state_(std::move(error)) {}  // NOLINT

  bool ok() const { return std::holds_alternative<T>(state_); }
  explicit operator bool() const { return ok(); }

  const T& value() const& {
    assert(ok());
    return std::get<T>(state_);
  }
  T& value() & {
    assert(ok());
    return std::get<T>(state_);
  }
  T&& value() && {
    assert(ok());
    return std::get<T>(std::move(state_));
  }
  const T& operator*() const& { return value(); }
  T& operator*() & { return value(); }
  const T* operator->() const { return &value(); }
  T* operator->() { return &value(); }

  const Error& error() const {
    assert(!ok());
    return std::get<Error>(state_);
  }

 private:
  std::variant<T, Error> state_;
};

// Value-less success marker.
struct Ok {};
using Status = Expected<Ok>;

inline Status OkStatus() { return Ok{}; }

}  // namespace psibudget

#define PSIBUDGET_CONCAT_INNER(a, b) a##b
#define PSIBUDGET_CONCAT(a, b) PSIBUDGET_CONCAT_INNER(a, b)

#define PSIBUDGET_RETURN_IF_ERROR(expr)          \
  do {                                           \
    auto _psib_status = (expr);                  \
    if (!_psib_status.ok()) {                    \
      return _psib_status.error();               \
    }                                            \
  } while (0)

#define PSIBUDGET_ASSIGN_OR_RETURN_IMPL(tmp, lhs, expr) \
  auto tmp = (expr);                                    \
  if (!tmp.ok()) return tmp.error();                    \
  lhs = std::move(tmp).value()

#define PSIBUDGET_ASSIGN_OR_RETURN(lhs, expr) \
  PSIBUDGET_ASSIGN_OR_RETURN_IMPL(            \
      PSIBUDGET_CONCAT(_psib_or_, __LINE__), lhs, expr)

#endif  // PSIBUDGET_STATUS_HPP
