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
#ifndef PSIBUDGET_CLI_HPP
#define PSIBUDGET_CLI_HPP

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "psibudget/data.hpp"
#include "psibudget/persistence.hpp"
#include "psibudget/session.hpp"

// Command-line front end. Every subcommand loads the session document named
// by --session, applies one operation, and writes it back.
namespace psibudget::cli {

using Json = nlohmann::json;

inline std::string Fmt(double v) {
  if (!std::isfinite(v)) return "inf";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline void PrintErrorTable(const session::Session& s, std::ostream& out) {
  const auto& a = s.allocation;
  out << "session " << s.id << " (" << session::PhaseName(s.phase) << ")\n";
  out << "  global epsilon " << Fmt(s.global.epsilon) << ", delta "
      << Fmt(s.global.delta);
  if (s.sampling) {
    out << "; sampled " << s.sampling->sample_size << " of "
        << s.sampling->population_size;
  }
  out << "\n  internal epsilon " << Fmt(a.internal.epsilon) << ", reserve "
      << Fmt(100.0 * a.reserve_fraction) << "%, usable epsilon "
      << Fmt(a.usable_epsilon()) << ", unspent " << Fmt(a.unspent) << "\n";
  out << "  confidence " << Fmt(100.0 * (1.0 - s.confidence.alpha()))
      << "% (alpha " << Fmt(s.confidence.alpha()) << "), rows "
      << s.dataset.row_count() << "\n";
  const auto rows = session::ErrorTable(s);
  if (rows.empty()) {
    out << "  no statistics selected\n";
    return;
  }
  out << "  " << std::left << std::setw(5) << "id" << std::setw(14)
      << "variable" << std::setw(16) << "statistic" << std::setw(12)
      << "epsilon" << std::setw(12) << "error" << std::setw(19) << "units"
      << "hold\n";
  for (const auto& row : rows) {
    std::string kind(StatisticKindName(row.kind));
    if (row.kind == StatisticKind::kQuantile) kind += "(" + Fmt(row.p) + ")";
    out << "  " << std::left << std::setw(5) << row.id << std::setw(14)
        << row.variable << std::setw(16) << kind << std::setw(12)
        << Fmt(row.epsilon) << std::setw(12) << Fmt(row.error.value)
        << std::setw(19) << accuracy::ErrorUnitsName(row.error.units)
        << (row.held ? "held" : "") << "\n";
  }
}

namespace internal {

struct Options {
  std::string session_path;
  bool ack = false;
  bool json = false;

  // init / params
  std::string data_path;
  std::optional<double> epsilon;
  std::optional<double> delta;
  std::optional<int> tier;
  std::optional<std::uint64_t> population;
  bool clear_population = false;

  // add-stat
  std::string variable;
  std::string kind;
  double p = 0.5;
  std::string type;
  std::optional<double> lower;
  std::optional<double> upper;
  std::string categories;
  int grid = 0;
  std::string codebook;

  // statistic-scoped commands
  std::string id;
  double error = 0.0;
  bool release_hold = false;
  double fraction = 0.0;
  std::optional<double> percent;
  std::optional<double> alpha;

  // finalize
  std::string out_path;
  std::optional<std::uint64_t> seed;
  bool zero_noise = false;

  std::string plan_path;
};

inline int Fail(std::ostream& err, const Error& e) {
  err << "error: " << e.ToString() << "\n";
  if (e.code == ErrorCode::kAcknowledgmentRequired) {
    err << "rerun with --ack-warnings to proceed anyway\n";
  }
  return 1;
}

inline void PrintWarnings(const std::vector<std::string>& warnings,
                          std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

inline Expected<session::Session> Load(const Options& o) {
  if (o.session_path.empty()) {
    return MakeError(ErrorCode::kInvalidArgument, "--session is required");
  }
  return persistence::LoadSession(o.session_path);
}

inline Expected<VariableMetadata> BuildMetadata(const Options& o) {
  VariableMetadata meta;
  if (!o.codebook.empty()) {
    PSIBUDGET_ASSIGN_OR_RETURN(auto book, data::LoadCodebook(o.codebook));
    auto it = book.find(o.variable);
    if (it == book.end()) {
      return MakeError(ErrorCode::kNotFound,
                       "codebook has no entry for '" + o.variable + "'");
    }
    meta = it->second;
  }
  if (!o.type.empty()) {
    auto kind = ParseVariableKind(o.type);
    if (!kind) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "unknown variable type '" + o.type + "'");
    }
    meta.kind = *kind;
  }
  if (o.lower) meta.lower = *o.lower;
  if (o.upper) meta.upper = *o.upper;
  if (!o.categories.empty()) {
    meta.categories = data::SplitList(o.categories, ',');
  }
  if (o.grid != 0) meta.grid_cells = o.grid;
  return meta;
}

inline RandomSource MakeRng(const Options& o) {
#ifdef PSIBUDGET_TESTING
  if (o.zero_noise) return RandomSource::ZeroNoise();
  if (o.seed) return RandomSource::Seeded(*o.seed);
#else
  (void)o;
#endif
  return RandomSource::Secure();
}

inline int RunInit(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.session_path.empty()) {
    return Fail(err, MakeError(ErrorCode::kInvalidArgument,
                               "--session is required"));
  }
  double epsilon = 0.0;
  double delta = 0.0;
  if (o.tier) {
    auto rec = budget::RecommendParams(*o.tier);
    if (!rec.ok()) return Fail(err, rec.error());
    epsilon = rec->epsilon;
    delta = rec->delta;
  } else if (o.epsilon && o.delta) {
    epsilon = *o.epsilon;
    delta = *o.delta;
  } else {
    return Fail(err, MakeError(ErrorCode::kInvalidArgument,
                               "give --epsilon and --delta, or --tier"));
  }
  std::error_code ec;
  const auto absolute = std::filesystem::absolute(o.data_path, ec);
  auto handle = data::DatasetHandle::LoadCsv(
      ec ? o.data_path : absolute.lexically_normal().string());
  if (!handle.ok()) return Fail(err, handle.error());
  auto created = session::CreateSession(std::move(handle).value(), epsilon,
                                        delta, o.population, o.ack);
  if (!created.ok()) return Fail(err, created.error());
  PrintWarnings(created->warnings, err);
  if (auto saved = persistence::SaveSession(created->session, o.session_path);
      !saved.ok()) {
    return Fail(err, saved.error());
  }
  PrintErrorTable(created->session, out);
  return 0;
}

template <typename Op>
int Mutate(const Options& o, std::ostream& out, std::ostream& err, Op op) {
  auto s = Load(o);
  if (!s.ok()) return Fail(err, s.error());
  auto result = op(*s);
  if (!result.ok()) return Fail(err, result.error());
  if (auto saved = persistence::SaveSession(*s, o.session_path); !saved.ok()) {
    return Fail(err, saved.error());
  }
  PrintErrorTable(*s, out);
  return 0;
}

inline int RunFinalize(const Options& o, std::ostream& out,
                       std::ostream& err) {
  auto s = Load(o);
  if (!s.ok()) return Fail(err, s.error());
  const bool already = s->phase == session::Phase::kFinalized;
  auto rng = MakeRng(o);
  auto releases = session::Finalize(*s, rng);
  if (!releases.ok()) return Fail(err, releases.error());
  // Record the spend before anything is shown.
  if (!already) {
    if (auto saved = persistence::SaveSession(*s, o.session_path);
        !saved.ok()) {
      return Fail(err, saved.error());
    }
  }
  const std::string doc = persistence::ReleaseDocument(*s).dump(2) + "\n";
  if (!o.out_path.empty()) {
    if (auto w = persistence::WriteFileAtomically(o.out_path, doc); !w.ok()) {
      return Fail(err, w.error());
    }
  } else {
    out << doc;
  }
  return 0;
}

}  // namespace internal

inline int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

namespace internal {

inline int RunPlan(const Options& o, std::ostream& out, std::ostream& err) {
  auto text = data::ReadFile(o.plan_path);
  if (!text.ok()) return Fail(err, text.error());
  Json plan = Json::parse(*text, nullptr, false);
  if (plan.is_discarded() || !plan.is_object() || !plan.contains("steps") ||
      !plan.at("steps").is_array()) {
    return Fail(err, MakeError(ErrorCode::kSchemaViolation,
                               "plan must be an object with a 'steps' array"));
  }
  std::string session_path = o.session_path;
  if (session_path.empty()) session_path = plan.value("session", "");
  if (session_path.empty()) {
    return Fail(err, MakeError(ErrorCode::kInvalidArgument,
                               "plan names no session file"));
  }
  size_t index = 0;
  for (const auto& step : plan.at("steps")) {
    ++index;
    if (!step.is_array() || step.empty()) {
      return Fail(err, MakeError(ErrorCode::kSchemaViolation,
                                 "step " + std::to_string(index) +
                                     " must be a non-empty argument list"));
    }
    std::vector<std::string> args;
    for (const auto& a : step) {
      args.push_back(a.is_string() ? a.get<std::string>() : a.dump());
    }
    if (args.front() == "run") {
      return Fail(err, MakeError(ErrorCode::kSchemaViolation,
                                 "plans cannot nest 'run'"));
    }
    args.push_back("--session");
    args.push_back(session_path);
    out << "== step " << index << ": " << args.front() << "\n";
    if (int rc = Run(args, out, err); rc != 0) {
      err << "plan stopped at step " << index << "\n";
      return rc;
    }
  }
  return 0;
}

}  // namespace internal

// Parses `args` (without the program name) and runs one subcommand.
inline int Run(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  internal::Options o;
  CLI::App app{"Differential-privacy budgeting sessions", "psibudget"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--session", o.session_path, "Session document (JSON)");

  auto* init = app.add_subcommand("init", "Create a session for a CSV file");
  init->add_option("--data", o.data_path, "CSV file with a header row")
      ->required();
  init->add_option("--epsilon", o.epsilon, "Global epsilon");
  init->add_option("--delta", o.delta, "Global delta");
  init->add_option("--tier", o.tier,
                   "Use the recommended parameters for sensitivity tier 2-4");
  init->add_option("--population", o.population,
                   "Population size the rows were secretly sampled from");
  init->add_flag("--ack-warnings", o.ack, "Proceed despite warnings");

  auto* params = app.add_subcommand(
      "params", "Edit the global privacy parameters of a session");
  params->add_option("--epsilon", o.epsilon)->required();
  params->add_option("--delta", o.delta)->required();
  params->add_option("--population", o.population);
  params->add_flag("--clear-population", o.clear_population);
  params->add_flag("--ack-warnings", o.ack);

  auto* add = app.add_subcommand("add-stat", "Select a statistic");
  add->add_option("--variable", o.variable)->required();
  add->add_option("--kind", o.kind, "mean | histogram | quantile | cdf")
      ->required();
  add->add_option("--p", o.p, "Quantile fraction");
  add->add_option("--type", o.type, "numerical | categorical | boolean");
  add->add_option("--lower", o.lower);
  add->add_option("--upper", o.upper);
  add->add_option("--categories", o.categories, "Comma-separated labels");
  add->add_option("--grid", o.grid, "Grid cells for quantile/CDF/histogram");
  add->add_option("--codebook", o.codebook, "Metadata file");

  auto* rm = app.add_subcommand("rm-stat", "Delete a statistic");
  rm->add_option("--id", o.id)->required();

  auto* target = app.add_subcommand(
      "error-target", "Set the error of a statistic and redistribute budget");
  target->add_option("--id", o.id)->required();
  target->add_option("--error", o.error)->required();

  auto* hold = app.add_subcommand("hold", "Hold a statistic's budget fixed");
  hold->add_option("--id", o.id)->required();
  hold->add_flag("--release", o.release_hold, "Remove the hold instead");

  auto* reserve =
      app.add_subcommand("reserve", "Reserve budget for future analysts");
  reserve->add_option("--fraction", o.fraction)->required();

  auto* confidence = app.add_subcommand("confidence", "Set confidence level");
  confidence->add_option("--percent", o.percent, "e.g. 95");
  confidence->add_option("--alpha", o.alpha, "e.g. 0.05");

  auto* show = app.add_subcommand("show", "Print the error table");
  show->add_flag("--json", o.json, "Print the full session document");

  auto* finalize =
      app.add_subcommand("finalize", "Run the mechanisms and release");
  finalize->add_option("--out", o.out_path, "Release document path");
#ifdef PSIBUDGET_TESTING
  finalize->add_option("--seed", o.seed, "Deterministic noise (test builds)");
  finalize->add_flag("--zero-noise", o.zero_noise, "No noise (test builds)");
#endif

  auto* run = app.add_subcommand("run", "Execute a plan file");
  run->add_option("plan", o.plan_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream help_out;
    std::ostringstream help_err;
    const int rc = app.exit(e, help_out, help_err);
    out << help_out.str();
    err << help_err.str();
    return rc == 0 ? 0 : 2;
  }

  if (init->parsed()) return internal::RunInit(o, out, err);
  if (params->parsed()) {
    return internal::Mutate(o, out, err, [&](session::Session& s) -> Status {
      auto population = session::PopulationEdit::Keep();
      if (o.clear_population) {
        population = session::PopulationEdit::Clear();
      } else if (o.population) {
        population = session::PopulationEdit::Set(*o.population);
      }
      PSIBUDGET_ASSIGN_OR_RETURN(
          auto warnings,
          session::UpdateParams(s, *o.epsilon, *o.delta, population, o.ack));
      internal::PrintWarnings(warnings, err);
      return OkStatus();
    });
  }
  if (add->parsed()) {
    return internal::Mutate(o, out, err, [&](session::Session& s) -> Status {
      const auto kind = ParseStatisticKind(o.kind);
      if (!kind) {
        return MakeError(ErrorCode::kInvalidArgument,
                         "unknown statistic kind '" + o.kind + "'");
      }
      PSIBUDGET_ASSIGN_OR_RETURN(VariableMetadata meta,
                                 internal::BuildMetadata(o));
      PSIBUDGET_ASSIGN_OR_RETURN(
          std::string id, session::AddStatistic(s, {o.variable, *kind, o.p,
                                                    meta}));
      err << "added " << id << "\n";
      return OkStatus();
    });
  }
  if (rm->parsed()) {
    return internal::Mutate(o, out, err, [&](session::Session& s) {
      return session::DeleteStatistic(s, o.id);
    });
  }
  if (target->parsed()) {
    return internal::Mutate(o, out, err, [&](session::Session& s) {
      return session::SetErrorTarget(s, o.id, o.error);
    });
  }
  if (hold->parsed()) {
    return internal::Mutate(o, out, err, [&](session::Session& s) {
      return session::SetHold(s, o.id, !o.release_hold);
    });
  }
  if (reserve->parsed()) {
    return internal::Mutate(o, out, err, [&](session::Session& s) -> Status {
      PSIBUDGET_ASSIGN_OR_RETURN(auto warnings,
                                 session::SetReserve(s, o.fraction));
      internal::PrintWarnings(warnings, err);
      return OkStatus();
    });
  }
  if (confidence->parsed()) {
    return internal::Mutate(o, out, err, [&](session::Session& s) -> Status {
      if (o.percent) return session::SetConfidence(s, 1.0 - *o.percent / 100.0);
      if (o.alpha) return session::SetConfidence(s, *o.alpha);
      return MakeError(ErrorCode::kInvalidArgument,
                       "give --percent or --alpha");
    });
  }
  if (show->parsed()) {
    auto s = internal::Load(o);
    if (!s.ok()) return internal::Fail(err, s.error());
    if (o.json) {
      out << persistence::SessionToJson(*s).dump(2) << "\n";
    } else {
      PrintErrorTable(*s, out);
    }
    return 0;
  }
  if (finalize->parsed()) return internal::RunFinalize(o, out, err);
  if (run->parsed()) return internal::RunPlan(o, out, err);
  return 2;
}

}  // namespace psibudget::cli

#endif  // PSIBUDGET_CLI_HPP
