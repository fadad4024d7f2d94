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
#ifndef PSIBUDGET_DATA_HPP
#define PSIBUDGET_DATA_HPP

#include <openssl/evp.h>

#include <atomic>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "psibudget/metadata.hpp"
#include "psibudget/status.hpp"

// Dataset ingestion behind a raw-data firewall. A handle knows the header, the
// row count and a content digest; individual cells are only reachable through
// the one-shot accessor returned by OpenForFinalize, and every cell it
// materializes is counted.
namespace psibudget::data {

enum class FirewallState { kSealed, kOpened };

inline std::string_view FirewallStateName(FirewallState state) {
  return state == FirewallState::kSealed ? "sealed" : "opened";
}

// Process-wide count of materialized cells, for instrumentation.
inline std::atomic<std::uint64_t>& ProcessCellReads() {
  static std::atomic<std::uint64_t> reads{0};
  return reads;
}

inline Expected<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return MakeError(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string Sha256Hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(),
             nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

// RFC 4180 style reader: comma separated, double-quote escaping, CRLF or LF.
// Blank lines are skipped.
class CsvReader {
 public:
  explicit CsvReader(std::string_view text) : text_(text) {}

  // Reads the next record into `fields`. Returns false at end of input.
  // Sets `line` to the 1-based line on which the record starts.
  Expected<bool> Next(std::vector<std::string>& fields, size_t& line) {
    fields.clear();
    while (pos_ < text_.size() && (text_[pos_] == '\n' || text_[pos_] == '\r')) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= text_.size()) return false;
    line = line_;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (quoted) {
        if (c == '"') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '"') {
            field.push_back('"');
            pos_ += 2;
            continue;
          }
          quoted = false;
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        ++pos_;
        continue;
      }
      if (c == '"' && field.empty() && !was_quoted) {
        quoted = true;
        was_quoted = true;
        ++pos_;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
        ++pos_;
      } else if (c == '\n' || c == '\r') {
        break;
      } else {
        field.push_back(c);
        ++pos_;
      }
    }
    if (quoted) {
      return MakeError(ErrorCode::kMalformedData,
                       "line " + std::to_string(line) +
                           ": unterminated quoted field");
    }
    fields.push_back(std::move(field));
    return true;
  }

 private:
  std::string_view text_;
  size_t pos_ = 0;
  size_t line_ = 1;
};

inline std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

inline bool IsMissingToken(std::string_view token) {
  token = Trim(token);
  return token.empty() || token == "NA";
}

class ColumnAccessor;

class DatasetHandle {
 public:
  // Reads the header and counts rows. Cell values are tokenized only to
  // check the field count and are never kept.
  static Expected<DatasetHandle> LoadCsv(const std::string& path) {
    PSIBUDGET_ASSIGN_OR_RETURN(std::string text, ReadFile(path));
    if (text.empty()) {
      return MakeError(ErrorCode::kMalformedData,
                       "'" + path + "' is empty; a header row is required");
    }
    DatasetHandle handle;
    handle.path_ = path;
    handle.digest_ = Sha256Hex(text);

    CsvReader reader(text);
    std::vector<std::string> fields;
    size_t line = 0;
    PSIBUDGET_ASSIGN_OR_RETURN(bool has_header, reader.Next(fields, line));
    if (!has_header) {
      return MakeError(ErrorCode::kMalformedData,
                       "'" + path + "' has no header row");
    }
    std::set<std::string> seen;
    for (auto& name : fields) {
      std::string trimmed(Trim(name));
      if (trimmed.empty()) {
        return MakeError(ErrorCode::kMalformedData,
                         "line 1: empty variable name in header");
      }
      if (!seen.insert(trimmed).second) {
        return MakeError(ErrorCode::kMalformedData,
                         "line 1: duplicate variable name '" + trimmed + "'");
      }
      handle.header_.push_back(std::move(trimmed));
    }
    while (true) {
      PSIBUDGET_ASSIGN_OR_RETURN(bool more, reader.Next(fields, line));
      if (!more) break;
      if (fields.size() != handle.header_.size()) {
        return MakeError(ErrorCode::kMalformedData,
                         "line " + std::to_string(line) + ": expected " +
                             std::to_string(handle.header_.size()) +
                             " fields but found " +
                             std::to_string(fields.size()));
      }
      ++handle.row_count_;
    }
    return handle;
  }

  // Rebuilds a handle from persisted fields, refusing if the file on disk no
  // longer matches the recorded digest.
  static Expected<DatasetHandle> Restore(std::string path, std::string digest,
                                         std::vector<std::string> header,
                                         size_t row_count,
                                         FirewallState firewall,
                                         std::uint64_t read_audit) {
    PSIBUDGET_ASSIGN_OR_RETURN(std::string text, ReadFile(path));
    if (Sha256Hex(text) != digest) {
      return MakeError(ErrorCode::kDigestMismatch,
                       "'" + path + "' does not match the recorded digest");
    }
    if (firewall == FirewallState::kSealed && read_audit != 0) {
      return MakeError(ErrorCode::kSchemaViolation,
                       "a sealed dataset cannot have recorded cell reads");
    }
    DatasetHandle handle;
    handle.path_ = std::move(path);
    handle.digest_ = std::move(digest);
    handle.header_ = std::move(header);
    handle.row_count_ = row_count;
    handle.firewall_ = firewall;
    handle.read_audit_ = read_audit;
    return handle;
  }

  const std::string& path() const { return path_; }
  const std::string& digest() const { return digest_; }
  const std::vector<std::string>& header() const { return header_; }
  size_t row_count() const { return row_count_; }
  FirewallState firewall_state() const { return firewall_; }
  std::uint64_t read_audit() const { return read_audit_; }

  bool HasVariable(std::string_view name) const {
    for (const auto& h : header_) {
      if (h == name) return true;
    }
    return false;
  }

 private:
  friend class ColumnAccessor;
  friend Expected<ColumnAccessor> OpenForFinalize(DatasetHandle& handle);

  DatasetHandle() = default;

  std::string path_;
  std::string digest_;
  std::vector<std::string> header_;
  size_t row_count_ = 0;
  FirewallState firewall_ = FirewallState::kSealed;
  std::uint64_t read_audit_ = 0;
};

// Typed access to columns after the firewall is opened. Each materialized
// column adds row_count cells to the handle's audit.
class ColumnAccessor {
 public:
  Expected<std::vector<std::optional<double>>> NumericColumn(
      std::string_view name) {
    PSIBUDGET_ASSIGN_OR_RETURN(size_t col, ColumnIndex(name));
    Count();
    std::vector<std::optional<double>> out;
    out.reserve(rows_.size());
    for (size_t r = 0; r < rows_.size(); ++r) {
      const std::string_view token = Trim(rows_[r][col]);
      if (IsMissingToken(token)) {
        out.emplace_back(std::nullopt);
        continue;
      }
      double value = 0.0;
      const auto [ptr, ec] =
          std::from_chars(token.data(), token.data() + token.size(), value);
      if (ec != std::errc() || ptr != token.data() + token.size() ||
          !std::isfinite(value)) {
        return MakeError(ErrorCode::kMalformedData,
                         "line " + std::to_string(lines_[r]) + ", column '" +
                             std::string(name) + "': cannot parse '" +
                             std::string(token) + "' as a number");
      }
      out.emplace_back(value);
    }
    return out;
  }

  Expected<std::vector<std::optional<std::string>>> LabelColumn(
      std::string_view name) {
    PSIBUDGET_ASSIGN_OR_RETURN(size_t col, ColumnIndex(name));
    Count();
    std::vector<std::optional<std::string>> out;
    out.reserve(rows_.size());
    for (const auto& row : rows_) {
      const std::string_view token = Trim(row[col]);
      if (IsMissingToken(token)) {
        out.emplace_back(std::nullopt);
      } else {
        out.emplace_back(std::string(token));
      }
    }
    return out;
  }

 private:
  friend Expected<ColumnAccessor> OpenForFinalize(DatasetHandle& handle);

  explicit ColumnAccessor(DatasetHandle& handle) : handle_(&handle) {}

  Expected<size_t> ColumnIndex(std::string_view name) const {
    const auto& header = handle_->header_;
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return MakeError(ErrorCode::kNotFound,
                     "no variable named '" + std::string(name) + "'");
  }

  void Count() {
    handle_->read_audit_ += rows_.size();
    ProcessCellReads() += rows_.size();
  }

  DatasetHandle* handle_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<size_t> lines_;
};

// One-shot transition to the opened state. The file must still match the
// digest recorded at ingestion.
inline Expected<ColumnAccessor> OpenForFinalize(DatasetHandle& handle) {
  if (handle.firewall_ == FirewallState::kOpened) {
    return MakeError(ErrorCode::kFirewall, "dataset has already been opened");
  }
  PSIBUDGET_ASSIGN_OR_RETURN(std::string text, ReadFile(handle.path_));
  if (Sha256Hex(text) != handle.digest_) {
    return MakeError(ErrorCode::kDigestMismatch,
                     "'" + handle.path_ +
                         "' changed since it was loaded; refusing to release");
  }
  ColumnAccessor accessor(handle);
  CsvReader reader(text);
  std::vector<std::string> fields;
  size_t line = 0;
  PSIBUDGET_RETURN_IF_ERROR(reader.Next(fields, line));  // header
  while (true) {
    PSIBUDGET_ASSIGN_OR_RETURN(bool more, reader.Next(fields, line));
    if (!more) break;
    accessor.rows_.push_back(fields);
    accessor.lines_.push_back(line);
  }
  if (accessor.rows_.size() != handle.row_count_) {
    return MakeError(ErrorCode::kDigestMismatch, "row count changed");
  }
  handle.firewall_ = FirewallState::kOpened;
  return accessor;
}

// ---------------------------------------------------------------------------
// Schemas and codebooks
// ---------------------------------------------------------------------------

struct VariableSchema {
  std::string name;
  VariableKind kind = VariableKind::kNumerical;
  VariableMetadata metadata;

  friend bool operator==(const VariableSchema&,
                         const VariableSchema&) = default;
};

// Structural validation only. Never receives a dataset, so the metadata the
// owner enters cannot be derived from raw cells here.
inline Status ValidateMetadata(const VariableSchema& schema) {
  std::vector<std::string> problems;
  if (schema.name.empty()) problems.push_back("variable name is empty");
  if (schema.metadata.kind != schema.kind) {
    problems.push_back("metadata kind does not match the declared kind '" +
                       std::string(VariableKindName(schema.kind)) + "'");
  }
  for (auto& p : MetadataProblems(schema.metadata)) {
    problems.push_back(std::move(p));
  }
  if (problems.empty()) return OkStatus();
  std::string message = "'" + schema.name + "': " + problems.front();
  return MakeError(ErrorCode::kInvalidArgument, message, std::move(problems));
}

inline std::vector<std::string> SplitList(std::string_view text, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t end = text.find(sep, start);
    const auto piece =
        Trim(text.substr(start, end == std::string_view::npos
                                    ? std::string_view::npos
                                    : end - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline Expected<double> ParseDouble(std::string_view token) {
  token = Trim(token);
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "'" + std::string(token) + "' is not a number");
  }
  return value;
}

// Flat key-value codebook:
//
//   # comment
//   age.kind = numerical
//   age.lower = 0
//   age.upper = 150
//   race.kind = categorical
//   race.categories = white, black, asian, other
//   income.grid_cells = 50
inline Expected<std::map<std::string, VariableMetadata>> ParseCodebook(
    std::string_view text) {
  std::map<std::string, VariableMetadata> out;
  size_t line_no = 0;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = Trim(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    auto fail = [&](const std::string& why) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "codebook line " + std::to_string(line_no) + ": " + why);
    };
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) return fail("expected 'name.key = value'");
    const std::string_view key = Trim(line.substr(0, eq));
    const std::string_view value = Trim(line.substr(eq + 1));
    const size_t dot = key.rfind('.');
    if (dot == std::string_view::npos || dot == 0) {
      return fail("expected 'name.key = value'");
    }
    const std::string name(key.substr(0, dot));
    const std::string_view field = key.substr(dot + 1);
    VariableMetadata& meta = out[name];
    if (field == "kind") {
      auto kind = ParseVariableKind(value);
      if (!kind) return fail("unknown kind '" + std::string(value) + "'");
      meta.kind = *kind;
    } else if (field == "lower" || field == "upper") {
      auto number = ParseDouble(value);
      if (!number.ok()) return fail(number.error().message);
      (field == "lower" ? meta.lower : meta.upper) = *number;
    } else if (field == "categories") {
      meta.categories = SplitList(value, ',');
    } else if (field == "grid_cells") {
      auto number = ParseDouble(value);
      if (!number.ok() || *number != static_cast<int>(*number)) {
        return fail("grid_cells must be an integer");
      }
      meta.grid_cells = static_cast<int>(*number);
    } else {
      return fail("unknown key '" + std::string(field) + "'");
    }
  }
  return out;
}

inline Expected<std::map<std::string, VariableMetadata>> LoadCodebook(
    const std::string& path) {
  PSIBUDGET_ASSIGN_OR_RETURN(std::string text, ReadFile(path));
  return ParseCodebook(text);
}

}  // namespace psibudget::data

#endif  // PSIBUDGET_DATA_HPP
