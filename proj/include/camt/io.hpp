#pragma once

// File formats.
//   input table: header + rows "id<sep>pvalue<sep>cov1<sep>...", tab or comma
//                separated. A column named "truth" is carried along but not
//                treated as a covariate.
//   decisions:   TSV "id pvalue pi_hat weight threshold reject", floats with
//                17 significant digits; sidecar "<path>.json" with the fit.
//   key-value:   "key = value" lines, '#' comments.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "camt/decision.hpp"
#include "camt/model.hpp"

namespace camt {

inline constexpr const char* kVersion = "0.1.0";

// Input that cannot be parsed or violates the table contract.
class ParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ============================================================================
// READING
// ============================================================================

template <class Real = double>
struct TableReadResult {
  BasicHypothesisTable<Real> table;
  std::vector<std::string> covariate_names;
  std::optional<std::vector<std::uint8_t>> truth;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view field, std::size_t line_no, const char* what) {
  field = trim(field);
  if (field.empty() || field == "NA" || field == "NaN" || field == "nan") {
    throw ParseError("line " + std::to_string(line_no) + ": missing " + what);
  }
  if (field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
    throw ParseError("line " + std::to_string(line_no) + ": invalid " + what + " '" +
                     std::string(field) + "'");
  }
  return value;
}

}  // namespace detail

template <class Real = double>
TableReadResult<Real> read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  char sep = '\t';
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    sep = line.find('\t') != std::string::npos ? '\t' : ',';
    for (auto f : detail::split_fields(line, sep)) header.emplace_back(detail::trim(f));
    break;
  }
  if (header.size() < 2) throw ParseError("header must name at least the id and pvalue columns");

  TableReadResult<Real> out;
  std::optional<std::size_t> truth_col;
  std::vector<std::size_t> cov_cols;
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c] == "truth") {
      truth_col = c;
    } else {
      cov_cols.push_back(c);
      out.covariate_names.push_back(header[c]);
    }
  }
  const std::size_t d = cov_cols.size();
  std::vector<std::string> ids;
  std::vector<double> pvalues;
  std::vector<Real> cov;
  std::vector<std::uint8_t> truth;
  std::unordered_set<std::string> seen;
  std::size_t duplicates = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line, sep);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    std::string id(detail::trim(fields[0]));
    if (id.empty()) throw ParseError("line " + std::to_string(line_no) + ": missing id");
    const double p = detail::parse_number(fields[1], line_no, "pvalue");
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ParseError("line " + std::to_string(line_no) + ": pvalue " + std::string(detail::trim(fields[1])) +
                       " outside [0,1]");
    }
    if (!seen.insert(id).second) ++duplicates;
    ids.push_back(std::move(id));
    pvalues.push_back(p);
    cov.push_back(Real(1));
    for (std::size_t c : cov_cols) {
      cov.push_back(static_cast<Real>(detail::parse_number(fields[c], line_no, header[c].c_str())));
    }
    if (truth_col) {
      truth.push_back(detail::parse_number(fields[*truth_col], line_no, "truth") != 0.0 ? 1 : 0);
    }
  }
  if (pvalues.empty()) throw ParseError("table '" + path.string() + "' has no data rows");
  if (duplicates > 0) {
    out.warnings.push_back(std::to_string(duplicates) + " duplicate id(s) in '" + path.string() + "'");
  }
  out.table = BasicHypothesisTable<Real>(std::move(ids), std::move(pvalues), std::move(cov), d);
  if (truth_col) out.truth = std::move(truth);
  return out;
}

// ============================================================================
// WRITING
// ============================================================================

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Writes to a staging file (in $CAMT_TMPDIR when set) and moves it into place.
class StagedFile {
 public:
  explicit StagedFile(std::filesystem::path target) : target_(std::move(target)) {
    namespace fs = std::filesystem;
    fs::path dir = target_.parent_path();
    if (const char* tmp = std::getenv("CAMT_TMPDIR"); tmp && *tmp) dir = tmp;
    staging_ = dir / (target_.filename().string() + ".partial");
    out_.open(staging_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write '" + target_.string() + "'");
  }
  std::ofstream& stream() { return out_; }
  void commit() {
    namespace fs = std::filesystem;
    out_.close();
    if (!out_) throw IoError("failed writing '" + target_.string() + "'");
    std::error_code ec;
    fs::rename(staging_, target_, ec);
    if (ec) {
      fs::copy_file(staging_, target_, fs::copy_options::overwrite_existing, ec);
      fs::remove(staging_);
      if (ec) throw IoError("cannot move output into '" + target_.string() + "'");
    }
  }

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  std::ofstream out_;
};

// Writes a table in the input format; a non-null truth adds a "truth" column.
template <class Real>
void write_table(const std::filesystem::path& path, const BasicHypothesisTable<Real>& table,
                 const std::vector<std::string>& covariate_names = {},
                 const std::vector<std::uint8_t>* truth = nullptr) {
  StagedFile file(path);
  auto& out = file.stream();
  out << "id\tpvalue";
  for (std::size_t j = 0; j < table.d(); ++j) {
    out << '\t' << (j < covariate_names.size() ? covariate_names[j] : "x" + std::to_string(j + 1));
  }
  if (truth) out << "\ttruth";
  out << '\n';
  for (std::size_t i = 0; i < table.m(); ++i) {
    out << table.id(i) << '\t' << format_double(table.pvalue(i));
    const auto row = table.row(i);
    for (std::size_t j = 1; j < table.cols(); ++j) out << '\t' << format_double(static_cast<double>(row[j]));
    if (truth) out << '\t' << int((*truth)[i]);
    out << '\n';
  }
  file.commit();
}

inline nlohmann::json fit_to_json(const MixtureFit& fit) {
  return {{"beta", fit.params.beta},
          {"k", fit.params.k},
          {"gamma", fit.gamma},
          {"converged", fit.converged},
          {"iterations", fit.iterations},
          {"loglik", fit.loglik_trace.empty() ? 0.0 : fit.loglik_trace.back()},
          {"loglik_trace", fit.loglik_trace},
          {"warnings", fit.warnings}};
}

inline nlohmann::json decisions_to_json(const DecisionSet& d) {
  return {{"alpha", d.alpha},
          {"tau_tilde", d.tau_tilde},
          {"tau_hat", d.tau_hat},
          {"eps1", d.eps.eps1},
          {"eps2", d.eps.eps2},
          {"epsilon", d.eps.epsilon},
          {"n_rejected", d.n_rejected},
          {"warnings", d.warnings}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  StagedFile file(path);
  file.stream() << doc.dump(2) << '\n';
  file.commit();
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return path.string() + ".json";
}

// Decisions TSV plus sidecar JSON. extra is merged into the sidecar (run
// parameters needed to reproduce the call).
template <class Real>
void write_decisions(const std::filesystem::path& path, const BasicHypothesisTable<Real>& table,
                     const MixtureFit& fit, const DecisionSet& decisions,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  if (decisions.thresholds.size() != table.m() || fit.pi_hat.size() != table.m()) {
    throw ContractViolation("decisions, fit and table differ in length");
  }
  StagedFile file(path);
  auto& out = file.stream();
  out << "id\tpvalue\tpi_hat\tweight\tthreshold\treject\n";
  for (std::size_t i = 0; i < table.m(); ++i) {
    const double pi_hat = std::clamp(fit.pi_tilde[i], decisions.eps.eps1, decisions.eps.eps2);
    out << table.id(i) << '\t' << format_double(table.pvalue(i)) << '\t' << format_double(pi_hat)
        << '\t' << format_double(decisions.weights[i]) << '\t'
        << format_double(decisions.thresholds[i]) << '\t' << int(decisions.rejected[i]) << '\n';
  }
  file.commit();

  nlohmann::json doc = {{"software", "camt"},
                        {"version", kVersion},
                        {"fit", fit_to_json(fit)},
                        {"decisions", decisions_to_json(decisions)}};
  doc.update(extra);
  write_json(sidecar_path(path), doc);
}

// ============================================================================
// KEY-VALUE CONFIGURATION
// ============================================================================

inline std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    out[std::string(detail::trim(body.substr(0, eq)))] = std::string(detail::trim(body.substr(eq + 1)));
  }
  return out;
}

}  // namespace camt
