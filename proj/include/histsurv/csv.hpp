#pragma once

// CSV ingestion/emission for interval-count tables and Poisson rows.
//
//   KM counts:     study,interval,n_at_risk,deaths,censored
//   observations:  study,int_low,int_high,events,exposure[,covariate...]
//
// Comma separated, '.' decimal point, mandatory header. Study and interval
// columns are 1-based in files and 0-based in memory. Any extra column in an
// observation table is a covariate, in header order.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "common.hpp"
#include "survival.hpp"

namespace histsurv {

struct Dataset {
  std::vector<ObservationRow> rows;
  std::vector<std::string> covariate_names;
  std::size_t n_studies = 0;  // highest study label seen (labels are 1..J)

  std::size_t n_covariates() const { return covariate_names.size(); }
};

// Shortest round-trip representation.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out)
    if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
  return out;
}

class CsvTable {
 public:
  CsvTable(std::istream& in, std::string source) : source_(std::move(source)) {
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto fields = split_fields(line);
      if (!have_header) {
        header_ = std::move(fields);
        have_header = true;
        continue;
      }
      if (fields.size() != header_.size())
        throw InputError(where(lineno) + "expected " + std::to_string(header_.size()) +
                         " fields, found " + std::to_string(fields.size()));
      rows_.push_back(std::move(fields));
      lines_.push_back(lineno);
    }
    if (!have_header) throw InputError(source_ + ": missing header row");
  }

  std::size_t column(const std::string& name) const {
    auto it = std::find(header_.begin(), header_.end(), name);
    if (it == header_.end()) throw InputError(source_ + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header_.begin());
  }

  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }

  double real(std::size_t row, std::size_t col) const {
    const auto& f = rows_[row][col];
    double v = 0.0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || p != f.data() + f.size() || !std::isfinite(v))
      throw InputError(where(lines_[row]) + "column '" + header_[col] + "': not a number: '" + f + "'");
    return v;
  }

  std::int64_t integer(std::size_t row, std::size_t col) const {
    const auto& f = rows_[row][col];
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || p != f.data() + f.size())
      throw InputError(where(lines_[row]) + "column '" + header_[col] + "': not an integer: '" + f + "'");
    return v;
  }

  std::string where(std::size_t lineno) const {
    return source_ + ":" + std::to_string(lineno) + ": ";
  }
  std::size_t line_of(std::size_t row) const { return lines_[row]; }

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
};

}  // namespace detail

inline std::vector<KmIntervalRecord> read_km_records(std::istream& in, const std::string& source = "<km>") {
  detail::CsvTable t(in, source);
  const auto c_study = t.column("study");
  const auto c_int = t.column("interval");
  const auto c_n = t.column("n_at_risk");
  const auto c_r = t.column("deaths");
  const auto c_c = t.column("censored");
  std::vector<KmIntervalRecord> out;
  out.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    KmIntervalRecord rec;
    rec.study = t.integer(i, c_study);
    const auto k = t.integer(i, c_int);
    if (k < 1) throw InputError(t.where(t.line_of(i)) + "interval must be >= 1");
    rec.interval = static_cast<std::size_t>(k - 1);
    rec.at_risk = t.integer(i, c_n);
    rec.deaths = t.integer(i, c_r);
    rec.censored = t.integer(i, c_c);
    if (rec.at_risk < 0 || rec.deaths < 0 || rec.censored < 0 || rec.deaths + rec.censored > rec.at_risk)
      throw InputError(t.where(t.line_of(i)) + "counts must satisfy n_at_risk >= deaths + censored >= 0");
    out.push_back(rec);
  }
  return out;
}

inline Dataset read_observations(std::istream& in, const std::string& source = "<observations>") {
  detail::CsvTable t(in, source);
  const std::vector<std::string> required{"study", "int_low", "int_high", "events", "exposure"};
  std::vector<std::size_t> req_cols;
  for (const auto& name : required) req_cols.push_back(t.column(name));
  std::vector<std::size_t> cov_cols;
  Dataset ds;
  for (std::size_t c = 0; c < t.header().size(); ++c) {
    if (std::find(req_cols.begin(), req_cols.end(), c) != req_cols.end()) continue;
    cov_cols.push_back(c);
    ds.covariate_names.push_back(t.header()[c]);
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto where = t.where(t.line_of(i));
    const auto study = t.integer(i, req_cols[0]);
    const auto lo = t.integer(i, req_cols[1]);
    const auto hi = t.integer(i, req_cols[2]);
    const auto ev = t.integer(i, req_cols[3]);
    const auto ex = t.real(i, req_cols[4]);
    if (study < 1) throw InputError(where + "study must be >= 1");
    if (lo < 1 || hi < lo) throw InputError(where + "need 1 <= int_low <= int_high");
    if (ev < 0) throw InputError(where + "events must be nonnegative");
    if (!(ex > 0.0)) throw InputError(where + "exposure must be positive");
    ObservationRow row{static_cast<std::size_t>(study - 1), static_cast<std::size_t>(lo - 1),
                       static_cast<std::size_t>(hi - 1), ev, ex, {}};
    for (auto c : cov_cols) row.covariates.push_back(t.real(i, c));
    ds.n_studies = std::max(ds.n_studies, static_cast<std::size_t>(study));
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

inline void write_observations(std::ostream& out, const Dataset& ds) {
  out << "study,int_low,int_high,events,exposure";
  for (const auto& n : ds.covariate_names) out << ',' << n;
  out << '\n';
  for (const auto& r : ds.rows) {
    out << r.study + 1 << ',' << r.int_low + 1 << ',' << r.int_high + 1 << ',' << r.events << ','
        << format_double(r.exposure);
    for (double x : r.covariates) out << ',' << format_double(x);
    out << '\n';
  }
}

// Numeric matrix with a header (draw dumps). Every column must parse as a
// real number.
struct NumericCsv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};

inline NumericCsv read_numeric_csv(std::istream& in, const std::string& source) {
  detail::CsvTable t(in, source);
  NumericCsv out;
  out.header = t.header();
  out.columns.assign(out.header.size(), {});
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t c = 0; c < out.header.size(); ++c) out.columns[c].push_back(t.real(i, c));
  return out;
}

}  // namespace histsurv
