#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "adasamp/error.hpp"
#include "adasamp/problems.hpp"
#include "adasamp/rng.hpp"

namespace adasamp {

/// Linear model with heterogeneous row scales (context shift):
/// a_i ~ N(0, s_i Sigma), Sigma_jj = 25^(j/(d-1) - 1), s_i = exp(nu N(0,1)),
/// b_i = <theta*, a_i> + sigma N(0,1), theta*_j ~ N(10, 3^2).
struct ContextShiftSpec {
  std::size_t n = 100;
  std::size_t d = 10;
  double sigma = 1.0;
  double nu = 1.0;
  std::uint64_t seed = 0;
};

/// One-hot rows (concept shift): a_i = c_i e_{supp(i)}, c_i ~ N(1, 0.1^2),
/// theta*_j = exp(nu N(0,1)), b_i = <theta*, a_i> + 0.5 N(0,1).
struct ConceptShiftSpec {
  std::size_t n = 300;
  std::size_t d = 30;
  double nu = 1.0;
  std::uint64_t seed = 0;
};

struct GeneratedData {
  DenseDataset data;
  Vector theta_star;
};

/// Diagonal of Sigma for the context-shift design.
inline Vector context_shift_covariance(std::size_t d) {
  if (d < 2) throw Fault("context-shift data needs d >= 2");
  Vector diag(static_cast<Eigen::Index>(d));
  const double denom = static_cast<double>(d - 1);
  for (std::size_t j = 0; j < d; ++j)
    diag[static_cast<Eigen::Index>(j)] = std::pow(25.0, static_cast<double>(j) / denom - 1.0);
  return diag;
}

// Draw order (frozen): theta* entries, then per row: scale, d features, noise.
inline GeneratedData gen_context_shift(const ContextShiftSpec& spec) {
  if (spec.n < 1) throw Fault("context-shift data needs n >= 1");
  if (!(spec.sigma >= 0.0) || !(spec.nu >= 0.0)) throw Fault("sigma and nu must be >= 0");
  const Vector sd = context_shift_covariance(spec.d).cwiseSqrt();
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto d = static_cast<Eigen::Index>(spec.d);

  Rng rng(spec.seed);
  GeneratedData out;
  out.theta_star.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) out.theta_star[j] = rng.normal(10.0, 3.0);

  out.data.features.resize(n, d);
  out.data.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double root_scale = std::sqrt(std::exp(spec.nu * rng.normal()));
    for (Eigen::Index j = 0; j < d; ++j) out.data.features(i, j) = root_scale * sd[j] * rng.normal();
    const double noise = spec.sigma * rng.normal();
    out.data.labels[i] = out.data.features.row(i).dot(out.theta_star) + noise;
  }
  return out;
}

// Draw order (frozen): theta* entries, then per row: support, value, noise.
inline GeneratedData gen_concept_shift(const ConceptShiftSpec& spec) {
  if (spec.n < 1 || spec.d < 1) throw Fault("concept-shift data needs n, d >= 1");
  if (!(spec.nu >= 0.0)) throw Fault("nu must be >= 0");
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto d = static_cast<Eigen::Index>(spec.d);

  Rng rng(spec.seed);
  GeneratedData out;
  out.theta_star.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) out.theta_star[j] = std::exp(spec.nu * rng.normal());

  out.data.features = Matrix::Zero(n, d);
  out.data.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(rng.index(spec.d));
    out.data.features(i, j) = rng.normal(1.0, 0.1);
    const double noise = rng.normal(0.0, 0.5);
    out.data.labels[i] = out.data.features(i, j) * out.theta_star[j] + noise;
  }
  return out;
}

// ---------------------------------------------------------------------------
// LibSVM text format

namespace detail {

inline std::string line_error(std::size_t line, const std::string& msg) {
  return "libsvm line " + std::to_string(line) + ": " + msg;
}

inline double parse_real(std::string_view tok, std::size_t line) {
  double value = 0.0;
  // from_chars rejects a leading '+', which libsvm labels commonly carry.
  std::string_view body = tok;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (ec != std::errc{} || ptr != body.data() + body.size() || body.empty())
    throw Fault(line_error(line, "malformed number '" + std::string(tok) + "'"));
  if (!std::isfinite(value)) throw Fault(line_error(line, "non-finite value '" + std::string(tok) + "'"));
  return value;
}

inline std::size_t parse_index(std::string_view tok, std::size_t line) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || tok.empty())
    throw Fault(line_error(line, "malformed index '" + std::string(tok) + "'"));
  return value;
}

inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Parses `<label> <idx>:<val> ...` lines with 1-based, unique indices.
/// Labels -1 map to 0 (other labels are kept). Blank lines are skipped;
/// '#' comments are rejected. Without `dim_hint`, d is the largest index seen.
inline DenseDataset parse_libsvm(std::istream& in, std::optional<std::size_t> dim_hint = {}) {
  struct Row {
    double label;
    std::vector<std::pair<std::size_t, double>> entries;
  };
  std::vector<Row> rows;
  std::size_t max_index = 0;
  std::string text;
  std::size_t line_no = 0;

  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find('#') != std::string::npos)
      throw Fault(detail::line_error(line_no, "comments are not supported"));

    std::vector<std::string_view> tokens;
    std::string_view rest(text);
    while (true) {
      const auto start = rest.find_first_not_of(" \t");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto end = rest.find_first_of(" \t");
      tokens.push_back(rest.substr(0, end));
      if (end == std::string_view::npos) break;
      rest.remove_prefix(end);
    }
    if (tokens.empty()) continue;

    Row row;
    row.label = detail::parse_real(tokens.front(), line_no);
    if (row.label == -1.0) row.label = 0.0;
    std::set<std::size_t> seen;
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      const auto colon = tokens[k].find(':');
      if (colon == std::string_view::npos)
        throw Fault(detail::line_error(line_no, "expected index:value, got '" + std::string(tokens[k]) + "'"));
      const std::size_t idx = detail::parse_index(tokens[k].substr(0, colon), line_no);
      if (idx == 0) throw Fault(detail::line_error(line_no, "indices are 1-based; got 0"));
      if (dim_hint && idx > *dim_hint)
        throw Fault(detail::line_error(line_no, "index " + std::to_string(idx) +
                                                    " exceeds dimension " + std::to_string(*dim_hint)));
      if (!seen.insert(idx).second)
        throw Fault(detail::line_error(line_no, "duplicate index " + std::to_string(idx)));
      row.entries.emplace_back(idx, detail::parse_real(tokens[k].substr(colon + 1), line_no));
      max_index = std::max(max_index, idx);
    }
    rows.push_back(std::move(row));
  }

  if (rows.empty()) throw Fault("libsvm input has no rows");
  const std::size_t d = dim_hint.value_or(max_index);
  if (d == 0) throw Fault("libsvm input has no features and no dimension hint");

  DenseDataset ds;
  ds.features = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  ds.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    ds.labels[r] = rows[i].label;
    for (const auto& [idx, val] : rows[i].entries) ds.features(r, static_cast<Eigen::Index>(idx - 1)) = val;
  }
  return ds;
}

/// Writes nonzero entries in ascending index order, shortest round-trip
/// decimal form. parse_libsvm(serialize) reproduces the matrix exactly given
/// the same dimension.
inline void serialize_libsvm(const DenseDataset& ds, std::ostream& out) {
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    out << detail::format_real(ds.labels[i]);
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      const double v = ds.features(i, j);
      if (v != 0.0) out << ' ' << (j + 1) << ':' << detail::format_real(v);
    }
    out << '\n';
  }
}

}  // namespace adasamp
