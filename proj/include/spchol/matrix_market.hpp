#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "spchol/sparse_matrix.hpp"

namespace spchol {

namespace detail {

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool blank_or_comment(const std::string& line) {
  auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '%';
}

}  // namespace detail

// Reads `%%MatrixMarket matrix coordinate (real|integer|pattern|complex)
// (general|symmetric)`. Indices become 0-based, duplicates are summed,
// symmetric files are stored symmetric-lower and pattern entries get 1.0.
template <typename Scalar = double>
SparseMatrix<Scalar> read_matrix_market(std::istream& in) {
  std::string line;
  Index lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty MatrixMarket input", 1);
  ++lineno;
  std::istringstream hs(line);
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  object = detail::lowercase(object);
  format = detail::lowercase(format);
  field = detail::lowercase(field);
  symmetry = detail::lowercase(symmetry);
  if (banner != "%%MatrixMarket" || object != "matrix" || format != "coordinate")
    throw ParseError("malformed header, expected '%%MatrixMarket matrix coordinate ...'", lineno);
  const bool pattern = field == "pattern";
  const bool complex_field = field == "complex";
  if (!pattern && !complex_field && field != "real" && field != "integer")
    throw ParseError("unsupported field '" + field + "'", lineno);
  if (complex_field && !is_complex_v<Scalar>)
    throw ParseError("complex matrix requires a complex scalar build", lineno);
  if (symmetry != "general" && symmetry != "symmetric")
    throw ParseError("unsupported symmetry '" + symmetry + "'", lineno);
  const Storage stype = symmetry == "symmetric" ? Storage::symmetric_lower : Storage::general;

  Index rows = -1, cols = -1, declared = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_or_comment(line)) continue;
    std::istringstream ss(line);
    if (!(ss >> rows >> cols >> declared) || rows < 0 || cols < 0 || declared < 0)
      throw ParseError("malformed size line", lineno);
    break;
  }
  if (declared < 0) throw ParseError("missing size line", lineno);
  if (rows != cols) throw ParseError("matrix must be square", lineno);

  std::vector<Triplet<Scalar>> entries;
  entries.reserve(static_cast<std::size_t>(declared));
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_or_comment(line)) continue;
    if (static_cast<Index>(entries.size()) == declared)
      throw ParseError("more entries than the declared " + std::to_string(declared), lineno);
    std::istringstream ss(line);
    Index i = 0, j = 0;
    if (!(ss >> i >> j)) throw ParseError("malformed entry", lineno);
    if (i < 1 || i > rows || j < 1 || j > cols) throw ParseError("index out of range", lineno);
    Scalar v{};
    if (pattern) {
      v = Scalar(1.0);
    } else if constexpr (is_complex_v<Scalar>) {
      double re = 0, im = 0;
      if (!(ss >> re)) throw ParseError("malformed entry value", lineno);
      if (complex_field && !(ss >> im)) throw ParseError("malformed entry value", lineno);
      v = Scalar(re, im);
    } else {
      double re = 0;
      if (!(ss >> re)) throw ParseError("malformed entry value", lineno);
      v = re;
    }
    entries.push_back({i - 1, j - 1, v});
  }
  if (static_cast<Index>(entries.size()) != declared)
    throw ParseError("expected " + std::to_string(declared) + " entries, found " +
                         std::to_string(entries.size()),
                     lineno);
  return SparseMatrix<Scalar>::from_triplets(rows, std::move(entries), stype);
}

template <typename Scalar = double>
SparseMatrix<Scalar> read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_matrix_market<Scalar>(in);
}

template <typename Scalar>
void write_matrix_market(std::ostream& out, const SparseMatrix<Scalar>& a) {
  out << "%%MatrixMarket matrix coordinate " << (is_complex_v<Scalar> ? "complex" : "real") << ' '
      << (a.symmetric() ? "symmetric" : "general") << '\n';
  out << a.n << ' ' << a.n << ' ' << a.nnz() << '\n';
  for (Index j = 0; j < a.n; ++j)
    for (Index k = a.colptr[j]; k < a.colptr[j + 1]; ++k)
      out << a.rowidx[k] + 1 << ' ' << j + 1 << ' ' << format_scalar(a.values[k]) << '\n';
}

template <typename Scalar>
void write_matrix_market(const std::string& path, const SparseMatrix<Scalar>& a) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_matrix_market(out, a);
}

}  // namespace spchol
