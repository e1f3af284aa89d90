#pragma once

#include <charconv>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <system_error>
#include <type_traits>

namespace spchol {

using Index = std::int64_t;

inline constexpr Index kNone = -1;

// ---------------------------------------------------------------------------
// Error types. Everything thrown by the library derives from Error so callers
// (the CLI in particular) can map categories onto exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input text (MatrixMarket, DAG files, trace CSV).
struct ParseError : Error {
  ParseError(const std::string& what, Index line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line(line) {}
  Index line;
};

// I/O failure that is not a content problem (missing file, unwritable path).
struct IoError : Error {
  using Error::Error;
};

// A symbolic invariant was violated. Always a bug in the analysis.
struct StructuralError : Error {
  using Error::Error;
};

struct CycleError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  NumericalError(const std::string& what, Index column)
      : Error(what + " at column " + std::to_string(column)), column(column) {}
  Index column;
};

struct NotPositiveDefinite : NumericalError {
  explicit NotPositiveDefinite(Index column)
      : NumericalError("matrix is not positive definite", column) {}
};

struct SingularPivot : NumericalError {
  explicit SingularPivot(Index column)
      : NumericalError("singular pivot in LDL^T", column) {}
};

struct DivergentSolve : NumericalError {
  explicit DivergentSolve(Index column)
      : NumericalError("zero diagonal in triangular solve", column) {}
};

// ---------------------------------------------------------------------------
// Scalar traits: double is the primary instantiation, std::complex<double>
// (complex symmetric, no conjugation) is supported by the same templates.
// ---------------------------------------------------------------------------

template <typename T>
struct is_complex : std::false_type {};
template <typename T>
struct is_complex<std::complex<T>> : std::true_type {};

template <typename Scalar>
inline constexpr bool is_complex_v = is_complex<Scalar>::value;

template <typename Scalar>
double magnitude(const Scalar& v) {
  return std::abs(v);
}

// Pivot acceptance for LL^T. Real pivots must be strictly positive past the
// threshold; complex symmetric pivots only need a safe magnitude.
template <typename Scalar>
bool acceptable_cholesky_pivot(const Scalar& pivot, double threshold) {
  if constexpr (is_complex_v<Scalar>) {
    return std::abs(pivot) > threshold;
  } else {
    return pivot > threshold;
  }
}

// Shortest round-trip text for a double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_scalar(double v) { return format_double(v); }

inline std::string format_scalar(const std::complex<double>& v) {
  return format_double(v.real()) + " " + format_double(v.imag());
}

}  // namespace spchol
