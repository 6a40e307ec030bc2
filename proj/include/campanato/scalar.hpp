#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

namespace campanato {

/// Exact coefficient type used by the symbolic layers in oracle mode.
using Rational = boost::multiprecision::cpp_rational;

template <class S>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
  static constexpr bool exact = false;
  static double to_double(double v) { return v; }
  static double from_double(double v) { return v; }
  static bool is_zero(double v) { return v == 0.0; }
  static double abs(double v) { return std::fabs(v); }
  static std::string str(double v) { return std::to_string(v); }
};

template <>
struct ScalarTraits<Rational> {
  static constexpr bool exact = true;
  static double to_double(const Rational& v) { return v.convert_to<double>(); }
  // Exact conversion of the binary value.
  static Rational from_double(double v) { return Rational(v); }
  static bool is_zero(const Rational& v) { return v == 0; }
  static Rational abs(const Rational& v) { return v < 0 ? Rational(-v) : v; }
  static std::string str(const Rational& v) { return v.str(); }
};

template <class S>
double to_double(const S& v) {
  return ScalarTraits<S>::to_double(v);
}

template <class S>
bool is_zero(const S& v) {
  return ScalarTraits<S>::is_zero(v);
}

template <class S>
S ipow(S base, int e) {
  S out(1);
  while (e > 0) {
    if (e & 1) out *= base;
    base *= base;
    e >>= 1;
  }
  return out;
}

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Recovers a small-denominator rational from a double by continued fractions.
/// Returns nullopt when no fraction with denominator <= max_den reproduces
/// the value to a relative 1e-15.
inline std::optional<Rational> rationalize(double v, std::int64_t max_den = 1000000) {
  if (!std::isfinite(v)) return std::nullopt;
  if (v == std::floor(v) && std::fabs(v) < 9e15) return Rational(static_cast<std::int64_t>(v));
  const double tol = 1e-15 * std::max(1.0, std::fabs(v));
  // convergents h/k
  std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  double x = v;
  for (int it = 0; it < 64; ++it) {
    const double a = std::floor(x);
    if (std::fabs(a) > 1e15) break;
    const auto ai = static_cast<std::int64_t>(a);
    const std::int64_t h2 = ai * h1 + h0;
    const std::int64_t k2 = ai * k1 + k0;
    if (k2 > max_den || k2 <= 0) break;
    h0 = h1; h1 = h2; k0 = k1; k1 = k2;
    if (std::fabs(static_cast<double>(h1) / static_cast<double>(k1) - v) <= tol) {
      return Rational(h1) / Rational(k1);
    }
    const double frac = x - a;
    if (frac == 0.0) break;
    x = 1.0 / frac;
  }
  return std::nullopt;
}

}  // namespace campanato
