#pragma once

#include "campanato/scalar.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace campanato {

/// Multi-index J = (j_1, ..., j_N); also used as a monomial exponent.
using MultiIndex = std::vector<int>;

/// Standard norm |J| = sum j_i.
inline int norm(const MultiIndex& j) { return std::accumulate(j.begin(), j.end(), 0); }

/// Weighted norm sum w_i j_i (the homogeneous norm when w = homogeneities).
inline int weighted_norm(const MultiIndex& j, std::span<const int> w) {
  if (j.size() != w.size()) throw std::invalid_argument("multi-index length mismatch");
  int s = 0;
  for (std::size_t i = 0; i < j.size(); ++i) s += w[i] * j[i];
  return s;
}

/// J! = prod j_i!
inline double factorial(const MultiIndex& j) {
  double f = 1.0;
  for (int v : j) f *= factorial(v);
  return f;
}

template <class S>
S factorial_exact(const MultiIndex& j) {
  S f(1);
  for (int v : j)
    for (int i = 2; i <= v; ++i) f *= S(i);
  return f;
}

inline std::string to_string(const MultiIndex& j) {
  std::string s = "(";
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(j[i]);
  }
  return s + ")";
}

inline MultiIndex unit_index(std::size_t n, std::size_t i) {
  MultiIndex e(n, 0);
  e[i] = 1;
  return e;
}

/// Sparse multivariate polynomial with coefficients in S.
template <class S>
class Polynomial {
 public:
  using Terms = std::map<MultiIndex, S>;

  Polynomial() = default;
  explicit Polynomial(std::size_t nvars) : nvars_(nvars) {}

  static Polynomial constant(std::size_t nvars, const S& c) {
    Polynomial p(nvars);
    if (!campanato::is_zero(c)) p.terms_[MultiIndex(nvars, 0)] = c;
    return p;
  }
  static Polynomial variable(std::size_t nvars, std::size_t i) {
    Polynomial p(nvars);
    p.terms_[unit_index(nvars, i)] = S(1);
    return p;
  }
  static Polynomial monomial(const MultiIndex& j, const S& c) {
    Polynomial p(j.size());
    if (!campanato::is_zero(c)) p.terms_[j] = c;
    return p;
  }

  std::size_t nvars() const { return nvars_; }
  const Terms& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }

  S coefficient(const MultiIndex& j) const {
    auto it = terms_.find(j);
    return it == terms_.end() ? S(0) : it->second;
  }

  void add_term(const MultiIndex& j, const S& c) {
    if (j.size() != nvars_) throw std::invalid_argument("monomial arity mismatch");
    if (campanato::is_zero(c)) return;
    auto [it, inserted] = terms_.try_emplace(j, c);
    if (!inserted) {
      it->second += c;
      if (campanato::is_zero(it->second)) terms_.erase(it);
    }
  }

  Polynomial& operator+=(const Polynomial& o) {
    check_arity(o);
    for (const auto& [j, c] : o.terms_) add_term(j, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    check_arity(o);
    for (const auto& [j, c] : o.terms_) add_term(j, S(-c));
    return *this;
  }
  Polynomial& operator*=(const S& s) {
    if (campanato::is_zero(s)) {
      terms_.clear();
      return *this;
    }
    for (auto& [j, c] : terms_) c *= s;
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, const S& s) { return a *= s; }
  friend Polynomial operator*(const S& s, Polynomial a) { return a *= s; }
  Polynomial operator-() const { return *this * S(-1); }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check_arity(b);
    Polynomial out(a.nvars_);
    MultiIndex j(a.nvars_);
    for (const auto& [ja, ca] : a.terms_)
      for (const auto& [jb, cb] : b.terms_) {
        for (std::size_t i = 0; i < j.size(); ++i) j[i] = ja[i] + jb[i];
        out.add_term(j, ca * cb);
      }
    return out;
  }
  Polynomial& operator*=(const Polynomial& o) { return *this = *this * o; }

  friend bool operator==(const Polynomial& a, const Polynomial& b) {
    return a.nvars_ == b.nvars_ && a.terms_ == b.terms_;
  }

  Polynomial pow(int e) const {
    Polynomial out = constant(nvars_, S(1));
    Polynomial base = *this;
    while (e > 0) {
      if (e & 1) out *= base;
      e >>= 1;
      if (e) base *= base;
    }
    return out;
  }

  Polynomial derivative(std::size_t var) const {
    Polynomial out(nvars_);
    for (const auto& [j, c] : terms_) {
      if (j[var] == 0) continue;
      MultiIndex jj = j;
      jj[var] -= 1;
      out.add_term(jj, c * S(j[var]));
    }
    return out;
  }

  /// Applies the Euclidean partial derivative (d/dx)^J.
  Polynomial partial(const MultiIndex& J) const {
    Polynomial out = *this;
    for (std::size_t v = 0; v < J.size(); ++v)
      for (int t = 0; t < J[v]; ++t) out = out.derivative(v);
    return out;
  }

  template <class T>
  T evaluate(std::span<const T> x) const {
    if (x.size() != nvars_) throw std::invalid_argument("evaluation point dimension mismatch");
    T acc(0);
    for (const auto& [j, c] : terms_) {
      T m = T(c);
      for (std::size_t i = 0; i < nvars_; ++i)
        if (j[i]) m *= ipow(x[i], j[i]);
      acc += m;
    }
    return acc;
  }
  S operator()(const std::vector<S>& x) const { return evaluate<S>(std::span<const S>(x)); }

  /// Replaces variable i by subs[i]; all substitutes share one arity.
  Polynomial substitute(const std::vector<Polynomial>& subs) const {
    if (subs.size() != nvars_) throw std::invalid_argument("substitution arity mismatch");
    const std::size_t m = subs.empty() ? 0 : subs.front().nvars();
    std::vector<std::vector<Polynomial>> powers(nvars_);
    Polynomial out(m);
    for (const auto& [j, c] : terms_) {
      Polynomial term = constant(m, c);
      for (std::size_t i = 0; i < nvars_; ++i) {
        if (!j[i]) continue;
        auto& cache = powers[i];
        if (cache.empty()) cache.push_back(constant(m, S(1)));
        while (static_cast<int>(cache.size()) <= j[i]) cache.push_back(cache.back() * subs[i]);
        term *= cache[j[i]];
      }
      out += term;
    }
    return out;
  }

  /// Largest weighted degree among terms; -1 for the zero polynomial.
  int weighted_degree(std::span<const int> w) const {
    int d = -1;
    for (const auto& [j, c] : terms_) d = std::max(d, weighted_norm(j, w));
    return d;
  }

  /// Common weighted degree when all terms share one; nullopt otherwise or when zero.
  std::optional<int> homogeneous_degree(std::span<const int> w) const {
    std::optional<int> d;
    for (const auto& [j, c] : terms_) {
      const int dj = weighted_norm(j, w);
      if (d && *d != dj) return std::nullopt;
      d = dj;
    }
    return d;
  }

  template <class T>
  Polynomial<T> cast() const {
    Polynomial<T> out(nvars_);
    for (const auto& [j, c] : terms_) {
      if constexpr (std::is_same_v<T, double>) out.add_term(j, to_double(c));
      else out.add_term(j, T(c));
    }
    return out;
  }

  /// Drops trailing variables, keeping only terms that do not involve them.
  Polynomial restrict_to(std::size_t keep) const {
    Polynomial out(keep);
    for (const auto& [j, c] : terms_) {
      if (std::any_of(j.begin() + keep, j.end(), [](int e) { return e != 0; })) continue;
      out.add_term(MultiIndex(j.begin(), j.begin() + keep), c);
    }
    return out;
  }

  std::string str() const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [j, c] : terms_) {
      if (!first) os << " + ";
      first = false;
      os << ScalarTraits<S>::str(c);
      for (std::size_t i = 0; i < j.size(); ++i)
        if (j[i]) os << "*x" << (i + 1) << (j[i] > 1 ? "^" + std::to_string(j[i]) : "");
    }
    return os.str();
  }

 private:
  void check_arity(const Polynomial& o) const {
    if (o.nvars_ != nvars_) throw std::invalid_argument("polynomial arity mismatch");
  }

  std::size_t nvars_ = 0;
  Terms terms_;
};

/// Flattened double-precision evaluator for a fixed polynomial.
class CompiledPolynomial {
 public:
  CompiledPolynomial() = default;
  explicit CompiledPolynomial(const Polynomial<double>& p) : nvars_(p.nvars()) {
    for (const auto& [j, c] : p.terms()) {
      coef_.push_back(c);
      std::vector<std::pair<int, int>> f;
      for (std::size_t i = 0; i < j.size(); ++i)
        if (j[i]) f.emplace_back(static_cast<int>(i), j[i]);
      offsets_.push_back(static_cast<int>(factors_.size()));
      factors_.insert(factors_.end(), f.begin(), f.end());
    }
    offsets_.push_back(static_cast<int>(factors_.size()));
  }

  double operator()(std::span<const double> x) const {
    double acc = 0.0;
    for (std::size_t t = 0; t < coef_.size(); ++t) {
      double m = coef_[t];
      for (int f = offsets_[t]; f < offsets_[t + 1]; ++f) {
        const auto [v, e] = factors_[f];
        double p = x[v];
        for (int k = 1; k < e; ++k) p *= x[v];
        m *= p;
      }
      acc += m;
    }
    return acc;
  }

  std::size_t nvars() const { return nvars_; }

 private:
  std::size_t nvars_ = 0;
  std::vector<double> coef_;
  std::vector<int> offsets_;
  std::vector<std::pair<int, int>> factors_;
};

}  // namespace campanato
