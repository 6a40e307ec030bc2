#pragma once

#include "campanato/polynomial.hpp"
#include "campanato/scalar.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace campanato {

/// Exponential coordinates of the first kind.
using Point = std::vector<double>;

struct GroupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AntisymmetryViolation : GroupError {
  using GroupError::GroupError;
};
struct JacobiViolation : GroupError {
  using GroupError::GroupError;
};
struct GradingViolation : GroupError {
  using GroupError::GroupError;
};
struct GenerationFailure : GroupError {
  using GroupError::GroupError;
};

/// One bracket [X_i, X_j] = sum_k coeffs[k] X_k, zero-based indices.
struct BracketSpec {
  int i = 0;
  int j = 0;
  std::map<int, double> coeffs;
};

/// Symbolic group data in coefficient type S.
template <class S>
struct GroupTables {
  /// law[k] is the k-th coordinate of a*b as a polynomial in (a_1..a_N, b_1..b_N).
  std::vector<Polynomial<S>> law;
  /// fields[i][j] is the coefficient of d/dx_j in the left-invariant field X_i.
  std::vector<std::vector<Polynomial<S>>> fields;
};

namespace detail {

template <class S>
class StructureTensor {
 public:
  StructureTensor() = default;
  explicit StructureTensor(int n) : n_(n), c_(static_cast<std::size_t>(n) * n * n, S(0)) {}
  S& at(int i, int j, int k) { return c_[(static_cast<std::size_t>(i) * n_ + j) * n_ + k]; }
  const S& at(int i, int j, int k) const { return c_[(static_cast<std::size_t>(i) * n_ + j) * n_ + k]; }
  int dim() const { return n_; }

 private:
  int n_ = 0;
  std::vector<S> c_;
};

template <class S>
bool negligible(const S& v, double tol) {
  if constexpr (ScalarTraits<S>::exact) {
    (void)tol;
    return is_zero(v);
  } else {
    return std::fabs(v) <= tol;
  }
}

/// Row rank by Gaussian elimination; exact for rationals, thresholded for doubles.
template <class S>
int matrix_rank(std::vector<std::vector<S>> rows, double tol) {
  if (rows.empty()) return 0;
  const std::size_t cols = rows.front().size();
  double scale = 1.0;
  if constexpr (!ScalarTraits<S>::exact) {
    for (const auto& r : rows)
      for (double v : r) scale = std::max(scale, std::fabs(v));
  }
  int rank = 0;
  for (std::size_t c = 0; c < cols && rank < static_cast<int>(rows.size()); ++c) {
    int piv = -1;
    double best = 0.0;
    for (std::size_t r = rank; r < rows.size(); ++r) {
      const double mag = std::fabs(to_double(rows[r][c]));
      if (!negligible(rows[r][c], tol * scale) && mag > best) {
        best = mag;
        piv = static_cast<int>(r);
      }
    }
    if (piv < 0) continue;
    std::swap(rows[rank], rows[piv]);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (static_cast<int>(r) == rank || is_zero(rows[r][c])) continue;
      const S f = rows[r][c] / rows[rank][c];
      for (std::size_t k = c; k < cols; ++k) rows[r][k] -= f * rows[rank][k];
    }
    ++rank;
  }
  return rank;
}

template <class S>
using LieElement = std::vector<Polynomial<S>>;

template <class S>
LieElement<S> bracket(const StructureTensor<S>& c, const LieElement<S>& a, const LieElement<S>& b) {
  const int n = c.dim();
  const std::size_t nv = a.front().nvars();
  LieElement<S> out(n, Polynomial<S>(nv));
  for (int i = 0; i < n; ++i) {
    if (a[i].is_zero()) continue;
    for (int j = 0; j < n; ++j) {
      if (i == j || b[j].is_zero()) continue;
      std::optional<Polynomial<S>> prod;
      for (int k = 0; k < n; ++k) {
        const S& cijk = c.at(i, j, k);
        if (is_zero(cijk)) continue;
        if (!prod) prod = a[i] * b[j];
        out[k] += *prod * cijk;
      }
    }
  }
  return out;
}

/// Dynkin coefficients of log(e^X e^Y) for words in {X=0, Y=1} up to length max_len.
/// The word w stands for the right-nested bracket [w_1,[w_2,[...,w_m]]].
template <class S>
std::map<std::vector<int>, S> dynkin_words(int max_len) {
  std::map<std::vector<int>, S> acc;
  std::vector<int> word;
  // n: number of (r,s) blocks so far; fact: product of r_i! s_i!
  auto rec = [&](auto&& self, int n, S fact) -> void {
    if (n >= 1) {
      const int m = static_cast<int>(word.size());
      const bool vanishes = m >= 2 && word[m - 1] == word[m - 2];
      if (!vanishes) {
        S coef = S(n % 2 == 1 ? 1 : -1) / (S(n) * S(m) * fact);
        acc[word] += coef;
      }
    }
    for (int r = 0; r + static_cast<int>(word.size()) <= max_len; ++r)
      for (int s = 0; r + s + static_cast<int>(word.size()) <= max_len; ++s) {
        if (r + s == 0) continue;
        const std::size_t mark = word.size();
        word.insert(word.end(), r, 0);
        word.insert(word.end(), s, 1);
        self(self, n + 1, fact * S(factorial(r)) * S(factorial(s)));
        word.resize(mark);
      }
  };
  rec(rec, 0, S(1));
  std::erase_if(acc, [](const auto& kv) { return is_zero(kv.second); });
  return acc;
}

template <class S>
GroupTables<S> build_tables(const StructureTensor<S>& c, int step) {
  const int n = c.dim();
  const std::size_t nv = 2 * static_cast<std::size_t>(n);
  LieElement<S> x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = Polynomial<S>::variable(nv, i);
    y[i] = Polynomial<S>::variable(nv, n + i);
  }
  GroupTables<S> t;
  t.law.assign(n, Polynomial<S>(nv));
  for (const auto& [word, coef] : dynkin_words<S>(step)) {
    LieElement<S> z = word.back() == 0 ? x : y;
    for (int p = static_cast<int>(word.size()) - 2; p >= 0; --p) z = bracket(c, word[p] == 0 ? x : y, z);
    for (int k = 0; k < n; ++k) t.law[k] += z[k] * coef;
  }
  t.fields.assign(n, std::vector<Polynomial<S>>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t.fields[i][j] = t.law[j].derivative(n + i).restrict_to(n);
  return t;
}

}  // namespace detail

/// A validated Carnot group in exponential coordinates over an adapted basis.
/// Immutable; copies share the symbolic tables.
class CarnotGroup {
 public:
  /// Checks the stratified structure and builds the group law.
  /// Structure constants are checked exactly when they are all small-denominator
  /// rationals and in floating point with tolerance 1e-10 otherwise.
  static CarnotGroup validate(std::vector<int> strata, const std::vector<BracketSpec>& brackets,
                              std::string name = "custom") {
    if (strata.empty()) throw GroupError("at least one stratum is required");
    for (int m : strata)
      if (m <= 0) throw GroupError("strata dimensions must be positive");

    auto impl = std::make_shared<Impl>();
    impl->name = std::move(name);
    impl->strata = strata;
    int h = 0;
    for (std::size_t a = 0; a < strata.size(); ++a) {
      for (int t = 0; t < strata[a]; ++t) impl->d.push_back(static_cast<int>(a) + 1);
      h += strata[a];
      impl->h.push_back(h);
      impl->Q += static_cast<int>(a + 1) * strata[a];
    }
    const int n = h;
    impl->c = detail::StructureTensor<double>(n);
    std::vector<std::vector<std::vector<bool>>> given(n, std::vector<std::vector<bool>>(n, std::vector<bool>(n)));
    for (const auto& b : brackets) {
      if (b.i < 0 || b.j < 0 || b.i >= n || b.j >= n) throw GroupError("bracket index out of range");
      for (const auto& [k, v] : b.coeffs) {
        if (k < 0 || k >= n) throw GroupError("bracket coefficient index out of range");
        if (v == 0.0) continue;
        if (b.i == b.j)
          throw AntisymmetryViolation("[X" + std::to_string(b.i + 1) + ",X" + std::to_string(b.i + 1) +
                                      "] must vanish");
        auto check_set = [&](int i, int j, double val) {
          if (given[i][j][k] && impl->c.at(i, j, k) != val)
            throw AntisymmetryViolation("inconsistent constants for [X" + std::to_string(i + 1) + ",X" +
                                        std::to_string(j + 1) + "] component " + std::to_string(k + 1));
          impl->c.at(i, j, k) = val;
          given[i][j][k] = true;
        };
        check_set(b.i, b.j, v);
        check_set(b.j, b.i, -v);
      }
    }

    std::optional<detail::StructureTensor<Rational>> exact(std::in_place, n);
    for (int i = 0; i < n && exact; ++i)
      for (int j = 0; j < n && exact; ++j)
        for (int k = 0; k < n; ++k) {
          const double v = impl->c.at(i, j, k);
          if (v == 0.0) continue;
          auto q = rationalize(v);
          if (!q) {
            exact.reset();
            break;
          }
          exact->at(i, j, k) = *q;
        }

    if (exact) {
      check_structure(*exact, *impl);
      impl->exact = detail::build_tables(*exact, impl->step());
      impl->approx.law.clear();
      for (const auto& p : impl->exact->law) impl->approx.law.push_back(p.cast<double>());
      impl->approx.fields.assign(n, {});
      for (int i = 0; i < n; ++i)
        for (const auto& p : impl->exact->fields[i]) impl->approx.fields[i].push_back(p.cast<double>());
    } else {
      check_structure(impl->c, *impl);
      impl->approx = detail::build_tables(impl->c, impl->step());
    }
    for (const auto& p : impl->approx.law) impl->compiled_law.emplace_back(p);
    return CarnotGroup(std::move(impl));
  }

  /// "euclidean:n", "heisenberg:n" or "engel".
  static CarnotGroup builtin(std::string_view key) {
    const auto colon = key.find(':');
    const std::string kind(key.substr(0, colon));
    int n = 1;
    if (colon != std::string_view::npos) {
      try {
        n = std::stoi(std::string(key.substr(colon + 1)));
      } catch (const std::exception&) {
        throw GroupError("bad builtin group key '" + std::string(key) + "'");
      }
    }
    if (n <= 0) throw GroupError("builtin group parameter must be positive");
    if (kind == "euclidean") return validate({n}, {}, "euclidean:" + std::to_string(n));
    if (kind == "heisenberg") {
      std::vector<BracketSpec> br;
      for (int i = 0; i < n; ++i) br.push_back({i, n + i, {{2 * n, 1.0}}});
      return validate({2 * n, 1}, br, "heisenberg:" + std::to_string(n));
    }
    if (kind == "engel" && colon == std::string_view::npos)
      return validate({2, 1, 1}, {{0, 1, {{2, 1.0}}}, {0, 2, {{3, 1.0}}}}, "engel");
    throw GroupError("unknown builtin group '" + std::string(key) + "'");
  }

  /// {"strata": [...], "brackets": [{"i":1,"j":2,"coeffs":{"3":1.0}}, ...]}, one-based indices.
  static CarnotGroup from_json(const nlohmann::json& j) {
    if (j.is_string()) return builtin(j.get<std::string>());
    if (!j.contains("strata")) throw GroupError("group spec: missing 'strata'");
    std::vector<int> strata = j.at("strata").get<std::vector<int>>();
    std::vector<BracketSpec> br;
    if (j.contains("brackets")) {
      for (const auto& b : j.at("brackets")) {
        BracketSpec s;
        s.i = b.at("i").get<int>() - 1;
        s.j = b.at("j").get<int>() - 1;
        for (const auto& [k, v] : b.at("coeffs").items()) s.coeffs[std::stoi(k) - 1] = v.get<double>();
        br.push_back(std::move(s));
      }
    }
    return validate(std::move(strata), br, j.value("name", std::string("custom")));
  }

  const std::string& name() const { return impl_->name; }
  int dim() const { return static_cast<int>(impl_->d.size()); }
  int step() const { return impl_->step(); }
  int homogeneous_dimension() const { return impl_->Q; }
  const std::vector<int>& strata() const { return impl_->strata; }
  /// Homogeneity d_i of each coordinate.
  const std::vector<int>& homogeneity() const { return impl_->d; }
  /// Partial sums h_j = m_1 + ... + m_j.
  const std::vector<int>& stratum_ends() const { return impl_->h; }
  double structure_constant(int i, int j, int k) const { return impl_->c.at(i, j, k); }
  bool has_exact_tables() const { return impl_->exact.has_value(); }

  template <class S>
  const GroupTables<S>& tables() const {
    if constexpr (std::is_same_v<S, double>) {
      return impl_->approx;
    } else {
      if (!impl_->exact) throw GroupError("group '" + name() + "' has no exact structure constants");
      return *impl_->exact;
    }
  }

  Point multiply(std::span<const double> a, std::span<const double> b) const {
    check_dim(a.size());
    check_dim(b.size());
    const std::size_t n = a.size();
    Point out(n);
    if (step() == 1) {
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
      return out;
    }
    std::vector<double> ab(2 * n);
    std::copy(a.begin(), a.end(), ab.begin());
    std::copy(b.begin(), b.end(), ab.begin() + static_cast<std::ptrdiff_t>(n));
    for (std::size_t k = 0; k < n; ++k) out[k] = impl_->compiled_law[k](ab);
    return out;
  }

  template <class S>
  std::vector<S> multiply_exact(const std::vector<S>& a, const std::vector<S>& b) const {
    check_dim(a.size());
    check_dim(b.size());
    std::vector<S> ab(a);
    ab.insert(ab.end(), b.begin(), b.end());
    std::vector<S> out;
    for (const auto& p : tables<S>().law) out.push_back(p(ab));
    return out;
  }

  template <class T>
  std::vector<T> inverse(std::vector<T> a) const {
    check_dim(a.size());
    for (auto& v : a) v = -v;
    return a;
  }

  /// delta_lambda: coordinate i scaled by lambda^{d_i}.
  template <class T>
  std::vector<T> dilate(const T& lambda, std::vector<T> x) const {
    if (!(lambda > T(0))) throw std::invalid_argument("dilation factor must be positive");
    check_dim(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= ipow(lambda, impl_->d[i]);
    return x;
  }

  /// x * exp(t E_i), the flow of X_i through x.
  Point flow(std::span<const double> x, int i, double t) const {
    Point e(x.size(), 0.0);
    e.at(static_cast<std::size_t>(i)) = t;
    return multiply(x, e);
  }

  std::string summary() const {
    std::string s = "N=" + std::to_string(dim()) + " s=" + std::to_string(step()) +
                    " Q=" + std::to_string(homogeneous_dimension());
    if (step() > 1) s += " d=" + to_string(homogeneity());
    return s;
  }

  friend bool operator==(const CarnotGroup& a, const CarnotGroup& b) { return a.impl_ == b.impl_; }

 private:
  struct Impl {
    std::string name;
    std::vector<int> strata, d, h;
    int Q = 0;
    detail::StructureTensor<double> c;
    std::optional<GroupTables<Rational>> exact;
    GroupTables<double> approx;
    std::vector<CompiledPolynomial> compiled_law;
    int step() const { return static_cast<int>(strata.size()); }
  };

  explicit CarnotGroup(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  void check_dim(std::size_t n) const {
    if (n != impl_->d.size())
      throw std::invalid_argument("point dimension " + std::to_string(n) + " does not match group dimension " +
                                  std::to_string(impl_->d.size()));
  }

  template <class S>
  static void check_structure(const detail::StructureTensor<S>& c, const Impl& g) {
    constexpr double tol = 1e-10;
    const int n = c.dim();
    const int s = g.step();
    auto label = [](int i) { return "X" + std::to_string(i + 1); };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          if (detail::negligible(c.at(i, j, k), tol)) continue;
          if (g.d[k] != g.d[i] + g.d[j])
            throw GradingViolation("[" + label(i) + "," + label(j) + "] has a component along " + label(k) +
                                   " outside stratum " + std::to_string(g.d[i] + g.d[j]));
        }
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        for (int l = j + 1; l < n; ++l)
          for (int out = 0; out < n; ++out) {
            S sum(0);
            for (int m = 0; m < n; ++m) {
              sum += c.at(j, l, m) * c.at(i, m, out);
              sum += c.at(l, i, m) * c.at(j, m, out);
              sum += c.at(i, j, m) * c.at(l, m, out);
            }
            if (!detail::negligible(sum, tol))
              throw JacobiViolation("Jacobi identity fails for (" + label(i) + "," + label(j) + "," + label(l) +
                                    ") in component " + label(out));
          }
    for (int a = 1; a < s; ++a) {
      const int lo1 = 0, hi1 = g.h[0];
      const int loa = g.h[a - 1] - g.strata[a - 1], hia = g.h[a - 1];
      const int lonext = g.h[a - 1], hinext = g.h[a];
      std::vector<std::vector<S>> rows;
      for (int i = lo1; i < hi1; ++i)
        for (int j = loa; j < hia; ++j) {
          std::vector<S> r;
          for (int k = lonext; k < hinext; ++k) r.push_back(c.at(i, j, k));
          rows.push_back(std::move(r));
        }
      if (detail::matrix_rank(rows, tol) != g.strata[a])
        throw GenerationFailure("[V1,V" + std::to_string(a) + "] does not span V" + std::to_string(a + 1));
    }
  }

  std::shared_ptr<const Impl> impl_;
};

}  // namespace campanato
