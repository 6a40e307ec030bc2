#pragma once

#include "campanato/group.hpp"
#include "campanato/polynomial.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace campanato {

/// Homogeneous norm |J|_G = sum d_i j_i.
inline int hom_degree(const MultiIndex& j, const CarnotGroup& g) { return weighted_norm(j, g.homogeneity()); }

/// All multi-indices with |J|_G <= k, by increasing homogeneous degree and
/// lexicographically decreasing within a degree.
inline std::vector<MultiIndex> graded_indices(const CarnotGroup& g, int k) {
  const auto& d = g.homogeneity();
  const std::size_t n = d.size();
  std::vector<MultiIndex> out;
  MultiIndex cur(n, 0);
  auto rec = [&](auto&& self, std::size_t pos, int budget) -> void {
    if (pos == n) {
      out.push_back(cur);
      return;
    }
    for (int e = 0; e * d[pos] <= budget; ++e) {
      cur[pos] = e;
      self(self, pos + 1, budget - e * d[pos]);
    }
    cur[pos] = 0;
  };
  if (k >= 0) rec(rec, 0, k);
  std::sort(out.begin(), out.end(), [&](const MultiIndex& a, const MultiIndex& b) {
    const int da = weighted_norm(a, d), db = weighted_norm(b, d);
    if (da != db) return da < db;
    return a > b;
  });
  return out;
}

/// Coordinates in which a polynomial is written. The translated frame at
/// (base, scale) uses the chart z = delta_{1/scale}(base^{-1} x).
template <class S>
struct Frame {
  std::vector<S> base;  // empty for the absolute frame
  S scale = S(1);

  bool absolute() const { return base.empty(); }
  static Frame at(std::vector<S> x0, S r = S(1)) { return Frame{std::move(x0), std::move(r)}; }
};

/// A polynomial on the group together with the frame its monomials live in.
template <class S>
class HPolynomial {
 public:
  HPolynomial() = default;
  explicit HPolynomial(Polynomial<S> terms, Frame<S> frame = {}) : terms_(std::move(terms)), frame_(std::move(frame)) {
    if (!frame_.absolute() && frame_.base.size() != terms_.nvars())
      throw std::invalid_argument("frame base dimension mismatch");
    if (!(frame_.scale > S(0))) throw std::invalid_argument("frame scale must be positive");
  }

  const Polynomial<S>& terms() const { return terms_; }
  const Frame<S>& frame() const { return frame_; }
  bool absolute() const { return frame_.absolute(); }
  std::size_t dim() const { return terms_.nvars(); }
  bool is_zero() const { return terms_.is_zero(); }

  /// Homogeneous degree in the frame variables (-1 for zero).
  int degree(const CarnotGroup& g) const { return terms_.weighted_degree(g.homogeneity()); }
  std::optional<int> homogeneous_degree(const CarnotGroup& g) const {
    return terms_.homogeneous_degree(g.homogeneity());
  }

 private:
  Polynomial<S> terms_;
  Frame<S> frame_;
};

/// The translated monomials (x0^{-1} x)^J / J! for |J|_G <= k in graded order.
template <class S>
std::vector<HPolynomial<S>> basis(const CarnotGroup& g, int k, const std::vector<S>& x0) {
  if (k < 0) throw std::invalid_argument("basis degree must be nonnegative");
  std::vector<HPolynomial<S>> out;
  for (const auto& j : graded_indices(g, k))
    out.emplace_back(Polynomial<S>::monomial(j, S(1) / factorial_exact<S>(j)), Frame<S>::at(x0));
  return out;
}

/// Chart polynomials z_k(x) = scale^{-d_k} (base^{-1} x)_k for a translated frame.
template <class S>
std::vector<Polynomial<S>> chart_polynomials(const CarnotGroup& g, const Frame<S>& f) {
  const std::size_t n = g.dim();
  std::vector<Polynomial<S>> subs;
  for (std::size_t i = 0; i < n; ++i) subs.push_back(Polynomial<S>::constant(n, S(-f.base[i])));
  for (std::size_t i = 0; i < n; ++i) subs.push_back(Polynomial<S>::variable(n, i));
  std::vector<Polynomial<S>> z;
  const auto& d = g.homogeneity();
  const S inv = S(1) / f.scale;
  for (std::size_t k = 0; k < n; ++k) z.push_back(g.tables<S>().law[k].substitute(subs) * ipow(inv, d[k]));
  return z;
}

/// Rewrites a polynomial in the absolute frame.
template <class S>
HPolynomial<S> expand(const HPolynomial<S>& p, const CarnotGroup& g) {
  if (p.absolute()) return p;
  return HPolynomial<S>(p.terms().substitute(chart_polynomials(g, p.frame())));
}

/// Chart coordinates of x in a translated frame.
template <class S>
std::vector<S> chart_coordinates(const CarnotGroup& g, const Frame<S>& f, const std::vector<S>& x) {
  std::vector<S> z;
  if constexpr (std::is_same_v<S, double>) z = g.multiply(g.inverse(f.base), x);
  else z = g.multiply_exact(g.inverse(f.base), x);
  return g.dilate(S(1) / f.scale, std::move(z));
}

template <class S>
S evaluate(const HPolynomial<S>& p, const std::vector<S>& x, const CarnotGroup& g) {
  if (x.size() != p.dim() || x.size() != static_cast<std::size_t>(g.dim()))
    throw std::invalid_argument("evaluation point dimension mismatch");
  if (p.absolute()) return p.terms()(x);
  return p.terms()(chart_coordinates(g, p.frame(), x));
}

namespace detail {

template <class S>
Polynomial<S> apply_field(const Polynomial<S>& p, std::size_t i, const CarnotGroup& g) {
  const auto& row = g.tables<S>().fields.at(i);
  Polynomial<S> out(p.nvars());
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j].is_zero()) continue;
    const auto dp = p.derivative(j);
    if (!dp.is_zero()) out += row[j] * dp;
  }
  return out;
}

}  // namespace detail

/// X_i P. In a translated frame the result stays in that frame: X_i commutes
/// with left translations and X_i (f o delta_{1/r}) = r^{-d_i} (X_i f) o delta_{1/r}.
template <class S>
HPolynomial<S> apply_Xi(const HPolynomial<S>& p, std::size_t i, const CarnotGroup& g) {
  if (i >= static_cast<std::size_t>(g.dim())) throw std::out_of_range("vector field index out of range");
  auto q = detail::apply_field(p.terms(), i, g);
  if (!p.absolute()) q *= ipow(S(1) / p.frame().scale, g.homogeneity()[i]);
  return HPolynomial<S>(std::move(q), p.frame());
}

/// X^I P = X_1^{i_1} ... X_N^{i_N} P; the rightmost factor acts first.
template <class S>
HPolynomial<S> apply_XI(const HPolynomial<S>& p, const MultiIndex& I, const CarnotGroup& g) {
  if (I.size() != static_cast<std::size_t>(g.dim())) throw std::invalid_argument("multi-index length mismatch");
  Polynomial<S> q = p.terms();
  for (std::size_t v = I.size(); v-- > 0;)
    for (int t = 0; t < I[v] && !q.is_zero(); ++t) q = detail::apply_field(q, v, g);
  if (!p.absolute()) q *= ipow(S(1) / p.frame().scale, hom_degree(I, g));
  return HPolynomial<S>(std::move(q), p.frame());
}

/// S(y) = P(x0 * delta_r y), expanded in the absolute variable y.
template <class S>
HPolynomial<S> left_translate_compose(const HPolynomial<S>& p, const std::vector<S>& x0, const S& r,
                                      const CarnotGroup& g) {
  if (!(r > S(0))) throw std::invalid_argument("dilation radius must be positive");
  const std::size_t n = g.dim();
  if (x0.size() != n) throw std::invalid_argument("base point dimension mismatch");
  const auto abs = expand(p, g);
  const auto& d = g.homogeneity();
  std::vector<Polynomial<S>> subs;
  for (std::size_t i = 0; i < n; ++i) subs.push_back(Polynomial<S>::constant(n, x0[i]));
  for (std::size_t i = 0; i < n; ++i) subs.push_back(Polynomial<S>::variable(n, i) * ipow(r, d[i]));
  std::vector<Polynomial<S>> image;
  for (std::size_t k = 0; k < n; ++k) image.push_back(g.tables<S>().law[k].substitute(subs));
  return HPolynomial<S>(abs.terms().substitute(image));
}

/// A differential operator sum_J Q_J(x) (d/dx)^J with polynomial coefficients.
template <class S>
using DifferentialOperator = std::map<MultiIndex, Polynomial<S>>;

/// Expands X^I in Euclidean partials.
template <class S>
DifferentialOperator<S> operator_XI(const MultiIndex& I, const CarnotGroup& g) {
  const std::size_t n = g.dim();
  DifferentialOperator<S> op;
  op[MultiIndex(n, 0)] = Polynomial<S>::constant(n, S(1));
  const auto& fields = g.tables<S>().fields;
  for (std::size_t v = I.size(); v-- > 0;)
    for (int t = 0; t < I[v]; ++t) {
      DifferentialOperator<S> next;
      auto add = [&](const MultiIndex& j, const Polynomial<S>& q) {
        if (q.is_zero()) return;
        auto [it, ins] = next.try_emplace(j, q);
        if (!ins) {
          it->second += q;
          if (it->second.is_zero()) next.erase(it);
        }
      };
      for (const auto& [J, coef] : op)
        for (std::size_t j = 0; j < n; ++j) {
          const auto& a = fields[v][j];
          if (a.is_zero()) continue;
          add(J, a * coef.derivative(j));
          MultiIndex Jj = J;
          Jj[j] += 1;
          add(Jj, a * coef);
        }
      op = std::move(next);
    }
  return op;
}

template <class S>
Polynomial<S> apply_operator(const DifferentialOperator<S>& op, const Polynomial<S>& p) {
  Polynomial<S> out(p.nvars());
  for (const auto& [J, coef] : op) {
    auto dp = p.partial(J);
    if (!dp.is_zero()) out += coef * dp;
  }
  return out;
}

/// Polynomial literal: {"frame": "absolute" | {"base": [...], "r": 1.0}, "terms": {"(j1,...,jN)": c}}.
template <class S = double>
HPolynomial<S> hpoly_from_json(const nlohmann::json& j, const CarnotGroup& g) {
  const std::size_t n = g.dim();
  auto scalar = [](double v) -> S {
    if constexpr (std::is_same_v<S, double>) {
      return v;
    } else {
      auto q = rationalize(v);
      return q ? *q : S(v);
    }
  };
  Frame<S> frame;
  if (j.contains("frame") && j.at("frame").is_object()) {
    for (double v : j.at("frame").at("base").get<std::vector<double>>()) frame.base.push_back(scalar(v));
    frame.scale = scalar(j.at("frame").value("r", 1.0));
  } else if (j.contains("frame") && j.at("frame") != "absolute") {
    throw std::invalid_argument("polynomial frame must be \"absolute\" or an object");
  }
  Polynomial<S> p(n);
  for (const auto& [key, val] : j.at("terms").items()) {
    std::string inner = key;
    std::erase_if(inner, [](char c) { return c == '(' || c == ')' || c == ' '; });
    MultiIndex idx;
    std::size_t pos = 0;
    while (pos <= inner.size() && !inner.empty()) {
      const auto comma = inner.find(',', pos);
      idx.push_back(std::stoi(inner.substr(pos, comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (idx.size() != n) throw std::invalid_argument("polynomial term " + key + " has wrong arity");
    p.add_term(idx, scalar(val.template get<double>()));
  }
  return HPolynomial<S>(std::move(p), std::move(frame));
}

template <class S>
nlohmann::json to_json(const HPolynomial<S>& p) {
  nlohmann::json j;
  if (p.absolute()) {
    j["frame"] = "absolute";
  } else {
    std::vector<double> base;
    for (const auto& v : p.frame().base) base.push_back(to_double(v));
    j["frame"] = {{"base", base}, {"r", to_double(p.frame().scale)}};
  }
  j["terms"] = nlohmann::json::object();
  for (const auto& [idx, c] : p.terms().terms()) j["terms"][to_string(idx)] = to_double(c);
  return j;
}

}  // namespace campanato
