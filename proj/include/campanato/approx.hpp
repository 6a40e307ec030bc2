#pragma once

#include "campanato/hpoly.hpp"
#include "campanato/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace campanato {

struct RankDeficient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegreeOverflow : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ApproxOptions {
  double step_tol = 1e-10;
  int max_iter = 500;
  double weight_floor = 1e-12;
  int anneal_stages = 10;
  double anneal_start = 1e-3;
  double anneal_end = 1e-12;
};

/// Best L^p approximation of u on Omega(x0, r) by polynomials of homogeneous
/// degree <= k. The coefficients multiply z^J / J! in the chart
/// z = delta_{1/r}(x0^{-1} x), indexed by graded_indices(g, k).
struct ApproxResult {
  int k = 0;
  double p = 2.0;
  Point x0;
  double r = 1.0;
  std::vector<MultiIndex> indices;
  std::vector<double> coefficients;
  double residual = 0.0;  // (sum_i w_i |u_i - P(x_i)|^p)^{1/p}
  int iterations = 0;
  double step_norm = 0.0;
  bool nonunique = false;
  std::string solver;
  std::string provenance;

  /// Coefficient of (x0^{-1} x)^J / J! (unscaled translated basis).
  double coefficient(const MultiIndex& J, const CarnotGroup& g) const {
    for (std::size_t a = 0; a < indices.size(); ++a)
      if (indices[a] == J) return coefficients[a] / std::pow(r, hom_degree(J, g));
    return 0.0;
  }

  /// P as a polynomial in the chart frame at (x0, r).
  HPolynomial<double> polynomial() const {
    Polynomial<double> q(x0.size());
    for (std::size_t a = 0; a < indices.size(); ++a)
      q.add_term(indices[a], coefficients[a] / factorial(indices[a]));
    return HPolynomial<double>(std::move(q), Frame<double>::at(x0, r));
  }
};

struct NoConvergence : std::runtime_error {
  NoConvergence(const std::string& what, ApproxResult best) : std::runtime_error(what), best(std::move(best)) {}
  ApproxResult best;
};

namespace detail {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Rows z^J / J! at the chart coordinates of every node.
inline Mat design_matrix(const NodeSet& ns, const std::vector<MultiIndex>& idx) {
  const auto n = ns.local.empty() ? 0 : ns.local.front().size();
  int maxe = 0;
  for (const auto& J : idx)
    for (int e : J) maxe = std::max(maxe, e);
  std::vector<double> inv_fact(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) inv_fact[a] = 1.0 / factorial(idx[a]);
  Mat A(static_cast<Eigen::Index>(ns.size()), static_cast<Eigen::Index>(idx.size()));
  std::vector<double> pw(n * (maxe + 1));
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const auto& z = ns.local[i];
    for (std::size_t v = 0; v < n; ++v) {
      pw[v * (maxe + 1)] = 1.0;
      for (int e = 1; e <= maxe; ++e) pw[v * (maxe + 1) + e] = pw[v * (maxe + 1) + e - 1] * z[v];
    }
    for (std::size_t a = 0; a < idx.size(); ++a) {
      double m = inv_fact[a];
      for (std::size_t v = 0; v < n; ++v) m *= pw[v * (maxe + 1) + idx[a][v]];
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = m;
    }
  }
  return A;
}

inline double lp_objective(const Vec& res, const Vec& w, double p) {
  std::vector<double> t(static_cast<std::size_t>(res.size()));
  for (Eigen::Index i = 0; i < res.size(); ++i) t[static_cast<std::size_t>(i)] = w(i) * std::pow(std::abs(res(i)), p);
  return tree_sum(t);
}

/// Weighted least squares min sum_i s_i (u_i - A_i c)^2 via column-pivoted QR.
inline Vec weighted_ls(const Mat& A, const Vec& u, const Vec& s) {
  const Vec sq = s.cwiseSqrt();
  Eigen::ColPivHouseholderQR<Mat> qr(sq.asDiagonal() * A);
  qr.setThreshold(1e-13);
  if (qr.rank() < A.cols())
    throw RankDeficient("RankDeficient: weighted design matrix has rank " + std::to_string(qr.rank()) + " < " +
                        std::to_string(A.cols()) + " (node cloud too small or degenerate)");
  return qr.solve(sq.asDiagonal() * u);
}

/// Exact L1 refinement: from a near-optimal point, move to the vertex that
/// interpolates the m smallest residuals, then (on ties) slide along the flat
/// face of minimizers toward the origin.
inline void l1_polish(const Mat& A, const Vec& u, const Vec& w, Vec& c, bool& nonunique) {
  const auto n = A.rows(), m = A.cols();
  Vec r = u - A * c;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(r(a)) < std::abs(r(b)); });
  std::vector<Eigen::Index> active(order.begin(), order.begin() + m);
  auto solve_vertex = [&](const std::vector<Eigen::Index>& S, Vec& out) {
    Mat As(m, m);
    Vec us(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      As.row(a) = A.row(S[static_cast<std::size_t>(a)]);
      us(a) = u(S[static_cast<std::size_t>(a)]);
    }
    Eigen::FullPivLU<Mat> lu(As);
    if (lu.rank() < m) return false;
    out = lu.solve(us);
    return true;
  };
  Vec v;
  if (!solve_vertex(active, v)) return;
  const double f0 = lp_objective(r, w, 1.0);
  const double f1 = lp_objective(u - A * v, w, 1.0);
  if (!(f1 <= f0 * (1.0 + 1e-12) + 1e-300)) return;
  c = v;

  const double wscale = w.maxCoeff();
  const double uscale = u.cwiseAbs().maxCoeff();
  for (int sweep = 0; sweep < 4 * static_cast<int>(m) + 8; ++sweep) {
    r = u - A * c;
    Mat As(m, m);
    for (Eigen::Index a = 0; a < m; ++a) As.row(a) = A.row(active[static_cast<std::size_t>(a)]);
    std::vector<char> in_active(static_cast<std::size_t>(n), 0);
    for (auto i : active) in_active[static_cast<std::size_t>(i)] = 1;
    Vec gsum = Vec::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!in_active[static_cast<std::size_t>(i)] && std::abs(r(i)) > 0.0)
        gsum += w(i) * (r(i) > 0 ? 1.0 : -1.0) * A.row(i).transpose();
    Eigen::FullPivLU<Mat> lu(As.transpose());
    if (lu.rank() < m) return;
    const Vec mu = lu.solve(gsum);
    // a multiplier on the boundary |mu_a| = w_a means a flat edge of minimizers
    Eigen::Index tied = -1;
    Vec dir;
    for (Eigen::Index a = 0; a < m; ++a) {
      const auto i = active[static_cast<std::size_t>(a)];
      if (std::abs(std::abs(mu(a)) - w(i)) > 1e-9 * wscale) continue;
      Vec e = Vec::Zero(m);
      e(a) = mu(a) > 0 ? 1.0 : -1.0;
      Vec d = Eigen::FullPivLU<Mat>(As).solve(e);
      // degenerate vertices (extra zero residuals) can hide a strict increase
      double slope = 0.0;
      const double rtol = 1e-12 * (uscale + 1.0);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double ad = A.row(j).dot(d);
        slope += std::abs(r(j)) <= rtol ? w(j) * std::abs(ad) : -w(j) * (r(j) > 0 ? 1.0 : -1.0) * ad;
      }
      if (slope > 1e-9 * wscale * d.norm()) continue;
      nonunique = true;
      if (d.dot(c) < -1e-15 * d.norm() * (c.norm() + 1.0)) {
        tied = a;
        dir = d;
        break;
      }
    }
    if (tied < 0) return;
    double t = -c.dot(dir) / dir.squaredNorm();
    Eigen::Index hit = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_active[static_cast<std::size_t>(i)]) continue;
      const double ad = A.row(i).dot(dir);
      if (std::abs(ad) < 1e-300) continue;
      const double ti = r(i) / ad;
      if (ti > 1e-15 && ti < t) {
        t = ti;
        hit = i;
      }
    }
    c += t * dir;
    if (hit < 0) return;  // reached the point of the face closest to the origin
    active[static_cast<std::size_t>(tied)] = hit;
  }
}

}  // namespace detail

/// P(x) for the fitted polynomial at an absolute point x.
inline double evaluate_fit(const ApproxResult& res, const Point& x, const CarnotGroup& g) {
  const Point z = g.dilate(1.0 / res.r, g.multiply(g.inverse(res.x0), x));
  double s = 0.0;
  for (std::size_t a = 0; a < res.indices.size(); ++a) {
    double m = res.coefficients[a] / factorial(res.indices[a]);
    for (std::size_t v = 0; v < z.size(); ++v)
      for (int e = 0; e < res.indices[a][v]; ++e) m *= z[v];
    s += m;
  }
  return s;
}

/// Best L^p fit to node values u (one per node of ns).
inline ApproxResult best_poly(const std::vector<double>& u, const NodeSet& ns, const CarnotGroup& g, int k, double p,
                              const ApproxOptions& opt = {}) {
  using detail::Mat;
  using detail::Vec;
  if (!(p >= 1.0)) throw std::invalid_argument("best_poly: p must be >= 1");
  if (ns.empty()) throw EmptyIntersection("EmptyIntersection: empty node set");
  if (u.size() != ns.size()) throw std::invalid_argument("best_poly: value count differs from node count");
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!std::isfinite(u[i])) throw NonFiniteValue(i, "function value is not finite at node " + std::to_string(i));

  ApproxResult res;
  res.k = k;
  res.p = p;
  res.x0 = ns.base;
  res.r = ns.radius > 0.0 ? ns.radius : 1.0;
  res.indices = graded_indices(g, k);
  res.provenance = ns.provenance;
  const auto m = static_cast<Eigen::Index>(res.indices.size());
  if (ns.size() < res.indices.size())
    throw RankDeficient("RankDeficient: " + std::to_string(ns.size()) + " nodes for " + std::to_string(m) +
                        " basis polynomials");

  const Mat A = detail::design_matrix(ns, res.indices);
  const Vec uv = Eigen::Map<const Vec>(u.data(), static_cast<Eigen::Index>(u.size()));
  Vec w = Eigen::Map<const Vec>(ns.weights.data(), static_cast<Eigen::Index>(ns.weights.size()));
  const double wsum = w.sum();
  const Vec wn = w / wsum;  // normalized weights: same minimizer, better scaling

  Vec c = detail::weighted_ls(A, uv, wn);
  res.solver = "qr";
  auto finish = [&](const Vec& coef) {
    res.coefficients.assign(coef.data(), coef.data() + coef.size());
    res.residual = std::pow(detail::lp_objective(uv - A * coef, w, p), 1.0 / p);
    return res;
  };
  if (p == 2.0) return finish(c);

  auto irls = [&](Vec& coef, double floor, int& iters, int cap) {
    double f = detail::lp_objective(uv - A * coef, wn, p);
    const double theta0 = p > 1.0 ? 1.0 / (p - 1.0) : 1.0;
    for (int it = 0; it < cap; ++it) {
      ++iters;
      const Vec r = uv - A * coef;
      Vec s(r.size());
      for (Eigen::Index i = 0; i < r.size(); ++i) s(i) = wn(i) * std::pow(std::max(std::abs(r(i)), floor), p - 2.0);
      const Vec target = detail::weighted_ls(A, uv, s);
      const Vec delta = target - coef;
      double theta = theta0;
      Vec next = coef + theta * delta;
      double fn = detail::lp_objective(uv - A * next, wn, p);
      while (fn > f && theta > 1.0 / 1024) {
        theta *= 0.5;
        next = coef + theta * delta;
        fn = detail::lp_objective(uv - A * next, wn, p);
      }
      const double step = (next - coef).norm();
      res.step_norm = step;
      if (fn <= f) {
        coef = next;
        f = fn;
      }
      if (step <= opt.step_tol * (1.0 + coef.norm())) return true;
      if (fn > f) return true;  // no descent direction left at this floor
    }
    return false;
  };

  int iters = 0;
  if (p > 1.0) {
    res.solver = "irls";
    const bool ok = irls(c, opt.weight_floor, iters, opt.max_iter);
    res.iterations = iters;
    if (!ok) throw NoConvergence("NoConvergence: IRLS hit the iteration cap of " + std::to_string(opt.max_iter), finish(c));
    return finish(c);
  }

  res.solver = "irls-l1";
  const int stages = std::max(1, opt.anneal_stages);
  for (int st = 0; st < stages; ++st) {
    const double frac = stages == 1 ? 1.0 : static_cast<double>(st) / (stages - 1);
    const double eps = opt.anneal_start * std::pow(opt.anneal_end / opt.anneal_start, frac);
    const int budget = std::max(1, opt.max_iter - iters);
    irls(c, eps, iters, std::min(budget, opt.max_iter / stages + 1));
  }
  res.iterations = iters;
  detail::l1_polish(A, uv, wn, c, res.nonunique);
  return finish(c);
}

template <class F>
  requires std::invocable<F, const Point&>
ApproxResult best_poly(F&& u, const NodeSet& ns, const CarnotGroup& g, int k, double p, const ApproxOptions& opt = {}) {
  std::vector<double> vals(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) vals[i] = u(ns.points[i]);
  return best_poly(vals, ns, g, k, p, opt);
}

/// L[I][J] = (X^I (z^J / J!))(0) for |I|_G, |J|_G <= k. Nonzero only when
/// |I|_G = |J|_G; the identity matrix on abelian groups.
class DerivativeTable {
 public:
  DerivativeTable(const CarnotGroup& g, int k) : g_(g), k_(k), indices_(graded_indices(g, k)) {
    const auto m = indices_.size();
    table_.assign(m, std::vector<double>(m, 0.0));
    const std::vector<double> zero(static_cast<std::size_t>(g.dim()), 0.0);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) {
        if (hom_degree(indices_[a], g) != hom_degree(indices_[b], g)) continue;
        table_[a][b] = g.has_exact_tables() ? entry<Rational>(a, b) : entry<double>(a, b);
      }
  }

  const CarnotGroup& group() const { return g_; }
  int k() const { return k_; }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  double operator()(std::size_t a, std::size_t b) const { return table_[a][b]; }

  std::size_t position(const MultiIndex& I) const {
    if (static_cast<int>(I.size()) != g_.dim()) throw std::invalid_argument("multi-index length mismatch");
    const int deg = hom_degree(I, g_);
    if (deg > k_)
      throw DegreeOverflow("DegreeOverflow: |I|_G = " + std::to_string(deg) + " exceeds k = " + std::to_string(k_));
    for (std::size_t a = 0; a < indices_.size(); ++a)
      if (indices_[a] == I) return a;
    throw std::invalid_argument("multi-index not in the basis");
  }

 private:
  template <class S>
  double entry(std::size_t a, std::size_t b) const {
    const auto& J = indices_[b];
    HPolynomial<S> q(Polynomial<S>::monomial(J, S(1) / factorial_exact<S>(J)));
    const auto d = apply_XI(q, indices_[a], g_);
    return to_double(d.terms().coefficient(MultiIndex(J.size(), 0)));
  }

  CarnotGroup g_;
  int k_;
  std::vector<MultiIndex> indices_;
  std::vector<std::vector<double>> table_;
};

/// a_I(x0, r) = [X^I P_k(., x0, r, u)](x0).
inline double extract_aI(const ApproxResult& res, const MultiIndex& I, const DerivativeTable& L) {
  if (L.k() != res.k) throw std::invalid_argument("derivative table degree differs from the fit degree");
  const auto a = L.position(I);
  const int deg = hom_degree(I, L.group());
  double s = 0.0;
  for (std::size_t b = 0; b < res.coefficients.size(); ++b) s += L(a, b) * res.coefficients[b];
  return s / std::pow(res.r, deg);
}

/// [X^I P](x) at an arbitrary point, by symbolic differentiation of the expanded polynomial.
inline double derivative_at(const ApproxResult& res, const MultiIndex& I, const Point& x, const CarnotGroup& g) {
  const int deg = hom_degree(I, g);
  if (deg > res.k)
    throw DegreeOverflow("DegreeOverflow: |I|_G = " + std::to_string(deg) + " exceeds k = " + std::to_string(res.k));
  const auto abs = expand(res.polynomial(), g);
  return evaluate(apply_XI(abs, I, g), x, g);
}

inline double extract_aI(const ApproxResult& res, const Point& x0, const MultiIndex& I, const CarnotGroup& g) {
  return derivative_at(res, I, x0, g);
}

}  // namespace campanato
