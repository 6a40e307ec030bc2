#pragma once

#include "campanato/approx.hpp"
#include "campanato/functions.hpp"
#include "campanato/metric.hpp"
#include "campanato/parallel.hpp"
#include "campanato/quadrature.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace campanato {

/// A precondition of a regularity statement does not hold for the given (k, p, lambda, I, i).
struct RegimeViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Regime { SubCritical, Holder, DegeneratePolynomial };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::SubCritical: return "sub-critical";
    case Regime::Holder: return "holder";
    case Regime::DegeneratePolynomial: return "degenerate-polynomial";
  }
  return "?";
}

struct CampanatoParams {
  int k = 0;
  double p = 2.0;
  double lambda = 0.0;

  void validate() const {
    if (k < 0) throw std::invalid_argument("k must be >= 0");
    if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  }

  /// sub-critical: lambda <= Q + pk; holder: Q + pk < lambda <= Q + p(k+1);
  /// degenerate-polynomial: lambda > Q + p(k+1).
  Regime regime(int Q) const {
    if (lambda <= Q + p * k) return Regime::SubCritical;
    if (lambda <= Q + p * (k + 1)) return Regime::Holder;
    return Regime::DegeneratePolynomial;
  }

  /// alpha = (lambda - Q - pk) / p when lambda > Q + pk.
  std::optional<double> alpha(int Q) const {
    if (lambda > Q + p * k) return (lambda - Q - p * k) / p;
    return std::nullopt;
  }

  /// Theoretical convergence rate (lambda - Q - p|I|_G) / p of a_I(x0, r / 2^h).
  double rate(int Q, int degI) const { return (lambda - Q - p * degI) / p; }
};

/// Everything a computation on u over Omega needs.
struct Problem {
  CarnotGroup g;
  HomDistance dist;
  Domain omega;
  Function u;
  CampanatoParams params;
  QuadScheme quad;
  ApproxOptions solver;
  int workers = 1;
  std::uint64_t seed = 1;

  Problem(CarnotGroup g_, HomDistance d_, Domain omega_, Function u_, CampanatoParams params_, QuadScheme quad_)
      : g(std::move(g_)),
        dist(std::move(d_)),
        omega(std::move(omega_)),
        u(std::move(u_)),
        params(params_),
        quad(quad_),
        table_(std::make_shared<DerivativeTable>(g, params_.k)),
        diameter_(std::make_shared<double>(omega.diameter(dist))) {
    params.validate();
  }

  const DerivativeTable& table() const { return *table_; }
  double diameter() const { return *diameter_; }

  /// Same setting with another test function.
  Problem with_function(Function f) const {
    Problem q = *this;
    q.u = std::move(f);
    return q;
  }

  /// Same setting with other parameters (the derivative table follows k).
  Problem with_params(const CampanatoParams& prm) const {
    Problem q = *this;
    q.params = prm;
    q.params.validate();
    if (prm.k != params.k) q.table_ = std::make_shared<DerivativeTable>(g, prm.k);
    return q;
  }

  /// Solver tolerance entering the pass/fail policy.
  double solver_tol() const { return params.p == 2.0 ? 1e-10 : 100.0 * solver.step_tol; }

  /// tol = 3 (quadrature error + solver tolerance).
  double tolerance(double quad_error) const { return 3.0 * (quad_error + solver_tol()); }

  NodeSet nodes(const Point& x0, double r) const { return build_nodes(omega, dist, x0, r, quad); }

  std::vector<double> values(const NodeSet& ns) const {
    std::vector<double> v(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
      v[i] = u(ns.points[i]);
      if (!std::isfinite(v[i])) throw NonFiniteValue(i, "u is not finite at node " + std::to_string(i));
    }
    return v;
  }

  ApproxResult fit(const NodeSet& ns) const { return best_poly(values(ns), ns, g, params.k, params.p, solver); }
  ApproxResult fit(const Point& x0, double r) const { return fit(nodes(x0, r)); }

 private:
  std::shared_ptr<const DerivativeTable> table_;
  std::shared_ptr<const double> diameter_;
};

/// (x0, r) pairs over which the supremum defining the seminorm is sampled.
struct PlanPair {
  Point x0;
  double r = 0.0;
};

struct SeminormPlan {
  std::vector<PlanPair> pairs;

  void add(const Point& x0, double r) { pairs.push_back({x0, r}); }
  void append(const SeminormPlan& o) { pairs.insert(pairs.end(), o.pairs.begin(), o.pairs.end()); }
  bool empty() const { return pairs.empty(); }
  std::size_t size() const { return pairs.size(); }
};

/// Points of Omega at the cell centres of a grid with `per_axis` cells per axis.
inline std::vector<Point> domain_grid(const Domain& omega, int per_axis) {
  const auto n = omega.lo().size();
  std::vector<Point> pts;
  std::vector<int> idx(n, 0);
  if (per_axis <= 0) return pts;
  while (true) {
    Point x(n);
    for (std::size_t i = 0; i < n; ++i)
      x[i] = omega.lo()[i] + (idx[i] + 0.5) * (omega.hi()[i] - omega.lo()[i]) / per_axis;
    if (omega.contains(x)) pts.push_back(std::move(x));
    std::size_t a = 0;
    while (a < n && ++idx[a] == per_axis) idx[a++] = 0;
    if (a == n) break;
  }
  return pts;
}

/// Centres on a grid of Omega, radii diam(Omega) / 2^h for h = 0..depth.
inline SeminormPlan default_plan(const Problem& pb, int centers_per_axis, int depth, double rmax = 0.0) {
  if (depth < 0) throw std::invalid_argument("plan depth must be >= 0");
  const double r0 = rmax > 0.0 ? rmax : pb.diameter();
  SeminormPlan plan;
  for (const auto& x0 : domain_grid(pb.omega, centers_per_axis))
    for (int h = 0; h <= depth; ++h) plan.add(x0, std::ldexp(r0, -h));
  return plan;
}

struct SkippedPair {
  Point x0;
  double r = 0.0;
  std::string error;
};

struct SeminormEstimate {
  double value = 0.0;
  Point argmax_x0;
  double argmax_r = 0.0;
  std::vector<double> values;  // per plan pair, NaN when skipped
  std::vector<SkippedPair> skipped;
  double quad_error = 0.0;     // largest over evaluated pairs
};

/// max over the plan of [r^{-lambda} int_{Omega(x0,r)} |u - P_k|^p]^{1/p}.
inline SeminormEstimate seminorm_estimate(const Problem& pb, const SeminormPlan& plan) {
  if (plan.empty()) throw std::invalid_argument("seminorm_estimate: empty plan");
  struct Item {
    double value = std::numeric_limits<double>::quiet_NaN();
    double quad_error = 0.0;
    std::string error;
  };
  const double inv_p = 1.0 / pb.params.p;
  auto items = parallel_map<Item>(plan.size(), pb.workers, [&](std::size_t i) {
    Item it;
    const auto& pr = plan.pairs[i];
    try {
      const auto ns = pb.nodes(pr.x0, pr.r);
      const auto res = pb.fit(ns);
      it.value = res.residual * std::pow(pr.r, -pb.params.lambda * inv_p);
      it.quad_error = ns.quad_error;
    } catch (const NoConvergence& e) {
      it.error = e.what();
    } catch (const RankDeficient& e) {
      it.error = e.what();
    } catch (const EmptyIntersection& e) {
      it.error = e.what();
    }
    return it;
  });
  SeminormEstimate est;
  est.values.resize(plan.size());
  bool any = false;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    est.values[i] = items[i].value;
    if (!items[i].error.empty()) {
      est.skipped.push_back({plan.pairs[i].x0, plan.pairs[i].r, items[i].error});
      continue;
    }
    est.quad_error = std::max(est.quad_error, items[i].quad_error);
    if (!any || items[i].value > est.value) {
      est.value = items[i].value;
      est.argmax_x0 = plan.pairs[i].x0;
      est.argmax_r = plan.pairs[i].r;
      any = true;
    }
  }
  if (!any) throw EmptyIntersection("EmptyIntersection: no plan pair could be evaluated");
  return est;
}

struct NormEstimate {
  double value = 0.0;
  double lp_norm = 0.0;
  SeminormEstimate seminorm;
};

/// (||u||_{L^p(Omega)}^p + [u]^p)^{1/p}.
inline NormEstimate full_norm(const Problem& pb, const SeminormPlan& plan) {
  NormEstimate n;
  n.seminorm = seminorm_estimate(pb, plan);
  const auto dom = build_domain_nodes(pb.omega, pb.quad);
  const double p = pb.params.p;
  n.lp_norm = std::pow(integrate([&](const Point& x) { return std::pow(std::abs(pb.u(x)), p); }, dom), 1.0 / p);
  n.value = std::pow(std::pow(n.lp_norm, p) + std::pow(n.seminorm.value, p), 1.0 / p);
  return n;
}

/// a_I(x0, r / 2^h) for h = 0..H and every |I|_G <= k.
struct DyadicTrace {
  Point x0;
  double r = 0.0;
  int H = 0;
  std::vector<MultiIndex> indices;
  std::vector<std::vector<double>> a;  // a[h][index]
  std::vector<double> residuals;
  std::vector<char> empty;             // level had no nodes
  std::vector<std::string> provenance;
  double quad_error = 0.0;

  double radius(int h) const { return std::ldexp(r, -h); }
  std::size_t position(const MultiIndex& I) const {
    for (std::size_t q = 0; q < indices.size(); ++q)
      if (indices[q] == I) return q;
    throw std::invalid_argument("multi-index " + to_string(I) + " not traced");
  }
  /// Values of a_I along the levels that have nodes.
  std::vector<double> series(std::size_t q) const {
    std::vector<double> s;
    for (int h = 0; h <= H; ++h)
      if (!empty[h]) s.push_back(a[h][q]);
    return s;
  }
};

namespace detail {

inline DyadicTrace trace_impl(const Problem& pb, const Point& x0, double r, int H, int workers) {
  if (H < 2) throw std::invalid_argument("dyadic_trace: H must be >= 2");
  if (!(r > 0.0)) throw std::invalid_argument("dyadic_trace: radius must be positive");
  DyadicTrace t;
  t.x0 = x0;
  t.r = r;
  t.H = H;
  t.indices = pb.table().indices();
  struct Level {
    std::vector<double> a;
    double residual = std::numeric_limits<double>::quiet_NaN();
    bool empty = false;
    std::string provenance;
    double quad_error = 0.0;
  };
  auto levels = parallel_map<Level>(static_cast<std::size_t>(H + 1), workers, [&](std::size_t h) {
    Level lv;
    NodeSet ns;
    try {
      ns = pb.nodes(x0, std::ldexp(r, -static_cast<int>(h)));
    } catch (const EmptyIntersection&) {
      lv.empty = true;
      lv.a.assign(t.indices.size(), std::numeric_limits<double>::quiet_NaN());
      return lv;
    }
    const auto res = pb.fit(ns);
    for (const auto& I : t.indices) lv.a.push_back(extract_aI(res, I, pb.table()));
    lv.residual = res.residual;
    lv.provenance = ns.provenance;
    lv.quad_error = ns.quad_error;
    return lv;
  });
  bool any = false;
  for (auto& lv : levels) {
    t.a.push_back(std::move(lv.a));
    t.residuals.push_back(lv.residual);
    t.empty.push_back(lv.empty ? 1 : 0);
    t.provenance.push_back(lv.provenance);
    t.quad_error = std::max(t.quad_error, lv.quad_error);
    any = any || !lv.empty;
  }
  if (!any) throw EmptyIntersection("EmptyIntersection: every dyadic level is empty");
  return t;
}

}  // namespace detail

inline DyadicTrace dyadic_trace(const Problem& pb, const Point& x0, double r, int H) {
  return detail::trace_impl(pb, x0, r, H, pb.workers);
}

struct VIEstimate {
  MultiIndex I;
  double v = 0.0;
  std::optional<double> rate;  // empty when the increments are below tolerance ("exact")
  double theoretical_rate = 0.0;
  double C_fit = 0.0;
  bool convergence_suspect = false;
  std::vector<double> increments;  // |a_I(h+1) - a_I(h)|

  bool exact() const { return !rate.has_value(); }
};

/// v_I as the deepest trace value; the rate is the log2-slope of the successive
/// increments |a_I(r/2^{h+1}) - a_I(r/2^h)|, which decay like |a_I(r/2^h) - v_I|.
inline VIEstimate estimate_vI(const DyadicTrace& t, const MultiIndex& I, const CampanatoParams& prm, int Q,
                              int degI) {
  VIEstimate e;
  e.I = I;
  e.theoretical_rate = prm.rate(Q, degI);
  const auto s = t.series(t.position(I));
  if (s.size() < 2) throw std::invalid_argument("estimate_vI: fewer than two nonempty levels");
  e.v = s.back();
  const double tol = 1e-9 * (1.0 + std::abs(e.v));
  std::vector<double> hs, ls;
  for (std::size_t h = 0; h + 1 < s.size(); ++h) {
    const double d = std::abs(s[h + 1] - s[h]);
    e.increments.push_back(d);
    if (d > tol) {
      hs.push_back(static_cast<double>(h));
      ls.push_back(std::log2(d));
    }
  }
  if (hs.size() >= 2) {
    const double mh = std::accumulate(hs.begin(), hs.end(), 0.0) / hs.size();
    const double ml = std::accumulate(ls.begin(), ls.end(), 0.0) / ls.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      sxy += (hs[i] - mh) * (ls[i] - ml);
      sxx += (hs[i] - mh) * (hs[i] - mh);
    }
    const double slope = sxy / sxx;
    e.rate = -slope;
    const double c = ml - slope * mh;  // log2 of the increment at h = 0
    if (*e.rate > 0.0) e.C_fit = std::exp2(c) / (1.0 - std::exp2(-*e.rate)) / std::pow(t.r, *e.rate);
  } else if (hs.size() == 1) {
    e.rate = 0.0;
  }
  const auto& inc = e.increments;
  const std::size_t m = inc.size();
  if (e.rate && *e.rate <= 0.0) e.convergence_suspect = true;
  if (m >= 3 && inc[m - 1] > tol && inc[m - 1] > inc[m - 2] && inc[m - 2] > inc[m - 3]) e.convergence_suspect = true;
  return e;
}

/// One verified inequality lhs <= rhs (1 + tol) + atol.
struct LemmaRecord {
  std::string lemma;
  nlohmann::json inputs;
  double lhs = 0.0;
  double rhs = 0.0;
  double constant = 0.0;
  double tol = 0.0;
  double atol = 0.0;
  bool hard = false;  // explicit constant: failure is a hard failure
  bool pass = false;
  std::string provenance;

  double bound() const { return rhs * (1.0 + tol) + atol; }
  /// 1 - lhs / bound; nonnegative iff the record passes.
  double margin() const { return bound() > 0.0 ? 1.0 - lhs / bound() : (lhs <= 0.0 ? 0.0 : -1.0); }
  void decide() { pass = lhs <= bound(); }
};

namespace detail {

/// Absolute floor for quantities that vanish when u is a polynomial:
/// (solver tolerance * scale)^p * measure.
inline double absolute_floor(const Problem& pb, const NodeSet& ns, const std::vector<double>& u) {
  double scale = 1.0;
  for (double v : u) scale = std::max(scale, std::abs(v));
  return std::pow(pb.solver_tol() * scale, pb.params.p) * ns.total_weight;
}

inline std::string join_provenance(const std::vector<const NodeSet*>& sets) {
  std::string s;
  for (const auto* ns : sets) {
    if (!s.empty()) s += ";";
    std::ostringstream os;
    os.precision(17);
    os << ns->provenance << "@r=" << ns->radius;
    s += os.str();
  }
  return s;
}

}  // namespace detail

/// K(p, lambda) = 2^{p-1} (1 + 2^{-lambda}).
inline double concentric_constant(double p, double lambda) { return std::pow(2.0, p - 1.0) * (1.0 + std::pow(2.0, -lambda)); }

/// int_{Omega(x0, r/2^{h+1})} |P_k(r/2^h) - P_k(r/2^{h+1})|^p <= K [u]^p (r/2^h)^lambda.
inline LemmaRecord verify_concentric(const Problem& pb, const Point& x0, double r, int h, double seminorm) {
  if (h < 0) throw std::invalid_argument("verify_concentric: h must be >= 0");
  const double rh = std::ldexp(r, -h), rh1 = std::ldexp(r, -h - 1);
  const auto big = pb.nodes(x0, rh);
  const auto small = pb.nodes(x0, rh1);
  const auto ub = pb.values(big), us = pb.values(small);
  const auto Pb = best_poly(ub, big, pb.g, pb.params.k, pb.params.p, pb.solver);
  const auto Ps = best_poly(us, small, pb.g, pb.params.k, pb.params.p, pb.solver);
  std::vector<double> diff(small.size());
  for (std::size_t i = 0; i < small.size(); ++i) {
    const double d = evaluate_fit(Pb, small.points[i], pb.g) - evaluate_fit(Ps, small.points[i], pb.g);
    diff[i] = std::pow(std::abs(d), pb.params.p);
  }
  LemmaRecord rec;
  rec.lemma = "concentric";
  rec.inputs = {{"x0", x0}, {"r", r}, {"h", h}, {"k", pb.params.k}, {"p", pb.params.p}, {"lambda", pb.params.lambda},
                {"fn", pb.u.name}, {"seminorm", seminorm}};
  rec.lhs = weighted_sum(diff, small.weights);
  rec.constant = concentric_constant(pb.params.p, pb.params.lambda);
  rec.rhs = rec.constant * std::pow(seminorm, pb.params.p) * std::pow(rh, pb.params.lambda);
  rec.tol = pb.tolerance(std::max(big.quad_error, small.quad_error));
  rec.atol = detail::absolute_floor(pb, big, ub);
  rec.hard = true;
  rec.provenance = detail::join_provenance({&big, &small});
  rec.decide();
  return rec;
}

struct DeGiorgiWorst {
  MultiIndex I;
  std::vector<double> coefficients;  // chart basis z^J / J!
  double ratio = 0.0;
};

struct DeGiorgiResult {
  double C_emp = 0.0;
  std::optional<double> C_sup;  // exact supremum over P_k (p = 2)
  double A = 0.0;               // |E ∩ B(x0, r)| / r^Q
  std::vector<double> per_index;  // max ratio per graded index
  DeGiorgiWorst worst;
  int trials = 0;
  std::string provenance;
};

namespace detail {

/// |[X^I P](x0)|^p r^{Q+p|I|_G} / int_E |P|^p for P = sum c_J z^J / J! in the
/// chart of ns; independent of r because the nodes are self-similar.
inline double degiorgi_ratio(const Eigen::MatrixXd& A, const NodeSet& ns, const DerivativeTable& L, std::size_t I,
                             const Eigen::VectorXd& c, double p, int Q) {
  const Eigen::VectorXd vals = A * c;
  std::vector<double> t(static_cast<std::size_t>(vals.size()));
  const double scale = std::pow(ns.radius, -Q);
  for (Eigen::Index i = 0; i < vals.size(); ++i)
    t[static_cast<std::size_t>(i)] = ns.weights[static_cast<std::size_t>(i)] * scale * std::pow(std::abs(vals(i)), p);
  const double denom = tree_sum(t);
  double num = 0.0;
  for (Eigen::Index b = 0; b < c.size(); ++b) num += L(I, static_cast<std::size_t>(b)) * c(b);
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::pow(std::abs(num), p) / denom;
}

/// r^Q l^T G^{-1} l with G the node Gram matrix of the chart basis.
inline double degiorgi_sup2(const Eigen::MatrixXd& A, const NodeSet& ns, const DerivativeTable& L, std::size_t I,
                            int Q) {
  const auto m = A.cols();
  Eigen::VectorXd w(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) w(i) = ns.weights[static_cast<std::size_t>(i)] * std::pow(ns.radius, -Q);
  const Eigen::MatrixXd G = A.transpose() * w.asDiagonal() * A;
  Eigen::VectorXd l(m);
  for (Eigen::Index b = 0; b < m; ++b) l(b) = L(I, static_cast<std::size_t>(b));
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  if (ldlt.info() != Eigen::Success) throw RankDeficient("RankDeficient: singular Gram matrix on E");
  return l.dot(ldlt.solve(l));
}

}  // namespace detail

/// C_emp = max over random P in P_k and |I|_G <= k of
/// |[X^I P](x0)|^p r^{Q+p|I|_G} / int_E |P|^p, with E = x0 * delta_r(shape)
/// intersected with B(x0, r).
inline DeGiorgiResult verify_degiorgi(const CarnotGroup& g, const HomDistance& d, const Domain& shape, const Point& x0,
                                      double r, int k, double p, int trials, std::uint64_t seed,
                                      const QuadScheme& quad, int workers = 1,
                                      std::shared_ptr<const DerivativeTable> table = nullptr) {
  if (trials <= 0) throw std::invalid_argument("verify_degiorgi: trials must be positive");
  if (!table) table = std::make_shared<DerivativeTable>(g, k);
  const auto& L = *table;
  const auto E = Domain::scaled_copy(g, shape, x0, r);
  const auto ns = build_nodes(E, d, x0, r, quad);
  const auto A = detail::design_matrix(ns, L.indices());
  const int Q = g.homogeneous_dimension();
  const auto m = static_cast<Eigen::Index>(L.indices().size());
  if (static_cast<Eigen::Index>(ns.size()) < m) throw RankDeficient("RankDeficient: E has fewer nodes than dim P_k");

  DeGiorgiResult out;
  out.trials = trials;
  out.A = ns.total_weight / std::pow(r, Q);
  out.provenance = ns.provenance;
  struct Trial {
    Eigen::VectorXd c;
    std::vector<double> ratios;
  };
  auto results = parallel_map<Trial>(static_cast<std::size_t>(trials), workers, [&](std::size_t t) {
    auto rng = rng_stream(seed, 0xde9000000ULL + t);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Trial tr;
    for (int attempt = 0; attempt < 16; ++attempt) {
      tr.c.resize(m);
      for (Eigen::Index b = 0; b < m; ++b) tr.c(b) = unif(rng);
      tr.ratios.clear();
      bool ok = true;
      for (std::size_t I = 0; I < L.indices().size() && ok; ++I) {
        const double q = detail::degiorgi_ratio(A, ns, L, I, tr.c, p, Q);
        if (std::isnan(q)) ok = false;  // P vanishes on E: resample
        tr.ratios.push_back(q);
      }
      if (ok) return tr;
    }
    throw std::runtime_error("verify_degiorgi: random polynomials keep vanishing on E");
  });
  out.per_index.assign(L.indices().size(), 0.0);
  for (const auto& tr : results)
    for (std::size_t I = 0; I < tr.ratios.size(); ++I) {
      out.per_index[I] = std::max(out.per_index[I], tr.ratios[I]);
      if (tr.ratios[I] > out.C_emp) {
        out.C_emp = tr.ratios[I];
        out.worst = {L.indices()[I], std::vector<double>(tr.c.data(), tr.c.data() + tr.c.size()), tr.ratios[I]};
      }
    }
  if (p == 2.0) {
    double s = 0.0;
    for (std::size_t I = 0; I < L.indices().size(); ++I) s = std::max(s, detail::degiorgi_sup2(A, ns, L, I, Q));
    out.C_sup = s;
  }
  return out;
}

namespace detail {

/// Constant C for the De Giorgi step on the node set ns for index I: the exact
/// supremum when p = 2; otherwise the largest ratio among random trials and
/// the polynomial the step is applied to.
inline double degiorgi_constant(const Problem& pb, const NodeSet& ns, std::size_t I, const Eigen::VectorXd* actual,
                                int trials = 256) {
  const auto& L = pb.table();
  const auto A = design_matrix(ns, L.indices());
  const int Q = pb.g.homogeneous_dimension();
  if (pb.params.p == 2.0) return degiorgi_sup2(A, ns, L, I, Q);
  double best = 0.0;
  const auto m = A.cols();
  for (int t = 0; t < trials; ++t) {
    auto rng = rng_stream(pb.seed, 0xc0000000ULL + static_cast<std::uint64_t>(t));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::VectorXd c(m);
    for (Eigen::Index b = 0; b < m; ++b) c(b) = unif(rng);
    const double q = degiorgi_ratio(A, ns, L, I, c, pb.params.p, Q);
    if (std::isfinite(q)) best = std::max(best, q);
  }
  if (actual) {
    const double q = degiorgi_ratio(A, ns, L, I, *actual, pb.params.p, Q);
    if (std::isfinite(q)) best = std::max(best, q);
  }
  return best;
}

/// Coefficients of the fit `res` re-expressed in the chart basis of ns
/// (same base point, different radius).
inline Eigen::VectorXd rescaled_coefficients(const ApproxResult& res, const NodeSet& ns, const CarnotGroup& g) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(res.coefficients.size()));
  const double s = ns.radius / res.r;
  for (std::size_t a = 0; a < res.coefficients.size(); ++a)
    c(static_cast<Eigen::Index>(a)) = res.coefficients[a] * std::pow(s, hom_degree(res.indices[a], g));
  return c;
}

/// Chart-basis coefficients of a polynomial on the node chart of ns, by least
/// squares on the nodes (exact for elements of P_k).
inline Eigen::VectorXd chart_coefficients(const std::vector<double>& vals, const NodeSet& ns,
                                          const std::vector<MultiIndex>& idx) {
  const auto A = design_matrix(ns, idx);
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return A.colPivHouseholderQr().solve(v);
}

}  // namespace detail

/// |a_I(x0, 2rho) - a_I(y0, 2rho)|^p <= C 2^{p+lambda} [u]^p rho^{lambda-Q-pk} for |I|_G = k,
/// rho = d(x0, y0), C the De Giorgi constant of Omega(x0, rho).
inline std::vector<LemmaRecord> verify_basepoint(const Problem& pb, const Point& x0, const Point& y0, double seminorm) {
  const double rho = pb.dist(x0, y0);
  if (!(rho > 0.0)) throw std::invalid_argument("verify_basepoint: rho = d(x0, y0) must be positive");
  const auto& prm = pb.params;
  const int Q = pb.g.homogeneous_dimension();
  const auto nx = pb.nodes(x0, 2.0 * rho);
  const auto ny = pb.nodes(y0, 2.0 * rho);
  const auto E = pb.nodes(x0, rho);
  const auto ux = pb.values(nx);
  const auto Px = best_poly(ux, nx, pb.g, prm.k, prm.p, pb.solver);
  const auto Py = best_poly(pb.values(ny), ny, pb.g, prm.k, prm.p, pb.solver);
  std::vector<double> dvals(E.size());
  for (std::size_t i = 0; i < E.size(); ++i)
    dvals[i] = evaluate_fit(Px, E.points[i], pb.g) - evaluate_fit(Py, E.points[i], pb.g);
  const Eigen::VectorXd dc = detail::chart_coefficients(dvals, E, pb.table().indices());
  std::vector<LemmaRecord> out;
  for (std::size_t I = 0; I < pb.table().indices().size(); ++I) {
    const auto& idx = pb.table().indices()[I];
    if (hom_degree(idx, pb.g) != prm.k) continue;
    LemmaRecord rec;
    rec.lemma = "basepoint";
    rec.inputs = {{"x0", x0}, {"y0", y0}, {"rho", rho}, {"I", idx}, {"k", prm.k}, {"p", prm.p},
                  {"lambda", prm.lambda}, {"fn", pb.u.name}, {"seminorm", seminorm}};
    rec.lhs = std::pow(std::abs(extract_aI(Px, idx, pb.table()) - extract_aI(Py, idx, pb.table())), prm.p);
    rec.constant = detail::degiorgi_constant(pb, E, I, &dc);
    rec.rhs = rec.constant * std::pow(2.0, prm.p + prm.lambda) * std::pow(seminorm, prm.p) *
              std::pow(rho, prm.lambda - Q - prm.p * prm.k);
    rec.tol = pb.tolerance(std::max({nx.quad_error, ny.quad_error, E.quad_error}));
    double scale = 1.0;
    for (double v : ux) scale = std::max(scale, std::abs(v));
    rec.atol = std::pow(pb.solver_tol() * scale * std::pow(rho, -prm.k), prm.p);
    rec.provenance = detail::join_provenance({&nx, &ny, &E});
    rec.decide();
    out.push_back(std::move(rec));
  }
  return out;
}

/// |a_I(x0, r) - a_I(x0, r/2^h)| <= sum_{j<h} M_j [u] (r/2^j)^{(lambda-Q-p|I|_G)/p},
/// M_j = (C_j K 2^{Q+p|I|_G})^{1/p}.
inline LemmaRecord verify_radius_change(const Problem& pb, const Point& x0, double r, int h, const MultiIndex& I,
                                        double seminorm) {
  if (h < 1) throw std::invalid_argument("verify_radius_change: h must be >= 1");
  const auto& prm = pb.params;
  const int Q = pb.g.homogeneous_dimension();
  const auto pos = pb.table().position(I);
  const int degI = hom_degree(I, pb.g);
  const double K = concentric_constant(prm.p, prm.lambda);
  std::vector<NodeSet> sets;
  std::vector<ApproxResult> fits;
  double scale = 1.0;
  for (int j = 0; j <= h; ++j) {
    sets.push_back(pb.nodes(x0, std::ldexp(r, -j)));
    const auto v = pb.values(sets.back());
    for (double x : v) scale = std::max(scale, std::abs(x));
    fits.push_back(best_poly(v, sets.back(), pb.g, prm.k, prm.p, pb.solver));
  }
  LemmaRecord rec;
  rec.lemma = "radius-change";
  rec.inputs = {{"x0", x0}, {"r", r}, {"h", h}, {"I", I}, {"k", prm.k}, {"p", prm.p}, {"lambda", prm.lambda},
                {"fn", pb.u.name}, {"seminorm", seminorm}};
  rec.lhs = std::abs(extract_aI(fits[0], I, pb.table()) - extract_aI(fits[static_cast<std::size_t>(h)], I, pb.table()));
  double rhs = 0.0, cmax = 0.0;
  double qe = 0.0;
  for (int j = 0; j < h; ++j) {
    const auto& E = sets[static_cast<std::size_t>(j) + 1];
    const Eigen::VectorXd diff = detail::rescaled_coefficients(fits[static_cast<std::size_t>(j)], E, pb.g) -
                                 detail::rescaled_coefficients(fits[static_cast<std::size_t>(j) + 1], E, pb.g);
    const double C = detail::degiorgi_constant(pb, E, pos, &diff);
    cmax = std::max(cmax, C);
    const double M = std::pow(C * K * std::pow(2.0, Q + prm.p * degI), 1.0 / prm.p);
    rhs += M * seminorm * std::pow(std::ldexp(r, -j), prm.rate(Q, degI));
    qe = std::max(qe, sets[static_cast<std::size_t>(j)].quad_error);
  }
  rec.rhs = rhs;
  rec.constant = cmax;
  rec.tol = pb.tolerance(std::max(qe, sets.back().quad_error));
  rec.atol = pb.solver_tol() * scale * std::pow(std::ldexp(r, -h), -degI);
  std::vector<const NodeSet*> ptrs;
  for (const auto& s : sets) ptrs.push_back(&s);
  rec.provenance = detail::join_provenance(ptrs);
  rec.decide();
  return rec;
}

/// Dyadic-bin envelope point used by the Holder regression.
struct EnvelopePoint {
  double distance = 0.0;
  double oscillation = 0.0;
};

struct HolderProbe {
  MultiIndex I;
  std::optional<double> alpha_est;  // empty when the field is flat
  std::optional<double> alpha_theory;
  double theta_emp = 0.0;
  std::size_t pairs = 0;
  std::vector<Point> points;
  std::vector<double> v;
  std::vector<EnvelopePoint> envelope;
  bool convergence_suspect = false;

  bool flat() const { return !alpha_est.has_value(); }
};

struct HolderOptions {
  int H = 12;
  double base_r = 0.0;  // 0: diam(Omega) / 2
  int bins = 0;         // 0: all dyadic scales present
};

/// v_I on the sample points, then the log-log slope of the modulus of
/// continuity max{|v_I(x) - v_I(y)| : d(x, y) in a dyadic bin} against d,
/// over pairs with d(x, y) <= diam(Omega) / 2.
inline HolderProbe holder_probe(const Problem& pb, const MultiIndex& I, const std::vector<Point>& points,
                                double seminorm, const HolderOptions& opt = {}) {
  const auto& prm = pb.params;
  const int Q = pb.g.homogeneous_dimension();
  const int degI = hom_degree(I, pb.g);
  if (!(prm.lambda > Q + prm.p * prm.k)) throw RegimeViolation("holder_probe requires lambda > Q + pk");
  if (degI != prm.k) throw RegimeViolation("holder_probe requires |I|_G = k");
  const double diam = pb.diameter();
  const double base = opt.base_r > 0.0 ? opt.base_r : 0.5 * diam;
  HolderProbe out;
  out.I = I;
  out.alpha_theory = prm.alpha(Q);
  out.points = points;
  auto ests = parallel_map<VIEstimate>(points.size(), pb.workers, [&](std::size_t i) {
    return estimate_vI(detail::trace_impl(pb, points[i], base, opt.H, 1), I, prm, Q, degI);
  });
  for (const auto& e : ests) {
    out.v.push_back(e.v);
    out.convergence_suspect = out.convergence_suspect || e.convergence_suspect;
  }
  double vscale = 1.0;
  for (double x : out.v) vscale = std::max(vscale, std::abs(x));
  const double flat_tol = 1e-8 * vscale;
  std::map<int, EnvelopePoint> bins;
  const double alpha = out.alpha_theory.value_or(0.0);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double dxy = pb.dist(points[i], points[j]);
      if (!(dxy > 0.0) || dxy > 0.5 * diam) continue;
      ++out.pairs;
      const double osc = std::abs(out.v[i] - out.v[j]);
      const int b = static_cast<int>(std::floor(std::log2(dxy)));
      auto& e = bins[b];
      if (osc > e.oscillation) e = {dxy, osc};
      if (seminorm > 0.0 && alpha > 0.0) out.theta_emp = std::max(out.theta_emp, osc / (seminorm * std::pow(dxy, alpha)));
    }
  std::vector<double> xs, ys;
  for (const auto& [b, e] : bins) {
    out.envelope.push_back(e);
    if (e.oscillation > flat_tol) {
      xs.push_back(std::log(e.distance));
      ys.push_back(std::log(e.oscillation));
    }
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    out.alpha_est = sxy / sxx;
  }
  return out;
}

/// X_i(v_I)(x0) by central differences along t -> x0 exp(t E_i), against v_{I+e_i}(x0).
struct DerivativeRecord {
  MultiIndex I;
  int i = 0;  // zero-based direction
  Point x0;
  double fd = 0.0;
  double v_next = 0.0;
  double abs_gap = 0.0;
  double rel_gap = 0.0;
  double step = 0.0;
  double fd_error_order = 0.0;  // step^2
  double tol = 0.0;
  bool pass = false;
};

/// Admissible (I, i): k >= d_N and |I|_G <= k - d_N, or X_i horizontal and
/// |I|_G <= k - 1; X_i X^I must equal X^{I+e_i}, i.e. I vanishes before i.
inline void check_derivative_regime(const Problem& pb, const MultiIndex& I, int i) {
  const auto& prm = pb.params;
  const auto& d = pb.g.homogeneity();
  const int Q = pb.g.homogeneous_dimension();
  const int N = pb.g.dim();
  if (i < 0 || i >= N) throw std::out_of_range("derivative direction out of range");
  if (static_cast<int>(I.size()) != N) throw std::invalid_argument("multi-index length mismatch");
  if (!(prm.lambda > Q + prm.p * prm.k))
    throw RegimeViolation("RegimeViolation: lambda must exceed Q + pk = " + std::to_string(Q + prm.p * prm.k));
  const int degI = hom_degree(I, pb.g);
  const int dN = d.back();
  const bool horizontal = d[static_cast<std::size_t>(i)] == 1;
  const bool general = prm.k >= dN && degI <= prm.k - dN;
  const bool relaxed = horizontal && degI <= prm.k - 1;
  if (!general && !relaxed)
    throw RegimeViolation("RegimeViolation: need k >= d_N = " + std::to_string(dN) + " and |I|_G <= k - d_N" +
                          (horizontal ? " (or |I|_G <= k - 1 for a horizontal direction)" : "") + "; got k = " +
                          std::to_string(prm.k) + ", |I|_G = " + std::to_string(degI));
  for (int j = 0; j < i; ++j)
    if (I[static_cast<std::size_t>(j)] != 0)
      throw RegimeViolation("RegimeViolation: X_i X^I differs from X^{I+e_i} when I has entries before i");
}

struct DerivativeOptions {
  int H = 2;
  double base_r = 0.0;     // 0: diam(Omega) / 4
  double rel_step = 1e-3;  // step = rel_step * diam(Omega)
  double tol = 1e-3;
};

inline DerivativeRecord derivative_identity_check(const Problem& pb, const Point& x0, const MultiIndex& I, int i,
                                                  const DerivativeOptions& opt = {}) {
  check_derivative_regime(pb, I, i);
  const int Q = pb.g.homogeneous_dimension();
  const double diam = pb.diameter();
  const double base = opt.base_r > 0.0 ? opt.base_r : 0.25 * diam;
  MultiIndex J = I;
  J[static_cast<std::size_t>(i)] += 1;
  DerivativeRecord rec;
  rec.I = I;
  rec.i = i;
  rec.x0 = x0;
  rec.step = opt.rel_step * diam;
  rec.fd_error_order = rec.step * rec.step;
  rec.tol = opt.tol;
  const Point xp = pb.g.flow(x0, i, rec.step), xm = pb.g.flow(x0, i, -rec.step);
  const std::vector<Point> pts{xp, xm, x0};
  auto traces = parallel_map<DyadicTrace>(3, pb.workers, [&](std::size_t q) {
    return detail::trace_impl(pb, pts[q], base, opt.H, 1);
  });
  const int degI = hom_degree(I, pb.g), degJ = hom_degree(J, pb.g);
  const double vp = estimate_vI(traces[0], I, pb.params, Q, degI).v;
  const double vm = estimate_vI(traces[1], I, pb.params, Q, degI).v;
  rec.fd = (vp - vm) / (2.0 * rec.step);
  rec.v_next = estimate_vI(traces[2], J, pb.params, Q, degJ).v;
  rec.abs_gap = std::abs(rec.fd - rec.v_next);
  rec.rel_gap = rec.abs_gap / std::max(1.0, std::abs(rec.v_next));
  rec.pass = rec.abs_gap <= rec.tol;
  return rec;
}

struct ReconstructionRecord {
  std::vector<Point> samples;
  std::vector<double> v0, u, gaps;
  std::vector<std::vector<double>> level_gaps;  // |a_0(x0, r/2^h) - u(x0)| per sample and h
  double max_gap = 0.0;
  bool monotone_tail = true;  // gaps non-increasing over the last 4 levels for every sample
  double tol = 0.0;
  bool pass = false;
  std::optional<double> holder_seminorm;  // [v]_{k,alpha} over sample pairs
  int H = 0;
};

struct ReconstructionOptions {
  int H = 12;
  double base_r = 0.0;  // 0: diam(Omega) / 2
  double tol = 1e-3;
};

inline ReconstructionRecord reconstruction_check(const Problem& pb, const std::vector<Point>& samples,
                                                 const ReconstructionOptions& opt = {}) {
  const auto& prm = pb.params;
  const int Q = pb.g.homogeneous_dimension();
  if (!(prm.lambda > Q + prm.p * prm.k)) throw RegimeViolation("reconstruction_check requires lambda > Q + pk");
  const double base = opt.base_r > 0.0 ? opt.base_r : 0.5 * pb.diameter();
  ReconstructionRecord rec;
  rec.samples = samples;
  rec.H = opt.H;
  rec.tol = opt.tol;
  const MultiIndex zero(static_cast<std::size_t>(pb.g.dim()), 0);
  auto traces = parallel_map<DyadicTrace>(samples.size(), pb.workers, [&](std::size_t q) {
    return detail::trace_impl(pb, samples[q], base, opt.H, 1);
  });
  // top-degree fields for the C^{k,alpha} seminorm of the reconstruction
  std::vector<std::size_t> top;
  for (std::size_t a = 0; a < pb.table().indices().size(); ++a)
    if (hom_degree(pb.table().indices()[a], pb.g) == prm.k) top.push_back(a);
  for (std::size_t q = 0; q < samples.size(); ++q) {
    const auto& t = traces[q];
    const double uval = pb.u(samples[q]);
    const auto s = t.series(t.position(zero));
    std::vector<double> lg;
    for (double a : s) lg.push_back(std::abs(a - uval));
    const double floor = 1e-13 * (1.0 + std::abs(uval));
    for (std::size_t h = lg.size() >= 4 ? lg.size() - 3 : 1; h < lg.size(); ++h)
      if (lg[h] > lg[h - 1] + floor) rec.monotone_tail = false;
    rec.u.push_back(uval);
    rec.v0.push_back(s.back());
    rec.gaps.push_back(lg.back());
    rec.max_gap = std::max(rec.max_gap, lg.back());
    rec.level_gaps.push_back(std::move(lg));
  }
  if (const auto alpha = prm.alpha(Q); alpha && *alpha <= 1.0) {
    double best = 0.0;
    for (std::size_t a = 0; a < samples.size(); ++a)
      for (std::size_t b = a + 1; b < samples.size(); ++b) {
        const double dab = pb.dist(samples[a], samples[b]);
        if (!(dab > 0.0)) continue;
        for (auto idx : top) {
          const auto sa = traces[a].series(idx), sb = traces[b].series(idx);
          best = std::max(best, std::abs(sa.back() - sb.back()) / std::pow(dab, *alpha));
        }
      }
    rec.holder_seminorm = best;
  }
  rec.pass = rec.max_gap <= rec.tol;
  return rec;
}

}  // namespace campanato
