#include "campanato/approx.hpp"
#include "campanato/functions.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <random>

using namespace campanato;

namespace {

/// A one-dimensional node set with explicit nodes, values and weights.
NodeSet line_nodes(const std::vector<double>& xs, const std::vector<double>& ws) {
  NodeSet ns;
  ns.base = {0.0};
  ns.radius = 1.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ns.points.push_back({xs[i]});
    ns.local.push_back({xs[i]});
    ns.weights.push_back(ws[i]);
  }
  ns.total_weight = std::accumulate(ws.begin(), ws.end(), 0.0);
  ns.provenance = "explicit";
  return ns;
}

struct Setup {
  CarnotGroup g;
  HomDistance d;
  Domain omega;
  Point x0;
  double r;
  NodeSet ns;
};

Setup heisenberg_setup(double r = 0.4, int res = 20) {
  const auto g = CarnotGroup::builtin("heisenberg:1");
  const HomDistance d(g, GaugeKind::Koranyi);
  auto omega = Domain::halfbox({-1, -1, -1}, {1, 1, 1}, 0, -0.1);
  const Point x0{0.05, 0.2, -0.1};
  auto ns = build_nodes(omega, d, x0, r, QuadScheme::grid(res));
  return {g, d, omega, x0, r, std::move(ns)};
}

double lp_residual(const ApproxResult& fit, const std::vector<double>& u, const NodeSet& ns, const CarnotGroup& g,
                   const std::vector<double>& coefficients) {
  ApproxResult probe = fit;
  probe.coefficients = coefficients;
  double s = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i)
    s += ns.weights[i] * std::pow(std::abs(u[i] - evaluate_fit(probe, ns.points[i], g)), fit.p);
  return std::pow(s, 1.0 / fit.p);
}

std::vector<double> sample(const Function& f, const NodeSet& ns) {
  std::vector<double> v;
  for (const auto& x : ns.points) v.push_back(f(x));
  return v;
}

}  // namespace

TEST(Approx, RecoversPolynomials) {
  auto s = heisenberg_setup();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k <= 3; ++k) {
    const auto idx = graded_indices(s.g, k);
    Polynomial<double> chart(3);
    std::vector<double> c;
    for (const auto& J : idx) {
      c.push_back(u(rng));
      chart.add_term(J, c.back() / factorial(J));
    }
    const auto P = polynomial_function(HPolynomial<double>(chart, Frame<double>::at(s.x0, s.r)), s.g);
    for (double p : {1.0, 1.5, 2.0, 3.0}) {
      const auto fit = best_poly(P.eval, s.ns, s.g, k, p);
      EXPECT_LE(fit.residual, 1e-10) << "k=" << k << " p=" << p;
      for (std::size_t a = 0; a < c.size(); ++a) EXPECT_NEAR(fit.coefficients[a], c[a], 1e-8) << "k=" << k << " p=" << p;
    }
  }
}

TEST(Approx, LeastSquaresMatchesNormalEquationsOracle) {
  auto s = heisenberg_setup();
  const auto f = make_function("gauge^0.5", s.d);
  const auto vals = sample(f, s.ns);
  for (int k = 0; k <= 3; ++k) {
    const auto fit = best_poly(vals, s.ns, s.g, k, 2.0);
    // independent path: basis polynomials in the unscaled translated frame, evaluated at absolute points
    const auto B = basis<double>(s.g, k, s.x0);
    const auto m = static_cast<Eigen::Index>(B.size());
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < s.ns.size(); ++i) {
      Eigen::VectorXd phi(m);
      for (Eigen::Index a = 0; a < m; ++a) phi(a) = evaluate(B[a], s.ns.points[i], s.g);
      G += s.ns.weights[i] * phi * phi.transpose();
      b += s.ns.weights[i] * vals[i] * phi;
    }
    const Eigen::VectorXd c = G.ldlt().solve(b);
    for (Eigen::Index a = 0; a < m; ++a)
      EXPECT_NEAR(fit.coefficient(fit.indices[a], s.g), c(a), 1e-8 * std::max(1.0, std::abs(c(a)))) << "k=" << k;
    // the fit satisfies the normal equations
    Eigen::VectorXd cf(m);
    for (Eigen::Index a = 0; a < m; ++a) cf(a) = fit.coefficient(fit.indices[a], s.g);
    EXPECT_LE((G * cf - b).norm(), 1e-10 * std::max(1.0, b.norm())) << "k=" << k;
  }
}

TEST(Approx, WeightedMedian) {
  const auto g = CarnotGroup::builtin("euclidean:1");
  const auto ns = line_nodes({-0.5, 0.0, 0.5}, {1, 1, 1});
  const std::vector<double> u{0, 0, 1};
  const auto fit = best_poly(u, ns, g, 0, 1.0);
  // exhaustive scan over constants
  double best_c = 0, best = 1e300;
  for (int i = -2000; i <= 3000; ++i) {
    const double c = i * 1e-3;
    const double v = std::abs(c) * 2 + std::abs(1 - c);
    if (v < best) {
      best = v;
      best_c = c;
    }
  }
  EXPECT_NEAR(fit.coefficients[0], best_c, 1e-9);
  EXPECT_NEAR(fit.coefficients[0], 0.0, 1e-9);
  EXPECT_NEAR(fit.residual, 1.0, 1e-9);
  EXPECT_FALSE(fit.nonunique);
}

TEST(Approx, L1TieReturnsMinimumNormMinimizer) {
  const auto g = CarnotGroup::builtin("euclidean:1");
  const auto ns = line_nodes({-0.5, 0.5}, {1, 1});
  const auto fit = best_poly(std::vector<double>{1, 3}, ns, g, 0, 1.0);
  EXPECT_TRUE(fit.nonunique);
  EXPECT_NEAR(fit.coefficients[0], 1.0, 1e-9);
  EXPECT_NEAR(fit.residual, 2.0, 1e-9);
}

TEST(Approx, Errors) {
  const auto g = CarnotGroup::builtin("euclidean:2");
  NodeSet ns;
  ns.base = {0, 0};
  ns.radius = 1.0;
  for (int i = 0; i < 10; ++i) {
    const double t = -1 + 0.2 * i;
    ns.points.push_back({t, 2 * t});  // all on a line: quadratics are not determined
    ns.local.push_back({t, 2 * t});
    ns.weights.push_back(0.1);
  }
  std::vector<double> u(10, 1.0);
  EXPECT_THROW(best_poly(u, ns, g, 2, 2.0), RankDeficient);
  EXPECT_THROW(best_poly(u, ns, g, 0, 0.5), std::invalid_argument);
  EXPECT_THROW(best_poly(std::vector<double>(3, 1.0), ns, g, 0, 2.0), std::invalid_argument);
  NodeSet tiny = ns;
  tiny.points.resize(2);
  tiny.local.resize(2);
  tiny.weights.resize(2);
  EXPECT_THROW(best_poly(std::vector<double>(2, 1.0), tiny, g, 2, 2.0), RankDeficient);
  u[3] = std::nan("");
  EXPECT_THROW(best_poly(u, ns, g, 0, 2.0), NonFiniteValue);
  EXPECT_THROW(best_poly(std::vector<double>{}, NodeSet{}, g, 0, 2.0), EmptyIntersection);
}

TEST(Approx, NoConvergenceCarriesBestIterate) {
  auto s = heisenberg_setup();
  const auto f = make_function("gauge^0.5", s.d);
  ApproxOptions opt;
  opt.max_iter = 1;
  try {
    best_poly(f.eval, s.ns, s.g, 2, 4.0, opt);
    FAIL() << "expected NoConvergence";
  } catch (const NoConvergence& e) {
    EXPECT_EQ(e.best.coefficients.size(), graded_indices(s.g, 2).size());
    EXPECT_TRUE(std::isfinite(e.best.residual));
  }
}

TEST(Approx, FirstOrderOptimality) {
  auto s = heisenberg_setup();
  const auto f = make_function("gauge^0.5", s.d);
  const auto vals = sample(f, s.ns);
  std::mt19937_64 rng(2);
  for (double p : {1.5, 2.0, 3.0}) {
    const auto fit = best_poly(vals, s.ns, s.g, 2, p);
    for (int t = 0; t < 20; ++t) {
      auto c = fit.coefficients;
      const auto a = rng() % c.size();
      c[a] += (rng() % 2 ? 1e-4 : -1e-4);
      EXPECT_GE(lp_residual(fit, vals, s.ns, s.g, c), fit.residual * (1 - 1e-12)) << "p=" << p;
    }
  }
}

TEST(Approx, L1OptimalityAgainstPerturbations) {
  auto s = heisenberg_setup(0.4, 14);
  const auto f = make_function("abs1^0.5", s.d);
  const auto vals = sample(f, s.ns);
  const auto fit = best_poly(vals, s.ns, s.g, 1, 1.0);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    auto c = fit.coefficients;
    const auto a = rng() % c.size();
    c[a] += (rng() % 2 ? 1e-4 : -1e-4);
    EXPECT_GE(lp_residual(fit, vals, s.ns, s.g, c), fit.residual * (1 - 1e-12));
  }
}

TEST(Approx, LeastSquaresResidualIsOrthogonal) {
  auto s = heisenberg_setup();
  const auto f = make_function("bump", s.d);
  const auto vals = sample(f, s.ns);
  const auto fit = best_poly(vals, s.ns, s.g, 3, 2.0);
  double unorm = 0;
  for (std::size_t i = 0; i < vals.size(); ++i) unorm += s.ns.weights[i] * vals[i] * vals[i];
  unorm = std::sqrt(unorm);
  for (const auto& b : basis<double>(s.g, 3, s.x0)) {
    double ip = 0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const auto& x = s.ns.points[i];
      ip += s.ns.weights[i] * (vals[i] - evaluate_fit(fit, x, s.g)) * evaluate(b, x, s.g);
    }
    EXPECT_LE(std::abs(ip), 1e-8 * unorm);
  }
}

TEST(Approx, TranslationConsistency) {
  const auto g = CarnotGroup::builtin("heisenberg:1");
  const HomDistance d(g, GaugeKind::Koranyi);
  const auto omega = Domain::halfbox({-1, -1, -1}, {1, 1, 1}, 1, -0.2);
  const Point x0{0.1, -0.05, 0.2}, h{0.3, -0.4, 0.7};
  const auto f = make_function("gauge^0.5", d);
  // u'(x) = u(h x) on Omega' = h^{-1} Omega, fitted at h^{-1} x0
  const auto omega2 = Domain::scaled_copy(g, omega, g.inverse(h), 1.0);
  const auto shifted = [&](const Point& x) { return f(g.multiply(h, x)); };
  for (double p : {2.0, 1.5}) {
    const auto a = best_poly(f.eval, build_nodes(omega, d, x0, 0.5, QuadScheme::grid(18)), g, 2, p);
    const auto b = best_poly(shifted, build_nodes(omega2, d, g.multiply(g.inverse(h), x0), 0.5, QuadScheme::grid(18)),
                             g, 2, p);
    for (std::size_t i = 0; i < a.coefficients.size(); ++i) EXPECT_NEAR(a.coefficients[i], b.coefficients[i], 1e-8);
  }
}

TEST(Approx, ResidualMonotoneInDegree) {
  auto s = heisenberg_setup();
  const auto f = make_function("gauge^0.5", s.d);
  const auto vals = sample(f, s.ns);
  for (double p : {1.0, 1.5, 2.0, 3.0}) {
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 4; ++k) {
      const double r = best_poly(vals, s.ns, s.g, k, p).residual;
      EXPECT_LE(r, prev * (1 + 1e-9)) << "p=" << p << " k=" << k;
      prev = r;
    }
  }
}

TEST(Approx, DerivativeExtraction) {
  auto s = heisenberg_setup();
  const auto f = make_function("bump", s.d);
  const DerivativeTable L(s.g, 3);
  const auto fit = best_poly(f.eval, s.ns, s.g, 3, 2.0);
  EXPECT_NEAR(extract_aI(fit, s.x0, {0, 0, 0}, s.g), evaluate_fit(fit, s.x0, s.g), 1e-12);
  for (const auto& I : graded_indices(s.g, 3))
    EXPECT_NEAR(extract_aI(fit, I, L), extract_aI(fit, s.x0, I, s.g), 1e-9) << to_string(I);
  EXPECT_THROW(extract_aI(fit, s.x0, {0, 0, 2}, s.g), DegreeOverflow);
  EXPECT_THROW(extract_aI(fit, {0, 0, 2}, L), DegreeOverflow);
}

TEST(Approx, EuclideanDerivativeIsCoefficient) {
  const auto g = CarnotGroup::builtin("euclidean:2");
  const HomDistance d(g, GaugeKind::Max);
  const auto ns = build_nodes(Domain::box({-1, -1}, {1, 1}), d, {0.1, 0.2}, 0.5, QuadScheme::grid(30));
  const auto fit = best_poly(make_function("bump", d).eval, ns, g, 3, 2.0);
  for (const auto& I : graded_indices(g, 3)) {
    // raw monomial coefficient times I!
    const double raw = fit.coefficient(I, g) / factorial(I);
    EXPECT_NEAR(extract_aI(fit, {0.1, 0.2}, I, g), factorial(I) * raw, 1e-10);
  }
}

TEST(Approx, TopDegreeDerivativeIsConstant) {
  auto s = heisenberg_setup();
  const auto f = make_function("gauge^0.5", s.d);
  const auto fit = best_poly(f.eval, s.ns, s.g, 2, 2.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto& I : graded_indices(s.g, 2)) {
    if (hom_degree(I, s.g) != 2) continue;
    const double at0 = derivative_at(fit, I, s.x0, s.g);
    for (int t = 0; t < 10; ++t)
      EXPECT_NEAR(derivative_at(fit, I, {u(rng), u(rng), u(rng)}, s.g), at0, 1e-9 * std::max(1.0, std::abs(at0)));
  }
}
