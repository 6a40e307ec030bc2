#include "campanato/campanato.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace campanato;

namespace {

Problem euclid_problem(const std::string& fn, int k, double p, double lambda, int res = 1000) {
  const auto g = CarnotGroup::builtin("euclidean:1");
  const HomDistance d(g, GaugeKind::Max);
  return Problem(g, d, Domain::box({-1}, {1}), make_function(fn, d), {k, p, lambda}, QuadScheme::grid(res));
}

Problem heis_problem(const Function& u, int k, double p, double lambda, int res = 24) {
  const auto g = CarnotGroup::builtin("heisenberg:1");
  const HomDistance d(g, GaugeKind::Koranyi);
  return Problem(g, d, Domain::box({-1, -1, -1}, {1, 1, 1}), u, {k, p, lambda}, QuadScheme::grid(res));
}

/// A random absolute-frame polynomial of homogeneous degree <= k.
HPolynomial<double> random_poly(const CarnotGroup& g, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Polynomial<double> p(g.dim());
  for (const auto& J : graded_indices(g, k)) p.add_term(J, u(rng));
  return HPolynomial<double>(p);
}

/// Points x0 + s 2^{-j} on both sides plus a uniform grid, for modulus-of-continuity probes.
std::vector<Point> line_points(int grid, int ladder) {
  std::vector<Point> pts;
  for (int i = 0; i < grid; ++i) pts.push_back({-1.0 + (i + 0.5) * 2.0 / grid});
  pts.push_back({0.0});
  for (int j = 0; j <= ladder; ++j)
    for (double s : {0.9, -0.9}) pts.push_back({s * std::ldexp(1.0, -j)});
  return pts;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST(Campanato, RegimeClassification) {
  const int Q = 4;
  EXPECT_EQ((CampanatoParams{1, 2.0, 6.0}).regime(Q), Regime::SubCritical);
  EXPECT_EQ((CampanatoParams{1, 2.0, 7.0}).regime(Q), Regime::Holder);
  EXPECT_EQ((CampanatoParams{1, 2.0, 8.0}).regime(Q), Regime::Holder);
  EXPECT_EQ((CampanatoParams{1, 2.0, 8.5}).regime(Q), Regime::DegeneratePolynomial);
  EXPECT_EQ((CampanatoParams{1, 2.0, 7.0}).alpha(Q), std::optional<double>(0.5));
  EXPECT_FALSE((CampanatoParams{1, 2.0, 6.0}).alpha(Q).has_value());
  EXPECT_THROW((CampanatoParams{-1, 2.0, 1.0}).validate(), std::invalid_argument);
  EXPECT_THROW((CampanatoParams{0, 0.5, 1.0}).validate(), std::invalid_argument);
  EXPECT_EQ(to_string(Regime::Holder), "holder");
}

TEST(Campanato, SeminormOfPolynomialVanishes) {
  const auto g = CarnotGroup::builtin("heisenberg:1");
  for (double p : {2.0, 1.5}) {
    const auto pb = heis_problem(polynomial_function(random_poly(g, 2, 3), g), 2, p, 9.0, 16);
    const auto est = seminorm_estimate(pb, default_plan(pb, 2, 3));
    EXPECT_LE(est.value, 1e-7) << "p=" << p;
    EXPECT_TRUE(est.skipped.empty());
  }
}

TEST(Campanato, SeminormStableUnderRefinement) {
  const auto pb = euclid_problem("absx^0.5", 0, 2.0, 2.0);
  const double a = seminorm_estimate(pb, default_plan(pb, 21, 8)).value;
  const double b = seminorm_estimate(pb, default_plan(pb, 21, 12)).value;
  EXPECT_GT(a, 0.0);
  EXPECT_NEAR(b, a, 0.05 * a);
}

TEST(Campanato, SeminormDivergesAboveTrueRegularity) {
  const auto pb = euclid_problem("absx^0.5", 0, 2.0, 2.5);
  std::vector<double> v;
  for (int depth : {4, 8, 12}) v.push_back(seminorm_estimate(pb, default_plan(pb, 21, depth)).value);
  EXPECT_GT(v[1], v[0]);
  EXPECT_GT(v[2], v[1]);
  // growth like 2^{h (lambda - 2) / 2} = 2^{h/4}: a factor near 2 per four levels
  EXPECT_GT(v[2] / v[1], 1.5);
}

TEST(Campanato, SeminormMonotoneAndHomogeneous) {
  const auto pb = euclid_problem("absx^0.5", 0, 2.0, 2.0, 400);
  const auto small = default_plan(pb, 5, 4);
  auto big = small;
  big.append(default_plan(pb, 9, 6));
  const auto a = seminorm_estimate(pb, small), b = seminorm_estimate(pb, big);
  EXPECT_GE(b.value, a.value);
  const auto scaled = seminorm_estimate(pb.with_function(pb.u.scaled(-3.0)), big);
  EXPECT_NEAR(scaled.value, 3.0 * b.value, 1e-8 * b.value);
  EXPECT_EQ(scaled.argmax_r, b.argmax_r);
  EXPECT_EQ(scaled.argmax_x0, b.argmax_x0);
}

TEST(Campanato, FullNorm) {
  const auto zero = euclid_problem("zero", 0, 2.0, 2.0, 200);
  const auto plan = default_plan(zero, 5, 4);
  EXPECT_EQ(full_norm(zero, plan).value, 0.0);

  const auto g = CarnotGroup::builtin("euclidean:1");
  Polynomial<double> q(1);
  q.add_term({0}, 0.5);
  q.add_term({1}, -1.0);
  const auto poly = zero.with_function(polynomial_function(HPolynomial<double>(q), g)).with_params({1, 2.0, 2.0});
  const auto n = full_norm(poly, plan);
  EXPECT_NEAR(n.value, n.lp_norm, 1e-8);

  const auto u = euclid_problem("absx^0.5", 0, 2.0, 2.0, 200);
  const double a = full_norm(u, plan).value;
  EXPECT_NEAR(full_norm(u.with_function(u.u.scaled(2.0)), plan).value, 2 * a, 1e-8 * a);
}

TEST(Campanato, DyadicTraceOfSquare) {
  const auto pb = euclid_problem("poly:{\"terms\":{\"(2)\":1.0}}", 2, 2.0, 2.0, 400);
  const auto t = dyadic_trace(pb, {0.3}, 0.5, 6);
  for (const auto v : t.series(t.position({2}))) EXPECT_NEAR(v, 2.0, 1e-9);
  for (const auto v : t.series(t.position({1}))) EXPECT_NEAR(v, 0.6, 1e-9);
  for (const auto v : t.series(t.position({0}))) EXPECT_NEAR(v, 0.09, 1e-9);
  EXPECT_THROW(dyadic_trace(pb, {0.3}, 0.5, 1), std::invalid_argument);
}

TEST(Campanato, DyadicTraceOfKoranyiQuartic) {
  // ||x||^4 = (x^2 + y^2)^2 + 16 t^2 is a polynomial of homogeneous degree 4
  const auto g = CarnotGroup::builtin("heisenberg:1");
  const HomDistance d(g, GaugeKind::Koranyi);
  Polynomial<Rational> q(3);
  q.add_term({4, 0, 0}, 1);
  q.add_term({2, 2, 0}, 2);
  q.add_term({0, 4, 0}, 1);
  q.add_term({0, 0, 2}, 16);
  const HPolynomial<Rational> P(q);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ur(-1, 1);
  for (int t = 0; t < 20; ++t) {
    const Point x{ur(rng), ur(rng), ur(rng)};
    EXPECT_NEAR(evaluate(HPolynomial<double>(q.cast<double>()), x, g), std::pow(d.norm(x), 4), 1e-12);
  }
  const auto pb = heis_problem(make_function("gauge^4", d), 4, 2.0, 20.0, 22);
  const std::vector<Rational> x0{Rational(1, 5), Rational(-1, 10), Rational(3, 10)};
  const Point x0d{0.2, -0.1, 0.3};
  const auto tr = dyadic_trace(pb, x0d, 0.4, 3);
  for (const auto& I : pb.table().indices()) {
    const double exact = to_double(evaluate(apply_XI(P, I, g), x0, g));
    for (double a : tr.series(tr.position(I))) EXPECT_NEAR(a, exact, 1e-6 * std::max(1.0, std::abs(exact))) << to_string(I);
  }
}

TEST(Campanato, EstimateVIExactForPolynomials) {
  const auto pb = euclid_problem("poly:{\"terms\":{\"(1)\":2.0,\"(0)\":1.0}}", 1, 2.0, 4.0, 400);
  const auto t = dyadic_trace(pb, {0.1}, 0.5, 5);
  const auto e0 = estimate_vI(t, {0}, pb.params, 1, 0);
  EXPECT_TRUE(e0.exact());
  EXPECT_NEAR(e0.v, 1.2, 1e-12);
  const auto e1 = estimate_vI(t, {1}, pb.params, 1, 1);
  EXPECT_TRUE(e1.exact());
  EXPECT_NEAR(e1.v, 2.0, 1e-12);
}

TEST(Campanato, EstimateVIRate) {
  // |x|^{3/2}, k = 1, p = 2, lambda = 4 (alpha = 1/2); a_0(0, r) = c r^{3/2}
  const auto pb = euclid_problem("absx^1.5", 1, 2.0, 4.0);
  const auto t = dyadic_trace(pb, {0.0}, 0.5, 12);
  const auto e = estimate_vI(t, {0}, pb.params, 1, 0);
  EXPECT_NEAR(e.v, 0.0, 1e-5);
  ASSERT_TRUE(e.rate.has_value());
  EXPECT_DOUBLE_EQ(e.theoretical_rate, 1.5);
  EXPECT_GE(*e.rate, e.theoretical_rate - 0.1);
  EXPECT_FALSE(e.convergence_suspect);
}

TEST(Campanato, LimitIndependentOfStartingRadius) {
  const auto pb = euclid_problem("absx^1.5", 1, 2.0, 4.0);
  for (double x : {0.0, 0.3}) {
    const auto a = estimate_vI(dyadic_trace(pb, {x}, 0.5, 14), {0}, pb.params, 1, 0);
    const auto b = estimate_vI(dyadic_trace(pb, {x}, 0.35, 14), {0}, pb.params, 1, 0);
    EXPECT_NEAR(a.v, b.v, 1e-6) << "x0=" << x;
    EXPECT_NEAR(a.v, std::pow(std::abs(x), 1.5), 1e-6);
  }
}

TEST(Campanato, ConcentricLemma) {
  EXPECT_DOUBLE_EQ(concentric_constant(2.0, 1.0), 3.0);
  // Jensen step |a - b|^p <= 2^{p-1} (|a - c|^p + |b - c|^p)
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10, 10), up(1, 4);
  for (int t = 0; t < 10000; ++t) {
    const double a = u(rng), b = u(rng), c = u(rng), p = up(rng);
    EXPECT_LE(std::pow(std::abs(a - b), p),
              std::pow(2.0, p - 1) * (std::pow(std::abs(a - c), p) + std::pow(std::abs(b - c), p)) * (1 + 1e-12));
  }

  const auto g = CarnotGroup::builtin("heisenberg:1");
  const auto poly = heis_problem(polynomial_function(random_poly(g, 2, 5), g), 2, 2.0, 9.0, 16);
  const auto rec = verify_concentric(poly, {0.1, 0.2, 0.0}, 0.5, 1, 0.0);
  EXPECT_TRUE(rec.pass);
  EXPECT_TRUE(rec.hard);
  EXPECT_LE(rec.lhs, 1e-12);

  const auto pb = euclid_problem("absx^0.5", 0, 2.0, 2.0);
  const double sem = seminorm_estimate(pb, default_plan(pb, 21, 12)).value;
  std::mt19937_64 r2(3);
  std::uniform_real_distribution<double> ux(-1, 1), ur(0.05, 1.0);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const auto rec2 = verify_concentric(pb, {ux(r2)}, ur(r2), 1 + static_cast<int>(r2() % 4), sem);
    EXPECT_TRUE(rec2.pass) << rec2.lhs << " vs " << rec2.rhs;
    worst = std::max(worst, rec2.lhs / rec2.rhs);
  }
  EXPECT_LT(worst, 1.0);
}

TEST(Campanato, DeGiorgiInterval) {
  const auto g = CarnotGroup::builtin("euclidean:1");
  const HomDistance d(g, GaugeKind::Max);
  const auto res = verify_degiorgi(g, d, Domain::box({-1}, {1}), {0.0}, 1.0, 0, 2.0, 50, 1, QuadScheme::grid(1000));
  EXPECT_NEAR(res.C_emp, 0.5, 1e-12);
  ASSERT_TRUE(res.C_sup.has_value());
  EXPECT_NEAR(*res.C_sup, 0.5, 1e-12);
  EXPECT_NEAR(res.A, 2.0, 1e-9);
}

TEST(Campanato, DeGiorgiScaleInvarianceAndMonotonicity) {
  const auto g = CarnotGroup::builtin("heisenberg:1");
  const HomDistance d(g, GaugeKind::Koranyi);
  const auto shape = Domain::halfbox({-1, -1, -1}, {1, 1, 1}, 0, 0.0);
  const Point x0{0.1, -0.2, 0.3};
  const auto q = QuadScheme::grid(20);
  const auto a = verify_degiorgi(g, d, shape, x0, 0.5, 2, 2.0, 64, 7, q);
  const auto b = verify_degiorgi(g, d, shape, x0, 1.0, 2, 2.0, 64, 7, q);
  EXPECT_TRUE(std::isfinite(a.C_emp));
  EXPECT_NEAR(b.C_emp, a.C_emp, 0.01 * a.C_emp);
  EXPECT_NEAR(*b.C_sup, *a.C_sup, 0.01 * *a.C_sup);
  EXPECT_LE(a.C_emp, *a.C_sup * (1 + 1e-9));
  double prev_A = 1e300, prev_C = 0.0;
  for (double cut : {-0.5, 0.0, 0.5, 0.8}) {
    const auto r = verify_degiorgi(g, d, Domain::halfbox({-1, -1, -1}, {1, 1, 1}, 0, cut), x0, 0.5, 1, 2.0, 32, 7, q);
    EXPECT_LT(r.A, prev_A);
    EXPECT_GT(*r.C_sup, prev_C);
    prev_A = r.A;
    prev_C = *r.C_sup;
  }
}

TEST(Campanato, BasepointLemma) {
  const auto g = CarnotGroup::builtin("heisenberg:1");
  const auto poly = heis_problem(polynomial_function(random_poly(g, 1, 6), g), 1, 2.0, 7.0, 16);
  for (const auto& rec : verify_basepoint(poly, {0, 0, 0}, {0.1, 0.05, 0.02}, 0.0)) {
    EXPECT_TRUE(rec.pass);
    EXPECT_LE(rec.lhs, 1e-12);
  }
  EXPECT_THROW(verify_basepoint(poly, {0, 0, 0}, {0, 0, 0}, 0.0), std::invalid_argument);

  const auto pb = euclid_problem("absx^0.5", 0, 2.0, 2.0);
  const double sem = seminorm_estimate(pb, default_plan(pb, 21, 12)).value;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (int t = 0; t < 100; ++t) {
    const Point x0{u(rng)};
    const Point y0{std::clamp(x0[0] + 0.3 * u(rng), -0.95, 0.95)};
    if (x0 == y0) continue;
    for (const auto& rec : verify_basepoint(pb, x0, y0, sem)) EXPECT_TRUE(rec.pass) << rec.lhs << " vs " << rec.rhs;
  }
  // lhs ~ rho^{lambda - Q - pk}: slope >= 1 - 0.2
  std::vector<double> lr, ll;
  for (int j = 2; j <= 9; ++j) {
    const double rho = std::ldexp(1.0, -j);
    const auto recs = verify_basepoint(pb, {0.0}, {rho}, sem);
    lr.push_back(std::log(rho));
    ll.push_back(std::log(recs.front().lhs));
  }
  EXPECT_GE(loglog_slope(lr, ll), 2.0 - 1.0 - 0.0 - 0.2);
}

TEST(Campanato, RadiusChangeLemma) {
  const auto g = CarnotGroup::builtin("heisenberg:1");
  const auto poly = heis_problem(polynomial_function(random_poly(g, 2, 7), g), 2, 2.0, 9.0, 16);
  const auto prec = verify_radius_change(poly, {0, 0.1, 0}, 0.5, 2, {1, 0, 0}, 0.0);
  EXPECT_TRUE(prec.pass);
  EXPECT_LE(prec.lhs, 1e-9);

  // convergent case: lambda > Q + p|I|_G
  const auto pb = euclid_problem("absx^1.5", 1, 2.0, 4.0);
  const double sem = seminorm_estimate(pb, default_plan(pb, 21, 10)).value;
  double prev_rhs = 0, prev_lhs = 0;
  for (int h = 1; h <= 8; ++h) {
    const auto rec = verify_radius_change(pb, {0.0}, 0.5, h, {0}, sem);
    EXPECT_TRUE(rec.pass) << "h=" << h;
    EXPECT_GE(rec.rhs, prev_rhs);
    if (h >= 5) EXPECT_LE(std::abs(rec.lhs - prev_lhs), 0.1 * rec.lhs);
    prev_rhs = rec.rhs;
    prev_lhs = rec.lhs;
  }
  EXPECT_LT(prev_rhs, 10 * verify_radius_change(pb, {0.0}, 0.5, 1, {0}, sem).rhs);

  // divergent case: lambda < Q + p|I|_G, slope coefficient of |x|^{1/2} near the origin
  const auto rough = euclid_problem("absx^0.5", 1, 2.0, 2.0);
  const double sr = seminorm_estimate(rough, default_plan(rough, 21, 10)).value;
  double last = 0;
  for (int h = 1; h <= 6; ++h) {
    const auto rec = verify_radius_change(rough, {0.01}, 0.5, h, {1}, sr);
    EXPECT_TRUE(rec.pass) << "h=" << h;
    EXPECT_GT(rec.rhs, last);
    last = rec.rhs;
  }
}

TEST(Campanato, HolderProbe) {
  const auto pb = euclid_problem("absx^0.5", 0, 2.0, 2.0);
  const double sem = seminorm_estimate(pb, default_plan(pb, 21, 12)).value;
  HolderOptions opt;
  opt.H = 20;
  const auto hp = holder_probe(pb, {0}, line_points(84, 10), sem, opt);
  ASSERT_TRUE(hp.alpha_est.has_value());
  EXPECT_GE(*hp.alpha_est, 0.45);
  EXPECT_LE(*hp.alpha_est, 0.55);
  EXPECT_GE(hp.pairs, 200u);
  EXPECT_GT(hp.theta_emp, 0.0);

  const auto flat = euclid_problem("poly:{\"terms\":{\"(0)\":0.7}}", 0, 2.0, 2.0, 200);
  EXPECT_TRUE(holder_probe(flat, {0}, line_points(10, 2), 0.0, {6, 0.0, 0}).flat());

  // lambda > Q + p(k+1): the top-degree field is constant
  Function u;
  u.name = "1+2x+1e-9 sin x";
  u.eval = [](const Point& x) { return 1 + 2 * x[0] + 1e-9 * std::sin(x[0]); };
  const auto deg = flat.with_function(u).with_params({1, 2.0, 6.0});
  const auto hd = holder_probe(deg, {1}, line_points(10, 2), 0.0, {6, 0.0, 0});
  for (double v : hd.v) EXPECT_NEAR(v, 2.0, 1e-8);
  EXPECT_THROW(holder_probe(pb.with_params({0, 2.0, 0.5}), {0}, line_points(4, 1), sem), RegimeViolation);
}

TEST(Campanato, DerivativeIdentity) {
  const auto pb = euclid_problem("poly:{\"terms\":{\"(3)\":1.0}}", 3, 2.0, 8.0);
  for (double x : {-0.4, 0.1, 0.5}) {
    const auto rec = derivative_identity_check(pb, {x}, {1}, 0);
    EXPECT_NEAR(rec.v_next, 6 * x, 1e-6);
    EXPECT_LE(rec.abs_gap, 1e-4);
    EXPECT_TRUE(rec.pass);
  }
  const auto g = CarnotGroup::builtin("heisenberg:1");
  const auto hp = heis_problem(polynomial_function(random_poly(g, 1, 8), g), 1, 2.0, 7.0, 16);
  EXPECT_THROW(derivative_identity_check(hp, {0, 0, 0}, {0, 0, 0}, 2), RegimeViolation);
  const auto h3 = hp.with_params({3, 2.0, 10.5});
  EXPECT_THROW(check_derivative_regime(h3, {1, 0, 0}, 2), RegimeViolation);  // |I|_G > k - d_N
  EXPECT_THROW(check_derivative_regime(h3, {1, 0, 0}, 1), RegimeViolation);  // X_2 X_1 is not X^{(1,1,0)}
  EXPECT_NO_THROW(check_derivative_regime(h3, {0, 1, 0}, 0));
  EXPECT_NO_THROW(check_derivative_regime(h3, {1, 0, 0}, 0));
  EXPECT_NO_THROW(check_derivative_regime(h3, {0, 1, 0}, 1));
  EXPECT_NO_THROW(check_derivative_regime(h3, {0, 0, 0}, 2));
  EXPECT_THROW(check_derivative_regime(hp.with_params({3, 2.0, 9.0}), {0, 0, 0}, 0), RegimeViolation);
}

TEST(Campanato, ReconstructionOfPolynomial) {
  const auto g = CarnotGroup::builtin("heisenberg:1");
  const auto pb = heis_problem(polynomial_function(random_poly(g, 2, 9), g), 2, 2.0, 8.5, 16);
  ReconstructionOptions opt;
  opt.H = 3;
  const auto rec = reconstruction_check(pb, {{0, 0, 0}, {0.3, -0.2, 0.1}}, opt);
  EXPECT_LE(rec.max_gap, 1e-10);
  EXPECT_TRUE(rec.pass);
  EXPECT_THROW(reconstruction_check(pb.with_params({2, 2.0, 8.0}), {{0, 0, 0}}, opt), RegimeViolation);
}

TEST(Campanato, AbelianTraceMatchesIndependentReference) {
  // reference: closed-form weighted least squares on the midpoint rule of (x0 - r, x0 + r) ∩ (-1, 1)
  const int res = 1000;
  for (double beta : {0.5, 1.5, 2.5}) {
    std::ostringstream fn;
    fn << "absx^" << beta;
    const auto pb = euclid_problem(fn.str(), 1, 2.0, 1.0 + 2.0 + 2.0 * (beta - 1.0) + 0.5, res);
    const Point x0{0.15};
    const auto tr = dyadic_trace(pb, x0, 0.5, 8);
    for (int h = 0; h <= 8; ++h) {
      const double r = std::ldexp(0.5, -h);
      double s0 = 0, s1 = 0, s2 = 0, b0 = 0, b1 = 0;
      for (int i = 0; i < res; ++i) {
        const double z = -1.0 + (i + 0.5) * 2.0 / res;
        const double x = x0[0] + r * z;
        if (!(x > -1.0 && x < 1.0)) continue;
        const double u = std::pow(std::abs(x), beta);
        s0 += 1;
        s1 += z;
        s2 += z * z;
        b0 += u;
        b1 += u * z;
      }
      const double det = s0 * s2 - s1 * s1;
      const double c0 = (b0 * s2 - b1 * s1) / det, c1 = (s0 * b1 - s1 * b0) / det;
      EXPECT_NEAR(tr.a[h][tr.position({0})], c0, 1e-6) << "beta=" << beta << " h=" << h;
      EXPECT_NEAR(tr.a[h][tr.position({1})], c1 / r, 1e-6 * std::max(1.0, std::abs(c1 / r))) << "beta=" << beta;
    }
  }
}
