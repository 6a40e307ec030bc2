#pragma once

#include "campanato/hpoly.hpp"
#include "campanato/metric.hpp"
#include "campanato/parallel.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace campanato {

/// No quadrature node of Omega(x0, r) passed membership.
struct EmptyIntersection : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteValue : std::runtime_error {
  NonFiniteValue(std::size_t node, const std::string& what) : std::runtime_error(what), node_index(node) {}
  std::size_t node_index;
};

struct QuadratureFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor grid with `resolution` cells per axis, or `count` seeded Monte-Carlo samples.
struct QuadScheme {
  enum class Kind { Grid, MonteCarlo };
  Kind kind = Kind::Grid;
  int resolution = 0;
  std::size_t count = 0;
  std::uint64_t seed = 1;

  static QuadScheme grid(int res) { return {Kind::Grid, res, 0, 1}; }
  static QuadScheme monte_carlo(std::size_t count, std::uint64_t seed) { return {Kind::MonteCarlo, 0, count, seed}; }

  /// "grid:<res>" or "mc:<count>".
  static QuadScheme parse(const std::string& s, std::uint64_t seed = 1) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("quadrature scheme must be grid:<res> or mc:<count>");
    const auto kind = s.substr(0, colon);
    const auto val = std::stoll(s.substr(colon + 1));
    if (val <= 0) throw std::invalid_argument("quadrature size must be positive");
    if (kind == "grid") return grid(static_cast<int>(val));
    if (kind == "mc") return monte_carlo(static_cast<std::size_t>(val), seed);
    throw std::invalid_argument("unknown quadrature kind '" + kind + "'");
  }

  /// Grid sized for the dimension, Monte Carlo from N = 5 on.
  static QuadScheme default_for(int dim, std::uint64_t seed = 1) {
    switch (dim) {
      case 1: return grid(1000);
      case 2: return grid(80);
      case 3: return grid(28);
      case 4: return grid(14);
      default: return monte_carlo(20000, seed);
    }
  }

  std::string str() const {
    return kind == Kind::Grid ? "grid:" + std::to_string(resolution) : "mc:" + std::to_string(count);
  }
};

/// Weighted nodes on Omega(x0, r). Nodes are laid out in the chart
/// z = delta_{1/r}(x0^{-1} x), where B(x0, r) becomes the unit ball and the
/// Jacobian of x -> z is the constant r^{-Q}.
struct NodeSet {
  std::vector<Point> points;  // absolute coordinates
  std::vector<Point> local;   // chart coordinates
  std::vector<double> weights;
  Point base;                 // x0
  double radius = 0.0;        // r
  std::string provenance;
  double total_weight = 0.0;
  /// Relative error estimate of integrals (boundary-cell fraction / 2 for
  /// grids, binomial standard error for Monte Carlo).
  double quad_error = 0.0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

namespace detail {

inline void finalize(NodeSet& ns) {
  ns.total_weight = tree_sum(ns.weights);
}

}  // namespace detail

/// Nodes of Omega(x0, r) = Omega ∩ B(x0, r).
inline NodeSet build_nodes(const Domain& omega, const HomDistance& dist, const Point& x0, double r,
                           const QuadScheme& scheme) {
  if (!(r > 0.0)) throw std::invalid_argument("build_nodes: radius must be positive");
  const auto& g = dist.group();
  const auto n = static_cast<std::size_t>(g.dim());
  if (x0.size() != n) throw std::invalid_argument("build_nodes: base point dimension mismatch");
  const auto& hw = dist.unit_box();
  const double jac = std::pow(r, g.homogeneous_dimension());
  double box_vol = 1.0;
  for (double w : hw) box_vol *= 2.0 * w;

  NodeSet ns;
  ns.base = x0;
  ns.radius = r;
  auto accept = [&](const Point& z, Point& x) {
    if (!(dist.norm(z) < 1.0)) return false;
    x = g.multiply(x0, g.dilate(r, z));
    return omega.contains(x);
  };

  if (scheme.kind == QuadScheme::Kind::Grid) {
    const int res = scheme.resolution;
    if (res <= 0) throw std::invalid_argument("grid resolution must be positive");
    std::size_t cells = 1;
    for (std::size_t i = 0; i < n; ++i) cells *= static_cast<std::size_t>(res);
    std::vector<char> inside(cells, 0);
    std::vector<Point> xs(cells), zs(cells);
    std::vector<int> idx(n, 0);
    for (std::size_t c = 0; c < cells; ++c) {
      std::size_t rem = c;
      Point z(n);
      for (std::size_t i = 0; i < n; ++i) {
        idx[i] = static_cast<int>(rem % res);
        rem /= res;
        z[i] = -hw[i] + (idx[i] + 0.5) * (2.0 * hw[i] / res);
      }
      Point x;
      if (accept(z, x)) {
        inside[c] = 1;
        xs[c] = std::move(x);
        zs[c] = std::move(z);
      }
    }
    const double w = box_vol / static_cast<double>(cells) * jac;
    std::size_t boundary = 0;
    for (std::size_t c = 0; c < cells; ++c) {
      if (!inside[c]) continue;
      bool edge = false;
      std::size_t stride = 1;
      std::size_t rem = c;
      for (std::size_t i = 0; i < n && !edge; ++i) {
        const auto k = static_cast<int>(rem % res);
        rem /= res;
        if (k == 0 || k == res - 1 || !inside[c - stride] || !inside[c + stride]) edge = true;
        stride *= static_cast<std::size_t>(res);
      }
      if (edge) ++boundary;
      ns.points.push_back(std::move(xs[c]));
      ns.local.push_back(std::move(zs[c]));
      ns.weights.push_back(w);
    }
    ns.provenance = "grid:" + std::to_string(res);
    ns.quad_error = ns.points.empty() ? 1.0 : 0.5 * static_cast<double>(boundary) / static_cast<double>(ns.points.size());
  } else {
    if (scheme.count == 0) throw std::invalid_argument("Monte-Carlo node count must be positive");
    // the stream depends only on (seed, x0, r), never on scheduling
    std::uint64_t h = 0x51ed;
    for (double v : x0) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = splitmix64(h ^ bits);
    }
    std::uint64_t rbits;
    std::memcpy(&rbits, &r, sizeof rbits);
    auto rng = rng_stream(scheme.seed, splitmix64(h ^ rbits));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double w = box_vol / static_cast<double>(scheme.count) * jac;
    Point z(n);
    for (std::size_t s = 0; s < scheme.count; ++s) {
      for (std::size_t i = 0; i < n; ++i) z[i] = hw[i] * u(rng);
      Point x;
      if (accept(z, x)) {
        ns.points.push_back(std::move(x));
        ns.local.push_back(z);
        ns.weights.push_back(w);
      }
    }
    const double p = static_cast<double>(ns.points.size()) / static_cast<double>(scheme.count);
    ns.provenance = "mc:" + std::to_string(scheme.count) + "@" + std::to_string(scheme.seed);
    ns.quad_error = p > 0.0 ? std::sqrt((1.0 - p) / (p * static_cast<double>(scheme.count))) : 1.0;
  }
  if (ns.points.empty()) {
    std::ostringstream os;
    os << "EmptyIntersection: no quadrature node of Omega(x0, r) for r=" << r << " at x0=(";
    for (std::size_t i = 0; i < n; ++i) os << (i ? "," : "") << x0[i];
    os << ") with " << scheme.str();
    throw EmptyIntersection(os.str());
  }
  detail::finalize(ns);
  return ns;
}

/// Nodes covering the whole domain on a grid over its bounding box.
inline NodeSet build_domain_nodes(const Domain& omega, const QuadScheme& scheme) {
  const auto n = omega.lo().size();
  NodeSet ns;
  ns.base = omega.center();
  double box_vol = 1.0;
  for (std::size_t i = 0; i < n; ++i) box_vol *= omega.hi()[i] - omega.lo()[i];
  if (scheme.kind == QuadScheme::Kind::Grid) {
    const int res = scheme.resolution;
    std::size_t cells = 1;
    for (std::size_t i = 0; i < n; ++i) cells *= static_cast<std::size_t>(res);
    const double w = box_vol / static_cast<double>(cells);
    for (std::size_t c = 0; c < cells; ++c) {
      std::size_t rem = c;
      Point x(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<int>(rem % res);
        rem /= res;
        x[i] = omega.lo()[i] + (k + 0.5) * (omega.hi()[i] - omega.lo()[i]) / res;
      }
      if (!omega.contains(x)) continue;
      ns.local.push_back(x);
      ns.points.push_back(std::move(x));
      ns.weights.push_back(w);
    }
    ns.provenance = "domain-grid:" + std::to_string(res);
    ns.quad_error = 0.5 * 2.0 * static_cast<double>(n) / res;
  } else {
    auto rng = rng_stream(scheme.seed, 0xd0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double w = box_vol / static_cast<double>(scheme.count);
    for (std::size_t s = 0; s < scheme.count; ++s) {
      Point x(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = omega.lo()[i] + u(rng) * (omega.hi()[i] - omega.lo()[i]);
      if (!omega.contains(x)) continue;
      ns.local.push_back(x);
      ns.points.push_back(std::move(x));
      ns.weights.push_back(w);
    }
    const double p = static_cast<double>(ns.points.size()) / static_cast<double>(scheme.count);
    ns.provenance = "domain-mc:" + std::to_string(scheme.count) + "@" + std::to_string(scheme.seed);
    ns.quad_error = p > 0.0 ? std::sqrt((1.0 - p) / (p * static_cast<double>(scheme.count))) : 1.0;
  }
  if (ns.points.empty()) throw EmptyIntersection("EmptyIntersection: domain has no quadrature nodes");
  detail::finalize(ns);
  return ns;
}

/// sum_i w_i v_i, summed over a fixed tree.
inline double weighted_sum(std::span<const double> values, std::span<const double> weights) {
  std::vector<double> prod(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) prod[i] = values[i] * weights[i];
  return tree_sum(prod);
}

/// sum_i w_i f(x_i).
template <class F>
double integrate(F&& f, const NodeSet& ns) {
  std::vector<double> v(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    v[i] = f(ns.points[i]);
    if (!std::isfinite(v[i]))
      throw NonFiniteValue(i, "integrand is not finite at node " + std::to_string(i));
  }
  return weighted_sum(v, ns.weights);
}

struct ThicknessPlan {
  std::vector<Point> centers;
  std::vector<double> radii;
};

struct ThicknessEstimate {
  double A_est = 0.0;
  Point worst_center;
  double worst_radius = 0.0;
};

/// min over sampled (x0, r) of |Omega(x0, r)| / r^Q.
inline ThicknessEstimate thickness_estimate(const Domain& omega, const HomDistance& dist, const ThicknessPlan& plan,
                                            const QuadScheme& scheme) {
  if (plan.centers.empty() || plan.radii.empty()) throw std::invalid_argument("thickness_estimate: empty sample plan");
  const int Q = dist.group().homogeneous_dimension();
  ThicknessEstimate best;
  best.A_est = std::numeric_limits<double>::infinity();
  for (const auto& x0 : plan.centers)
    for (double r : plan.radii) {
      double measure = 0.0;
      try {
        measure = build_nodes(omega, dist, x0, r, scheme).total_weight;
      } catch (const EmptyIntersection&) {
        if (omega.contains(x0))
          throw QuadratureFailure("zero measure estimate at interior point; refine the quadrature");
      }
      const double ratio = measure / std::pow(r, Q);
      if (ratio < best.A_est) best = {ratio, x0, r};
    }
  return best;
}

}  // namespace campanato
