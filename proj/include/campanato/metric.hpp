#pragma once

#include "campanato/group.hpp"
#include "campanato/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace campanato {

enum class GaugeKind { Max, Koranyi };

inline GaugeKind parse_gauge(const std::string& s) {
  if (s == "max") return GaugeKind::Max;
  if (s == "koranyi") return GaugeKind::Koranyi;
  throw std::invalid_argument("unknown gauge '" + s + "' (expected koranyi|max)");
}

inline std::string to_string(GaugeKind k) { return k == GaugeKind::Max ? "max" : "koranyi"; }

/// Homogeneous gauge ||x|| and the left-invariant distance d(x,y) = ||x^{-1} y||.
///
/// max:     max_i |x_i|^{1/d_i}
/// koranyi: (sum_j c_j |x^(j)|^{2L/j})^{1/(2L)}, L = lcm(1..s), c_2 = 16, other c_j = 1,
///          where x^(j) is the block of stratum j. On H^n this is the Koranyi-Cygan
///          gauge for the law t + t' + 1/2 (x.y' - y.x'), a genuine metric.
class HomDistance {
 public:
  HomDistance(CarnotGroup g, GaugeKind kind) : g_(std::move(g)), kind_(kind) {
    const int s = g_.step();
    lcm_ = 1;
    for (int j = 2; j <= s; ++j) lcm_ = std::lcm(lcm_, j);
    for (int j = 1; j <= s; ++j) weight_.push_back(j == 2 ? 16.0 : 1.0);
    for (int di : g_.homogeneity()) {
      if (kind_ == GaugeKind::Max) half_width_.push_back(1.0);
      else half_width_.push_back(std::pow(weight_[di - 1], -static_cast<double>(di) / (2.0 * lcm_)));
    }
  }

  /// Koranyi on Heisenberg groups, max elsewhere.
  static HomDistance default_for(const CarnotGroup& g) {
    const bool heis = g.step() == 2 && g.strata()[1] == 1 && g.name().rfind("heisenberg", 0) == 0;
    return HomDistance(g, heis ? GaugeKind::Koranyi : GaugeKind::Max);
  }

  const CarnotGroup& group() const { return g_; }
  GaugeKind kind() const { return kind_; }

  double norm(std::span<const double> x) const {
    const auto& d = g_.homogeneity();
    if (x.size() != d.size()) throw std::invalid_argument("gauge: dimension mismatch");
    if (kind_ == GaugeKind::Max) {
      double m = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = std::fabs(x[i]);
        m = std::max(m, d[i] == 1 ? a : std::pow(a, 1.0 / d[i]));
      }
      return m;
    }
    std::vector<double> sq(static_cast<std::size_t>(g_.step()), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) sq[d[i] - 1] += x[i] * x[i];
    if (g_.step() == 1) return std::sqrt(sq[0]);
    double acc = 0.0;
    for (std::size_t j = 0; j < sq.size(); ++j) {
      const int stratum = static_cast<int>(j) + 1;
      // |x^(j)|^{2L/j} = (|x^(j)|^2)^{L/j}
      acc += weight_[j] * std::pow(sq[j], static_cast<double>(lcm_) / stratum);
    }
    return std::pow(acc, 1.0 / (2.0 * lcm_));
  }

  double operator()(std::span<const double> x, std::span<const double> y) const {
    // x^{-1} x cancels only up to rounding, which the root of the higher strata would amplify
    if (std::equal(x.begin(), x.end(), y.begin(), y.end())) return 0.0;
    return norm(g_.multiply(g_.inverse(Point(x.begin(), x.end())), y));
  }

  /// Half-widths of the tightest axis-aligned box containing the unit ball.
  const std::vector<double>& unit_box() const { return half_width_; }

  /// max d(x,z) / (d(x,y) + d(y,z)) over random triples in the unit-box scaled by `spread`.
  double quasi_triangle_constant(std::size_t samples, std::uint64_t seed, double spread = 1.0) const {
    auto rng = rng_stream(seed, 0x7a1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto n = static_cast<std::size_t>(g_.dim());
    double worst = 0.0;
    Point x(n), y(n), z(n);
    for (std::size_t s = 0; s < samples; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        const double w = std::pow(spread, g_.homogeneity()[i]) * half_width_[i];
        x[i] = w * u(rng);
        y[i] = w * u(rng);
        z[i] = w * u(rng);
      }
      const double den = (*this)(x, y) + (*this)(y, z);
      if (den > 0.0) worst = std::max(worst, (*this)(x, z) / den);
    }
    return worst;
  }

 private:
  CarnotGroup g_;
  GaugeKind kind_;
  int lcm_ = 1;
  std::vector<double> weight_;
  std::vector<double> half_width_;
};

namespace detail {

struct Interval {
  double lo = 0.0, hi = 0.0;
};

inline Interval ipow(Interval a, int e) {
  if (e == 0) return {1.0, 1.0};
  const double p1 = std::pow(a.lo, e), p2 = std::pow(a.hi, e);
  if (e % 2 == 0 && a.lo <= 0.0 && a.hi >= 0.0) return {0.0, std::max(p1, p2)};
  return {std::min(p1, p2), std::max(p1, p2)};
}

inline Interval mul(Interval a, Interval b) {
  const double c[4] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
  return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
}

/// Enclosure of p over a box of intervals.
inline Interval enclose(const Polynomial<double>& p, const std::vector<Interval>& box) {
  Interval acc{0.0, 0.0};
  for (const auto& [j, c] : p.terms()) {
    Interval m{c, c};
    for (std::size_t i = 0; i < j.size(); ++i)
      if (j[i]) m = mul(m, ipow(box[i], j[i]));
    acc.lo += m.lo;
    acc.hi += m.hi;
  }
  return acc;
}

/// Axis-aligned enclosure of x0 * delta_r(B) for a box B given by half-widths.
inline std::pair<Point, Point> translated_box(const CarnotGroup& g, const Point& x0, double r,
                                              const std::vector<double>& lo, const std::vector<double>& hi) {
  const auto n = static_cast<std::size_t>(g.dim());
  std::vector<Interval> box;
  for (std::size_t i = 0; i < n; ++i) box.push_back({x0[i], x0[i]});
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::pow(r, g.homogeneity()[i]);
    box.push_back({s * lo[i], s * hi[i]});
  }
  Point blo(n), bhi(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto iv = enclose(g.tables<double>().law[k], box);
    blo[k] = iv.lo;
    bhi[k] = iv.hi;
  }
  return {blo, bhi};
}

}  // namespace detail

/// A bounded region of the group given by a membership predicate and a bounding box.
class Domain {
 public:
  using Predicate = std::function<bool(std::span<const double>)>;

  Domain(std::string kind, Predicate contains, Point lo, Point hi, std::optional<double> volume,
         nlohmann::json spec)
      : kind_(std::move(kind)),
        contains_(std::move(contains)),
        lo_(std::move(lo)),
        hi_(std::move(hi)),
        volume_(volume),
        spec_(std::move(spec)) {
    if (lo_.size() != hi_.size()) throw std::invalid_argument("domain box dimension mismatch");
    for (std::size_t i = 0; i < lo_.size(); ++i)
      if (!(lo_[i] <= hi_[i])) throw std::invalid_argument("domain box is inverted");
  }

  bool contains(std::span<const double> x) const {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < lo_[i] || x[i] > hi_[i]) return false;
    return contains_(x);
  }
  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  const std::string& kind() const { return kind_; }
  std::optional<double> volume() const { return volume_; }
  const nlohmann::json& spec() const { return spec_; }

  Point center() const {
    Point c(lo_.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (lo_[i] + hi_[i]);
    return c;
  }

  /// Open box lo < x < hi.
  static Domain box(Point lo, Point hi) {
    double vol = 1.0;
    for (std::size_t i = 0; i < lo.size(); ++i) vol *= hi.at(i) - lo[i];
    nlohmann::json spec = {{"kind", "box"}, {"lo", lo}, {"hi", hi}};
    auto l = lo, h = hi;
    return Domain(
        "box",
        [l, h](std::span<const double> x) {
          for (std::size_t i = 0; i < x.size(); ++i)
            if (!(x[i] > l[i] && x[i] < h[i])) return false;
          return true;
        },
        std::move(lo), std::move(hi), vol, spec);
  }

  /// The part of the box with x_axis > cut.
  static Domain halfbox(Point lo, Point hi, int axis, double cut) {
    if (axis < 0 || static_cast<std::size_t>(axis) >= lo.size()) throw std::invalid_argument("halfbox axis out of range");
    auto b = box(lo, hi);
    Point l2 = lo;
    l2[axis] = std::clamp(cut, lo[axis], hi[axis]);
    double vol = 1.0;
    for (std::size_t i = 0; i < lo.size(); ++i) vol *= hi[i] - l2[i];
    nlohmann::json spec = {{"kind", "halfbox"}, {"lo", lo}, {"hi", hi}, {"axis", axis}, {"cut", cut}};
    return Domain(
        "halfbox",
        [b, axis, cut](std::span<const double> x) { return x[axis] > cut && b.contains(x); },
        l2, std::move(hi), vol, spec);
  }

  /// Open gauge ball d(center, x) < radius.
  static Domain gauge_ball(const HomDistance& d, Point center, double radius,
                           std::optional<double> unit_volume = std::nullopt) {
    if (!(radius > 0.0)) throw std::invalid_argument("ball radius must be positive");
    const auto& g = d.group();
    std::vector<double> lo, hi;
    for (double w : d.unit_box()) {
      lo.push_back(-w);
      hi.push_back(w);
    }
    auto [blo, bhi] = detail::translated_box(g, center, radius, lo, hi);
    std::optional<double> vol;
    if (unit_volume) vol = *unit_volume * std::pow(radius, g.homogeneous_dimension());
    nlohmann::json spec = {{"kind", "gauge_ball"}, {"center", center}, {"radius", radius}};
    return Domain(
        "gauge_ball", [d, center, radius](std::span<const double> x) { return d(center, x) < radius; }, blo, bhi,
        vol, spec);
  }

  /// outer \ inner.
  static Domain difference(const Domain& outer, const Domain& inner) {
    nlohmann::json spec = {{"kind", "difference"}, {"outer", outer.spec()}, {"inner", inner.spec()}};
    return Domain(
        "difference", [outer, inner](std::span<const double> x) { return outer.contains(x) && !inner.contains(x); },
        outer.lo(), outer.hi(), std::nullopt, spec);
  }

  /// The set x0 * delta_r(shape): x belongs when delta_{1/r}(x0^{-1} x) is in shape.
  static Domain scaled_copy(const CarnotGroup& g, const Domain& shape, const Point& x0, double r) {
    auto [blo, bhi] = detail::translated_box(g, x0, r, shape.lo(), shape.hi());
    std::optional<double> vol;
    if (shape.volume()) vol = *shape.volume() * std::pow(r, g.homogeneous_dimension());
    nlohmann::json spec = {{"kind", "scaled"}, {"shape", shape.spec()}, {"base", x0}, {"r", r}};
    const Point inv = g.inverse(x0);
    return Domain(
        "scaled",
        [g, shape, inv, r](std::span<const double> x) {
          return shape.contains(g.dilate(1.0 / r, g.multiply(inv, x)));
        },
        blo, bhi, vol, spec);
  }

  /// {"kind":"gauge_ball"|"box"|"halfbox"|"difference", ...}
  static Domain from_json(const nlohmann::json& j, const HomDistance& d) {
    const auto kind = j.at("kind").get<std::string>();
    const auto n = static_cast<std::size_t>(d.group().dim());
    auto vec = [&](const char* key, double fallback) {
      if (!j.contains(key)) return Point(n, fallback);
      auto v = j.at(key).get<Point>();
      if (v.size() != n) throw std::invalid_argument(std::string("domain field '") + key + "' has wrong dimension");
      return v;
    };
    if (kind == "box") return box(vec("lo", -1.0), vec("hi", 1.0));
    if (kind == "halfbox") return halfbox(vec("lo", -1.0), vec("hi", 1.0), j.value("axis", 0), j.value("cut", 0.0));
    if (kind == "gauge_ball") return gauge_ball(d, vec("center", 0.0), j.value("radius", 1.0));
    if (kind == "difference") return difference(from_json(j.at("outer"), d), from_json(j.at("inner"), d));
    throw std::invalid_argument("unknown domain kind '" + kind + "'");
  }

  /// Largest distance between sampled points of the domain (a lower estimate
  /// of the diameter, exact for boxes and balls up to the sampling grid).
  double diameter(const HomDistance& d, int per_axis = 9) const {
    const auto n = lo_.size();
    std::vector<Point> pts;
    std::vector<int> idx(n, 0);
    while (true) {
      Point p(n);
      for (std::size_t i = 0; i < n; ++i) p[i] = lo_[i] + (hi_[i] - lo_[i]) * idx[i] / (per_axis - 1);
      if (contains(p)) pts.push_back(p);
      std::size_t a = 0;
      while (a < n && ++idx[a] == per_axis) idx[a++] = 0;
      if (a == n) break;
    }
    double best = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t k = i + 1; k < pts.size(); ++k) best = std::max(best, d(pts[i], pts[k]));
    // box faces are excluded by the open predicates; the box diagonal bounds from above
    double box_diam = 0.0;
    if (kind_ == "box" || kind_ == "halfbox") box_diam = d(lo_, hi_);
    return std::max(best, box_diam);
  }

 private:
  std::string kind_;
  Predicate contains_;
  Point lo_, hi_;
  std::optional<double> volume_;
  nlohmann::json spec_;
};

struct MeasureEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct MonteCarloConfig {
  std::size_t samples = 1000000;
  std::uint64_t seed = 1;
  int workers = 1;
};

/// Monte-Carlo Lebesgue measure of B(0, r) sampled in its bounding box.
inline MeasureEstimate ball_measure(const HomDistance& d, double r, const MonteCarloConfig& mc) {
  if (!(r > 0.0)) throw std::invalid_argument("ball_measure: radius must be positive");
  if (mc.samples == 0) throw std::invalid_argument("ball_measure: sampler needs at least one sample");
  const auto& g = d.group();
  const auto n = static_cast<std::size_t>(g.dim());
  std::vector<double> hw(n);
  double box_vol = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    hw[i] = std::pow(r, g.homogeneity()[i]) * d.unit_box()[i];
    box_vol *= 2.0 * hw[i];
  }
  constexpr std::size_t chunk = 1 << 15;
  const std::size_t chunks = (mc.samples + chunk - 1) / chunk;
  std::uint64_t rbits = 0;
  std::memcpy(&rbits, &r, sizeof rbits);
  auto counts = parallel_map<std::size_t>(chunks, mc.workers, [&](std::size_t c) {
    auto rng = rng_stream(mc.seed ^ splitmix64(rbits), c);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t m = std::min(chunk, mc.samples - c * chunk);
    std::size_t hits = 0;
    Point z(n);
    for (std::size_t s = 0; s < m; ++s) {
      for (std::size_t i = 0; i < n; ++i) z[i] = hw[i] * u(rng);
      if (d.norm(z) < r) ++hits;
    }
    return hits;
  });
  const std::size_t hits = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const double p = static_cast<double>(hits) / static_cast<double>(mc.samples);
  return {box_vol * p, box_vol * std::sqrt(p * (1.0 - p) / static_cast<double>(mc.samples))};
}

}  // namespace campanato
