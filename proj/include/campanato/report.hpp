#pragma once

#include "campanato/campanato.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace campanato {

/// Invalid run configuration, with the offending field or line.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PlanSpec {
  int x0 = 5;         // centres per axis
  double rmax = 0.0;  // 0: diam(Omega)
  int depth = 6;      // radius ladder levels and dyadic trace depth

  /// "x0:<n> rmax:<f> depth:<H>" (tokens separated by spaces or commas, any subset).
  static PlanSpec parse(const std::string& s, PlanSpec base) {
    std::string t = s;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream in(t);
    std::string tok;
    while (in >> tok) {
      const auto c = tok.find(':');
      if (c == std::string::npos) throw ConfigError("plan: token '" + tok + "' is not key:value");
      const auto key = tok.substr(0, c), val = tok.substr(c + 1);
      try {
        if (key == "x0") base.x0 = std::stoi(val);
        else if (key == "rmax") base.rmax = std::stod(val);
        else if (key == "depth") base.depth = std::stoi(val);
        else throw ConfigError("plan: unknown key '" + key + "'");
      } catch (const std::logic_error&) {
        throw ConfigError("plan: bad value in '" + tok + "'");
      }
    }
    if (base.x0 < 1) throw ConfigError("plan: x0 must be >= 1");
    if (base.depth < 2) throw ConfigError("plan: depth must be >= 2");
    if (base.rmax < 0.0) throw ConfigError("plan: rmax must be >= 0");
    return base;
  }

  static PlanSpec parse(const std::string& s);

  std::string str() const {
    std::ostringstream os;
    os.precision(17);
    os << "x0:" << x0 << " rmax:" << rmax << " depth:" << depth;
    return os.str();
  }
};

inline PlanSpec PlanSpec::parse(const std::string& s) { return parse(s, PlanSpec{}); }

struct RunConfig {
  std::string command = "verify";  // describe | verify | seminorm | trace
  nlohmann::json group = "heisenberg:1";
  std::string gauge = "default";
  nlohmann::json domain = "unit-box";
  std::string fn = "gauge^0.5";
  CampanatoParams params{0, 2.0, 0.0};
  bool lambda_set = false;
  PlanSpec plan;
  std::string quad;  // empty: default for the dimension
  std::uint64_t seed = 1;
  std::string suite = "all";
  int trials = 200;
  int instances = 50;
  std::optional<Point> x0;
  std::string out;
  int workers = 1;

  /// The configuration as embedded in reports; the worker count and output
  /// directory do not influence results and are left out.
  nlohmann::json to_json() const {
    nlohmann::json j = {{"command", command}, {"group", group}, {"gauge", gauge}, {"domain", domain}, {"fn", fn},
                        {"k", params.k}, {"p", params.p}, {"lambda", params.lambda}, {"plan", plan.str()},
                        {"quad", quad}, {"seed", seed}, {"suite", suite}, {"trials", trials},
                        {"instances", instances}};
    if (x0) j["x0"] = *x0;
    return j;
  }

  /// Overlays the fields present in j.
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [key, val] : j.items()) {
      try {
        if (key == "command") command = val.get<std::string>();
        else if (key == "group") group = val;
        else if (key == "gauge") gauge = val.get<std::string>();
        else if (key == "domain") domain = val;
        else if (key == "fn") fn = val.get<std::string>();
        else if (key == "k") params.k = val.get<int>();
        else if (key == "p") params.p = val.get<double>();
        else if (key == "lambda") {
          params.lambda = val.get<double>();
          lambda_set = true;
        } else if (key == "plan") plan = val.is_string() ? PlanSpec::parse(val.get<std::string>(), plan)
                                                          : PlanSpec::parse(plan_from_object(val), plan);
        else if (key == "quad") quad = val.get<std::string>();
        else if (key == "seed") seed = val.get<std::uint64_t>();
        else if (key == "suite") suite = val.get<std::string>();
        else if (key == "trials") trials = val.get<int>();
        else if (key == "instances") instances = val.get<int>();
        else if (key == "x0") x0 = val.get<Point>();
        else if (key == "out") out = val.get<std::string>();
        else if (key == "workers") workers = val.get<int>();
        else throw ConfigError("config: unknown field '" + key + "'");
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: field '" + key + "': " + e.what());
      }
    }
  }

  /// Reads a JSON config file; parse errors report the line.
  static nlohmann::json read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      const auto upto = std::min<std::size_t>(e.byte, text.size());
      const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto > 0 ? upto - 1 : 0), '\n');
      throw ConfigError(path + ":" + std::to_string(line) + ": " + e.what());
    }
  }

 private:
  static std::string plan_from_object(const nlohmann::json& v) {
    std::string s;
    for (const auto& [key, val] : v.items()) s += key + ":" + val.dump() + " ";
    return s;
  }
};

/// Group, distance and domain resolved from a configuration.
struct Setting {
  CarnotGroup g;
  HomDistance dist;
  Domain omega;
};

inline Domain resolve_domain(const nlohmann::json& spec, const HomDistance& d) {
  const auto n = static_cast<std::size_t>(d.group().dim());
  nlohmann::json j = spec;
  if (spec.is_string()) {
    const auto s = spec.get<std::string>();
    if (s == "unit-box") return Domain::box(Point(n, -1.0), Point(n, 1.0));
    if (s == "unit-ball") return Domain::gauge_ball(d, Point(n, 0.0), 1.0);
    if (s == "empty") return Domain::box(Point(n, 0.0), Point(n, 0.0));
    if (!s.empty() && s.front() == '{') {
      j = nlohmann::json::parse(s);
    } else {
      std::ifstream in(s);
      if (!in) throw ConfigError("domain: '" + s + "' is neither a builtin (unit-box, unit-ball, empty) nor a readable file");
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("domain file '" + s + "': " + e.what());
      }
    }
  }
  try {
    return Domain::from_json(j, d);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("domain: ") + e.what());
  }
}

inline Setting resolve_setting(const RunConfig& cfg) {
  auto g = CarnotGroup::from_json(cfg.group);
  auto d = cfg.gauge == "default" ? HomDistance::default_for(g) : HomDistance(g, parse_gauge(cfg.gauge));
  auto omega = resolve_domain(cfg.domain, d);
  return {g, d, omega};
}

inline std::string describe(const RunConfig& cfg) {
  const auto g = CarnotGroup::from_json(cfg.group);
  const int Q = g.homogeneous_dimension();
  std::ostringstream os;
  os.precision(10);
  os << g.name() << ": " << g.summary() << "\n";
  os << "dim P_k = " << graded_indices(g, cfg.params.k).size() << " (k=" << cfg.params.k << ")\n";
  os << "regime: " << to_string(cfg.params.regime(Q)) << " (k=" << cfg.params.k << " p=" << cfg.params.p
     << " lambda=" << cfg.params.lambda << ", Q+pk=" << Q + cfg.params.p * cfg.params.k << ")\n";
  if (const auto a = cfg.params.alpha(Q)) os << "alpha = " << *a << "\n";
  return os.str();
}

inline nlohmann::json record_json(const LemmaRecord& r) {
  return {{"lemma", r.lemma}, {"inputs", r.inputs}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"constant", r.constant},
          {"tol", r.tol}, {"atol", r.atol}, {"margin", r.margin()}, {"pass", r.pass}, {"hard", r.hard},
          {"provenance", r.provenance}};
}

struct SuiteReport {
  nlohmann::json json;
  std::vector<LemmaRecord> records;
  std::vector<std::string> plot_trace;   // CSV rows
  std::vector<std::string> plot_holder;  // CSV rows
  std::vector<std::string> errors;

  bool hard_failure() const {
    return std::any_of(records.begin(), records.end(), [](const auto& r) { return r.hard && !r.pass; });
  }
  bool soft_failure() const {
    return std::any_of(records.begin(), records.end(), [](const auto& r) { return !r.hard && !r.pass; });
  }
  /// 0 all assertions pass, 2 only empirical margins fail, 1 errors or hard failures.
  int exit_code() const {
    if (!errors.empty() || hard_failure()) return 1;
    return soft_failure() ? 2 : 0;
  }
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string csv_quote(const std::string& s) {
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

/// Sample points for the Holder probe: domain grid, centre, and a geometric
/// ladder towards the centre along the first axis.
inline std::vector<Point> holder_points(const Problem& pb, int per_axis, int depth) {
  auto pts = domain_grid(pb.omega, std::max(per_axis, 2) * 4);
  const Point c = pb.omega.center();
  if (pb.omega.contains(c)) pts.push_back(c);
  const double span = 0.9 * (pb.omega.hi()[0] - c[0]);
  // finer scales than about r / 2^{H/2} are dominated by the trace truncation
  for (int j = 0; j <= depth / 2; ++j)
    for (double s : {1.0, -1.0}) {
      Point x = c;
      x[0] += s * span * std::ldexp(1.0, -j);
      if (pb.omega.contains(x)) pts.push_back(x);
    }
  return pts;
}

}  // namespace detail

/// Executes the configured command and assembles the report (no file output).
inline SuiteReport run_suite(const RunConfig& cfg) {
  using detail::csv_quote;
  using detail::fmt;
  SuiteReport rep;
  rep.json["config"] = cfg.to_json();
  const auto st = resolve_setting(cfg);
  const auto& g = st.g;
  const int Q = g.homogeneous_dimension();
  const auto& prm = cfg.params;
  rep.json["group"] = {{"name", g.name()}, {"summary", g.summary()}};
  rep.json["dim_Pk"] = graded_indices(g, prm.k).size();
  rep.json["regime"] = to_string(prm.regime(Q));
  if (const auto a = prm.alpha(Q)) rep.json["alpha"] = *a;
  const auto quad = cfg.quad.empty() ? QuadScheme::default_for(g.dim(), cfg.seed) : QuadScheme::parse(cfg.quad, cfg.seed);
  rep.json["quad"] = quad.str();
  auto u = make_function(cfg.fn, st.dist);
  Problem pb(g, st.dist, st.omega, u, prm, quad);
  pb.workers = cfg.workers;
  pb.seed = cfg.seed;
  const double diam = pb.diameter();
  rep.json["diameter"] = diam;
  const auto centers = domain_grid(pb.omega, cfg.plan.x0);
  if (centers.empty())
    throw EmptyIntersection("EmptyIntersection: the domain contains no plan centre (empty or degenerate domain)");
  const auto base_plan = default_plan(pb, cfg.plan.x0, cfg.plan.depth, cfg.plan.rmax);
  const double rtop = cfg.plan.rmax > 0.0 ? cfg.plan.rmax : diam;
  std::mt19937_64 rng = rng_stream(cfg.seed, 0x5e1ec7);

  auto seminorm_json = [&](const SeminormEstimate& s) {
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& sk : s.skipped) skipped.push_back({{"x0", sk.x0}, {"r", sk.r}, {"error", sk.error}});
    return nlohmann::json{{"value", s.value}, {"argmax", {{"x0", s.argmax_x0}, {"r", s.argmax_r}}},
                          {"pairs", s.values.size()}, {"skipped", skipped}, {"quad_error", s.quad_error}};
  };
  // a polynomial u of degree <= k has vanishing seminorm: a hard identity
  auto trivial_check = [&](const SeminormEstimate& s) {
    if (!u.polynomial || u.polynomial->degree(g) > prm.k) return;
    LemmaRecord r;
    r.lemma = "polynomial-seminorm";
    r.inputs = {{"fn", u.name}, {"k", prm.k}};
    r.lhs = s.value;
    r.rhs = 0.0;
    r.atol = 1e-8;
    r.hard = true;
    r.decide();
    rep.records.push_back(r);
  };

  const std::string suite = cfg.command == "verify" ? cfg.suite : cfg.command;
  auto wants = [&](const char* name) { return suite == name || (cfg.command == "verify" && suite == "all"); };
  bool known = false;

  if (cfg.command == "seminorm") {
    known = true;
    const auto n = full_norm(pb, base_plan);
    rep.json["seminorm"] = seminorm_json(n.seminorm);
    rep.json["lp_norm"] = n.lp_norm;
    rep.json["norm"] = n.value;
    // growth of the estimate across the radius ladder
    nlohmann::json ladder = nlohmann::json::array();
    for (int h = 0; h <= cfg.plan.depth; ++h) {
      double best = 0.0;
      for (std::size_t i = 0; i < base_plan.size(); ++i)
        if (base_plan.pairs[i].r >= std::ldexp(rtop, -h) && std::isfinite(n.seminorm.values[i]))
          best = std::max(best, n.seminorm.values[i]);
      ladder.push_back({{"depth", h}, {"value", best}});
    }
    rep.json["refinement"] = ladder;
    trivial_check(n.seminorm);
  }

  if (cfg.command == "trace" || wants("trace")) {
    known = true;
    std::vector<Point> xs = cfg.x0 ? std::vector<Point>{*cfg.x0} : centers;
    if (cfg.command == "verify") xs.resize(std::min<std::size_t>(xs.size(), 5));
    nlohmann::json traces = nlohmann::json::array();
    for (std::size_t q = 0; q < xs.size(); ++q) {
      const auto t = dyadic_trace(pb, xs[q], 0.5 * rtop, cfg.plan.depth);
      nlohmann::json tj = {{"x0", t.x0}, {"r", t.r}, {"H", t.H}, {"residuals", t.residuals}};
      nlohmann::json fields = nlohmann::json::array();
      for (std::size_t a = 0; a < t.indices.size(); ++a) {
        const auto& I = t.indices[a];
        const int degI = hom_degree(I, g);
        nlohmann::json fj = {{"I", I}};
        std::vector<double> vals;
        for (int h = 0; h <= t.H; ++h) vals.push_back(t.a[h][a]);
        fj["a"] = vals;
        if (prm.lambda > Q + prm.p * degI) {
          const auto e = estimate_vI(t, I, prm, Q, degI);
          fj["v"] = e.v;
          fj["rate"] = e.rate ? nlohmann::json(*e.rate) : nlohmann::json("exact");
          fj["theoretical_rate"] = e.theoretical_rate;
          fj["C_fit"] = e.C_fit;
          fj["convergence_suspect"] = e.convergence_suspect;
          LemmaRecord r;
          r.lemma = "vI-rate";
          r.inputs = {{"x0", t.x0}, {"r", t.r}, {"H", t.H}, {"I", I}};
          r.lhs = e.rate ? e.theoretical_rate - *e.rate : 0.0;
          r.rhs = 0.1;  // observed rate >= theoretical - 0.1
          r.provenance = t.provenance.back();
          r.decide();
          if (e.convergence_suspect) r.pass = false;
          rep.records.push_back(r);
          for (int h = 0; h <= t.H; ++h)
            rep.plot_trace.push_back(std::to_string(q) + "," + csv_quote(to_string(I)) + "," + std::to_string(h) + "," +
                                     fmt(t.a[h][a]) + "," + fmt(std::abs(t.a[h][a] - e.v)));
        } else {
          fj["v"] = nullptr;
          fj["note"] = "lambda <= Q + p|I|_G: convergence not asserted";
        }
        fields.push_back(fj);
      }
      tj["fields"] = fields;
      traces.push_back(tj);
    }
    rep.json["traces"] = traces;
  }

  if (cfg.command == "verify") {
    SeminormPlan plan = base_plan;
    // instances of the concentric, base-point and radius-change lemmas
    std::vector<std::tuple<Point, double, int>> conc;
    std::vector<std::pair<Point, Point>> bp;
    std::vector<std::pair<Point, int>> rc;
    std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
    std::uniform_int_distribution<int> level(0, std::max(0, cfg.plan.depth - 2));
    if (wants("concentric"))
      for (int i = 0; i < cfg.instances; ++i) {
        const auto& x0 = centers[pick(rng)];
        const double r = std::ldexp(rtop, -level(rng));
        const int h = level(rng) % 3;
        conc.emplace_back(x0, r, h);
        plan.add(x0, std::ldexp(r, -h));
        plan.add(x0, std::ldexp(r, -h - 1));
      }
    if (wants("basepoint")) {
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      for (int i = 0; i < std::max(1, cfg.instances / 5); ++i) {
        const auto& x0 = centers[pick(rng)];
        Point y0;
        for (int attempt = 0; attempt < 64; ++attempt) {
          Point z(x0.size());
          const double s = std::ldexp(0.25 * rtop, -level(rng) % 4);
          for (std::size_t v = 0; v < z.size(); ++v) z[v] = s * unit(rng);
          y0 = g.multiply(x0, g.dilate(0.5, z));
          if (pb.omega.contains(y0) && st.dist(x0, y0) > 0.0) break;
          y0.clear();
        }
        if (y0.empty()) continue;
        const double rho = st.dist(x0, y0);
        bp.emplace_back(x0, y0);
        plan.add(x0, 2.0 * rho);
        plan.add(y0, 2.0 * rho);
      }
    }
    if (wants("radius-change"))
      for (std::size_t i = 0; i < std::min<std::size_t>(centers.size(), 3); ++i) {
        const auto& x0 = centers[pick(rng)];
        rc.emplace_back(x0, cfg.plan.depth);
        for (int j = 0; j <= cfg.plan.depth; ++j) plan.add(x0, std::ldexp(0.5 * rtop, -j));
      }
    const auto sem = seminorm_estimate(pb, plan);
    rep.json["seminorm"] = seminorm_json(sem);
    trivial_check(sem);

    if (wants("concentric")) {
      known = true;
      auto recs = parallel_map<LemmaRecord>(conc.size(), cfg.workers, [&](std::size_t i) {
        const auto& [x0, r, h] = conc[i];
        return verify_concentric(pb, x0, r, h, sem.value);
      });
      rep.records.insert(rep.records.end(), recs.begin(), recs.end());
    }
    if (wants("basepoint")) {
      known = true;
      auto recs = parallel_map<std::vector<LemmaRecord>>(bp.size(), cfg.workers, [&](std::size_t i) {
        return verify_basepoint(pb, bp[i].first, bp[i].second, sem.value);
      });
      for (auto& rs : recs) rep.records.insert(rep.records.end(), rs.begin(), rs.end());
    }
    if (wants("radius-change")) {
      known = true;
      const auto& idx = pb.table().indices();
      auto recs = parallel_map<LemmaRecord>(rc.size() * idx.size(), cfg.workers, [&](std::size_t i) {
        const auto& [x0, h] = rc[i / idx.size()];
        return verify_radius_change(pb, x0, 0.5 * rtop, h, idx[i % idx.size()], sem.value);
      });
      rep.records.insert(rep.records.end(), recs.begin(), recs.end());
    }
    if (wants("degiorgi")) {
      known = true;
      const auto& hw = st.dist.unit_box();
      Point lo, hi;
      for (double w : hw) {
        lo.push_back(-w);
        hi.push_back(w);
      }
      const Point x0 = pb.omega.contains(pb.omega.center()) ? pb.omega.center() : centers.front();
      const auto table = std::make_shared<DerivativeTable>(g, prm.k);
      const auto shape = Domain::halfbox(lo, hi, 0, -0.25 * hw[0]);
      nlohmann::json scales = nlohmann::json::array();
      double cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
      for (int j = 0; j < 3; ++j) {
        const double r = std::ldexp(0.5 * rtop, -j);
        const auto dg = verify_degiorgi(g, st.dist, shape, x0, r, prm.k, prm.p, cfg.trials, cfg.seed, quad, cfg.workers, table);
        cmin = std::min(cmin, dg.C_emp);
        cmax = std::max(cmax, dg.C_emp);
        nlohmann::json dj = {{"r", r}, {"C_emp", dg.C_emp}, {"A", dg.A}, {"worst_I", dg.worst.I},
                             {"worst_coefficients", dg.worst.coefficients}, {"provenance", dg.provenance}};
        if (dg.C_sup) dj["C_sup"] = *dg.C_sup;
        scales.push_back(dj);
      }
      LemmaRecord sc;
      sc.lemma = "degiorgi-scale";
      sc.inputs = {{"x0", x0}, {"k", prm.k}, {"p", prm.p}, {"trials", cfg.trials}};
      sc.lhs = cmax / cmin - 1.0;
      sc.rhs = 0.02;
      sc.constant = cmax;
      sc.provenance = quad.str();
      sc.decide();
      rep.records.push_back(sc);
      nlohmann::json sweep = nlohmann::json::array();
      double prev = 0.0;
      int violations = 0;
      for (double cut : {-1.0, -0.5, 0.0, 0.5}) {
        const auto s = Domain::halfbox(lo, hi, 0, cut * hw[0]);
        const auto dg = verify_degiorgi(g, st.dist, s, x0, 0.5 * rtop, prm.k, prm.p, cfg.trials, cfg.seed, quad, cfg.workers, table);
        if (dg.C_emp < prev) ++violations;
        prev = dg.C_emp;
        sweep.push_back({{"cut", cut}, {"A", dg.A}, {"C_emp", dg.C_emp}});
      }
      LemmaRecord mono;
      mono.lemma = "degiorgi-monotone";
      mono.inputs = {{"x0", x0}, {"cuts", {-1.0, -0.5, 0.0, 0.5}}};
      mono.lhs = violations;
      mono.rhs = 0.0;
      mono.provenance = quad.str();
      mono.decide();
      rep.records.push_back(mono);
      rep.json["degiorgi"] = {{"scales", scales}, {"sweep", sweep}};
    }
    const bool holder_regime = prm.lambda > Q + prm.p * prm.k;
    if (wants("classic-holder") || wants("holder")) {
      known = true;
      if (!holder_regime && suite != "all") throw RegimeViolation("RegimeViolation: holder probe requires lambda > Q + pk");
      if (holder_regime) {
        const auto pts = detail::holder_points(pb, cfg.plan.x0, cfg.plan.depth);
        nlohmann::json probes = nlohmann::json::array();
        for (const auto& I : pb.table().indices()) {
          if (hom_degree(I, g) != prm.k) continue;
          HolderOptions ho;
          ho.H = cfg.plan.depth;
          const auto hp = holder_probe(pb, I, pts, sem.value, ho);
          nlohmann::json env = nlohmann::json::array();
          for (const auto& e : hp.envelope) {
            env.push_back({{"d", e.distance}, {"osc", e.oscillation}});
            if (e.oscillation > 0.0)
              rep.plot_holder.push_back(csv_quote(to_string(I)) + "," + fmt(std::log(e.distance)) + "," +
                                        fmt(std::log(e.oscillation)));
          }
          probes.push_back({{"I", I}, {"alpha_est", hp.alpha_est ? nlohmann::json(*hp.alpha_est) : nlohmann::json("flat")},
                            {"alpha", *hp.alpha_theory}, {"theta_emp", hp.theta_emp}, {"pairs", hp.pairs},
                            {"envelope", env}, {"convergence_suspect", hp.convergence_suspect},
                            {"note", "pairs restricted to d(x,y) <= diam/2"}});
          LemmaRecord r;
          r.lemma = "holder-exponent";
          r.inputs = {{"I", I}, {"alpha", *hp.alpha_theory}, {"alpha_est", hp.alpha_est.value_or(*hp.alpha_theory)}};
          r.lhs = hp.alpha_est ? std::abs(*hp.alpha_est - *hp.alpha_theory) : 0.0;
          r.rhs = 0.05;
          r.constant = hp.theta_emp;
          r.decide();
          if (!hp.alpha_est && *hp.alpha_theory < 1.0 && !u.polynomial) r.pass = false;
          rep.records.push_back(r);
        }
        rep.json["holder"] = probes;
      }
    }
    if (wants("derivative")) {
      known = true;
      const Point x0 = cfg.x0 ? *cfg.x0 : pb.omega.center();
      nlohmann::json checks = nlohmann::json::array(), rejected = nlohmann::json::array();
      for (const auto& I : pb.table().indices())
        for (int i = 0; i < g.dim(); ++i) {
          try {
            check_derivative_regime(pb, I, i);
          } catch (const RegimeViolation& e) {
            if (hom_degree(I, g) + g.homogeneity()[static_cast<std::size_t>(i)] <= prm.k)
              rejected.push_back({{"I", I}, {"i", i + 1}, {"reason", e.what()}});
            continue;
          }
          const auto d = derivative_identity_check(pb, x0, I, i);
          checks.push_back({{"I", I}, {"i", i + 1}, {"fd", d.fd}, {"v_next", d.v_next}, {"abs_gap", d.abs_gap},
                            {"rel_gap", d.rel_gap}, {"step", d.step}, {"fd_error_order", d.fd_error_order}});
          LemmaRecord r;
          r.lemma = "derivative-identity";
          r.inputs = {{"x0", x0}, {"I", I}, {"i", i + 1}, {"step", d.step}};
          r.lhs = d.abs_gap;
          r.rhs = d.tol;
          r.decide();
          rep.records.push_back(r);
        }
      if (checks.empty() && suite == "derivative")
        throw RegimeViolation("RegimeViolation: no admissible (I, i) for k = " + std::to_string(prm.k));
      rep.json["derivative"] = {{"checks", checks}, {"rejected", rejected}};
    }
    if (wants("reconstruction")) {
      known = true;
      if (!holder_regime && suite != "all")
        throw RegimeViolation("RegimeViolation: reconstruction requires lambda > Q + pk");
      if (holder_regime) {
        ReconstructionOptions ro;
        ro.H = cfg.plan.depth;
        ro.base_r = 0.5 * rtop;
        const auto rcr = reconstruction_check(pb, centers, ro);
        LemmaRecord r;
        r.lemma = "reconstruction";
        r.inputs = {{"H", ro.H}, {"samples", centers.size()}, {"monotone_tail", rcr.monotone_tail}};
        r.lhs = rcr.max_gap;
        r.rhs = ro.tol;
        r.decide();
        if (!rcr.monotone_tail) r.pass = false;
        rep.records.push_back(r);
        rep.json["reconstruction"] = {{"max_gap", rcr.max_gap}, {"gaps", rcr.gaps}, {"monotone_tail", rcr.monotone_tail},
                                      {"holder_seminorm", rcr.holder_seminorm ? nlohmann::json(*rcr.holder_seminorm)
                                                                              : nlohmann::json(nullptr)}};
      }
    }
  }
  if (!known) throw ConfigError("unknown suite '" + suite + "'");

  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : rep.records) recs.push_back(record_json(r));
  rep.json["records"] = recs;
  std::size_t hard_fail = 0, soft_fail = 0;
  for (const auto& r : rep.records) (r.pass ? 0 : (r.hard ? ++hard_fail : ++soft_fail));
  rep.json["summary"] = {{"records", rep.records.size()}, {"hard_failures", hard_fail}, {"empirical_failures", soft_fail}};
  return rep;
}

/// report.json, lemmas.csv and the plot-data CSVs in `dir`.
inline void write_report(const SuiteReport& rep, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "report.json");
    out << rep.json.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "lemmas.csv");
    out << "lemma,inputs,lhs,rhs,margin,pass\n";
    for (const auto& r : rep.records)
      out << r.lemma << "," << detail::csv_quote(r.inputs.dump()) << "," << detail::fmt(r.lhs) << ","
          << detail::fmt(r.rhs) << "," << detail::fmt(r.margin()) << "," << (r.pass ? "true" : "false") << "\n";
  }
  if (!rep.plot_trace.empty()) {
    std::ofstream out(fs::path(dir) / "trace_plot.csv");
    out << "x0_index,I,h,a_I,abs_a_I_minus_v_I\n";
    for (const auto& row : rep.plot_trace) out << row << "\n";
  }
  if (!rep.plot_holder.empty()) {
    std::ofstream out(fs::path(dir) / "holder_plot.csv");
    out << "I,log_d,log_osc\n";
    for (const auto& row : rep.plot_holder) out << row << "\n";
  }
}

}  // namespace campanato
