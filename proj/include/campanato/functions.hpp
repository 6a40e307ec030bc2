#pragma once

#include "campanato/hpoly.hpp"
#include "campanato/metric.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace campanato {

/// A sampled test function u together with its catalog name and, when u is
/// itself a polynomial, its exact representation.
struct Function {
  std::string name;
  std::function<double(const Point&)> eval;
  std::optional<HPolynomial<double>> polynomial;

  double operator()(const Point& x) const { return eval(x); }

  /// c * u, keeping the polynomial representation.
  Function scaled(double c) const {
    Function f;
    std::ostringstream os;
    os.precision(17);
    os << c << "*(" << name << ")";
    f.name = os.str();
    f.eval = [e = eval, c](const Point& x) { return c * e(x); };
    if (polynomial) f.polynomial = HPolynomial<double>(polynomial->terms() * c, polynomial->frame());
    return f;
  }
};

namespace detail {

inline double parse_exponent(const std::string& s, const std::string& prefix) {
  if (s.size() == prefix.size()) return 1.0;
  if (s[prefix.size()] != '^') throw std::invalid_argument("function '" + s + "': expected '^<exponent>'");
  return std::stod(s.substr(prefix.size() + 1));
}

/// Nearest-neighbour lookup in tabulated samples "x_1,...,x_N,value".
inline Function tabulated(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open sample file '" + path + "'");
  auto rows = std::make_shared<std::vector<std::vector<double>>>();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    try {
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    } catch (const std::exception&) {
      if (rows->empty() && lineno == 1) continue;  // header
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (row.size() != n + 1)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(n + 1) +
                                  " fields, got " + std::to_string(row.size()));
    rows->push_back(std::move(row));
  }
  if (rows->empty()) throw std::invalid_argument("sample file '" + path + "' has no rows");
  Function f;
  f.name = "csv:" + path;
  f.eval = [rows, n](const Point& x) {
    double best = std::numeric_limits<double>::infinity(), val = 0.0;
    for (const auto& row : *rows) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) d2 += (row[i] - x[i]) * (row[i] - x[i]);
      if (d2 < best) {
        best = d2;
        val = row[n];
      }
    }
    return val;
  };
  return f;
}

}  // namespace detail

/// Builds u from a catalog expression:
///   zero | absx^b | abs<i>^b | gauge^b | bump[:R] | step:<axis>:<offset> |
///   poly:<json literal> | csv:<file>
/// Axes are 1-based.
inline Function make_function(const std::string& spec, const HomDistance& dist) {
  const auto& g = dist.group();
  const auto n = static_cast<std::size_t>(g.dim());
  Function f;
  f.name = spec;
  auto starts = [&](const char* p) { return spec.rfind(p, 0) == 0; };
  if (spec == "zero") {
    f.eval = [](const Point&) { return 0.0; };
    f.polynomial = HPolynomial<double>(Polynomial<double>(n));
  } else if (starts("absx")) {
    const double b = detail::parse_exponent(spec, "absx");
    f.eval = [b](const Point& x) { return std::pow(std::abs(x[0]), b); };
  } else if (starts("abs")) {
    const auto pos = spec.find_first_not_of("0123456789", 3);
    if (pos == 3) throw std::invalid_argument("function '" + spec + "': expected abs<i>^b");
    const auto axis = std::stoul(spec.substr(3, pos - 3));
    if (axis < 1 || axis > n) throw std::invalid_argument("function '" + spec + "': axis out of range");
    const double b = detail::parse_exponent(spec.substr(pos), "");
    f.eval = [b, a = axis - 1](const Point& x) { return std::pow(std::abs(x[a]), b); };
  } else if (starts("gauge")) {
    const double b = detail::parse_exponent(spec, "gauge");
    f.eval = [b, dist](const Point& x) { return std::pow(dist.norm(x), b); };
  } else if (starts("bump")) {
    double R = 1.0;
    if (spec.size() > 4) {
      if (spec[4] != ':') throw std::invalid_argument("function '" + spec + "': expected bump[:R]");
      R = std::stod(spec.substr(5));
    }
    if (!(R > 0.0)) throw std::invalid_argument("bump radius must be positive");
    f.eval = [R](const Point& x) {
      double s = 0.0;
      for (double v : x) s += v * v;
      const double t = s / (R * R);
      return t < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - t)) : 0.0;
    };
  } else if (starts("step:")) {
    const auto c2 = spec.find(':', 5);
    if (c2 == std::string::npos) throw std::invalid_argument("function '" + spec + "': expected step:<axis>:<offset>");
    const auto axis = std::stoul(spec.substr(5, c2 - 5));
    if (axis < 1 || axis > n) throw std::invalid_argument("function '" + spec + "': axis out of range");
    const double off = std::stod(spec.substr(c2 + 1));
    f.eval = [a = axis - 1, off](const Point& x) { return x[a] >= off ? 1.0 : 0.0; };
  } else if (starts("poly:")) {
    auto p = hpoly_from_json<double>(nlohmann::json::parse(spec.substr(5)), g);
    f.polynomial = p;
    f.eval = [p, g](const Point& x) { return evaluate(p, x, g); };
  } else if (starts("csv:")) {
    auto t = detail::tabulated(spec.substr(4), n);
    f.eval = std::move(t.eval);
  } else {
    throw std::invalid_argument("unknown function '" + spec + "'");
  }
  return f;
}

/// A polynomial test function.
inline Function polynomial_function(const HPolynomial<double>& p, const CarnotGroup& g, std::string name = "") {
  Function f;
  f.name = name.empty() ? "poly:" + to_json(p).dump() : std::move(name);
  f.polynomial = p;
  if (p.absolute()) {
    auto cp = std::make_shared<CompiledPolynomial>(p.terms());
    f.eval = [cp](const Point& x) { return (*cp)(x); };
  } else {
    f.eval = [p, g](const Point& x) { return evaluate(p, x, g); };
  }
  return f;
}

}  // namespace campanato
