#include "campanato/report.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

std::vector<double> parse_point(const std::string& s) {
  std::vector<double> x;
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  double v;
  while (in >> v) x.push_back(v);
  if (x.empty()) throw campanato::ConfigError("--x0: expected comma-separated coordinates");
  return x;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace campanato;
  CLI::App app{"Campanato-class computations on Carnot groups"};
  app.require_subcommand(1, 1);
  std::string group, gauge, domain, fn, plan, quad, out, suite, config, x0;
  int k = 0, workers = 1, trials = 0, instances = 0;
  double p = 2.0, lambda = 0.0;
  std::uint64_t seed = 1;
  std::vector<CLI::App*> subs;
  for (const char* name : {"describe", "verify", "seminorm", "trace"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON run configuration (flags take precedence)");
    sub->add_option("--group", group, "builtin group: euclidean:n | heisenberg:n | engel, or a JSON file/literal");
    sub->add_option("--gauge", gauge, "homogeneous gauge: default | max | koranyi");
    sub->add_option("--domain", domain, "domain: unit-box | unit-ball | empty | JSON file | JSON literal");
    sub->add_option("--fn", fn, "test function from the catalog or csv:<file>");
    sub->add_option("--k", k, "polynomial degree k");
    sub->add_option("--p", p, "exponent p >= 1");
    sub->add_option("--lambda", lambda, "Campanato exponent lambda");
    sub->add_option("--plan", plan, "x0:<n> rmax:<f> depth:<H>");
    sub->add_option("--quad", quad, "grid:<res> | mc:<count>");
    sub->add_option("--seed", seed, "random seed (fallback: CAMPANATO_SEED)");
    sub->add_option("--out", out, "report directory");
    sub->add_option("--workers", workers, "worker threads");
    sub->add_option("--suite", suite, "verify suite: all | concentric | basepoint | radius-change | degiorgi | "
                                      "classic-holder | trace | derivative | reconstruction");
    sub->add_option("--trials", trials, "random polynomials for the De Giorgi verifier");
    sub->add_option("--instances", instances, "sampled lemma instances");
    sub->add_option("--x0", x0, "base point for trace/derivative, comma separated");
    subs.push_back(sub);
  }
  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();
  auto given = [&](const char* flag) { return sub->count(flag) > 0; };

  try {
    RunConfig cfg;
    if (const char* env = std::getenv("CAMPANATO_SEED")) cfg.seed = std::stoull(env);
    if (given("--config")) cfg.merge_json(RunConfig::read_file(config));
    cfg.command = sub->get_name();
    if (given("--group")) {
      if (!group.empty() && (group.front() == '{' || group.find(".json") != std::string::npos)) {
        if (group.front() == '{') cfg.group = nlohmann::json::parse(group);
        else cfg.group = RunConfig::read_file(group);
      } else {
        cfg.group = group;
      }
    }
    if (given("--gauge")) cfg.gauge = gauge;
    if (given("--domain")) cfg.domain = domain;
    if (given("--fn")) cfg.fn = fn;
    if (given("--k")) cfg.params.k = k;
    if (given("--p")) cfg.params.p = p;
    if (given("--lambda")) cfg.params.lambda = lambda;
    if (given("--plan")) cfg.plan = PlanSpec::parse(plan, cfg.plan);
    if (given("--quad")) cfg.quad = quad;
    if (given("--seed")) cfg.seed = seed;
    if (given("--out")) cfg.out = out;
    if (given("--workers")) cfg.workers = workers;
    if (given("--suite")) cfg.suite = suite;
    if (given("--trials")) cfg.trials = trials;
    if (given("--instances")) cfg.instances = instances;
    if (given("--x0")) cfg.x0 = parse_point(x0);
    cfg.params.validate();

    std::cout << describe(cfg);
    if (cfg.command == "describe") return 0;

    const auto rep = run_suite(cfg);
    if (!cfg.out.empty()) write_report(rep, cfg.out);
    const auto& sum = rep.json["summary"];
    std::cout << "records: " << sum["records"] << ", hard failures: " << sum["hard_failures"]
              << ", empirical failures: " << sum["empirical_failures"] << "\n";
    if (rep.json.contains("seminorm")) std::cout << "seminorm estimate: " << rep.json["seminorm"]["value"] << "\n";
    if (rep.json.contains("holder"))
      for (const auto& h : rep.json["holder"]) std::cout << "alpha_est " << h["I"] << ": " << h["alpha_est"] << "\n";
    for (const auto& r : rep.records)
      if (!r.pass) std::cout << (r.hard ? "HARD FAIL " : "margin fail ") << r.lemma << " " << r.inputs.dump() << "\n";
    return rep.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
