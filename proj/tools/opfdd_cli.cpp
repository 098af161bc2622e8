// Command line front end: distributed solves with reports and traces,
// centralized reference solves, and the two-variable laboratory scenarios
// behind the documentation figures.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "opfdd/coordinator.hpp"
#include "opfdd/formulation.hpp"
#include "opfdd/network.hpp"
#include "opfdd/toylab.hpp"

namespace fs = std::filesystem;

namespace {

opfdd::Network load_case(const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    std::ifstream in(path);
    if (!in) throw opfdd::MalformedCase("cannot open case file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return opfdd::parse_json(ss.str());
  }
  return opfdd::parse_matpower_file(path);
}

std::string case_stem(const std::string& path) {
  return fs::path(path).stem().string();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw opfdd::Error("cannot write " + p.string());
  out << text;
}

// ---- solve ----------------------------------------------------------------

struct SolveArgs {
  std::string case_path;
  std::string variant = "a3";
  std::string setting;
  double nu = -1, rho_pq = -1, rho_vth = -1, alpha_i = -1, alpha_ij = -1;
  double eps = 1e-4;
  std::int64_t max_iter = 200000;
  int workers = 0;
  int thin = 1;
  std::string out_dir = ".";
  bool warm_lines = false;
};

int run_solve(const SolveArgs& a, const CLI::App& cmd) {
  const bool has_setting = cmd.count("--setting") > 0;
  const bool has_explicit = cmd.count("--nu") || cmd.count("--rho-pq") ||
                            cmd.count("--rho-vtheta") ||
                            cmd.count("--alpha-i") || cmd.count("--alpha-ij");
  if (has_setting == has_explicit) {
    std::fprintf(stderr,
                 "solve: pass either --setting A..T or explicit penalties "
                 "(--nu/--alpha-i/--alpha-ij, plus --rho-vtheta for a2/a3 "
                 "and --rho-pq for a3), not both and not neither\n");
    return 1;
  }

  opfdd::RunOptions opts;
  if (has_setting) {
    if (a.setting.size() != 1) {
      std::fprintf(stderr, "solve: --setting takes one letter A..T\n");
      return 1;
    }
    opts.params = opfdd::lookup_setting(a.setting[0]);
  } else {
    const auto need = [&](const char* flag, double v) {
      if (cmd.count(flag) == 0) {
        std::fprintf(stderr, "solve: %s is required with explicit penalties\n",
                     flag);
        return false;
      }
      if (v < 0) {
        std::fprintf(stderr, "solve: %s must be nonnegative\n", flag);
        return false;
      }
      return true;
    };
    if (!need("--nu", a.nu) || !need("--alpha-i", a.alpha_i) ||
        !need("--alpha-ij", a.alpha_ij))
      return 1;
    opts.params.nu = a.nu;
    opts.params.alpha_i = a.alpha_i;
    opts.params.alpha_ij = a.alpha_ij;
    if (a.variant != "a1" && !need("--rho-vtheta", a.rho_vth)) return 1;
    if (a.variant == "a3" && !need("--rho-pq", a.rho_pq)) return 1;
    if (cmd.count("--rho-vtheta")) opts.params.rho_vth = a.rho_vth;
    if (cmd.count("--rho-pq")) opts.params.rho_pq = a.rho_pq;
  }
  opts.params.variant = a.variant == "a1"   ? opfdd::Variant::a1
                        : a.variant == "a2" ? opfdd::Variant::a2
                                            : opfdd::Variant::a3;
  opts.params.epsilon = a.eps;
  opts.max_iter = a.max_iter;
  opts.workers = a.workers;
  opts.lines_warm_start_prev = a.warm_lines;

  const opfdd::Network net = load_case(a.case_path);
  const opfdd::RunResult res = opfdd::run(net, opts);

  fs::create_directories(a.out_dir);
  const std::string name = case_stem(a.case_path);
  const char setting_tag = has_setting ? a.setting[0] : '\0';
  write_file(fs::path(a.out_dir) / "report.json",
             opfdd::report_json(res.report, name, setting_tag));
  write_file(fs::path(a.out_dir) / "trace.csv",
             opfdd::trace_csv(res.trace, a.thin));

  const char* status = res.report.status == opfdd::RunStatus::converged
                           ? "converged"
                           : res.report.status == opfdd::RunStatus::diverged
                                 ? "diverged"
                                 : "max_iterations";
  std::printf("case=%s variant=%s", name.c_str(), a.variant.c_str());
  if (setting_tag) std::printf(" setting=%c", setting_tag);
  std::printf(" status=%s iters=%lld ro_gap=%.6e amd_gap=%.6e residual=%.6e "
              "p_amd=%.4f\n",
              status, static_cast<long long>(res.report.iterations),
              res.report.ro_gap, res.report.amd_gap,
              res.report.final_residual, res.report.p_amd);
  return res.report.converged ? 0 : 2;
}

// ---- central ---------------------------------------------------------------

int run_central(const std::string& case_path, const std::string& out_dir) {
  const opfdd::Network net = load_case(case_path);
  opfdd::CentralizedResult res;
  try {
    res = opfdd::solve_centralized(net);
  } catch (const opfdd::SolverDiverged& e) {
    std::fprintf(stderr, "central: %s\n", e.what());
    return 2;
  }

  nlohmann::ordered_json j;
  const std::string name = case_stem(case_path);
  j["case"] = name;
  j["cost"] = res.cost;
  j["kkt_residual"] = res.kkt_residual;
  j["status"] =
      res.status == opfdd::nlp::Status::converged ? "converged" : "max_iterations";
  j["ref_bus"] = res.ref_bus;
  j["bus"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < net.buses.size(); ++i)
    j["bus"].push_back({{"id", net.buses[i].id},
                        {"v", res.state.v[i]},
                        {"theta", res.state.theta[i]}});
  j["gen"] = nlohmann::ordered_json::array();
  for (size_t g = 0; g < net.generators.size(); ++g)
    j["gen"].push_back({{"id", net.generators[g].id},
                        {"bus", net.generators[g].bus},
                        {"p", res.state.p_g[g]},
                        {"q", res.state.q_g[g]}});
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "central.json", j.dump(2) + "\n");

  std::printf("case=%s cost=%.4f kkt=%.3e\n", name.c_str(), res.cost,
              res.kkt_residual);
  return 0;
}

// ---- toys ------------------------------------------------------------------

using Row = std::vector<double>;

void write_csv(const fs::path& p, const std::string& header,
               const std::vector<Row>& rows) {
  std::ofstream out(p);
  if (!out) throw opfdd::Error("cannot write " + p.string());
  out << header << "\n";
  char buf[64];
  for (const Row& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.10g", r[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  }
}

std::vector<Row> trace_rows(const std::vector<opfdd::toy::ToyRow>& t) {
  std::vector<Row> rows;
  rows.reserve(t.size());
  for (const auto& r : t)
    rows.push_back({static_cast<double>(r.k), r.x1, r.x2, r.lambda,
                    r.primal_res, r.dual_res, r.objective});
  return rows;
}

constexpr const char* kTraceHeader =
    "k,x1,x2,lambda,primal_residual,dual_residual,objective";

struct Scenario {
  const char* name;
  const char* file;
  const char* blurb;
  const char* gnuplot;
};

constexpr Scenario kScenarios[] = {
    {"fig6a", "appendixA_fig6a.csv",
     "first toy problem: exact dual function over lambda in [-0.5, 1]",
     "plot 'appendixA_fig6a.csv' using 1:2 with lines title 'd(lambda)'"},
    {"fig6b", "appendixA_fig6b.csv",
     "first toy problem: dual near its kink, exact vs suboptimal oracle",
     "plot 'appendixA_fig6b.csv' using 1:2 with lines title 'exact', \\\n"
     "     'appendixA_fig6b.csv' using 1:3 with lines title 'suboptimal'"},
    {"fig7a", "appendixA_fig7a.csv",
     "subgradient ascent on the first toy dual, exact inner solves, step "
     "0.001",
     "plot 'appendixA_fig7a.csv' using 1:3 with lines title 'dual value'"},
    {"fig7b", "appendixA_fig7b.csv",
     "subgradient ascent with suboptimal inner solves, step 0.1",
     "plot 'appendixA_fig7b.csv' using 1:3 with lines title 'dual value'"},
    {"fig8a", "appendixA_fig8a.csv",
     "first toy problem: consensus ADMM, rho=50, x2 started at -1",
     "plot 'appendixA_fig8a.csv' using 1:2 with lines title 'x1', \\\n"
     "     'appendixA_fig8a.csv' using 1:3 with lines title 'x2'"},
    {"fig8b", "appendixA_fig8b.csv",
     "first toy problem: consensus ADMM, rho=50, x2 started at +1",
     "plot 'appendixA_fig8b.csv' using 1:2 with lines title 'x1', \\\n"
     "     'appendixA_fig8b.csv' using 1:3 with lines title 'x2'"},
    {"fig9", "appendixA_fig9.csv",
     "first toy problem: augmented dual for rho in {0, 10, 50} (slow: "
     "grid-searched, about half a minute)",
     "plot 'appendixA_fig9.csv' using 1:2 with lines title 'rho=0', \\\n"
     "     'appendixA_fig9.csv' using 1:3 with lines title 'rho=10', \\\n"
     "     'appendixA_fig9.csv' using 1:4 with lines title 'rho=50'"},
    {"fig10", "appendixA_fig10.csv",
     "first toy problem: ADMM with box-bounded local inner solves from "
     "(-1,-1), rho=10",
     "plot 'appendixA_fig10.csv' using 1:2 with lines title 'x1', \\\n"
     "     'appendixA_fig10.csv' using 1:3 with lines title 'x2'"},
    {"fig11a", "appendixA_fig11a.csv",
     "first toy problem: proximal (Jacobi) iteration, nu=50, from (-1,-1)",
     "plot 'appendixA_fig11a.csv' using 1:2 with lines title 'x1', \\\n"
     "     'appendixA_fig11a.csv' using 1:3 with lines title 'x2'"},
    {"fig11b", "appendixA_fig11b.csv",
     "first toy problem: proximal (Jacobi) iteration, nu=50, from (1,1)",
     "plot 'appendixA_fig11b.csv' using 1:2 with lines title 'x1', \\\n"
     "     'appendixA_fig11b.csv' using 1:3 with lines title 'x2'"},
    {"fig12a", "appendixB_fig12a.csv",
     "second toy problem: consensus ADMM, rho=2, x2 started at +1",
     "plot 'appendixB_fig12a.csv' using 1:2 with lines title 'x1', \\\n"
     "     'appendixB_fig12a.csv' using 1:3 with lines title 'x2'"},
    {"fig12b", "appendixB_fig12b.csv",
     "second toy problem: consensus ADMM, rho=10, x2 started at -1 (lands on "
     "the poor local pair)",
     "plot 'appendixB_fig12b.csv' using 1:2 with lines title 'x1', \\\n"
     "     'appendixB_fig12b.csv' using 1:3 with lines title 'x2'"},
};

int run_toys(const std::string& scenario, const std::string& out_dir,
             bool gnuplot_hints, bool list_only) {
  if (list_only) {
    for (const Scenario& s : kScenarios)
      std::printf("%-7s %-22s %s\n", s.name, s.file, s.blurb);
    return 0;
  }
  const Scenario* sc = nullptr;
  for (const Scenario& s : kScenarios)
    if (scenario == s.name) sc = &s;
  if (!sc) {
    std::fprintf(stderr, "toys: unknown scenario '%s'; known:", scenario.c_str());
    for (const Scenario& s : kScenarios) std::fprintf(stderr, " %s", s.name);
    std::fprintf(stderr, "\n");
    return 1;
  }

  namespace toy = opfdd::toy;
  const toy::Problem A = toy::problem_a();
  const toy::Problem B = toy::problem_b();
  fs::create_directories(out_dir);
  const fs::path file = fs::path(out_dir) / sc->file;

  if (scenario == "fig6a") {
    std::vector<Row> rows;
    for (double lam = -0.5; lam <= 1.0 + 1e-12; lam += 0.0025) {
      const toy::DualEval d = toy::dual_exact(A, lam);
      rows.push_back({lam, d.value});
    }
    write_csv(file, "lambda,dual_value", rows);
  } else if (scenario == "fig6b") {
    std::vector<Row> rows;
    for (double lam = 0.10; lam <= 0.14 + 1e-12; lam += 1e-4) {
      const toy::DualEval d = toy::dual_exact(A, lam);
      const toy::DualEval s =
          toy::dual_exact(A, lam, 0.0, toy::InnerMode::suboptimal);
      rows.push_back({lam, d.value, s.value});
    }
    write_csv(file, "lambda,dual_exact,dual_suboptimal", rows);
  } else if (scenario == "fig7a" || scenario == "fig7b") {
    const bool exact = scenario == "fig7a";
    const toy::SubgradRun r = toy::toy_subgradient(
        A, exact ? 0.001 : 0.1, 0.0, exact ? 2000 : 200,
        exact ? toy::InnerMode::optimal : toy::InnerMode::suboptimal);
    std::vector<Row> rows;
    for (const auto& t : r.trace)
      rows.push_back({static_cast<double>(t.k), t.lambda, t.dual_value,
                      t.primal_res});
    write_csv(file, "k,lambda,dual_value,subgradient", rows);
  } else if (scenario == "fig8a" || scenario == "fig8b") {
    const toy::ToyRun r =
        toy::toy_admm(A, 50.0, scenario == "fig8a" ? -1.0 : 1.0);
    write_csv(file, kTraceHeader, trace_rows(r.trace));
  } else if (scenario == "fig9") {
    std::vector<Row> rows;
    for (double lam = -0.25; lam <= 0.75 + 1e-12; lam += 0.02) {
      const double d0 = toy::dual_exact(A, lam).value;
      const double d10 = toy::dual_exact(A, lam, 10.0).value;
      const double d50 = toy::dual_exact(A, lam, 50.0).value;
      rows.push_back({lam, d0, d10, d50});
    }
    write_csv(file, "lambda,dual_rho0,dual_rho10,dual_rho50", rows);
  } else if (scenario == "fig10") {
    const toy::ToyRun r =
        toy::toy_admm(A, 10.0, 1.0, toy::LocalStart{-1.0, -1.0});
    write_csv(file, kTraceHeader, trace_rows(r.trace));
  } else if (scenario == "fig11a" || scenario == "fig11b") {
    const double s0 = scenario == "fig11a" ? -1.0 : 1.0;
    const toy::ToyRun r = toy::toy_proximal(A, 50.0, s0, s0);
    write_csv(file, kTraceHeader, trace_rows(r.trace));
  } else if (scenario == "fig12a") {
    const toy::ToyRun r = toy::toy_admm(B, 2.0, 1.0);
    write_csv(file, kTraceHeader, trace_rows(r.trace));
  } else {  // fig12b
    const toy::ToyRun r = toy::toy_admm(B, 10.0, -1.0);
    write_csv(file, kTraceHeader, trace_rows(r.trace));
  }

  std::printf("wrote %s\n", file.string().c_str());
  if (gnuplot_hints)
    std::printf("# gnuplot\nset datafile separator ','\nset key autotitle "
                "columnhead\n%s\n",
                sc->gnuplot);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"component-based dual decomposition for AC optimal power flow"};
  app.set_version_flag("--version", opfdd::kVersion);
  app.require_subcommand(1);

  SolveArgs sa;
  CLI::App* solve = app.add_subcommand(
      "solve", "run a distributed coordination solve on a case file");
  solve->add_option("--case", sa.case_path, "case file (.m or .json)")
      ->required();
  solve->add_option("--variant", sa.variant, "algorithm variant")
      ->check(CLI::IsMember({"a1", "a2", "a3"}))
      ->capture_default_str();
  solve->add_option("--setting", sa.setting,
                    "named penalty/step setting A..T");
  solve->add_option("--nu", sa.nu, "proximal weight");
  solve->add_option("--rho-pq", sa.rho_pq, "power-coupling penalty (a3)");
  solve->add_option("--rho-vtheta", sa.rho_vth,
                    "voltage/angle consensus penalty (a2/a3)");
  solve->add_option("--alpha-i", sa.alpha_i, "balance multiplier step");
  solve->add_option("--alpha-ij", sa.alpha_ij, "consensus multiplier step");
  solve->add_option("--eps", sa.eps, "stop when ||subgradient|| drops below")
      ->capture_default_str();
  solve->add_option("--max-iter", sa.max_iter, "iteration cap")
      ->capture_default_str();
  solve->add_option("--workers", sa.workers,
                    "subproblem worker threads (0 = hardware)")
      ->capture_default_str();
  solve->add_option("--thin", sa.thin, "keep every n-th trace row")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  solve->add_option("--out", sa.out_dir, "output directory")
      ->capture_default_str();
  solve->add_flag("--warm-lines", sa.warm_lines,
                  "start line solves from the previous iterate");

  std::string central_case, central_out = ".";
  CLI::App* central = app.add_subcommand(
      "central", "solve the full problem centrally for reference");
  central->add_option("--case", central_case, "case file (.m or .json)")
      ->required();
  central->add_option("--out", central_out, "output directory")
      ->capture_default_str();

  std::string toy_scenario, toy_out = ".";
  bool toy_hints = false, toy_list = false;
  CLI::App* toys = app.add_subcommand(
      "toys", "emit the two-variable laboratory scenario traces as CSV");
  toys->add_option("--scenario", toy_scenario, "scenario name (see --list)");
  toys->add_option("--out", toy_out, "output directory")
      ->capture_default_str();
  toys->add_flag("--gnuplot-hints", toy_hints, "print a gnuplot recipe");
  toys->add_flag("--list", toy_list, "list scenarios and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (solve->parsed()) return run_solve(sa, *solve);
    if (central->parsed()) return run_central(central_case, central_out);
    if (!toy_list && toys->count("--scenario") == 0) {
      std::fprintf(stderr, "toys: --scenario (or --list) is required\n");
      return 1;
    }
    return run_toys(toy_scenario, toy_out, toy_hints, toy_list);
  } catch (const opfdd::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
