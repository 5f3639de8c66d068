// eit: command-line front end for the reconstruction experiments.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eit/experiment.hpp"

namespace fs = std::filesystem;
using namespace eit;

namespace {

struct RunArgs {
  std::string method = "alg1";
  std::string phantom = "A";
  double noise = 0.0;
  std::string noise_scale = "max-abs";
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  std::string mesh_fine;
  std::string mesh_coarse;
  int elements_fine = MeshSpec{}.fine_elements;
  int elements_coarse = MeshSpec{}.coarse_elements;
  double amplitude = MeshSpec{}.current_amplitude;
  std::optional<double> alpha0, q_alpha, beta, mu;
  std::optional<int> outer_max;
  std::string l1_domain = "transform";
  bool strict_cg = false;
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--method", a.method, "alg1 | alg2 | l1 | l2 | tv")
      ->check(CLI::IsMember({"alg1", "alg2", "l1", "l2", "tv"}));
  cmd->add_option("--phantom", a.phantom, "A | B | C | background");
  cmd->add_option("--noise", a.noise, "relative noise level epsilon (0.001 = 0.1%)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--noise-scale", a.noise_scale, "max-abs | per-channel | absolute")
      ->check(CLI::IsMember({"max-abs", "per-channel", "absolute"}));
  cmd->add_option("--seed", a.seed, "noise seed (default: fixed per phantom and level)");
  cmd->add_option("--config", a.config_path, "key = value file overriding the parameter table")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--mesh-fine", a.mesh_fine, "simulation mesh file")->check(CLI::ExistingFile);
  cmd->add_option("--mesh-coarse", a.mesh_coarse, "inversion mesh file")->check(CLI::ExistingFile);
  cmd->add_option("--elements-fine", a.elements_fine, "target element count of the simulation mesh");
  cmd->add_option("--elements-coarse", a.elements_coarse, "target element count of the inversion mesh");
  cmd->add_option("--amplitude", a.amplitude, "injected current per drive")->check(CLI::PositiveNumber);
  cmd->add_option("--alpha0", a.alpha0);
  cmd->add_option("--q-alpha", a.q_alpha);
  cmd->add_option("--beta", a.beta);
  cmd->add_option("--mu", a.mu);
  cmd->add_option("--outer-max", a.outer_max);
  cmd->add_option("--l1-domain", a.l1_domain, "transform | space (method l1 only)")
      ->check(CLI::IsMember({"transform", "space"}));
  cmd->add_flag("--strict-cg", a.strict_cg, "abort when a CG solve misses its tolerance");
}

ExperimentSpec build_spec(const RunArgs& a) {
  ExperimentSpec spec = default_spec(parse_method(a.method), parse_phantom(a.phantom), a.noise);
  spec.noise.scale = parse_noise_scale(a.noise_scale);
  if (a.seed) spec.noise.seed = *a.seed;
  spec.mesh.fine_path = a.mesh_fine;
  spec.mesh.coarse_path = a.mesh_coarse;
  spec.mesh.fine_elements = a.elements_fine;
  spec.mesh.coarse_elements = a.elements_coarse;
  spec.mesh.current_amplitude = a.amplitude;
  spec.l1_domain = a.l1_domain == "space" ? SparsityDomainKind::Space : SparsityDomainKind::Transform;

  if (!a.config_path.empty()) {
    auto values = spec.config.to_map();
    for (const auto& [key, value] : read_key_values(a.config_path)) {
      if (key == "gamma") {
        spec.tv_gamma = std::stod(value);
      } else {
        values[key] = value;
      }
    }
    spec.config = InversionConfig::from_map(values);
  }
  if (a.alpha0) spec.config.alpha0 = *a.alpha0;
  if (a.q_alpha) spec.config.q_alpha = *a.q_alpha;
  if (a.beta) spec.config.beta = *a.beta;
  if (a.mu) spec.config.mu = *a.mu;
  if (a.outer_max) spec.config.outer_max = *a.outer_max;
  if (a.strict_cg) spec.config.strict_cg = true;
  spec.config.validate();
  return spec;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::invalid_argument("empty value list");
  return out;
}

void print_report(const ExperimentReport& r) {
  std::cout << method_name(r.spec.method) << " phantom " << phantom_name(r.spec.phantom)
            << " noise " << r.spec.noise.epsilon << ": " << r.status;
  if (r.status == "ok") {
    std::cout << std::setprecision(6) << "  RE " << r.relative_error << "  residual " << r.residual
              << "  iterations " << r.iterations << " (" << r.stop_reason << ")";
    if (r.cg_failures > 0) std::cout << "  cg misses " << r.cg_failures;
  } else {
    std::cout << "  " << r.message;
  }
  std::cout << "  " << std::setprecision(3) << r.wall_seconds << " s\n";
}

int cmd_run(const RunArgs& a) {
  const ExperimentReport r = run_experiment(build_spec(a), a.out);
  print_report(r);
  return r.status == "ok" ? 0 : 1;
}

int cmd_sweep(const RunArgs& a, const std::string& axis, const std::string& values, unsigned workers) {
  const SweepAxis ax = parse_axis(axis);
  const SweepResult result = sweep(ax, parse_list(values), build_spec(a), a.out, workers);
  int failed = 0;
  for (std::size_t i = 0; i < result.values.size(); ++i) {
    std::cout << axis_name(ax) << " = " << result.values[i] << "  ";
    print_report(result.reports[i]);
    if (result.reports[i].status != "ok") ++failed;
  }
  return failed == 0 ? 0 : 1;
}

int cmd_meshgen(int elements, int electrodes, double impedance, double coverage, const std::string& out) {
  const TriMesh mesh =
      generate_disk_mesh(elements, ElectrodeLayout::uniform(electrodes, impedance, coverage));
  save_mesh(mesh, out);
  std::cout << out << ": " << mesh.element_count() << " elements, " << mesh.node_count()
            << " nodes, " << mesh.electrode_count() << " electrodes\n";
  return 0;
}

int cmd_replay(const std::string& report_path, const std::string& out) {
  const ExperimentSpec spec = spec_from_report_file(report_path);
  const double recorded = relative_error_from_report_file(report_path);
  const ExperimentReport r = run_experiment(spec, out);
  print_report(r);
  const bool same = (std::isnan(recorded) && std::isnan(r.relative_error)) ||
                    recorded == r.relative_error;
  std::cout << std::setprecision(std::numeric_limits<double>::max_digits10) << "recorded RE "
            << recorded << ", replayed RE " << r.relative_error
            << (same ? "  (identical)\n" : "  (DIFFERENT)\n");
  if (r.status != "ok") return 1;
  return same ? 0 : 3;
}

int cmd_compare(const RunArgs& a, const std::string& levels, const std::string& methods) {
  if (a.out.empty()) throw std::invalid_argument("compare: --out is required");
  const auto eps = parse_list(levels);
  std::vector<std::string> names;
  {
    std::stringstream in(methods);
    std::string m;
    while (std::getline(in, m, ',')) {
      parse_method(m);
      names.push_back(m);
    }
  }
  MeshSpec mesh;
  mesh.fine_path = a.mesh_fine;
  mesh.coarse_path = a.mesh_coarse;
  mesh.fine_elements = a.elements_fine;
  mesh.coarse_elements = a.elements_coarse;
  mesh.current_amplitude = a.amplitude;
  const auto ctx = ExperimentContext::build(mesh);

  fs::create_directories(a.out);
  std::ofstream csv(fs::path(a.out) / "table5.csv");
  csv << std::setprecision(std::numeric_limits<double>::max_digits10);
  csv << "epsilon,method,phantom,RE,residual,iterations,status\n";
  int failed = 0;
  for (double e : eps) {
    for (const auto& name : names) {
      RunArgs point = a;
      point.method = name;
      point.noise = e;
      ExperimentSpec spec = build_spec(point);
      spec.mesh = mesh;
      std::ostringstream dir;
      dir << name << "_eps" << e;
      const ExperimentReport r = run_experiment(spec, *ctx, fs::path(a.out) / dir.str());
      print_report(r);
      if (r.status != "ok") ++failed;
      csv << e << ',' << name << ',' << phantom_name(spec.phantom) << ',' << r.relative_error << ','
          << r.residual << ',' << r.iterations << ',' << r.status << '\n';
    }
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear EIT reconstruction with elastic-net split Bregman iterations"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "simulate data and reconstruct one phantom");
  add_run_options(run, run_args);

  RunArgs sweep_args;
  std::string axis, values;
  unsigned workers = 0;
  auto* sw = app.add_subcommand("sweep", "repeat a run over one parameter axis");
  add_run_options(sw, sweep_args);
  sw->add_option("--axis", axis, "beta | mu | epsilon")->required();
  sw->add_option("--values", values, "comma separated values")->required();
  sw->add_option("--workers", workers, "concurrent runs (0 = hardware threads)");

  int mesh_elements = 492, mesh_electrodes = 16;
  double mesh_impedance = 0.05, mesh_coverage = 0.5;
  std::string mesh_out;
  auto* mg = app.add_subcommand("meshgen", "write a generated disk mesh");
  mg->add_option("--elements", mesh_elements, "target element count");
  mg->add_option("--electrodes", mesh_electrodes);
  mg->add_option("--contact-impedance", mesh_impedance);
  mg->add_option("--coverage", mesh_coverage, "fraction of the boundary under electrodes");
  mg->add_option("--out", mesh_out, "mesh file")->required();

  std::string replay_report, replay_out;
  auto* rp = app.add_subcommand("replay", "rerun the experiment recorded in a report.json");
  rp->add_option("report", replay_report)->required()->check(CLI::ExistingFile);
  rp->add_option("--out", replay_out);

  RunArgs compare_args;
  std::string levels = "0.001,0.003", methods = "alg2,alg1,l1,l2,tv";
  auto* cmp = app.add_subcommand("compare", "all methods at several noise levels, written to table5.csv");
  add_run_options(cmp, compare_args);
  cmp->add_option("--levels", levels, "comma separated noise levels");
  cmp->add_option("--methods", methods, "comma separated methods");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_args);
    if (*sw) return cmd_sweep(sweep_args, axis, values, workers);
    if (*mg) return cmd_meshgen(mesh_elements, mesh_electrodes, mesh_impedance, mesh_coverage, mesh_out);
    if (*rp) return cmd_replay(replay_report, replay_out);
    if (*cmp) return cmd_compare(compare_args, levels, methods);
  } catch (const std::exception& e) {
    std::cerr << "eit: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
