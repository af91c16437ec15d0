// Command-line harness: condition-number sweeps, convergence and
// harmonic-extension studies, matrix export.
//
// exit codes: 0 success, 1 a row or check failed, 2 configuration error

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "dgieti/experiment.hpp"

using namespace dgieti;

namespace {

template <class E>
E pick(const std::string& value, const std::vector<std::pair<std::string, E>>& choices, const char* what) {
  for (const auto& [name, e] : choices)
    if (name == value) return e;
  std::string msg = std::string("unknown ") + what + " '" + value + "' (";
  for (std::size_t i = 0; i < choices.size(); ++i) msg += (i ? ", " : "") + choices[i].first;
  throw ConfigError(msg + ")");
}

void write_output(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

std::unique_ptr<MultiPatch> file_mesh_of(const ExperimentConfig& cfg) {
  if (cfg.domain != DomainKind::file) return nullptr;
  return std::make_unique<MultiPatch>(load_geometry(cfg.geometry_file));
}

int run_convergence(const ExperimentConfig& cfg, const std::vector<double>& levels, const std::string& out) {
  if (cfg.alpha.kind != AlphaPattern::Kind::constant)
    throw ConfigError("the convergence study needs a constant coefficient");
  const auto file = file_mesh_of(cfg);
  std::vector<int> lv;
  for (double l : levels) {
    if (l < 0 || l != std::floor(l)) throw ConfigError("levels must be non-negative integers");
    lv.push_back(static_cast<int>(l));
  }
  DiscretizationConfig dc;
  dc.delta = cfg.delta;
  const auto rows = convergence_study(
      [&](int L) { return build_mesh(cfg, RunPoint{cfg.degree, L, 0}, file.get()); }, sine_solution(), cfg.alpha.lo, lv, dc);
  write_output(emit_table(to_table(rows), cfg.format), out);
  return 0;
}

int run_harmonic(const ExperimentConfig& cfg, int samples, const std::string& out) {
  const auto file = file_mesh_of(cfg);
  const Discretization disc = make_discretization(cfg, RunPoint{cfg.degree, cfg.refine, 0}, file.get());
  Table t{{"patch", "samples", "violations", "min_ratio", "max_ratio"}, {}};
  int bad = 0;
  for (int k = 0; k < disc.patch_count(); ++k) {
    if (disc.spaces[k].interior.empty() || disc.spaces[k].boundary.empty()) continue;
    const auto r = check_harmonic_equivalence(disc, k, samples, cfg.seed + static_cast<unsigned>(k));
    bad += r.violations;
    t.rows.push_back({Cell(static_cast<long long>(k)), Cell(static_cast<long long>(r.samples)),
                      Cell(static_cast<long long>(r.violations)), Cell(r.min_ratio), Cell(r.max_ratio)});
  }
  write_output(emit_table(t, cfg.format), out);
  if (bad > 0) std::cerr << "harmonic extension ordering violated in " << bad << " samples\n";
  return bad > 0 ? 1 : 0;
}

void export_matrices(const ExperimentConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto file = file_mesh_of(cfg);
  const Discretization disc = make_discretization(cfg, run_points(cfg).front(), file.get());
  for (int k = 0; k < disc.patch_count(); ++k) {
    const auto M = assemble_patch_matrices(disc, k);
    write_matrix_market(M.operator_matrix(), dir + "/patch" + std::to_string(k) + "_K_e.mtx");
    write_matrix_market(M.dg_norm(), dir + "/patch" + std::to_string(k) + "_D.mtx");
  }
  const auto g = assemble_global_extended(disc, default_problem());
  write_matrix_market(g.K, dir + "/global_K.mtx");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dG-IETI-DP experiment harness for multipatch B-spline discretizations"};
  ExperimentConfig cfg;
  std::vector<int> grid, annulus;
  std::string geometry, mode = "multiplicity", extra, alpha = "constant:1", alg = "C", scaling = "coefficient";
  std::string sweep, format = "csv", out, study = "sweep", levels = "1,2,3,4", export_dir, write_geometry;
  int samples = 100;

  auto* g_grid = app.add_option("--grid", grid, "NX NY rectangle grid of unit squares")->expected(2);
  auto* g_ann = app.add_option("--annulus", annulus, "NX NY quarter annulus split into patches")->expected(2);
  auto* g_geo = app.add_option("--geometry", geometry, "multipatch geometry JSON file");
  g_grid->excludes(g_ann)->excludes(g_geo);
  g_ann->excludes(g_geo);
  app.add_option("--degree", cfg.degree, "spline degree p");
  app.add_option("--smoothness-mode", mode, "multiplicity | smoothness");
  app.add_option("--refine", cfg.refine, "uniform refinements r");
  app.add_option("--coarse-level", cfg.coarse_level, "levels whose knots carry the elevated multiplicity");
  app.add_option("--extra-refine", extra, "per-patch extra refinements \"k:r,...\"");
  app.add_option("--alpha", alpha, "constant:V | checkerboard:LO:HI | random:LO:HI");
  app.add_option("--alg", alg, "primal set A | C");
  app.add_option("--scaling", scaling, "multiplicity | coefficient | stiffness");
  app.add_option("--delta", cfg.delta, "penalty parameter (default 2(p+1)(p+2))");
  app.add_option("--tol", cfg.tol, "relative PCG residual reduction");
  app.add_option("--max-it", cfg.max_it, "PCG iteration limit");
  app.add_option("--sweep", sweep, "hoverh:LIST | q:LIST | degree:LIST");
  app.add_option("--format", format, "csv | json | md");
  app.add_option("--out", out, "output file (default stdout)");
  app.add_option("--seed", cfg.seed, "seed for randomized patterns and checks");
  app.add_flag("--parallel-rows", cfg.parallel_rows, "run sweep rows concurrently");
  app.add_flag("--timings", cfg.timings, "report wall-clock seconds (output is then not reproducible)");
  app.add_option("--study", study, "sweep | convergence | harmonic");
  app.add_option("--levels", levels, "refinement levels of the convergence study");
  app.add_option("--samples", samples, "random boundary data per patch for the harmonic study");
  app.add_option("--export-mtx", export_dir, "write patch and global matrices in Matrix Market format");
  app.add_option("--write-geometry", write_geometry, "write the generated multipatch geometry as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!grid.empty()) {
      cfg.domain = DomainKind::grid;
      cfg.nx = grid[0], cfg.ny = grid[1];
    } else if (!annulus.empty()) {
      cfg.domain = DomainKind::annulus;
      cfg.nx = annulus[0], cfg.ny = annulus[1];
    } else if (!geometry.empty()) {
      cfg.domain = DomainKind::file;
      cfg.geometry_file = geometry;
    }
    cfg.mode = pick<SmoothnessMode>(mode, {{"multiplicity", SmoothnessMode::multiplicity}, {"smoothness", SmoothnessMode::smoothness}},
                                    "smoothness mode");
    if (!extra.empty()) cfg.extra_refine = parse_extra_refine(extra);
    cfg.alpha = parse_alpha(alpha);
    cfg.alg = pick<Algorithm>(alg, {{"A", Algorithm::A}, {"C", Algorithm::C}}, "algorithm");
    cfg.scaling = pick<ScalingKind>(
        scaling,
        {{"multiplicity", ScalingKind::multiplicity}, {"coefficient", ScalingKind::coefficient}, {"stiffness", ScalingKind::stiffness}},
        "scaling");
    if (!sweep.empty()) parse_sweep(sweep, cfg);
    cfg.format = pick<OutputFormat>(format, {{"csv", OutputFormat::csv}, {"json", OutputFormat::json}, {"md", OutputFormat::md}}, "format");
    cfg.validate();

    if (!write_geometry.empty()) {
      const auto file = file_mesh_of(cfg);
      std::ofstream g(write_geometry);
      if (!g) throw ConfigError("cannot write " + write_geometry);
      g << geometry_to_json(build_mesh(cfg, run_points(cfg).front(), file.get())).dump(2) << '\n';
    }
    if (!export_dir.empty()) export_matrices(cfg, export_dir);

    if (study == "convergence") return run_convergence(cfg, parse_list(levels), out);
    if (study == "harmonic") {
      if (samples < 1) throw ConfigError("samples must be >= 1");
      return run_harmonic(cfg, samples, out);
    }
    if (study != "sweep") throw ConfigError("unknown study '" + study + "' (sweep, convergence, harmonic)");

    const SweepResult res = run_sweep(cfg);
    write_output(emit_table(res.rows, cfg.format), out);
    for (const auto& f : res.failures) std::cerr << "error: " << f << '\n';
    return res.ok() ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const TopologyError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
