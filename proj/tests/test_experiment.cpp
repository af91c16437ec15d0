#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "dgieti/experiment.hpp"

using namespace dgieti;

namespace {

std::string sample(const std::string& name) {
  const char* dir = std::getenv("DGIETI_SAMPLES");
  return std::string(dir ? dir : "samples") + "/" + name;
}

ExperimentConfig small_grid() {
  ExperimentConfig cfg;
  cfg.nx = 2, cfg.ny = 2;
  cfg.refine = 2;
  return cfg;
}

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Emit, EmptyCsvIsHeaderOnly) {
  EXPECT_EQ(emit_table(std::vector<ResultRow>{}, OutputFormat::csv), "dofs,H_over_h,q,p,kappa,iterations,setup_s,solve_s\n");
}

TEST(Emit, OneRowPerLine) {
  ResultRow r;
  r.dofs = 12, r.H_over_h = 8, r.p = 2, r.kappa = 1.25, r.iterations = 3;
  const auto csv = emit_table(std::vector<ResultRow>{r}, OutputFormat::csv);
  EXPECT_EQ(lines(csv), 2);
  EXPECT_NE(csv.find("\n12,8,1,2,1.25,3,0,0\n"), std::string::npos);
  const auto md = emit_table(std::vector<ResultRow>{r, r}, OutputFormat::md);
  EXPECT_EQ(lines(md), 4);
  EXPECT_EQ(md.front(), '|');
}

TEST(Emit, JsonRoundTrip) {
  ResultRow a, b;
  a.dofs = 870, a.H_over_h = 8, a.q = 1, a.p = 2, a.kappa = 1.481866797, a.iterations = 6;
  b.dofs = 2862, b.H_over_h = 16, b.q = 2, b.p = 3, b.kappa = 1.739341792, b.iterations = 7, b.setup_s = 0.5;
  const auto back = parse_result_json(emit_table(std::vector<ResultRow>{a, b}, OutputFormat::json));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].dofs, 2862);
  EXPECT_EQ(back[1].p, 3);
  EXPECT_DOUBLE_EQ(back[0].kappa, 1.481866797);
  EXPECT_DOUBLE_EQ(back[1].setup_s, 0.5);
  EXPECT_EQ(parse_result_json(emit_table(std::vector<ResultRow>{}, OutputFormat::json)).size(), 0u);
}

TEST(Parse, SweepAndLists) {
  ExperimentConfig cfg;
  parse_sweep("hoverh:8,16,32", cfg);
  EXPECT_EQ(cfg.sweep, SweepKind::hoverh);
  EXPECT_EQ(cfg.values, (std::vector<double>{8, 16, 32}));
  parse_sweep("degree:2,5", cfg);
  EXPECT_EQ(cfg.sweep, SweepKind::degree);
  EXPECT_THROW(parse_sweep("hoverh", cfg), ConfigError);
  EXPECT_THROW(parse_sweep("size:2", cfg), ConfigError);
  EXPECT_THROW(parse_list("1,x"), ConfigError);
  EXPECT_THROW(parse_list(""), ConfigError);
  EXPECT_THROW(parse_list("2.5e"), ConfigError);
}

TEST(Parse, AlphaPatterns) {
  const auto c = parse_alpha("constant:3");
  EXPECT_EQ(c.kind, AlphaPattern::Kind::constant);
  EXPECT_EQ(c.lo, 3.0);
  const auto cb = parse_alpha("checkerboard:1e-4:1e4");
  EXPECT_EQ(cb.kind, AlphaPattern::Kind::checkerboard);
  EXPECT_EQ(cb.hi, 1e4);
  EXPECT_THROW(parse_alpha("checkerboard:1"), ConfigError);
  EXPECT_THROW(parse_alpha("stripes:1:2"), ConfigError);
}

TEST(Parse, ExtraRefine) {
  const auto m = parse_extra_refine("0:1,3:2");
  EXPECT_EQ(m.at(0), 1);
  EXPECT_EQ(m.at(3), 2);
  EXPECT_THROW(parse_extra_refine("1"), ConfigError);
  EXPECT_THROW(parse_extra_refine("1:x"), ConfigError);
}

TEST(Config, RejectsInvalidValues) {
  auto bad = [](auto mutate) {
    ExperimentConfig cfg;
    mutate(cfg);
    return cfg;
  };
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
  EXPECT_THROW(bad([](auto& c) { c.degree = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.tol = 1.5; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.alpha.lo = -1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.sweep = SweepKind::hoverh, c.values = {12}; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.sweep = SweepKind::degree, c.values = {2.5}; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.domain = DomainKind::file, c.geometry_file = "x", c.sweep = SweepKind::degree, c.values = {2}; })
                   .validate(),
               ConfigError);
  // extra refinement of a patch that does not exist
  EXPECT_THROW(run_sweep(bad([](auto& c) { c.extra_refine[9] = 1; })), ConfigError);
}

TEST(Coefficients, CheckerboardAndSeededRandom) {
  ExperimentConfig cfg;
  cfg.alpha = parse_alpha("checkerboard:1:5");
  EXPECT_EQ(coefficients(cfg, 9), (std::vector<double>{1, 5, 1, 5, 1, 5, 1, 5, 1}));
  cfg.nx = 2, cfg.ny = 2;
  EXPECT_EQ(coefficients(cfg, 4), (std::vector<double>{1, 5, 5, 1}));
  cfg.alpha = parse_alpha("random:1:5");
  cfg.seed = 11;
  const auto a = coefficients(cfg, 16);
  EXPECT_EQ(a, coefficients(cfg, 16));
  for (double v : a) EXPECT_TRUE(v == 1.0 || v == 5.0);
}

TEST(Mesh, SweepPointsControlRefinement) {
  ExperimentConfig cfg = small_grid();
  parse_sweep("hoverh:4,8", cfg);
  const auto pts = run_points(cfg);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].refine, 2);
  EXPECT_EQ(pts[1].refine, 3);

  cfg.sweep = SweepKind::q;
  cfg.values = {1, 4};
  const auto q = run_points(cfg);
  const auto disc = make_discretization(cfg, q[1], nullptr);
  EXPECT_DOUBLE_EQ(max_interface_ratio(disc), 4.0);
  EXPECT_DOUBLE_EQ(max_interface_ratio(make_discretization(cfg, q[0], nullptr)), 1.0);
}

TEST(Mesh, MultiplicityModeRepeatsCoarseKnots) {
  ExperimentConfig cfg = small_grid();
  cfg.degree = 3;
  const auto mp = build_mesh(cfg, run_points(cfg).front());
  // coarse level 1: breakpoint 0.5 has multiplicity p - 1 = 2, level 2 adds simple knots
  const auto& kv = mp.patches[0].basis.direction(0).knots();
  EXPECT_EQ(std::count(kv.begin(), kv.end(), 0.5), 2);
  EXPECT_EQ(std::count(kv.begin(), kv.end(), 0.25), 1);
  cfg.mode = SmoothnessMode::smoothness;
  const auto smooth = build_mesh(cfg, run_points(cfg).front());
  const auto& ks = smooth.patches[0].basis.direction(0).knots();
  EXPECT_EQ(std::count(ks.begin(), ks.end(), 0.5), 1);
}

TEST(Geometry, LoadsSampleFile) {
  const auto mp = load_geometry(sample("l_shape.json"));
  EXPECT_EQ(mp.size(), 3);
  EXPECT_EQ(mp.topology.interfaces.size(), 2u);
  int dirichlet = 0;
  for (const auto& b : mp.topology.boundary) dirichlet += b.tag == BoundaryTag::dirichlet;
  EXPECT_EQ(dirichlet, 2);
}

TEST(Geometry, JsonRoundTripKeepsPatchesAndTags) {
  const auto mp = quarter_annulus(2, 1, 2, 1, std::vector<int>{0, 1}, 1);
  const auto back = parse_geometry(geometry_to_json(mp));
  ASSERT_EQ(back.size(), mp.size());
  for (int k = 0; k < mp.size(); ++k) {
    EXPECT_EQ(back.patches[k].control_points, mp.patches[k].control_points);
    EXPECT_EQ(back.patches[k].basis.size(), mp.patches[k].basis.size());
  }
  EXPECT_EQ(back.topology.interfaces.size(), mp.topology.interfaces.size());
  EXPECT_EQ(back.topology.boundary.size(), mp.topology.boundary.size());
}

TEST(Geometry, MalformedFilesAreConfigErrors) {
  EXPECT_THROW(load_geometry("/nonexistent/geometry.json"), ConfigError);
  auto j = geometry_to_json(multipatch_rectangle(2, 1, 2, 0, std::vector<int>{0, 0}));
  auto missing = j;
  missing["patches"][0]["control_points"].erase(0);
  EXPECT_THROW(parse_geometry(missing), ConfigError);
  auto side = j;
  side["boundary"][0]["side"] = "up";
  EXPECT_THROW(parse_geometry(side), ConfigError);
  auto iface = j;
  iface["boundary"].push_back({{"patch", 0}, {"side", "east"}, {"tag", "dirichlet"}});
  EXPECT_THROW(parse_geometry(iface), ConfigError);
  auto dim = j;
  dim["dim"] = 3;
  EXPECT_THROW(parse_geometry(dim), ConfigError);
}

TEST(Sweep, RowsFollowSweepOrder) {
  ExperimentConfig cfg = small_grid();
  parse_sweep("degree:2,3", cfg);
  const auto res = run_sweep(cfg);
  ASSERT_TRUE(res.ok());
  ASSERT_EQ(res.rows.size(), 2u);
  EXPECT_EQ(res.rows[0].p, 2);
  EXPECT_EQ(res.rows[1].p, 3);
  EXPECT_GT(res.rows[1].dofs, res.rows[0].dofs);
  for (const auto& r : res.rows) {
    EXPECT_GE(r.kappa, 1.0 - 1e-8);
    EXPECT_GT(r.iterations, 0);
    EXPECT_EQ(r.setup_s, 0.0);
    EXPECT_DOUBLE_EQ(r.H_over_h, 4.0);
  }
}

TEST(Sweep, ParallelRowsMatchSequential) {
  ExperimentConfig cfg = small_grid();
  parse_sweep("hoverh:2,4,8", cfg);
  const auto seq = emit_table(run_sweep(cfg).rows, OutputFormat::csv);
  cfg.parallel_rows = true;
  EXPECT_EQ(emit_table(run_sweep(cfg).rows, OutputFormat::csv), seq);
  EXPECT_EQ(lines(seq), 4);
}

TEST(Sweep, NonConvergenceIsReportedPerRow) {
  ExperimentConfig cfg = small_grid();
  cfg.max_it = 1;
  cfg.tol = 1e-12;
  parse_sweep("hoverh:4,8", cfg);
  const auto res = run_sweep(cfg);
  EXPECT_FALSE(res.ok());
  EXPECT_EQ(res.failures.size() + res.rows.size(), 2u);
}

TEST(Sweep, FileDomain) {
  ExperimentConfig cfg;
  cfg.domain = DomainKind::file;
  cfg.geometry_file = sample("curved_two_patch.json");
  cfg.refine = 2;
  const auto res = run_sweep(cfg);
  ASSERT_TRUE(res.ok());
  ASSERT_EQ(res.rows.size(), 1u);
  EXPECT_GE(res.rows[0].kappa, 1.0 - 1e-8);
}
