#include <gtest/gtest.h>

#include <numbers>

#include "dgieti/geometry.hpp"

using namespace dgieti;

TEST(Geometry, BilinearPatchReproducesQuadrilateral) {
  const std::array<Point2, 4> corners{Point2{0, 0}, Point2{2, 0.5}, Point2{-0.25, 1}, Point2{1.5, 2}};
  const Patch P = bilinear_patch(corners, 3, 2);
  for (double s : {0.0, 0.2, 0.7, 1.0})
    for (double t : {0.0, 0.4, 1.0}) {
      const auto m = map_point(P, {s, t});
      for (int r = 0; r < 2; ++r) {
        const double x = (1 - s) * (1 - t) * corners[0][r] + s * (1 - t) * corners[1][r] +
                         (1 - s) * t * corners[2][r] + s * t * corners[3][r];
        EXPECT_NEAR(m.x[r], x, 1e-13);
        const double dxs = (1 - t) * (corners[1][r] - corners[0][r]) + t * (corners[3][r] - corners[2][r]);
        const double dxt = (1 - s) * (corners[2][r] - corners[0][r]) + s * (corners[3][r] - corners[1][r]);
        EXPECT_NEAR(m.jac[r][0], dxs, 1e-12);
        EXPECT_NEAR(m.jac[r][1], dxt, 1e-12);
      }
    }
}

TEST(Geometry, DegenerateQuadrilateralRejected) {
  const std::array<Point2, 4> collapsed{Point2{0, 0}, Point2{1, 0}, Point2{0, 0}, Point2{1, 0}};
  EXPECT_THROW(bilinear_patch(collapsed, 2, 0), std::invalid_argument);
  const std::array<Point2, 4> bowtie{Point2{0, 0}, Point2{1, 0}, Point2{1, 1}, Point2{0, 1}};
  EXPECT_THROW(bilinear_patch(bowtie, 2, 0), std::invalid_argument);
}

TEST(Geometry, RefinementKeepsTheMap) {
  const MultiPatch ann = quarter_annulus(1, 1, 2, 0);
  const Patch& coarse = ann.patches[0];
  const Patch fine = refine_patch(coarse, 3);
  EXPECT_EQ(fine.basis.size(0), 2 + 8);
  for (double s : {0.0, 0.33, 0.9})
    for (double t : {0.1, 0.5, 1.0}) {
      const auto a = map_point(coarse, {s, t});
      const auto b = map_point(fine, {s, t});
      EXPECT_NEAR(distance(a.x, b.x), 0.0, 1e-13);
      EXPECT_NEAR(det(a.jac), det(b.jac), 1e-12);
    }
}

TEST(Geometry, QuarterAnnulusApproximatesArcs) {
  const MultiPatch ann = quarter_annulus(2, 2, 3, 1);
  ASSERT_EQ(ann.size(), 4);
  EXPECT_EQ(ann.topology.interfaces.size(), 4u);
  for (const auto& P : ann.patches)
    for (double s : {0.0, 0.5, 1.0})
      for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const auto m = map_point(P, {s, t});
        EXPECT_GT(det(m.jac), 0.0);
      }
  // corners are interpolated exactly, arcs approximately
  EXPECT_NEAR(std::hypot(patch_corner(ann.patches[0], 0, 0)[0], patch_corner(ann.patches[0], 0, 0)[1]), 1.0, 1e-13);
  const Point2 mid = map_point(ann.patches[0], {0.0, 0.5}).x;
  EXPECT_NEAR(std::hypot(mid[0], mid[1]), 1.0, 1e-3);
}

TEST(Topology, RectangleGridInterfacesAndTags) {
  const MultiPatch mp = multipatch_rectangle(3, 2, 2, 1);
  const auto& topo = mp.topology;
  ASSERT_EQ(mp.size(), 6);
  EXPECT_EQ(topo.interfaces.size(), 7u);  // 2*2 horizontal neighbors + 3 vertical
  for (const auto& f : topo.interfaces) {
    EXPECT_LT(f.k, f.l);
    EXPECT_FALSE(f.reversed);
  }
  EXPECT_EQ(topo.neighbors[4], (std::vector<int>{1, 3, 5}));
  EXPECT_TRUE(topo.is_dirichlet(0, Side::west));
  EXPECT_TRUE(topo.is_dirichlet(3, Side::west));
  EXPECT_FALSE(topo.is_dirichlet(2, Side::east));
  EXPECT_FALSE(topo.is_dirichlet(1, Side::south));
  EXPECT_EQ(topo.boundary.size(), 10u);
  // vertex sets: patch 4 (middle top) has 4 vertices, each owned by several patches in V_e
  EXPECT_EQ(topo.vertices[4].size(), 4u);
  EXPECT_EQ(topo.vertices[0].size(), 3u);  // (1,0), (1,1), (0,1)
  std::size_t owned_by_4 = 0;
  for (const auto& e : topo.extended_vertices[4]) owned_by_4 += e.owner == 4;
  EXPECT_EQ(owned_by_4, 4u);
  EXPECT_EQ(topo.extended_vertices[4].size(), 4u + 3 * 2u);
}

TEST(Topology, DetectsReversedOrientation) {
  // second patch is the mirror image so its west side runs top to bottom
  std::vector<Patch> patches{
      bilinear_patch({Point2{0, 0}, Point2{1, 0}, Point2{0, 1}, Point2{1, 1}}, 2, 1),
      bilinear_patch({Point2{1, 1}, Point2{2, 1}, Point2{1, 0}, Point2{2, 0}}, 2, 1)};
  const auto topo = build_topology(patches);
  ASSERT_EQ(topo.interfaces.size(), 1u);
  EXPECT_TRUE(topo.interfaces[0].reversed);
  EXPECT_EQ(topo.interfaces[0].side_k, Side::east);
  EXPECT_EQ(topo.interfaces[0].side_l, Side::west);
  EXPECT_DOUBLE_EQ(topo.interfaces[0].map_to_l(0.25), 0.75);
}

TEST(Topology, RejectsNonConformingLayout) {
  std::vector<Patch> patches{
      bilinear_patch({Point2{0, 0}, Point2{1, 0}, Point2{0, 2}, Point2{1, 2}}, 2, 0),
      bilinear_patch({Point2{1, 0}, Point2{2, 0}, Point2{1, 1}, Point2{2, 1}}, 2, 0)};
  EXPECT_THROW(build_topology(patches), TopologyError);
}

TEST(Topology, RejectsTagOnInterface) {
  std::vector<Patch> patches{bilinear_patch({Point2{0, 0}, Point2{1, 0}, Point2{0, 1}, Point2{1, 1}}, 2, 0),
                             bilinear_patch({Point2{1, 0}, Point2{2, 0}, Point2{1, 1}, Point2{2, 1}}, 2, 0)};
  const std::vector<BoundarySide> tags{{0, Side::east, BoundaryTag::dirichlet}};
  EXPECT_THROW(build_topology(patches, -1.0, tags), TopologyError);
}

TEST(Geometry, PatchDiameterAndMeshSize) {
  const MultiPatch mp = multipatch_rectangle(2, 1, 2, 2, std::vector<int>{0, 1});
  EXPECT_NEAR(patch_diameter(mp.patches[0]), std::numbers::sqrt2, 1e-14);
  EXPECT_NEAR(mesh_size(mp.patches[0]), std::numbers::sqrt2 / 4, 1e-14);
  EXPECT_NEAR(mesh_size(mp.patches[1]), std::numbers::sqrt2 / 8, 1e-14);
}

TEST(Geometry, SideDofsFollowTangentialOrder) {
  const TensorBasis tb(uniform_knot_vector(2, 2), uniform_knot_vector(2, 1));  // 4 x 3
  EXPECT_EQ(side_dofs(tb, Side::west), (std::vector<int>{0, 4, 8}));
  EXPECT_EQ(side_dofs(tb, Side::east), (std::vector<int>{3, 7, 11}));
  EXPECT_EQ(side_dofs(tb, Side::south), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(side_dofs(tb, Side::north), (std::vector<int>{8, 9, 10, 11}));
}
