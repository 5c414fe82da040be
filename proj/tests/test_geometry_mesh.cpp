#include "otstab/mesh.hpp"
#include "otstab/moment_integral.hpp"
#include "otstab/singular_solutions.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

using namespace otstab;

TEST(CubeMesh, SingleCellCounts) {
  const Mesh m = build_cube_mesh(1);
  EXPECT_EQ(m.vertices.size(), 8u);
  EXPECT_EQ(m.tets.size(), 6u);
  EXPECT_EQ(m.boundary_faces.size(), 12u);
  EXPECT_EQ(m.boundary_vertices.size(), 8u);
}

TEST(CubeMesh, TwoDivisionCounts) {
  const Mesh m = build_cube_mesh(2);
  EXPECT_EQ(m.vertices.size(), 27u);
  EXPECT_EQ(m.tets.size(), 48u);
  // 6 faces x 4 squares x 2 triangles; only the centre vertex is interior.
  EXPECT_EQ(m.boundary_faces.size(), 48u);
  EXPECT_EQ(m.boundary_vertices.size(), 26u);
}

TEST(CubeMesh, VolumeOrientationAndSize) {
  for (int d : {1, 2, 3, 5}) {
    const Mesh m = build_cube_mesh(d);
    const auto check = check_mesh(m);
    EXPECT_TRUE(check.ok()) << "divisions " << d;
    EXPECT_NEAR(check.total_volume, 1.0, 1e-12);
    EXPECT_NEAR(m.h, std::sqrt(3.0) / d, 1e-14);
    for (std::size_t t = 0; t < m.num_tets(); ++t) EXPECT_GT(tet_volume(m, t), 0.0);
  }
}

TEST(CubeMesh, RefinementHalvesSizeAndMultipliesTets) {
  for (int d : {1, 2, 4}) {
    const Mesh a = build_cube_mesh(d), b = build_cube_mesh(2 * d);
    EXPECT_NEAR(b.h, 0.5 * a.h, 1e-14);
    EXPECT_EQ(b.tets.size(), 8 * a.tets.size());
  }
}

TEST(CubeMesh, BoundaryFacesPointOutward) {
  const Mesh m = build_cube_mesh(3);
  const Point centre(0.5, 0.5, 0.5);
  for (std::size_t f = 0; f < m.boundary_faces.size(); ++f) {
    const auto v = m.face_points(f);
    const Point c = (v[0] + v[1] + v[2]) / 3.0;
    EXPECT_GT(face_normal(m, f).dot(c - centre), 0.0);
  }
}

TEST(CubeMesh, RejectsNonPositiveDivisions) { EXPECT_THROW(build_cube_mesh(0), std::invalid_argument); }

TEST(MeshIO, RoundTripIsExact) {
  const Mesh m = build_cube_mesh(3);
  std::stringstream ss;
  write_mesh(ss, m);
  const Mesh r = read_mesh(ss);
  ASSERT_EQ(r.vertices.size(), m.vertices.size());
  ASSERT_EQ(r.tets.size(), m.tets.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(r.vertices[i], m.vertices[i]);
  EXPECT_EQ(r.tets, m.tets);
  EXPECT_EQ(mesh_fingerprint(r), mesh_fingerprint(m));
  EXPECT_EQ(r.boundary_faces.size(), m.boundary_faces.size());
}

TEST(MeshIO, HeaderLayout) {
  std::stringstream ss;
  write_mesh(ss, build_cube_mesh(1));
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "3 8 6");
  std::getline(ss, line);
  EXPECT_EQ(line, "0 0 0");
}

TEST(MeshIO, TruncatedInputIsRejected) {
  std::stringstream ss("3 4 1\n0 0 0\n1 0 0\n");
  EXPECT_THROW(read_mesh(ss), ValidationError);
}

TEST(BoundaryDistance, MatchesAnalyticCubeDistance) {
  const Mesh m = build_cube_mesh(2);
  const std::vector<Point> pts{Point(0.3, 0.4, 0.45), Point(0.5, 0.5, 1.2), Point(1.3, 1.4, 0.5), Point(-0.2, -0.2, -0.2)};
  for (const auto& p : pts) {
    // Exact distance to the surface of [0,1]^3.
    double expected;
    const bool inside = (p.array() >= 0.0).all() && (p.array() <= 1.0).all();
    if (inside) {
      expected = std::min(p.minCoeff(), 1.0 - p.maxCoeff());
    } else {
      const Eigen::Array3d excess = (p.array() - p.array().min(1.0).max(0.0));
      expected = excess.matrix().norm();
    }
    EXPECT_NEAR(boundary_distance(m, p), expected, 1e-14) << format_point(p);
    EXPECT_EQ(mesh_contains(m, p), inside);
  }
}

TEST(BoundaryFrame, FlatFaceOffset) {
  const Mesh m = build_cube_mesh(4);
  const auto frame = make_boundary_frame(m, Point(0.5, 0.5, 1.0), 0.2);
  EXPECT_NEAR((frame.nu_tilde - Point(0, 0, 1)).norm(), 0.0, 1e-15);
  const Point z = offset_point(frame, 0.1);
  EXPECT_NEAR((z - Point(0.5, 0.5, 1.1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(boundary_distance(m, z), 0.1, 1e-14);
  // Smallest sampled tau is tau0 / 2^15; 1 + tau loses about 1e-11 relative.
  EXPECT_NEAR(frame.C_tau, 1.0, 1e-10);
}

TEST(BoundaryFrame, EdgeMidpointOffset) {
  const Mesh m = build_cube_mesh(4);
  const auto frame = make_boundary_frame(m, Point(1.0, 1.0, 0.5), 0.2);
  const Point expected_dir = Point(1, 1, 0).normalized();
  EXPECT_NEAR((frame.nu_tilde - expected_dir).norm(), 0.0, 1e-14);
  EXPECT_NEAR(frame.nu_tilde.norm(), 1.0, 1e-15);
  const double tau = 0.1;
  const Point z = offset_point(frame, tau);
  // The nearest boundary point is the edge itself, at distance |z - x0| = tau.
  const double dist = boundary_distance(m, z);
  EXPECT_NEAR(dist, tau, 1e-14);
  const double C = 1.0 / std::sqrt(2.0);
  EXPECT_LE(C * tau, dist + 1e-15);
  EXPECT_LE(dist, tau + 1e-15);
  EXPECT_GE(frame.C_tau, C);
}

TEST(BoundaryFrame, CornerDirectionIsDiagonal) {
  const Mesh m = build_cube_mesh(2);
  const auto frame = make_boundary_frame(m, Point(0, 0, 0), 0.1);
  EXPECT_NEAR((frame.nu_tilde + Point(1, 1, 1).normalized()).norm(), 0.0, 1e-14);
  for (double tau : {0.1, 0.01, 0.001}) EXPECT_FALSE(mesh_contains(m, offset_point(frame, tau)));
}

TEST(BoundaryFrame, ComparabilityOnSampledOffsets) {
  const Mesh m = build_cube_mesh(3);
  for (const Point& x0 : {Point(0.2, 0.7, 0.0), Point(1.0, 0.0, 0.4), Point(1, 1, 1)}) {
    const auto frame = make_boundary_frame(m, x0, 0.3);
    for (int j = 0; j < 10; ++j) {
      const double tau = frame.tau0 * std::pow(0.5, j);
      const Point z = offset_point(frame, tau);
      EXPECT_FALSE(mesh_contains(m, z));
      const double d = boundary_distance(m, z);
      EXPECT_LE(frame.C_tau * tau, d * (1 + 1e-12));
      EXPECT_LE(d, tau * (1 + 1e-12));
    }
  }
}

TEST(BoundaryFrame, RejectsOutOfRangeTau) {
  const Mesh m = build_cube_mesh(2);
  const auto frame = make_boundary_frame(m, Point(0.5, 0.5, 1.0), 0.2);
  EXPECT_THROW(offset_point(frame, 0.0), std::out_of_range);
  EXPECT_THROW(offset_point(frame, -0.1), std::out_of_range);
  EXPECT_THROW(offset_point(frame, 0.3), std::out_of_range);
  EXPECT_THROW(make_boundary_frame(m, Point(0.5, 0.5, 0.5), 0.2), ValidationError);
}

TEST(RedRefine, ChildrenPartitionParentVolume) {
  const std::array<Point, 4> v{Point(0, 0, 0), Point(1, 0.1, 0), Point(0.2, 1, 0), Point(0.1, 0.3, 0.9)};
  const double parent = signed_volume(v[0], v[1], v[2], v[3]);
  double sum = 0.0;
  for (const auto& c : red_refine(v)) {
    const double vol = signed_volume(c[0], c[1], c[2], c[3]);
    EXPECT_GT(vol, 0.0);
    EXPECT_LE(tet_diameter(c), 0.5 * tet_diameter(v) * 1.5);
    sum += vol;
  }
  EXPECT_NEAR(sum, parent, 1e-15);
}

TEST(MomentIntegral, ZeroExponentGivesVolume) {
  const Mesh m = build_cube_mesh(2);
  EXPECT_NEAR(moment_integral(m, Point(0.5, 0.5, 3.0), 0.0, 100.0, BallRegion::inside), 1.0, 1e-12);
  // Ball of radius 0.5 about a point just above the top face: a spherical cap.
  const double tau = 0.1, rho = 0.5;
  const double hcap = rho - tau;
  const double cap = std::numbers::pi * hcap * hcap * (3 * rho - hcap) / 3.0;
  EXPECT_NEAR(moment_integral(m, Point(0.5, 0.5, 1.0 + tau), 0.0, rho, BallRegion::inside), cap, 1e-3 * cap);
}

TEST(MomentIntegral, ShellMatchesRadialIntegral) {
  const double eps = 0.1, R = 1.0;
  const Mesh shell = build_shell_mesh(eps, R, 16, 12);
  ASSERT_TRUE(check_mesh(shell).ok());
  const double exact = 4.0 * std::numbers::pi * (1.0 / eps - 1.0 / R);
  const double got = moment_integral(shell, Point::Zero(), -4.0, 10.0, BallRegion::all);
  EXPECT_NEAR(got, exact, 0.01 * exact);
  EXPECT_NEAR(moment_integral(shell, Point::Zero(), -4.0, 10.0, BallRegion::inside), got, 1e-12 * got);
}

TEST(MomentIntegral, InsidePlusOutsideEqualsWhole) {
  const Mesh m = build_cube_mesh(3);
  const auto frame = make_boundary_frame(m, Point(0.5, 0.5, 1.0), 0.25);
  for (double s : {-4.0, -3.0, -2.0, 0.0}) {
    for (double tau : {0.2, 0.05}) {
      const Point z = offset_point(frame, tau);
      const double in = moment_integral(m, z, s, 0.5, BallRegion::inside);
      const double out = moment_integral(m, z, s, 0.5, BallRegion::outside);
      const double all = moment_integral(m, z, s, 0.5, BallRegion::all);
      EXPECT_NEAR(in + out, all, 2e-3 * all) << "s " << s << " tau " << tau;
    }
  }
}

namespace {

// Slope of log(integral) against log(tau) for tau = tau0/2 ... tau0/16.
double tau_exponent(double s) {
  const Mesh m = build_cube_mesh(4);
  const double tau0 = 1.0 / 64.0, rho = 0.5;
  const auto frame = make_boundary_frame(m, Point(0.5, 0.5, 1.0), tau0);
  std::vector<double> taus, vals;
  for (int j = 1; j <= 4; ++j) {
    const double tau = tau0 * std::ldexp(1.0, -j);
    taus.push_back(tau);
    vals.push_back(moment_integral(m, offset_point(frame, tau), s, rho, BallRegion::inside));
  }
  return loglog_slope(taus, vals);
}

}  // namespace

TEST(MomentIntegral, TauScalingLeadingExponent) {
  const int n = 3;
  EXPECT_NEAR(tau_exponent(2.0 - 2.0 * n), 2.0 - n, 0.15);
}

TEST(MomentIntegral, TauScalingHolderExponent) {
  const int n = 3;
  const double beta = 0.5;  // p = 6, n = 3
  EXPECT_NEAR(tau_exponent(2.0 - 2.0 * n + beta), 2.0 - n + beta, 0.15);
}

// With s = 4 - 2n = -2 the integral converges as tau -> 0 in three dimensions,
// so the measured slope tends to 0 rather than 4 - n.
TEST(MomentIntegral, TauScalingSecondOrderExponent) {
  const int n = 3;
  EXPECT_NEAR(tau_exponent(4.0 - 2.0 * n), 4.0 - n, 0.15);
}
