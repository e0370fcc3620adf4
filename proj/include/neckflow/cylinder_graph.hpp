#pragma once

#include <memory>
#include <vector>

#include "neckflow/radial_profile.hpp"
#include "neckflow/sphere_mesh.hpp"

namespace neckflow {

/// Neck region as a height field u over the standard cylinder S^2 x [a,b]
/// (n = 3: cross-sections are spheres). Heights are standard (dimensionless)
/// cylinder coordinates; the physical embedding height advances by the slice
/// mean radius per unit z, so a round cylinder of radius r0 occupies physical
/// length r0*(b-a). The embedded radius of vertex v at slice j is
/// scale + u(j, v).
struct CylinderGraph {
  int n = 3;
  double a = 0.0, b = 1.0;
  std::shared_ptr<const SphereMesh> mesh;
  std::vector<double> heights;   // standard z-samples, strictly increasing
  Eigen::MatrixXd u;             // heights x vertices, row-major rows per slice
  double scale = 1.0;            // reference radius r0 > 0

  // Ambient bookkeeping for necks extracted from a larger hypersurface:
  // ambient position = (ambient_unit * rho * omega, ambient_origin + ambient_unit * zeta).
  double ambient_unit = 1.0;
  double ambient_origin = 0.0;
  double zeta0 = 0.0;            // physical height (graph-local) of the first slice

  int height_count() const { return static_cast<int>(heights.size()); }
  int vertex_count() const { return mesh->vertex_count(); }

  void validate() const;

  /// Embedded radii of slice j (scale + u row).
  Eigen::VectorXd rho(int j) const;

  /// Mesh-normalized mean radius of slice j: sqrt(area_j / sigma_mesh).
  /// Exact (= scale + u) for rotationally symmetric slices, so that pure
  /// rescalings divide out of the conformal comparison.
  double slice_mean_radius(int j) const;
  std::vector<double> slice_mean_radii() const;

  /// Physical embedding heights zeta(z_j): zeta0 + trapezoid of mean radii.
  std::vector<double> physical_heights() const;

  /// Nearest height sample to a standard height z in [a,b].
  int nearest_height(double z) const;

  /// Uniformly rescale the whole graph by c (scale, u, heights, zeta0).
  CylinderGraph rescaled(double c) const;
};

/// Cross-section Sigma_z: embedded vertex positions (rows: sphere part in the
/// slice R^3, fourth coordinate the physical height), per-triangle first
/// fundamental form in the (p1-p0, p2-p0) edge basis, and total area.
struct CrossSection {
  double z = 0.0;
  Eigen::MatrixXd positions;        // V x 4
  std::vector<Mat2> induced_metric; // per face
  double area = 0.0;
};

/// Nearest-sample cross-section of the graph at standard height z.
CrossSection graph_cross_section(const CylinderGraph& graph, double z);

/// (area / sigma_{n-1})^{1/(n-1)}; n = 3: sqrt(area / 4 pi).
double mean_radius(const CrossSection& section, int n = 3);

/// Per-height conformal comparison of g^ = r^{-2}(z) g against the standard
/// product metric: sup deviation and discrete derivative norms up to order k.
struct ConformalDeviation {
  double z = 0.0;
  double deviation = 0.0;            // |g^ - g|_sup over the slice block, z block, cross terms
  std::vector<double> deriv_norms;   // max_j |D^j g^| proxies for j = 1..k
};
std::vector<ConformalDeviation> conformal_deviation(const CylinderGraph& graph, int k);

/// Shape operator data of the graph hypersurface at (vertex, slice): sorted
/// principal curvatures from the second-order jet of rho over the sphere and
/// physical height, derivative norms by sup finite differences of the
/// curvature fields along mesh edges and heights.
struct GraphWeingartenField {
  Eigen::MatrixXd lambda1, lambda2, lambda3;   // heights x vertices, ascending
  std::vector<Eigen::MatrixXd> grad_norms;     // per order l = 1..k
};
GraphWeingartenField graph_weingarten_field(const CylinderGraph& graph, int k);

WeingartenData graph_weingarten(const CylinderGraph& graph, int vertex, int slice, int k);

struct ExtractedGraph {
  CylinderGraph graph;
  double u_norm = 0.0;  // discrete C^{k+2}-type norm of u
};

/// Window [x_c - L r^, x_c + L r^] of the profile, rescaled so r^(center)=1,
/// as a rotationally symmetric cylinder graph (r^ = (n-1)/H at the center).
ExtractedGraph extract_graph(const RadialProfile& profile, int center, double L,
                             std::shared_ptr<const SphereMesh> mesh, int k = 2);

}  // namespace neckflow
