#pragma once

#include <optional>
#include <vector>

#include "neckflow/cylinder_graph.hpp"

namespace neckflow {

/// Interpolating view of a cylinder graph: radius and physical height as
/// smooth functions of (direction, standard height). Cubic Hermite across
/// heights with centered slopes; the physical height uses the slice mean
/// radii as exact derivative data.
class GraphChart {
 public:
  explicit GraphChart(const CylinderGraph& graph);

  const CylinderGraph& graph() const { return *graph_; }
  const SphereMesh& mesh() const { return *graph_->mesh; }

  double rho_vertex(int v, double z) const;          // radius at mesh vertex v
  double drho_dz_vertex(int v, double z) const;
  double rho_dir(const Vec3& d, double z, int* face_hint = nullptr) const;
  double zeta(double z) const;                       // physical height
  double dzeta_dz(double z) const;                   // slice mean radius

  /// Embedded point of the chart at (direction, standard height).
  Vec4 point(const Vec3& d, double z, int* face_hint = nullptr) const;
  Vec4 point_vertex(int v, double z) const;
  /// Chart z-velocity at a mesh vertex: (drho/dz * omega, dzeta/dz).
  Vec4 z_velocity_vertex(int v, double z) const;

  double a() const { return graph_->a; }
  double b() const { return graph_->b; }
  const std::vector<double>& mean_radii() const { return mean_radii_; }

 private:
  const CylinderGraph* graph_;
  std::vector<double> mean_radii_;
  std::vector<double> zeta_;
  Eigen::MatrixXd slopes_;  // du/dz per (height, vertex), centered
};

/// One CMC leaf of the foliation: a graph over the standard sphere in the
/// neck chart, with its achieved constant mean curvature.
struct Leaf {
  double z = 0.0;                 // nominal standard height label
  Eigen::VectorXd chart_height;   // per-vertex standard height of the leaf
  Eigen::MatrixXd positions;      // V x 4 embedded leaf points
  double H_mean = 0.0;
  double H_spread = 0.0;
  double area = 0.0;
  double mean_radius = 0.0;       // sqrt(area / sigma_mesh)
};

struct NormalTolerances {
  double cmc = 1e-8;
  double harmonic = 1e-8;
  double com = 1e-8;
  double volume = 1e-8;   // relative
  double killing = 1e-8;
};

struct NormalityCertificate {
  double residual_cmc = 0.0;
  double residual_harmonic = 0.0;
  double residual_com = 0.0;
  double residual_volume = 0.0;
  double residual_killing = 0.0;
  NormalTolerances tolerances;
  bool pass = false;
};

/// Normal parametrization of a neck: CMC foliation, per-leaf harmonic sphere
/// maps with centre-of-mass normalization, volume-calibrated heights, and
/// rotation alignment along the neck.
struct NormalNeck {
  CylinderGraph graph;
  std::vector<Leaf> foliation;              // ordered by z
  std::vector<Eigen::MatrixXd> maps;        // per-leaf V x 3 unit directions
  std::vector<double> z_coordinate;         // volume-calibrated labels per leaf
  std::vector<Mat3> rotation_log;           // rotation applied per leaf

  int leaf_count() const { return static_cast<int>(foliation.size()); }
  /// Effective map direction of domain vertex v on leaf j (rotation applied).
  Vec3 map_direction(int j, int v) const;
  /// Embedded image of domain vertex v on leaf j under the effective map.
  Vec4 map_point(const GraphChart& chart, int j, int v, int* hint = nullptr) const;
};

/// Mean curvature of the leaf inside the neck 3-manifold per vertex:
/// H_U = <cotan mean curvature vector in R^4, U>, U the in-manifold unit
/// normal of the leaf (normalized rejection of the chart z-velocity).
Eigen::VectorXd leaf_mean_curvature(const GraphChart& chart, const Leaf& leaf);

/// Newton-iterate each height slice to a constant-mean-curvature leaf
/// (normal perturbation solved with the cotan Laplacian; the CMC value is
/// the updated mean). Leaves keep their area-weighted mean height pinned.
std::vector<Leaf> cmc_foliate(const GraphChart& chart, double tol, int max_newton = 30);

struct HarmonicOptions {
  double tol = 1e-8;
  int max_outer = 400;
  double step = 0.5;  // implicit gradient step size eta
};

struct HarmonicResult {
  Eigen::MatrixXd directions;  // V x 3 unit directions into the leaf chart
  double energy = 0.0;
  double grad_norm = 0.0;
  double com_norm = 0.0;
  int iterations = 0;
};

/// Minimize the Dirichlet energy of maps (S^2, standard) -> (leaf, induced)
/// by projected gradient descent with the domain cotan weights, then apply
/// the conformal centre-of-mass normalization.
HarmonicResult harmonic_reparametrize(const GraphChart& chart, const Leaf& leaf,
                                      const Eigen::MatrixXd& init,
                                      const HarmonicOptions& opts = {});

/// Volume-calibrated leaf labels: the discrete volume between leaves v,w
/// equals sigma_mesh * integral of r(z)^n dz under the new labels.
std::vector<double> volume_coordinate(const GraphChart& chart, const std::vector<Leaf>& leaves);

struct KillingDefect {
  Vec3 defect = Vec3::Zero();  // one component per rotation generator
};

/// Killing-orthogonality defect of the transition leaf (j-1) -> j under the
/// current rotations.
Vec3 killing_defect(const GraphChart& chart, const NormalNeck& neck, int j);

/// Choose a rotation per leaf, integrated from the left end (R(a) = I), so
/// the chart z-velocity decomposition of the leaf normal is orthogonal to
/// all rotational Killing fields in the mean.
void align_rotations(const GraphChart& chart, NormalNeck& neck, double tol);

/// Evaluate all five normality residuals from the stored data, independent
/// of how the neck was built.
NormalityCertificate certify_normal(const NormalNeck& neck, const NormalTolerances& tol = {});

struct BuildOptions {
  NormalTolerances tolerances;
  double cmc_tol = 1e-10;
  HarmonicOptions harmonic;
  std::optional<unsigned> random_init_seed;  // random rotation init per leaf
};

/// Full construction pipeline: foliate, harmonic-reparametrize every leaf,
/// volume-calibrate, align rotations, certify.
std::pair<NormalNeck, NormalityCertificate> build_normal_neck(const CylinderGraph& graph,
                                                              const BuildOptions& opts = {});

}  // namespace neckflow
