#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <vector>

namespace neckflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Triangulated unit sphere: subdivided icosahedron with shared vertices,
/// poles on the z-axis (the mesh is invariant under 72-degree rotations
/// about z, which the symmetry tests rely on).
///
/// All reference quantities (cotan weights, vertex masses, jet-fit
/// operators) are precomputed for the unit embedding and reused for every
/// cross-section; geometry-dependent quantities are recomputed from an
/// embedded position matrix via the free functions below.
class SphereMesh {
 public:
  explicit SphereMesh(int subdivision_level);

  int level() const { return level_; }
  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  int face_count() const { return static_cast<int>(faces_.size()); }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& faces() const { return faces_; }
  const std::vector<std::vector<int>>& one_ring(/*vertex-indexed*/) const { return one_ring_; }
  const std::vector<std::vector<int>>& vertex_faces() const { return vertex_faces_; }
  /// Up to three edge-adjacent faces per face.
  const std::vector<std::vector<int>>& face_neighbors() const { return face_neighbors_; }
  /// Unit-sphere centroid directions of the faces.
  const std::vector<Vec3>& face_centroids() const { return face_centroids_; }

  /// Total area of the flat-triangle reference mesh (slightly below 4*pi).
  double reference_area() const { return reference_area_; }
  /// Lumped (one-third triangle) vertex masses of the reference mesh.
  const Eigen::VectorXd& reference_masses() const { return reference_masses_; }
  /// Cotan stiffness matrix of the reference mesh (positive semidefinite).
  const Eigen::SparseMatrix<double>& reference_stiffness() const { return reference_stiffness_; }

  /// Orthonormal tangent basis at vertex v (columns t1,t2; normal = vertex dir).
  Eigen::Matrix<double, 3, 2> tangent_basis(int v) const;

  /// Two-ring stencil of v (excluding v) used by the jet fit.
  const std::vector<int>& jet_stencil(int v) const { return jet_stencil_[v]; }

  /// Gradient and Hessian of a scalar field on the sphere at vertex v, in the
  /// tangent basis of v (exponential-map least-squares fit over the two-ring).
  void jet(const Eigen::VectorXd& field, int v, Vec2& grad, Mat2& hess) const;

  /// Index of the mesh vertex nearest to direction d (unit vector).
  int nearest_vertex(const Vec3& d) const;

  /// Locate the face whose spherical triangle contains direction d and return
  /// barycentric weights w.r.t. its three vertices.
  struct BaryPoint {
    int face = -1;
    std::array<double, 3> w{};
  };
  BaryPoint locate(const Vec3& d) const;

  /// Walking locate starting from a hint face (falls back to the global
  /// search); cheap when queries move coherently.
  BaryPoint locate_walk(const Vec3& d, int hint_face) const;

  /// Interpolate a per-vertex scalar field at an arbitrary direction.
  double interpolate(const Eigen::VectorXd& field, const Vec3& d) const;

 private:
  void build_icosahedron();
  void subdivide_once();
  void finalize();

  int level_ = 0;
  std::vector<Vec3> vertices_;
  std::vector<std::array<int, 3>> faces_;
  std::vector<std::vector<int>> one_ring_;
  std::vector<std::vector<int>> vertex_faces_;
  std::vector<std::vector<int>> face_neighbors_;
  std::vector<Vec3> face_centroids_;
  std::vector<std::vector<int>> jet_stencil_;
  // Per-vertex pseudo-inverse mapping stencil value deltas to (g1,g2,h11,h12,h22).
  std::vector<Eigen::MatrixXd> jet_op_;
  double reference_area_ = 0.0;
  Eigen::VectorXd reference_masses_;
  Eigen::SparseMatrix<double> reference_stiffness_;
};

/// Area of the triangle (a,b,c) in any ambient dimension.
double triangle_area(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c);

/// Total flat-triangle area of an embedded mesh (positions: V x D).
double mesh_area(const SphereMesh& mesh, const Eigen::MatrixXd& positions);

/// Lumped vertex masses of an embedded mesh.
Eigen::VectorXd mesh_vertex_masses(const SphereMesh& mesh, const Eigen::MatrixXd& positions);

/// Cotan stiffness of an embedded mesh (any ambient dimension).
Eigen::SparseMatrix<double> mesh_cotan_stiffness(const SphereMesh& mesh,
                                                 const Eigen::MatrixXd& positions);

/// Discrete mean curvature vectors (V x D): rows are -M^{-1} L X, i.e. the
/// mean curvature vector with the sum convention (unit sphere: -2 * position).
Eigen::MatrixXd mesh_mean_curvature_vector(const SphereMesh& mesh,
                                           const Eigen::MatrixXd& positions);

}  // namespace neckflow
