#include "neckflow/normal_neck.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <random>

#include "neckflow/errors.hpp"

namespace neckflow {

namespace {

// Cubic Hermite on a strictly increasing grid with linear extrapolation.
struct Hermite {
  const std::vector<double>* z = nullptr;

  int interval(double t) const {
    const auto& zs = *z;
    if (t <= zs.front()) return 0;
    if (t >= zs.back()) return static_cast<int>(zs.size()) - 2;
    int lo = 0, hi = static_cast<int>(zs.size()) - 1;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      (zs[mid] <= t ? lo : hi) = mid;
    }
    return lo;
  }

  template <class Val, class Slope>
  double eval(double t, Val val, Slope slope) const {
    const auto& zs = *z;
    if (t < zs.front()) return val(0) + (t - zs.front()) * slope(0);
    const int last = static_cast<int>(zs.size()) - 1;
    if (t > zs.back()) return val(last) + (t - zs.back()) * slope(last);
    const int j = interval(t);
    const double dz = zs[j + 1] - zs[j];
    const double s = (t - zs[j]) / dz;
    const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    const double h10 = s * (1.0 - s) * (1.0 - s);
    const double h01 = s * s * (3.0 - 2.0 * s);
    const double h11 = s * s * (s - 1.0);
    return h00 * val(j) + h10 * dz * slope(j) + h01 * val(j + 1) + h11 * dz * slope(j + 1);
  }

  template <class Val, class Slope>
  double eval_deriv(double t, Val val, Slope slope) const {
    const auto& zs = *z;
    if (t < zs.front()) return slope(0);
    const int last = static_cast<int>(zs.size()) - 1;
    if (t > zs.back()) return slope(last);
    const int j = interval(t);
    const double dz = zs[j + 1] - zs[j];
    const double s = (t - zs[j]) / dz;
    const double d00 = 6.0 * s * (s - 1.0);
    const double d10 = (1.0 - s) * (1.0 - 3.0 * s);
    const double d01 = -6.0 * s * (s - 1.0);
    const double d11 = s * (3.0 * s - 2.0);
    return d00 * val(j) / dz + d10 * slope(j) + d01 * val(j + 1) / dz + d11 * slope(j + 1);
  }
};

// Orthonormal tangent pairs of an embedded mesh in R^4 from one-ring SVD.
std::vector<Eigen::Matrix<double, 4, 2>> vertex_tangent_planes(const SphereMesh& mesh,
                                                               const Eigen::MatrixXd& X) {
  const int V = mesh.vertex_count();
  std::vector<Eigen::Matrix<double, 4, 2>> T(V);
  for (int v = 0; v < V; ++v) {
    const auto& ring = mesh.one_ring()[v];
    Eigen::MatrixXd D(static_cast<int>(ring.size()), 4);
    for (size_t i = 0; i < ring.size(); ++i) D.row(static_cast<int>(i)) = X.row(ring[i]) - X.row(v);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeThinV);
    T[v] = svd.matrixV().leftCols(2);
  }
  return T;
}

Mat3 rotation_exp(const Vec3& w) {
  const double t = w.norm();
  if (t < 1e-14) return Mat3::Identity() + (Mat3() << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0).finished();
  Mat3 K;
  K << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  K /= t;
  return Mat3::Identity() + std::sin(t) * K + (1.0 - std::cos(t)) * K * K;
}

// Inversive conformal transformation of S^2 moving mass toward +a.
Vec3 mobius(const Vec3& omega, const Vec3& a) {
  const Vec3 w = omega + a;
  return (((1.0 - a.squaredNorm()) / w.squaredNorm()) * w + a).normalized();
}

}  // namespace

GraphChart::GraphChart(const CylinderGraph& graph) : graph_(&graph) {
  graph.validate();
  mean_radii_ = graph.slice_mean_radii();
  zeta_ = graph.physical_heights();
  const int M = graph.height_count(), V = graph.vertex_count();
  slopes_.resize(M, V);
  for (int j = 0; j < M; ++j) {
    const int jm = std::max(0, j - 1), jp = std::min(M - 1, j + 1);
    const double dz = graph.heights[jp] - graph.heights[jm];
    slopes_.row(j) = (graph.u.row(jp) - graph.u.row(jm)) / dz;
  }
}

double GraphChart::rho_vertex(int v, double z) const {
  Hermite h{&graph_->heights};
  return graph_->scale +
         h.eval(z, [&](int j) { return graph_->u(j, v); }, [&](int j) { return slopes_(j, v); });
}

double GraphChart::drho_dz_vertex(int v, double z) const {
  Hermite h{&graph_->heights};
  return h.eval_deriv(z, [&](int j) { return graph_->u(j, v); },
                      [&](int j) { return slopes_(j, v); });
}

double GraphChart::rho_dir(const Vec3& d, double z, int* face_hint) const {
  const auto& mesh = *graph_->mesh;
  SphereMesh::BaryPoint bp =
      face_hint ? mesh.locate_walk(d, *face_hint) : mesh.locate(d);
  if (face_hint) *face_hint = bp.face;
  const auto& f = mesh.faces()[bp.face];
  Hermite h{&graph_->heights};
  auto val = [&](int j) {
    return bp.w[0] * graph_->u(j, f[0]) + bp.w[1] * graph_->u(j, f[1]) +
           bp.w[2] * graph_->u(j, f[2]);
  };
  auto slope = [&](int j) {
    return bp.w[0] * slopes_(j, f[0]) + bp.w[1] * slopes_(j, f[1]) + bp.w[2] * slopes_(j, f[2]);
  };
  return graph_->scale + h.eval(z, val, slope);
}

double GraphChart::zeta(double z) const {
  Hermite h{&graph_->heights};
  return h.eval(z, [&](int j) { return zeta_[j]; }, [&](int j) { return mean_radii_[j]; });
}

double GraphChart::dzeta_dz(double z) const {
  Hermite h{&graph_->heights};
  return h.eval_deriv(z, [&](int j) { return zeta_[j]; }, [&](int j) { return mean_radii_[j]; });
}

Vec4 GraphChart::point(const Vec3& d, double z, int* face_hint) const {
  const double r = rho_dir(d, z, face_hint);
  const double ez = zeta(z);
  return Vec4(r * d.x(), r * d.y(), r * d.z(), ez);
}

Vec4 GraphChart::point_vertex(int v, double z) const {
  const double r = rho_vertex(v, z);
  const Vec3& d = graph_->mesh->vertices()[v];
  return Vec4(r * d.x(), r * d.y(), r * d.z(), zeta(z));
}

Vec4 GraphChart::z_velocity_vertex(int v, double z) const {
  const double rz = drho_dz_vertex(v, z);
  const Vec3& d = graph_->mesh->vertices()[v];
  return Vec4(rz * d.x(), rz * d.y(), rz * d.z(), dzeta_dz(z));
}

Vec3 NormalNeck::map_direction(int j, int v) const {
  Vec3 base = maps[j].row(v).transpose();
  return (rotation_log[j] * base).normalized();
}

Vec4 NormalNeck::map_point(const GraphChart& chart, int j, int v, int* hint) const {
  const Vec3 d = map_direction(j, v);
  const auto& mesh = *graph.mesh;
  // Leaf chart height at the mapped direction.
  SphereMesh::BaryPoint bp = hint ? mesh.locate_walk(d, *hint) : mesh.locate(d);
  if (hint) *hint = bp.face;
  const auto& f = mesh.faces()[bp.face];
  const auto& ch = foliation[j].chart_height;
  const double z = bp.w[0] * ch[f[0]] + bp.w[1] * ch[f[1]] + bp.w[2] * ch[f[2]];
  int local_hint = bp.face;
  return chart.point(d, z, &local_hint);
}

Eigen::VectorXd leaf_mean_curvature(const GraphChart& chart, const Leaf& leaf) {
  const auto& mesh = chart.mesh();
  const int V = mesh.vertex_count();
  const Eigen::MatrixXd Hvec = mesh_mean_curvature_vector(mesh, leaf.positions);
  const auto tangents = vertex_tangent_planes(mesh, leaf.positions);
  Eigen::VectorXd out(V);
  for (int v = 0; v < V; ++v) {
    Vec4 ez = chart.z_velocity_vertex(v, leaf.chart_height[v]);
    Vec4 u = ez - tangents[v] * (tangents[v].transpose() * ez);
    const double nrm = u.norm();
    if (nrm < 1e-12) throw DegenerateLeaf("leaf normal degenerate");
    u /= nrm;
    out[v] = Hvec.row(v).dot(u);
  }
  return out;
}

namespace {

Leaf make_leaf(const GraphChart& chart, double z_label, const Eigen::VectorXd& chart_height) {
  const auto& mesh = chart.mesh();
  const int V = mesh.vertex_count();
  Leaf leaf;
  leaf.z = z_label;
  leaf.chart_height = chart_height;
  leaf.positions.resize(V, 4);
  for (int v = 0; v < V; ++v)
    leaf.positions.row(v) = chart.point_vertex(v, chart_height[v]).transpose();
  leaf.area = mesh_area(mesh, leaf.positions);
  leaf.mean_radius = std::sqrt(leaf.area / mesh.reference_area());
  const Eigen::VectorXd h = leaf_mean_curvature(chart, leaf);
  const Eigen::VectorXd masses = mesh_vertex_masses(mesh, leaf.positions);
  leaf.H_mean = masses.dot(h) / masses.sum();
  leaf.H_spread = h.maxCoeff() - h.minCoeff();
  return leaf;
}

}  // namespace

std::vector<Leaf> cmc_foliate(const GraphChart& chart, double tol, int max_newton) {
  const auto& graph = chart.graph();
  const auto& mesh = chart.mesh();
  const int M = graph.height_count(), V = graph.vertex_count();

  std::vector<Leaf> leaves;
  leaves.reserve(M);
  for (int j = 0; j < M; ++j) {
    const double zj = graph.heights[j];
    Eigen::VectorXd height = Eigen::VectorXd::Constant(V, zj);
    Leaf leaf = make_leaf(chart, zj, height);
    const double dz_phys =
        chart.dzeta_dz(zj) * ((j + 1 < M ? graph.heights[j + 1] : graph.heights[j]) -
                              (j > 0 ? graph.heights[j - 1] : graph.heights[j])) *
        0.5;

    for (int it = 0; it < max_newton && leaf.H_spread > tol; ++it) {
      const Eigen::VectorXd h = leaf_mean_curvature(chart, leaf);
      const Eigen::VectorXd masses = mesh_vertex_masses(mesh, leaf.positions);
      const double mean = masses.dot(h) / masses.sum();
      Eigen::VectorXd rhs = masses.asDiagonal() * (h - Eigen::VectorXd::Constant(V, mean));
      rhs.array() -= rhs.mean();

      Eigen::SparseMatrix<double> L = mesh_cotan_stiffness(mesh, leaf.positions);
      // Small mass shift removes the constant kernel; the constant component
      // of the solution is projected away below.
      Eigen::SparseMatrix<double> A = L;
      Eigen::VectorXd diag_shift = 1e-10 * masses;
      for (int v = 0; v < V; ++v) A.coeffRef(v, v) += diag_shift[v];
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
      if (solver.info() != Eigen::Success)
        throw NewtonDivergence("cmc_foliate: Laplacian factorization failed");
      Eigen::VectorXd phi = solver.solve(rhs);
      phi.array() -= masses.dot(phi) / masses.sum();

      // Physical normal displacement -> chart height shift.
      Eigen::VectorXd dheight(V);
      for (int v = 0; v < V; ++v) {
        const double speed = chart.z_velocity_vertex(v, leaf.chart_height[v]).norm();
        dheight[v] = phi[v] / speed;
      }
      if (dheight.cwiseAbs().maxCoeff() > std::max(0.45 * std::abs(dz_phys), 1e-3 * (graph.b - graph.a)) * 4.0)
        throw NewtonDivergence("cmc_foliate: step exceeds trust region");

      Eigen::VectorXd new_height = leaf.chart_height + dheight;
      // Keep the leaf pinned at its nominal height (area-weighted mean).
      const double pin = masses.dot(new_height) / masses.sum() - zj;
      new_height.array() -= pin;
      Leaf cand = make_leaf(chart, zj, new_height);
      if (cand.H_spread > leaf.H_spread && it > 0) {
        // Dampen once; if still worse, report divergence.
        new_height = leaf.chart_height + 0.5 * dheight;
        new_height.array() -= masses.dot(new_height) / masses.sum() - zj;
        cand = make_leaf(chart, zj, new_height);
        if (cand.H_spread > leaf.H_spread)
          throw NewtonDivergence("cmc_foliate: residual not decreasing");
      }
      leaf = std::move(cand);
    }
    if (leaf.H_spread > tol) throw NewtonDivergence("cmc_foliate: spread above tolerance");
    leaves.push_back(std::move(leaf));
  }

  for (int j = 0; j + 1 < M; ++j) {
    const double gap = (leaves[j + 1].chart_height - leaves[j].chart_height).minCoeff();
    if (!(gap > 0.0)) throw FoliationCollision("adjacent CMC leaves cross");
  }
  return leaves;
}

namespace {

struct LeafView {
  const GraphChart* chart;
  const Leaf* leaf;

  // Point on the leaf at an arbitrary direction (chart height interpolated).
  Vec4 point(const Vec3& d, int* hint) const {
    const auto& mesh = chart->mesh();
    SphereMesh::BaryPoint bp = hint ? mesh.locate_walk(d, *hint) : mesh.locate(d);
    if (hint) *hint = bp.face;
    const auto& f = mesh.faces()[bp.face];
    const auto& ch = leaf->chart_height;
    const double z = bp.w[0] * ch[f[0]] + bp.w[1] * ch[f[1]] + bp.w[2] * ch[f[2]];
    int h2 = bp.face;
    return chart->point(d, z, &h2);
  }
};

double dirichlet_energy(const Eigen::SparseMatrix<double>& L, const Eigen::MatrixXd& X) {
  double e = 0.0;
  for (int c = 0; c < X.cols(); ++c) e += X.col(c).dot(L * X.col(c));
  return 0.5 * e;
}

// Pull-back mass centre of the map: image-area-weighted mean of the domain
// directions.
Vec3 pullback_center(const SphereMesh& mesh, const Eigen::MatrixXd& X) {
  Vec3 c = Vec3::Zero();
  double total = 0.0;
  for (const auto& f : mesh.faces()) {
    const double area = triangle_area(X.row(f[0]), X.row(f[1]), X.row(f[2]));
    const Vec3 centroid =
        (mesh.vertices()[f[0]] + mesh.vertices()[f[1]] + mesh.vertices()[f[2]]).normalized();
    c += area * centroid;
    total += area;
  }
  return c / total;
}

}  // namespace

HarmonicResult harmonic_reparametrize(const GraphChart& chart, const Leaf& leaf,
                                      const Eigen::MatrixXd& init,
                                      const HarmonicOptions& opts) {
  const auto& mesh = chart.mesh();
  const int V = mesh.vertex_count();
  if (init.rows() != V || init.cols() != 3)
    throw Error("harmonic_reparametrize: init must be V x 3 directions");
  if (!(leaf.area > 0.0)) throw DegenerateLeaf("harmonic_reparametrize: empty leaf");

  const Eigen::SparseMatrix<double>& L = mesh.reference_stiffness();
  const Eigen::VectorXd& masses = mesh.reference_masses();
  LeafView view{&chart, &leaf};

  Eigen::MatrixXd dirs = init;
  for (int v = 0; v < V; ++v) dirs.row(v).normalize();
  std::vector<int> hints(V, -1);
  auto positions_of = [&](const Eigen::MatrixXd& D) {
    Eigen::MatrixXd X(V, 4);
    for (int v = 0; v < V; ++v) X.row(v) = view.point(D.row(v).transpose(), &hints[v]).transpose();
    return X;
  };

  Eigen::MatrixXd X = positions_of(dirs);
  double energy = dirichlet_energy(L, X);

  // Implicit gradient steps of the Dirichlet flow: (M + eta L) X' = M X,
  // followed by projection back to the leaf.
  Eigen::SparseMatrix<double> Mmat(V, V);
  Mmat.setIdentity();
  for (int v = 0; v < V; ++v) Mmat.coeffRef(v, v) = masses[v];
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> implicit_solver(
      Eigen::SparseMatrix<double>(Mmat + opts.step * L));
  if (implicit_solver.info() != Eigen::Success)
    throw NonConvergence("harmonic_reparametrize: factorization failed");

  HarmonicResult result;
  double grad_norm = 1e300, com_norm = 1e300;
  int it = 0;
  for (; it < opts.max_outer; ++it) {
    // Convergence measures: tangential gradient and pull-back mass centre.
    Eigen::MatrixXd G = L * X;
    const auto tangents = vertex_tangent_planes(mesh, X);
    grad_norm = 0.0;
    for (int v = 0; v < V; ++v) {
      Eigen::Vector4d g = G.row(v).transpose() / masses[v];
      const Eigen::Vector2d tg = tangents[v].transpose() * g;
      grad_norm = std::max(grad_norm, tg.norm());
    }
    const Vec3 center = pullback_center(mesh, X);
    com_norm = center.norm();
    if (grad_norm <= opts.tol && com_norm <= opts.tol) break;

    if (grad_norm > opts.tol) {
      Eigen::MatrixXd Xs(V, 4);
      for (int c = 0; c < 4; ++c) Xs.col(c) = implicit_solver.solve(masses.asDiagonal() * X.col(c));
      double tau = 1.0;
      for (int bt = 0; bt < 30; ++bt) {
        Eigen::MatrixXd Dn(V, 3);
        for (int v = 0; v < V; ++v) {
          Eigen::Vector4d blended = (1.0 - tau) * X.row(v).transpose() + tau * Xs.row(v).transpose();
          Vec3 d = blended.head<3>();
          const double nn = d.norm();
          if (nn < 1e-14) throw NonConvergence("harmonic_reparametrize: direction collapsed");
          Dn.row(v) = (d / nn).transpose();
        }
        Eigen::MatrixXd Xn = positions_of(Dn);
        const double en = dirichlet_energy(L, Xn);
        if (en <= energy + 1e-14 * std::abs(energy)) {
          dirs = std::move(Dn);
          X = std::move(Xn);
          energy = en;
          break;
        }
        tau *= 0.5;
        if (bt == 29) throw NonConvergence("harmonic_reparametrize: no descent step");
      }
    } else {
      // Centre-of-mass normalization: conformal recentering of the domain
      // labels (damped; energy is conformally invariant in the continuum).
      double tau = 0.5;
      for (int bt = 0; bt < 20; ++bt) {
        const Vec3 a = -tau * center;
        Eigen::MatrixXd Dn(V, 3);
        for (int v = 0; v < V; ++v) {
          // Relabel: the new map at omega is the old map at mobius(omega, -a),
          // realized by moving the image directions with the flow itself.
          Dn.row(v) = mobius(dirs.row(v).transpose(), a).transpose();
        }
        Eigen::MatrixXd Xn = positions_of(Dn);
        if (pullback_center(mesh, Xn).norm() < com_norm) {
          dirs = std::move(Dn);
          X = std::move(Xn);
          energy = dirichlet_energy(L, X);
          break;
        }
        tau *= 0.5;
        if (bt == 19) throw NonConvergence("harmonic_reparametrize: recentering stalled");
      }
    }
  }
  if (grad_norm > opts.tol || com_norm > opts.tol)
    throw NonConvergence("harmonic_reparametrize: not converged");

  result.directions = std::move(dirs);
  result.energy = energy;
  result.grad_norm = grad_norm;
  result.com_norm = com_norm;
  result.iterations = it;
  return result;
}

std::vector<double> volume_coordinate(const GraphChart& chart, const std::vector<Leaf>& leaves) {
  const auto& mesh = chart.mesh();
  const int V = mesh.vertex_count();
  const int M = static_cast<int>(leaves.size());
  if (M < 2) throw Error("volume_coordinate: need at least two leaves");
  const Eigen::VectorXd& masses = mesh.reference_masses();
  const double sigma = mesh.reference_area();

  // Slice jets of rho at the stored graph heights give |grad rho| by Hermite
  // interpolation between slices.
  const auto& graph = chart.graph();
  const int Mg = graph.height_count();
  Eigen::MatrixXd gradsq(Mg, V);
  {
    Vec2 g;
    Mat2 h;
    for (int j = 0; j < Mg; ++j) {
      Eigen::VectorXd rho_j = graph.rho(j);
      for (int v = 0; v < V; ++v) {
        mesh.jet(rho_j, v, g, h);
        gradsq(j, v) = g.squaredNorm();
      }
    }
  }
  Hermite hz{&graph.heights};
  auto grad2_at = [&](int v, double z) {
    return std::max(0.0, hz.eval(z, [&](int j) { return gradsq(j, v); },
                                 [&](int j) {
                                   const int jm = std::max(0, j - 1), jp = std::min(Mg - 1, j + 1);
                                   return (gradsq(jp, v) - gradsq(jm, v)) /
                                          (graph.heights[jp] - graph.heights[jm]);
                                 }));
  };
  auto density = [&](int v, double z) {
    const double rho = chart.rho_vertex(v, z);
    const double rho_z = chart.drho_dz_vertex(v, z);
    const double rbar = chart.dzeta_dz(z);
    return rho * std::sqrt(rbar * rbar * (rho * rho + grad2_at(v, z)) + rho * rho * rho_z * rho_z);
  };

  std::vector<double> labels(M);
  labels[0] = leaves[0].z;
  for (int j = 0; j + 1 < M; ++j) {
    double vol = 0.0;
    for (int v = 0; v < V; ++v) {
      const double z0 = leaves[j].chart_height[v];
      const double z1 = leaves[j + 1].chart_height[v];
      vol += masses[v] * 0.5 * (density(v, z0) + density(v, z1)) * (z1 - z0);
    }
    const double r0 = leaves[j].mean_radius, r1 = leaves[j + 1].mean_radius;
    const double dz = vol / (sigma * 0.5 * (r0 * r0 * r0 + r1 * r1 * r1));
    if (!(dz > 0.0)) throw NonMonotoneRelabeling("volume_coordinate: nonpositive increment");
    labels[j + 1] = labels[j] + dz;
  }
  return labels;
}

Vec3 killing_defect(const GraphChart& chart, const NormalNeck& neck, int j) {
  if (j <= 0 || j >= neck.leaf_count()) throw Error("killing_defect: transition index");
  const auto& mesh = chart.mesh();
  const int V = mesh.vertex_count();
  const Eigen::VectorXd& masses = mesh.reference_masses();

  Eigen::MatrixXd P0(V, 4), P1(V, 4);
  {
    int hint0 = -1, hint1 = -1;
    for (int v = 0; v < V; ++v) {
      P0.row(v) = neck.map_point(chart, j - 1, v, &hint0).transpose();
      P1.row(v) = neck.map_point(chart, j, v, &hint1).transpose();
    }
  }
  const double dz = neck.z_coordinate.empty()
                        ? neck.foliation[j].z - neck.foliation[j - 1].z
                        : neck.z_coordinate[j] - neck.z_coordinate[j - 1];

  // Chart differentials of the leaf-j parametrization per vertex.
  const auto tangents = vertex_tangent_planes(mesh, P1);
  Vec3 defect = Vec3::Zero();
  Vec2 g;
  Mat2 h;
  for (int v = 0; v < V; ++v) {
    Eigen::Vector4d ez = (P1.row(v) - P0.row(v)).transpose() / dz;
    Eigen::Vector4d u = ez - tangents[v] * (tangents[v].transpose() * ez);
    const double nrm = u.norm();
    if (nrm < 1e-13) throw AlignmentSingularity("killing_defect: degenerate normal");
    u /= nrm;

    // dPhi in the domain tangent basis at v (jet of each component of P1).
    Eigen::Matrix<double, 4, 2> dphi;
    for (int c = 0; c < 4; ++c) {
      mesh.jet(P1.col(c), v, g, h);
      dphi(c, 0) = g.x();
      dphi(c, 1) = g.y();
    }
    // Least squares U = dphi * uw + uz * ez over (uw, uz).
    Eigen::Matrix<double, 4, 3> B;
    B.leftCols(2) = dphi;
    B.col(2) = ez;
    const Eigen::Vector3d coeff = B.colPivHouseholderQr().solve(u);
    const auto basis = mesh.tangent_basis(v);
    const Vec3 uw = basis * coeff.head<2>();

    const Vec3& omega = mesh.vertices()[v];
    for (int kk = 0; kk < 3; ++kk) {
      const Vec3 K = Vec3::Unit(kk).cross(omega);
      defect[kk] += masses[v] * K.dot(uw);
    }
  }
  return defect;
}

void align_rotations(const GraphChart& chart, NormalNeck& neck, double tol) {
  const int M = neck.leaf_count();
  if (static_cast<int>(neck.rotation_log.size()) != M)
    neck.rotation_log.assign(M, Mat3::Identity());

  for (int j = 1; j < M; ++j) {
    for (int newton = 0; newton < 12; ++newton) {
      const Vec3 d0 = killing_defect(chart, neck, j);
      if (d0.norm() <= tol) break;
      // 3x3 Jacobian of the defect w.r.t. an infinitesimal rotation of leaf j.
      Mat3 J;
      const double eps = 1e-6;
      const Mat3 saved = neck.rotation_log[j];
      for (int c = 0; c < 3; ++c) {
        neck.rotation_log[j] = rotation_exp(eps * Vec3::Unit(c)) * saved;
        const Vec3 dp = killing_defect(chart, neck, j);
        J.col(c) = (dp - d0) / eps;
        neck.rotation_log[j] = saved;
      }
      Eigen::FullPivLU<Mat3> lu(J);
      if (!lu.isInvertible() || lu.rcond() < 1e-12)
        throw AlignmentSingularity("align_rotations: defect system rank-deficient");
      const Vec3 theta = lu.solve(-d0);
      neck.rotation_log[j] = rotation_exp(theta) * saved;
      if (newton == 11 && killing_defect(chart, neck, j).norm() > tol)
        throw AlignmentSingularity("align_rotations: Newton failed to converge");
    }
  }
}

NormalityCertificate certify_normal(const NormalNeck& neck, const NormalTolerances& tol) {
  GraphChart chart(neck.graph);
  const auto& mesh = chart.mesh();
  const int M = neck.leaf_count(), V = mesh.vertex_count();
  NormalityCertificate cert;
  cert.tolerances = tol;

  // (i) constant mean curvature per leaf.
  for (const auto& leaf : neck.foliation) {
    const Eigen::VectorXd h = leaf_mean_curvature(chart, leaf);
    cert.residual_cmc = std::max(cert.residual_cmc, h.maxCoeff() - h.minCoeff());
  }

  // (ii) harmonicity of each leaf map and (iii) centre of mass.
  const Eigen::SparseMatrix<double>& L = mesh.reference_stiffness();
  const Eigen::VectorXd& masses = mesh.reference_masses();
  for (int j = 0; j < M; ++j) {
    Eigen::MatrixXd X(V, 4);
    int hint = -1;
    for (int v = 0; v < V; ++v) X.row(v) = neck.map_point(chart, j, v, &hint).transpose();
    Eigen::MatrixXd G = L * X;
    const auto tangents = vertex_tangent_planes(mesh, X);
    for (int v = 0; v < V; ++v) {
      Eigen::Vector4d g = G.row(v).transpose() / masses[v];
      cert.residual_harmonic =
          std::max(cert.residual_harmonic, (tangents[v].transpose() * g).norm());
    }
    cert.residual_com = std::max(cert.residual_com, pullback_center(mesh, X).norm());
  }

  // (iv) volume identity on every leaf sub-interval (relative).
  if (!neck.z_coordinate.empty() && M >= 2) {
    std::vector<Leaf> leaves = neck.foliation;
    const auto labels = neck.z_coordinate;
    const double sigma = mesh.reference_area();
    // Recompute slab volumes independently of the stored labels.
    std::vector<double> slab(M - 1);
    {
      auto labels_ref = volume_coordinate(chart, leaves);
      for (int j = 0; j + 1 < M; ++j) {
        const double r0 = leaves[j].mean_radius, r1 = leaves[j + 1].mean_radius;
        slab[j] = (labels_ref[j + 1] - labels_ref[j]) * sigma * 0.5 *
                  (r0 * r0 * r0 + r1 * r1 * r1);
      }
    }
    std::vector<double> cumvol(M, 0.0);
    for (int j = 1; j < M; ++j) cumvol[j] = cumvol[j - 1] + slab[j - 1];
    for (int vlo = 0; vlo < M; ++vlo) {
      for (int vhi = vlo + 1; vhi < M; ++vhi) {
        const double vol = cumvol[vhi] - cumvol[vlo];
        double integral = 0.0;
        for (int j = vlo; j < vhi; ++j) {
          const double r0 = leaves[j].mean_radius, r1 = leaves[j + 1].mean_radius;
          integral += sigma * 0.5 * (r0 * r0 * r0 + r1 * r1 * r1) * (labels[j + 1] - labels[j]);
        }
        cert.residual_volume =
            std::max(cert.residual_volume, std::abs(vol - integral) / std::max(vol, 1e-300));
      }
    }
  } else {
    cert.residual_volume = 1e300;  // labels missing: condition (iv) cannot hold
  }

  // (v) Killing orthogonality across leaf transitions.
  for (int j = 1; j < M; ++j)
    cert.residual_killing =
        std::max(cert.residual_killing, killing_defect(chart, neck, j).cwiseAbs().maxCoeff());

  cert.pass = cert.residual_cmc <= tol.cmc && cert.residual_harmonic <= tol.harmonic &&
              cert.residual_com <= tol.com && cert.residual_volume <= tol.volume &&
              cert.residual_killing <= tol.killing;
  return cert;
}

std::pair<NormalNeck, NormalityCertificate> build_normal_neck(const CylinderGraph& graph,
                                                              const BuildOptions& opts) {
  GraphChart chart(graph);
  NormalNeck neck;
  neck.graph = graph;
  neck.foliation = cmc_foliate(chart, opts.cmc_tol);
  const int M = static_cast<int>(neck.foliation.size());
  const int V = graph.vertex_count();

  std::mt19937_64 rng(opts.random_init_seed.value_or(0));
  auto random_rotation = [&]() {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    return q.toRotationMatrix();
  };

  neck.maps.resize(M);
  for (int j = 0; j < M; ++j) {
    Eigen::MatrixXd init(V, 3);
    const Mat3 R0 = opts.random_init_seed ? random_rotation() : Mat3::Identity();
    for (int v = 0; v < V; ++v)
      init.row(v) = (R0 * graph.mesh->vertices()[v]).transpose();
    neck.maps[j] = harmonic_reparametrize(chart, neck.foliation[j], init, opts.harmonic).directions;
  }
  neck.rotation_log.assign(M, Mat3::Identity());
  neck.z_coordinate = volume_coordinate(chart, neck.foliation);
  align_rotations(chart, neck, opts.tolerances.killing * 0.5);
  auto cert = certify_normal(neck, opts.tolerances);
  return {std::move(neck), std::move(cert)};
}

}  // namespace neckflow
