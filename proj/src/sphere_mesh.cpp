#include "neckflow/sphere_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "neckflow/errors.hpp"

namespace neckflow {

namespace {
constexpr double kPi = std::numbers::pi;
}

SphereMesh::SphereMesh(int subdivision_level) : level_(subdivision_level) {
  if (subdivision_level < 0) throw Error("subdivision level must be >= 0");
  build_icosahedron();
  for (int l = 0; l < subdivision_level; ++l) subdivide_once();
  finalize();
}

void SphereMesh::build_icosahedron() {
  vertices_.clear();
  faces_.clear();
  const double lat = std::atan(0.5);
  vertices_.push_back(Vec3(0, 0, 1));
  for (int k = 0; k < 5; ++k) {
    const double lon = 2.0 * kPi * k / 5.0;
    vertices_.push_back(Vec3(std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)));
  }
  for (int k = 0; k < 5; ++k) {
    const double lon = 2.0 * kPi * (k + 0.5) / 5.0;
    vertices_.push_back(Vec3(std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), -std::sin(lat)));
  }
  vertices_.push_back(Vec3(0, 0, -1));
  auto up = [](int k) { return 1 + (k % 5); };
  auto dn = [](int k) { return 6 + (k % 5); };
  for (int k = 0; k < 5; ++k) faces_.push_back({0, up(k), up(k + 1)});
  for (int k = 0; k < 5; ++k) faces_.push_back({up(k), dn(k), up(k + 1)});
  for (int k = 0; k < 5; ++k) faces_.push_back({up(k + 1), dn(k), dn(k + 1)});
  for (int k = 0; k < 5; ++k) faces_.push_back({11, dn(k + 1), dn(k)});
}

void SphereMesh::subdivide_once() {
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    Vec3 m = (vertices_[a] + vertices_[b]).normalized();
    int idx = static_cast<int>(vertices_.size());
    vertices_.push_back(m);
    midpoint.emplace(key, idx);
    return idx;
  };
  std::vector<std::array<int, 3>> next;
  next.reserve(faces_.size() * 4);
  for (const auto& f : faces_) {
    int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
    next.push_back({f[0], ab, ca});
    next.push_back({f[1], bc, ab});
    next.push_back({f[2], ca, bc});
    next.push_back({ab, bc, ca});
  }
  faces_ = std::move(next);
}

void SphereMesh::finalize() {
  const int nv = vertex_count();
  std::vector<std::set<int>> ring(nv);
  vertex_faces_.assign(nv, {});
  for (int fi = 0; fi < face_count(); ++fi) {
    const auto& f = faces_[fi];
    for (int c = 0; c < 3; ++c) {
      ring[f[c]].insert(f[(c + 1) % 3]);
      ring[f[c]].insert(f[(c + 2) % 3]);
      vertex_faces_[f[c]].push_back(fi);
    }
  }
  one_ring_.resize(nv);
  for (int v = 0; v < nv; ++v) one_ring_[v].assign(ring[v].begin(), ring[v].end());

  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (int fi = 0; fi < face_count(); ++fi) {
    const auto& f = faces_[fi];
    for (int c = 0; c < 3; ++c)
      edge_faces[std::minmax(f[c], f[(c + 1) % 3])].push_back(fi);
  }
  face_neighbors_.assign(face_count(), {});
  for (const auto& [e, fs] : edge_faces)
    if (fs.size() == 2) {
      face_neighbors_[fs[0]].push_back(fs[1]);
      face_neighbors_[fs[1]].push_back(fs[0]);
    }
  face_centroids_.resize(face_count());
  for (int fi = 0; fi < face_count(); ++fi) {
    const auto& f = faces_[fi];
    face_centroids_[fi] = (vertices_[f[0]] + vertices_[f[1]] + vertices_[f[2]]).normalized();
  }

  Eigen::MatrixXd pos(nv, 3);
  for (int v = 0; v < nv; ++v) pos.row(v) = vertices_[v].transpose();
  reference_area_ = mesh_area(*this, pos);
  reference_masses_ = mesh_vertex_masses(*this, pos);
  reference_stiffness_ = mesh_cotan_stiffness(*this, pos);

  // Two-ring exponential-map least-squares jet operators.
  jet_stencil_.resize(nv);
  jet_op_.resize(nv);
  for (int v = 0; v < nv; ++v) {
    std::set<int> st(one_ring_[v].begin(), one_ring_[v].end());
    for (int w : one_ring_[v]) st.insert(one_ring_[w].begin(), one_ring_[w].end());
    st.erase(v);
    jet_stencil_[v].assign(st.begin(), st.end());
    const auto basis = tangent_basis(v);
    const int ns = static_cast<int>(jet_stencil_[v].size());
    Eigen::MatrixXd A(ns, 5);
    for (int i = 0; i < ns; ++i) {
      const Vec3& w = vertices_[jet_stencil_[v][i]];
      // Exponential-map coordinates of w around v.
      Vec3 perp = w - w.dot(vertices_[v]) * vertices_[v];
      const double sn = perp.norm();
      const double theta = std::atan2(sn, w.dot(vertices_[v]));
      Vec2 xi = Vec2::Zero();
      if (sn > 1e-15) xi = theta * (basis.transpose() * (perp / sn));
      A(i, 0) = xi.x();
      A(i, 1) = xi.y();
      A(i, 2) = 0.5 * xi.x() * xi.x();
      A(i, 3) = xi.x() * xi.y();
      A(i, 4) = 0.5 * xi.y() * xi.y();
    }
    jet_op_[v] = (A.transpose() * A).ldlt().solve(A.transpose());
  }
}

Eigen::Matrix<double, 3, 2> SphereMesh::tangent_basis(int v) const {
  const Vec3& n = vertices_[v];
  Vec3 seed = std::abs(n.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
  Vec3 t1 = (seed - seed.dot(n) * n).normalized();
  Vec3 t2 = n.cross(t1);
  Eigen::Matrix<double, 3, 2> B;
  B.col(0) = t1;
  B.col(1) = t2;
  return B;
}

void SphereMesh::jet(const Eigen::VectorXd& field, int v, Vec2& grad, Mat2& hess) const {
  const auto& st = jet_stencil_[v];
  Eigen::VectorXd rhs(st.size());
  for (size_t i = 0; i < st.size(); ++i) rhs[i] = field[st[i]] - field[v];
  Eigen::Matrix<double, 5, 1> c = jet_op_[v] * rhs;
  grad = Vec2(c[0], c[1]);
  hess << c[2], c[3], c[3], c[4];
}

int SphereMesh::nearest_vertex(const Vec3& d) const {
  int best = 0;
  double best_dot = -2.0;
  for (int v = 0; v < vertex_count(); ++v) {
    const double dot = vertices_[v].dot(d);
    if (dot > best_dot) {
      best_dot = dot;
      best = v;
    }
  }
  return best;
}

SphereMesh::BaryPoint SphereMesh::locate(const Vec3& d) const {
  auto try_face = [&](int fi, BaryPoint& out, double tol) {
    const auto& f = faces_[fi];
    Mat3 M;
    M.col(0) = vertices_[f[0]];
    M.col(1) = vertices_[f[1]];
    M.col(2) = vertices_[f[2]];
    Vec3 w = M.fullPivLu().solve(d);
    if (w.minCoeff() >= -tol) {
      const double s = w.sum();
      out.face = fi;
      out.w = {w[0] / s, w[1] / s, w[2] / s};
      return true;
    }
    return false;
  };
  BaryPoint out;
  const int nv0 = nearest_vertex(d);
  std::set<int> cand(vertex_faces_[nv0].begin(), vertex_faces_[nv0].end());
  for (int w : one_ring_[nv0])
    cand.insert(vertex_faces_[w].begin(), vertex_faces_[w].end());
  for (int fi : cand)
    if (try_face(fi, out, 1e-12)) return out;
  for (int fi : cand)
    if (try_face(fi, out, 1e-9)) return out;
  for (int fi = 0; fi < face_count(); ++fi)
    if (try_face(fi, out, 1e-9)) return out;
  throw Error("SphereMesh::locate failed to find containing face");
}

SphereMesh::BaryPoint SphereMesh::locate_walk(const Vec3& d, int hint_face) const {
  if (hint_face < 0 || hint_face >= face_count()) return locate(d);
  int cur = hint_face;
  for (int iter = 0; iter < 64; ++iter) {
    const auto& f = faces_[cur];
    Mat3 M;
    M.col(0) = vertices_[f[0]];
    M.col(1) = vertices_[f[1]];
    M.col(2) = vertices_[f[2]];
    Vec3 w = M.partialPivLu().solve(d);
    int worst = 0;
    for (int c = 1; c < 3; ++c)
      if (w[c] < w[worst]) worst = c;
    if (w[worst] >= -1e-12) {
      const double s = w.sum();
      return {cur, {w[0] / s, w[1] / s, w[2] / s}};
    }
    // Step across the edge opposite the most violated corner.
    const int va = f[(worst + 1) % 3], vb = f[(worst + 2) % 3];
    int next = -1;
    for (int g : face_neighbors_[cur]) {
      const auto& fg = faces_[g];
      int shared = 0;
      for (int c = 0; c < 3; ++c) shared += (fg[c] == va) + (fg[c] == vb);
      if (shared == 2) {
        next = g;
        break;
      }
    }
    if (next < 0) break;
    cur = next;
  }
  return locate(d);
}

double SphereMesh::interpolate(const Eigen::VectorXd& field, const Vec3& d) const {
  const BaryPoint bp = locate(d);
  const auto& f = faces_[bp.face];
  return bp.w[0] * field[f[0]] + bp.w[1] * field[f[1]] + bp.w[2] * field[f[2]];
}

double triangle_area(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
  Eigen::VectorXd u = b - a, v = c - a;
  const double g = u.squaredNorm() * v.squaredNorm() - std::pow(u.dot(v), 2);
  return 0.5 * std::sqrt(std::max(0.0, g));
}

double mesh_area(const SphereMesh& mesh, const Eigen::MatrixXd& positions) {
  double area = 0.0;
  for (const auto& f : mesh.faces())
    area += triangle_area(positions.row(f[0]), positions.row(f[1]), positions.row(f[2]));
  return area;
}

Eigen::VectorXd mesh_vertex_masses(const SphereMesh& mesh, const Eigen::MatrixXd& positions) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(mesh.vertex_count());
  for (const auto& f : mesh.faces()) {
    const double a = triangle_area(positions.row(f[0]), positions.row(f[1]), positions.row(f[2])) / 3.0;
    m[f[0]] += a;
    m[f[1]] += a;
    m[f[2]] += a;
  }
  return m;
}

Eigen::SparseMatrix<double> mesh_cotan_stiffness(const SphereMesh& mesh,
                                                 const Eigen::MatrixXd& positions) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.face_count() * 12);
  auto cot_at = [&](int apex, int i, int j) {
    Eigen::VectorXd u = positions.row(i) - positions.row(apex);
    Eigen::VectorXd v = positions.row(j) - positions.row(apex);
    const double dot = u.dot(v);
    const double g = u.squaredNorm() * v.squaredNorm() - dot * dot;
    if (g <= 1e-300) throw DegenerateMetric("degenerate triangle in cotan stiffness");
    return dot / std::sqrt(g);
  };
  for (const auto& f : mesh.faces()) {
    for (int c = 0; c < 3; ++c) {
      const int apex = f[c], i = f[(c + 1) % 3], j = f[(c + 2) % 3];
      const double w = 0.5 * cot_at(apex, i, j);
      trip.emplace_back(i, j, -w);
      trip.emplace_back(j, i, -w);
      trip.emplace_back(i, i, w);
      trip.emplace_back(j, j, w);
    }
  }
  Eigen::SparseMatrix<double> L(mesh.vertex_count(), mesh.vertex_count());
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

Eigen::MatrixXd mesh_mean_curvature_vector(const SphereMesh& mesh,
                                           const Eigen::MatrixXd& positions) {
  const auto L = mesh_cotan_stiffness(mesh, positions);
  const Eigen::VectorXd m = mesh_vertex_masses(mesh, positions);
  Eigen::MatrixXd H = -(L * positions);
  for (int v = 0; v < mesh.vertex_count(); ++v) H.row(v) /= m[v];
  return H;
}

}  // namespace neckflow
