#include "neckflow/cylinder_graph.hpp"

#include <algorithm>
#include <cmath>

#include "neckflow/errors.hpp"

namespace neckflow {

namespace {

Mat2 face_gram(const Eigen::MatrixXd& pos, const std::array<int, 3>& f) {
  Eigen::VectorXd e1 = pos.row(f[1]) - pos.row(f[0]);
  Eigen::VectorXd e2 = pos.row(f[2]) - pos.row(f[0]);
  Mat2 G;
  G << e1.squaredNorm(), e1.dot(e2), e1.dot(e2), e2.squaredNorm();
  return G;
}

Mat2 inv_sqrt(const Mat2& G) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(G);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw DegenerateMetric("degenerate triangle metric");
  Vec2 d = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

void CylinderGraph::validate() const {
  if (n != 3) throw Error("CylinderGraph: n is fixed at 3");
  if (!mesh) throw Error("CylinderGraph: missing sphere mesh");
  if (mesh->level() < 3) throw Error("CylinderGraph: subdivision level must be >= 3");
  if (!(a < b)) throw Error("CylinderGraph: need a < b");
  if (!(scale > 0.0)) throw NonPositiveRadius("CylinderGraph: scale <= 0");
  if (height_count() < 2) throw Error("CylinderGraph: need at least 2 heights");
  for (int j = 0; j + 1 < height_count(); ++j)
    if (!(heights[j] < heights[j + 1])) throw Error("CylinderGraph: heights not increasing");
  if (u.rows() != height_count() || u.cols() != vertex_count())
    throw Error("CylinderGraph: u shape mismatch");
  if (u.cwiseAbs().maxCoeff() >= 0.5 * scale)
    throw Error("CylinderGraph: |u| must stay below scale/2");
  // Closed orientable surface mesh: Euler characteristic 2.
  const int V = mesh->vertex_count(), F = mesh->face_count();
  if (2 * (V - 2) != F) throw Error("CylinderGraph: mesh Euler characteristic != 2");
}

Eigen::VectorXd CylinderGraph::rho(int j) const {
  return Eigen::VectorXd::Constant(vertex_count(), scale) + u.row(j).transpose();
}

double CylinderGraph::slice_mean_radius(int j) const {
  const Eigen::VectorXd r = rho(j);
  Eigen::MatrixXd pos(vertex_count(), 3);
  for (int v = 0; v < vertex_count(); ++v)
    pos.row(v) = (r[v] * mesh->vertices()[v]).transpose();
  return std::sqrt(mesh_area(*mesh, pos) / mesh->reference_area());
}

std::vector<double> CylinderGraph::slice_mean_radii() const {
  std::vector<double> out(height_count());
  for (int j = 0; j < height_count(); ++j) out[j] = slice_mean_radius(j);
  return out;
}

std::vector<double> CylinderGraph::physical_heights() const {
  const auto r = slice_mean_radii();
  std::vector<double> zeta(height_count());
  zeta[0] = zeta0;
  for (int j = 1; j < height_count(); ++j)
    zeta[j] = zeta[j - 1] + 0.5 * (r[j] + r[j - 1]) * (heights[j] - heights[j - 1]);
  return zeta;
}

int CylinderGraph::nearest_height(double z) const {
  double tol = 0.0;
  for (int j = 0; j + 1 < height_count(); ++j)
    tol = std::max(tol, heights[j + 1] - heights[j]);
  if (z < a - 0.5 * tol - 1e-12 || z > b + 0.5 * tol + 1e-12)
    throw HeightOutOfRange("height outside [a,b]");
  int best = 0;
  for (int j = 1; j < height_count(); ++j)
    if (std::abs(heights[j] - z) < std::abs(heights[best] - z)) best = j;
  return best;
}

CylinderGraph CylinderGraph::rescaled(double c) const {
  if (!(c > 0.0)) throw Error("rescale factor must be positive");
  CylinderGraph out = *this;
  out.scale *= c;
  out.u *= c;
  out.zeta0 *= c;
  out.ambient_unit *= c;  // keeps ambient positions consistent with the rescale
  out.ambient_origin *= c;
  return out;
}

CrossSection graph_cross_section(const CylinderGraph& graph, double z) {
  const int j = graph.nearest_height(z);
  const auto zeta = graph.physical_heights();
  const Eigen::VectorXd r = graph.rho(j);
  CrossSection cs;
  cs.z = graph.heights[j];
  cs.positions.resize(graph.vertex_count(), 4);
  for (int v = 0; v < graph.vertex_count(); ++v) {
    const Vec3 p = r[v] * graph.mesh->vertices()[v];
    cs.positions.row(v) << p.x(), p.y(), p.z(), zeta[j];
  }
  const Eigen::MatrixXd slice = cs.positions.leftCols(3);
  cs.induced_metric.reserve(graph.mesh->face_count());
  cs.area = 0.0;
  for (const auto& f : graph.mesh->faces()) {
    Mat2 G = face_gram(slice, f);
    const double det = G.determinant();
    if (det <= 0.0) throw DegenerateMetric("degenerate cross-section triangle");
    cs.induced_metric.push_back(G);
    cs.area += 0.5 * std::sqrt(det);
  }
  return cs;
}

double mean_radius(const CrossSection& section, int n) {
  if (!(section.area > 0.0)) throw Error("mean_radius: nonpositive area");
  return std::pow(section.area / sphere_volume_constant(n), 1.0 / (n - 1));
}

std::vector<ConformalDeviation> conformal_deviation(const CylinderGraph& graph, int k) {
  graph.validate();
  const auto& mesh = *graph.mesh;
  const int M = graph.height_count(), V = graph.vertex_count(), F = mesh.face_count();
  const auto r = graph.slice_mean_radii();
  const auto zeta = graph.physical_heights();

  // Reference (unit mesh) triangle Grams and their inverse square roots.
  Eigen::MatrixXd unit_pos(V, 3);
  for (int v = 0; v < V; ++v) unit_pos.row(v) = mesh.vertices()[v].transpose();
  std::vector<Mat2> ref_isqrt(F);
  for (int fi = 0; fi < F; ++fi) ref_isqrt[fi] = inv_sqrt(face_gram(unit_pos, mesh.faces()[fi]));

  // Per-slice embedded positions.
  std::vector<Eigen::MatrixXd> slice_pos(M);
  for (int j = 0; j < M; ++j) {
    const Eigen::VectorXd rho = graph.rho(j);
    slice_pos[j].resize(V, 3);
    for (int v = 0; v < V; ++v) slice_pos[j].row(v) = (rho[v] * mesh.vertices()[v]).transpose();
  }

  // Deviation component fields: per face the normalized metric deviation
  // |G~^{-1/2} (G/r^2) G~^{-1/2} - I|, per vertex the z-block and cross-term
  // deviations of the conformal metric against the standard product metric.
  Eigen::MatrixXd face_dev(M, F);
  for (int j = 0; j < M; ++j) {
    for (int fi = 0; fi < F; ++fi) {
      Mat2 Ghat = face_gram(slice_pos[j], mesh.faces()[fi]) / (r[j] * r[j]);
      Mat2 D = ref_isqrt[fi] * Ghat * ref_isqrt[fi] - Mat2::Identity();
      Eigen::SelfAdjointEigenSolver<Mat2> es(D);
      face_dev(j, fi) = es.eigenvalues().cwiseAbs().maxCoeff();
    }
  }
  Eigen::MatrixXd zz_dev = Eigen::MatrixXd::Zero(M, V);
  Eigen::MatrixXd cross_dev = Eigen::MatrixXd::Zero(M, V);
  for (int j = 0; j < M; ++j) {
    const int jm = std::max(0, j - 1), jp = std::min(M - 1, j + 1);
    const double dz = graph.heights[jp] - graph.heights[jm];
    const double dzeta = zeta[jp] - zeta[jm];
    const double rj = r[j];
    Eigen::VectorXd rho_j = graph.rho(j);
    Eigen::VectorXd drho = (graph.u.row(jp) - graph.u.row(jm)).transpose();
    for (int v = 0; v < V; ++v) {
      const double rho_z = drho[v] / dz;
      const double zeta_z = dzeta / dz;
      // g^_zz = (rho_z^2 + zeta_z^2) / r^2 against the standard value 1.
      zz_dev(j, v) = std::abs((rho_z * rho_z + zeta_z * zeta_z) / (rj * rj) - 1.0);
    }
    // Cross term: |grad_S2 rho| * |rho_z| / r^2 per vertex.
    Vec2 g;
    Mat2 h;
    for (int v = 0; v < V; ++v) {
      mesh.jet(rho_j, v, g, h);
      cross_dev(j, v) = g.norm() * std::abs(drho[v] / dz) / (rj * rj);
    }
  }

  std::vector<ConformalDeviation> out(M);
  for (int j = 0; j < M; ++j) {
    out[j].z = graph.heights[j];
    out[j].deviation = std::max({face_dev.row(j).maxCoeff(), zz_dev.row(j).maxCoeff(),
                                 cross_dev.row(j).maxCoeff()});
  }

  // Derivative norm proxies: iterated sup difference quotients of the
  // deviation component fields across face adjacency and heights (standard
  // distances: unit-sphere centroid gaps and dz).
  Eigen::MatrixXd field = face_dev;
  Eigen::MatrixXd vfield = zz_dev + cross_dev;
  for (int l = 1; l <= k; ++l) {
    Eigen::MatrixXd nf = Eigen::MatrixXd::Zero(M, F);
    for (int j = 0; j < M; ++j) {
      for (int fi = 0; fi < F; ++fi) {
        double best = 0.0;
        for (int gj : mesh.face_neighbors()[fi]) {
          const double ds = (mesh.face_centroids()[fi] - mesh.face_centroids()[gj]).norm();
          best = std::max(best, std::abs(field(j, fi) - field(j, gj)) / ds);
        }
        if (j > 0)
          best = std::max(best, std::abs(field(j, fi) - field(j - 1, fi)) /
                                    (graph.heights[j] - graph.heights[j - 1]));
        if (j + 1 < M)
          best = std::max(best, std::abs(field(j + 1, fi) - field(j, fi)) /
                                    (graph.heights[j + 1] - graph.heights[j]));
        nf(j, fi) = best;
      }
    }
    Eigen::MatrixXd nv = Eigen::MatrixXd::Zero(M, V);
    for (int j = 0; j < M; ++j) {
      for (int v = 0; v < V; ++v) {
        double best = 0.0;
        for (int w : mesh.one_ring()[v]) {
          const double ds = (mesh.vertices()[v] - mesh.vertices()[w]).norm();
          best = std::max(best, std::abs(vfield(j, v) - vfield(j, w)) / ds);
        }
        if (j > 0)
          best = std::max(best, std::abs(vfield(j, v) - vfield(j - 1, v)) /
                                    (graph.heights[j] - graph.heights[j - 1]));
        if (j + 1 < M)
          best = std::max(best, std::abs(vfield(j + 1, v) - vfield(j, v)) /
                                    (graph.heights[j + 1] - graph.heights[j]));
        nv(j, v) = best;
      }
    }
    field = std::move(nf);
    vfield = std::move(nv);
    for (int j = 0; j < M; ++j)
      out[j].deriv_norms.push_back(std::max(field.row(j).maxCoeff(), vfield.row(j).maxCoeff()));
  }
  return out;
}

GraphWeingartenField graph_weingarten_field(const CylinderGraph& graph, int k) {
  graph.validate();
  const auto& mesh = *graph.mesh;
  const int M = graph.height_count(), V = graph.vertex_count();
  const auto zeta = graph.physical_heights();

  std::vector<Eigen::VectorXd> rho(M);
  for (int j = 0; j < M; ++j) rho[j] = graph.rho(j);

  // Slice jets (gradient and Hessian of rho over the sphere) per vertex.
  std::vector<Eigen::MatrixXd> grads(M);   // V x 2
  std::vector<std::vector<Mat2>> hesses(M);
  for (int j = 0; j < M; ++j) {
    grads[j].resize(V, 2);
    hesses[j].resize(V);
    Vec2 g;
    Mat2 h;
    for (int v = 0; v < V; ++v) {
      mesh.jet(rho[j], v, g, h);
      grads[j].row(v) = g.transpose();
      hesses[j][v] = h;
    }
  }

  auto zderiv = [&](auto&& value, int j, int v) {
    // First derivative in the physical height by nonuniform centered or
    // one-sided differences.
    if (j > 0 && j + 1 < M)
      return (value(j + 1, v) - value(j - 1, v)) / (zeta[j + 1] - zeta[j - 1]);
    if (j == 0) return (value(1, v) - value(0, v)) / (zeta[1] - zeta[0]);
    return (value(M - 1, v) - value(M - 2, v)) / (zeta[M - 1] - zeta[M - 2]);
  };
  auto rho_at = [&](int j, int v) { return rho[j][v]; };

  GraphWeingartenField out;
  out.lambda1.resize(M, V);
  out.lambda2.resize(M, V);
  out.lambda3.resize(M, V);
  for (int j = 0; j < M; ++j) {
    for (int v = 0; v < V; ++v) {
      const double p = rho[j][v];
      const Vec2 g = grads[j].row(v).transpose();
      const Mat2 h = hesses[j][v];
      const double pz = zderiv(rho_at, j, v);
      double pzz;
      if (j > 0 && j + 1 < M) {
        const double hm = zeta[j] - zeta[j - 1], hp = zeta[j + 1] - zeta[j];
        pzz = 2.0 * (hm * rho[j + 1][v] + hp * rho[j - 1][v] - (hm + hp) * rho[j][v]) /
              (hm * hp * (hm + hp));
      } else {
        const int jj = std::clamp(j, 1, M - 2);
        const double hm = zeta[jj] - zeta[jj - 1], hp = zeta[jj + 1] - zeta[jj];
        pzz = 2.0 * (hm * rho[jj + 1][v] + hp * rho[jj - 1][v] - (hm + hp) * rho[jj][v]) /
              (hm * hp * (hm + hp));
      }
      Vec2 gz;
      gz.x() = zderiv([&](int jj, int vv) { return grads[jj](vv, 0); }, j, v);
      gz.y() = zderiv([&](int jj, int vv) { return grads[jj](vv, 1); }, j, v);

      Mat3 met, sff;
      met << g.x() * g.x() + p * p, g.x() * g.y(), pz * g.x(),
             g.x() * g.y(), g.y() * g.y() + p * p, pz * g.y(),
             pz * g.x(), pz * g.y(), 1.0 + pz * pz;
      const double alpha = 1.0 / std::sqrt(1.0 + g.squaredNorm() / (p * p) + pz * pz);
      Mat2 Aab = -alpha * (h - p * Mat2::Identity()) + (2.0 * alpha / p) * g * g.transpose();
      Vec2 Aaz = -alpha * (gz - (pz / p) * g);
      sff << Aab(0, 0), Aab(0, 1), Aaz.x(),
             Aab(0, 1), Aab(1, 1), Aaz.y(),
             Aaz.x(), Aaz.y(), -alpha * pzz;
      Eigen::GeneralizedSelfAdjointEigenSolver<Mat3> es(sff, met);
      out.lambda1(j, v) = es.eigenvalues()[0];
      out.lambda2(j, v) = es.eigenvalues()[1];
      out.lambda3(j, v) = es.eigenvalues()[2];
    }
  }

  // Sup finite-difference norms of the curvature fields in physical lengths.
  std::array<Eigen::MatrixXd, 3> fields = {out.lambda1, out.lambda2, out.lambda3};
  for (int l = 1; l <= k; ++l) {
    Eigen::MatrixXd norm_l = Eigen::MatrixXd::Zero(M, V);
    std::array<Eigen::MatrixXd, 3> next;
    for (int c = 0; c < 3; ++c) {
      next[c] = Eigen::MatrixXd::Zero(M, V);
      for (int j = 0; j < M; ++j) {
        for (int v = 0; v < V; ++v) {
          double best = 0.0;
          for (int w : mesh.one_ring()[v]) {
            const Vec3 pv = rho[j][v] * mesh.vertices()[v];
            const Vec3 pw = rho[j][w] * mesh.vertices()[w];
            const double ds = (pv - pw).norm();
            best = std::max(best, std::abs(fields[c](j, v) - fields[c](j, w)) / ds);
          }
          auto zgap = [&](int j0, int j1) {
            const double dr = rho[j1][v] - rho[j0][v];
            const double dzt = zeta[j1] - zeta[j0];
            return std::sqrt(dr * dr + dzt * dzt);
          };
          if (j > 0)
            best = std::max(best, std::abs(fields[c](j, v) - fields[c](j - 1, v)) / zgap(j - 1, j));
          if (j + 1 < M)
            best = std::max(best, std::abs(fields[c](j + 1, v) - fields[c](j, v)) / zgap(j, j + 1));
          next[c](j, v) = best;
          norm_l(j, v) = std::max(norm_l(j, v), best);
        }
      }
    }
    fields = std::move(next);
    out.grad_norms.push_back(std::move(norm_l));
  }
  return out;
}

WeingartenData graph_weingarten(const CylinderGraph& graph, int vertex, int slice, int k) {
  const auto field = graph_weingarten_field(graph, k);
  std::vector<double> lambda = {field.lambda1(slice, vertex), field.lambda2(slice, vertex),
                                field.lambda3(slice, vertex)};
  std::vector<double> grads(k);
  for (int l = 0; l < k; ++l) grads[l] = field.grad_norms[l](slice, vertex);
  return WeingartenData::from_eigenvalues(std::move(lambda), std::move(grads));
}

ExtractedGraph extract_graph(const RadialProfile& profile, int center, double L,
                             std::shared_ptr<const SphereMesh> mesh, int k) {
  profile.validate();
  const int m = profile.sample_count();
  if (center < 0 || center >= m) throw Error("extract_graph: center out of range");
  const auto wc = profile_curvature(profile, center, 0);
  if (!(wc.H > 0.0)) throw NonPositiveH("extract_graph: H <= 0 at center");
  const double rhat = (profile.n - 1) / wc.H;
  const double xc = profile.axis[center];
  const double x_lo = xc - L * rhat, x_hi = xc + L * rhat;

  if (!profile.periodic()) {
    if (x_lo < profile.axis.front() - 1e-12 || x_hi > profile.axis.back() + 1e-12)
      throw WindowExceedsDomain("extract_graph: window exceeds profile domain");
  } else if (x_hi - x_lo > profile.period() + 1e-12) {
    throw WindowExceedsDomain("extract_graph: window longer than the period");
  }

  // Window sample indices (ghost indices wrap on periodic profiles).
  std::vector<int> idx;
  {
    int j = center;
    while (profile.axis_at(j - 1) >= x_lo - 1e-12 && center - (j - 1) < 2 * m) --j;
    int j_hi = center;
    while (profile.axis_at(j_hi + 1) <= x_hi + 1e-12 && (j_hi + 1) - center < 2 * m) ++j_hi;
    for (int t = j; t <= j_hi; ++t) idx.push_back(t);
  }
  if (idx.size() < 3) throw WindowExceedsDomain("extract_graph: window too small");

  const int M = static_cast<int>(idx.size());
  std::vector<double> rho(M), phys(M);
  for (int t = 0; t < M; ++t) {
    const double r = profile.sample(idx[t]);
    if (!(r > 0.0)) throw NonPositiveRadius("extract_graph: r <= 0 in window");
    const int ji = profile.periodic() ? ((idx[t] % (m - 1)) + (m - 1)) % (m - 1)
                                      : std::clamp(idx[t], 0, m - 1);
    const auto w = profile_curvature(profile, ji, 0);
    if (!(w.H > 0.0)) throw NonPositiveH("extract_graph: H <= 0 in window");
    rho[t] = r / rhat;
    phys[t] = (profile.axis_at(idx[t]) - xc) / rhat;
  }

  CylinderGraph g;
  g.n = profile.n;
  g.mesh = std::move(mesh);
  g.scale = 1.0;
  g.ambient_unit = rhat;
  g.ambient_origin = xc;
  g.zeta0 = phys[0];
  g.heights.resize(M);
  // Standard heights integrate dz = d zeta / rho, anchored at the center.
  int tc = 0;
  for (int t = 0; t < M; ++t)
    if (idx[t] == center) tc = t;
  g.heights[tc] = 0.0;
  for (int t = tc + 1; t < M; ++t)
    g.heights[t] = g.heights[t - 1] + 2.0 * (phys[t] - phys[t - 1]) / (rho[t] + rho[t - 1]);
  for (int t = tc - 1; t >= 0; --t)
    g.heights[t] = g.heights[t + 1] - 2.0 * (phys[t + 1] - phys[t]) / (rho[t + 1] + rho[t]);
  g.a = g.heights.front();
  g.b = g.heights.back();
  g.u.resize(M, g.vertex_count());
  for (int t = 0; t < M; ++t) g.u.row(t).setConstant(rho[t] - 1.0);

  // Discrete C^{k+2}-type norm of u: iterated difference quotients over the
  // standard heights (the angular directions carry no variation here).
  double norm = 0.0;
  std::vector<double> f(rho.begin(), rho.end());
  for (auto& x : f) x -= 1.0;
  std::vector<double> zs = g.heights;
  for (int o = 0; o <= k + 2; ++o) {
    for (double x : f) norm = std::max(norm, std::abs(x));
    if (o == k + 2 || f.size() < 3) break;
    std::vector<double> nf(f.size() - 2), nz(f.size() - 2);
    for (size_t t = 1; t + 1 < f.size(); ++t) {
      nf[t - 1] = (f[t + 1] - f[t - 1]) / (zs[t + 1] - zs[t - 1]);
      nz[t - 1] = zs[t];
    }
    f = std::move(nf);
    zs = std::move(nz);
  }

  ExtractedGraph out;
  out.graph = std::move(g);
  out.u_norm = norm;
  return out;
}

}  // namespace neckflow
