#include "neckflow/neck_detect.hpp"

#include <algorithm>
#include <cmath>

#include "neckflow/errors.hpp"

namespace neckflow {

void NeckParams::validate() const {
  if (!(epsilon > 0.0) || !(L >= 1.0) || !(theta > 0.0) || !(H0 > 0.0) || !(eta0 > 0.0))
    throw Error("NeckParams: all parameters must be strictly positive, L >= 1");
  if (k < 1) throw Error("NeckParams: k must be >= 1");
}

CylindricalCheck is_eps_cylindrical(const WeingartenData& w, double epsilon) {
  if (!(w.H > 0.0)) throw NonPositiveH("is_eps_cylindrical: H <= 0");
  const int n = static_cast<int>(w.eigenvalues.size());
  const double rhat = (n - 1) / w.H;
  double dev = 0.0;
  for (int i = 0; i < n; ++i) {
    const double target = (i == 0) ? 0.0 : 1.0;
    dev = std::max(dev, std::abs(w.eigenvalues[i] * rhat - target));
  }
  return {dev <= epsilon, dev};
}

ParallelCheck is_eps_k_parallel(const WeingartenData& w, double epsilon, int k) {
  if (static_cast<int>(w.grad_norms.size()) < k)
    throw MissingDerivatives("is_eps_k_parallel: fewer than k derivative norms");
  if (!(w.H > 0.0)) throw NonPositiveH("is_eps_k_parallel: H <= 0");
  const int n = static_cast<int>(w.eigenvalues.size());
  const double rhat = (n - 1) / w.H;
  double res = 0.0;
  for (int l = 1; l <= k; ++l)
    res = std::max(res, w.grad_norms[l - 1] * std::pow(rhat, l + 1));
  return {res <= epsilon, res};
}

namespace {

// Geodesic ball of arclength radius s_max around p; ghost indices wrap on
// periodic profiles, stop at capped tips, and throw past open ends.
std::vector<int> arclength_ball(const RadialProfile& profile, int p, double s_max) {
  const int m = profile.sample_count();
  std::vector<int> idx = {p};
  auto seg = [&](int a, int b) {
    const double dx = profile.axis_at(b) - profile.axis_at(a);
    const double dr = profile.sample(b) - profile.sample(a);
    return std::sqrt(dx * dx + dr * dr);
  };
  double s = 0.0;
  for (int j = p; s < s_max;) {
    if (j - 1 < 0 && !profile.periodic()) {
      if (profile.left == EndCondition::Open)
        throw WindowExceedsDomain("geodesic ball exceeds open end");
      break;  // capped: the ball closes over the cap
    }
    if (p - (j - 1) >= m) break;  // periodic: at most one full wrap
    s += seg(j - 1, j);
    if (s <= s_max) idx.push_back(--j); else break;
  }
  s = 0.0;
  for (int j = p; s < s_max;) {
    if (j + 1 >= m && !profile.periodic()) {
      if (profile.right == EndCondition::Open)
        throw WindowExceedsDomain("geodesic ball exceeds open end");
      break;
    }
    if ((j + 1) - p >= m) break;
    s += seg(j, j + 1);
    if (s <= s_max) idx.push_back(++j); else break;
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

int wrap_index(const RadialProfile& profile, int i) {
  const int m = profile.sample_count();
  if (i >= 0 && i < m) return i;
  if (!profile.periodic()) throw WindowExceedsDomain("index outside domain");
  return ((i % (m - 1)) + (m - 1)) % (m - 1);
}

CurvatureNeckCertificate curvature_neck_at(const RadialProfile& profile, int p,
                                           double epsilon, int k, double L) {
  const auto wc = profile_curvature(profile, wrap_index(profile, p), k);
  if (!(wc.H > 0.0)) throw NonPositiveH("is_curvature_neck: H <= 0 at center");
  const double rhat = (profile.n - 1) / wc.H;

  CurvatureNeckCertificate cert;
  cert.center = p;
  cert.rhat = rhat;
  cert.epsilon = epsilon;
  cert.k = k;
  cert.L = L;
  for (int q : arclength_ball(profile, p, L * rhat)) {
    const auto w = profile_curvature(profile, wrap_index(profile, q), k);
    for (size_t i = 0; i < w.eigenvalues.size(); ++i) {
      const double target = (i == 0) ? 0.0 : 1.0;
      cert.cylindrical_residual =
          std::max(cert.cylindrical_residual, std::abs(w.eigenvalues[i] * rhat - target));
    }
    for (int l = 1; l <= k; ++l)
      cert.parallel_residual =
          std::max(cert.parallel_residual, w.grad_norms[l - 1] * std::pow(rhat, l + 1));
  }
  cert.pass = cert.cylindrical_residual <= epsilon && cert.parallel_residual <= epsilon;
  return cert;
}

}  // namespace

CurvatureNeckCertificate is_curvature_neck(const RadialProfile& profile, int p,
                                           const NeckParams& params) {
  params.validate();
  auto cert = curvature_neck_at(profile, p, params.epsilon, params.k, params.L);
  if (params.second_pass && params.L > 2.0) {
    const auto second =
        curvature_neck_at(profile, p, params.epsilon, params.k, params.L - 1.0);
    cert.pass = cert.pass && second.pass;
    cert.cylindrical_residual = std::max(cert.cylindrical_residual, second.cylindrical_residual);
    cert.parallel_residual = std::max(cert.parallel_residual, second.parallel_residual);
  }
  return cert;
}

HypersurfaceNeckCertificate is_hypersurface_neck(const CylinderGraph& graph,
                                                 const NeckParams& params) {
  params.validate();
  graph.validate();
  const int M = graph.height_count(), V = graph.vertex_count();
  const int k = params.k;

  HypersurfaceNeckCertificate cert;
  cert.epsilon = params.epsilon;
  cert.k = k;

  const auto conf = conformal_deviation(graph, k);
  for (const auto& c : conf) {
    cert.conformal_residual = std::max(cert.conformal_residual, c.deviation);
    for (double d : c.deriv_norms)
      cert.conformal_deriv_residual = std::max(cert.conformal_deriv_residual, d);
  }

  const auto field = graph_weingarten_field(graph, k);
  const auto r = graph.slice_mean_radii();
  for (int j = 0; j < M; ++j) {
    for (int v = 0; v < V; ++v) {
      const double l1 = field.lambda1(j, v), l2 = field.lambda2(j, v), l3 = field.lambda3(j, v);
      const double dev = std::max({std::abs(r[j] * l1 - 0.0), std::abs(r[j] * l2 - 1.0),
                                   std::abs(r[j] * l3 - 1.0)});
      cert.cylindrical_residual = std::max(cert.cylindrical_residual, dev);
      for (int l = 1; l <= k; ++l)
        cert.parallel_residual = std::max(
            cert.parallel_residual, field.grad_norms[l - 1](j, v) * std::pow(r[j], l + 1));
    }
  }

  // Mean-radius log-derivative bounds in the standard height.
  std::vector<double> f(M), zs(graph.heights);
  for (int j = 0; j < M; ++j) f[j] = std::log(r[j]);
  for (int l = 1; l <= k && f.size() >= 3; ++l) {
    std::vector<double> nf(f.size() - 2), nz(zs.size() - 2);
    for (size_t j = 1; j + 1 < f.size(); ++j) {
      nf[j - 1] = (f[j + 1] - f[j - 1]) / (zs[j + 1] - zs[j - 1]);
      nz[j - 1] = zs[j];
    }
    f = std::move(nf);
    zs = std::move(nz);
    for (double x : f)
      cert.log_radius_residual = std::max(cert.log_radius_residual, std::abs(x));
  }

  cert.pass = cert.conformal_residual <= params.epsilon &&
              cert.conformal_deriv_residual <= params.epsilon &&
              cert.cylindrical_residual <= params.epsilon &&
              cert.parallel_residual <= params.epsilon &&
              cert.log_radius_residual <= params.epsilon;
  return cert;
}

void FlowHistory::append(FlowState state) {
  if (!snapshots.empty() && !(state.time > snapshots.back().time))
    throw Error("FlowHistory: snapshot times must be strictly increasing");
  snapshots.push_back(std::move(state));
  while (static_cast<int>(snapshots.size()) > capacity) snapshots.pop_front();
}

const FlowState& FlowHistory::latest() const {
  if (snapshots.empty()) throw InsufficientHistory("empty history");
  return snapshots.back();
}

const FlowState& FlowHistory::at_or_before(double t) const {
  if (snapshots.empty()) throw InsufficientHistory("empty history");
  const FlowState* best = nullptr;
  for (const auto& s : snapshots)
    if (s.time <= t + 1e-12) best = &s;
  if (!best) throw InsufficientHistory("no snapshot at or before requested time");
  return *best;
}

ParabolicNeighborhood backward_parabolic_neighborhood(const FlowHistory& history, int p,
                                                      double t, const NeckParams& params) {
  params.validate();
  const FlowState& tip = history.at_or_before(t);
  const auto w = profile_curvature(tip.profile, p, 0);
  if (!(w.H > 0.0)) throw NonPositiveH("backward_parabolic_neighborhood: H <= 0");
  const double rhat = (tip.profile.n - 1) / w.H;

  ParabolicNeighborhood nbhd;
  nbhd.center_index = p;
  nbhd.center_time = t;
  nbhd.rhat = rhat;
  nbhd.t_hi = t;
  nbhd.t_lo = t - rhat * rhat * params.theta;
  nbhd.spatial_indices = arclength_ball(tip.profile, p, params.L * rhat);

  if (history.snapshots.front().time > nbhd.t_lo + 1e-12)
    throw InsufficientHistory("history does not cover the backward parabolic window");
  for (int i = 0; i < static_cast<int>(history.snapshots.size()); ++i) {
    const double ts = history.snapshots[i].time;
    if (ts >= nbhd.t_lo - 1e-12 && ts <= nbhd.t_hi + 1e-12) nbhd.snapshot_refs.push_back(i);
  }
  if (nbhd.snapshot_refs.empty())
    throw InsufficientHistory("no snapshots inside the backward window");
  return nbhd;
}

ShrinkingCheck is_shrinking_curvature_neck(const FlowHistory& history,
                                           const ParabolicNeighborhood& nbhd,
                                           const NeckParams& params) {
  params.validate();
  // ND2: the neighborhood must not contain surgeries.
  const auto& tip = history.at_or_before(nbhd.center_time);
  double x_min = tip.profile.axis_at(nbhd.spatial_indices.front());
  double x_max = tip.profile.axis_at(nbhd.spatial_indices.back());
  if (x_min > x_max) std::swap(x_min, x_max);
  for (const auto& s : history.surgeries) {
    const bool in_time = s.time >= nbhd.t_lo - 1e-12 && s.time <= nbhd.t_hi + 1e-12;
    const bool in_space = s.region_hi >= x_min && s.region_lo <= x_max;
    if (in_time && in_space)
      throw SurgeryInWindow("surgery inside the backward parabolic window");
  }

  ShrinkingCheck out;
  out.pass = true;
  const int n = tip.profile.n;
  const double rhat0 = nbhd.rhat;
  for (int ref : nbhd.snapshot_refs) {
    const FlowState& snap = history.snapshots[ref];
    // The spatial ball is identified across snapshots by grid index (the
    // profile grid is fixed in x; motion is purely radial).
    const auto wc = profile_curvature(snap.profile, nbhd.center_index, params.k);
    if (!(wc.H > 0.0)) {
      out.pass = false;
      continue;
    }
    const double rhat_s = (n - 1) / wc.H;
    for (int q : nbhd.spatial_indices) {
      if (q < 0 || q >= snap.profile.sample_count()) continue;
      const auto w = profile_curvature(snap.profile, q, params.k);
      for (size_t i = 0; i < w.eigenvalues.size(); ++i) {
        const double target = (i == 0) ? 0.0 : 1.0;
        out.worst_cylindrical =
            std::max(out.worst_cylindrical, std::abs(w.eigenvalues[i] * rhat_s - target));
      }
      for (int l = 1; l <= params.k; ++l)
        out.worst_parallel =
            std::max(out.worst_parallel, w.grad_norms[l - 1] * std::pow(rhat_s, l + 1));
    }
    // Backward shrinking-cylinder radius law at the center.
    const double law = std::sqrt(rhat0 * rhat0 + 2.0 * (n - 1) * (nbhd.center_time - snap.time));
    out.radius_law_residual = std::max(out.radius_law_residual, std::abs(rhat_s - law) / law);
  }
  out.pass = out.pass && out.worst_cylindrical <= params.epsilon &&
             out.worst_parallel <= params.epsilon &&
             out.radius_law_residual <= params.epsilon;
  return out;
}

DetectionResult detect_neck_points(const FlowState& state, const FlowHistory& history,
                                   const NeckParams& params) {
  params.validate();
  const auto& profile = state.profile;
  const int m = profile.sample_count();
  const int n = profile.n;

  DetectionResult result;
  std::vector<NeckCandidate> raw;
  for (int i = 0; i < m; ++i) {
    WeingartenData w;
    try {
      w = profile_curvature(profile, i, params.k);
    } catch (const Error&) {
      continue;  // stencil unavailable at this sample
    }
    if (!(w.H >= params.H0)) continue;
    const double ratio = w.eigenvalues.front() / w.H;
    if (!(ratio <= params.eta0)) continue;

    NeckCandidate cand;
    cand.index = i;
    cand.H = w.H;
    cand.lambda1_over_H = ratio;
    try {
      const auto nbhd = backward_parabolic_neighborhood(history, i, state.time, params);
      cand.shrinking = is_shrinking_curvature_neck(history, nbhd, params);
      cand.certificate = is_curvature_neck(profile, i, params);
      cand.certified = cand.certificate.pass && cand.shrinking.pass;
      raw.push_back(std::move(cand));
    } catch (const SurgeryInWindow&) {
      cand.exclusion = "SurgeryInWindow";
      result.excluded.push_back(std::move(cand));
    } catch (const InsufficientHistory&) {
      cand.exclusion = "InsufficientHistory";
      result.excluded.push_back(std::move(cand));
    } catch (const WindowExceedsDomain&) {
      cand.exclusion = "WindowExceedsDomain";
      result.excluded.push_back(std::move(cand));
    } catch (const NonPositiveH&) {
      cand.exclusion = "NonPositiveH";
      result.excluded.push_back(std::move(cand));
    }
  }

  // Sort by descending H; deduplicate overlapping balls keeping the max-H
  // representative.
  std::sort(raw.begin(), raw.end(), [](const NeckCandidate& a, const NeckCandidate& b) {
    if (a.H != b.H) return a.H > b.H;
    return a.index < b.index;
  });
  const auto s = profile.arclength();
  std::vector<std::pair<double, double>> kept_balls;
  for (auto& cand : raw) {
    const double half = params.L * cand.certificate.rhat;
    const double lo = s[cand.index] - half, hi = s[cand.index] + half;
    bool overlaps = false;
    for (const auto& [klo, khi] : kept_balls)
      if (hi >= klo && lo <= khi) {
        overlaps = true;
        break;
      }
    if (!overlaps) {
      kept_balls.emplace_back(lo, hi);
      result.candidates.push_back(std::move(cand));
    }
  }
  return result;
}

}  // namespace neckflow
