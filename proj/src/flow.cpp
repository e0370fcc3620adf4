#include "neckflow/flow.hpp"

#include <algorithm>
#include <cmath>

#include "neckflow/errors.hpp"

namespace neckflow {

namespace {

// Thomas algorithm for a tridiagonal system; diagonals (a: sub, b: diag, c: super).
std::vector<double> solve_tridiagonal(std::vector<double> a, std::vector<double> b,
                                      std::vector<double> c, std::vector<double> d) {
  const int n = static_cast<int>(b.size());
  for (int i = 1; i < n; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    d[i] -= w * d[i - 1];
  }
  std::vector<double> x(n);
  x[n - 1] = d[n - 1] / b[n - 1];
  for (int i = n - 2; i >= 0; --i) x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
  return x;
}

// Cyclic tridiagonal solve via Sherman-Morrison (corner entries alpha: row 0
// couples to n-1, beta: row n-1 couples to 0).
std::vector<double> solve_cyclic_tridiagonal(const std::vector<double>& a,
                                             std::vector<double> b,
                                             const std::vector<double>& c, double alpha,
                                             double beta, const std::vector<double>& d) {
  const int n = static_cast<int>(b.size());
  const double gamma = -b[0];
  std::vector<double> bb = b;
  bb[0] -= gamma;
  bb[n - 1] -= alpha * beta / gamma;
  auto y = solve_tridiagonal(a, bb, c, d);
  std::vector<double> u(n, 0.0);
  u[0] = gamma;
  u[n - 1] = alpha;
  auto z = solve_tridiagonal(a, bb, c, u);
  const double fact = (y[0] + beta * y[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = y[i] - fact * z[i];
  return x;
}

double uniform_spacing(const RadialProfile& p) {
  const double h = p.axis[1] - p.axis[0];
  for (int i = 1; i + 1 < p.sample_count(); ++i)
    if (std::abs((p.axis[i + 1] - p.axis[i]) - h) > 1e-9 * std::abs(h))
      throw Error("flow stepping requires a uniform axis grid");
  return h;
}

bool has_cap(const RadialProfile& p) {
  return p.left == EndCondition::Capped || p.right == EndCondition::Capped;
}

// Drop exact-zero samples at capped boundaries so every stored sample is
// strictly positive; the tips live between the boundary sample and the axis.
RadialProfile strip_zero_boundaries(RadialProfile p) {
  int lo = 0, hi = p.sample_count() - 1;
  while (lo < hi && !(p.radius[lo] > 0.0)) ++lo;
  while (hi > lo && !(p.radius[hi] > 0.0)) --hi;
  if (hi - lo + 1 < 3) throw RadiusUnderflow("profile vanished");
  if (lo == 0 && hi == p.sample_count() - 1) return p;
  RadialProfile out = p;
  out.axis.assign(p.axis.begin() + lo, p.axis.begin() + hi + 1);
  out.radius.assign(p.radius.begin() + lo, p.radius.begin() + hi + 1);
  return out;
}

// Quadratic extrapolation of u = r^2 to its zero crossing beyond the boundary
// sample (returns the tip gap h_m > 0 measured from the boundary sample).
double tip_gap(const std::vector<double>& u, const std::vector<double>& x, bool left,
               double h) {
  const int n = static_cast<int>(u.size());
  double u0, u1, u2, d1, d2;
  if (left) {
    u0 = u[0]; u1 = u[1]; u2 = u[2];
    d1 = x[1] - x[0]; d2 = x[2] - x[0];
  } else {
    u0 = u[n - 1]; u1 = u[n - 2]; u2 = u[n - 3];
    d1 = x[n - 1] - x[n - 2]; d2 = x[n - 1] - x[n - 3];
  }
  // Fit u(s) = u0 + b s + c s^2 through (0,u0), (d1,u1), (d2,u2) with s the
  // inward coordinate; the tip is the root at s < 0.
  const double b = (u1 * d2 * d2 - u2 * d1 * d1 - u0 * (d2 * d2 - d1 * d1)) / (d1 * d2 * (d2 - d1));
  const double cq = (u2 * d1 - u1 * d2 + u0 * (d2 - d1)) / (d1 * d2 * (d2 - d1));
  double gap = 0.0;
  const double disc = b * b - 4.0 * cq * u0;
  if (std::abs(cq) > 1e-14 && disc >= 0.0) {
    const double root1 = (-b + std::sqrt(disc)) / (2.0 * cq);
    const double root2 = (-b - std::sqrt(disc)) / (2.0 * cq);
    // Want the root closest to zero on the negative (outward) side.
    gap = -1e300;
    for (double rt : {root1, root2})
      if (rt < 0.0 && rt > gap) gap = rt;
    gap = -gap;
  }
  if (!(gap > 0.0) || !std::isfinite(gap)) {
    // Linear fallback.
    gap = (b > 0.0) ? u0 / b : h;
  }
  return std::clamp(gap, 0.05 * h, 2.0 * h);
}

FlowState step_capped(const FlowState& state, double dt) {
  RadialProfile p = strip_zero_boundaries(state.profile);
  const double h = uniform_spacing(p);
  const int m = p.sample_count();
  const int n = p.n;
  std::vector<double> u(m);
  for (int i = 0; i < m; ++i) u[i] = p.radius[i] * p.radius[i];

  const bool capL = p.left == EndCondition::Capped;
  const bool capR = p.right == EndCondition::Capped;
  const double gapL = capL ? tip_gap(u, p.axis, true, h) : h;
  const double gapR = capR ? tip_gap(u, p.axis, false, h) : h;

  // Stencil coefficients per row: left value, center, right value; capped
  // boundary rows anchor at the tip (value 0), open boundary rows reflect.
  std::vector<double> cl(m), cc(m), cr(m), ux(m);
  for (int i = 0; i < m; ++i) {
    double hm = (i == 0) ? gapL : h;
    double hp = (i == m - 1) ? gapR : h;
    cl[i] = 2.0 / (hm * (hm + hp));
    cc[i] = -2.0 / (hm * hp);
    cr[i] = 2.0 / (hp * (hm + hp));
    const double uL = (i == 0) ? (capL ? 0.0 : u[1]) : u[i - 1];
    const double uR = (i == m - 1) ? (capR ? 0.0 : u[m - 2]) : u[i + 1];
    ux[i] = (-hp / (hm * (hm + hp))) * uL + ((hp - hm) / (hm * hp)) * u[i] +
            (hm / (hp * (hm + hp))) * uR;
  }

  std::vector<double> sub(m, 0.0), diag(m, 0.0), sup(m, 0.0), rhs(m, 0.0);
  for (int i = 0; i < m; ++i) {
    const double denom = 4.0 * u[i] + ux[i] * ux[i];
    const double D = 4.0 * u[i] / denom;
    const double react = -2.0 * ux[i] * ux[i] / denom - 2.0 * (n - 1);
    diag[i] = 1.0 - dt * D * cc[i];
    if (i > 0) sub[i] = -dt * D * cl[i];
    if (i + 1 < m) sup[i] = -dt * D * cr[i];
    rhs[i] = u[i] + dt * react;
    if (i == 0 && !capL) sup[i] -= dt * D * cl[i];   // even reflection ghost
    if (i == m - 1 && !capR) sub[i] -= dt * D * cr[i];
  }
  auto u_new = solve_tridiagonal(sub, diag, sup, rhs);

  FlowState out;
  out.time = state.time + dt;
  out.step_count = state.step_count + 1;
  out.profile = p;
  for (int i = 0; i < m; ++i)
    out.profile.radius[i] = u_new[i] > 0.0 ? std::sqrt(u_new[i]) : 0.0;
  out.profile = strip_zero_boundaries(std::move(out.profile));
  return out;
}

FlowState step_graph(const FlowState& state, double dt) {
  const RadialProfile& p = state.profile;
  const double h = uniform_spacing(p);
  const int n = p.n;
  const bool periodic = p.periodic();
  const int m = periodic ? p.sample_count() - 1 : p.sample_count();
  const double mu = dt / (h * h);

  std::vector<double> sub(m, 0.0), diag(m, 0.0), sup(m, 0.0), rhs(m, 0.0);
  double alpha = 0.0, beta = 0.0;
  for (int i = 0; i < m; ++i) {
    const double r = p.radius[i];
    if (!(r > 0.0)) throw RadiusUnderflow("nonpositive radius in graph step");
    double rm, rp;
    if (periodic) {
      rm = p.radius[(i - 1 + m) % m];
      rp = p.radius[(i + 1) % m];
    } else {
      rm = p.radius[std::max(0, i - 1)];
      rp = p.radius[std::min(p.sample_count() - 1, i + 1)];
      if (i == 0) rm = p.radius[1];          // even reflection at open ends
      if (i == m - 1) rp = p.radius[m - 2];
    }
    const double rx = (rp - rm) / (2.0 * h);
    const double a = 1.0 / (1.0 + rx * rx);
    diag[i] = 1.0 + 2.0 * mu * a;
    rhs[i] = r - dt * (n - 1) / r;
    if (periodic) {
      if (i == 0) {
        sup[i] = -mu * a;
        alpha = -mu * a;  // coupling (0, m-1)
      } else if (i == m - 1) {
        sub[i] = -mu * a;
        beta = -mu * a;   // coupling (m-1, 0)
      } else {
        sub[i] = -mu * a;
        sup[i] = -mu * a;
      }
    } else {
      if (i > 0) sub[i] = -mu * a;
      if (i + 1 < m) sup[i] = -mu * a;
      if (i == 0) sup[i] -= mu * a;
      if (i == m - 1) sub[i] -= mu * a;
    }
  }

  std::vector<double> r_new = periodic
      ? solve_cyclic_tridiagonal(sub, diag, sup, alpha, beta, rhs)
      : solve_tridiagonal(sub, diag, sup, rhs);

  FlowState out;
  out.time = state.time + dt;
  out.step_count = state.step_count + 1;
  out.profile = p;
  for (int i = 0; i < m; ++i) {
    if (!(r_new[i] > 0.0)) throw RadiusUnderflow("radius reached zero in graph step");
    out.profile.radius[i] = r_new[i];
  }
  if (periodic) out.profile.radius[p.sample_count() - 1] = r_new[0];
  return out;
}

// Curvatures through u = r^2 (regular at cap tips): returns (lambda_axial,
// lambda_round) at sample i of a strictly positive profile.
std::pair<double, double> curvatures_u(const RadialProfile& p, int i) {
  const int m = p.sample_count();
  const int j = std::clamp(i, 1, m - 2);
  auto uval = [&](int t) {
    const double r = p.radius[t];
    return r * r;
  };
  const double hm = p.axis[j] - p.axis[j - 1];
  const double hp = p.axis[j + 1] - p.axis[j];
  const double um = uval(j - 1), u0 = uval(j), up = uval(j + 1);
  const double ux = (hm * hm * up - hp * hp * um + (hp * hp - hm * hm) * u0) /
                    (hm * hp * (hm + hp));
  const double uxx = 2.0 * (hm * up + hp * um - (hm + hp) * u0) / (hm * hp * (hm + hp));
  const double denom = 4.0 * u0 + ux * ux;
  const double lam_ax = -2.0 * (2.0 * u0 * uxx - ux * ux) / std::pow(denom, 1.5);
  const double lam_rd = 2.0 / std::sqrt(denom);
  return {lam_ax, lam_rd};
}

}  // namespace

FlowState step(const FlowState& state, double dt) {
  if (!(dt > 0.0)) throw Error("step: dt must be positive");
  return has_cap(state.profile) ? step_capped(state, dt) : step_graph(state, dt);
}

double max_curvature(const RadialProfile& profile) {
  double w = 0.0;
  for (int i = 1; i + 1 < profile.sample_count(); ++i) {
    if (!(profile.radius[i] > 0.0)) continue;
    const auto [ax, rd] = curvatures_u(profile, i);
    w = std::max({w, std::abs(ax), std::abs(rd)});
  }
  return w;
}

double min_two_convexity(const RadialProfile& profile) {
  double worst = 1e300;
  for (int i = 1; i + 1 < profile.sample_count(); ++i) {
    if (!(profile.radius[i] > 0.0)) continue;
    const auto [ax, rd] = curvatures_u(profile, i);
    // n = 3: eigenvalues (ax, rd, rd); the two smallest sum to
    // ax + rd when ax <= rd, else 2 rd.
    worst = std::min(worst, ax <= rd ? ax + rd : 2.0 * rd);
  }
  return worst;
}

double adaptive_dt(const FlowState& state, double cfl) {
  const double h = uniform_spacing(state.profile);
  const double w = max_curvature(state.profile);
  const double curb = w > 0.0 ? 1.0 / (w * w) : h * h;
  return cfl * std::min(h * h, curb);
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::NeckDetected: return "NeckDetected";
    case EventKind::Extinction: return "Extinction";
    case EventKind::CurvatureCeiling: return "CurvatureCeiling";
    case EventKind::TimeLimit: return "TimeLimit";
    case EventKind::RadiusUnderflow: return "RadiusUnderflow";
  }
  return "TimeLimit";
}

std::string to_string(TerminalLabel label) {
  switch (label) {
    case TerminalLabel::Sphere: return "Sphere";
    case TerminalLabel::TubeS1: return "TubeS1";
    case TerminalLabel::Unresolved: return "Unresolved";
  }
  return "Unresolved";
}

Event run_until_event(FlowState& state, FlowHistory& history, const NeckParams& detection,
                      const FlowConfig& config,
                      const std::function<void(const FlowState&)>& observer) {
  history.capacity = config.snapshot_capacity;
  const double h = uniform_spacing(state.profile);
  const int n = state.profile.n;

  auto snapshot_spacing = [&]() {
    const double w = max_curvature(state.profile);
    const double rhat_min = w > 0.0 ? (n - 1) / (n * w) : 1.0;
    return detection.theta * rhat_min * rhat_min / config.snapshots_per_window;
  };

  if (history.snapshots.empty()) {
    history.append(state);
    if (observer) observer(state);
  }

  while (true) {
    // Terminal-state checks on the current state.
    double max_r = 0.0;
    for (double r : state.profile.radius) max_r = std::max(max_r, r);
    if (max_r < 2.0 * h || state.profile.sample_count() < 6)
      return {EventKind::Extinction, state.time, {}};

    const int m = state.profile.sample_count();
    const int margin = 6;
    double min_interior = 1e300;
    for (int i = 0; i < m; ++i) {
      const bool near_capL = state.profile.left == EndCondition::Capped && i < margin;
      const bool near_capR = state.profile.right == EndCondition::Capped && i >= m - margin;
      if (near_capL || near_capR) continue;
      min_interior = std::min(min_interior, state.profile.radius[i]);
    }
    if (min_interior < config.radius_floor_cells * h)
      return {EventKind::RadiusUnderflow, state.time, {}};

    if (max_curvature(state.profile) >= config.curvature_ceiling)
      return {EventKind::CurvatureCeiling, state.time, {}};

    if (state.time >= config.t_max) return {EventKind::TimeLimit, state.time, {}};

    if (state.step_count % config.check_interval == 0) {
      auto det = detect_neck_points(state, history, detection);
      bool any_certified = false;
      for (const auto& c : det.candidates) any_certified |= c.certified;
      if (any_certified) return {EventKind::NeckDetected, state.time, std::move(det)};
    }

    double dt = adaptive_dt(state, config.cfl);
    dt = std::min(dt, config.t_max - state.time + 1e-15);
    state = step(state, dt);
    if (state.time - history.snapshots.back().time >= snapshot_spacing()) {
      history.append(state);
    }
    if (observer) observer(state);
  }
}

namespace {

// Quartic in u matched C^2 at the cut with prescribed tip slope; evaluates
// u(xi) = c0 + c1 xi + c2 xi^2 + c3 xi^3 + c4 xi^4 over xi in [0, ell].
std::array<double, 5> cap_quartic(double u0, double u1, double u2, double ell,
                                  double tip_slope) {
  // Conditions: q(0)=u0, q'(0)=u1, q''(0)=u2, q(ell)=0, q'(ell)=-tip_slope.
  const double c0 = u0, c1 = u1, c2 = 0.5 * u2;
  const double r1 = -(c0 + c1 * ell + c2 * ell * ell);             // c3 l^3 + c4 l^4
  const double r2 = -tip_slope - (c1 + 2.0 * c2 * ell);            // 3 c3 l^2 + 4 c4 l^3
  const double l2 = ell * ell, l3 = l2 * ell, l4 = l3 * ell;
  const double det = l3 * 4.0 * l3 - l4 * 3.0 * l2;
  const double c3 = (r1 * 4.0 * l3 - l4 * r2) / det;
  const double c4 = (l3 * r2 - r1 * 3.0 * l2) / det;
  return {c0, c1, c2, c3, c4};
}

double eval_poly(const std::array<double, 5>& c, double xi) {
  return c[0] + xi * (c[1] + xi * (c[2] + xi * (c[3] + xi * c[4])));
}

}  // namespace

std::pair<FlowState, SurgeryRecord> perform_surgery(const FlowState& state,
                                                    const NeckCandidate& candidate,
                                                    const SurgeryConfig& config,
                                                    const FlowConfig& flow_config) {
  if (!candidate.certified)
    throw Error("perform_surgery: candidate lacks a passing shrinking-neck certificate");
  const RadialProfile& p = state.profile;
  const double h = uniform_spacing(p);
  const int m = p.sample_count();
  const int pc = candidate.index;
  const double rhat = candidate.certificate.rhat;

  // Cylindrical window around the candidate: contiguous run where the
  // pointwise normalized deviation stays below the window bound.
  auto cyl_dev = [&](int i) {
    const auto w = profile_curvature(p, i, 0);
    if (!(w.H > 0.0)) return 1e300;
    return is_eps_cylindrical(w, 1.0).deviation;
  };
  int lo = pc, hi = pc;
  while (lo - 1 > 0 && cyl_dev(lo - 1) <= flow_config.neck_window_eps) --lo;
  while (hi + 1 < m - 1 && cyl_dev(hi + 1) <= flow_config.neck_window_eps) ++hi;
  const double window_len = (p.axis[hi] - p.axis[lo]) / rhat;
  if (window_len < config.min_neck_length)
    throw NeckTooShort("cylindrical window shorter than min_neck_length");

  // Cut positions: caps plus a one-r^ gap on each side of the centre.
  const double s_cut = (config.cap_length + 1.0) * rhat;
  const int iL = std::max(lo, static_cast<int>(std::floor((p.axis[pc] - s_cut - p.axis[0]) / h)));
  const int iR = std::min(hi, static_cast<int>(std::ceil((p.axis[pc] + s_cut - p.axis[0]) / h)));
  if (iL <= lo || iR >= hi) throw NeckTooShort("cuts fall outside the cylindrical window");

  auto u_at = [&](int i) { return p.radius[i] * p.radius[i]; };
  auto u_jet = [&](int i) {
    const double um = u_at(i - 1), u0 = u_at(i), up = u_at(i + 1);
    return std::array<double, 3>{u0, (up - um) / (2.0 * h), (up - 2.0 * u0 + um) / (h * h)};
  };

  const double ell = config.cap_length * rhat;
  auto build_cap = [&](int cut, int dir /* +1: cap grows rightward */) {
    const auto jet = u_jet(cut);
    const double u0 = jet[0], u1 = dir * jet[1], u2 = jet[2];
    const double rc = std::sqrt(u0);
    for (double slope_scale : {2.0, 1.5, 3.0, 1.0, 4.0, 6.0}) {
      const auto poly = cap_quartic(u0, u1, u2, ell, slope_scale * rc);
      // Pointwise checks over the cap: positivity, monotone decrease,
      // convexity of the resulting profile (two-convex, H > 0).
      bool ok = true;
      double prev = u0;
      const int steps = std::max(8, static_cast<int>(std::ceil(ell / h)) * 2);
      for (int s = 1; s <= steps && ok; ++s) {
        const double xi = ell * s / steps;
        const double val = eval_poly(poly, xi);
        if (s < steps && !(val > 0.0)) ok = false;
        if (val > prev + 1e-12) ok = false;
        prev = val;
      }
      if (!ok) continue;
      CapParams cap;
      cap.cut_x = p.axis[cut];
      cap.tip_x = p.axis[cut] + dir * ell;
      cap.u_poly = poly;
      return cap;
    }
    throw CapConvexityFailure("no cap slope satisfied matching and convexity");
  };

  CapParams capL = build_cap(iL, +1);   // closes the left piece, growing right
  CapParams capR = build_cap(iR, -1);   // closes the right piece, growing left

  FlowState out;
  out.time = state.time;
  out.step_count = state.step_count;
  out.profile = p;
  // Carve the removed region and lay the caps down on the same grid; samples
  // outside region and caps are untouched (surgery locality).
  for (int i = iL + 1; i < iR; ++i) out.profile.radius[i] = 0.0;
  for (int i = iL + 1; i < iR; ++i) {
    const double x = p.axis[i];
    if (x < capL.tip_x) {
      const double val = eval_poly(capL.u_poly, x - capL.cut_x);
      if (val > 0.0) out.profile.radius[i] = std::sqrt(val);
    } else if (x > capR.tip_x) {
      const double val = eval_poly(capR.u_poly, capR.cut_x - x);
      if (val > 0.0) out.profile.radius[i] = std::sqrt(val);
    }
  }

  SurgeryRecord rec;
  rec.time = state.time;
  rec.region_lo = p.axis[iL];
  rec.region_hi = p.axis[iR];
  rec.left_cap = capL;
  rec.right_cap = capR;
  rec.pre_neck_certificate = candidate.certificate;
  return {std::move(out), std::move(rec)};
}

std::vector<FlowState> split_components(const FlowState& state) {
  const RadialProfile& p = state.profile;
  const int m = p.sample_count();

  std::vector<std::pair<int, int>> runs;  // [first, last] with r > 0
  if (p.periodic()) {
    // Work modulo the duplicated seam sample.
    const int mm = m - 1;
    std::vector<bool> pos(mm);
    bool all = true;
    for (int i = 0; i < mm; ++i) {
      pos[i] = p.radius[i] > 0.0;
      all = all && pos[i];
    }
    if (all) return {state};
    int start = 0;
    while (pos[start]) ++start;  // a gap exists; start scanning from it
    int i = start;
    do {
      while (!pos[i % mm] && i < start + mm) ++i;
      if (i >= start + mm) break;
      int j = i;
      while (pos[(j + 1) % mm] && j + 1 < i + mm) ++j;
      runs.emplace_back(i, j);
      i = j + 1;
    } while (i < start + mm);
    std::vector<FlowState> out;
    const double period = p.period();
    for (auto [a, b] : runs) {
      FlowState comp;
      comp.time = state.time;
      comp.step_count = state.step_count;
      comp.profile.n = p.n;
      comp.profile.left = comp.profile.right = EndCondition::Capped;
      for (int t = a; t <= b; ++t) {
        const int idx = ((t % mm) + mm) % mm;
        const int wrap = (t - idx) / mm;
        comp.profile.axis.push_back(p.axis[idx] + wrap * period);
        comp.profile.radius.push_back(p.radius[idx]);
      }
      out.push_back(std::move(comp));
    }
    return out;
  }

  int i = 0;
  while (i < m) {
    while (i < m && !(p.radius[i] > 0.0)) ++i;
    if (i >= m) break;
    int j = i;
    while (j + 1 < m && p.radius[j + 1] > 0.0) ++j;
    runs.emplace_back(i, j);
    i = j + 1;
  }
  if (runs.size() == 1 && runs[0].first == 0 && runs[0].second == m - 1) return {state};

  std::vector<FlowState> out;
  for (auto [a, b] : runs) {
    FlowState comp;
    comp.time = state.time;
    comp.step_count = state.step_count;
    comp.profile.n = p.n;
    comp.profile.axis.assign(p.axis.begin() + a, p.axis.begin() + b + 1);
    comp.profile.radius.assign(p.radius.begin() + a, p.radius.begin() + b + 1);
    comp.profile.left = (a == 0) ? p.left : EndCondition::Capped;
    comp.profile.right = (b == m - 1) ? p.right : EndCondition::Capped;
    out.push_back(std::move(comp));
  }
  return out;
}

TerminalLabel terminal_classify(const ComponentOutcome& outcome) {
  const bool capped = outcome.final_state.profile.left == EndCondition::Capped &&
                      outcome.final_state.profile.right == EndCondition::Capped;
  if (outcome.terminal.kind == EventKind::Extinction &&
      (capped || outcome.started_capped_both) && outcome.min_two_convex >= -1e-9)
    return TerminalLabel::Sphere;
  return TerminalLabel::Unresolved;
}

}  // namespace neckflow
