#include "neckflow/radial_profile.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "neckflow/errors.hpp"

namespace neckflow {

namespace {
constexpr double kPi = std::numbers::pi;

double smootherstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}
}  // namespace

std::string to_string(EndCondition e) {
  switch (e) {
    case EndCondition::Capped: return "capped";
    case EndCondition::Periodic: return "periodic";
    case EndCondition::Open: return "open";
  }
  return "open";
}

EndCondition end_condition_from_string(const std::string& s) {
  if (s == "capped") return EndCondition::Capped;
  if (s == "periodic") return EndCondition::Periodic;
  if (s == "open") return EndCondition::Open;
  throw ScenarioParseError("unknown end condition: " + s);
}

void RadialProfile::validate() const {
  if (n < 3) throw Error("RadialProfile: n must be >= 3");
  if (axis.size() != radius.size()) throw Error("RadialProfile: axis/radius size mismatch");
  if (sample_count() < 16) throw InsufficientSamples("RadialProfile: need at least 16 samples");
  for (int i = 0; i + 1 < sample_count(); ++i)
    if (!(axis[i] < axis[i + 1])) throw Error("RadialProfile: axis not strictly increasing");
  if ((left == EndCondition::Periodic) != (right == EndCondition::Periodic))
    throw Error("RadialProfile: periodic must apply to both ends");
  for (int i = 1; i + 1 < sample_count(); ++i)
    if (!(radius[i] > 0.0)) throw NonPositiveRadius("RadialProfile: interior radius <= 0");
  if (left != EndCondition::Capped && !(radius.front() > 0.0))
    throw NonPositiveRadius("RadialProfile: non-capped end radius <= 0");
  if (right != EndCondition::Capped && !(radius.back() > 0.0))
    throw NonPositiveRadius("RadialProfile: non-capped end radius <= 0");
  if (periodic()) {
    const double h = axis[1] - axis[0];
    const double seam = std::abs(radius.front() - radius.back());
    const double dl = (radius[1] - radius.front()) / (axis[1] - axis[0]);
    const double dr = (radius.back() - radius[sample_count() - 2]) /
                      (axis.back() - axis[sample_count() - 2]);
    const double scale = *std::max_element(radius.begin(), radius.end());
    if (seam > 1e-6 * scale || std::abs(dl - dr) > 10.0 * h)
      throw Error("RadialProfile: periodic seam mismatch");
  }
  // Capped closure zones approach zero monotonically.
  auto check_cap = [&](bool left_side) {
    const int m = sample_count();
    const int zone = std::min(4, m - 1);
    for (int j = 0; j < zone; ++j) {
      const double a = left_side ? radius[j] : radius[m - 1 - j];
      const double b = left_side ? radius[j + 1] : radius[m - 2 - j];
      if (a > b + 1e-12) throw Error("RadialProfile: capped end not monotone");
    }
  };
  if (left == EndCondition::Capped) check_cap(true);
  if (right == EndCondition::Capped) check_cap(false);
}

double RadialProfile::sample(int i) const {
  const int m = sample_count();
  if (i >= 0 && i < m) return radius[i];
  if (periodic()) {
    int j = ((i % (m - 1)) + (m - 1)) % (m - 1);
    return radius[j];
  }
  if (i < 0) {
    if (left != EndCondition::Capped) throw WindowExceedsDomain("stencil exceeds left end");
    return 2.0 * radius.front() - radius[-i];
  }
  if (right != EndCondition::Capped) throw WindowExceedsDomain("stencil exceeds right end");
  return 2.0 * radius.back() - radius[2 * (m - 1) - i];
}

double RadialProfile::axis_at(int i) const {
  const int m = sample_count();
  if (i >= 0 && i < m) return axis[i];
  if (periodic()) {
    const double p = period();
    int cycles = 0;
    int j = i;
    while (j < 0) { j += m - 1; --cycles; }
    while (j >= m - 1) { j -= m - 1; ++cycles; }
    return axis[j] + cycles * p;
  }
  if (i < 0) return 2.0 * axis.front() - axis[-i];
  return 2.0 * axis.back() - axis[2 * (m - 1) - i];
}

double RadialProfile::deriv1(int i) const {
  const double hm = axis_at(i) - axis_at(i - 1);
  const double hp = axis_at(i + 1) - axis_at(i);
  const double fm = sample(i - 1), f0 = sample(i), fp = sample(i + 1);
  return (hm * hm * fp - hp * hp * fm + (hp * hp - hm * hm) * f0) / (hm * hp * (hm + hp));
}

double RadialProfile::deriv2(int i) const {
  const double hm = axis_at(i) - axis_at(i - 1);
  const double hp = axis_at(i + 1) - axis_at(i);
  const double fm = sample(i - 1), f0 = sample(i), fp = sample(i + 1);
  return 2.0 * (hm * fp + hp * fm - (hm + hp) * f0) / (hm * hp * (hm + hp));
}

std::vector<double> RadialProfile::arclength() const {
  std::vector<double> s(sample_count(), 0.0);
  for (int i = 1; i < sample_count(); ++i) {
    const double dx = axis[i] - axis[i - 1];
    const double dr = radius[i] - radius[i - 1];
    s[i] = s[i - 1] + std::sqrt(dx * dx + dr * dr);
  }
  return s;
}

double RadialProfile::enclosed_volume() const {
  const double wn = ball_volume_constant(n);
  double v = 0.0;
  for (int i = 1; i < sample_count(); ++i) {
    const double fa = std::pow(radius[i - 1], n);
    const double fb = std::pow(radius[i], n);
    v += 0.5 * (fa + fb) * (axis[i] - axis[i - 1]);
  }
  return wn * v;
}

RadialProfile RadialProfile::scaled(double c) const {
  if (!(c > 0.0)) throw Error("scale factor must be positive");
  RadialProfile out = *this;
  for (auto& x : out.axis) x *= c;
  for (auto& r : out.radius) r *= c;
  return out;
}

WeingartenData WeingartenData::from_eigenvalues(std::vector<double> lambda,
                                                std::vector<double> grads) {
  WeingartenData w;
  std::sort(lambda.begin(), lambda.end());
  w.eigenvalues = std::move(lambda);
  w.H = std::accumulate(w.eigenvalues.begin(), w.eigenvalues.end(), 0.0);
  w.grad_norms = std::move(grads);
  return w;
}

namespace {

struct CurvaturePoint {
  double lam_min, lam_max;  // sorted distinct principal curvature values
};

CurvaturePoint curvatures_at(const RadialProfile& p, int j) {
  const double r = p.sample(j);
  if (!(r > 0.0)) throw NonPositiveRadius("profile_curvature: r <= 0 at sample");
  const double r1 = p.deriv1(j);
  const double r2 = p.deriv2(j);
  const double q = 1.0 + r1 * r1;
  const double lam_ax = -r2 / std::pow(q, 1.5);
  const double lam_rd = 1.0 / (r * std::sqrt(q));
  return {std::min(lam_ax, lam_rd), std::max(lam_ax, lam_rd)};
}

}  // namespace

WeingartenData profile_curvature(const RadialProfile& profile, int i, int k) {
  const int m = profile.sample_count();
  if (k < 0) throw Error("profile_curvature: k must be >= 0");
  if (m < 2 * k + 4) throw InsufficientSamples("profile_curvature: m < 2k+4");
  if (i < 0 || i >= m) throw Error("profile_curvature: index out of range");

  // Window of sorted curvature fields around i; ghost access handles ends
  // (open ends throw WindowExceedsDomain -> reported as InsufficientSamples).
  const int half = k + 1;
  std::vector<double> fmin(2 * half + 1), fmax(2 * half + 1), s(2 * half + 1);
  try {
    for (int o = -half; o <= half; ++o) {
      const auto c = curvatures_at(profile, i + o);
      fmin[o + half] = c.lam_min;
      fmax[o + half] = c.lam_max;
    }
    // Arclength positions of the window samples.
    s[half] = 0.0;
    for (int o = 1; o <= half; ++o) {
      auto seg = [&](int a, int b) {
        const double dx = profile.axis_at(b) - profile.axis_at(a);
        const double dr = profile.sample(b) - profile.sample(a);
        return std::sqrt(dx * dx + dr * dr);
      };
      s[half + o] = s[half + o - 1] + seg(i + o - 1, i + o);
      s[half - o] = s[half - o + 1] - seg(i - o, i - o + 1);
    }
  } catch (const WindowExceedsDomain&) {
    throw InsufficientSamples("profile_curvature: stencil exceeds grid");
  }

  const double r = profile.sample(i);
  if (!(r > 0.0)) throw NonPositiveRadius("profile_curvature: r <= 0");
  const auto c0 = curvatures_at(profile, i);

  std::vector<double> lambda(profile.n);
  {
    const double r1 = profile.deriv1(i);
    const double q = 1.0 + r1 * r1;
    const double lam_ax = -profile.deriv2(i) / std::pow(q, 1.5);
    const double lam_rd = 1.0 / (r * std::sqrt(q));
    lambda[0] = lam_ax;
    for (int a = 1; a < profile.n; ++a) lambda[a] = lam_rd;
  }

  // Iterated centered differences of both sorted fields along arclength.
  std::vector<double> grads;
  grads.reserve(k);
  std::vector<double> gmin = fmin, gmax = fmax, sl = s;
  for (int l = 1; l <= k; ++l) {
    std::vector<double> nmin(gmin.size() - 2), nmax(gmax.size() - 2), ns(sl.size() - 2);
    for (size_t j = 1; j + 1 < gmin.size(); ++j) {
      const double ds = sl[j + 1] - sl[j - 1];
      nmin[j - 1] = (gmin[j + 1] - gmin[j - 1]) / ds;
      nmax[j - 1] = (gmax[j + 1] - gmax[j - 1]) / ds;
      ns[j - 1] = sl[j];
    }
    gmin = std::move(nmin);
    gmax = std::move(nmax);
    sl = std::move(ns);
    const size_t mid = gmin.size() / 2;
    grads.push_back(std::max(std::abs(gmin[mid]), std::abs(gmax[mid])));
  }

  (void)c0;
  return WeingartenData::from_eigenvalues(std::move(lambda), std::move(grads));
}

double sphere_volume_constant(int n) {
  if (n < 2) throw Error("sphere_volume_constant: n must be >= 2");
  return 2.0 * std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n);
}

double ball_volume_constant(int n) {
  if (n < 1) throw Error("ball_volume_constant: n must be >= 1");
  return std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

RadialProfile make_cylinder_profile(double r0, double x0, double x1, int m,
                                    EndCondition ends, int n) {
  RadialProfile p;
  p.n = n;
  p.left = p.right = ends;
  p.axis.resize(m);
  p.radius.assign(m, r0);
  for (int i = 0; i < m; ++i) p.axis[i] = x0 + (x1 - x0) * i / (m - 1);
  return p;
}

RadialProfile make_sphere_profile(double R, int m, int n) {
  RadialProfile p;
  p.n = n;
  p.left = p.right = EndCondition::Capped;
  p.axis.resize(m);
  p.radius.resize(m);
  for (int i = 0; i < m; ++i) {
    const double x = -R + 2.0 * R * i / (m - 1);
    p.axis[i] = x;
    p.radius[i] = std::sqrt(std::max(0.0, R * R - x * x));
  }
  return p;
}

RadialProfile make_sphere_window_profile(double R, double x0, double x1, int m, int n) {
  RadialProfile p;
  p.n = n;
  p.left = p.right = EndCondition::Open;
  p.axis.resize(m);
  p.radius.resize(m);
  for (int i = 0; i < m; ++i) {
    const double x = x0 + (x1 - x0) * i / (m - 1);
    p.axis[i] = x;
    p.radius[i] = std::sqrt(R * R - x * x);
  }
  return p;
}

RadialProfile make_dumbbell_profile(double R, double r_neck, double w, double beta,
                                    int m, int n) {
  // Built in u = r^2 so that the caps close transversally on the axis.
  const double span = w + beta + R;
  RadialProfile p;
  p.n = n;
  p.left = p.right = EndCondition::Capped;
  p.axis.resize(m);
  p.radius.resize(m);
  const double un = r_neck * r_neck;
  const double ub = R * R;
  for (int i = 0; i < m; ++i) {
    const double x = -span + 2.0 * span * i / (m - 1);
    const double a = std::abs(x);
    double u;
    if (a <= w) {
      u = un;
    } else if (a <= w + beta) {
      u = un + (ub - un) * smootherstep((a - w) / beta);
    } else {
      const double d = a - (w + beta);
      u = std::max(0.0, R * R - d * d);
    }
    p.axis[i] = x;
    p.radius[i] = std::sqrt(u);
  }
  return p;
}

RadialProfile make_perturbed_cylinder_profile(double r0, double amp, int k_waves,
                                              double x0, double x1, int m,
                                              EndCondition ends, int n) {
  RadialProfile p;
  p.n = n;
  p.left = p.right = ends;
  p.axis.resize(m);
  p.radius.resize(m);
  for (int i = 0; i < m; ++i) {
    const double x = x0 + (x1 - x0) * i / (m - 1);
    p.axis[i] = x;
    p.radius[i] = r0 * (1.0 + amp * std::cos(2.0 * kPi * k_waves * (x - x0) / (x1 - x0)));
  }
  return p;
}

}  // namespace neckflow
