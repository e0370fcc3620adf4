#pragma once

#include <string>
#include <vector>

namespace neckflow {

enum class EndCondition { Capped, Periodic, Open };

std::string to_string(EndCondition e);
EndCondition end_condition_from_string(const std::string& s);

/// Rotationally symmetric hypersurface in R^{n+1}: a sampled radius function
/// over an axis interval. Cross-sections are round S^{n-1} of radius r(x).
struct RadialProfile {
  int n = 3;                        // hypersurface dimension (>= 3)
  std::vector<double> axis;         // strictly increasing, length >= 16
  std::vector<double> radius;       // > 0 at interior samples
  EndCondition left = EndCondition::Open;
  EndCondition right = EndCondition::Open;

  int sample_count() const { return static_cast<int>(axis.size()); }
  bool periodic() const { return left == EndCondition::Periodic; }
  /// Period of a periodic profile (axis span; the seam sample is duplicated).
  double period() const { return axis.back() - axis.front(); }

  /// Throws on violated invariants (see module contract).
  void validate() const;

  /// Sample with end-condition-consistent ghost extension. Periodic indices
  /// wrap with period m-1; capped ends reflect oddly through the tip sample;
  /// open ends throw WindowExceedsDomain.
  double sample(int i) const;
  double axis_at(int i) const;

  /// First/second derivative at sample i by nonuniform centered differences.
  double deriv1(int i) const;
  double deriv2(int i) const;

  /// Cumulative chordal arclength of the profile curve (size m).
  std::vector<double> arclength() const;

  /// Enclosed (n+1)-volume by trapezoidal quadrature of omega_n * r(x)^n.
  double enclosed_volume() const;

  /// Uniformly rescale the hypersurface by c > 0 (axis and radius).
  RadialProfile scaled(double c) const;
};

/// Per-point shape operator summary: sorted principal curvatures, mean
/// curvature, and discrete derivative norms |grad^l W| along arclength.
struct WeingartenData {
  std::vector<double> eigenvalues;  // ascending, size n
  double H = 0.0;                   // sum of eigenvalues (by construction)
  std::vector<double> grad_norms;   // |grad^l W| for l = 1..k

  static WeingartenData from_eigenvalues(std::vector<double> lambda,
                                         std::vector<double> grads = {});
};

/// Principal curvatures of a rotational profile at sample i:
/// lambda_axial = -r''/(1+r'^2)^{3/2} (once) and
/// lambda_round = 1/(r sqrt(1+r'^2)) (multiplicity n-1), plus centered
/// arclength difference norms of the sorted curvature fields up to order k.
WeingartenData profile_curvature(const RadialProfile& profile, int i, int k);

/// Volume of the unit (n-1)-sphere, sigma_{n-1} = 2 pi^{n/2} / Gamma(n/2).
double sphere_volume_constant(int n);

/// Volume of the unit n-ball, omega_n = pi^{n/2} / Gamma(n/2 + 1).
double ball_volume_constant(int n);

// --- analytic profile families used by scenarios and tests ---

RadialProfile make_cylinder_profile(double r0, double x0, double x1, int m,
                                    EndCondition ends = EndCondition::Open, int n = 3);

/// Full sphere of radius R with capped ends (tips at +-R carry r = 0).
RadialProfile make_sphere_profile(double R, int m, int n = 3);

/// Open window of the sphere profile over [x0, x1] strictly inside (-R, R).
RadialProfile make_sphere_window_profile(double R, double x0, double x1, int m, int n = 3);

/// Two bulbs of radius R joined by a plateau of radius r_neck over |x| <= w,
/// blended over width beta; capped ends.
RadialProfile make_dumbbell_profile(double R, double r_neck, double w, double beta,
                                    int m, int n = 3);

/// r(x) = r0 (1 + amp cos(2 pi k (x - x0)/(x1 - x0))) with the chosen ends.
RadialProfile make_perturbed_cylinder_profile(double r0, double amp, int k_waves,
                                              double x0, double x1, int m,
                                              EndCondition ends, int n = 3);

}  // namespace neckflow
