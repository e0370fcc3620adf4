#pragma once

#include <optional>
#include <string>
#include <vector>

#include "neckflow/cylinder_graph.hpp"
#include "neckflow/flow_types.hpp"
#include "neckflow/radial_profile.hpp"

namespace neckflow {

struct NeckParams {
  double epsilon = 0.1;
  int k = 2;
  double L = 2.0;
  double theta = 0.5;   // backward time depth in r^^2 units
  double H0 = 1.0;      // curvature trigger
  double eta0 = 0.04;   // lambda_1 / H trigger
  bool second_pass = false;  // optional re-certification at (L-1, theta/2)

  void validate() const;
};

struct CylindricalCheck {
  bool pass = false;
  double deviation = 0.0;
};

/// Eq-style pointwise check: rescale so r^ = (n-1)/H equals 1 and compare the
/// sorted eigenvalues against (0, 1, ..., 1) componentwise.
CylindricalCheck is_eps_cylindrical(const WeingartenData& w, double epsilon);

struct ParallelCheck {
  bool pass = false;
  double residual = 0.0;
};

/// r^-normalized derivative bounds: |grad^l W| r^^{l+1} <= epsilon, 1 <= l <= k.
ParallelCheck is_eps_k_parallel(const WeingartenData& w, double epsilon, int k);

/// Curvature-neck check over the geodesic ball B_{L r^}(p), all quantities
/// normalized at the central r^.
CurvatureNeckCertificate is_curvature_neck(const RadialProfile& profile, int p,
                                           const NeckParams& params);

struct HypersurfaceNeckCertificate {
  double epsilon = 0.0;
  int k = 0;
  double conformal_residual = 0.0;
  double conformal_deriv_residual = 0.0;
  double cylindrical_residual = 0.0;  // height-dependent radius normalization
  double parallel_residual = 0.0;
  double log_radius_residual = 0.0;   // |(d/dz)^j log r(z)|, 1 <= j <= k
  bool pass = false;
};

HypersurfaceNeckCertificate is_hypersurface_neck(const CylinderGraph& graph,
                                                 const NeckParams& params);

struct ParabolicNeighborhood {
  int center_index = -1;
  double center_time = 0.0;
  double rhat = 0.0;
  std::vector<int> spatial_indices;
  double t_lo = 0.0, t_hi = 0.0;
  std::vector<int> snapshot_refs;  // indices into history.snapshots
};

ParabolicNeighborhood backward_parabolic_neighborhood(const FlowHistory& history, int p,
                                                      double t, const NeckParams& params);

struct ShrinkingCheck {
  bool pass = false;
  double worst_cylindrical = 0.0;
  double worst_parallel = 0.0;
  double radius_law_residual = 0.0;
};

/// Per-slice curvature neck across the backward window plus the backward
/// shrinking-cylinder radius law within relative tolerance epsilon.
ShrinkingCheck is_shrinking_curvature_neck(const FlowHistory& history,
                                           const ParabolicNeighborhood& nbhd,
                                           const NeckParams& params);

struct NeckCandidate {
  int index = -1;
  double H = 0.0;
  double lambda1_over_H = 0.0;
  CurvatureNeckCertificate certificate;
  ShrinkingCheck shrinking;
  bool certified = false;      // curvature neck now + shrinking check passed
  std::string exclusion;       // nonempty for excluded candidates
};

struct DetectionResult {
  std::vector<NeckCandidate> candidates;  // surgery-free, deduplicated, H-descending
  std::vector<NeckCandidate> excluded;    // ND2/coverage exclusions, annotated
};

DetectionResult detect_neck_points(const FlowState& state, const FlowHistory& history,
                                   const NeckParams& params);

}  // namespace neckflow
