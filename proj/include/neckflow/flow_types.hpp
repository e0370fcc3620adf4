#pragma once

#include <array>
#include <deque>
#include <vector>

#include "neckflow/radial_profile.hpp"

namespace neckflow {

struct FlowState {
  RadialProfile profile;
  double time = 0.0;
  long step_count = 0;
};

/// Rotationally symmetric convex cap glued at a surgery cut: a quartic in
/// u = r^2 over the axis coordinate, C^2-matched at the cut and closing
/// transversally on the axis at the tip.
struct CapParams {
  double cut_x = 0.0;
  double tip_x = 0.0;
  std::array<double, 5> u_poly{};  // u(x) = sum_i c_i (x - cut_x)^i
};

struct CurvatureNeckCertificate {
  int center = -1;
  double rhat = 0.0;
  double epsilon = 0.0;
  int k = 0;
  double L = 0.0;
  double cylindrical_residual = 0.0;
  double parallel_residual = 0.0;
  bool pass = false;
};

struct SurgeryRecord {
  double time = 0.0;
  double region_lo = 0.0, region_hi = 0.0;  // axis interval removed
  CapParams left_cap, right_cap;
  CurvatureNeckCertificate pre_neck_certificate;
};

/// Time-ordered snapshots (ring buffer) plus surgery records; supports the
/// backward parabolic neighborhood queries of the detection module.
struct FlowHistory {
  int capacity = 256;
  std::deque<FlowState> snapshots;
  std::vector<SurgeryRecord> surgeries;

  void append(FlowState state);
  const FlowState& latest() const;
  /// Latest snapshot with time <= t (plus tolerance).
  const FlowState& at_or_before(double t) const;
};

}  // namespace neckflow
