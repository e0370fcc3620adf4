#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "neckflow/flow_types.hpp"
#include "neckflow/neck_detect.hpp"

namespace neckflow {

struct FlowConfig {
  double cfl = 0.2;
  double t_max = 1.0;
  int snapshot_capacity = 256;
  int check_interval = 16;        // detection cadence in steps
  int snapshots_per_window = 8;   // history density per backward window
  double curvature_ceiling = 1e6;
  double radius_floor_cells = 1.0;  // interior underflow threshold in grid cells
  double neck_window_eps = 0.3;     // pointwise cylindricality bound for the surgery window
};

struct SurgeryConfig {
  double min_neck_length = 6.0;  // in r^ units
  double cap_length = 2.0;       // in r^ units
};

/// One explicit/semi-implicit step of r_t = r_xx/(1+r_x^2) - (n-1)/r
/// (diffusion implicit, reaction explicit). Capped profiles advance in
/// u = r^2, where the cap tips cross the axis transversally; samples whose
/// u drops below zero are removed (the tips recede).
FlowState step(const FlowState& state, double dt);

/// dt = cfl * min(h^2, 1/max|W|^2); |W| is the largest principal curvature
/// magnitude, evaluated through u = r^2 so cap tips stay regular.
double adaptive_dt(const FlowState& state, double cfl = 0.2);

/// Largest principal curvature magnitude over the profile.
double max_curvature(const RadialProfile& profile);

/// Pointwise min of lambda_1 + lambda_2 over the profile (two-convexity).
double min_two_convexity(const RadialProfile& profile);

enum class EventKind { NeckDetected, Extinction, CurvatureCeiling, TimeLimit, RadiusUnderflow };
std::string to_string(EventKind k);

struct Event {
  EventKind kind = EventKind::TimeLimit;
  double time = 0.0;
  DetectionResult detection;  // populated for NeckDetected
};

/// Advance the flow, maintaining history snapshots per the spacing policy and
/// running the detection scan each check interval; returns the first event.
/// An optional observer sees every accepted step (for series output).
Event run_until_event(FlowState& state, FlowHistory& history, const NeckParams& detection,
                      const FlowConfig& config,
                      const std::function<void(const FlowState&)>& observer = {});

/// Standard surgery at a certified candidate: removes the central portion of
/// the neck, glues C^2-matched convex caps decreasing monotonically to the
/// axis within cap_length * r^ of each cut, and records the surgery. The
/// returned profile carries the two (or more) pieces separated by zero-radius
/// markers; split_components partitions them.
std::pair<FlowState, SurgeryRecord> perform_surgery(const FlowState& state,
                                                    const NeckCandidate& candidate,
                                                    const SurgeryConfig& config,
                                                    const FlowConfig& flow_config);

/// One FlowState per maximal connected sub-profile, with its own end
/// conditions (axis closures become capped ends).
std::vector<FlowState> split_components(const FlowState& state);

enum class TerminalLabel { Sphere, TubeS1, Unresolved };
std::string to_string(TerminalLabel label);

struct ComponentOutcome {
  FlowState final_state;
  Event terminal;
  double min_two_convex = 0.0;  // min of lambda_1+lambda_2 across recorded history
  bool started_capped_both = false;
};

/// Sphere: both ends capped, two-convex throughout recorded history, reached
/// extinction. TubeS1 is decided by the neck-extension machinery on periodic
/// components (see neck_algebra). Everything else reports Unresolved.
TerminalLabel terminal_classify(const ComponentOutcome& outcome);

}  // namespace neckflow
