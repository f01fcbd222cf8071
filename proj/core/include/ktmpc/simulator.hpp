#pragma once

#include "ktmpc/controller.hpp"
#include "ktmpc/errors.hpp"
#include "ktmpc/plant.hpp"

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ktmpc {

struct ReferenceSchedule {
  enum class Mode { timed, waypoint };

  Mode mode = Mode::timed;
  std::vector<std::pair<int, Vector>> timed;  // (start_step, y_t), start steps strictly increasing
  std::vector<Vector> waypoints;
  double switch_radius = 0.35;

  static ReferenceSchedule constant(const Vector& y_t) { return {Mode::timed, {{0, y_t}}, {}, 0.35}; }
  static ReferenceSchedule make_timed(std::vector<std::pair<int, Vector>> entries);
  static ReferenceSchedule make_waypoints(std::vector<Vector> points, double switch_radius);

  void validate(int output_dim) const;
};

struct SimRecord {
  int k = 0;
  Vector x;  // measured state
  Vector z;  // lifted state handed to the controller
  Vector u;
  Vector y;
  Vector y_t;
  Vector y_s;    // y_s* of the online problem
  Vector u_s;
  Vector z_s;
  Vector y_sr;   // offline best reachable output
  Vector w;      // injected disturbances (empty when none)
  Vector v;
  double J_N = 0.0;
  double V1 = 0.0;
  double V2 = 0.0;
  double J_eq = 0.0;
  bool feasible = true;
  int segment = 0;
  /// Minimum inequality margin of the shifted candidate (NaN when no previous step).
  double margin_min = std::numeric_limits<double>::quiet_NaN();
  double candidate_terminal_residual = std::numeric_limits<double>::quiet_NaN();
  /// Minimum of b - a'x over the raw state and input constraints.
  double constraint_margin = 0.0;
  /// Worst slack of the segment inequality over the configured samples.
  double segment_gap = 0.0;
  double kkt_max = 0.0;
};

struct SimLog {
  std::vector<SimRecord> records;
  std::vector<int> waypoint_steps;  // step at which each waypoint switch fired
  bool all_waypoints_reached = false;
};

class InfeasibleAtStep : public Error {
 public:
  InfeasibleAtStep(int step, SimLog log)
      : Error("closed loop infeasible at step " + std::to_string(step)), step(step), log(std::move(log)) {}
  int step;
  SimLog log;
};

struct SimOptions {
  int steps = 100;
  unsigned long long seed = 0;
  Vector x0;
  /// Raw constraint sets used for the logged margins.
  HPolytope X;
  HPolytope U;
  /// Disturbances injected into the plant; none when empty.
  std::optional<DisturbanceModel> injected;
  std::vector<double> sigma_samples{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  bool check_candidate = true;
  /// Waypoint mode: stop once the last waypoint is reached.
  bool stop_when_done = true;
};

/// Closed loop under the receding-horizon law. Plants with an exact lifting
/// carry the lifted state z and measure x = C_x z + v; the controller starts
/// its prediction at z. Other plants are lifted from the measured state.
SimLog run_closed_loop(const Plant& plant, const KoopmanModel& model, const KtmpcConfig& config,
                       const TighteningSchedule& schedule, const ReferenceSchedule& refs,
                       const SimOptions& options);

TrajectoryData generate_training_data(const Plant& plant, int n_traj, int traj_len,
                                      const Zonotope& input_box, const Zonotope& state_box,
                                      unsigned long long seed);

struct TrackingMetrics {
  double final_error = 0.0;         // last segment
  double mean_settled_error = 0.0;  // mean over segments
  std::vector<double> segment_errors;
  double max_constraint_violation = 0.0;
  std::vector<int> steps_to_waypoints;
  /// max V1 / |z - z_s*|^2 over steps with nonzero denominator.
  double beta_u1_estimate = 0.0;
};

/// Settled error: mean of |y - y_sr| over the last `settle_window` steps of each reference segment.
TrackingMetrics tracking_metrics(const SimLog& log, int settle_window);

/// Independent per-run seed derived from a master seed and a run index.
unsigned long long derive_seed(unsigned long long master_seed, unsigned long long run_index);

void write_sim_csv(const SimLog& log, const std::filesystem::path& path);

}  // namespace ktmpc
