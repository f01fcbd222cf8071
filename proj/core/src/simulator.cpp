#include "ktmpc/simulator.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>

namespace ktmpc {

ReferenceSchedule ReferenceSchedule::make_timed(std::vector<std::pair<int, Vector>> entries) {
  ReferenceSchedule r;
  r.mode = Mode::timed;
  r.timed = std::move(entries);
  return r;
}

ReferenceSchedule ReferenceSchedule::make_waypoints(std::vector<Vector> points, double switch_radius) {
  ReferenceSchedule r;
  r.mode = Mode::waypoint;
  r.waypoints = std::move(points);
  r.switch_radius = switch_radius;
  return r;
}

void ReferenceSchedule::validate(int output_dim) const {
  if (mode == Mode::timed) {
    if (timed.empty()) throw DimensionError("reference schedule: no entries");
    if (timed.front().first != 0) throw DimensionError("reference schedule: first entry must start at step 0");
    for (std::size_t i = 0; i < timed.size(); ++i) {
      if (timed[i].second.size() != output_dim) throw DimensionError("reference schedule: reference dimension mismatch");
      if (i > 0 && timed[i].first <= timed[i - 1].first)
        throw DimensionError("reference schedule: start steps must be strictly increasing");
    }
  } else {
    if (waypoints.empty()) throw DimensionError("reference schedule: no waypoints");
    if (!(switch_radius > 0.0)) throw DimensionError("reference schedule: switch radius must be positive");
    for (const auto& w : waypoints)
      if (w.size() != output_dim) throw DimensionError("reference schedule: waypoint dimension mismatch");
  }
}

namespace {

double raw_margin(const HPolytope& P, const Vector& x) {
  if (P.rows() == 0) return std::numeric_limits<double>::infinity();
  return (P.offsets - P.normals * x).minCoeff();
}

}  // namespace

SimLog run_closed_loop(const Plant& plant, const KoopmanModel& model, const KtmpcConfig& config,
                       const TighteningSchedule& schedule, const ReferenceSchedule& refs,
                       const SimOptions& options) {
  refs.validate(plant.output_dim());
  if (options.x0.size() != plant.state_dim()) throw DimensionError("simulation: initial state dimension mismatch");
  if (options.X.dim() != plant.state_dim() || options.U.dim() != plant.input_dim())
    throw DimensionError("simulation: raw constraint sets do not match the plant");
  if (model.state_dim() != plant.state_dim() || model.input_dim() != plant.input_dim())
    throw DimensionError("simulation: model and plant dimensions differ");

  const bool lifted_plant = plant.has_exact_lifting();
  std::optional<KoopmanModel> truth;
  if (lifted_plant) truth = plant.exact_model();
  if (lifted_plant && truth->lifted_dim() != model.lifted_dim())
    throw DimensionError("simulation: model lifting differs from the plant's exact lifting");
  const Zonotope* W = options.injected ? &options.injected->W : nullptr;
  const Zonotope* V = options.injected ? &options.injected->V : nullptr;

  std::mt19937_64 rng(options.seed);
  KtmpcController ctrl(model, config, schedule);
  SimLog log;

  Vector z_true = lifted_plant ? truth->lift(options.x0) : Vector();
  Vector x_true = options.x0;
  std::size_t wp = 0;
  std::size_t timed_idx = 0;

  for (int k = 0; k < options.steps; ++k) {
    SimRecord rec;
    rec.k = k;
    if (lifted_plant) {
      rec.x = truth->decode(z_true);
      if (V && V->order() > 0) {
        rec.v = sample(*V, rng);
        rec.x += rec.v;
      }
      rec.z = z_true;
    } else {
      rec.x = x_true;
      rec.z = model.lift(x_true);
    }
    rec.y = plant.output(rec.x);

    if (refs.mode == ReferenceSchedule::Mode::timed) {
      while (timed_idx + 1 < refs.timed.size() && refs.timed[timed_idx + 1].first <= k) ++timed_idx;
      rec.segment = static_cast<int>(timed_idx);
      rec.y_t = refs.timed[timed_idx].second;
    } else {
      while (wp < refs.waypoints.size() && (rec.y - refs.waypoints[wp]).norm() < refs.switch_radius) {
        log.waypoint_steps.push_back(k);
        ++wp;
      }
      if (wp == refs.waypoints.size()) {
        log.all_waypoints_reached = true;
        if (options.stop_when_done) break;
        wp = refs.waypoints.size() - 1;
      }
      rec.segment = static_cast<int>(wp);
      rec.y_t = refs.waypoints[wp];
    }

    if (options.check_candidate && ctrl.last()) {
      const auto cand = shifted_candidate(*ctrl.last(), model, config, schedule, rec.z, rec.y_t);
      rec.margin_min = cand.min_margin;
      rec.candidate_terminal_residual = cand.terminal_residual;
    }

    const SteadyTarget& offline = ctrl.offline_target(rec.y_t);
    try {
      ctrl.step(rec.z, rec.y_t);
    } catch (const InfeasibleProblem&) {
      rec.feasible = false;
      log.records.push_back(std::move(rec));
      throw InfeasibleAtStep(k, std::move(log));
    }
    const KtmpcSolution& sol = *ctrl.last();
    const LyapunovDiag diag = diagnostics(sol, offline, config);
    rec.u = sol.u_bar.front();
    rec.y_s = sol.target.y_s;
    rec.u_s = sol.target.u_s;
    rec.z_s = sol.target.z_s;
    rec.y_sr = offline.y_s;
    rec.J_N = sol.total_cost;
    rec.V1 = diag.V1;
    rec.V2 = diag.V2;
    rec.J_eq = offline.offset_cost;
    rec.kkt_max = sol.kkt.max();
    rec.segment_gap = segment_inequality_gap(rec.y_s, rec.y_sr, rec.y_t, config.s, options.sigma_samples);
    rec.constraint_margin = std::min(raw_margin(options.X, rec.x), raw_margin(options.U, rec.u));

    if (lifted_plant) {
      if (W && W->order() > 0) rec.w = sample(*W, rng);
      z_true = truth->predict(z_true, rec.u);
      if (rec.w.size() > 0) z_true += rec.w;
    } else {
      x_true = plant.f(x_true, rec.u);
    }
    log.records.push_back(std::move(rec));
  }
  return log;
}

TrajectoryData generate_training_data(const Plant& plant, int n_traj, int traj_len,
                                      const Zonotope& input_box, const Zonotope& state_box,
                                      unsigned long long seed) {
  if (n_traj < 1 || traj_len < 1) throw DimensionError("generate_training_data: counts must be positive");
  if (input_box.dim() != plant.input_dim() || state_box.dim() != plant.state_dim())
    throw DimensionError("generate_training_data: box dimensions do not match the plant");
  std::mt19937_64 rng(seed);
  TrajectoryData data;
  data.trajectories.reserve(n_traj);
  for (int i = 0; i < n_traj; ++i) {
    Trajectory t;
    t.states.reserve(traj_len + 1);
    t.inputs.reserve(traj_len);
    t.states.push_back(sample(state_box, rng));
    for (int k = 0; k < traj_len; ++k) {
      t.inputs.push_back(sample(input_box, rng));
      t.states.push_back(plant.f(t.states.back(), t.inputs.back()));
    }
    data.trajectories.push_back(std::move(t));
  }
  return data;
}

TrackingMetrics tracking_metrics(const SimLog& log, int settle_window) {
  if (log.records.empty()) throw InputError("tracking_metrics: empty log");
  if (settle_window < 1) throw DimensionError("tracking_metrics: settle window must be positive");
  TrackingMetrics m;
  double worst_violation = 0.0;
  std::size_t begin = 0;
  while (begin < log.records.size()) {
    std::size_t end = begin;
    while (end < log.records.size() && log.records[end].segment == log.records[begin].segment) ++end;
    const std::size_t first = end - std::min<std::size_t>(end - begin, settle_window);
    double sum = 0.0;
    for (std::size_t k = first; k < end; ++k) sum += (log.records[k].y - log.records[k].y_sr).norm();
    m.segment_errors.push_back(sum / static_cast<double>(end - first));
    begin = end;
  }
  for (const auto& r : log.records) {
    worst_violation = std::max(worst_violation, -r.constraint_margin);
    if (r.z_s.size() == r.z.size()) {
      const double d = (r.z - r.z_s).squaredNorm();
      if (d > 1e-12) m.beta_u1_estimate = std::max(m.beta_u1_estimate, r.V1 / d);
    }
  }
  m.max_constraint_violation = worst_violation;
  m.final_error = m.segment_errors.back();
  double total = 0.0;
  for (double e : m.segment_errors) total += e;
  m.mean_settled_error = total / static_cast<double>(m.segment_errors.size());
  int prev = 0;
  for (int s : log.waypoint_steps) {
    m.steps_to_waypoints.push_back(s - prev);
    prev = s;
  }
  return m;
}

unsigned long long derive_seed(unsigned long long master_seed, unsigned long long run_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(run_index), static_cast<std::uint32_t>(run_index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void header_block(std::ostream& out, const char* prefix, long n) {
  for (long i = 0; i < n; ++i) out << ',' << prefix << i;
}

void value_block(std::ostream& out, const Vector& v, long n) {
  for (long i = 0; i < n; ++i) out << ',' << (i < v.size() ? fmt(v(i)) : std::string("nan"));
}

}  // namespace

void write_sim_csv(const SimLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  const long nx = log.records.empty() ? 0 : log.records.front().x.size();
  const long ny = log.records.empty() ? 0 : log.records.front().y.size();
  long nu = 0;
  for (const auto& r : log.records) nu = std::max<long>(nu, r.u.size());
  out << 'k';
  header_block(out, "x_", nx);
  header_block(out, "u_", nu);
  header_block(out, "y_", ny);
  header_block(out, "yt_", ny);
  header_block(out, "ys_", ny);
  header_block(out, "us_", nu);
  out << ",JN,V1,V2,feasible,margin_min\n";
  for (const auto& r : log.records) {
    out << r.k;
    value_block(out, r.x, nx);
    value_block(out, r.u, nu);
    value_block(out, r.y, ny);
    value_block(out, r.y_t, ny);
    value_block(out, r.y_s, ny);
    value_block(out, r.u_s, nu);
    out << ',' << fmt(r.J_N) << ',' << fmt(r.V1) << ',' << fmt(r.V2) << ',' << (r.feasible ? 1 : 0) << ','
        << fmt(r.margin_min) << '\n';
  }
}

}  // namespace ktmpc
