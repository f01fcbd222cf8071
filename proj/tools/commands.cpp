#include "commands.hpp"

#include "scenario.hpp"

#include <ktmpc/errors.hpp>
#include <ktmpc/model_io.hpp>
#include <ktmpc/tightening.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

namespace ktmpc::cli {

using nlohmann::json;

namespace {

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const InfeasibleAtStep& e) {
    err << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const EmptyTightenedSet& e) {
    err << "error: " << e.what() << '\n';
    return kEmptyTightenedSet;
  } catch (const UnderdeterminedFit& e) {
    err << "error: " << e.what() << '\n';
    return kFitFailure;
  } catch (const InfeasibleProblem& e) {
    err << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const InfeasibleSteadyState& e) {
    err << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

json to_json(const HPolytope& p) { return {{"normals", to_json(p.normals)}, {"offsets", to_json(p.offsets)}}; }
json to_json(const Zonotope& z) { return {{"center", to_json(z.center)}, {"generators", to_json(z.generators)}}; }

std::string fmt_vec(const Vector& v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << '[';
  for (int i = 0; i < v.size(); ++i) ss << (i ? ", " : "") << v(i);
  ss << ']';
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw InputError("cannot write '" + path.string() + "'");
  f << text;
}

// Held-out prediction error of C_x z against measured states, over `horizon` steps.
std::optional<double> prediction_error(const KoopmanModel& m, const std::vector<Trajectory>& trajs, int horizon) {
  double sum = 0.0;
  long count = 0;
  for (const auto& t : trajs) {
    for (std::size_t k = 0; k + horizon <= t.inputs.size(); ++k) {
      Vector z = m.lift(t.states[k]);
      for (int i = 0; i < horizon; ++i) z = m.predict(z, t.inputs[k + i]);
      sum += (m.decode(z) - t.states[k + horizon]).norm();
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

TighteningSchedule prepare(Scenario& s, GainResult& gain) {
  gain = synthesize(s);
  return tighten_constraints(s.X, s.U, s.disturbance, s.model->A(), s.model->B(), gain.K, s.model->C_x(),
                             s.config.N);
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

struct RunOutcome {
  unsigned long long seed = 0;
  SimLog log;
  std::optional<int> infeasible_step;
};

RunOutcome simulate_one(const Scenario& s, const TighteningSchedule& schedule, unsigned long long seed) {
  SimOptions o;
  o.steps = s.steps;
  o.seed = seed;
  o.x0 = s.initial_state;
  o.X = s.X;
  o.U = s.U;
  if (s.inject) o.injected = s.disturbance;
  RunOutcome r;
  r.seed = seed;
  try {
    r.log = run_closed_loop(*s.plant, *s.model, s.config, schedule, s.references, o);
  } catch (InfeasibleAtStep& e) {
    r.log = std::move(e.log);
    r.infeasible_step = e.step;
  }
  return r;
}

json metrics_json(const Scenario& s, const GainResult& gain, const RunOutcome& r, bool deterministic) {
  json m;
  m["seed"] = r.seed;
  m["steps_run"] = r.log.records.size();
  m["feasible"] = !r.infeasible_step.has_value();
  m["infeasible_step"] = r.infeasible_step ? json(*r.infeasible_step) : json(nullptr);
  m["spectral_radius_AK"] = gain.spectral_radius_AK;
  if (!r.log.records.empty()) {
    const TrackingMetrics t = tracking_metrics(r.log, s.settle_window);
    m["final_error"] = t.final_error;
    m["mean_settled_error"] = t.mean_settled_error;
    m["segment_errors"] = t.segment_errors;
    m["max_constraint_violation"] = t.max_constraint_violation;
    m["steps_to_waypoints"] = t.steps_to_waypoints;
    m["beta_u1_estimate"] = t.beta_u1_estimate;
    const double bound = 0.5 * (1.0 + std::sqrt(5.0)) * Eigen::SelfAdjointEigenSolver<Matrix>(s.config.Q).eigenvalues().minCoeff();
    m["beta_u1_bound"] = bound;
    m["beta_u1_check"] = t.beta_u1_estimate <= bound ? "pass" : "fail";
    double min_margin = std::numeric_limits<double>::infinity();
    double min_v2 = std::numeric_limits<double>::infinity();
    for (const auto& rec : r.log.records) {
      if (!std::isnan(rec.margin_min)) min_margin = std::min(min_margin, rec.margin_min);
      if (rec.feasible) min_v2 = std::min(min_v2, rec.V2);
    }
    m["min_candidate_margin"] = std::isfinite(min_margin) ? json(min_margin) : json(nullptr);
    m["min_V2"] = std::isfinite(min_v2) ? json(min_v2) : json(nullptr);
  }
  if (s.references.mode == ReferenceSchedule::Mode::waypoint)
    m["all_waypoints_reached"] = r.log.all_waypoints_reached;
  if (!deterministic) m["timestamp"] = timestamp();
  return m;
}

std::pair<unsigned long long, unsigned long long> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw InputError("--seeds: expected a..b");
  try {
    const auto a = std::stoull(text.substr(0, dots));
    const auto b = std::stoull(text.substr(dots + 2));
    if (b < a) throw InputError("--seeds: empty range");
    return {a, b};
  } catch (const std::logic_error&) {
    throw InputError("--seeds: expected a..b with nonnegative integers");
  }
}

}  // namespace

int cmd_fit(const FitOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!std::filesystem::exists(opts.data_csv))
      throw InputError("data file '" + opts.data_csv.string() + "' does not exist");
    if (!std::filesystem::exists(opts.lifting_json))
      throw InputError("lifting file '" + opts.lifting_json.string() + "' does not exist");
    const TrajectoryData data = read_trajectory_csv(opts.data_csv);
    data.validate();
    json lj = json::parse(read_text_file(opts.lifting_json));
    if (!lj.contains("state_dim")) lj["state_dim"] = data.state_dim();
    Matrix C = Matrix::Identity(data.state_dim(), data.state_dim());
    if (lj.contains("output_matrix")) {
      const auto& rows = lj.at("output_matrix");
      C.resize(static_cast<int>(rows.size()), data.state_dim());
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (int c = 0; c < data.state_dim(); ++c) C(static_cast<int>(i), c) = rows.at(i).at(c).get<double>();
    }
    const Lifting lifting = lifting_from_json(lj.dump());

    const std::size_t n = data.trajectories.size();
    std::size_t hold = n / 10;
    if (hold == 0 && n >= 2) hold = 1;
    TrajectoryData train;
    train.trajectories.assign(data.trajectories.begin(), data.trajectories.end() - static_cast<long>(hold));
    const std::vector<Trajectory> test(data.trajectories.end() - static_cast<long>(hold), data.trajectories.end());

    const KoopmanModel model = fit_edmd(train, lifting, C, opts.ridge);
    if (opts.out_model.has_parent_path()) std::filesystem::create_directories(opts.out_model.parent_path());
    save_model(model, opts.out_model);

    out << "fitted n_z = " << model.lifted_dim() << " on " << train.transitions() << " transitions\n";
    const auto e1 = prediction_error(model, test, 1);
    const auto e10 = prediction_error(model, test, 10);
    out << "held-out trajectories: " << hold << '\n';
    out << "one-step mean prediction error: " << (e1 ? std::to_string(*e1) : "n/a") << '\n';
    out << "10-step mean prediction error: " << (e10 ? std::to_string(*e10) : "n/a") << '\n';
    out << "model written to " << opts.out_model.string() << '\n';
    return kOk;
  });
}

int cmd_tighten(const std::filesystem::path& scenario, const std::filesystem::path& out_json,
                std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Scenario s = load_scenario(scenario);
    GainResult gain;
    const TighteningSchedule schedule = prepare(s, gain);
    json j;
    j["N"] = schedule.horizon();
    j["K"] = to_json(gain.K);
    j["spectral_radius_AK"] = gain.spectral_radius_AK;
    for (const auto& p : schedule.state_sets) j["state_sets"].push_back(to_json(p));
    for (const auto& p : schedule.input_sets) j["input_sets"].push_back(to_json(p));
    j["error_sets"] = json::array();
    for (const auto& z : schedule.error_sets) j["error_sets"].push_back(to_json(z));
    write_text(out_json, j.dump(2) + "\n");
    out << "tightened " << schedule.horizon() + 1 << " state and input sets, spectral radius of A+BK "
        << gain.spectral_radius_AK << '\n';
    out << "schedule written to " << out_json.string() << '\n';
    return kOk;
  });
}

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Scenario s = load_scenario(opts.scenario);
    if (!s.plant) throw InputError("simulate: plant has no dynamics");
    if (opts.out_dir) s.output_dir = *opts.out_dir;
    GainResult gain;
    const TighteningSchedule schedule = prepare(s, gain);
    std::filesystem::create_directories(s.output_dir);

    std::vector<unsigned long long> seeds;
    if (opts.seeds) {
      for (auto v = opts.seeds->first; v <= opts.seeds->second; ++v) seeds.push_back(v);
    } else {
      seeds.push_back(opts.seed.value_or(s.seed));
    }

    std::vector<RunOutcome> results(seeds.size());
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t begin = 0; begin < seeds.size(); begin += workers) {
      std::vector<std::future<RunOutcome>> batch;
      const std::size_t end = std::min(seeds.size(), begin + workers);
      for (std::size_t i = begin; i < end; ++i)
        batch.push_back(std::async(std::launch::async, simulate_one, std::cref(s), std::cref(schedule), seeds[i]));
      for (std::size_t i = begin; i < end; ++i) results[i] = batch[i - begin].get();
    }

    bool any_infeasible = false;
    json summary = json::array();
    for (const auto& r : results) {
      const bool multi = seeds.size() > 1;
      const std::string suffix = multi ? "_seed" + std::to_string(r.seed) : "";
      write_sim_csv(r.log, s.output_dir / ("sim" + suffix + ".csv"));
      const json m = metrics_json(s, gain, r, opts.deterministic);
      write_text(s.output_dir / ("metrics" + suffix + ".json"), m.dump(2) + "\n");
      summary.push_back(m);
      if (r.infeasible_step) {
        any_infeasible = true;
        err << "error: closed loop infeasible at step " << *r.infeasible_step << " (seed " << r.seed << ")\n";
      }
      out << "seed " << r.seed << ": " << r.log.records.size() << " steps";
      if (m.contains("final_error")) out << ", final error " << m["final_error"].get<double>();
      if (m.contains("all_waypoints_reached"))
        out << ", waypoints reached: " << (m["all_waypoints_reached"].get<bool>() ? "all" : "not all");
      out << '\n';
    }
    if (seeds.size() > 1) write_text(s.output_dir / "summary.json", summary.dump(2) + "\n");
    out << "output written to " << s.output_dir.string() << '\n';
    return any_infeasible ? kInfeasible : kOk;
  });
}

int cmd_steady(const std::filesystem::path& scenario, const std::string& y_t, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    Scenario s = load_scenario(scenario);
    Vector yt(s.output_matrix.rows());
    {
      std::stringstream ss(y_t);
      std::string cell;
      int i = 0;
      while (std::getline(ss, cell, ',')) {
        if (i >= yt.size()) throw InputError("--yt: too many components");
        try {
          yt(i++) = std::stod(cell);
        } catch (const std::logic_error&) {
          throw InputError("--yt: cannot parse '" + cell + "'");
        }
      }
      if (i != yt.size()) throw InputError("--yt: expected " + std::to_string(yt.size()) + " components");
    }
    GainResult gain;
    const TighteningSchedule schedule = prepare(s, gain);
    const SteadyTarget t = solve_steady_offline(*s.model, schedule, yt, s.config.s);
    out << std::setprecision(10);
    out << "koopman steady target\n";
    out << "  y_s = " << fmt_vec(t.y_s) << "\n  u_s = " << fmt_vec(t.u_s) << "\n  z_s = " << fmt_vec(t.z_s) << '\n';
    out << "  J_eq = " << t.offset_cost << '\n';
    const Vector x_s = s.model->decode(t.z_s);
    out << "  |z_s - psi(C_x z_s)|_inf = " << (t.z_s - s.model->lift(x_s)).lpNorm<Eigen::Infinity>() << '\n';

    if (!s.plant) {
      out << "nonlinear steady target: not available for this plant\n";
      return kOk;
    }
    SteadyGrid grid;
    if (s.steady_grid) {
      grid = *s.steady_grid;
    } else {
      const auto [xlo, xhi] = bounding_box(s.X);
      const auto [ulo, uhi] = bounding_box(s.U);
      grid.x_lower = xlo;
      grid.x_upper = xhi;
      grid.u_lower = ulo;
      grid.u_upper = uhi;
      if (s.plant->has_exact_lifting()) {
        grid.points.clear();
        Vector lo(xlo.size() + ulo.size()), hi(lo.size());
        lo << xlo, ulo;
        hi << xhi, uhi;
        for (int i = 0; i < lo.size(); ++i) grid.points.push_back(static_cast<int>(std::lround((hi(i) - lo(i)) / 0.05)) + 1);
      } else {
        grid.points = {21, 21, 9, 5, 5};
      }
    }
    const NonlinearSteady ns = solve_steady_nonlinear(*s.plant, yt, s.config.s, grid);
    out << "nonlinear steady target (grid)\n";
    out << "  y_sr = " << fmt_vec(ns.y_sr) << "\n  u_sr = " << fmt_vec(ns.u_sr) << "\n  x_sr = " << fmt_vec(ns.x_sr)
        << '\n';
    out << "  J_eq = " << ns.J_eq << '\n';
    out << "output gap |y_s - y_sr| = " << (t.y_s - ns.y_sr).norm() << '\n';
    return kOk;
  });
}

int cmd_generate(const std::filesystem::path& scenario, const std::filesystem::path& out_csv,
                 std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const TrajectoryData data = generate_from_scenario(scenario);
    if (out_csv.has_parent_path()) std::filesystem::create_directories(out_csv.parent_path());
    write_trajectory_csv(data, out_csv);
    out << "wrote " << data.trajectories.size() << " trajectories (" << data.transitions() << " transitions) to "
        << out_csv.string() << '\n';
    return kOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Koopman-based tracking MPC: fit, tighten, simulate"};
  app.require_subcommand(1);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a lifted linear model to trajectory data");
  fit_cmd->add_option("data", fit.data_csv, "Training CSV")->required();
  fit_cmd->add_option("lifting", fit.lifting_json, "Lifting JSON")->required();
  fit_cmd->add_option("--out", fit.out_model, "Output model JSON")->required();
  fit_cmd->add_option("--ridge", fit.ridge, "Tikhonov weight")->capture_default_str();

  std::filesystem::path tighten_scenario, tighten_out;
  auto* tighten_cmd = app.add_subcommand("tighten", "Compute the tightened constraint schedule");
  tighten_cmd->add_option("scenario", tighten_scenario, "Scenario JSON")->required();
  tighten_cmd->add_option("--out", tighten_out, "Output schedule JSON")->required();

  SimulateOptions sim;
  std::string seeds_text;
  std::string sim_out;
  unsigned long long sim_seed = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the closed loop of a scenario");
  sim_cmd->add_option("scenario", sim.scenario, "Scenario JSON")->required();
  auto* seed_opt = sim_cmd->add_option("--seed", sim_seed, "Override the scenario seed");
  sim_cmd->add_option("--seeds", seeds_text, "Inclusive seed range a..b, one run per seed")->excludes(seed_opt);
  sim_cmd->add_option("--out", sim_out, "Output directory (overrides the scenario)");
  sim_cmd->add_flag("--deterministic", sim.deterministic, "Omit the timestamp from metrics");

  std::filesystem::path steady_scenario;
  std::string steady_yt;
  auto* steady_cmd = app.add_subcommand("steady", "Print the steady targets for a reference");
  steady_cmd->add_option("scenario", steady_scenario, "Scenario JSON")->required();
  steady_cmd->add_option("--yt", steady_yt, "Reference output, comma separated")->required();

  std::filesystem::path gen_scenario, gen_out;
  auto* gen_cmd = app.add_subcommand("generate", "Generate training data described by a scenario");
  gen_cmd->add_option("scenario", gen_scenario, "Scenario JSON")->required();
  gen_cmd->add_option("--out", gen_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  if (*fit_cmd) return cmd_fit(fit, out, err);
  if (*tighten_cmd) return cmd_tighten(tighten_scenario, tighten_out, out, err);
  if (*sim_cmd) {
    if (*seed_opt) sim.seed = sim_seed;
    if (!sim_out.empty()) sim.out_dir = sim_out;
    if (!seeds_text.empty()) {
      try {
        sim.seeds = parse_range(seeds_text);
      } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
      }
    }
    return cmd_simulate(sim, out, err);
  }
  if (*steady_cmd) return cmd_steady(steady_scenario, steady_yt, out, err);
  if (*gen_cmd) return cmd_generate(gen_scenario, gen_out, out, err);
  return kInputError;
}

}  // namespace ktmpc::cli
