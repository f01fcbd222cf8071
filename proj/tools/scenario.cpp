#include "scenario.hpp"

#include <ktmpc/errors.hpp>
#include <ktmpc/model_io.hpp>

#include <json.hpp>

#include <cmath>

namespace ktmpc::cli {

using nlohmann::json;

namespace {

Vector to_vector(const json& j, const std::string& what) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) throw InputError(what + ": expected an array of numbers");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError(what + ": expected numbers");
    v(static_cast<int>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix to_matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw InputError(what + ": expected a nested array");
  const auto rows = j.size();
  const auto cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw InputError(what + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<int>(i), static_cast<int>(c)) = j[i][c].get<double>();
  }
  return m;
}

Matrix matrix_or_scalar(const json& j, int n, const std::string& what) {
  if (j.is_number()) return j.get<double>() * Matrix::Identity(n, n);
  Matrix m = to_matrix(j, what);
  if (m.rows() != n || m.cols() != n)
    throw DimensionError(what + ": expected " + std::to_string(n) + " x " + std::to_string(n));
  return m;
}

// {normals, offsets} or {lower, upper}
HPolytope to_polytope(const json& j, int dim, const std::string& what) {
  HPolytope p;
  if (j.contains("normals")) {
    p = HPolytope(to_matrix(j.at("normals"), what + ".normals"), to_vector(j.at("offsets"), what + ".offsets"));
  } else if (j.contains("lower")) {
    p = HPolytope::box(to_vector(j.at("lower"), what + ".lower"), to_vector(j.at("upper"), what + ".upper"));
  } else {
    throw InputError(what + ": expected {normals, offsets} or {lower, upper}");
  }
  if (p.dim() != dim)
    throw DimensionError(what + ": dimension " + std::to_string(p.dim()) + ", expected " + std::to_string(dim));
  return p;
}

// {center, generators}, {half_widths[, center]} or {lower, upper}
Zonotope to_zonotope(const json& j, int dim, const std::string& what) {
  Zonotope z;
  if (j.contains("generators")) {
    const Vector c = to_vector(j.at("center"), what + ".center");
    const json& g = j.at("generators");
    z = Zonotope(c, g.empty() ? Matrix(c.size(), 0) : to_matrix(g, what + ".generators"));
  } else if (j.contains("half_widths")) {
    const Vector h = to_vector(j.at("half_widths"), what + ".half_widths");
    z = Zonotope::box(j.contains("center") ? to_vector(j.at("center"), what + ".center") : Vector::Zero(h.size()), h);
  } else if (j.contains("lower")) {
    const Vector lo = to_vector(j.at("lower"), what + ".lower");
    const Vector hi = to_vector(j.at("upper"), what + ".upper");
    if (lo.size() != hi.size() || ((hi - lo).array() < 0).any()) throw InputError(what + ": invalid bounds");
    z = Zonotope::box(0.5 * (lo + hi), 0.5 * (hi - lo));
  } else {
    throw InputError(what + ": expected {center, generators}, {half_widths} or {lower, upper}");
  }
  if (z.dim() != dim)
    throw DimensionError(what + ": dimension " + std::to_string(z.dim()) + ", expected " + std::to_string(dim));
  return z;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Lifting default_lifting(const Scenario& s) {
  if (s.plant && s.plant->has_exact_lifting()) return s.plant->exact_lifting();
  if (s.plant) return {3, PolynomialLifting{2}, {2}};
  return Lifting::identity(s.state_dim);
}

TrajectoryData load_or_generate(const json& node, const Scenario& s, const std::filesystem::path& base) {
  if (node.is_string()) {
    const auto path = resolve(base, node.get<std::string>());
    if (!std::filesystem::exists(path)) throw InputError("data file '" + path.string() + "' does not exist");
    return read_trajectory_csv(path);
  }
  if (!node.contains("generate")) throw InputError("model.data: expected a CSV path or {generate: {...}}");
  if (!s.plant) throw InputError("model.data.generate requires a plant with known dynamics");
  const json& g = node.at("generate");
  return generate_training_data(*s.plant, g.at("n_traj").get<int>(), g.at("traj_len").get<int>(),
                                to_zonotope(g.at("input_box"), s.input_dim, "generate.input_box"),
                                to_zonotope(g.at("state_box"), s.state_dim, "generate.state_box"),
                                g.value("seed", 0ULL));
}

Scenario parse(const json& j, const std::filesystem::path& base) {
  Scenario s;

  const json& pj = j.at("plant");
  const std::string kind = pj.at("kind").get<std::string>();
  if (kind == "numerical_example") {
    s.plant = Plant::numerical_example(pj.value("lambda", -0.1), pj.value("mu", 2.0));
  } else if (kind == "unicycle") {
    s.plant = Plant::unicycle(pj.value("dt", 0.1));
  } else if (kind == "none") {
    s.state_dim = pj.at("state_dim").get<int>();
    s.input_dim = pj.at("input_dim").get<int>();
    s.output_matrix = to_matrix(pj.at("output_matrix"), "plant.output_matrix");
  } else {
    throw InputError("plant.kind: unknown plant '" + kind + "'");
  }
  if (s.plant) {
    s.state_dim = s.plant->state_dim();
    s.input_dim = s.plant->input_dim();
    s.output_matrix = s.plant->C();
  }
  if (s.output_matrix.cols() != s.state_dim) throw DimensionError("plant.output_matrix: needs n_x columns");

  const Lifting lifting = j.contains("lifting") ? lifting_from_json([&] {
    json l = j.at("lifting");
    if (!l.contains("state_dim")) l["state_dim"] = s.state_dim;
    return l.dump();
  }())
                                                : default_lifting(s);
  if (lifting.state_dim() != s.state_dim) throw DimensionError("lifting.state_dim does not match the plant");

  const json mj = j.value("model", json{{"source", "exact"}});
  const std::string source = mj.value("source", "exact");
  if (mj.contains("data")) s.data = load_or_generate(mj.at("data"), s, base);
  if (source == "exact") {
    if (!s.plant || !s.plant->has_exact_lifting()) throw InputError("model.source 'exact' needs the numerical_example plant");
    s.model = s.plant->exact_model();
  } else if (source == "file") {
    const auto path = resolve(base, mj.at("path").get<std::string>());
    if (!std::filesystem::exists(path)) throw InputError("model file '" + path.string() + "' does not exist");
    s.model = load_model(path);
  } else if (source == "fit") {
    if (!s.data) throw InputError("model.source 'fit' needs model.data");
    s.model = fit_edmd(*s.data, lifting, s.output_matrix, mj.value("ridge", 1e-8));
  } else {
    throw InputError("model.source: unknown value '" + source + "'");
  }
  if (s.model->state_dim() != s.state_dim || s.model->input_dim() != s.input_dim)
    throw DimensionError("model dimensions do not match the plant");

  const int nz = s.model->lifted_dim();
  const json dj = j.value("disturbance", json{{"mode", "none"}});
  const std::string mode = dj.value("mode", "none");
  if (mode == "none") {
    s.disturbance = DisturbanceModel::none(nz, s.state_dim);
  } else if (mode == "declared") {
    s.disturbance.W = dj.contains("W") ? to_zonotope(dj.at("W"), nz, "disturbance.W") : Zonotope::zero(nz);
    s.disturbance.V = dj.contains("V") ? to_zonotope(dj.at("V"), s.state_dim, "disturbance.V") : Zonotope::zero(s.state_dim);
    const double scale = dj.value("scale", 1.0);
    s.disturbance.W.generators *= scale;
    s.disturbance.V.generators *= scale;
    s.inject = dj.value("inject", true);
  } else if (mode == "estimate") {
    if (!s.data) throw InputError("disturbance.mode 'estimate' needs model.data");
    s.disturbance = estimate_disturbance_sets(*s.model, *s.data, dj.value("inflation", 1.0));
  } else {
    throw InputError("disturbance.mode: unknown value '" + mode + "'");
  }

  const json& cj = j.at("constraints");
  s.X = to_polytope(cj.at("X"), s.state_dim, "constraints.X");
  s.U = to_polytope(cj.at("U"), s.input_dim, "constraints.U");

  const json ctl = j.value("controller", json::object());
  s.config.N = ctl.value("N", 10);
  s.config.Q = matrix_or_scalar(ctl.value("Q", json(1.0)), nz, "controller.Q");
  s.config.R = matrix_or_scalar(ctl.value("R", json(1.0)), s.input_dim, "controller.R");
  if (ctl.contains("s") && !ctl.at("s").is_number()) throw InputError("controller.s: must be a scalar (S = s I)");
  s.config.s = ctl.value("s", 100.0);
  const json lqr = ctl.value("lqr", json::object());
  s.Q_k = matrix_or_scalar(lqr.value("Qk", json(1.0)), nz, "controller.lqr.Qk");
  s.R_k = matrix_or_scalar(lqr.value("Rk", json(1.0)), s.input_dim, "controller.lqr.Rk");
  if (s.config.N < 1) throw DimensionError("controller.N must be >= 1");
  if (!(s.config.s > 0.0)) throw DimensionError("controller.s must be positive");

  const int ny = static_cast<int>(s.output_matrix.rows());
  if (j.contains("references")) {
    const json& rj = j.at("references");
    if (rj.value("mode", "timed") == "timed") {
      std::vector<std::pair<int, Vector>> entries;
      for (const auto& e : rj.at("entries")) entries.emplace_back(e.at(0).get<int>(), to_vector(e.at(1), "references.entries"));
      s.references = ReferenceSchedule::make_timed(std::move(entries));
    } else {
      std::vector<Vector> pts;
      for (const auto& p : rj.at("points")) pts.push_back(to_vector(p, "references.points"));
      s.references = ReferenceSchedule::make_waypoints(std::move(pts), rj.value("switch_radius", 0.35));
    }
    s.references.validate(ny);
  } else {
    s.references = ReferenceSchedule::constant(Vector::Zero(ny));
  }

  s.initial_state = j.contains("initial_state") ? to_vector(j.at("initial_state"), "initial_state") : Vector::Zero(s.state_dim);
  if (s.initial_state.size() != s.state_dim) throw DimensionError("initial_state: dimension mismatch");
  s.steps = j.value("steps", 100);
  s.seed = j.value("seed", 0ULL);
  s.output_dir = resolve(base, j.value("output_dir", std::string("out")));
  s.settle_window = j.value("settle_window", 20);

  if (j.contains("steady_grid")) {
    const json& g = j.at("steady_grid");
    SteadyGrid grid;
    grid.x_lower = to_vector(g.at("x_lower"), "steady_grid.x_lower");
    grid.x_upper = to_vector(g.at("x_upper"), "steady_grid.x_upper");
    grid.u_lower = to_vector(g.at("u_lower"), "steady_grid.u_lower");
    grid.u_upper = to_vector(g.at("u_upper"), "steady_grid.u_upper");
    grid.points = g.value("points", std::vector<int>{41});
    grid.fp_tol = g.value("fp_tol", 1e-9);
    s.steady_grid = grid;
  }
  return s;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
  try {
    return parse(j, base_dir);
  } catch (const json::exception& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("scenario file '" + path.string() + "' does not exist");
  Scenario s = parse_scenario(read_text_file(path), path.parent_path());
  s.source = path;
  return s;
}

GainResult synthesize(Scenario& s) {
  GainResult g = dlqr(s.model->A(), s.model->B(), s.Q_k, s.R_k);
  s.config.K = g.K;
  return g;
}

TrajectoryData generate_from_scenario(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("scenario file '" + path.string() + "' does not exist");
  try {
    const json j = json::parse(read_text_file(path));
    Scenario s;
    const json& pj = j.at("plant");
    const std::string kind = pj.at("kind").get<std::string>();
    if (kind == "numerical_example")
      s.plant = Plant::numerical_example(pj.value("lambda", -0.1), pj.value("mu", 2.0));
    else if (kind == "unicycle")
      s.plant = Plant::unicycle(pj.value("dt", 0.1));
    else
      throw InputError("generate: plant '" + kind + "' has no dynamics");
    s.state_dim = s.plant->state_dim();
    s.input_dim = s.plant->input_dim();
    const json& data = j.at("model").at("data");
    if (!data.is_object() || !data.contains("generate"))
      throw InputError("generate: scenario has no model.data.generate block");
    return load_or_generate(data, s, path.parent_path());
  } catch (const json::exception& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
}

}  // namespace ktmpc::cli
