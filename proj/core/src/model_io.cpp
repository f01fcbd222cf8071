#include "ktmpc/model_io.hpp"

#include "ktmpc/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace ktmpc {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const char* name, int rows, int cols) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw InputError(std::string("model: field '") + name + "' must have " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols)
      throw InputError(std::string("model: row ") + std::to_string(i) + " of '" + name + "' must have " +
                       std::to_string(cols) + " entries");
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Vector vector_from_json(const json& j) {
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

json lifting_json(const Lifting& l) {
  json out;
  out["state_dim"] = l.state_dim();
  json params;
  params["angle_indices"] = l.angle_indices();
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, PolynomialLifting>) {
          out["kind"] = "polynomial";
          params["max_degree"] = k.max_degree;
        } else if constexpr (std::is_same_v<T, RbfLifting>) {
          out["kind"] = "rbf";
          json centers = json::array();
          for (const auto& c : k.centers) centers.push_back(std::vector<double>(c.data(), c.data() + c.size()));
          params["centers"] = std::move(centers);
          params["width"] = k.width;
        } else {
          out["kind"] = "explicit";
          params["exponents"] = k.exponents;
        }
      },
      l.kind());
  out["params"] = std::move(params);
  return out;
}

Lifting lifting_from(const json& j, int state_dim_hint) {
  if (!j.is_object()) throw InputError("lifting: expected a JSON object");
  const int nx = j.contains("state_dim") ? j.at("state_dim").get<int>() : state_dim_hint;
  if (nx <= 0) throw InputError("lifting: missing 'state_dim'");
  const std::string kind = j.at("kind").get<std::string>();
  const json params = j.value("params", json::object());
  const auto angles = params.value("angle_indices", std::vector<int>{});
  if (kind == "identity") return Lifting::identity(nx);
  if (kind == "polynomial") return {nx, PolynomialLifting{params.value("max_degree", 2)}, angles};
  if (kind == "explicit")
    return {nx, ExplicitLifting{params.at("exponents").get<std::vector<std::vector<int>>>()}, angles};
  if (kind == "rbf") {
    RbfLifting rbf;
    rbf.width = params.value("width", 1.0);
    const json& centers = params.at("centers");
    if (centers.is_array()) {
      for (const auto& c : centers) rbf.centers.push_back(vector_from_json(c));
    } else {
      // {lower, upper, count, seed}: Latin-hypercube centers
      rbf.centers = latin_hypercube_centers(vector_from_json(centers.at("lower")),
                                            vector_from_json(centers.at("upper")),
                                            centers.at("count").get<int>(),
                                            centers.value("seed", 0ULL));
    }
    return {nx, std::move(rbf), angles};
  }
  throw InputError("lifting: unknown kind '" + kind + "'");
}

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string(what) + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\r')) cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && cell[b] == ' ') ++b;
    cells.push_back(cell.substr(b));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, const std::filesystem::path& path, long line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InputError(path.string() + ":" + std::to_string(line) + ": cannot parse number '" + s + "'");
  return v;
}

}  // namespace

std::string lifting_to_json(const Lifting& lifting) { return lifting_json(lifting).dump(); }

Lifting lifting_from_json(const std::string& text) {
  try {
    return lifting_from(parse(text, "lifting"), 0);
  } catch (const json::exception& e) {
    throw InputError(std::string("lifting: ") + e.what());
  }
}

std::string model_to_json(const KoopmanModel& m) {
  json j;
  j["n_x"] = m.state_dim();
  j["n_u"] = m.input_dim();
  j["n_y"] = m.output_dim();
  j["n_z"] = m.lifted_dim();
  j["lifting"] = lifting_json(m.lifting());
  j["A"] = matrix_to_json(m.A());
  j["B"] = matrix_to_json(m.B());
  j["C_x"] = matrix_to_json(m.C_x());
  j["C_y"] = matrix_to_json(m.C_y());
  return j.dump(2);
}

KoopmanModel model_from_json(const std::string& text) {
  const json j = parse(text, "model");
  try {
    const int nx = j.at("n_x").get<int>();
    const int nu = j.at("n_u").get<int>();
    const int ny = j.at("n_y").get<int>();
    const int nz = j.at("n_z").get<int>();
    return {matrix_from_json(j.at("A"), "A", nz, nz), matrix_from_json(j.at("B"), "B", nz, nu),
            matrix_from_json(j.at("C_x"), "C_x", nx, nz), matrix_from_json(j.at("C_y"), "C_y", ny, nz),
            lifting_from(j.at("lifting"), nx)};
  } catch (const json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_model(const KoopmanModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << model_to_json(model) << '\n';
}

KoopmanModel load_model(const std::filesystem::path& path) { return model_from_json(read_text_file(path)); }

void write_trajectory_csv(const TrajectoryData& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  const int nx = data.state_dim();
  const int nu = data.input_dim();
  out << "traj_id,t";
  for (int i = 0; i < nx; ++i) out << ",x_" << i;
  for (int i = 0; i < nu; ++i) out << ",u_" << i;
  out << '\n';
  for (std::size_t id = 0; id < data.trajectories.size(); ++id) {
    const auto& t = data.trajectories[id];
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      out << id << ',' << k;
      for (int i = 0; i < nx; ++i) out << ',' << format_double(t.states[k](i));
      for (int i = 0; i < nu; ++i) {
        out << ',';
        if (k < t.inputs.size()) out << format_double(t.inputs[k](i));
      }
      out << '\n';
    }
  }
}

TrajectoryData read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": empty file, header row required");
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "traj_id" || header[1] != "t")
    throw InputError(path.string() + ": header must start with 'traj_id,t'");
  int nx = 0, nu = 0;
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c].rfind("x_", 0) == 0 && nu == 0)
      ++nx;
    else if (header[c].rfind("u_", 0) == 0)
      ++nu;
    else
      throw InputError(path.string() + ": unexpected column '" + header[c] + "'");
  }
  if (nx == 0 || nu == 0) throw InputError(path.string() + ": need at least one x_ and one u_ column");

  std::map<long, Trajectory> by_id;
  std::map<long, long> last_t;
  std::map<long, bool> closed;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    const long id = static_cast<long>(parse_double(cells[0], path, lineno));
    const long t = static_cast<long>(parse_double(cells[1], path, lineno));
    auto& traj = by_id[id];
    if (closed[id])
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": row after the final row of trajectory " +
                       std::to_string(id));
    if (last_t.count(id) && t != last_t[id] + 1)
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": time index is not consecutive");
    if (!last_t.count(id) && t != 0)
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": trajectory must start at t = 0");
    last_t[id] = t;
    Vector x(nx);
    for (int i = 0; i < nx; ++i) x(i) = parse_double(cells[2 + i], path, lineno);
    traj.states.push_back(std::move(x));
    bool empty_input = true;
    for (int i = 0; i < nu; ++i) empty_input = empty_input && cells[2 + nx + i].empty();
    if (nu > 0 && empty_input) {
      closed[id] = true;
    } else {
      Vector u(nu);
      for (int i = 0; i < nu; ++i) u(i) = parse_double(cells[2 + nx + i], path, lineno);
      traj.inputs.push_back(std::move(u));
    }
  }
  TrajectoryData data;
  for (auto& [id, traj] : by_id) {
    if (!closed[id])
      throw InputError(path.string() + ": trajectory " + std::to_string(id) +
                       " does not end with an empty-input row");
    data.trajectories.push_back(std::move(traj));
  }
  if (data.trajectories.empty()) throw InputError(path.string() + ": no data rows");
  return data;
}

}  // namespace ktmpc
