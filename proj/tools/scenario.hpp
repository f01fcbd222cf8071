#pragma once

#include <ktmpc/controller.hpp>
#include <ktmpc/gain_synthesis.hpp>
#include <ktmpc/plant.hpp>
#include <ktmpc/simulator.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace ktmpc::cli {

/// Fully resolved scenario document. Relative paths are resolved against
/// the directory of the scenario file.
struct Scenario {
  std::filesystem::path source;
  std::optional<Plant> plant;  // empty for model-only scenarios
  int state_dim = 0;
  int input_dim = 0;
  Matrix output_matrix;
  std::optional<KoopmanModel> model;  // always set after loading
  std::optional<TrajectoryData> data;  // training data when the model was fitted
  DisturbanceModel disturbance;
  bool inject = false;  // feed the declared sets into the plant
  HPolytope X;
  HPolytope U;
  KtmpcConfig config;
  Matrix Q_k;
  Matrix R_k;
  ReferenceSchedule references;
  Vector initial_state;
  int steps = 100;
  unsigned long long seed = 0;
  std::filesystem::path output_dir;
  int settle_window = 20;
  std::optional<SteadyGrid> steady_grid;
};

/// Parses and validates a scenario file; fits the model when requested.
/// The tube gain K in `config` is left empty (see `synthesize`).
/// Throws InputError/DimensionError for malformed input and UnderdeterminedFit for fitting failures.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir);

/// LQR gain for the scenario's model; stores K in the config.
GainResult synthesize(Scenario& scenario);

/// Training data described by the scenario's `model.data.generate` block,
/// without fitting or validating the rest of the document.
TrajectoryData generate_from_scenario(const std::filesystem::path& path);

}  // namespace ktmpc::cli
