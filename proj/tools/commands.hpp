#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>

namespace ktmpc::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInputError = 2,
  kFitFailure = 3,
  kEmptyTightenedSet = 4,
  kInfeasible = 5,
};

struct FitOptions {
  std::filesystem::path data_csv;
  std::filesystem::path lifting_json;
  std::filesystem::path out_model;
  double ridge = 1e-8;
};

struct SimulateOptions {
  std::filesystem::path scenario;
  std::optional<unsigned long long> seed;
  std::optional<std::pair<unsigned long long, unsigned long long>> seeds;  // inclusive range
  std::optional<std::filesystem::path> out_dir;
  bool deterministic = false;
};

int cmd_fit(const FitOptions& opts, std::ostream& out, std::ostream& err);
int cmd_tighten(const std::filesystem::path& scenario, const std::filesystem::path& out_json,
                std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err);
int cmd_steady(const std::filesystem::path& scenario, const std::string& y_t, std::ostream& out,
               std::ostream& err);
int cmd_generate(const std::filesystem::path& scenario, const std::filesystem::path& out_csv,
                 std::ostream& out, std::ostream& err);

/// Parses the command line and dispatches; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ktmpc::cli
