#pragma once

#include "ktmpc/koopman_model.hpp"

#include <filesystem>
#include <string>

namespace ktmpc {

/// Lifting specification as a JSON object {kind, params}.
std::string lifting_to_json(const Lifting& lifting);
Lifting lifting_from_json(const std::string& text);

/// Model document {n_x, n_u, n_y, n_z, lifting, A, B, C_x, C_y}; doubles use
/// the shortest representation that round-trips exactly.
std::string model_to_json(const KoopmanModel& model);
KoopmanModel model_from_json(const std::string& text);

void save_model(const KoopmanModel& model, const std::filesystem::path& path);
KoopmanModel load_model(const std::filesystem::path& path);

/// CSV with header `traj_id,t,x_0..,u_0..`; the last row of each trajectory
/// leaves the input columns empty.
void write_trajectory_csv(const TrajectoryData& data, const std::filesystem::path& path);
TrajectoryData read_trajectory_csv(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace ktmpc
