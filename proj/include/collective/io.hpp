#pragma once

#include "collective/featmap.hpp"
#include "collective/gp.hpp"
#include "collective/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>

namespace collective {

inline constexpr int kSchemaVersion = 1;

/// %.17g, so every double survives a text round trip.
std::string format_double(double x);

/// meta.json plus traj_<m>.csv (m = 1..M) with header
/// t,agent,x1..xd[,v1..vd][,a1..ad], rows sorted by (t, agent).
void write_dataset(const TrajectoryDataset& ds, const std::filesystem::path& dir);
TrajectoryDataset read_dataset(const std::filesystem::path& dir);

nlohmann::json to_json(const KernelEstimate& est);
KernelEstimate kernel_estimate_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ReductionMap& map);
ReductionMap reduction_map_from_json(const nlohmann::json& j);

nlohmann::json to_json(const GPConfig& cfg);
GPConfig gp_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LearnReport& report);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// bin_left,bin_right,weight
void write_rho_csv(const EmpiricalRho& rho, std::ostream& os);
/// r,mean,std
void write_posterior_csv(const Eigen::VectorXd& r, const KernelPrediction& pred, std::ostream& os);
/// M,n_star,mean_rel_err,std,trials
void write_sweep_csv(const SweepResult& sweep, std::ostream& os);

}  // namespace collective
