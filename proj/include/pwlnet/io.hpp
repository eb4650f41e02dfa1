#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "pwlnet/continuation.hpp"

namespace pwlnet::io {

/// Write via a temp file in the same directory plus rename.
void write_text_atomic(const std::string& path, const std::string& content);

/// Shortest round-trip decimal for reproducible CSV output.
std::string fmt(double v);

std::uint64_t fnv1a(const std::string& s);

/// Whitespace-separated rows, '#' comments, all rows equal length.
Mat read_matrix(const std::string& path);

std::string trajectory_csv(const PiecewiseAffineSystem& sys, const Trajectory& traj,
                           double dt_sample);
std::string events_csv(const PiecewiseAffineSystem& sys, const Trajectory& traj);
/// Fire events only: node,time rows.
std::string raster_csv(const PiecewiseAffineSystem& sys, const Trajectory& traj);
std::string msf_grid_csv(const MSFGrid& grid);
std::string msf_contour_csv(const MSFGrid& grid);
std::string multipliers_csv(const MonodromyReport& report);
std::string branches_csv(const std::vector<Branch>& branches);
std::string bifurcations_csv(const std::vector<Branch>& branches);

nlohmann::json orbit_json(const PeriodicOrbit& orbit);
nlohmann::json partition_json(const ClusterPartition& p);
nlohmann::json catalog_json(const std::vector<ClusterPartition>& symmetry,
                            const LaplacianEnumeration& laplacian);
nlohmann::json blockdiag_json(const BlockDiagonalization& bd);
nlohmann::json report_json(const MonodromyReport& report);

}  // namespace pwlnet::io
