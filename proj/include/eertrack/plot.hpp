#pragma once

#include <string>
#include <vector>

#include "eertrack/sim.hpp"

namespace eertrack {

enum class BandKind { kOccluded, kOutOfFov };

/// Time interval [t_begin, t_end] during which the target was not observed.
struct Band {
  BandKind kind;
  double t_begin;
  double t_end;
};

/// Maximal runs of consecutive records that were occluded, or in view of no FOV.
/// A run covers from its first record's time to the next record's time.
std::vector<Band> unobserved_bands(const std::vector<StepRecord>& records);

/// Estimation error over time with shaded bands; throws ConfigError on an empty log.
std::string estimation_error_svg(const std::vector<StepRecord>& records);

/// Grouped bars of mean e, mean e-tilde and mean det(Sigma), one group per policy,
/// built from the aggregate rows (seed "mean"); throws ConfigError when there are none.
std::string comparison_svg(const std::vector<CompareRow>& rows);

/// Detects the CSV kind from its header line and writes the matching SVG files
/// into `out_dir` (created if missing). Returns the written paths.
std::vector<std::string> plot_file(const std::string& csv_path, const std::string& out_dir);

}  // namespace eertrack
