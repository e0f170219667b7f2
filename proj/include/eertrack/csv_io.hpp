#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "eertrack/entropy.hpp"
#include "eertrack/particle_filter.hpp"
#include "eertrack/sim.hpp"

namespace eertrack {

inline constexpr const char* kEpisodeLogHeader = "# eertrack episode-log v1";
inline constexpr const char* kCompareHeader = "# eertrack compare v1";
inline constexpr const char* kParticleDumpHeader = "# eertrack particles v1";
inline constexpr const char* kEerDumpHeader = "# eertrack eer-table v1";

/// Episode log columns:
/// k,t,truth_x,truth_y,agent_x,agent_y,z_x,z_y,occluded,in_fov,mean_x,mean_y,det_cov,e,e_est,waypoint_x,waypoint_y,mode
/// z_x and z_y are empty when there was no measurement. Reals use 17 significant digits.
void write_episode_log(std::ostream& out, const EpisodeLog& log);
void write_episode_log(const std::string& path, const EpisodeLog& log);
std::vector<StepRecord> read_episode_log(std::istream& in);
std::vector<StepRecord> read_episode_log(const std::string& path);

/// Columns: policy,seed,mean_e,mean_e_est,mean_det_cov,pct_observed,mean_recovery_steps.
/// Per-run rows come first, then one row per policy with seed "mean".
void write_compare(std::ostream& out, const CompareResult& r);
void write_compare(const std::string& path, const CompareResult& r);
std::vector<CompareRow> read_compare(const std::string& path);

/// Writes the header and column line once, then rows `k,i,x,y,w` per call.
void write_particle_dump_header(std::ostream& out);
void write_particle_dump(std::ostream& out, long k, const ParticleSet& ps);

/// Writes the header and column line once, then rows `k,candidate_x,candidate_y,eer` per call.
void write_eer_dump_header(std::ostream& out);
void write_eer_dump(std::ostream& out, long k, const EerResult& r);

/// First line of a file, used to tell the CSV kinds apart.
std::string read_header_line(const std::string& path);

}  // namespace eertrack
