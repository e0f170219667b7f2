#include "eertrack/csv_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "eertrack/errors.hpp"

namespace eertrack {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + s + "' is not a number");
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return in;
}

constexpr const char* kEpisodeColumns =
    "k,t,truth_x,truth_y,agent_x,agent_y,z_x,z_y,occluded,in_fov,mean_x,mean_y,det_cov,e,e_est,waypoint_x,waypoint_y,"
    "mode";
constexpr const char* kCompareColumns = "policy,seed,mean_e,mean_e_est,mean_det_cov,pct_observed,mean_recovery_steps";

/// Checks the version header and the column line.
void expect_preamble(std::istream& in, const char* header, const char* columns, const std::string& what) {
  std::string line;
  if (!std::getline(in, line) || line != header) throw ConfigError(what + ": missing or unsupported header line");
  if (!std::getline(in, line) || line != columns) throw ConfigError(what + ": unexpected column line");
}

}  // namespace

void write_episode_log(std::ostream& out, const EpisodeLog& log) {
  out << kEpisodeLogHeader << '\n' << kEpisodeColumns << '\n';
  for (const auto& r : log.records) {
    out << r.k << ',' << num(r.t) << ',' << num(r.truth.x) << ',' << num(r.truth.y) << ',' << num(r.agent.x) << ','
        << num(r.agent.y) << ',';
    if (r.z) {
      out << num(r.z->x) << ',' << num(r.z->y);
    } else {
      out << ',';
    }
    out << ',' << (r.occluded ? 1 : 0) << ',' << (r.in_fov ? 1 : 0) << ',' << num(r.mean.x) << ',' << num(r.mean.y)
        << ',' << num(r.det_cov) << ',' << num(r.e) << ',' << num(r.e_est) << ',' << num(r.waypoint.x) << ','
        << num(r.waypoint.y) << ',' << to_string(r.mode) << '\n';
  }
}

void write_episode_log(const std::string& path, const EpisodeLog& log) {
  auto out = open_out(path);
  write_episode_log(out, log);
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::vector<StepRecord> read_episode_log(std::istream& in) {
  expect_preamble(in, kEpisodeLogHeader, kEpisodeColumns, "episode log");
  std::vector<StepRecord> records;
  std::string line;
  long line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "episode log line " + std::to_string(line_no);
    const auto c = split(line);
    if (c.size() != 18) throw ConfigError(where + ": expected 18 fields, found " + std::to_string(c.size()));
    StepRecord r;
    r.k = static_cast<long>(parse_double(c[0], where));
    r.t = parse_double(c[1], where);
    r.truth = {parse_double(c[2], where), parse_double(c[3], where)};
    r.agent = {parse_double(c[4], where), parse_double(c[5], where)};
    if (!c[6].empty() || !c[7].empty()) r.z = Pose2{parse_double(c[6], where), parse_double(c[7], where)};
    r.occluded = c[8] == "1";
    r.in_fov = c[9] == "1";
    r.mean = {parse_double(c[10], where), parse_double(c[11], where)};
    r.det_cov = parse_double(c[12], where);
    r.e = parse_double(c[13], where);
    r.e_est = parse_double(c[14], where);
    r.waypoint = {parse_double(c[15], where), parse_double(c[16], where)};
    r.mode = parse_mode(c[17]);
    records.push_back(r);
  }
  return records;
}

std::vector<StepRecord> read_episode_log(const std::string& path) {
  auto in = open_in(path);
  return read_episode_log(in);
}

void write_compare(std::ostream& out, const CompareResult& r) {
  out << kCompareHeader << '\n' << kCompareColumns << '\n';
  auto row = [&](const CompareRow& c) {
    out << to_string(c.policy) << ',' << c.seed << ',' << num(c.mean_e) << ',' << num(c.mean_e_est) << ','
        << num(c.mean_det_cov) << ',' << num(c.pct_observed) << ',' << num(c.mean_recovery_steps) << '\n';
  };
  for (const auto& c : r.runs) row(c);
  for (const auto& c : r.aggregates) row(c);
}

void write_compare(const std::string& path, const CompareResult& r) {
  auto out = open_out(path);
  write_compare(out, r);
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::vector<CompareRow> read_compare(const std::string& path) {
  auto in = open_in(path);
  expect_preamble(in, kCompareHeader, kCompareColumns, "compare table");
  std::vector<CompareRow> rows;
  std::string line;
  long line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "compare table line " + std::to_string(line_no);
    const auto c = split(line);
    if (c.size() != 7) throw ConfigError(where + ": expected 7 fields");
    rows.push_back({parse_policy(c[0]), c[1], parse_double(c[2], where), parse_double(c[3], where),
                    parse_double(c[4], where), parse_double(c[5], where), parse_double(c[6], where)});
  }
  return rows;
}

void write_particle_dump_header(std::ostream& out) { out << kParticleDumpHeader << "\nk,i,x,y,w\n"; }

void write_particle_dump(std::ostream& out, long k, const ParticleSet& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Particle& p = ps.particles[i];
    out << k << ',' << i << ',' << num(p.pose().x) << ',' << num(p.pose().y) << ',' << num(p.weight) << '\n';
  }
}

void write_eer_dump_header(std::ostream& out) { out << kEerDumpHeader << "\nk,candidate_x,candidate_y,eer\n"; }

void write_eer_dump(std::ostream& out, long k, const EerResult& r) {
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    out << k << ',' << num(r.candidates[i].position.x) << ',' << num(r.candidates[i].position.y) << ','
        << num(r.eer[i]) << '\n';
  }
}

std::string read_header_line(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace eertrack
