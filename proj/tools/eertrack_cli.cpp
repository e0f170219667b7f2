#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "eertrack/config.hpp"
#include "eertrack/csv_io.hpp"
#include "eertrack/errors.hpp"
#include "eertrack/plot.hpp"
#include "eertrack/sim.hpp"

using namespace eertrack;

namespace {

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) return {std::stoull(text)};
    const std::uint64_t lo = std::stoull(text.substr(0, dots));
    const std::uint64_t hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("seed range '" + text + "' is empty");
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  } catch (const std::logic_error&) {
    throw ConfigError("seeds must look like n..m, got '" + text + "'");
  }
}

std::shared_ptr<const DmmnParams> model_for(const SimConfig& cfg, bool required) {
  if (!required) return nullptr;
  if (cfg.model_weights.empty()) std::cerr << "no model_weights in config; training the motion model in-process\n";
  return obtain_model(cfg);
}

bool uses_dmmn(const SimConfig& cfg) {
  return cfg.motion_model == MotionModelKind::kDmmn || cfg.guidance == Policy::kDmmnEer;
}

void print_summary(const EpisodeLog& log) {
  const auto& s = log.summary;
  std::printf("policy %s seed %llu: %zu steps, mean e %.4f m, mean e_est %.4f m, mean det %.3e m^4, observed %.1f%%\n",
              to_string(log.policy).c_str(), static_cast<unsigned long long>(log.seed), log.records.size(), s.mean_e,
              s.mean_e_est, s.mean_det_cov, s.pct_observed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Target tracking under occlusion with a learned motion model and entropy-driven guidance"};
  app.require_subcommand(1);

  std::string config_path, out_path, log_path, in_path, seeds_text;
  std::uint64_t seed = 0;
  bool debug_particles = false, debug_eer = false;
  unsigned threads = 0;

  auto* train_cmd = app.add_subcommand("train", "Train the motion model on a simulated road-network trajectory");
  train_cmd->add_option("--config", config_path, "Config file (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_path, "Weights file to write")->required();

  auto* sim_cmd = app.add_subcommand("simulate", "Run one closed-loop episode");
  sim_cmd->add_option("--config", config_path, "Config file (JSON)")->required()->check(CLI::ExistingFile);
  auto* seed_opt = sim_cmd->add_option("--seed", seed, "Episode seed (overrides the config)");
  sim_cmd->add_option("--log", log_path, "Episode log CSV to write")->required();
  sim_cmd->add_flag("--debug-particles", debug_particles, "Also write <log>.particles.csv (k,i,x,y,w)");
  sim_cmd->add_flag("--debug-eer", debug_eer, "Also write <log>.eer.csv (k,candidate_x,candidate_y,eer)");

  auto* cmp_cmd = app.add_subcommand("compare", "Run every guidance policy over a seed range");
  cmp_cmd->add_option("--config", config_path, "Config file (JSON)")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--seeds", seeds_text, "Seed range n..m (inclusive)")->required();
  cmp_cmd->add_option("--out", out_path, "Comparison CSV to write")->required();
  cmp_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* plot_cmd = app.add_subcommand("plot", "Render an episode log or comparison CSV as SVG");
  plot_cmd->add_option("--in", in_path, "Episode log or comparison CSV")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", out_path, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const SimConfig cfg = load_config(config_path);
      TrainReport report;
      const DmmnParams p = train_from_config(cfg, &report);
      for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
        std::printf("epoch %2zu  train %.4e m^2  validation %.4e m^2\n", e + 1, report.train_loss[e],
                    report.validation_loss[e]);
      }
      save_weights(p, out_path);
      std::printf("wrote %s (%zu parameters)\n", out_path.c_str(), p.parameter_count());
    } else if (*sim_cmd) {
      SimConfig cfg = load_config(config_path);
      if (*seed_opt) cfg.seed = seed;
      const auto model = model_for(cfg, uses_dmmn(cfg));
      EpisodeHooks hooks;
      std::ofstream particles_out, eer_out;
      if (debug_particles) {
        particles_out.open(log_path + ".particles.csv", std::ios::binary);
        if (!particles_out) throw ConfigError("cannot open particle dump for writing");
        write_particle_dump_header(particles_out);
        hooks.on_particles = [&](long k, const ParticleSet& ps) { write_particle_dump(particles_out, k, ps); };
      }
      if (debug_eer) {
        eer_out.open(log_path + ".eer.csv", std::ios::binary);
        if (!eer_out) throw ConfigError("cannot open EER dump for writing");
        write_eer_dump_header(eer_out);
        hooks.on_eer = [&](long k, const EerResult& r) { write_eer_dump(eer_out, k, r); };
      }
      const EpisodeLog log = run_episode(cfg, model, hooks);
      write_episode_log(log_path, log);
      print_summary(log);
    } else if (*cmp_cmd) {
      const SimConfig cfg = load_config(config_path);
      const auto seeds = parse_seed_range(seeds_text);
      const auto model = model_for(cfg, true);
      const CompareResult r = compare(cfg, model, seeds, {Policy::kDmmnEer, Policy::kLawn, Policy::kPfwm}, threads);
      write_compare(out_path, r);
      for (const auto& a : r.aggregates) {
        std::printf("%-9s mean e %.4f m  mean e_est %.4f m  mean det %.3e m^4  observed %.1f%%  recovery %.2f steps\n",
                    to_string(a.policy).c_str(), a.mean_e, a.mean_e_est, a.mean_det_cov, a.pct_observed,
                    a.mean_recovery_steps);
      }
    } else if (*plot_cmd) {
      for (const auto& path : plot_file(in_path, out_path)) std::printf("wrote %s\n", path.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
