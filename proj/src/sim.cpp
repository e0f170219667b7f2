#include "eertrack/sim.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "eertrack/errors.hpp"
#include "eertrack/motion_model.hpp"
#include "eertrack/road_network.hpp"

namespace eertrack {

std::optional<Pose2> synth_measurement(const Pose2& truth, const AgentState& agent, const Workspace& ws,
                                       const MeasurementModel& mm, Rng& rng) {
  if (!is_observable(ws, agent.fov(), truth)) return std::nullopt;
  return mm.sample(truth, rng);
}

AgentState step_agent(const AgentState& agent, const Pose2& wp, double dt, const Rect& bounds) {
  if (!(dt > 0.0)) throw ConfigError("agent time step must be positive");
  AgentState next = agent;
  const Pose2 delta = wp - agent.position;
  const double dist = norm(delta);
  const double max_step = agent.max_speed * dt;
  next.position = dist <= max_step ? wp : agent.position + delta * (max_step / dist);
  next.position = bounds.clamp(next.position);
  return next;
}

double tracking_error(const Pose2& agent, const Pose2& truth) { return distance(agent, truth); }

double estimation_error(const ParticleSet& ps, const Pose2& truth) { return distance(weighted_mean(ps), truth); }

EpisodeSummary summarize(const std::vector<StepRecord>& records) {
  EpisodeSummary s;
  if (records.empty()) return s;
  const double n = static_cast<double>(records.size());
  long observed = 0, occluded = 0, out_of_fov = 0;
  for (const auto& r : records) {
    s.mean_e += r.e / n;
    s.mean_e_est += r.e_est / n;
    s.mean_det_cov += r.det_cov / n;
    s.max_e = std::max(s.max_e, r.e);
    s.max_e_est = std::max(s.max_e_est, r.e_est);
    s.max_det_cov = std::max(s.max_det_cov, r.det_cov);
    if (r.observed()) {
      ++observed;
    } else if (r.occluded) {
      ++occluded;
    } else {
      ++out_of_fov;
    }
  }
  s.pct_observed = 100.0 * static_cast<double>(observed) / n;
  s.pct_occluded = 100.0 * static_cast<double>(occluded) / n;
  s.pct_out_of_fov = 100.0 * static_cast<double>(out_of_fov) / n;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (!(records[i - 1].occluded && !records[i].occluded)) continue;
    std::size_t j = i;
    while (j < records.size() && !(records[j].e_est < kRecoveredError)) ++j;
    s.recovery_steps.push_back(static_cast<long>(j - i));
  }
  if (!s.recovery_steps.empty()) {
    double total = 0.0;
    for (long v : s.recovery_steps) total += static_cast<double>(v);
    s.mean_recovery_steps = total / static_cast<double>(s.recovery_steps.size());
  }
  return s;
}

Schedule Schedule::from_rates(double filter_hz, double guidance_hz) {
  if (!(filter_hz > 0.0) || !(guidance_hz > 0.0)) throw ConfigError("rates must be positive");
  for (int m = 1; m <= 1000; ++m) {
    const double tick = filter_hz * m;
    const double g = tick / guidance_hz;
    const double rounded = std::round(g);
    if (rounded >= 1.0 && std::abs(g - rounded) <= 1e-9 * g) {
      return {tick, m, static_cast<int>(rounded)};
    }
  }
  throw ConfigError("filter and guidance rates have no common clock within 1000 filter subdivisions");
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

bool needs_model(const SimConfig& cfg) {
  return cfg.motion_model == MotionModelKind::kDmmn || cfg.guidance == Policy::kDmmnEer;
}

/// Box of +-3 measurement sigmas around z, intersected with the workspace.
Rect recovery_box(const Pose2& z, const MeasurementModel& mm, const Rect& bounds) {
  const Pose2 s = mm.sigmas() * 3.0;
  Rect r{std::max(bounds.min_x, z.x - s.x), std::max(bounds.min_y, z.y - s.y), std::min(bounds.max_x, z.x + s.x),
         std::min(bounds.max_y, z.y + s.y)};
  return r.valid() ? r : bounds;
}

}  // namespace

EpisodeLog run_episode(const SimConfig& cfg, std::shared_ptr<const DmmnParams> model, const EpisodeHooks& hooks) {
  cfg.validate();
  if (needs_model(cfg)) {
    if (!model) throw ConfigError("this configuration needs DMMN weights");
    if (model->hyper.k_in != cfg.filter.k_in) throw ConfigError("DMMN window length differs from filter.K_in");
  }
  const Schedule sched = Schedule::from_rates(cfg.rates.filter_hz, cfg.rates.guidance_hz);
  const double tick_dt = 1.0 / sched.tick_hz;
  const double filter_dt = 1.0 / cfg.rates.filter_hz;
  const long n_ticks = static_cast<long>(std::floor(cfg.duration * sched.tick_hz + 1e-9));

  Rng target_rng = make_stream(cfg.seed, Stream::kTarget);
  Rng measurement_rng = make_stream(cfg.seed, Stream::kMeasurement);
  Rng filter_rng = make_stream(cfg.seed, Stream::kFilter);
  Rng planner_rng = make_stream(cfg.seed, Stream::kPlanner);

  const Workspace& ws = cfg.workspace;
  const MeasurementModel mm(cfg.measurement_cov);
  const EerConfig eer_cfg = cfg.planner_config();
  std::unique_ptr<MotionModel> motion;
  if (cfg.motion_model == MotionModelKind::kDmmn) {
    motion = std::make_unique<DmmnMotionModel>(model);
  } else {
    motion = std::make_unique<ConstantVelocityModel>(RoadNetwork::kMaxTargetSpeed);
  }

  TargetTruth truth = initial_truth(cfg.road_network, target_rng);
  AgentState agent{cfg.agent_start, cfg.agent_max_speed, cfg.fov_half_extents};
  ParticleSet ps = init_particles(ws.bounds, cfg.filter.n, cfg.filter.k_in, filter_dt, filter_rng, 0.0);
  LawnState lawn = LawnState::start(SensorFootprint({0.0, 0.0}, cfg.fov_half_extents), cfg.lawn_row_spacing);

  GuidanceDecision decision;
  decision.waypoint = agent.position;
  double decision_time = 0.0;
  std::optional<Pose2> last_z;

  EpisodeLog log;
  log.policy = cfg.guidance;
  log.seed = cfg.seed;
  log.records.reserve(static_cast<std::size_t>(n_ticks / sched.filter_every + 1));
  log.target_path.reserve(static_cast<std::size_t>(n_ticks + 1));
  std::vector<double> filter_ms, guidance_ms;

  for (long n = 0; n <= n_ticks; ++n) {
    const double t = static_cast<double>(n) * tick_dt;
    log.target_path.push_back(truth.pose);
    const bool filter_due = n % sched.filter_every == 0;
    const bool guidance_due = n % sched.guidance_every == 0;

    if (filter_due) {
      const auto start = Clock::now();
      StepRecord rec;
      rec.k = n / sched.filter_every;
      rec.t = t;
      rec.truth = truth.pose;
      rec.agent = agent.position;
      rec.occluded = is_occluded(ws, truth.pose);
      rec.in_fov = fov_contains(agent.fov(), truth.pose);
      rec.z = synth_measurement(truth.pose, agent, ws, mm, measurement_rng);
      if (rec.k > 0) ps = restrict_to(predict(ps, *motion, cfg.sigma_p, filter_rng), ws.bounds);
      if (rec.z) {
        ps = update(ps, *rec.z, mm);
      } else if (cfg.filter.detection_probability > 0.0) {
        ps = update_missed(ps, agent.fov(), cfg.filter.detection_probability);
      }
      rec.mean = weighted_mean(ps);
      rec.det_cov = covariance(ps).determinant();
      rec.e = tracking_error(agent.position, truth.pose);
      rec.e_est = distance(rec.mean, truth.pose);
      const Rect region = rec.z ? recovery_box(*rec.z, mm, ws.bounds) : ws.bounds;
      ps = resample(ps, cfg.filter.thresholds, region, filter_rng);
      rec.resample = ps.last_resample;
      last_z = rec.z;
      filter_ms.push_back(elapsed_ms(start));
      if (hooks.on_particles) hooks.on_particles(rec.k, ps);
      log.records.push_back(rec);
    }

    if (guidance_due) {
      const auto start = Clock::now();
      switch (cfg.guidance) {
        case Policy::kDmmnEer:
          decision = policy_dmmn_eer(ps, agent.position, cfg.agent_max_speed, filter_dt, *model, eer_cfg, ws,
                                     planner_rng, last_z);
          if (hooks.on_eer) hooks.on_eer(log.records.back().k, *decision.eer);
          break;
        case Policy::kLawn: {
          auto [d, next] = policy_lawn(lawn, last_z, agent.position, ws, cfg.fov_half_extents);
          decision = d;
          lawn = next;
          break;
        }
        case Policy::kPfwm:
          decision = policy_pfwm(ps, ws.bounds);
          break;
        case Policy::kTruth:
          decision = policy_truth(truth.pose, ws.bounds);
          break;
      }
      decision_time = t;
      guidance_ms.push_back(elapsed_ms(start));
    }

    if (filter_due) {
      log.records.back().waypoint = decision.waypoint;
      log.records.back().mode = decision.mode;
    }

    if (n == n_ticks) break;
    truth = step_target(cfg.road_network, truth, tick_dt, target_rng);
    // Waypoints with a deadline are approached so as to arrive on time rather than early.
    AgentState paced = agent;
    if (decision.time_to_go > 0.0) {
      const double remaining = std::max(decision.time_to_go - (t - decision_time), tick_dt);
      paced.max_speed = std::min(agent.max_speed, distance(agent.position, decision.waypoint) / remaining);
    }
    agent.position = step_agent(paced, decision.waypoint, tick_dt, ws.bounds).position;
  }

  log.summary = summarize(log.records);
  auto stats = [](const std::vector<double>& v, double& mean, double& max) {
    if (v.empty()) return;
    double total = 0.0;
    for (double x : v) {
      total += x;
      max = std::max(max, x);
    }
    mean = total / static_cast<double>(v.size());
  };
  stats(filter_ms, log.summary.mean_filter_ms, log.summary.max_filter_ms);
  stats(guidance_ms, log.summary.mean_guidance_ms, log.summary.max_guidance_ms);
  return log;
}

DmmnParams train_from_config(const SimConfig& cfg, TrainReport* report) {
  const double dt = 1.0 / cfg.rates.filter_hz;
  Rng rng = make_stream(cfg.train.optimizer.seed, Stream::kTarget);
  const auto trajectory = generate_trajectory(cfg.road_network, cfg.train.trajectory_duration, dt, rng);
  DmmnHyper hyper = cfg.train.hyper;
  hyper.k_in = cfg.filter.k_in;
  return train(trajectory, dt, hyper, cfg.train.optimizer, report);
}

std::shared_ptr<const DmmnParams> obtain_model(const SimConfig& cfg, TrainReport* report) {
  if (!cfg.model_weights.empty()) {
    auto p = std::make_shared<DmmnParams>(load_weights(cfg.model_weights));
    if (p->hyper.k_in != cfg.filter.k_in) throw ConfigError("weights file window length differs from filter.K_in");
    return p;
  }
  return std::make_shared<DmmnParams>(train_from_config(cfg, report));
}

CompareResult compare(const SimConfig& cfg, std::shared_ptr<const DmmnParams> model,
                      const std::vector<std::uint64_t>& seeds, const std::vector<Policy>& policies,
                      unsigned threads) {
  if (seeds.empty() || policies.empty()) throw ConfigError("compare needs at least one seed and one policy");
  const std::size_t total = seeds.size() * policies.size();
  CompareResult out;
  out.logs.resize(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        SimConfig c = cfg;
        c.guidance = policies[i / seeds.size()];
        c.seed = seeds[i % seeds.size()];
        out.logs[i] = run_episode(c, model);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, total));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t p = 0; p < policies.size(); ++p) {
    CompareRow agg;
    agg.policy = policies[p];
    agg.seed = "mean";
    const double n = static_cast<double>(seeds.size());
    double recovery_total = 0.0;
    std::size_t recovery_events = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const EpisodeSummary& sum = out.logs[p * seeds.size() + s].summary;
      CompareRow row{policies[p], std::to_string(seeds[s]), sum.mean_e, sum.mean_e_est, sum.mean_det_cov,
                     sum.pct_observed, sum.mean_recovery_steps};
      out.runs.push_back(row);
      agg.mean_e += row.mean_e / n;
      agg.mean_e_est += row.mean_e_est / n;
      agg.mean_det_cov += row.mean_det_cov / n;
      agg.pct_observed += row.pct_observed / n;
      for (long v : sum.recovery_steps) recovery_total += static_cast<double>(v);
      recovery_events += sum.recovery_steps.size();
    }
    // Pooled over every occlusion exit of every seed.
    if (recovery_events > 0) agg.mean_recovery_steps = recovery_total / static_cast<double>(recovery_events);
    out.aggregates.push_back(agg);
  }
  return out;
}

}  // namespace eertrack
