#pragma once

#include <Eigen/Core>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "eertrack/geometry.hpp"
#include "eertrack/rng.hpp"

namespace eertrack {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// K_in consecutive positions (oldest first) with their timestamps in seconds.
/// Timestamps only matter relative to the newest one, so gaps from missed
/// detections are carried through to the positional encoding.
struct HistoryWindow {
  std::vector<Pose2> poses;
  std::vector<double> times;
  double dt = 1.0 / 3.0;
  /// Seeded without any observed motion (initialization or lost-track recovery).
  bool fresh = false;

  std::size_t size() const { return poses.size(); }
  const Pose2& newest() const { return poses.back(); }

  /// Throws ConfigError unless the window has exactly `k_in` entries with strictly increasing times.
  void validate(std::size_t k_in) const;

  /// Evenly spaced window ending at time `t_last`.
  static HistoryWindow uniform(std::vector<Pose2> poses, double dt, double t_last = 0.0);
  /// `k_in` copies of one position, evenly spaced in time.
  static HistoryWindow constant(const Pose2& p, std::size_t k_in, double dt, double t_last = 0.0);

  /// Drop the oldest entry and append `p` one nominal step after the newest; clears `fresh`.
  void push(const Pose2& p);

  HistoryWindow translated(const Pose2& shift) const;
};

/// Returns the window expressed relative to its newest pose, and that pose.
std::pair<HistoryWindow, Pose2> center_window(const HistoryWindow& w);

struct DmmnHyper {
  int d_model = 32;
  int heads = 4;
  int layers = 2;
  int d_ff = 64;
  int k_in = 10;
  /// Seconds per unit of encoded time (the nominal sampling period).
  double time_scale = 1.0 / 3.0;
  /// Meters per network unit for inputs and outputs.
  double pos_scale = 0.25;

  void validate() const;
};

struct EncoderLayerParams {
  RowVec ln1_gain, ln1_bias;
  Mat wq, wk, wv, wo;
  RowVec bq, bk, bv, bo;
  RowVec ln2_gain, ln2_bias;
  Mat w1, w2;
  RowVec b1, b2;
};

/// Weights of the transformer motion model: linear position embedding plus
/// sinusoidal time encoding, pre-norm multi-head encoder layers, final layer
/// norm and a linear decoder reading the newest token. The decoder output is a
/// displacement in centered coordinates.
struct DmmnParams {
  DmmnHyper hyper;
  Mat embed_w;  // 2 x d
  RowVec embed_b;
  RowVec pe_freq;  // d/2 angular frequencies (rad per second); fixed, not trained
  std::vector<EncoderLayerParams> layers;
  RowVec final_gain, final_bias;
  Mat decoder_w;  // d x 2
  RowVec decoder_b;

  double train_loss = 0.0;       // final epoch, m^2
  double validation_loss = 0.0;  // m^2

  /// Xavier-uniform weights, unit gains, zero biases and a zero decoder.
  static DmmnParams initialize(const DmmnHyper& hyper, Rng& rng);
  /// Same shapes as `like`, every entry zero (gradient accumulator).
  static DmmnParams zeros_like(const DmmnParams& like);

  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Visits every trained tensor of `p` (const or not) in the fixed serialization order.
template <class Params, class F>
  requires std::same_as<std::remove_const_t<Params>, DmmnParams>
void visit_tensors(Params& p, F&& f) {
  f(p.embed_w);
  f(p.embed_b);
  for (auto& l : p.layers) {
    f(l.ln1_gain);
    f(l.ln1_bias);
    f(l.wq);
    f(l.bq);
    f(l.wk);
    f(l.bk);
    f(l.wv);
    f(l.bv);
    f(l.wo);
    f(l.bo);
    f(l.ln2_gain);
    f(l.ln2_bias);
    f(l.w1);
    f(l.b1);
    f(l.w2);
    f(l.b2);
  }
  f(p.final_gain);
  f(p.final_bias);
  f(p.decoder_w);
  f(p.decoder_b);
}

/// One-step prediction of the next position.
Pose2 forward(const DmmnParams& p, const HistoryWindow& w);

/// One-step predictions for many windows at once; same result as calling forward on each.
std::vector<Pose2> forward_batch(const DmmnParams& p, std::span<const HistoryWindow> windows);

/// Feeds predictions back K times; returns the K-th prediction.
Pose2 rollout(const DmmnParams& p, const HistoryWindow& w, int steps);
std::vector<Pose2> rollout_batch(const DmmnParams& p, std::span<const HistoryWindow> windows, int steps);

/// A centered training pair: window and the displacement of the next pose from its newest pose.
struct TrainingSample {
  HistoryWindow window;
  Pose2 displacement;
};

/// Element 0-7 of the square's symmetry group (rotations, then mirrored rotations), applied about the newest pose.
TrainingSample apply_symmetry(const TrainingSample& s, int element);

/// Slides a K_in window over an evenly sampled trajectory.
std::vector<TrainingSample> make_samples(std::span<const Pose2> trajectory, double dt, int k_in);

/// Mean squared displacement error (m^2) over the samples, and its gradient when `grad` is non-null.
double loss_and_gradient(const DmmnParams& p, std::span<const TrainingSample> samples, DmmnParams* grad);

struct TrainConfig {
  double learning_rate = 2e-3;
  int batch_size = 32;
  int epochs = 12;
  double validation_fraction = 0.1;
  std::uint64_t seed = 7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Each training sample is rotated by a multiple of 90 degrees and optionally mirrored
  /// about its newest pose, so the network carries no preferred heading.
  bool augment_symmetries = false;
  /// Extra training samples, as a fraction of the training split, showing a parked target:
  /// a constant window with zero displacement.
  double stationary_fraction = 0.0;
  /// Standard deviation (m) of Gaussian jitter added to every window pose during training, matching
  /// the process noise that particle histories accumulate. The target stays the clean next pose.
  double input_noise = 0.0;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, m^2
  std::vector<double> validation_loss;
};

/// Adam on mean squared displacement error. Validation uses the chronologically last windows.
DmmnParams train(std::span<const Pose2> trajectory, double dt, const DmmnHyper& hyper, const TrainConfig& cfg,
                 TrainReport* report = nullptr);

/// Weights file: magic "EERDMMN\0", u32 format version, i32 d_model, heads, layers, d_ff, k_in,
/// f64 time_scale, pos_scale, train_loss, validation_loss, then pe_freq and every tensor of
/// visit_tensors in order, row-major, all values little-endian.
inline constexpr std::uint32_t kWeightsFormatVersion = 1;
void save_weights(const DmmnParams& p, const std::string& path);
DmmnParams load_weights(const std::string& path);

}  // namespace eertrack
