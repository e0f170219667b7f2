#include "eertrack/dmmn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "eertrack/errors.hpp"

namespace eertrack {

// ---------------------------------------------------------------------------
// History windows

void HistoryWindow::validate(std::size_t k_in) const {
  if (poses.size() != k_in || times.size() != k_in) {
    throw ConfigError("history window must hold exactly " + std::to_string(k_in) + " poses");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw ConfigError("history window timestamps must be strictly increasing");
  }
}

HistoryWindow HistoryWindow::uniform(std::vector<Pose2> poses, double dt, double t_last) {
  HistoryWindow w;
  w.dt = dt;
  const std::size_t n = poses.size();
  w.times.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.times[i] = t_last - static_cast<double>(n - 1 - i) * dt;
  w.poses = std::move(poses);
  return w;
}

HistoryWindow HistoryWindow::constant(const Pose2& p, std::size_t k_in, double dt, double t_last) {
  return uniform(std::vector<Pose2>(k_in, p), dt, t_last);
}

void HistoryWindow::push(const Pose2& p) {
  const double t = times.back() + dt;
  std::rotate(poses.begin(), poses.begin() + 1, poses.end());
  std::rotate(times.begin(), times.begin() + 1, times.end());
  poses.back() = p;
  times.back() = t;
  fresh = false;
}

HistoryWindow HistoryWindow::translated(const Pose2& shift) const {
  HistoryWindow w = *this;
  for (auto& p : w.poses) p += shift;
  return w;
}

std::pair<HistoryWindow, Pose2> center_window(const HistoryWindow& w) {
  const Pose2 offset = w.newest();
  HistoryWindow centered = w;
  for (auto& p : centered.poses) p = p - offset;
  return {std::move(centered), offset};
}

// ---------------------------------------------------------------------------
// Parameters

void DmmnHyper::validate() const {
  if (d_model <= 0 || heads <= 0 || layers <= 0 || d_ff <= 0 || k_in < 2) {
    throw ConfigError("DMMN sizes must be positive and k_in >= 2");
  }
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by the number of heads");
  if (d_model % 2 != 0) throw ConfigError("d_model must be even for the time encoding");
  if (!(time_scale > 0.0) || !(pos_scale > 0.0)) throw ConfigError("time_scale and pos_scale must be positive");
}

namespace {

void xavier(Mat& m, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -a, a);
}

std::vector<std::span<double>> tensor_spans(DmmnParams& p) {
  std::vector<std::span<double>> out;
  visit_tensors(p, [&](auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

}  // namespace

DmmnParams DmmnParams::initialize(const DmmnHyper& hyper, Rng& rng) {
  hyper.validate();
  const int d = hyper.d_model;
  DmmnParams p;
  p.hyper = hyper;
  p.embed_w = Mat(2, d);
  xavier(p.embed_w, rng);
  p.embed_b = RowVec::Zero(d);
  p.pe_freq = RowVec(d / 2);
  for (int i = 0; i < d / 2; ++i) {
    p.pe_freq(i) = std::pow(100.0, -2.0 * i / d) / hyper.time_scale;
  }
  for (int l = 0; l < hyper.layers; ++l) {
    EncoderLayerParams e;
    e.ln1_gain = RowVec::Ones(d);
    e.ln1_bias = RowVec::Zero(d);
    for (Mat* w : {&e.wq, &e.wk, &e.wv, &e.wo}) {
      *w = Mat(d, d);
      xavier(*w, rng);
    }
    e.bq = e.bk = e.bv = e.bo = RowVec::Zero(d);
    e.ln2_gain = RowVec::Ones(d);
    e.ln2_bias = RowVec::Zero(d);
    e.w1 = Mat(d, hyper.d_ff);
    xavier(e.w1, rng);
    e.b1 = RowVec::Zero(hyper.d_ff);
    e.w2 = Mat(hyper.d_ff, d);
    xavier(e.w2, rng);
    e.b2 = RowVec::Zero(d);
    p.layers.push_back(std::move(e));
  }
  p.final_gain = RowVec::Ones(d);
  p.final_bias = RowVec::Zero(d);
  p.decoder_w = Mat::Zero(d, 2);
  p.decoder_b = RowVec::Zero(2);
  return p;
}

DmmnParams DmmnParams::zeros_like(const DmmnParams& like) {
  DmmnParams z = like;
  visit_tensors(z, [](auto& t) { t.setZero(); });
  z.train_loss = z.validation_loss = 0.0;
  return z;
}

std::size_t DmmnParams::parameter_count() const {
  std::size_t n = 0;
  visit_tensors(*this, [&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

bool DmmnParams::all_finite() const {
  bool ok = pe_freq.allFinite();
  visit_tensors(*this, [&](const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

// ---------------------------------------------------------------------------
// Network evaluation

namespace {

constexpr double kLayerNormEps = 1e-5;

struct LnCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

Mat layer_norm(const Mat& x, const RowVec& gain, const RowVec& bias, LnCache* cache) {
  const Eigen::Index rows = x.rows();
  const double n = static_cast<double>(x.cols());
  Mat xhat(rows, x.cols());
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / n;
    const auto centered = x.row(r).array() - mean;
    const double var = centered.square().sum() / n;
    inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = centered * inv_std(r);
  }
  Mat y = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Mat layer_norm_backward(const Mat& dy, const RowVec& gain, const LnCache& c, RowVec& dgain, RowVec& dbias) {
  dgain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const double n = static_cast<double>(dy.cols());
  Mat dxhat = dy.array().rowwise() * gain.array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / n;
    const double mean_dx = dxhat.row(r).dot(c.xhat.row(r)) / n;
    dx.row(r) = (dxhat.row(r).array() - mean_d - c.xhat.row(r).array() * mean_dx) * c.inv_std(r);
  }
  return dx;
}

struct LayerCache {
  LnCache ln1;
  Mat a;   // normalized input, all tokens
  Mat q;   // query tokens
  Mat k, v;
  std::vector<Mat> probs;  // per (sample, head): Tq x T
  Mat o;
  Mat h1;
  LnCache ln2;
  Mat c;
  Mat z;
};

struct ForwardCache {
  Mat x;
  std::vector<LayerCache> layers;
  LnCache final_ln;
  Mat hf;
};

/// Gathers every query row: all tokens, or only the newest token of each sample.
Mat gather_queries(const Mat& m, Eigen::Index batch, Eigen::Index tokens, Eigen::Index q_tokens) {
  if (q_tokens == tokens) return m;
  Mat out(batch, m.cols());
  for (Eigen::Index b = 0; b < batch; ++b) out.row(b) = m.row(b * tokens + tokens - 1);
  return out;
}

void scatter_queries_add(Mat& dst, const Mat& src, Eigen::Index batch, Eigen::Index tokens, Eigen::Index q_tokens) {
  if (q_tokens == tokens) {
    dst += src;
    return;
  }
  for (Eigen::Index b = 0; b < batch; ++b) dst.row(b * tokens + tokens - 1) += src.row(b);
}

Mat encoder_layer(const EncoderLayerParams& lp, const Mat& h_in, Eigen::Index batch, Eigen::Index tokens,
                  Eigen::Index q_tokens, int heads, LayerCache* cache) {
  const Eigen::Index d = h_in.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  LnCache ln1;
  Mat a = layer_norm(h_in, lp.ln1_gain, lp.ln1_bias, cache ? &ln1 : nullptr);
  const Mat aq = gather_queries(a, batch, tokens, q_tokens);
  Mat q = (aq * lp.wq).rowwise() + lp.bq;
  Mat k = (a * lp.wk).rowwise() + lp.bk;
  Mat v = (a * lp.wv).rowwise() + lp.bv;

  Mat o(batch * q_tokens, d);
  std::vector<Mat> probs;
  if (cache) probs.reserve(static_cast<std::size_t>(batch * heads));
  Mat s(q_tokens, tokens);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int hd = 0; hd < heads; ++hd) {
      const auto qb = q.block(b * q_tokens, hd * dh, q_tokens, dh);
      const auto kb = k.block(b * tokens, hd * dh, tokens, dh);
      const auto vb = v.block(b * tokens, hd * dh, tokens, dh);
      s.noalias() = qb * kb.transpose();
      s *= scale;
      for (Eigen::Index r = 0; r < q_tokens; ++r) {
        const double m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
      }
      o.block(b * q_tokens, hd * dh, q_tokens, dh).noalias() = s * vb;
      if (cache) probs.push_back(s);
    }
  }

  Mat h1 = gather_queries(h_in, batch, tokens, q_tokens);
  h1.noalias() += o * lp.wo;
  h1.rowwise() += lp.bo;

  LnCache ln2;
  Mat c = layer_norm(h1, lp.ln2_gain, lp.ln2_bias, cache ? &ln2 : nullptr);
  Mat z = (c * lp.w1).rowwise() + lp.b1;
  Mat out = h1;
  out.noalias() += z.cwiseMax(0.0) * lp.w2;
  out.rowwise() += lp.b2;

  if (cache) {
    cache->ln1 = std::move(ln1);
    cache->a = std::move(a);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->o = std::move(o);
    cache->h1 = std::move(h1);
    cache->ln2 = std::move(ln2);
    cache->c = std::move(c);
    cache->z = std::move(z);
  }
  return out;
}

/// Backward through one encoder layer; returns the gradient w.r.t. its input (all tokens).
Mat encoder_layer_backward(const EncoderLayerParams& lp, const LayerCache& c, const Mat& d_out, Eigen::Index batch,
                           Eigen::Index tokens, Eigen::Index q_tokens, int heads, EncoderLayerParams& g) {
  const Eigen::Index d = d_out.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Feed-forward block.
  const Mat r = c.z.cwiseMax(0.0);
  g.w2.noalias() += r.transpose() * d_out;
  g.b2 += d_out.colwise().sum();
  Mat dz = d_out * lp.w2.transpose();
  dz = dz.cwiseProduct((c.z.array() > 0.0).cast<double>().matrix());
  g.w1.noalias() += c.c.transpose() * dz;
  g.b1 += dz.colwise().sum();
  const Mat dc = dz * lp.w1.transpose();
  Mat dh1 = d_out + layer_norm_backward(dc, lp.ln2_gain, c.ln2, g.ln2_gain, g.ln2_bias);

  // Attention output projection.
  g.wo.noalias() += c.o.transpose() * dh1;
  g.bo += dh1.colwise().sum();
  const Mat d_o = dh1 * lp.wo.transpose();

  Mat dq = Mat::Zero(c.q.rows(), d);
  Mat dk = Mat::Zero(c.k.rows(), d);
  Mat dv = Mat::Zero(c.v.rows(), d);
  std::size_t idx = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int hd = 0; hd < heads; ++hd, ++idx) {
      const Mat& p = c.probs[idx];
      const auto dob = d_o.block(b * q_tokens, hd * dh, q_tokens, dh);
      const auto qb = c.q.block(b * q_tokens, hd * dh, q_tokens, dh);
      const auto kb = c.k.block(b * tokens, hd * dh, tokens, dh);
      const auto vb = c.v.block(b * tokens, hd * dh, tokens, dh);
      dv.block(b * tokens, hd * dh, tokens, dh).noalias() += p.transpose() * dob;
      Mat dp = dob * vb.transpose();
      Mat ds(q_tokens, tokens);
      for (Eigen::Index row = 0; row < q_tokens; ++row) {
        const double dot = dp.row(row).dot(p.row(row));
        ds.row(row) = p.row(row).array() * (dp.row(row).array() - dot);
      }
      ds *= scale;
      dq.block(b * q_tokens, hd * dh, q_tokens, dh).noalias() += ds * kb;
      dk.block(b * tokens, hd * dh, tokens, dh).noalias() += ds.transpose() * qb;
    }
  }

  const Mat aq = gather_queries(c.a, batch, tokens, q_tokens);
  g.wq.noalias() += aq.transpose() * dq;
  g.bq += dq.colwise().sum();
  g.wk.noalias() += c.a.transpose() * dk;
  g.bk += dk.colwise().sum();
  g.wv.noalias() += c.a.transpose() * dv;
  g.bv += dv.colwise().sum();

  Mat da = dk * lp.wk.transpose();
  da.noalias() += dv * lp.wv.transpose();
  scatter_queries_add(da, dq * lp.wq.transpose(), batch, tokens, q_tokens);

  Mat d_in = layer_norm_backward(da, lp.ln1_gain, c.ln1, g.ln1_gain, g.ln1_bias);
  scatter_queries_add(d_in, dh1, batch, tokens, q_tokens);
  return d_in;
}

/// Token matrix for a batch of windows: centered, scaled positions (B*T x 2) and time encodings.
Mat embed(const DmmnParams& p, std::span<const HistoryWindow* const> windows, Mat* x_out) {
  const auto tokens = static_cast<Eigen::Index>(p.hyper.k_in);
  const auto batch = static_cast<Eigen::Index>(windows.size());
  const Eigen::Index d = p.hyper.d_model;
  const double inv_scale = 1.0 / p.hyper.pos_scale;
  Mat x(batch * tokens, 2);
  Mat h(batch * tokens, d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const HistoryWindow& w = *windows[static_cast<std::size_t>(b)];
    if (static_cast<Eigen::Index>(w.size()) != tokens || w.times.size() != w.poses.size()) {
      throw ConfigError("DMMN window length must equal k_in = " + std::to_string(tokens));
    }
    const Pose2 offset = w.newest();
    const double t_last = w.times.back();
    for (Eigen::Index t = 0; t < tokens; ++t) {
      const Pose2 c = w.poses[static_cast<std::size_t>(t)] - offset;
      const Eigen::Index row = b * tokens + t;
      x(row, 0) = c.x * inv_scale;
      x(row, 1) = c.y * inv_scale;
      const double tau = w.times[static_cast<std::size_t>(t)] - t_last;
      for (Eigen::Index i = 0; i < d / 2; ++i) {
        const double angle = tau * p.pe_freq(i);
        h(row, 2 * i) = std::sin(angle);
        h(row, 2 * i + 1) = std::cos(angle);
      }
    }
  }
  h.noalias() += x * p.embed_w;
  h.rowwise() += p.embed_b;
  if (x_out) *x_out = std::move(x);
  return h;
}

/// Network output (scaled displacement), one row per window.
Mat run_network(const DmmnParams& p, std::span<const HistoryWindow* const> windows, ForwardCache* cache) {
  const auto tokens = static_cast<Eigen::Index>(p.hyper.k_in);
  const auto batch = static_cast<Eigen::Index>(windows.size());
  Mat h = embed(p, windows, cache ? &cache->x : nullptr);
  if (cache) cache->layers.resize(p.layers.size());
  Eigen::Index rows_per_sample = tokens;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    // Only the newest token feeds the decoder, so the last layer evaluates that query alone.
    const Eigen::Index q_tokens = (l + 1 == p.layers.size()) ? 1 : tokens;
    h = encoder_layer(p.layers[l], h, batch, rows_per_sample, q_tokens, p.hyper.heads,
                      cache ? &cache->layers[l] : nullptr);
    rows_per_sample = q_tokens;
    if (!h.allFinite()) throw NumericError("DMMN encoder layer " + std::to_string(l), "non-finite activation");
  }
  Mat hf = layer_norm(h, p.final_gain, p.final_bias, cache ? &cache->final_ln : nullptr);
  Mat out = (hf * p.decoder_w).rowwise() + p.decoder_b;
  if (!out.allFinite()) throw NumericError("DMMN decoder", "non-finite output");
  if (cache) cache->hf = std::move(hf);
  return out;
}

std::vector<const HistoryWindow*> pointers(std::span<const HistoryWindow> windows) {
  std::vector<const HistoryWindow*> ptrs(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) ptrs[i] = &windows[i];
  return ptrs;
}

}  // namespace

Pose2 forward(const DmmnParams& p, const HistoryWindow& w) {
  return forward_batch(p, std::span<const HistoryWindow>(&w, 1)).front();
}

std::vector<Pose2> forward_batch(const DmmnParams& p, std::span<const HistoryWindow> windows) {
  std::vector<Pose2> result(windows.size());
  if (windows.empty()) return result;
  const auto ptrs = pointers(windows);
  const Mat out = run_network(p, ptrs, nullptr);
  const double s = p.hyper.pos_scale;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    result[i] = windows[i].newest() + Pose2{out(r, 0) * s, out(r, 1) * s};
  }
  return result;
}

Pose2 rollout(const DmmnParams& p, const HistoryWindow& w, int steps) {
  return rollout_batch(p, std::span<const HistoryWindow>(&w, 1), steps).front();
}

std::vector<Pose2> rollout_batch(const DmmnParams& p, std::span<const HistoryWindow> windows, int steps) {
  if (steps < 1) throw ConfigError("rollout horizon must be at least 1");
  std::vector<HistoryWindow> work(windows.begin(), windows.end());
  std::vector<Pose2> pred;
  for (int s = 0; s < steps; ++s) {
    pred = forward_batch(p, work);
    if (s + 1 < steps) {
      for (std::size_t i = 0; i < work.size(); ++i) work[i].push(pred[i]);
    }
  }
  return pred;
}

// ---------------------------------------------------------------------------
// Training

std::vector<TrainingSample> make_samples(std::span<const Pose2> trajectory, double dt, int k_in) {
  std::vector<TrainingSample> samples;
  const auto k = static_cast<std::size_t>(k_in);
  if (trajectory.size() <= k) return samples;
  samples.reserve(trajectory.size() - k);
  for (std::size_t end = k; end < trajectory.size(); ++end) {
    std::vector<Pose2> poses(trajectory.begin() + static_cast<std::ptrdiff_t>(end - k),
                             trajectory.begin() + static_cast<std::ptrdiff_t>(end));
    TrainingSample s;
    s.window = HistoryWindow::uniform(std::move(poses), dt, static_cast<double>(end - 1) * dt);
    s.displacement = trajectory[end] - s.window.newest();
    samples.push_back(std::move(s));
  }
  return samples;
}

double loss_and_gradient(const DmmnParams& p, std::span<const TrainingSample> samples, DmmnParams* grad) {
  if (samples.empty()) throw ConfigError("loss requires at least one sample");
  std::vector<const HistoryWindow*> ptrs(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) ptrs[i] = &samples[i].window;
  ForwardCache cache;
  const Mat out = run_network(p, ptrs, grad ? &cache : nullptr);

  const double s = p.hyper.pos_scale;
  const auto batch = static_cast<Eigen::Index>(samples.size());
  Mat err(batch, 2);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Pose2& y = samples[static_cast<std::size_t>(b)].displacement;
    err(b, 0) = out(b, 0) - y.x / s;
    err(b, 1) = out(b, 1) - y.y / s;
  }
  const double loss = s * s * err.squaredNorm() / static_cast<double>(batch);
  if (!grad) return loss;

  const auto tokens = static_cast<Eigen::Index>(p.hyper.k_in);
  const Mat d_out = err * (2.0 * s * s / static_cast<double>(batch));
  grad->decoder_w.noalias() += cache.hf.transpose() * d_out;
  grad->decoder_b += d_out.colwise().sum();
  const Mat dhf = d_out * p.decoder_w.transpose();
  Mat dh = layer_norm_backward(dhf, p.final_gain, cache.final_ln, grad->final_gain, grad->final_bias);

  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const Eigen::Index q_tokens = (l + 1 == p.layers.size()) ? 1 : tokens;
    dh = encoder_layer_backward(p.layers[l], cache.layers[l], dh, batch, tokens, q_tokens, p.hyper.heads,
                                grad->layers[l]);
  }
  grad->embed_w.noalias() += cache.x.transpose() * dh;
  grad->embed_b += dh.colwise().sum();
  return loss;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0, 1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("moment coefficients must lie in [0, 1)");
  }
  if (!(input_noise >= 0.0)) throw ConfigError("input noise must be non-negative");
  if (!(stationary_fraction >= 0.0 && stationary_fraction <= 1.0)) {
    throw ConfigError("stationary fraction must lie in [0, 1]");
  }
}

TrainingSample apply_symmetry(const TrainingSample& s, int element) {
  if (element < 0 || element > 7) throw ConfigError("symmetry element must lie in [0, 7]");
  auto map = [element](const Pose2& d) {
    Pose2 r = d;
    for (int q = 0; q < element % 4; ++q) r = {-r.y, r.x};
    if (element >= 4) r.y = -r.y;
    return r;
  };
  TrainingSample out = s;
  const Pose2 anchor = s.window.newest();
  for (auto& p : out.window.poses) p = anchor + map(p - anchor);
  out.displacement = map(s.displacement);
  return out;
}

DmmnParams train(std::span<const Pose2> trajectory, double dt, const DmmnHyper& hyper, const TrainConfig& cfg,
                 TrainReport* report) {
  hyper.validate();
  cfg.validate();
  if (trajectory.size() <= static_cast<std::size_t>(hyper.k_in) + 1) {
    throw ConfigError("insufficient training data: trajectory must be longer than k_in + 1 poses");
  }
  DmmnHyper h = hyper;
  h.time_scale = dt;
  Rng rng = make_stream(cfg.seed, Stream::kTraining);
  DmmnParams params = DmmnParams::initialize(h, rng);

  const std::vector<TrainingSample> samples = make_samples(trajectory, dt, h.k_in);
  auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(samples.size())));
  if (n_val >= samples.size()) n_val = samples.size() - 1;
  const std::size_t n_train = samples.size() - n_val;
  std::vector<TrainingSample> train_samples(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  const auto n_stationary =
      static_cast<std::size_t>(std::round(cfg.stationary_fraction * static_cast<double>(n_train)));
  for (std::size_t i = 0; i < n_stationary; ++i) {
    const TrainingSample& donor = samples[static_cast<std::size_t>(rng() % n_train)];
    TrainingSample s;
    s.window = HistoryWindow::constant(donor.window.newest(), static_cast<std::size_t>(h.k_in), dt,
                                       donor.window.times.back());
    s.displacement = {0.0, 0.0};
    train_samples.push_back(std::move(s));
  }
  const std::span<const TrainingSample> train_set(train_samples);
  const std::span<const TrainingSample> val_set(samples.data() + n_train, n_val);

  DmmnParams m1 = DmmnParams::zeros_like(params);
  DmmnParams m2 = DmmnParams::zeros_like(params);
  DmmnParams grad = DmmnParams::zeros_like(params);
  auto p_spans = tensor_spans(params);
  auto g_spans = tensor_spans(grad);
  auto m1_spans = tensor_spans(m1);
  auto m2_spans = tensor_spans(m2);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainingSample> batch;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train_set[order[i]]);
        TrainingSample& s = batch.back();
        if (cfg.input_noise > 0.0) {
          const Pose2 next = s.window.newest() + s.displacement;
          for (auto& p : s.window.poses) p += Pose2{standard_normal(rng), standard_normal(rng)} * cfg.input_noise;
          s.displacement = next - s.window.newest();
        }
        if (cfg.augment_symmetries) s = apply_symmetry(s, static_cast<int>(rng() % 8));
      }
      for (auto& g : g_spans) std::fill(g.begin(), g.end(), 0.0);
      const double loss = loss_and_gradient(params, batch, &grad);
      if (!std::isfinite(loss)) {
        throw NumericError("DMMN training", "loss diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss * static_cast<double>(end - start);

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t t = 0; t < p_spans.size(); ++t) {
        auto& pv = p_spans[t];
        const auto& gv = g_spans[t];
        auto& a = m1_spans[t];
        auto& b = m2_spans[t];
        for (std::size_t i = 0; i < pv.size(); ++i) {
          a[i] = cfg.beta1 * a[i] + (1.0 - cfg.beta1) * gv[i];
          b[i] = cfg.beta2 * b[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
          pv[i] -= cfg.learning_rate * (a[i] / c1) / (std::sqrt(b[i] / c2) + cfg.epsilon);
        }
      }
    }
    params.train_loss = epoch_loss / static_cast<double>(order.size());
    params.validation_loss = val_set.empty() ? params.train_loss : loss_and_gradient(params, val_set, nullptr);
    if (!std::isfinite(params.train_loss) || !std::isfinite(params.validation_loss)) {
      throw NumericError("DMMN training", "loss diverged at epoch " + std::to_string(epoch));
    }
    if (report) {
      report->train_loss.push_back(params.train_loss);
      report->validation_loss.push_back(params.validation_loss);
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[8] = {'E', 'E', 'R', 'D', 'M', 'M', 'N', '\0'};

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <class T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ConfigError("weights file is truncated");
  return to_little(v);
}

}  // namespace

void save_weights(const DmmnParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kWeightsFormatVersion);
  for (int v : {p.hyper.d_model, p.hyper.heads, p.hyper.layers, p.hyper.d_ff, p.hyper.k_in}) put<std::int32_t>(out, v);
  for (double v : {p.hyper.time_scale, p.hyper.pos_scale, p.train_loss, p.validation_loss}) put<double>(out, v);
  for (Eigen::Index i = 0; i < p.pe_freq.size(); ++i) put<double>(out, p.pe_freq(i));
  visit_tensors(p, [&](const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) put<double>(out, t.data()[i]);
  });
  if (!out) throw ConfigError("failed writing weights to '" + path + "'");
}

DmmnParams load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open weights file '" + path + "'");
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ConfigError("'" + path + "' is not a DMMN weights file");
  const auto version = get<std::uint32_t>(in);
  if (version != kWeightsFormatVersion) {
    throw ConfigError("unsupported weights format version " + std::to_string(version));
  }
  DmmnHyper h;
  h.d_model = get<std::int32_t>(in);
  h.heads = get<std::int32_t>(in);
  h.layers = get<std::int32_t>(in);
  h.d_ff = get<std::int32_t>(in);
  h.k_in = get<std::int32_t>(in);
  h.time_scale = get<double>(in);
  h.pos_scale = get<double>(in);
  h.validate();
  Rng unused(0);
  DmmnParams p = DmmnParams::initialize(h, unused);
  p.train_loss = get<double>(in);
  p.validation_loss = get<double>(in);
  for (Eigen::Index i = 0; i < p.pe_freq.size(); ++i) p.pe_freq(i) = get<double>(in);
  visit_tensors(p, [&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = get<double>(in);
  });
  if (in.peek() != std::char_traits<char>::eof()) throw ConfigError("weights file has trailing bytes");
  if (!p.all_finite()) throw ConfigError("weights file contains non-finite values");
  return p;
}

}  // namespace eertrack
