#include "mata/irl/irl.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <utility>

#include "mata/core/error.hpp"

namespace mata::irl {

using core::ParamStore;
using core::Tape;
using core::Tensor;

double adapt_reward(double r, const SharedCoefficients& c, bool completed) {
  return completed ? c.alpha * r + c.beta : r;
}

void update_shared(SharedCoefficients& c, const std::vector<CoeffSample>& batch) {
  if (batch.empty()) return;
  double ma = 0.0;
  double mb = 0.0;
  for (const CoeffSample& s : batch) {
    ma += s.alpha;
    mb += s.beta;
  }
  ma /= static_cast<double>(batch.size());
  mb /= static_cast<double>(batch.size());
  c.alpha = c.rho * c.alpha + (1.0 - c.rho) * ma;
  c.beta = c.rho * c.beta + (1.0 - c.rho) * mb;
}

std::vector<double> resample_segment(const env::TrajectorySegment& seg, std::size_t l_fix,
                                     const env::EnvConfig& cfg) {
  if (l_fix < 2) throw ConfigError("resample: l_fix must be at least 2");
  const auto& pts = seg.points;
  if (pts.empty()) throw ContractError("resample: segment has no points");
  const std::size_t n = pts.size();
  const double w = cfg.world_size;

  std::vector<double> cum(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) cum[i] = cum[i - 1] + env::dist(pts[i - 1], pts[i]);
  const double total = cum[n - 1];

  std::vector<double> out;
  out.reserve(2 * l_fix + 6);
  for (std::size_t j = 0; j < l_fix; ++j) {
    env::Point p;
    if (j == 0 || total <= 0.0) {
      p = pts.front();
    } else if (j == l_fix - 1) {
      p = pts.back();
    } else {
      const double s = total * static_cast<double>(j) / static_cast<double>(l_fix - 1);
      auto it = std::upper_bound(cum.begin(), cum.end(), s);
      std::size_t k = static_cast<std::size_t>(it - cum.begin());
      k = std::min(n - 1, std::max<std::size_t>(1, k)) - 1;
      const double span = cum[k + 1] - cum[k];
      const double t = span > 0.0 ? (s - cum[k]) / span : 0.0;
      p.x = pts[k].x + t * (pts[k + 1].x - pts[k].x);
      p.y = pts[k].y + t * (pts[k + 1].y - pts[k].y);
    }
    out.push_back(p.x / w);
    out.push_back(p.y / w);
  }

  out.push_back(static_cast<double>(seg.end_t - seg.start_t) / static_cast<double>(cfg.max_steps));
  out.push_back(pts.front().x / w);
  out.push_back(pts.front().y / w);
  out.push_back(pts.back().x / w);
  out.push_back(pts.back().y / w);
  const double straight = env::dist(pts.front(), pts.back());
  out.push_back(total > 0.0 ? straight / total : 1.0);
  return out;
}

Tensor generator_loss(Tape& tape, const Tensor& policy_scores) {
  return tape.scale(tape.mean_all(tape.log(policy_scores)), -1.0);
}

Tensor discriminator_loss(Tape& tape, const Tensor& expert_scores, const Tensor& policy_scores) {
  Tensor le = tape.mean_all(tape.log(expert_scores));
  Tensor one_minus = tape.add_scalar(tape.scale(policy_scores, -1.0), 1.0);
  Tensor lp = tape.mean_all(tape.log(one_minus));
  return tape.scale(tape.add(le, lp), -1.0);
}

nets::RewardHeadConfig IrlConfig::head_config() const {
  nets::RewardHeadConfig h;
  h.feat_dim = feat_dim();
  h.c_alpha = c_alpha;
  h.c_beta = c_beta;
  return h;
}

nets::MlpConfig IrlConfig::disc_config() const {
  nets::MlpConfig m;
  m.in = disc_in();
  m.hidden = disc_hidden;
  m.out = 1;
  return m;
}

void IrlConfig::validate() const {
  mhsa.validate();
  if (use_gat) gat.validate();
  if (l_fix < 2) throw ConfigError("irl: l_fix must be at least 2");
  if (!(c_alpha > 0.0 && c_alpha < 1.0))
    throw ConfigError("irl: c_alpha must lie in (0, 1) so alpha stays positive");
  if (!(c_beta > 0.0)) throw ConfigError("irl: c_beta must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("irl: rho must lie in [0, 1)");
  if (!(lr_gen > 0.0) || !(lr_disc > 0.0)) throw ConfigError("irl: learning rates must be positive");
  head_config().validate();
  disc_config().validate();
}

IrlState init_irl(const IrlConfig& cfg, expert::DemoDataset demos, std::uint64_t seed) {
  cfg.validate();
  if (demos.segments.empty()) throw ConfigError("irl: demo dataset is empty");
  IrlState st;
  st.cfg = cfg;
  // Trajectory embedding parameters are needed even when MHSA is ablated.
  nets::init_mhsa_params(st.gen_params, cfg.mhsa, seed);
  if (cfg.use_gat) nets::init_gat_params(st.gen_params, cfg.gat, seed);
  nets::init_head_params(st.gen_params, cfg.head_config());
  nets::init_mlp_params(st.disc_params, "disc", cfg.disc_config(), seed);
  st.shared.rho = cfg.rho;
  st.demos = std::move(demos);
  st.rng = core::derive_rng(seed, "irl-expert-batch");
  return st;
}

namespace {

// Stacks resampled segment features into one B x (2 l_fix + 6) batch.
Tensor feature_batch(const std::vector<const env::TrajectorySegment*>& segs, std::size_t l_fix,
                     const env::EnvConfig& cfg) {
  const std::size_t din = 2 * l_fix + 6;
  Tensor x({segs.size(), din});
  for (std::size_t i = 0; i < segs.size(); ++i) {
    std::vector<double> f = resample_segment(*segs[i], l_fix, cfg);
    std::copy(f.begin(), f.end(), x.values.begin() + static_cast<std::ptrdiff_t>(i * din));
  }
  return x;
}

}  // namespace

IrlStepResult irl_adapt(IrlState& st, const std::vector<env::TrajectorySegment>& fresh_segments,
                        const std::vector<double>& env_rewards, const env::WorldState& post_state,
                        const env::EnvConfig& env_cfg) {
  IrlStepResult out;
  out.rewards = env_rewards;
  out.alpha = st.shared.alpha;
  out.beta = st.shared.beta;
  if (fresh_segments.empty()) return out;

  const std::size_t n_agents = env_rewards.size();
  if (post_state.agents.size() != n_agents)
    throw DimensionError("irl_step: rewards and state disagree on agent count");
  for (const auto& seg : fresh_segments)
    if (seg.agent >= n_agents) throw ContractError("irl_step: segment agent out of range");

  const IrlConfig& cfg = st.cfg;
  const double w = env_cfg.world_size;

  // Coefficient generation needs no gradients; the shared pair is detached.
  std::vector<CoeffSample> batch;
  {
    Tape tape;
    Tape::NoGrad ng(tape);
    nets::GatOut gat_out;
    bool have_gat = false;
    if (cfg.use_gat) {
      std::vector<std::size_t> open;
      for (std::size_t t = 0; t < post_state.task_done.size(); ++t)
        if (!post_state.task_done[t]) open.push_back(t);
      if (!open.empty()) {
        Tensor af({n_agents, 3});
        for (std::size_t i = 0; i < n_agents; ++i) {
          af.at(i, 0) = post_state.agents[i].pos.x / w;
          af.at(i, 1) = post_state.agents[i].pos.y / w;
          af.at(i, 2) = post_state.agents[i].executing ? 1.0 : 0.0;
        }
        Tensor tf({open.size(), 3});
        for (std::size_t j = 0; j < open.size(); ++j) {
          tf.at(j, 0) = post_state.task_pos[open[j]].x / w;
          tf.at(j, 1) = post_state.task_pos[open[j]].y / w;
          tf.at(j, 2) = 0.0;
        }
        gat_out = nets::gat_forward(tape, af, tf, st.gen_params, cfg.gat);
        have_gat = true;
      }
    }
    // With GAT enabled but no open task left, skip coefficient generation
    // this step; the shared pair simply carries over.
    if (!cfg.use_gat || have_gat) {
      const nets::RewardHeadConfig head_cfg = cfg.head_config();
      for (const auto& seg : fresh_segments) {
        Tensor eb = nets::embed_trajectory(tape, seg, st.gen_params, cfg.mhsa, w);
        Tensor enc = cfg.use_mhsa ? nets::mhsa_forward(tape, eb, st.gen_params, cfg.mhsa).h : eb;
        nets::RewardCoefficients rc;
        if (cfg.use_gat) {
          Tensor row = tape.slice_rows(gat_out.agents, seg.agent, 1);
          rc = nets::fuse_and_head(tape, enc, &row, st.gen_params, head_cfg);
        } else {
          rc = nets::fuse_and_head(tape, enc, nullptr, st.gen_params, head_cfg);
        }
        batch.push_back({rc.alpha.values[0], rc.beta.values[0]});
      }
    }
  }

  update_shared(st.shared, batch);
  out.alpha = st.shared.alpha;
  out.beta = st.shared.beta;

  std::vector<char> completed(n_agents, 0);
  for (const auto& seg : fresh_segments) completed[seg.agent] = 1;
  for (std::size_t i = 0; i < n_agents; ++i)
    out.rewards[i] = adapt_reward(env_rewards[i], st.shared, completed[i] != 0);
  return out;
}

IrlStepResult irl_step(IrlState& st, const std::vector<env::TrajectorySegment>& fresh_segments,
                       const std::vector<double>& env_rewards, const env::WorldState& post_state,
                       const env::EnvConfig& env_cfg) {
  IrlStepResult out = irl_adapt(st, fresh_segments, env_rewards, post_state, env_cfg);
  if (fresh_segments.empty()) return out;

  const IrlConfig& cfg = st.cfg;

  std::vector<const env::TrajectorySegment*> pol_ptrs;
  pol_ptrs.reserve(fresh_segments.size());
  for (const auto& seg : fresh_segments) pol_ptrs.push_back(&seg);
  Tensor x_pol = feature_batch(pol_ptrs, cfg.l_fix, env_cfg);

  std::vector<const env::TrajectorySegment*> exp_ptrs;
  exp_ptrs.reserve(fresh_segments.size());
  for (std::size_t i = 0; i < fresh_segments.size(); ++i) {
    const std::size_t idx = st.rng.below(st.demos.segments.size());
    exp_ptrs.push_back(&st.demos.segments[idx]);
  }
  Tensor x_exp = feature_batch(exp_ptrs, cfg.l_fix, st.demos.config);

  const nets::MlpConfig disc_cfg = cfg.disc_config();

  // Generator step. The discriminator input is a fixed resampled path, so no
  // gradient reaches the generator parameters; the optimizer still runs.
  {
    Tape tape;
    nets::DiscOut pol = nets::discriminator_score(tape, x_pol, st.disc_params, disc_cfg);
    Tensor loss = generator_loss(tape, pol.p);
    out.gen_loss = loss.values[0];
    tape.backward(loss);
    ParamStore grads = tape.gradients(st.gen_params);
    core::adam_step(st.gen_params, grads, st.gen_opt, cfg.lr_gen);
  }

  // Discriminator step; accuracy is measured before the update.
  {
    Tape tape;
    nets::DiscOut exp_out = nets::discriminator_score(tape, x_exp, st.disc_params, disc_cfg);
    nets::DiscOut pol_out = nets::discriminator_score(tape, x_pol, st.disc_params, disc_cfg);
    std::size_t correct = 0;
    for (double v : exp_out.p.values)
      if (v > 0.5) ++correct;
    for (double v : pol_out.p.values)
      if (v < 0.5) ++correct;
    out.disc_accuracy =
        static_cast<double>(correct) / (2.0 * static_cast<double>(fresh_segments.size()));
    Tensor loss = discriminator_loss(tape, exp_out.p, pol_out.p);
    out.disc_loss = loss.values[0];
    tape.backward(loss);
    ParamStore grads = tape.gradients(st.disc_params);
    core::adam_step(st.disc_params, grads, st.disc_opt, cfg.lr_disc);
  }

  out.updated = true;
  return out;
}

void write_coefficient_log(const std::vector<CoefficientLogRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << "episode,step,alpha,beta,gen_loss,disc_loss,disc_accuracy\n";
  char buf[256];
  for (const CoefficientLogRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.episode, r.step,
                  r.alpha, r.beta, r.gen_loss, r.disc_loss, r.disc_accuracy);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace mata::irl
