#include "mata/marl/marl.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "mata/core/error.hpp"

namespace mata::marl {

using core::ParamStore;
using core::Rng;
using core::Tape;
using core::Tensor;

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer: capacity must be positive");
  ring_.reserve(capacity);
}

void ReplayBuffer::push(Experience e) {
  if (size_ < capacity_) {
    ring_.push_back(std::move(e));
    ++size_;
  } else {
    ring_[head_] = std::move(e);
  }
  head_ = (head_ + 1) % capacity_;
}

const Experience& ReplayBuffer::at(std::size_t logical) const {
  if (logical >= size_) throw ContractError("replay buffer: index out of range");
  if (size_ < capacity_) return ring_[logical];
  return ring_[(head_ + logical) % capacity_];
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  if (batch > size_) throw ContractError("replay buffer: batch exceeds stored experiences");
  std::vector<const Experience*> out;
  out.reserve(batch);
  std::unordered_set<std::size_t> seen;
  seen.reserve(batch * 2);
  while (out.size() < batch) {
    const std::size_t idx = rng.below(size_);
    if (seen.insert(idx).second) out.push_back(&ring_[idx]);
  }
  return out;
}

void MarlConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("marl: gamma must lie in [0, 1)");
  if (!(lr_actor > 0.0) || !(lr_critic > 0.0))
    throw ConfigError("marl: learning rates must be positive");
  if (batch == 0) throw ConfigError("marl: batch size must be positive");
  if (!(tau_soft >= 0.0 && tau_soft <= 1.0)) throw ConfigError("marl: tau_soft must lie in [0, 1]");
  if (w_ent < 0.0) throw ConfigError("marl: entropy weight must be non-negative");
  if (buffer_capacity < batch) throw ConfigError("marl: buffer capacity below batch size");
  if (update_every == 0) throw ConfigError("marl: update_every must be positive");
  for (std::size_t h : actor_hidden)
    if (h == 0) throw ConfigError("marl: actor hidden widths must be positive");
  for (std::size_t h : critic_hidden)
    if (h == 0) throw ConfigError("marl: critic hidden widths must be positive");
}

AgentNets init_agent_nets(const env::EnvConfig& env_cfg, const MarlConfig& cfg,
                          std::uint64_t seed) {
  env_cfg.validate();
  cfg.validate();
  AgentNets n;
  n.n_agents = env_cfg.n_agents;
  n.n_actions = env_cfg.n_directions + 1;
  n.state_dim = 3 * (env_cfg.n_agents + env_cfg.n_tasks);
  n.actor_cfg = {n.state_dim + n.n_agents, cfg.actor_hidden, n.n_actions};
  n.critic_cfg = {n.state_dim + n.n_agents * n.n_actions, cfg.critic_hidden, n.n_agents};
  nets::init_mlp_params(n.actor, "actor", n.actor_cfg, seed);
  nets::init_mlp_params(n.critic, "critic", n.critic_cfg, seed);
  n.target_critic = n.critic;  // start synchronized
  return n;
}

std::vector<double> flatten_state(const env::WorldState& state, const env::EnvConfig& cfg) {
  std::vector<double> s;
  s.reserve(3 * (state.agents.size() + state.task_pos.size()));
  for (const auto& a : state.agents) {
    s.push_back(a.pos.x / cfg.world_size);
    s.push_back(a.pos.y / cfg.world_size);
    s.push_back(a.executing ? 1.0 : 0.0);
  }
  for (std::size_t t = 0; t < state.task_pos.size(); ++t) {
    s.push_back(state.task_pos[t].x / cfg.world_size);
    s.push_back(state.task_pos[t].y / cfg.world_size);
    s.push_back(state.task_done[t] ? 1.0 : 0.0);
  }
  return s;
}

namespace {

std::size_t sample_categorical(const double* logp, std::size_t n, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum += std::exp(logp[i]);
    if (u < cum) return i;
  }
  return n - 1;  // guard against rounding shortfall in the cumulative sum
}

std::size_t argmax_lowest(const double* v, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// state rows followed by one agent-id one-hot, as a single-row matrix.
Tensor actor_input_row(const AgentNets& nets, const std::vector<double>& state,
                       std::size_t agent) {
  if (state.size() != nets.state_dim) throw DimensionError("actor input: bad state length");
  if (agent >= nets.n_agents) throw ContractError("actor input: agent id out of range");
  Tensor x({1, nets.state_dim + nets.n_agents});
  std::copy(state.begin(), state.end(), x.values.begin());
  x.values[nets.state_dim + agent] = 1.0;
  return x;
}

}  // namespace

std::size_t select_action(const AgentNets& nets, const std::vector<double>& state,
                          std::size_t agent, ActionMode mode, Rng& rng) {
  Tape tape;
  Tape::NoGrad ng(tape);
  Tensor x = actor_input_row(nets, state, agent);
  Tensor lp = nets::mlp_forward(tape, x, nets.actor, "actor", nets.actor_cfg,
                                nets::MlpHead::kLogSoftmax);
  if (mode == ActionMode::kGreedy) return argmax_lowest(lp.values.data(), nets.n_actions);
  return sample_categorical(lp.values.data(), nets.n_actions, rng);
}

namespace {

// Batch of actor inputs for one agent id over stored or next states.
Tensor actor_batch_input(const AgentNets& nets, const std::vector<const Experience*>& batch,
                         std::size_t agent, bool next_state) {
  const std::size_t in = nets.state_dim + nets.n_agents;
  Tensor x({batch.size(), in});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = next_state ? batch[b]->next_state : batch[b]->state;
    if (s.size() != nets.state_dim) throw DimensionError("batch state length mismatch");
    double* row = x.values.data() + b * in;
    std::copy(s.begin(), s.end(), row);
    row[nets.state_dim + agent] = 1.0;
  }
  return x;
}

void write_critic_row(double* row, const AgentNets& nets, const std::vector<double>& state,
                      const env::JointAction& action) {
  std::copy(state.begin(), state.end(), row);
  for (std::size_t i = 0; i < nets.n_agents; ++i) {
    if (action[i] >= nets.n_actions) throw ContractError("critic input: action out of range");
    row[nets.state_dim + i * nets.n_actions + action[i]] = 1.0;
  }
}

}  // namespace

Tensor critic_loss(Tape& tape, const std::vector<const Experience*>& batch, const AgentNets& nets,
                   double gamma, Rng& rng) {
  if (batch.empty()) throw ContractError("critic_loss: empty batch");
  const std::size_t B = batch.size();
  const std::size_t n = nets.n_agents;
  const std::size_t A = nets.n_actions;
  const std::size_t cin = nets.state_dim + n * A;

  // Bootstrap targets carry no gradient: next actions come from the current
  // actor, values from the target critic.
  Tensor y({B, n});
  {
    Tape::NoGrad ng(tape);
    std::vector<env::JointAction> next_act(B, env::JointAction(n, 0));
    for (std::size_t j = 0; j < n; ++j) {
      Tensor xa = actor_batch_input(nets, batch, j, true);
      Tensor lp = nets::mlp_forward(tape, xa, nets.actor, "actor", nets.actor_cfg,
                                    nets::MlpHead::kLogSoftmax);
      for (std::size_t b = 0; b < B; ++b)
        next_act[b][j] = sample_categorical(lp.values.data() + b * A, A, rng);
    }
    Tensor xq = Tensor::zeros({B, cin});
    for (std::size_t b = 0; b < B; ++b)
      write_critic_row(xq.values.data() + b * cin, nets, batch[b]->next_state, next_act[b]);
    Tensor qbar = nets::mlp_forward(tape, xq, nets.target_critic, "critic", nets.critic_cfg,
                                    nets::MlpHead::kLinear);
    for (std::size_t b = 0; b < B; ++b) {
      const double mask = batch[b]->done ? 0.0 : 1.0;
      for (std::size_t i = 0; i < n; ++i)
        y.at(b, i) = batch[b]->rewards[i] + gamma * mask * qbar.at(b, i);
    }
  }

  Tensor xc = Tensor::zeros({B, cin});
  for (std::size_t b = 0; b < B; ++b)
    write_critic_row(xc.values.data() + b * cin, nets, batch[b]->state, batch[b]->action);
  Tensor q =
      nets::mlp_forward(tape, xc, nets.critic, "critic", nets.critic_cfg, nets::MlpHead::kLinear);
  Tensor d = tape.sub(q, y);
  return tape.mean_all(tape.mul(d, d));
}

Tensor actor_objective(Tape& tape, const std::vector<const Experience*>& batch,
                       const AgentNets& nets, double w_ent) {
  if (batch.empty()) throw ContractError("actor_objective: empty batch");
  const std::size_t B = batch.size();
  const std::size_t n = nets.n_agents;
  const std::size_t A = nets.n_actions;
  const std::size_t cin = nets.state_dim + n * A;

  // All counterfactual Q values (replace one agent's action, keep the rest)
  // are constants in this objective: the critic stays frozen.
  Tensor qmat({B, n * A});
  {
    Tape::NoGrad ng(tape);
    for (std::size_t i = 0; i < n; ++i) {
      Tensor x = Tensor::zeros({B * A, cin});
      for (std::size_t b = 0; b < B; ++b) {
        env::JointAction act = batch[b]->action;
        for (std::size_t a = 0; a < A; ++a) {
          act[i] = a;
          write_critic_row(x.values.data() + (b * A + a) * cin, nets, batch[b]->state, act);
        }
      }
      Tensor q = nets::mlp_forward(tape, x, nets.critic, "critic", nets.critic_cfg,
                                   nets::MlpHead::kLinear);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t a = 0; a < A; ++a) qmat.at(b, i * A + a) = q.at(b * A + a, i);
    }
  }

  Tensor acc;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor xa = actor_batch_input(nets, batch, i, false);
    Tensor lp = nets::mlp_forward(tape, xa, nets.actor, "actor", nets.actor_cfg,
                                  nets::MlpHead::kLogSoftmax);
    Tensor pi = tape.exp(lp);
    Tensor qi({B, A});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t a = 0; a < A; ++a) qi.at(b, a) = qmat.at(b, i * A + a);
    Tensor value = tape.sum_all(tape.mul(pi, qi));
    Tensor neg_ent = tape.sum_all(tape.mul(pi, lp));
    Tensor term = tape.sub(value, tape.scale(neg_ent, w_ent));
    acc = (i == 0) ? term : tape.add(acc, term);
  }
  return tape.scale(acc, 1.0 / (static_cast<double>(B) * static_cast<double>(n)));
}

void soft_update(ParamStore& target, const ParamStore& live, double tau_soft) {
  if (target.size() != live.size()) throw ContractError("soft_update: parameter sets differ");
  for (auto& [name, t] : target) {
    const Tensor& l = core::param(live, name);
    if (l.shape != t.shape) throw DimensionError("soft_update: shape mismatch for " + name);
    for (std::size_t i = 0; i < t.values.size(); ++i)
      t.values[i] = (1.0 - tau_soft) * t.values[i] + tau_soft * l.values[i];
  }
}

namespace {

std::vector<env::Point> agent_positions(const env::WorldState& s) {
  std::vector<env::Point> p;
  p.reserve(s.agents.size());
  for (const auto& a : s.agents) p.push_back(a.pos);
  return p;
}

}  // namespace

void SegmentTracker::begin(const env::WorldState& initial) {
  history_.assign(1, agent_positions(initial));
  last_completion_.assign(initial.agents.size(), 0);
}

std::vector<env::TrajectorySegment> SegmentTracker::advance(
    const env::WorldState& post, const std::vector<env::Completion>& completions) {
  history_.push_back(agent_positions(post));
  if (post.t + 1 != history_.size())
    throw ContractError("segment tracker: post-step time out of sync");
  std::vector<env::TrajectorySegment> out;
  for (const auto& c : completions) {
    if (c.time != post.t) throw ContractError("segment tracker: completion time mismatch");
    env::TrajectorySegment s;
    s.agent = c.agent;
    s.task = c.task;
    s.start_t = last_completion_[c.agent];
    s.end_t = c.time;
    for (std::size_t t = s.start_t; t <= s.end_t; ++t) s.points.push_back(history_[t][c.agent]);
    last_completion_[c.agent] = c.time;
    out.push_back(std::move(s));
  }
  return out;
}

RunRecord train(const TrainConfig& cfg, const expert::DemoDataset* demos, std::uint64_t seed) {
  cfg.env.validate();
  cfg.marl.validate();

  RunRecord rec;
  rec.irl_mode = cfg.irl_mode;
  rec.nets = init_agent_nets(cfg.env, cfg.marl, seed);
  if (cfg.irl_mode != IrlMode::kOff) {
    if (demos == nullptr) throw ConfigError("train: reward inference enabled without demos");
    rec.irl_state = irl::init_irl(cfg.irl, *demos, seed);
  }

  core::AdamState actor_opt;
  core::AdamState critic_opt;
  ReplayBuffer buffer(cfg.marl.buffer_capacity);
  Rng action_rng = core::derive_rng(seed, "marl-actions");
  Rng sample_rng = core::derive_rng(seed, "marl-buffer");
  Rng boot_rng = core::derive_rng(seed, "marl-bootstrap");
  Rng env_seeds = core::derive_rng(seed, "marl-env");

  bool losses_seen = false;
  double last_gen = 0.0;
  double last_disc = 0.0;
  std::size_t total_steps = 0;
  SegmentTracker tracker;

  for (std::size_t ep = 0; ep < cfg.marl.episodes; ++ep) {
    env::WorldState state = env::reset(cfg.env, env_seeds.next());
    tracker.begin(state);
    double ep_reward = 0.0;
    double ep_dist = 0.0;
    std::size_t steps = 0;

    while (!env::finished(state, cfg.env)) {
      std::vector<double> s = flatten_state(state, cfg.env);
      env::JointAction act(rec.nets.n_agents, 0);
      for (std::size_t i = 0; i < rec.nets.n_agents; ++i)
        act[i] = select_action(rec.nets, s, i, ActionMode::kExplore, action_rng);

      env::StepResult res = env::step(state, act, cfg.env);
      auto segments = tracker.advance(res.state, res.events.completions);

      std::vector<double> used = res.rewards;
      if (cfg.irl_mode == IrlMode::kOn) {
        auto ir = irl::irl_step(rec.irl_state, segments, res.rewards, res.state, cfg.env);
        used = std::move(ir.rewards);
        if (ir.updated) {
          losses_seen = true;
          last_gen = ir.gen_loss;
          last_disc = ir.disc_loss;
          irl::CoefficientLogRow row;
          row.episode = ep;
          row.step = res.state.t;
          row.alpha = ir.alpha;
          row.beta = ir.beta;
          row.gen_loss = ir.gen_loss;
          row.disc_loss = ir.disc_loss;
          row.disc_accuracy = ir.disc_accuracy;
          rec.coeff_log.push_back(row);
        }
      } else if (cfg.irl_mode == IrlMode::kFrozen) {
        used = irl::irl_adapt(rec.irl_state, segments, res.rewards, res.state, cfg.env).rewards;
      }

      const bool done = env::finished(res.state, cfg.env);
      for (double r : res.rewards) ep_reward += r;
      for (double d : res.events.displacement) ep_dist += d;

      buffer.push({std::move(s), act, std::move(used), flatten_state(res.state, cfg.env), done});
      ++steps;
      ++total_steps;

      if (buffer.size() >= cfg.marl.batch && total_steps % cfg.marl.update_every == 0) {
        {
          Tape tape;
          auto b = buffer.sample(cfg.marl.batch, sample_rng);
          Tensor loss = critic_loss(tape, b, rec.nets, cfg.marl.gamma, boot_rng);
          tape.backward(loss);
          ParamStore grads = tape.gradients(rec.nets.critic);
          core::adam_step(rec.nets.critic, grads, critic_opt, cfg.marl.lr_critic);
        }
        {
          Tape tape;
          auto b = buffer.sample(cfg.marl.batch, sample_rng);
          Tensor obj = actor_objective(tape, b, rec.nets, cfg.marl.w_ent);
          Tensor loss = tape.scale(obj, -1.0);
          tape.backward(loss);
          ParamStore grads = tape.gradients(rec.nets.actor);
          core::adam_step(rec.nets.actor, grads, actor_opt, cfg.marl.lr_actor);
        }
        soft_update(rec.nets.target_critic, rec.nets.critic, cfg.marl.tau_soft);
        ++rec.updates;
      }

      state = std::move(res.state);
    }

    EpisodeRow row;
    row.episode = ep;
    row.cumulative_reward = ep_reward;
    row.timesteps = steps;
    row.total_distance = ep_dist;
    row.irl_logged = losses_seen;
    row.gen_loss = last_gen;
    row.disc_loss = last_disc;
    if (cfg.irl_mode != IrlMode::kOff) {
      row.alpha = rec.irl_state.shared.alpha;
      row.beta = rec.irl_state.shared.beta;
    }
    rec.episodes.push_back(row);
  }
  return rec;
}

std::vector<EvalEpisode> evaluate_policy(const AgentNets& nets, irl::IrlState* irl_state,
                                         const env::EnvConfig& env_cfg, std::size_t episodes,
                                         std::uint64_t seed) {
  env_cfg.validate();
  Rng env_seeds = core::derive_rng(seed, "eval-env");
  Rng unused(0);  // greedy selection draws nothing
  std::vector<EvalEpisode> out;
  SegmentTracker tracker;

  for (std::size_t ep = 0; ep < episodes; ++ep) {
    const std::uint64_t es = env_seeds.next();
    env::WorldState state = env::reset(env_cfg, es);
    tracker.begin(state);

    env::EpisodeLog log;
    log.config = env_cfg;
    log.seed = es;
    log.initial_positions = agent_positions(state);
    log.task_positions = state.task_pos;

    while (!env::finished(state, env_cfg)) {
      std::vector<double> s = flatten_state(state, env_cfg);
      env::JointAction act(nets.n_agents, 0);
      for (std::size_t i = 0; i < nets.n_agents; ++i)
        act[i] = select_action(nets, s, i, ActionMode::kGreedy, unused);

      env::StepResult res = env::step(state, act, env_cfg);
      auto segments = tracker.advance(res.state, res.events.completions);
      if (irl_state != nullptr)
        irl::irl_adapt(*irl_state, segments, res.rewards, res.state, env_cfg);

      env::StepRecord rec;
      rec.t = res.state.t;
      rec.positions = agent_positions(res.state);
      rec.actions = act;
      rec.rewards = res.rewards;
      rec.displacements = res.events.displacement;
      rec.completions = res.events.completions;
      log.steps.push_back(std::move(rec));

      state = std::move(res.state);
    }
    env::EpisodeMetrics m = env::compute_metrics(log);
    out.push_back({std::move(m), std::move(log)});
  }
  return out;
}

}  // namespace mata::marl
