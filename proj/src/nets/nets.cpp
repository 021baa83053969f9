#include "mata/nets/nets.hpp"

#include <cmath>

#include "mata/core/error.hpp"

namespace mata::nets {

using core::ParamStore;
using core::Tape;
using core::Tensor;

namespace {
constexpr double kGatLeak = 0.2;
}

void MhsaConfig::validate() const {
  if (d == 0 || heads == 0) throw ConfigError("mhsa: d and heads must be positive");
  if (d % heads != 0)
    throw ConfigError("mhsa: heads (" + std::to_string(heads) + ") must divide d (" +
                      std::to_string(d) + ")");
  if (l_cap < 2) throw ConfigError("mhsa: l_cap must be at least 2");
}

void GatConfig::validate() const {
  if (d_in == 0 || d_g == 0) throw ConfigError("gat: dimensions must be positive");
}

void RewardHeadConfig::validate() const {
  if (feat_dim == 0) throw ConfigError("reward head: feat_dim must be positive");
  if (!(c_alpha > 0.0) || !(c_beta > 0.0))
    throw ConfigError("reward head: bound scales must be positive");
}

void MlpConfig::validate() const {
  if (in == 0 || out == 0) throw ConfigError("mlp: dimensions must be positive");
  for (std::size_t w : hidden)
    if (w == 0) throw ConfigError("mlp: hidden widths must be positive");
}

void init_mhsa_params(ParamStore& store, const MhsaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  core::add_param(store, "mhsa/w_p", {cfg.d, 2}, 2, seed);
  core::add_param(store, "mhsa/b_p", {cfg.d}, 2, seed);
  core::add_param(store, "mhsa/w_t", {cfg.d, 2}, 2, seed);
  core::add_param(store, "mhsa/b_t", {cfg.d}, 2, seed);
  for (std::size_t n = 0; n < cfg.heads; ++n) {
    const std::string p = "mhsa/h" + std::to_string(n);
    core::add_param(store, p + "/wq", {cfg.d, cfg.d_head()}, cfg.d, seed);
    core::add_param(store, p + "/wk", {cfg.d, cfg.d_head()}, cfg.d, seed);
    core::add_param(store, p + "/wv", {cfg.d, cfg.d_head()}, cfg.d, seed);
  }
  core::add_param(store, "mhsa/w_o", {cfg.heads * cfg.d_head(), cfg.d},
                  cfg.heads * cfg.d_head(), seed);
}

void init_gat_params(ParamStore& store, const GatConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  core::add_param(store, "gat/w", {cfg.d_g, cfg.d_in}, cfg.d_in, seed);
  core::add_param(store, "gat/a", {2 * cfg.d_g}, 2 * cfg.d_g, seed);
  core::add_param(store, "gat/m_w", {cfg.d_g, 2 * cfg.d_in}, 2 * cfg.d_in, seed);
  core::add_param(store, "gat/m_b", {cfg.d_g}, 2 * cfg.d_in, seed);
  core::add_param(store, "gat/w_q", {cfg.d_g, cfg.d_in}, cfg.d_in, seed);
}

void init_head_params(ParamStore& store, const RewardHeadConfig& cfg) {
  cfg.validate();
  core::add_zero_param(store, "head/w_r", {2, cfg.feat_dim});
  core::add_zero_param(store, "head/b_r", {2});
}

void init_mlp_params(ParamStore& store, const std::string& prefix, const MlpConfig& cfg,
                     std::uint64_t seed) {
  cfg.validate();
  std::size_t in = cfg.in;
  std::vector<std::size_t> widths = cfg.hidden;
  widths.push_back(cfg.out);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string layer = prefix + "/l" + std::to_string(i);
    core::add_param(store, layer + "/w", {in, widths[i]}, in, seed);
    core::add_param(store, layer + "/b", {widths[i]}, in, seed);
    in = widths[i];
  }
}

Tensor embed_trajectory(Tape& tape, const env::TrajectorySegment& seg, const ParamStore& store,
                        const MhsaConfig& cfg, double world_size) {
  cfg.validate();
  if (seg.points.empty()) throw ContractError("embed_trajectory: empty segment");
  if (!(world_size > 0.0)) throw ContractError("embed_trajectory: world_size must be positive");

  // Uniform subsample onto l_cap indices, keeping both endpoints.
  std::vector<env::Point> pts;
  const std::size_t l0 = seg.points.size();
  if (l0 <= cfg.l_cap) {
    pts = seg.points;
  } else {
    pts.reserve(cfg.l_cap);
    for (std::size_t j = 0; j < cfg.l_cap; ++j) {
      const double pos = static_cast<double>(j) * static_cast<double>(l0 - 1) /
                         static_cast<double>(cfg.l_cap - 1);
      pts.push_back(seg.points[static_cast<std::size_t>(std::llround(pos))]);
    }
  }
  const std::size_t l = pts.size();

  Tensor coords({l, 2});
  Tensor time({l, 2});
  for (std::size_t i = 0; i < l; ++i) {
    coords.at(i, 0) = pts[i].x / world_size;
    coords.at(i, 1) = pts[i].y / world_size;
    time.at(i, 0) = 1.0;
    time.at(i, 1) = static_cast<double>(i + 1) / static_cast<double>(l);
  }
  const Tensor w_p = tape.watch(store, "mhsa/w_p");
  const Tensor b_p = tape.watch(store, "mhsa/b_p");
  const Tensor w_t = tape.watch(store, "mhsa/w_t");
  const Tensor b_t = tape.watch(store, "mhsa/b_t");
  const Tensor spatial =
      tape.relu(tape.add_rows(tape.matmul(coords, tape.transpose(w_p)), b_p));
  const Tensor temporal = tape.add_rows(tape.matmul(time, tape.transpose(w_t)), b_t);
  return tape.add(spatial, temporal);
}

MhsaOut mhsa_forward(Tape& tape, const Tensor& eb, const ParamStore& store,
                     const MhsaConfig& cfg) {
  cfg.validate();
  if (eb.rank() != 2 || eb.shape[1] != cfg.d)
    throw DimensionError("mhsa_forward: expected [Lx" + std::to_string(cfg.d) + "], got " +
                         core::shape_str(eb.shape));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.d_head()));
  MhsaOut out;
  Tensor heads;
  for (std::size_t n = 0; n < cfg.heads; ++n) {
    const std::string p = "mhsa/h" + std::to_string(n);
    const Tensor q = tape.matmul(eb, tape.watch(store, p + "/wq"));
    const Tensor k = tape.matmul(eb, tape.watch(store, p + "/wk"));
    const Tensor v = tape.matmul(eb, tape.watch(store, p + "/wv"));
    const Tensor scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt);
    const Tensor attn = tape.softmax_rows(scores);
    out.attn.push_back(attn);
    const Tensor head = tape.matmul(attn, v);
    heads = (n == 0) ? head : tape.concat(heads, head, 1);
  }
  out.h = tape.matmul(heads, tape.watch(store, "mhsa/w_o"));
  return out;
}

GatOut gat_forward(Tape& tape, const Tensor& agent_feats, const Tensor& task_feats,
                   const ParamStore& store, const GatConfig& cfg) {
  cfg.validate();
  if (agent_feats.rank() != 2 || agent_feats.shape[1] != cfg.d_in)
    throw DimensionError("gat_forward: agent features " + core::shape_str(agent_feats.shape) +
                         " do not match d_in=" + std::to_string(cfg.d_in));
  if (task_feats.rank() != 2 || task_feats.shape[1] != cfg.d_in)
    throw DimensionError("gat_forward: task features " + core::shape_str(task_feats.shape) +
                         " do not match d_in=" + std::to_string(cfg.d_in));
  const std::size_t n = agent_feats.shape[0];
  const std::size_t m = task_feats.shape[0];
  if (n == 0) throw ContractError("gat_forward: no agents");
  if (m == 0) throw ContractError("gat_forward: no not-done tasks to attend over");

  const Tensor w = tape.watch(store, "gat/w");
  const Tensor a = tape.watch(store, "gat/a");
  const Tensor m_w = tape.watch(store, "gat/m_w");
  const Tensor m_b = tape.watch(store, "gat/m_b");
  const Tensor w_q = tape.watch(store, "gat/w_q");

  const Tensor wa = tape.matmul(agent_feats, tape.transpose(w));  // N x d_g
  const Tensor wt = tape.matmul(task_feats, tape.transpose(w));   // M x d_g
  const Tensor a1 = tape.reshape(tape.slice_vec(a, 0, cfg.d_g), {cfg.d_g, 1});
  const Tensor a2 = tape.reshape(tape.slice_vec(a, cfg.d_g, cfg.d_g), {cfg.d_g, 1});
  const Tensor u = tape.matmul(wa, a1);  // N x 1
  const Tensor v = tape.matmul(wt, a2);  // M x 1
  const Tensor ones_row = Tensor::full({1, m}, 1.0);
  const Tensor ones_col = Tensor::full({n, 1}, 1.0);
  const Tensor scores =
      tape.add(tape.matmul(u, ones_row), tape.matmul(ones_col, tape.transpose(v)));
  GatOut out;
  out.alpha = tape.softmax_rows(tape.leaky_relu(scores, kGatLeak));

  // me_ik = M_W [q_i || q_k] + M_b splits into an agent part, a task part
  // aggregated through alpha (rows sum to 1), and the bias.
  const Tensor m_w1 = tape.slice_cols(m_w, 0, cfg.d_in);
  const Tensor m_w2 = tape.slice_cols(m_w, cfg.d_in, cfg.d_in);
  const Tensor agent_part = tape.matmul(agent_feats, tape.transpose(m_w1));       // N x d_g
  const Tensor task_part = tape.matmul(out.alpha, tape.matmul(task_feats, tape.transpose(m_w2)));
  const Tensor me_star =
      tape.add(tape.add(agent_part, task_part), tape.repeat_rows(m_b, n));
  const Tensor self = tape.matmul(agent_feats, tape.transpose(w_q));
  out.agents = tape.relu(tape.add(self, me_star));
  return out;
}

RewardCoefficients fuse_and_head(Tape& tape, const Tensor& h_mat, const Tensor* gat_feat,
                                 const ParamStore& store, const RewardHeadConfig& cfg) {
  cfg.validate();
  if (h_mat.rank() != 2)
    throw DimensionError("fuse_and_head: expected a 2-d feature matrix, got " +
                         core::shape_str(h_mat.shape));
  Tensor f = tape.mean_axis(h_mat, 0);  // column mean, [d]
  if (gat_feat != nullptr) {
    Tensor g = *gat_feat;
    if (g.rank() == 2) {
      if (g.shape[0] != 1)
        throw DimensionError("fuse_and_head: gat feature must be a single row, got " +
                             core::shape_str(g.shape));
      g = tape.reshape(g, {g.shape[1]});
    }
    f = tape.concat(f, g, 0);
  }
  if (f.shape[0] != cfg.feat_dim)
    throw DimensionError("fuse_and_head: fused feature [" + std::to_string(f.shape[0]) +
                         "] does not match feat_dim=" + std::to_string(cfg.feat_dim));
  const Tensor w_r = tape.watch(store, "head/w_r");
  const Tensor b_r = tape.watch(store, "head/b_r");
  const Tensor raw = tape.add_rows(
      tape.matmul(tape.reshape(f, {1, cfg.feat_dim}), tape.transpose(w_r)), b_r);  // 1 x 2
  RewardCoefficients rc;
  rc.alpha = tape.add_scalar(tape.scale(tape.tanh(tape.slice_cols(raw, 0, 1)), cfg.c_alpha), 1.0);
  rc.beta = tape.scale(tape.tanh(tape.slice_cols(raw, 1, 1)), cfg.c_beta);
  return rc;
}

namespace {

Tensor mlp_body(Tape& tape, const Tensor& x, const ParamStore& store, const std::string& prefix,
                const MlpConfig& cfg) {
  cfg.validate();
  if (x.rank() != 2 || x.shape[1] != cfg.in)
    throw DimensionError("mlp " + prefix + ": expected [Bx" + std::to_string(cfg.in) +
                         "], got " + core::shape_str(x.shape));
  Tensor h = x;
  for (std::size_t i = 0; i <= cfg.hidden.size(); ++i) {
    const std::string layer = prefix + "/l" + std::to_string(i);
    h = tape.add_rows(tape.matmul(h, tape.watch(store, layer + "/w")),
                      tape.watch(store, layer + "/b"));
    if (i < cfg.hidden.size()) h = tape.relu(h);
  }
  return h;
}

}  // namespace

DiscOut discriminator_score(Tape& tape, const Tensor& x, const ParamStore& store,
                            const MlpConfig& cfg) {
  DiscOut out;
  out.logits = mlp_body(tape, x, store, "disc", cfg);
  out.p = tape.sigmoid(out.logits);
  return out;
}

Tensor mlp_forward(Tape& tape, const Tensor& x, const ParamStore& store,
                   const std::string& prefix, const MlpConfig& cfg, MlpHead head) {
  const Tensor z = mlp_body(tape, x, store, prefix, cfg);
  return head == MlpHead::kLogSoftmax ? tape.log_softmax_rows(z) : z;
}

}  // namespace mata::nets
