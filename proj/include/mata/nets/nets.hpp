#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mata/core/param_store.hpp"
#include "mata/core/tape.hpp"
#include "mata/env/env.hpp"

namespace mata::nets {

struct MhsaConfig {
  std::size_t d = 32;      // model dimension
  std::size_t heads = 4;   // h; d_head = d / h
  std::size_t l_cap = 64;  // longer segments are uniformly subsampled

  std::size_t d_head() const { return d / heads; }
  void validate() const;
};

struct GatConfig {
  std::size_t d_in = 3;  // node feature width
  std::size_t d_g = 32;  // output width

  void validate() const;
};

struct RewardHeadConfig {
  std::size_t feat_dim = 64;  // d (+ d_g when GAT features are fused)
  double c_alpha = 0.5;
  double c_beta = 1.0;

  void validate() const;
};

struct MlpConfig {
  std::size_t in = 1;
  std::vector<std::size_t> hidden;
  std::size_t out = 1;

  void validate() const;
};

// Parameter groups live in one ParamStore under name prefixes ("mhsa/...",
// "gat/...", "head/...", "disc/...", "actor/...", "critic/..."). Every group
// initializes from streams keyed by (seed, parameter name).
void init_mhsa_params(core::ParamStore& store, const MhsaConfig& cfg, std::uint64_t seed);
void init_gat_params(core::ParamStore& store, const GatConfig& cfg, std::uint64_t seed);
// Reward head starts at zero so the adapted reward begins as the identity.
void init_head_params(core::ParamStore& store, const RewardHeadConfig& cfg);
void init_mlp_params(core::ParamStore& store, const std::string& prefix, const MlpConfig& cfg,
                     std::uint64_t seed);

// Embedding rows: relu(W_p [x,y]^T + b_p) + W_t [1, i/L]^T + b_t with
// coordinates scaled by world_size and i running 1..L.
core::Tensor embed_trajectory(core::Tape& tape, const env::TrajectorySegment& seg,
                              const core::ParamStore& store, const MhsaConfig& cfg,
                              double world_size);

struct MhsaOut {
  core::Tensor h;                  // L x d
  std::vector<core::Tensor> attn;  // per head, L x L, rows sum to 1
};

MhsaOut mhsa_forward(core::Tape& tape, const core::Tensor& eb, const core::ParamStore& store,
                     const MhsaConfig& cfg);

struct GatOut {
  core::Tensor agents;  // N x d_g
  core::Tensor alpha;   // N x M', rows sum to 1
};

// Full bipartite agent-to-task attention; every agent attends to all M'
// not-done tasks. M' = 0 is a contract error (terminal case is the caller's).
GatOut gat_forward(core::Tape& tape, const core::Tensor& agent_feats,
                   const core::Tensor& task_feats, const core::ParamStore& store,
                   const GatConfig& cfg);

struct RewardCoefficients {
  core::Tensor alpha;  // 1x1, in [1 - c_alpha, 1 + c_alpha]
  core::Tensor beta;   // 1x1, in [-c_beta, c_beta]
};

// f = [column-mean of h_mat || gat_feat]; gat_feat may be null (ablated GAT),
// in which case feat_dim must equal d alone.
RewardCoefficients fuse_and_head(core::Tape& tape, const core::Tensor& h_mat,
                                 const core::Tensor* gat_feat, const core::ParamStore& store,
                                 const RewardHeadConfig& cfg);

struct DiscOut {
  core::Tensor p;       // B x 1 probabilities
  core::Tensor logits;  // B x 1 pre-sigmoid
};

// Relu MLP with a logistic output, stored under "disc/...".
DiscOut discriminator_score(core::Tape& tape, const core::Tensor& x,
                            const core::ParamStore& store, const MlpConfig& cfg);

enum class MlpHead { kLinear, kLogSoftmax };

// Shared relu MLP body for actor (log-softmax head) and critic (linear head).
core::Tensor mlp_forward(core::Tape& tape, const core::Tensor& x, const core::ParamStore& store,
                         const std::string& prefix, const MlpConfig& cfg, MlpHead head);

}  // namespace mata::nets
