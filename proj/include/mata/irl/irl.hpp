#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mata/core/adam.hpp"
#include "mata/core/param_store.hpp"
#include "mata/core/rng.hpp"
#include "mata/core/tape.hpp"
#include "mata/env/env.hpp"
#include "mata/expert/expert.hpp"
#include "mata/nets/nets.hpp"

namespace mata::irl {

// Shared reward-adaptation coefficients, batch-mean smoothed by EMA.
struct SharedCoefficients {
  double alpha = 1.0;
  double beta = 0.0;
  double rho = 0.9;
};

struct CoeffSample {
  double alpha = 1.0;
  double beta = 0.0;
};

// Completion branch applies the shared linear transform; otherwise identity.
double adapt_reward(double r, const SharedCoefficients& c, bool completed);

// (alpha, beta) <- rho * (alpha, beta) + (1 - rho) * mean(batch). Empty batch
// is a no-op. Convexity keeps the coefficient bounds intact.
void update_shared(SharedCoefficients& c, const std::vector<CoeffSample>& batch);

// Arc-length-uniform resample to l_fix points (endpoints preserved exactly,
// single points replicated), flattened world-normalized, then auxiliary
// features [duration / t_max, start, end, straight-line / path length].
// Total dimension 2 * l_fix + 6.
std::vector<double> resample_segment(const env::TrajectorySegment& seg, std::size_t l_fix,
                                     const env::EnvConfig& cfg);

// -mean(log P) over policy-segment scores.
core::Tensor generator_loss(core::Tape& tape, const core::Tensor& policy_scores);

// -mean(log P_exp) - mean(log(1 - P_pol)).
core::Tensor discriminator_loss(core::Tape& tape, const core::Tensor& expert_scores,
                                const core::Tensor& policy_scores);

struct IrlConfig {
  nets::MhsaConfig mhsa;
  nets::GatConfig gat;
  std::size_t l_fix = 16;
  double c_alpha = 0.5;
  double c_beta = 1.0;
  double rho = 0.9;
  std::vector<std::size_t> disc_hidden = {64, 64};
  double lr_gen = 1e-5;
  double lr_disc = 2e-5;
  bool use_mhsa = true;  // ablated: pool raw embeddings instead of MHSA output
  bool use_gat = true;   // ablated: fuse trajectory features only

  std::size_t feat_dim() const { return mhsa.d + (use_gat ? gat.d_g : 0); }
  std::size_t disc_in() const { return 2 * l_fix + 6; }
  nets::RewardHeadConfig head_config() const;
  nets::MlpConfig disc_config() const;
  void validate() const;
};

struct IrlState {
  IrlConfig cfg;
  core::ParamStore gen_params;   // mhsa/..., gat/..., head/...
  core::ParamStore disc_params;  // disc/...
  core::AdamState gen_opt;
  core::AdamState disc_opt;
  SharedCoefficients shared;
  expert::DemoDataset demos;
  core::Rng rng{0};  // expert batch sampling
};

// Demos must be non-empty: segments feed every discriminator update.
IrlState init_irl(const IrlConfig& cfg, expert::DemoDataset demos, std::uint64_t seed);

struct IrlStepResult {
  std::vector<double> rewards;  // adapted for completing agents, else passthrough
  bool updated = false;
  double gen_loss = 0.0;
  double disc_loss = 0.0;
  double disc_accuracy = 0.0;
  double alpha = 1.0;  // shared coefficients after this step
  double beta = 0.0;
};

// Front half of a step: encode each fresh segment, produce coefficients,
// fold them into the shared pair, and adapt completing agents' rewards. No
// parameter updates and no random draws; this is the frozen-module path.
IrlStepResult irl_adapt(IrlState& st, const std::vector<env::TrajectorySegment>& fresh_segments,
                        const std::vector<double>& env_rewards, const env::WorldState& post_state,
                        const env::EnvConfig& env_cfg);

// One full step: irl_adapt, then one generator update and one discriminator
// update on a balanced batch. With no fresh segments everything passes
// through untouched.
IrlStepResult irl_step(IrlState& st, const std::vector<env::TrajectorySegment>& fresh_segments,
                       const std::vector<double>& env_rewards, const env::WorldState& post_state,
                       const env::EnvConfig& env_cfg);

struct CoefficientLogRow {
  std::size_t episode = 0;
  std::size_t step = 0;
  double alpha = 1.0;
  double beta = 0.0;
  double gen_loss = 0.0;
  double disc_loss = 0.0;
  double disc_accuracy = 0.0;
};

// CSV with header episode,step,alpha,beta,gen_loss,disc_loss,disc_accuracy.
void write_coefficient_log(const std::vector<CoefficientLogRow>& rows, const std::string& path);

}  // namespace mata::irl
