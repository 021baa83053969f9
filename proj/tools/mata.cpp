#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mata/core/checkpoint.hpp"
#include "mata/env/episode_log.hpp"
#include "mata/expert/expert.hpp"
#include "mata/harness/harness.hpp"

namespace {

std::string g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20)
          out += ' ';
        else
          out += c;
    }
  }
  return out;
}

const char* error_kind(const mata::Error& e) {
  if (dynamic_cast<const mata::ConfigError*>(&e)) return "config";
  if (dynamic_cast<const mata::DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const mata::ContractError*>(&e)) return "contract";
  if (dynamic_cast<const mata::IoError*>(&e)) return "io";
  return "error";
}

int fail_line(const char* kind, const std::string& message) {
  std::fprintf(stderr, "{\"error\":\"%s\",\"message\":\"%s\"}\n", kind,
               json_escape(message).c_str());
  return 1;
}

mata::harness::RunConfig load_or_default(const std::string& path) {
  return path.empty() ? mata::harness::desk_profile() : mata::harness::load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mata;

  CLI::App app{"adversarial reward learning laboratory for multi-agent task allocation"};
  app.require_subcommand(1);
  int rc = 0;

  // gen-demos
  std::string gd_config, gd_out;
  std::size_t gd_episodes = 0;
  std::uint64_t gd_seed = 1;
  auto* gd = app.add_subcommand("gen-demos", "generate an expert demonstration dataset");
  gd->add_option("--config", gd_config, "run config JSON (default: desk profile)");
  gd->add_option("--episodes", gd_episodes, "expert episodes (default: config demo_episodes)");
  gd->add_option("--seed", gd_seed, "generation seed")->default_val(1);
  gd->add_option("--out", gd_out, "output JSONL path")->required();
  gd->callback([&]() {
    const harness::RunConfig cfg = load_or_default(gd_config);
    const std::size_t eps = gd_episodes ? gd_episodes : cfg.demo_episodes;
    const expert::DemoDataset demos = expert::generate_demos(cfg.env, eps, gd_seed);
    expert::write_demos(demos, gd_out);
    std::printf("wrote %zu segments from %zu episodes to %s\n", demos.segments.size(), eps,
                gd_out.c_str());
  });

  // train
  std::string tr_config, tr_out;
  std::uint64_t tr_seed = 0;
  bool tr_no_gat = false, tr_no_mhsa = false, tr_no_irl = false, tr_freeze = false;
  auto* tr = app.add_subcommand("train", "train the policy, with reward inference by default");
  tr->add_option("--config", tr_config, "run config JSON (default: desk profile)");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "single seed (default: config seeds)");
  tr->add_option("--out", tr_out, "output directory (default: config out_dir)");
  tr->add_flag("--no-gat", tr_no_gat, "ablate relational attention");
  tr->add_flag("--no-mhsa", tr_no_mhsa, "ablate trajectory self-attention");
  tr->add_flag("--no-irl", tr_no_irl, "disable reward inference entirely");
  tr->add_flag("--freeze-irl", tr_freeze, "run reward inference without updates");
  tr->callback([&]() {
    harness::RunConfig cfg = load_or_default(tr_config);
    cfg.ablation.no_gat = cfg.ablation.no_gat || tr_no_gat;
    cfg.ablation.no_mhsa = cfg.ablation.no_mhsa || tr_no_mhsa;
    cfg.ablation.no_irl = cfg.ablation.no_irl || tr_no_irl;
    cfg.freeze_irl = cfg.freeze_irl || tr_freeze;
    if (!tr_out.empty()) cfg.out_dir = tr_out;

    expert::DemoDataset demos;
    const expert::DemoDataset* demos_ptr = nullptr;
    if (cfg.train_config().irl_mode != marl::IrlMode::kOff) {
      if (cfg.demos.empty())
        throw ConfigError("train: reward inference is enabled but the config names no demo file");
      demos = expert::read_demos(cfg.demos);
      harness::RunConfig probe = cfg;
      probe.env = demos.config;
      if (harness::config_hash(probe) != harness::config_hash(cfg))
        throw ConfigError("train: demo dataset environment differs from the run environment");
      demos_ptr = &demos;
    }
    std::vector<std::uint64_t> seeds =
        tr_seed_opt->count() ? std::vector<std::uint64_t>{tr_seed} : cfg.seeds;
    for (const std::uint64_t s : seeds) {
      const std::string dir = cfg.out_dir + "/run-" + std::to_string(s);
      const harness::RunResult res = harness::run_one(cfg, s, demos_ptr, dir);
      if (res.record.episodes.empty()) {
        std::printf("run seed=%llu dir=%s wall=%ss\n", static_cast<unsigned long long>(s),
                    dir.c_str(), g9(res.wall_seconds).c_str());
      } else {
        const harness::RunMetrics m = harness::run_metrics(res.record.episodes);
        std::printf("run seed=%llu dir=%s reward=%s wall=%ss\n",
                    static_cast<unsigned long long>(s), dir.c_str(), g9(m.reward).c_str(),
                    g9(res.wall_seconds).c_str());
      }
    }
  });

  // evaluate
  std::string ev_checkpoint, ev_config, ev_out = "eval.csv";
  std::size_t ev_episodes = 100;
  std::uint64_t ev_seed = 1;
  bool ev_with_irl = false;
  auto* ev = app.add_subcommand("evaluate", "greedy rollouts from a checkpointed policy");
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint file")->required();
  ev->add_option("--config", ev_config, "run config JSON (default: desk profile)");
  ev->add_option("--episodes", ev_episodes, "evaluation episodes")->default_val(100);
  ev->add_option("--seed", ev_seed, "evaluation seed")->default_val(1);
  ev->add_flag("--with-irl", ev_with_irl, "run the frozen reward module alongside");
  ev->add_option("--out", ev_out, "per-episode CSV path")->default_val("eval.csv");
  ev->callback([&]() {
    const harness::RunConfig cfg = load_or_default(ev_config);
    const marl::TrainConfig tc = cfg.train_config();
    marl::AgentNets nets = marl::init_agent_nets(cfg.env, cfg.marl, 0);
    irl::IrlState st;
    if (ev_with_irl) {
      // shape scaffold only; apply_checkpoint installs the real values
      st.cfg = tc.irl;
      nets::init_mhsa_params(st.gen_params, tc.irl.mhsa, 0);
      if (tc.irl.use_gat) nets::init_gat_params(st.gen_params, tc.irl.gat, 0);
      nets::init_head_params(st.gen_params, tc.irl.head_config());
      nets::init_mlp_params(st.disc_params, "disc", tc.irl.disc_config(), 0);
      st.shared.rho = tc.irl.rho;
    }
    const core::ParamStore all = core::load_checkpoint(ev_checkpoint);
    harness::apply_checkpoint(all, nets, ev_with_irl ? &st : nullptr);
    const std::vector<marl::EvalEpisode> eps =
        marl::evaluate_policy(nets, ev_with_irl ? &st : nullptr, cfg.env, ev_episodes, ev_seed);
    std::ofstream f(ev_out);
    if (!f) throw IoError("cannot open " + ev_out + " for writing");
    f << "episode,cumulative_reward,timesteps,total_distance\n";
    double mean = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const env::EpisodeMetrics& m = eps[i].metrics;
      f << i << ',' << g9(m.cumulative_reward) << ',' << m.timesteps << ','
        << g9(m.total_distance) << '\n';
      mean += m.cumulative_reward;
    }
    if (!f) throw IoError("write failure on " + ev_out);
    if (!eps.empty()) mean /= static_cast<double>(eps.size());
    std::printf("episodes=%zu mean_reward=%s csv=%s\n", eps.size(), g9(mean).c_str(),
                ev_out.c_str());
  });

  // grid
  std::string gr_config, gr_out = "grid";
  std::vector<std::size_t> gr_agents, gr_tasks;
  std::size_t gr_reps = 2;
  auto* gr = app.add_subcommand("grid", "train across an agent x task grid and summarize");
  gr->add_option("--config", gr_config, "run config JSON (default: desk profile)");
  gr->add_option("--agents", gr_agents, "agent counts, comma separated")
      ->required()
      ->delimiter(',');
  gr->add_option("--tasks", gr_tasks, "task counts, comma separated")->required()->delimiter(',');
  gr->add_option("--reps", gr_reps, "runs per cell")->default_val(2);
  gr->add_option("--out", gr_out, "output directory")->default_val("grid");
  gr->callback([&]() {
    const harness::RunConfig cfg = load_or_default(gr_config);
    harness::GridSpec spec;
    spec.agents = gr_agents;
    spec.tasks = gr_tasks;
    spec.reps = gr_reps;
    const harness::GridResult res = harness::run_grid(cfg, spec, gr_out);
    std::fputs(harness::summary_table(res.stats).c_str(), stdout);
    std::printf("summary: %s/summary.csv (%zu runs)\n", gr_out.c_str(), res.run_dirs.size());
  });

  // validate
  std::string va_log;
  auto* va = app.add_subcommand("validate", "check an episode log against the task constraints");
  va->add_option("--log", va_log, "episode log JSONL")->required();
  va->callback([&]() {
    const env::EpisodeLog log = env::read_episode_log(va_log);
    const env::ConstraintReport rep = env::validate_constraints(log, log.config);
    const double score = env::score_objective(log, env::ObjectiveWeights{}, log.config);
    if (rep.clean()) {
      std::printf("constraints: clean\n");
    } else {
      std::printf("constraints: %zu violations\n", rep.violations.size());
      std::size_t shown = 0;
      for (const auto& v : rep.violations) {
        if (shown++ == 10) {
          std::printf("  ...\n");
          break;
        }
        std::printf("  [%s] %s\n", v.constraint.c_str(), v.detail.c_str());
      }
    }
    std::printf("steps: %zu\n", log.steps.size());
    std::printf("objective: %s\n", g9(score).c_str());
    if (!rep.clean()) rc = 1;
  });

  // selfcheck
  auto* sc = app.add_subcommand("selfcheck", "gradient, kernel, and invariant checks");
  sc->callback([&]() {
    const int failures = harness::selfcheck();
    if (failures) {
      std::printf("%d check(s) failed\n", failures);
      rc = 1;
    } else {
      std::printf("all checks passed\n");
    }
  });

  // probe
  std::string pr_out;
  std::size_t pr_repeats = 3;
  double pr_min_seconds = 0.02;
  auto* pr = app.add_subcommand("probe", "component timing probe across input sizes");
  pr->add_option("--repeats", pr_repeats, "measurements per size")->default_val(3);
  pr->add_option("--min-seconds", pr_min_seconds, "minimum time per measurement")
      ->default_val(0.02);
  pr->add_option("--out", pr_out, "optional CSV path");
  pr->callback([&]() {
    harness::ProbeConfig pc;
    pc.repeats = pr_repeats;
    pc.min_seconds = pr_min_seconds;
    const harness::ProbeResult res = harness::scaling_probe(pc);
    for (const auto& c : res.cells)
      std::printf("axis=%s size=%zu seconds=%s\n", c.axis.c_str(), c.size,
                  g9(c.seconds_per_step).c_str());
    std::printf("l_exponent=%s l_double_ratio=%s\n", g9(res.l_exponent).c_str(),
                g9(res.l_double_ratio).c_str());
    std::printf("m_exponent=%s m_double_ratio=%s\n", g9(res.m_exponent).c_str(),
                g9(res.m_double_ratio).c_str());
    std::printf("n_exponent=%s n_double_ratio=%s\n", g9(res.n_exponent).c_str(),
                g9(res.n_double_ratio).c_str());
    std::printf("stability=%s\n", g9(res.stability).c_str());
    if (!pr_out.empty()) {
      harness::write_probe_csv(res, pr_out);
      std::printf("csv=%s\n", pr_out.c_str());
    }
  });

  // init-config
  std::string ic_profile = "desk", ic_out;
  auto* ic = app.add_subcommand("init-config", "write a profile config file");
  ic->add_option("--profile", ic_profile, "desk or full")->default_val("desk");
  ic->add_option("--out", ic_out, "output path")->required();
  ic->callback([&]() {
    if (ic_profile != "desk" && ic_profile != "full")
      throw ConfigError("init-config: unknown profile \"" + ic_profile + "\"");
    const harness::RunConfig cfg =
        ic_profile == "desk" ? harness::desk_profile() : harness::full_profile();
    harness::save_config(cfg, ic_out);
    std::printf("wrote %s profile to %s\n", ic_profile.c_str(), ic_out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::fprintf(stderr, "{\"error\":\"cli\",\"message\":\"%s\"}\n",
                 json_escape(e.what()).c_str());
    return e.get_exit_code();
  } catch (const Error& e) {
    return fail_line(error_kind(e), e.what());
  } catch (const std::exception& e) {
    return fail_line("internal", e.what());
  }
  return rc;
}
