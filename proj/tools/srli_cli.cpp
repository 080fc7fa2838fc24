// srli command-line tool: batch runs, benchmarks, the feasible-coverage
// oracle, replays, and the bridge server.

#include "srli/srli.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

using namespace srli;

namespace {

EpisodeConfig load_episode(const std::string& path) {
  EpisodeConfig cfg;
  if (path.empty()) return cfg;
  KeyValueConfig kv = KeyValueConfig::load(path);
  apply_episode_config(kv, cfg);
  kv.reject_unused();
  cfg.validate();
  return cfg;
}

std::vector<int> parse_levels(const std::string& s) {
  if (s.empty() || s == "none") return {};
  return KeyValueConfig::convert<std::vector<int>>(s);
}

struct BatchFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::string policy = "orbit";
  int envs = 512;
  int episodes = 6;
  std::string curriculum = "0,4,9,14,19";
  int threads = 0;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--config", config, "episode config file (key = value)");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--envs", envs, "number of environments")->check(CLI::PositiveNumber);
    app->add_option("--episodes", episodes, "episodes per environment")->check(CLI::PositiveNumber);
    app->add_option("--curriculum", curriculum, "comma-separated obstacle counts, or 'none' for the config's");
    app->add_option("--threads", threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  }

  BatchConfig make() const {
    BatchConfig bc;
    bc.episode = load_episode(config);
    bc.master_seed = seed;
    bc.policy = parse_policy_kind(policy);
    bc.env_count = envs;
    bc.episodes_per_env = episodes;
    bc.curriculum = parse_levels(curriculum);
    bc.threads = threads;
    bc.output_path = out;
    return bc;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"srli: semantic inspection simulator"};
  app.require_subcommand(1);

  BatchFlags run_flags;
  std::string curves_out, endpoint = "stdio";
  int timeout_ms = 30000;
  auto* run = app.add_subcommand("run", "run a batch of episodes and report coverage");
  run_flags.add(run);
  run->add_option("--policy", run_flags.policy, "random | orbit | bridge");
  run->add_option("--out", run_flags.out, "per-step metrics CSV");
  run->add_option("--curves", curves_out, "coverage-over-time CSV (mean, p5, p95 per level and second)");
  run->add_option("--endpoint", endpoint, "bridge endpoint for --policy bridge: stdio or unix:<path>");
  run->add_option("--timeout-ms", timeout_ms, "bridge receive timeout");

  BatchFlags serve_flags;
  auto* serve_cmd = app.add_subcommand("serve", "serve environments to an external policy over the bridge");
  serve_flags.add(serve_cmd);
  serve_cmd->add_option("--endpoint", endpoint, "stdio or unix:<path>");
  serve_cmd->add_option("--timeout-ms", timeout_ms, "receive timeout");

  int bench_envs = 64, bench_threads = 0, bench_obstacles = 9;
  std::uint64_t bench_steps = 6400;
  auto* bench_cmd = app.add_subcommand("bench", "measure step throughput");
  bench_cmd->add_option("--envs", bench_envs, "parallel environments")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--steps", bench_steps, "total steps across all environments");
  bench_cmd->add_option("--threads", bench_threads, "worker threads (0: all cores)");
  bench_cmd->add_option("--obstacles", bench_obstacles, "obstacles per room");

  std::string scene_path;
  int label = 1;
  double d_ref = 1.0, band = 0.2, grid = 0.2;
  int yaw_bins = 16;
  auto* feas = app.add_subcommand("feasible-coverage", "faces of a semantic object inspectable within the band");
  feas->add_option("--scene", scene_path, "scene manifest")->required();
  feas->add_option("--label", label, "semantic label");
  feas->add_option("--dref", d_ref, "reference inspection distance, m");
  feas->add_option("--band", band, "allowed deviation from dref, m");
  feas->add_option("--grid", grid, "viewpoint grid spacing, m");
  feas->add_option("--yaw-bins", yaw_bins, "camera headings tried per viewpoint");

  std::uint64_t scene_seed = 0;
  int scene_obstacles = 0;
  std::string scene_out;
  auto* scene_cmd = app.add_subcommand("scene", "generate a room and write its manifest");
  scene_cmd->add_option("--seed", scene_seed, "room seed");
  scene_cmd->add_option("--obstacles", scene_obstacles, "obstacle count");
  scene_cmd->add_option("--out", scene_out, "manifest path")->required();

  std::string record_config, record_out, record_policy = "orbit";
  std::uint64_t record_seed = 0;
  auto* record = app.add_subcommand("record", "record one scripted episode as a replay file");
  record->add_option("--config", record_config, "episode config file");
  record->add_option("--seed", record_seed, "episode seed");
  record->add_option("--policy", record_policy, "random | orbit");
  record->add_option("--out", record_out, "replay path")->required();

  std::string snap_config, snap_dir, snap_policy = "orbit";
  std::uint64_t snap_seed = 0;
  int snap_steps = 0;
  auto* snap = app.add_subcommand("snapshot", "write depth, mask, and occupancy map after some steps of an episode");
  snap->add_option("--config", snap_config, "episode config file");
  snap->add_option("--seed", snap_seed, "episode seed");
  snap->add_option("--policy", snap_policy, "random | orbit");
  snap->add_option("--steps", snap_steps, "control steps before the snapshot")->check(CLI::NonNegativeNumber);
  snap->add_option("--out-dir", snap_dir, "directory for depth.pgm, mask.pbm, map.srlm")->required();

  std::string show_config;
  auto* config_cmd = app.add_subcommand("config", "print the effective episode configuration, every key included");
  config_cmd->add_option("--config", show_config, "config file to merge over the defaults");

  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "re-simulate a replay and check the reward stream bit for bit");
  replay->add_option("--file", replay_path, "replay path")->required();

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGPIPE, SIG_IGN);

  try {
    if (run->parsed()) {
      BatchConfig bc = run_flags.make();
      if (bc.policy == PolicyKind::bridge) {
        const ServeStats st = serve(endpoint, bc, timeout_ms);
        std::cerr << "bridge session: " << st.episodes << " episodes, " << st.rounds << " rounds\n";
        return 0;
      }
      const CoverageReport rep = run_batch(bc);
      write_report(std::cout, rep);
      if (!curves_out.empty()) {
        std::ofstream out(curves_out);
        if (!out) throw IoError(curves_out, "cannot open for writing");
        write_curves_csv(out, rep);
      }
    } else if (serve_cmd->parsed()) {
      const ServeStats st = serve(endpoint, serve_flags.make(), timeout_ms);
      std::cerr << "bridge session: " << st.episodes << " episodes, " << st.rounds << " rounds"
                << (st.client_bye ? " (client bye)" : "") << '\n';
    } else if (bench_cmd->parsed()) {
      EpisodeConfig cfg;
      cfg.room.obstacle_count = bench_obstacles;
      write_bench_report(std::cout, bench(bench_envs, bench_steps, bench_threads, cfg));
    } else if (feas->parsed()) {
      const Scene scene = load_scene(scene_path);
      const auto id = scene.semantic_object(label);
      if (!id) throw InvalidArgument("label " + std::to_string(label) + " is not in " + scene_path);
      FeasibilityParams fp;
      fp.grid = grid;
      fp.yaw_bins = yaw_bins;
      const FeasibleSet fs = feasible_coverage(scene, *id, d_ref, band, fp);
      std::cout << "faces " << fs.feasible.size() << "\nfeasible " << fs.count << "\nfraction "
                << format_double(fs.fraction()) << "\nviewpoints " << fs.viewpoints << "\nfeasible_ids";
      for (std::size_t f = 0; f < fs.feasible.size(); ++f)
        if (fs.feasible[f]) std::cout << ' ' << f;
      std::cout << '\n';
    } else if (scene_cmd->parsed()) {
      RoomSpec spec;
      spec.seed = scene_seed;
      spec.obstacle_count = scene_obstacles;
      save_scene(scene_out, generate_room(spec));
    } else if (record->parsed()) {
      const Replay r = record_episode(load_episode(record_config), record_seed, parse_policy_kind(record_policy));
      save_replay(record_out, r);
      std::cout << "recorded " << r.records.size() << " steps\n";
    } else if (snap->parsed()) {
      Env env(load_episode(snap_config));
      auto policy = make_policy(parse_policy_kind(snap_policy), env.config());
      Observation obs = env.reset(snap_seed);
      policy->reset(snap_seed);
      for (int k = 0; k < snap_steps && env.termination() == Termination::running; ++k) {
        StepResult r = env.step(policy->act(obs));
        if (r.info.label_switched) policy->retarget();
        obs = std::move(r.observation);
      }
      const std::string dir = snap_dir + "/";
      write_depth_pgm(dir + "depth.pgm", env.last_render().depth, env.config().camera.max_range);
      write_mask_pbm(dir + "mask.pbm", env.last_render().mask);
      std::ofstream map(dir + "map.srlm", std::ios::binary);
      if (!map) throw IoError(dir + "map.srlm", "cannot open for writing");
      write_map_snapshot(map, env.occupancy());
      std::cout << "step " << env.step_count() << ", termination " << to_string(env.termination()) << '\n';
    } else if (config_cmd->parsed()) {
      std::cout << episode_config_text(load_episode(show_config));
    } else if (replay->parsed()) {
      const ReplayCheck c = verify_replay(load_replay(replay_path));
      if (!c.ok()) {
        std::cout << "MISMATCH at step " << *c.first_mismatch << '\n';
        return 1;
      }
      std::cout << "OK " << c.steps << " steps reproduced bit-exact\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
