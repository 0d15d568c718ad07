#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "batchrl/harness.hpp"

using namespace batchrl;
namespace fs = std::filesystem;

namespace {

// Thirty-step batches and small networks: seconds, not minutes.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.plant.t_end = 600.0;
  cfg.td3.hidden = {16, 16};
  cfg.td3.batch_size = 16;
  cfg.td3.warmup = 32;
  cfg.td3.random_steps = 32;
  cfg.dqn.hidden = {16, 16};
  cfg.dqn.batch_size = 16;
  cfg.dqn.warmup = 32;
  cfg.training.offline_episodes = 4;
  cfg.training.eval_every = 2;
  cfg.training.patience = 0;
  cfg.online_batches = 4;
  cfg.seeds = {1, 2};
  return cfg;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() /
            ("batchrl_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  return line;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  for (std::string line; std::getline(is, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("config survives a JSON round trip") {
  ExperimentConfig cfg = tiny_config();
  cfg.agent = AgentKind::ddpg;
  cfg.reward.kind = RewardKind::pi;
  cfg.reward.pid_outer_inverse = false;
  cfg.td3.actor_output = OutputActivation::linear;
  cfg.td3.reward_transform = RewardTransform::identity;
  cfg.b2b_variation = 0.1;
  cfg.sweep_agents = {AgentKind::td3, AgentKind::dqn};
  cfg.sweep_rewards = {RewardKind::pid};
  cfg.plant.params.k0[2] = 1234.5;
  const ExperimentConfig back = experiment_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(back.agent == AgentKind::ddpg);
  CHECK(back.td3 == cfg.td3);
  CHECK(back.plant.params == cfg.plant.params);
  CHECK(back.reward == cfg.reward);
  CHECK(back.training == cfg.training);
  CHECK(back.sweep_agents == cfg.sweep_agents);

  TempDir dir("cfg");
  save_config(dir.path() / "c.json", cfg);
  CHECK(to_json(load_config(dir.path() / "c.json")) == to_json(cfg));
}

TEST_CASE("partial configs fall back to defaults") {
  const auto cfg = experiment_from_json(nlohmann::json::parse(R"({"agent": "dqn"})"));
  CHECK(cfg.agent == AgentKind::dqn);
  CHECK(cfg.td3 == Td3Hyper{});
  CHECK(cfg.training.offline_episodes == 150);
  CHECK(cfg.dqn.eps_decay_steps == 150 * 300);
  CHECK(cfg.plant == default_plant_config());
}

TEST_CASE("config errors") {
  using nlohmann::json;
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"agnet": "td3"})")), std::invalid_argument);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"td3": {"sigma": 0.1}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"plant": {"kinetics": {"k1": 1}}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"version": 99})")), std::invalid_argument);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"agent": "ppo"})")), std::invalid_argument);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"experiment": {"online_batches": 2}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"experiment": {"seeds": []}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"td3": {"gamma": 1.0}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(experiment_from_json(json::parse(R"({"td3": {"actor_output": "relu"}})")),
                  std::invalid_argument);

  TempDir dir("badcfg");
  std::ofstream(dir.path() / "broken.json") << "{ \"agent\": ";
  CHECK_THROWS_AS(load_config(dir.path() / "broken.json"), std::invalid_argument);
  CHECK_THROWS(load_config(dir.path() / "missing.json"));
}

TEST_CASE("sweep expansion") {
  ExperimentConfig cfg = tiny_config();
  cfg.output_dir = "out";
  CHECK(expand_sweep(cfg).size() == 1);
  cfg.sweep_agents = {AgentKind::td3, AgentKind::ddpg, AgentKind::dqn};
  cfg.sweep_rewards = {RewardKind::pi, RewardKind::pid};
  const auto cells = expand_sweep(cfg);
  REQUIRE(cells.size() == 6);
  CHECK(cells[0].agent == AgentKind::td3);
  CHECK(cells[0].reward.kind == RewardKind::pi);
  CHECK(cells[5].agent == AgentKind::dqn);
  CHECK(cells[5].output_dir == fs::path("out") / "dqn_pid");
  for (const auto& c : cells) CHECK(c.sweep_agents.empty());
}

TEST_CASE("offline stage bookkeeping") {
  ExperimentConfig cfg = tiny_config();
  const std::size_t steps = cfg.plant.steps_per_episode();
  REQUIRE(steps == 30);

  SUBCASE("no episodes leaves the agent as initialized") {
    auto agent = make_agent(cfg, 3);
    std::stringstream before;
    agent->save(before);
    TrainingOptions opts = cfg.training;
    opts.offline_episodes = 0;
    const OfflineResult r = train_offline(*agent, cfg.plant, cfg.reward, cfg.observation, opts, 3);
    std::stringstream after;
    agent->save(after);
    CHECK(after.str() == before.str());
    CHECK(r.e1.empty());
  }

  SUBCASE("one episode fills replay with one batch of transitions") {
    auto agent = make_agent(cfg, 3);
    TrainingOptions opts = cfg.training;
    opts.offline_episodes = 1;
    const OfflineResult r = train_offline(*agent, cfg.plant, cfg.reward, cfg.observation, opts, 3);
    CHECK(r.e1.size() == steps);
    CHECK(r.episodes_run == 1);
    CHECK(r.episode_rmse.size() == 1);
    CHECK(r.e1.at(steps - 1).done);
    CHECK_FALSE(r.e1.at(0).done);
  }

  SUBCASE("evaluation schedule and early stop") {
    auto agent = make_agent(cfg, 3);
    TrainingOptions opts = cfg.training;
    opts.offline_episodes = 12;
    opts.eval_every = 2;
    opts.patience = 1;
    opts.min_delta = 1e9;  // nothing ever counts as an improvement after the first
    const OfflineResult r = train_offline(*agent, cfg.plant, cfg.reward, cfg.observation, opts, 3);
    CHECK(r.stopped_early);
    CHECK(r.episodes_run == 4);
    REQUIRE(r.evals.size() == 2);
    CHECK(r.evals[0].episode == 2);
    CHECK(r.evals[1].episode == 4);
  }
}

TEST_CASE("online stage") {
  ExperimentConfig cfg = tiny_config();
  OfflineArtifacts off = run_offline_stage(cfg, 5);
  std::stringstream offline_bytes;
  off.agent->save(offline_bytes);

  const SeedResult r = run_online_stage(cfg, 5, off);
  CHECK(r.ok());
  REQUIRE(r.rows.size() == 4);
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(r.rows[b].batch == b + 1);
    CHECK(r.rows[b].rmse >= 0.0);
    CHECK(r.rows[b].control_effort > 0.0);
  }
  CHECK(r.summary.rmse == doctest::Approx(summarize_last(r.rows).rmse));

  // The offline agent itself is not modified by the online stage.
  std::stringstream after;
  off.agent->save(after);
  CHECK(after.str() == offline_bytes.str());

  SUBCASE("networks carry over from batch to batch") {
    auto agent = off.agent->clone();
    std::vector<std::string> snapshots;
    train_online(*agent, off.offline.e1, cfg.plant, cfg.reward, cfg.observation, cfg.training, 3,
                 0.0, 5, [&](std::size_t, const EpisodeTrace& t, const Agent& a) {
                   CHECK(t.rows.size() == 30);
                   CHECK(t.updates == 30);
                   std::stringstream ss;
                   a.save(ss);
                   snapshots.push_back(ss.str());
                 });
    REQUIRE(snapshots.size() == 3);
    CHECK(snapshots[0] != snapshots[1]);
    std::stringstream final_state;
    agent->save(final_state);
    CHECK(final_state.str() == snapshots[2]);
  }
}

TEST_CASE("batch-to-batch kinetics") {
  const KineticParams nominal = default_kinetics();
  CHECK(batch_kinetics(nominal, 0.0, 1, 3) == nominal);
  const KineticParams a = batch_kinetics(nominal, 0.1, 1, 0);
  const KineticParams b = batch_kinetics(nominal, 0.1, 1, 1);
  CHECK_FALSE(a == nominal);
  CHECK_FALSE(a == b);
  CHECK(batch_kinetics(nominal, 0.1, 1, 1) == b);
  CHECK(a.ea == nominal.ea);
}

TEST_CASE("experiment outputs") {
  ExperimentConfig cfg = tiny_config();
  TempDir dir("exp");
  cfg.output_dir = dir.path() / "run_a";
  const ExperimentResult r = run_experiment(cfg);
  CHECK(r.ok());
  REQUIRE(r.seeds.size() == 2);
  const fs::path out = cfg.output_dir;

  CHECK(first_line(out / "metrics.csv") == kMetricsHeader);
  CHECK(count_lines(out / "metrics.csv") == 1 + 2 * 4);
  CHECK(first_line(out / "summary.csv") == kSummaryHeader);
  CHECK(count_lines(out / "summary.csv") == 1 + 2 + 1);
  CHECK(fs::exists(out / "config.json"));
  for (std::uint64_t seed : {1, 2}) {
    const fs::path sd = out / ("seed_" + std::to_string(seed));
    CHECK(fs::exists(sd / "offline.ckpt"));
    CHECK(fs::exists(sd / "online.ckpt"));
    CHECK(fs::exists(sd / "e1.replay"));
    CHECK(first_line(sd / "offline.csv") == "episode,train_rmse,eval_rmse");
    for (int b = 1; b <= 4; ++b) {
      const fs::path trace = sd / ("trace_batch" + std::to_string(b) + ".csv");
      CHECK(first_line(trace) == kTraceHeader);
      CHECK(count_lines(trace) == 31);
    }
  }
  const double mean_rmse = 0.5 * (r.seeds[0].summary.rmse + r.seeds[1].summary.rmse);
  CHECK(r.mean_summary.rmse == doctest::Approx(mean_rmse));

  SUBCASE("identical config and seeds give identical files") {
    ExperimentConfig again = cfg;
    again.output_dir = dir.path() / "run_b";
    run_experiment(again, RunOptions{true, false});
    for (const char* f : {"metrics.csv", "summary.csv", "seed_1/trace_batch4.csv",
                          "seed_2/trace_batch1.csv", "seed_2/offline.csv"}) {
      CAPTURE(f);
      CHECK(slurp(out / f) == slurp(again.output_dir / f));
    }
  }

  SUBCASE("checkpoints reload into the same greedy policy") {
    const Checkpoint ck = load_checkpoint(out / "seed_1" / "online.ckpt");
    CHECK(to_json(ck.config) == to_json(cfg));
    CHECK(ck.agent->kind() == AgentKind::td3);
    const EpisodeTrace a = evaluate_agent(*ck.agent, ck.config);
    const EpisodeTrace b = evaluate_agent(*ck.agent, ck.config);
    CHECK(a.ok());
    CHECK(a.temperatures() == b.temperatures());
    CHECK_THROWS(load_checkpoint(out / "metrics.csv"));
  }

  SUBCASE("compare") {
    ExperimentConfig twin = cfg;
    twin.output_dir = dir.path() / "run_c";
    run_experiment(twin);
    const auto table = compare({load_run_summary(out), load_run_summary(twin.output_dir)});
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[1].d_rmse == 0.0);
    CHECK(table.rows[1].d_action_sd == 0.0);
    CHECK(table.rows[1].d_control_effort == 0.0);
    CHECK(table.rows[0].summary.rmse == doctest::Approx(r.mean_summary.rmse).epsilon(1e-9));
    const std::string text = format_comparison(table);
    CHECK(text.find("td3/pid run_a") != std::string::npos);
    CHECK(text.find("td3/pid run_c") != std::string::npos);
    write_comparison_csv(dir.path() / "cmp.csv", table);
    CHECK(count_lines(dir.path() / "cmp.csv") == 3);

    ExperimentConfig other = cfg;
    other.plant.params.ua *= 1.1;
    other.output_dir = dir.path() / "run_d";
    other.seeds = {1};
    run_experiment(other);
    CHECK_THROWS_AS(compare({load_run_summary(out), load_run_summary(other.output_dir)}),
                    std::invalid_argument);
    CHECK_THROWS_AS(compare({}), std::invalid_argument);
    CHECK_THROWS(load_run_summary(dir.path() / "nowhere"));
  }
}

TEST_CASE("every agent kind runs end to end") {
  for (AgentKind kind : {AgentKind::ddpg, AgentKind::dqn}) {
    CAPTURE(to_string(kind));
    ExperimentConfig cfg = tiny_config();
    cfg.agent = kind;
    cfg.seeds = {7};
    const ExperimentResult r = run_experiment(cfg, RunOptions{false, false});
    CHECK(r.ok());
    CHECK(r.seeds[0].rows.size() == 4);
    for (const auto& row : r.seeds[0].rows) {
      CHECK(row.rmse > 0.0);
      CHECK(row.action_sd >= 0.0);
    }
  }
}

TEST_CASE("plant faults are recorded per seed") {
  ExperimentConfig cfg = tiny_config();
  // Every admissible jacket temperature drives the reactor out of its sanity band.
  cfg.plant.action_min = 900.0;
  cfg.plant.action_max = 1000.0;
  TempDir dir("fault");
  cfg.output_dir = dir.path();
  const ExperimentResult r = run_experiment(cfg);
  CHECK_FALSE(r.ok());
  REQUIRE(r.seeds.size() == 2);
  for (const auto& s : r.seeds) {
    CHECK_FALSE(s.ok());
    CHECK(s.rows.size() == 1);  // the faulting batch ends the online stage
  }
  CHECK(r.mean_summary.fault == "2 of 2 seeds faulted");
  CHECK(std::isnan(r.mean_summary.rmse));
  const std::string metrics = slurp(dir.path() / "metrics.csv");
  CHECK(metrics.find("sanity") != std::string::npos);
}

TEST_CASE("trace CSV layout") {
  EpisodeTrace t;
  TraceRow row;
  row.state = reset(default_plant_config());
  row.state.t = 20.0;
  row.action = 341.25;
  row.reward = 12.5;
  t.rows.push_back(row);
  TempDir dir("trace");
  write_trace_csv(dir.path() / "t.csv", t, 345.0);
  std::ifstream is(dir.path() / "t.csv");
  std::string header, line;
  std::getline(is, header);
  std::getline(is, line);
  CHECK(header == kTraceHeader);
  CHECK(line.rfind("20,", 0) == 0);
  CHECK(line.find(",345,341.25,12.5,5") != std::string::npos);
}
