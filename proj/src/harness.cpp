#include "batchrl/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "batchrl/binary_io.hpp"

namespace batchrl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kCheckpointMagic[9] = "BRLCKPT1";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* section) {
  if (!j.is_object()) throw std::invalid_argument(std::string(section) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw std::invalid_argument(std::string(section) + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

json plant_json(const PlantConfig& p) {
  const auto& k = p.params;
  const auto& s = p.init;
  return {
      {"kinetics",
       {{"k0", k.k0},
        {"ea", k.ea},
        {"dh", k.dh},
        {"volume", k.volume},
        {"ua", k.ua},
        {"m_cp", k.m_cp},
        {"mj_cpj", k.mj_cpj},
        {"fj_rhoj_cpj", k.fj_rhoj_cpj},
        {"r_gas", k.r_gas}}},
      {"initial",
       {{"c_tg", s.c_tg},
        {"c_dg", s.c_dg},
        {"c_mg", s.c_mg},
        {"c_e", s.c_e},
        {"c_a", s.c_a},
        {"c_gl", s.c_gl},
        {"T_r", s.T_r},
        {"T_j", s.T_j}}},
      {"t_end", p.t_end},
      {"dt_ctrl", p.dt_ctrl},
      {"dt_int", p.dt_int},
      {"t_ref", p.t_ref},
      {"action_min", p.action_min},
      {"action_max", p.action_max},
  };
}

void plant_from(const json& j, PlantConfig& p) {
  check_keys(j, {"kinetics", "initial", "t_end", "dt_ctrl", "dt_int", "t_ref", "action_min",
                 "action_max"},
             "plant");
  if (auto it = j.find("kinetics"); it != j.end()) {
    const json& k = *it;
    check_keys(k, {"k0", "ea", "dh", "volume", "ua", "m_cp", "mj_cpj", "fj_rhoj_cpj", "r_gas"},
               "plant.kinetics");
    auto& kp = p.params;
    read_opt(k, "k0", kp.k0);
    read_opt(k, "ea", kp.ea);
    read_opt(k, "dh", kp.dh);
    read_opt(k, "volume", kp.volume);
    read_opt(k, "ua", kp.ua);
    read_opt(k, "m_cp", kp.m_cp);
    read_opt(k, "mj_cpj", kp.mj_cpj);
    read_opt(k, "fj_rhoj_cpj", kp.fj_rhoj_cpj);
    read_opt(k, "r_gas", kp.r_gas);
  }
  if (auto it = j.find("initial"); it != j.end()) {
    const json& s = *it;
    check_keys(s, {"c_tg", "c_dg", "c_mg", "c_e", "c_a", "c_gl", "T_r", "T_j"}, "plant.initial");
    auto& st = p.init;
    read_opt(s, "c_tg", st.c_tg);
    read_opt(s, "c_dg", st.c_dg);
    read_opt(s, "c_mg", st.c_mg);
    read_opt(s, "c_e", st.c_e);
    read_opt(s, "c_a", st.c_a);
    read_opt(s, "c_gl", st.c_gl);
    read_opt(s, "T_r", st.T_r);
    read_opt(s, "T_j", st.T_j);
  }
  read_opt(j, "t_end", p.t_end);
  read_opt(j, "dt_ctrl", p.dt_ctrl);
  read_opt(j, "dt_int", p.dt_int);
  read_opt(j, "t_ref", p.t_ref);
  read_opt(j, "action_min", p.action_min);
  read_opt(j, "action_max", p.action_max);
}

std::string output_name(OutputActivation a) {
  return a == OutputActivation::linear ? "linear" : "scaled_tanh";
}

OutputActivation parse_output(const std::string& s) {
  if (s == "linear") return OutputActivation::linear;
  if (s == "scaled_tanh") return OutputActivation::scaled_tanh;
  throw std::invalid_argument("unknown actor output '" + s + "'");
}

fs::path seed_dir_for(const fs::path& out, std::uint64_t seed) {
  return out / ("seed_" + std::to_string(seed));
}

void save_replay(const fs::path& path, const ReplayBuffer& buffer) {
  auto os = open_out(path);
  buffer.save(os);
}

void write_evals_csv(const fs::path& path, const OfflineResult& r) {
  auto os = open_out(path);
  os << "episode,train_rmse,eval_rmse\n";
  std::size_t next_eval = 0;
  for (std::size_t ep = 0; ep < r.episode_rmse.size(); ++ep) {
    os << ep + 1 << ',' << num(r.episode_rmse[ep]) << ',';
    if (next_eval < r.evals.size() && r.evals[next_eval].episode == ep + 1) {
      os << num(r.evals[next_eval++].rmse);
    }
    os << '\n';
  }
}

MetricsRow mean_of(const std::vector<SeedResult>& seeds) {
  MetricsRow m;
  std::size_t n = 0;
  std::size_t faulted = 0;
  for (const auto& s : seeds) {
    if (!s.ok() || !s.summary.ok()) {
      ++faulted;
      continue;
    }
    m.rmse += s.summary.rmse;
    m.action_sd += s.summary.action_sd;
    m.control_effort += s.summary.control_effort;
    m.mean_reward += s.summary.mean_reward;
    m.wall_time_s += s.summary.wall_time_s;
    ++n;
  }
  if (n > 0) {
    const double inv = 1.0 / static_cast<double>(n);
    m.rmse *= inv;
    m.action_sd *= inv;
    m.control_effort *= inv;
    m.mean_reward *= inv;
    m.wall_time_s *= inv;
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.rmse = m.action_sd = m.control_effort = m.mean_reward = nan;
  }
  if (faulted > 0) {
    m.fault = std::to_string(faulted) + " of " + std::to_string(seeds.size()) + " seeds faulted";
  }
  return m;
}

}  // namespace

void ExperimentConfig::validate() const {
  plant.validate();
  reward.validate();
  if (reward.t_ref != plant.t_ref) {
    throw std::invalid_argument("reward and plant disagree on the setpoint");
  }
  if (agent == AgentKind::dqn) {
    dqn.validate();
  } else {
    td3.validate();
  }
  if (training.offline_episodes == 0) throw std::invalid_argument("offline_episodes must be > 0");
  if (training.replay_capacity == 0) throw std::invalid_argument("replay_capacity must be > 0");
  if (online_batches < kSummaryWindow) {
    throw std::invalid_argument("online_batches must be at least " +
                                std::to_string(kSummaryWindow));
  }
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (b2b_variation < 0.0) throw std::invalid_argument("b2b_variation must be >= 0");
  if (observation.temp_scale <= 0 || observation.err_scale <= 0 ||
      observation.cum_err_scale <= 0) {
    throw std::invalid_argument("observation scales must be > 0");
  }
}

json to_json(const ExperimentConfig& cfg) {
  json sweep = json::object();
  if (!cfg.sweep_agents.empty()) {
    json a = json::array();
    for (auto k : cfg.sweep_agents) a.push_back(to_string(k));
    sweep["agents"] = a;
  }
  if (!cfg.sweep_rewards.empty()) {
    json r = json::array();
    for (auto k : cfg.sweep_rewards) r.push_back(to_string(k));
    sweep["rewards"] = r;
  }
  const auto& t = cfg.td3;
  const auto& d = cfg.dqn;
  json j = {
      {"version", kConfigVersion},
      {"plant", plant_json(cfg.plant)},
      {"reward",
       {{"kind", to_string(cfg.reward.kind)},
        {"threshold", cfg.reward.threshold},
        {"c_pi", cfg.reward.c_pi},
        {"c_pid", cfg.reward.c_pid},
        {"eps", cfg.reward.eps},
        {"pid_outer_inverse", cfg.reward.pid_outer_inverse}}},
      {"observation",
       {{"temp_center", cfg.observation.temp_center},
        {"temp_scale", cfg.observation.temp_scale},
        {"err_scale", cfg.observation.err_scale},
        {"cum_err_scale", cfg.observation.cum_err_scale}}},
      {"agent", to_string(cfg.agent)},
      {"td3",
       {{"gamma", t.gamma},
        {"sigma_explore", t.sigma_explore},
        {"sigma_policy", t.sigma_policy},
        {"noise_clip", t.noise_clip},
        {"tau", t.tau},
        {"policy_freq", t.policy_freq},
        {"lr_actor", t.lr_actor},
        {"lr_critic", t.lr_critic},
        {"batch_size", t.batch_size},
        {"warmup", t.warmup},
        {"random_steps", t.random_steps},
        {"hidden", t.hidden},
        {"actor_output", output_name(t.actor_output)},
        {"reward_transform", to_string(t.reward_transform)},
        {"reward_scale", t.reward_scale}}},
      {"dqn",
       {{"gamma", d.gamma},
        {"lr", d.lr},
        {"batch_size", d.batch_size},
        {"warmup", d.warmup},
        {"target_period", d.target_period},
        {"eps_start", d.eps_start},
        {"eps_end", d.eps_end},
        {"action_min", d.action_min},
        {"action_max", d.action_max},
        {"action_step", d.action_step},
        {"hidden", d.hidden},
        {"reward_transform", to_string(d.reward_transform)},
        {"reward_scale", d.reward_scale}}},
      {"training",
       {{"offline_episodes", cfg.training.offline_episodes},
        {"replay_capacity", cfg.training.replay_capacity},
        {"eval_every", cfg.training.eval_every},
        {"patience", cfg.training.patience},
        {"min_delta", cfg.training.min_delta},
        {"explore_online", cfg.training.explore_online}}},
      {"experiment",
       {{"online_batches", cfg.online_batches},
        {"seeds", cfg.seeds},
        {"b2b_variation", cfg.b2b_variation},
        {"output_dir", cfg.output_dir.generic_string()}}},
  };
  if (!sweep.empty()) j["sweep"] = sweep;
  return j;
}

ExperimentConfig experiment_from_json(const json& j) {
  check_keys(j, {"version", "plant", "reward", "observation", "agent", "td3", "dqn", "training",
                 "experiment", "sweep"},
             "config");
  if (j.value("version", kConfigVersion) != kConfigVersion) {
    throw std::invalid_argument("unsupported config version");
  }
  ExperimentConfig cfg;
  if (auto it = j.find("plant"); it != j.end()) plant_from(*it, cfg.plant);
  cfg.reward.t_ref = cfg.plant.t_ref;

  if (auto it = j.find("reward"); it != j.end()) {
    const json& r = *it;
    check_keys(r, {"kind", "threshold", "c_pi", "c_pid", "eps", "pid_outer_inverse"}, "reward");
    if (r.contains("kind")) cfg.reward.kind = parse_reward_kind(r["kind"].get<std::string>());
    read_opt(r, "threshold", cfg.reward.threshold);
    read_opt(r, "c_pi", cfg.reward.c_pi);
    read_opt(r, "c_pid", cfg.reward.c_pid);
    read_opt(r, "eps", cfg.reward.eps);
    read_opt(r, "pid_outer_inverse", cfg.reward.pid_outer_inverse);
  }
  if (auto it = j.find("observation"); it != j.end()) {
    const json& o = *it;
    check_keys(o, {"temp_center", "temp_scale", "err_scale", "cum_err_scale"}, "observation");
    read_opt(o, "temp_center", cfg.observation.temp_center);
    read_opt(o, "temp_scale", cfg.observation.temp_scale);
    read_opt(o, "err_scale", cfg.observation.err_scale);
    read_opt(o, "cum_err_scale", cfg.observation.cum_err_scale);
  }
  if (j.contains("agent")) cfg.agent = parse_agent_kind(j["agent"].get<std::string>());

  if (auto it = j.find("td3"); it != j.end()) {
    const json& t = *it;
    check_keys(t, {"gamma", "sigma_explore", "sigma_policy", "noise_clip", "tau", "policy_freq",
                   "lr_actor", "lr_critic", "batch_size", "warmup", "random_steps", "hidden", "actor_output",
                   "reward_transform", "reward_scale"},
               "td3");
    auto& h = cfg.td3;
    read_opt(t, "gamma", h.gamma);
    read_opt(t, "sigma_explore", h.sigma_explore);
    read_opt(t, "sigma_policy", h.sigma_policy);
    read_opt(t, "noise_clip", h.noise_clip);
    read_opt(t, "tau", h.tau);
    read_opt(t, "policy_freq", h.policy_freq);
    read_opt(t, "lr_actor", h.lr_actor);
    read_opt(t, "lr_critic", h.lr_critic);
    read_opt(t, "batch_size", h.batch_size);
    read_opt(t, "warmup", h.warmup);
    read_opt(t, "random_steps", h.random_steps);
    read_opt(t, "hidden", h.hidden);
    if (t.contains("actor_output")) h.actor_output = parse_output(t["actor_output"]);
    if (t.contains("reward_transform")) {
      h.reward_transform = parse_reward_transform(t["reward_transform"]);
    }
    read_opt(t, "reward_scale", h.reward_scale);
  }
  cfg.td3.action_min = cfg.plant.action_min;
  cfg.td3.action_max = cfg.plant.action_max;

  if (auto it = j.find("dqn"); it != j.end()) {
    const json& d = *it;
    check_keys(d, {"gamma", "lr", "batch_size", "warmup", "target_period", "eps_start", "eps_end",
                   "action_min", "action_max", "action_step", "hidden", "reward_transform",
                   "reward_scale"},
               "dqn");
    auto& h = cfg.dqn;
    read_opt(d, "gamma", h.gamma);
    read_opt(d, "lr", h.lr);
    read_opt(d, "batch_size", h.batch_size);
    read_opt(d, "warmup", h.warmup);
    read_opt(d, "target_period", h.target_period);
    read_opt(d, "eps_start", h.eps_start);
    read_opt(d, "eps_end", h.eps_end);
    read_opt(d, "action_min", h.action_min);
    read_opt(d, "action_max", h.action_max);
    read_opt(d, "action_step", h.action_step);
    read_opt(d, "hidden", h.hidden);
    if (d.contains("reward_transform")) {
      h.reward_transform = parse_reward_transform(d["reward_transform"]);
    }
    read_opt(d, "reward_scale", h.reward_scale);
  }

  if (auto it = j.find("training"); it != j.end()) {
    const json& t = *it;
    check_keys(t, {"offline_episodes", "replay_capacity", "eval_every", "patience", "min_delta",
                   "explore_online"},
               "training");
    read_opt(t, "offline_episodes", cfg.training.offline_episodes);
    read_opt(t, "replay_capacity", cfg.training.replay_capacity);
    read_opt(t, "eval_every", cfg.training.eval_every);
    read_opt(t, "patience", cfg.training.patience);
    read_opt(t, "min_delta", cfg.training.min_delta);
    read_opt(t, "explore_online", cfg.training.explore_online);
  }
  if (auto it = j.find("experiment"); it != j.end()) {
    const json& e = *it;
    check_keys(e, {"online_batches", "seeds", "b2b_variation", "output_dir"}, "experiment");
    read_opt(e, "online_batches", cfg.online_batches);
    read_opt(e, "seeds", cfg.seeds);
    read_opt(e, "b2b_variation", cfg.b2b_variation);
    if (e.contains("output_dir")) cfg.output_dir = e["output_dir"].get<std::string>();
  }
  if (auto it = j.find("sweep"); it != j.end()) {
    const json& s = *it;
    check_keys(s, {"agents", "rewards"}, "sweep");
    for (const auto& a : s.value("agents", json::array())) {
      cfg.sweep_agents.push_back(parse_agent_kind(a.get<std::string>()));
    }
    for (const auto& r : s.value("rewards", json::array())) {
      cfg.sweep_rewards.push_back(parse_reward_kind(r.get<std::string>()));
    }
  }
  cfg.dqn.eps_decay_steps = cfg.training.offline_episodes * cfg.plant.steps_per_episode();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

void save_config(const fs::path& path, const ExperimentConfig& cfg) {
  auto os = open_out(path);
  os << std::setw(2) << to_json(cfg) << '\n';
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg) {
  const std::vector<AgentKind> agents =
      cfg.sweep_agents.empty() ? std::vector<AgentKind>{cfg.agent} : cfg.sweep_agents;
  const std::vector<RewardKind> rewards =
      cfg.sweep_rewards.empty() ? std::vector<RewardKind>{cfg.reward.kind} : cfg.sweep_rewards;
  std::vector<ExperimentConfig> out;
  for (auto a : agents) {
    for (auto r : rewards) {
      ExperimentConfig c = cfg;
      c.agent = a;
      c.reward.kind = r;
      c.sweep_agents.clear();
      c.sweep_rewards.clear();
      c.output_dir = cfg.output_dir / (to_string(a) + "_" + to_string(r));
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::unique_ptr<Agent> make_agent(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.agent) {
    case AgentKind::td3:
    case AgentKind::ddpg: {
      Td3Hyper h = cfg.td3;
      h.action_min = cfg.plant.action_min;
      h.action_max = cfg.plant.action_max;
      if (cfg.agent == AgentKind::ddpg) h = ddpg_hyper(h);
      return std::make_unique<Td3Agent>(kObservationSize, h, seed);
    }
    case AgentKind::dqn: {
      DqnHyper h = cfg.dqn;
      h.eps_decay_steps = cfg.training.offline_episodes * cfg.plant.steps_per_episode();
      return std::make_unique<DqnAgent>(kObservationSize, h, seed);
    }
  }
  throw std::logic_error("unhandled agent kind");
}

MetricsRow batch_metrics(const EpisodeTrace& trace, std::size_t batch, const PlantConfig& plant) {
  MetricsRow m;
  m.batch = batch;
  m.fault = trace.fault;
  m.wall_time_s = trace.wall_time_s;
  if (trace.rows.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.rmse = m.action_sd = m.control_effort = m.mean_reward = nan;
    if (m.fault.empty()) m.fault = "empty trace";
    return m;
  }
  const auto acts = trace.actions();
  const auto rewards = trace.rewards();
  m.rmse = rmse(trace.temperatures(), plant.t_ref);
  m.action_sd = action_sd(acts);
  m.control_effort = control_effort(acts, plant.dt_ctrl);
  double sum = 0.0;
  for (double r : rewards) sum += r;
  m.mean_reward = sum / static_cast<double>(rewards.size());
  return m;
}

bool ExperimentResult::ok() const {
  return std::all_of(seeds.begin(), seeds.end(), [](const SeedResult& s) {
    return s.ok() && std::all_of(s.rows.begin(), s.rows.end(),
                                 [](const MetricsRow& r) { return r.ok(); });
  });
}

OfflineArtifacts run_offline_stage(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::unique_ptr<Agent> agent = make_agent(cfg, seed);
  OfflineResult offline =
      train_offline(*agent, cfg.plant, cfg.reward, cfg.observation, cfg.training, seed);
  return {std::move(agent), std::move(offline)};
}

SeedResult run_online_stage(const ExperimentConfig& cfg, std::uint64_t seed,
                            const OfflineArtifacts& offline, const fs::path& seed_dir) {
  SeedResult result;
  result.seed = seed;
  result.offline_episodes_run = offline.offline.episodes_run;
  std::unique_ptr<Agent> agent = offline.agent->clone();
  const bool write = !seed_dir.empty();

  auto on_batch = [&](std::size_t b, const EpisodeTrace& trace, const Agent& a) {
    result.rows.push_back(batch_metrics(trace, b + 1, cfg.plant));
    if (write) {
      write_trace_csv(seed_dir / ("trace_batch" + std::to_string(b + 1) + ".csv"), trace,
                      cfg.plant.t_ref);
      save_checkpoint(seed_dir / "online.ckpt", a, cfg);
    }
  };
  try {
    train_online(*agent, offline.offline.e1, cfg.plant, cfg.reward, cfg.observation, cfg.training,
                 cfg.online_batches, cfg.b2b_variation, seed, on_batch);
  } catch (const std::exception& e) {
    result.fault = e.what();
  }
  if (result.fault.empty() && !result.rows.empty() && !result.rows.back().ok()) {
    result.fault = result.rows.back().fault;
  }
  if (!result.rows.empty()) result.summary = summarize_last(result.rows);
  if (!result.fault.empty() && result.summary.fault.empty()) result.summary.fault = result.fault;
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  const bool write = opts.write_outputs;
  if (write) {
    fs::create_directories(cfg.output_dir);
    save_config(cfg.output_dir / "config.json", cfg);
  }
  ExperimentResult result;
  result.seeds.resize(cfg.seeds.size());
  const auto n = static_cast<std::ptrdiff_t>(cfg.seeds.size());

#pragma omp parallel for schedule(dynamic, 1) if (opts.parallel_seeds && n > 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(i)];
    SeedResult& slot = result.seeds[static_cast<std::size_t>(i)];
    const fs::path dir = write ? seed_dir_for(cfg.output_dir, seed) : fs::path{};
    try {
      OfflineArtifacts off = run_offline_stage(cfg, seed);
      if (write) {
        save_checkpoint(dir / "offline.ckpt", *off.agent, cfg);
        save_replay(dir / "e1.replay", off.offline.e1);
        write_evals_csv(dir / "offline.csv", off.offline);
      }
      slot = run_online_stage(cfg, seed, off, dir);
    } catch (const std::exception& e) {
      slot = SeedResult{};
      slot.seed = seed;
      slot.fault = e.what();
      slot.summary.fault = e.what();
    }
  }
  result.mean_summary = mean_of(result.seeds);

  if (write) {
    write_metrics_csv(cfg.output_dir / "metrics.csv", result);
    write_summary_csv(cfg.output_dir / "summary.csv", cfg, result);
    auto os = open_out(cfg.output_dir / "timing.csv");
    os << "seed,batch,wall_time_s\n";
    for (const auto& s : result.seeds) {
      for (const auto& r : s.rows) os << s.seed << ',' << r.batch << ',' << num(r.wall_time_s) << '\n';
    }
  }
  return result;
}

void write_trace_csv(const fs::path& path, const EpisodeTrace& trace, double t_ref) {
  auto os = open_out(path);
  os << kTraceHeader << '\n';
  for (const auto& r : trace.rows) {
    const auto& s = r.state;
    os << num(s.t) << ',' << num(s.c_tg) << ',' << num(s.c_dg) << ',' << num(s.c_mg) << ','
       << num(s.c_e) << ',' << num(s.c_a) << ',' << num(s.c_gl) << ',' << num(s.T_r) << ','
       << num(s.T_j) << ',' << num(t_ref) << ',' << num(r.action) << ',' << num(r.reward) << ','
       << num(penalty(s.T_r - t_ref)) << '\n';
  }
}

void write_metrics_csv(const fs::path& path, const ExperimentResult& result) {
  auto os = open_out(path);
  os << kMetricsHeader << '\n';
  for (const auto& s : result.seeds) {
    for (const auto& r : s.rows) {
      os << s.seed << ',' << r.batch << ',' << num(r.rmse) << ',' << num(r.action_sd) << ','
         << num(r.control_effort) << ',' << num(r.mean_reward) << ',' << csv_field(r.fault)
         << '\n';
    }
  }
}

void write_summary_csv(const fs::path& path, const ExperimentConfig& cfg,
                       const ExperimentResult& result) {
  auto os = open_out(path);
  os << kSummaryHeader << '\n';
  auto line = [&](const std::string& seed, const MetricsRow& m) {
    os << seed << ',' << to_string(cfg.agent) << ',' << to_string(cfg.reward.kind) << ','
       << num(m.rmse) << ',' << num(m.action_sd) << ',' << num(m.control_effort) << ','
       << num(m.mean_reward) << ',' << csv_field(m.fault) << '\n';
  };
  for (const auto& s : result.seeds) line(std::to_string(s.seed), s.summary);
  line("mean", result.mean_summary);
}

void save_checkpoint(const fs::path& path, const Agent& agent, const ExperimentConfig& cfg) {
  // Written to a sibling file first so an interrupted write never leaves a
  // truncated checkpoint behind.
  fs::path tmp = path;
  tmp += ".tmp";
  {
    auto os = open_out(tmp);
    io::write_magic(os, kCheckpointMagic);
    io::write_string(os, to_json(cfg).dump());
    agent.save(os);
    if (!os) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  io::expect_magic(is, kCheckpointMagic, "checkpoint");
  Checkpoint ck;
  ck.config = experiment_from_json(json::parse(io::read_string(is)));
  ck.agent = load_agent(is);
  return ck;
}

EpisodeTrace evaluate_agent(const Agent& agent, const ExperimentConfig& cfg) {
  std::unique_ptr<Agent> copy = agent.clone();
  ControlEnv env(cfg.plant, cfg.reward, cfg.observation);
  Rng rng(0);
  return run_episode(*copy, env, nullptr, false, false, rng);
}

RunSummary load_run_summary(const fs::path& dir) {
  RunSummary rs;
  rs.dir = dir;
  const ExperimentConfig cfg = load_config(dir / "config.json");
  rs.agent = cfg.agent;
  rs.reward = cfg.reward.kind;
  rs.b2b_variation = cfg.b2b_variation;
  rs.plant = plant_json(cfg.plant);

  std::ifstream is(dir / "summary.csv");
  if (!is) throw std::runtime_error("missing summary.csv in " + dir.string());
  std::string line;
  std::getline(is, line);
  if (line != kSummaryHeader) throw std::runtime_error("unexpected summary.csv header in " + dir.string());
  while (std::getline(is, line)) {
    const auto f = split_csv_line(line);
    if (f.size() != 8 || f[0] != "mean") continue;
    rs.summary.rmse = std::stod(f[3]);
    rs.summary.action_sd = std::stod(f[4]);
    rs.summary.control_effort = std::stod(f[5]);
    rs.summary.mean_reward = std::stod(f[6]);
    rs.summary.fault = f[7];
    return rs;
  }
  throw std::runtime_error("summary.csv in " + dir.string() + " has no mean row");
}

ComparisonTable compare(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw std::invalid_argument("compare needs at least one run");
  for (const auto& r : runs) {
    if (r.plant != runs.front().plant) {
      throw std::invalid_argument("plant configuration of " + r.dir.string() + " differs from " +
                                  runs.front().dir.string());
    }
  }
  ComparisonTable table;
  table.runs = runs;
  const MetricsRow& base = runs.front().summary;
  for (const auto& r : runs) {
    ComparisonRow row;
    row.label = to_string(r.agent) + "/" + to_string(r.reward) + " " + r.dir.filename().string();
    row.summary = r.summary;
    row.d_rmse = r.summary.rmse - base.rmse;
    row.d_action_sd = r.summary.action_sd - base.action_sd;
    row.d_control_effort = r.summary.control_effort - base.control_effort;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_comparison(const ComparisonTable& table) {
  std::size_t width = 5;
  for (const auto& r : table.rows) width = std::max(width, r.label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "run" << std::right;
  for (const char* h : {"rmse_K", "sd_K", "effort_K2s", "d_rmse", "d_sd", "d_effort"}) {
    os << std::setw(14) << h;
  }
  os << '\n';
  os << std::fixed;
  for (const auto& r : table.rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.label << std::right
       << std::setprecision(3) << std::setw(14) << r.summary.rmse << std::setw(14)
       << r.summary.action_sd << std::setprecision(0) << std::setw(14) << r.summary.control_effort
       << std::setprecision(3) << std::setw(14) << r.d_rmse << std::setw(14) << r.d_action_sd
       << std::setprecision(0) << std::setw(14) << r.d_control_effort;
    if (!r.summary.fault.empty()) os << "  [" << r.summary.fault << "]";
    os << '\n';
  }
  return os.str();
}

void write_comparison_csv(const fs::path& path, const ComparisonTable& table) {
  auto os = open_out(path);
  os << "run,agent,reward,rmse,action_sd,control_effort,mean_reward,d_rmse,d_action_sd,"
        "d_control_effort,fault\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const auto& run = table.runs[i];
    os << csv_field(run.dir.generic_string()) << ',' << to_string(run.agent) << ','
       << to_string(run.reward) << ',' << num(r.summary.rmse) << ',' << num(r.summary.action_sd)
       << ',' << num(r.summary.control_effort) << ',' << num(r.summary.mean_reward) << ','
       << num(r.d_rmse) << ',' << num(r.d_action_sd) << ',' << num(r.d_control_effort) << ','
       << csv_field(r.summary.fault) << '\n';
  }
}

}  // namespace batchrl
