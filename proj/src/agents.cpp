#include "batchrl/agents.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "batchrl/binary_io.hpp"

namespace batchrl {

namespace {

constexpr char kAgentMagic[9] = "BRLAGNT1";
constexpr std::uint32_t kAgentFormatVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

MlpSpec make_spec(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                  OutputActivation act) {
  MlpSpec spec;
  spec.layer_sizes.push_back(in);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(out);
  spec.output = act;
  spec.out_lo = -1.0;
  spec.out_hi = 1.0;
  return spec;
}

void check_finite(double loss, const char* what, std::size_t update) {
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << what << ": non-finite loss " << loss << " at update " << update;
    throw TrainingDivergence(os.str());
  }
}

template <class T>
std::vector<std::uint64_t> widen(const std::vector<T>& v) {
  return {v.begin(), v.end()};
}

std::vector<std::size_t> narrow(const std::vector<std::uint64_t>& v) {
  return {v.begin(), v.end()};
}

RewardTransform read_transform(std::istream& is) {
  const auto v = io::read<std::uint32_t>(is);
  if (v > static_cast<std::uint32_t>(RewardTransform::symlog)) {
    throw io::FormatError("unknown reward transform " + std::to_string(v));
  }
  return static_cast<RewardTransform>(v);
}

void write_td3_hyper(std::ostream& os, const Td3Hyper& h) {
  io::write(os, h.gamma);
  io::write(os, h.sigma_explore);
  io::write(os, h.sigma_policy);
  io::write(os, h.noise_clip);
  io::write(os, h.tau);
  io::write<std::uint64_t>(os, h.policy_freq);
  io::write(os, h.lr_actor);
  io::write(os, h.lr_critic);
  io::write<std::uint64_t>(os, h.batch_size);
  io::write<std::uint64_t>(os, h.warmup);
  io::write<std::uint64_t>(os, h.random_steps);
  io::write<std::uint64_t>(os, h.num_critics);
  io::write(os, h.action_min);
  io::write(os, h.action_max);
  io::write_vector(os, widen(h.hidden));
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(h.actor_output));
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(h.reward_transform));
  io::write(os, h.reward_scale);
}

Td3Hyper read_td3_hyper(std::istream& is) {
  Td3Hyper h;
  h.gamma = io::read<double>(is);
  h.sigma_explore = io::read<double>(is);
  h.sigma_policy = io::read<double>(is);
  h.noise_clip = io::read<double>(is);
  h.tau = io::read<double>(is);
  h.policy_freq = io::read<std::uint64_t>(is);
  h.lr_actor = io::read<double>(is);
  h.lr_critic = io::read<double>(is);
  h.batch_size = io::read<std::uint64_t>(is);
  h.warmup = io::read<std::uint64_t>(is);
  h.random_steps = io::read<std::uint64_t>(is);
  h.num_critics = io::read<std::uint64_t>(is);
  h.action_min = io::read<double>(is);
  h.action_max = io::read<double>(is);
  h.hidden = narrow(io::read_vector<std::uint64_t>(is, 64));
  h.actor_output = static_cast<OutputActivation>(io::read<std::uint32_t>(is));
  h.reward_transform = read_transform(is);
  h.reward_scale = io::read<double>(is);
  h.validate();
  return h;
}

void write_dqn_hyper(std::ostream& os, const DqnHyper& h) {
  io::write(os, h.gamma);
  io::write(os, h.lr);
  io::write<std::uint64_t>(os, h.batch_size);
  io::write<std::uint64_t>(os, h.warmup);
  io::write<std::uint64_t>(os, h.target_period);
  io::write(os, h.eps_start);
  io::write(os, h.eps_end);
  io::write<std::uint64_t>(os, h.eps_decay_steps);
  io::write(os, h.action_min);
  io::write(os, h.action_max);
  io::write(os, h.action_step);
  io::write_vector(os, widen(h.hidden));
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(h.reward_transform));
  io::write(os, h.reward_scale);
}

DqnHyper read_dqn_hyper(std::istream& is) {
  DqnHyper h;
  h.gamma = io::read<double>(is);
  h.lr = io::read<double>(is);
  h.batch_size = io::read<std::uint64_t>(is);
  h.warmup = io::read<std::uint64_t>(is);
  h.target_period = io::read<std::uint64_t>(is);
  h.eps_start = io::read<double>(is);
  h.eps_end = io::read<double>(is);
  h.eps_decay_steps = io::read<std::uint64_t>(is);
  h.action_min = io::read<double>(is);
  h.action_max = io::read<double>(is);
  h.action_step = io::read<double>(is);
  h.hidden = narrow(io::read_vector<std::uint64_t>(is, 64));
  h.reward_transform = read_transform(is);
  h.reward_scale = io::read<double>(is);
  h.validate();
  return h;
}

void write_header(std::ostream& os, AgentKind kind) {
  io::write_magic(os, kAgentMagic);
  io::write(os, kAgentFormatVersion);
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(kind));
}

}  // namespace

std::string to_string(RewardTransform t) {
  return t == RewardTransform::identity ? "identity" : "symlog";
}

RewardTransform parse_reward_transform(const std::string& name) {
  if (name == "identity") return RewardTransform::identity;
  if (name == "symlog") return RewardTransform::symlog;
  throw std::invalid_argument("unknown reward transform '" + name + "'");
}

double shape_reward(double r, RewardTransform f, double scale) {
  if (f == RewardTransform::symlog) r = std::copysign(std::log1p(std::abs(r)), r);
  return scale * r;
}

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::td3: return "td3";
    case AgentKind::ddpg: return "ddpg";
    case AgentKind::dqn: return "dqn";
  }
  return "unknown";
}

AgentKind parse_agent_kind(const std::string& name) {
  if (name == "td3" || name == "TD3") return AgentKind::td3;
  if (name == "ddpg" || name == "DDPG") return AgentKind::ddpg;
  if (name == "dqn" || name == "DQN") return AgentKind::dqn;
  throw std::invalid_argument("unknown agent kind: " + name);
}

std::unique_ptr<Agent> load_agent(std::istream& is) {
  io::expect_magic(is, kAgentMagic, "agent checkpoint");
  const auto version = io::read<std::uint32_t>(is);
  if (version != kAgentFormatVersion) {
    throw io::FormatError("unsupported agent format version " + std::to_string(version));
  }
  const auto kind = io::read<std::uint32_t>(is);
  switch (static_cast<AgentKind>(kind)) {
    case AgentKind::td3:
    case AgentKind::ddpg: return std::make_unique<Td3Agent>(Td3Agent::load_body(is));
    case AgentKind::dqn: return std::make_unique<DqnAgent>(DqnAgent::load_body(is));
  }
  throw io::FormatError("unknown agent kind in checkpoint");
}

// ---------------------------------------------------------------------------
// TD3 / DDPG

void Td3Hyper::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("td3: gamma must be in [0, 1)");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("td3: tau must be in [0, 1]");
  if (policy_freq < 1) throw std::invalid_argument("td3: policy_freq must be >= 1");
  if (!(noise_clip > 0.0)) throw std::invalid_argument("td3: noise_clip must be positive");
  if (sigma_explore < 0.0 || sigma_policy < 0.0) throw std::invalid_argument("td3: negative noise");
  if (num_critics < 1) throw std::invalid_argument("td3: need at least one critic");
  if (batch_size < 1) throw std::invalid_argument("td3: batch_size must be positive");
  if (!(action_min < action_max)) throw std::invalid_argument("td3: empty action range");
  if (!(lr_actor > 0.0) || !(lr_critic > 0.0)) throw std::invalid_argument("td3: learning rates");
  if (!(reward_scale > 0.0)) throw std::invalid_argument("td3: reward_scale must be positive");
}

Td3Hyper ddpg_hyper(Td3Hyper base) {
  base.num_critics = 1;
  base.policy_freq = 1;
  base.sigma_policy = 0.0;
  return base;
}

Td3Agent::Td3Agent(std::size_t obs_dim, Td3Hyper hyper, std::uint64_t seed)
    : obs_dim_(obs_dim), hyper_(std::move(hyper)) {
  hyper_.validate();
  if (obs_dim_ == 0) throw std::invalid_argument("td3: observation width must be positive");
  actor_ = Mlp<Real>::init(make_spec(obs_dim_, hyper_.hidden, 1, hyper_.actor_output),
                           derive_seed(seed, 1));
  actor_target_ = actor_;
  const MlpSpec critic_spec =
      make_spec(obs_dim_ + 1, hyper_.hidden, 1, OutputActivation::linear);
  for (std::size_t i = 0; i < hyper_.num_critics; ++i) {
    critics_.push_back(Mlp<Real>::init(critic_spec, derive_seed(seed, 2 + i)));
    critic_opts_.emplace_back(critics_.back().params().size(), hyper_.lr_critic);
  }
  critic_targets_ = critics_;
  actor_opt_ = AdamState<Real>(actor_.params().size(), hyper_.lr_actor);
}

AgentKind Td3Agent::kind() const {
  return hyper_.num_critics == 1 && hyper_.policy_freq == 1 && hyper_.sigma_policy == 0.0
             ? AgentKind::ddpg
             : AgentKind::td3;
}

double Td3Agent::normalize_action(double kelvin) const {
  const double mid = 0.5 * (hyper_.action_max + hyper_.action_min);
  const double half = 0.5 * (hyper_.action_max - hyper_.action_min);
  return (kelvin - mid) / half;
}

double Td3Agent::denormalize_action(double u) const {
  const double mid = 0.5 * (hyper_.action_max + hyper_.action_min);
  const double half = 0.5 * (hyper_.action_max - hyper_.action_min);
  return mid + half * u;
}

Decision Td3Agent::act(std::span<const Real> obs, bool explore, Rng& rng) {
  double u;
  if (explore && explore_steps_ < hyper_.random_steps) {
    u = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  } else {
    u = actor_.predict(obs).front();
    if (explore && hyper_.sigma_explore > 0.0) {
      u += std::normal_distribution<double>(0.0, hyper_.sigma_explore)(rng);
    }
  }
  if (explore) ++explore_steps_;
  u = std::clamp(u, -1.0, 1.0);
  // Kelvin computed from the stored value so the replay entry is exactly what ran.
  const Real stored = static_cast<Real>(u);
  return {std::clamp(denormalize_action(stored), hyper_.action_min, hyper_.action_max), stored};
}

double Td3Agent::select_action(std::span<const Real> obs, bool explore, Rng& rng) {
  return act(obs, explore, rng).action;
}

Td3Agent::Matrix Td3Agent::target_actions(const Matrix& s_next, std::span<const Real> noise) const {
  if (noise.size() != static_cast<std::size_t>(s_next.rows())) {
    throw std::invalid_argument("td3: one noise sample per row required");
  }
  Matrix u = actor_target_.evaluate(s_next);
  const Real c = static_cast<Real>(hyper_.noise_clip);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const Real eps = std::clamp(noise[static_cast<std::size_t>(i)], -c, c);
    u(i, 0) = std::clamp(u(i, 0) + eps, Real(-1), Real(1));
  }
  return u;
}

Td3Agent::Matrix Td3Agent::target_actions(const Matrix& s_next, Rng& rng) const {
  std::vector<Real> noise(static_cast<std::size_t>(s_next.rows()), Real(0));
  if (hyper_.sigma_policy > 0.0) {
    std::normal_distribution<double> n(0.0, hyper_.sigma_policy);
    for (Real& x : noise) x = static_cast<Real>(n(rng));
  }
  return target_actions(s_next, noise);
}

Td3Agent::Matrix Td3Agent::critic_input(const Matrix& s, const Matrix& a) const {
  Matrix x(s.rows(), s.cols() + a.cols());
  x << s, a;
  return x;
}

std::vector<std::vector<Real>> Td3Agent::target_q(const Batch& batch,
                                                  std::span<const Real> noise) const {
  const Matrix x = critic_input(batch.s_next, target_actions(batch.s_next, noise));
  std::vector<std::vector<Real>> q;
  for (const auto& net : critic_targets_) {
    const Matrix out = net.evaluate(x);
    q.emplace_back(out.data(), out.data() + out.rows());
  }
  return q;
}

std::vector<Real> Td3Agent::target_values(const Batch& batch, std::span<const Real> noise) const {
  const auto q = target_q(batch, noise);
  std::vector<Real> tv(batch.size());
  for (std::size_t j = 0; j < tv.size(); ++j) {
    Real qmin = q[0][j];
    for (std::size_t i = 1; i < q.size(); ++i) qmin = std::min(qmin, q[i][j]);
    tv[j] = static_cast<Real>(shape_reward(batch.r[j], hyper_.reward_transform,
                                           hyper_.reward_scale)) +
            static_cast<Real>(hyper_.gamma) * (Real(1) - batch.done[j]) * qmin;
  }
  return tv;
}

std::vector<Real> Td3Agent::target_values(const Batch& batch, Rng& rng) const {
  std::vector<Real> noise(batch.size(), Real(0));
  if (hyper_.sigma_policy > 0.0) {
    std::normal_distribution<double> n(0.0, hyper_.sigma_policy);
    for (Real& x : noise) x = static_cast<Real>(n(rng));
  }
  return target_values(batch, noise);
}

double Td3Agent::critic_update(const Batch& batch, std::span<const Real> targets) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (targets.size() != batch.size() || n == 0) throw std::invalid_argument("td3: bad batch");
  const Matrix x = critic_input(batch.s, batch.a);
  const Real inv_n = Real(1) / static_cast<Real>(n);
  double total = 0.0;
  for (std::size_t c = 0; c < critics_.size(); ++c) {
    Mlp<Real>& net = critics_[c];
    const Matrix& q = net.forward(x);
    Matrix upstream(n, 1);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Real diff = q(j, 0) - targets[static_cast<std::size_t>(j)];
      loss += static_cast<double>(diff) * diff;
      upstream(j, 0) = Real(2) * diff * inv_n;
    }
    loss /= static_cast<double>(n);
    check_finite(loss, "critic", updates_);
    net.zero_grad();
    net.backward(upstream);
    adam_step<Real>(net.params(), net.grads(), critic_opts_[c]);
    total += loss;
  }
  return total;
}

double Td3Agent::critic_update(const Batch& batch, Rng& rng) {
  return critic_update(batch, target_values(batch, rng));
}

void Td3Agent::actor_update(const Batch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw std::invalid_argument("td3: empty batch");
  const Matrix u = actor_.forward(batch.s);
  Mlp<Real>& q1 = critics_.front();
  q1.forward(critic_input(batch.s, u));
  // Minimize -mean(Q1): dL/dQ = -1/n per sample.
  const Matrix upstream = Matrix::Constant(n, 1, Real(-1) / static_cast<Real>(n));
  const Matrix dx = q1.backward(upstream, /*param_grads=*/false);
  const Matrix du = dx.rightCols(1);
  actor_.zero_grad();
  actor_.backward(du);
  adam_step<Real>(actor_.params(), actor_.grads(), actor_opt_);
}

void Td3Agent::soft_update() {
  batchrl::soft_update(actor_target_, actor_, hyper_.tau);
  for (std::size_t i = 0; i < critics_.size(); ++i) {
    batchrl::soft_update(critic_targets_[i], critics_[i], hyper_.tau);
  }
}

double Td3Agent::learn(const Batch& batch, Rng& rng) {
  const double loss = critic_update(batch, rng);
  ++updates_;
  if (updates_ % hyper_.policy_freq == 0) {
    actor_update(batch);
    soft_update();
    ++actor_updates_;
  }
  return loss;
}

void Td3Agent::save(std::ostream& os) const {
  write_header(os, kind());
  io::write<std::uint64_t>(os, obs_dim_);
  write_td3_hyper(os, hyper_);
  io::write<std::uint64_t>(os, updates_);
  io::write<std::uint64_t>(os, actor_updates_);
  io::write<std::uint64_t>(os, explore_steps_);
  actor_.save(os);
  actor_target_.save(os);
  actor_opt_.save(os);
  for (std::size_t i = 0; i < critics_.size(); ++i) {
    critics_[i].save(os);
    critic_targets_[i].save(os);
    critic_opts_[i].save(os);
  }
}

Td3Agent Td3Agent::load_body(std::istream& is) {
  Td3Agent a;
  a.obs_dim_ = io::read<std::uint64_t>(is);
  a.hyper_ = read_td3_hyper(is);
  a.updates_ = io::read<std::uint64_t>(is);
  a.actor_updates_ = io::read<std::uint64_t>(is);
  a.explore_steps_ = io::read<std::uint64_t>(is);
  a.actor_ = Mlp<Real>::load(is);
  a.actor_target_ = Mlp<Real>::load(is);
  a.actor_opt_ = AdamState<Real>::load(is);
  for (std::size_t i = 0; i < a.hyper_.num_critics; ++i) {
    a.critics_.push_back(Mlp<Real>::load(is));
    a.critic_targets_.push_back(Mlp<Real>::load(is));
    a.critic_opts_.push_back(AdamState<Real>::load(is));
  }
  if (a.actor_.input_size() != a.obs_dim_ || a.critics_.front().input_size() != a.obs_dim_ + 1) {
    throw io::FormatError("td3 checkpoint: network shapes disagree with observation width");
  }
  return a;
}

// ---------------------------------------------------------------------------
// DQN

void DqnHyper::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("dqn: gamma must be in [0, 1)");
  if (!(lr > 0.0)) throw std::invalid_argument("dqn: lr must be positive");
  if (batch_size < 1 || target_period < 1) throw std::invalid_argument("dqn: sizes must be >= 1");
  if (!(action_step > 0.0) || !(action_min < action_max)) {
    throw std::invalid_argument("dqn: bad action grid");
  }
  if (eps_start < 0.0 || eps_start > 1.0 || eps_end < 0.0 || eps_end > 1.0) {
    throw std::invalid_argument("dqn: epsilon outside [0, 1]");
  }
  if (!(reward_scale > 0.0)) throw std::invalid_argument("dqn: reward_scale must be positive");
}

std::vector<double> make_action_table(double lo, double hi, double step) {
  if (!(step > 0.0) || !(lo < hi)) throw std::invalid_argument("action table: bad grid");
  const auto intervals = std::llround((hi - lo) / step);
  if (std::abs(lo + static_cast<double>(intervals) * step - hi) > 1e-9 * std::abs(hi)) {
    throw std::invalid_argument("action table: step does not divide the range");
  }
  std::vector<double> table(static_cast<std::size_t>(intervals) + 1);
  for (std::size_t i = 0; i < table.size(); ++i) table[i] = lo + static_cast<double>(i) * step;
  return table;
}

DqnAgent::DqnAgent(std::size_t obs_dim, DqnHyper hyper, std::uint64_t seed)
    : obs_dim_(obs_dim), hyper_(std::move(hyper)) {
  hyper_.validate();
  table_ = make_action_table(hyper_.action_min, hyper_.action_max, hyper_.action_step);
  policy_ = Mlp<Real>::init(make_spec(obs_dim_, hyper_.hidden, table_.size(),
                                      OutputActivation::linear),
                            derive_seed(seed, 101));
  target_ = policy_;
  opt_ = AdamState<Real>(policy_.params().size(), hyper_.lr);
}

double DqnAgent::epsilon() const {
  if (hyper_.eps_decay_steps == 0) return hyper_.eps_end;
  const double frac = std::min(
      1.0, static_cast<double>(explore_steps_) / static_cast<double>(hyper_.eps_decay_steps));
  return hyper_.eps_start + (hyper_.eps_end - hyper_.eps_start) * frac;
}

std::size_t DqnAgent::greedy_index(std::span<const Real> obs) const {
  const auto q = policy_.predict(obs);
  return static_cast<std::size_t>(std::distance(q.begin(), std::max_element(q.begin(), q.end())));
}

Decision DqnAgent::act(std::span<const Real> obs, bool explore, Rng& rng) {
  std::size_t idx;
  if (explore) {
    const double eps = epsilon();
    ++explore_steps_;
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < eps) {
      idx = std::uniform_int_distribution<std::size_t>(0, table_.size() - 1)(rng);
    } else {
      idx = greedy_index(obs);
    }
  } else {
    idx = greedy_index(obs);
  }
  return {table_[idx], static_cast<Real>(idx)};
}

double DqnAgent::dqn_update(const Batch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw std::invalid_argument("dqn: empty batch");
  const Matrix q_next = target_.evaluate(batch.s_next);
  const Matrix& q = policy_.forward(batch.s);
  Matrix upstream = Matrix::Zero(n, q.cols());
  const Real inv_n = Real(1) / static_cast<Real>(n);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const long a = std::lround(batch.a(j, 0));
    if (a < 0 || a >= q.cols()) throw std::invalid_argument("dqn: action index out of range");
    const auto js = static_cast<std::size_t>(j);
    const Real target = static_cast<Real>(shape_reward(batch.r[js], hyper_.reward_transform,
                                                       hyper_.reward_scale)) +
                        static_cast<Real>(hyper_.gamma) * (Real(1) - batch.done[js]) *
                            q_next.row(j).maxCoeff();
    const Real diff = q(j, a) - target;
    loss += static_cast<double>(diff) * diff;
    upstream(j, a) = Real(2) * diff * inv_n;
  }
  loss /= static_cast<double>(n);
  check_finite(loss, "dqn", updates_);
  policy_.zero_grad();
  policy_.backward(upstream);
  adam_step<Real>(policy_.params(), policy_.grads(), opt_);
  ++updates_;
  if (updates_ % hyper_.target_period == 0) target_.copy_params_from(policy_);
  return loss;
}

double DqnAgent::learn(const Batch& batch, Rng&) { return dqn_update(batch); }

void DqnAgent::save(std::ostream& os) const {
  write_header(os, AgentKind::dqn);
  io::write<std::uint64_t>(os, obs_dim_);
  write_dqn_hyper(os, hyper_);
  io::write<std::uint64_t>(os, updates_);
  io::write<std::uint64_t>(os, explore_steps_);
  policy_.save(os);
  target_.save(os);
  opt_.save(os);
}

DqnAgent DqnAgent::load_body(std::istream& is) {
  DqnAgent a;
  a.obs_dim_ = io::read<std::uint64_t>(is);
  a.hyper_ = read_dqn_hyper(is);
  a.table_ = make_action_table(a.hyper_.action_min, a.hyper_.action_max, a.hyper_.action_step);
  a.updates_ = io::read<std::uint64_t>(is);
  a.explore_steps_ = io::read<std::uint64_t>(is);
  a.policy_ = Mlp<Real>::load(is);
  a.target_ = Mlp<Real>::load(is);
  a.opt_ = AdamState<Real>::load(is);
  if (a.policy_.output_size() != a.table_.size() || a.policy_.input_size() != a.obs_dim_) {
    throw io::FormatError("dqn checkpoint: network shape disagrees with action table");
  }
  return a;
}

}  // namespace batchrl
