#include "batchrl/plant.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace batchrl {

namespace {

using StateVector = std::array<double, kNumStateFields>;

StateVector to_vector(const PlantState& s) {
  return {s.c_tg, s.c_dg, s.c_mg, s.c_e, s.c_a, s.c_gl, s.T_r, s.T_j};
}

PlantState from_vector(const StateVector& v, double t) {
  return {v[kTg], v[kDg], v[kMg], v[kE], v[kA], v[kGl], v[kTr], v[kTj], t};
}

StateVector axpy(const StateVector& y, double h, const StateRates& k) {
  StateVector out;
  for (std::size_t i = 0; i < kNumStateFields; ++i) out[i] = y[i] + h * k[i];
  return out;
}

bool all_finite(const StateVector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string describe(const PlantState& s) {
  std::ostringstream os;
  os << "t=" << s.t << " T_r=" << s.T_r << " T_j=" << s.T_j << " c_tg=" << s.c_tg
     << " c_a=" << s.c_a;
  return os.str();
}

}  // namespace

void KineticParams::validate() const {
  for (std::size_t i = 0; i < k0.size(); ++i) {
    if (!(k0[i] > 0.0) || !(ea[i] > 0.0)) {
      throw std::invalid_argument("kinetics: k0 and ea must be positive (index " +
                                  std::to_string(i) + ")");
    }
  }
  if (!(volume > 0.0) || !(ua > 0.0) || !(m_cp > 0.0) || !(mj_cpj > 0.0) ||
      !(fj_rhoj_cpj > 0.0) || !(r_gas > 0.0)) {
    throw std::invalid_argument("kinetics: thermal constants must be positive");
  }
}

void PlantConfig::validate() const {
  params.validate();
  if (!(dt_int > 0.0) || !(dt_ctrl > 0.0) || !(t_end > 0.0)) {
    throw std::invalid_argument("plant: time steps must be positive");
  }
  if (dt_int > dt_ctrl) throw std::invalid_argument("plant: dt_int must not exceed dt_ctrl");
  const double n = t_end / dt_ctrl;
  if (std::abs(n - std::round(n)) > 1e-9 * n) {
    throw std::invalid_argument("plant: dt_ctrl must divide t_end evenly");
  }
  if (!(action_min < action_max)) throw std::invalid_argument("plant: action_min >= action_max");
  if (init.T_r < kMinTemperature || init.T_r > kMaxTemperature || init.T_j < kMinTemperature ||
      init.T_j > kMaxTemperature) {
    throw std::invalid_argument("plant: initial temperatures outside sanity band");
  }
}

std::size_t PlantConfig::steps_per_episode() const {
  return static_cast<std::size_t>(std::llround(t_end / dt_ctrl));
}

KineticParams default_kinetics() {
  KineticParams p;
  // Activation energies of the methanolysis steps; pre-exponentials are
  // calibrated so that roughly 85-90% of the triglyceride converts within a
  // 6000 s batch at 345 K.
  p.k0 = {3.2391e4, 486.144, 4.85512e9, 8.29917e6, 4.49742, 17.701};
  p.ea = {55.0e3, 41.6e3, 83.1e3, 61.3e3, 26.9e3, 40.1e3};
  p.dh = {-4.5e4, -4.5e4, -4.5e4};
  p.volume = 10.0;
  p.ua = 100.0;
  p.m_cp = 2.0e4;
  p.mj_cpj = 5.0e3;
  p.fj_rhoj_cpj = 200.0;
  p.r_gas = 8.314;
  return p;
}

PlantState default_initial_state() {
  PlantState s;
  s.c_tg = 0.9;
  s.c_a = 5.4;
  s.T_r = 340.0;
  s.T_j = 340.0;
  return s;
}

PlantConfig default_plant_config() {
  PlantConfig cfg;
  cfg.params = default_kinetics();
  cfg.init = default_initial_state();
  return cfg;
}

RateConstants rate_constants(double T_r, const KineticParams& params) {
  if (!(T_r > 0.0)) throw std::domain_error("rate_constants: temperature must be positive");
  RateConstants k;
  for (std::size_t i = 0; i < k.size(); ++i) {
    k[i] = params.k0[i] * std::exp(-params.ea[i] / (params.r_gas * T_r));
  }
  return k;
}

StateRates derivatives(const PlantState& state, double action_tj_in, const KineticParams& params) {
  const StateVector y = to_vector(state);
  if (!all_finite(y) || !std::isfinite(action_tj_in)) {
    throw SimulationFault("derivatives: non-finite input (" + describe(state) + ")");
  }
  const RateConstants k = rate_constants(state.T_r, params);

  const double r1 = k[0] * state.c_tg * state.c_a - k[1] * state.c_dg * state.c_e;
  const double r2 = k[2] * state.c_dg * state.c_a - k[3] * state.c_mg * state.c_e;
  const double r3 = k[4] * state.c_mg * state.c_a - k[5] * state.c_gl * state.c_e;

  StateRates d{};
  d[kTg] = -r1;
  d[kDg] = r1 - r2;
  d[kMg] = r2 - r3;
  d[kGl] = r3;
  d[kE] = r1 + r2 + r3;
  d[kA] = -(r1 + r2 + r3);

  const double heat = (-params.dh[0] * r1 - params.dh[1] * r2 - params.dh[2] * r3) * params.volume;
  d[kTr] = (heat + params.ua * (state.T_j - state.T_r)) / params.m_cp;
  d[kTj] = (params.fj_rhoj_cpj * (action_tj_in - state.T_j) + params.ua * (state.T_r - state.T_j)) /
           params.mj_cpj;
  return d;
}

PlantState step(const PlantState& state, double action_tj_in, const PlantConfig& cfg,
                StepDiagnostics* diag) {
  if (state.t + cfg.dt_ctrl > cfg.t_end + 1e-9 * cfg.t_end) {
    throw std::invalid_argument("step: batch already finished (" + describe(state) + ")");
  }
  const auto substeps = static_cast<std::size_t>(std::ceil(cfg.dt_ctrl / cfg.dt_int - 1e-9));
  const double h = cfg.dt_ctrl / static_cast<double>(substeps);

  StateVector y = to_vector(state);
  const auto rhs = [&](const StateVector& v) {
    return derivatives(from_vector(v, state.t), action_tj_in, cfg.params);
  };

  for (std::size_t n = 0; n < substeps; ++n) {
    const StateRates k1 = rhs(y);
    const StateRates k2 = rhs(axpy(y, 0.5 * h, k1));
    const StateRates k3 = rhs(axpy(y, 0.5 * h, k2));
    const StateRates k4 = rhs(axpy(y, h, k3));
    for (std::size_t i = 0; i < kNumStateFields; ++i) {
      y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if (!all_finite(y)) {
      throw SimulationFault("step: integrator produced NaN at substep " + std::to_string(n) +
                            " (" + describe(state) + ", action=" + std::to_string(action_tj_in) +
                            ")");
    }
    for (std::size_t i = kTg; i <= kGl; ++i) {
      if (y[i] < 0.0) {
        y[i] = 0.0;
        if (diag) ++diag->clamp_events;
      }
    }
  }

  PlantState next = from_vector(y, state.t + cfg.dt_ctrl);
  if (next.T_r < kMinTemperature || next.T_r > kMaxTemperature || next.T_j < kMinTemperature ||
      next.T_j > kMaxTemperature) {
    throw SimulationFault("step: temperature left the sanity band (" + describe(next) + ")");
  }
  return next;
}

PlantState reset(const PlantConfig& cfg) {
  PlantState s = cfg.init;
  s.t = 0.0;
  return s;
}

KineticParams perturb(const KineticParams& params, double rel_sd, std::uint64_t seed) {
  if (rel_sd < 0.0 || rel_sd >= 1.0) throw std::invalid_argument("perturb: rel_sd outside [0, 1)");
  KineticParams out = params;
  if (rel_sd == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, rel_sd);
  for (double& k : out.k0) {
    double factor = 0.0;
    do {
      factor = 1.0 + z(rng);
    } while (!(factor > 0.0));
    k *= factor;
  }
  return out;
}

}  // namespace batchrl
