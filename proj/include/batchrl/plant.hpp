#pragma once

// Batch transesterification reactor model.
//
// Three-step reversible methanolysis network
//   TG + A <-> DG + E   (k1, k2)
//   DG + A <-> MG + E   (k3, k4)
//   MG + A <-> GL + E   (k5, k6)
// with Arrhenius rate constants, a reactor energy balance and a cooling/heating
// jacket whose inlet temperature is the control input.

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace batchrl {

/// Raised when the integrator leaves the physically meaningful region
/// (non-finite values, temperatures outside the sanity band).
class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlantState {
  double c_tg = 0.0;  // triglyceride, mol/L
  double c_dg = 0.0;  // diglyceride
  double c_mg = 0.0;  // monoglyceride
  double c_e = 0.0;   // methyl ester
  double c_a = 0.0;   // methanol
  double c_gl = 0.0;  // glycerol
  double T_r = 0.0;   // reactor temperature, K
  double T_j = 0.0;   // jacket temperature, K
  double t = 0.0;     // elapsed batch time, s

  bool operator==(const PlantState&) const = default;

  double glyceride_total() const { return c_tg + c_dg + c_mg + c_gl; }
  double methyl_total() const { return c_a + c_e; }
};

/// Index of each integrated field inside StateRates.
enum StateField : std::size_t { kTg, kDg, kMg, kE, kA, kGl, kTr, kTj, kNumStateFields };

using StateRates = std::array<double, kNumStateFields>;
using RateConstants = std::array<double, 6>;

struct KineticParams {
  RateConstants k0{};              // L/(mol s), forward/backward per step
  RateConstants ea{};              // J/mol
  std::array<double, 3> dh{};      // J/mol per reaction step
  double volume = 1.0;             // L, converts mol/(L s) to mol/s
  double ua = 1.0;                 // W/K
  double m_cp = 1.0;               // J/K
  double mj_cpj = 1.0;             // J/K
  double fj_rhoj_cpj = 1.0;        // W/K
  double r_gas = 8.314;            // J/(mol K)

  bool operator==(const KineticParams&) const = default;

  /// Throws std::invalid_argument on non-positive constants.
  void validate() const;
};

struct PlantConfig {
  KineticParams params;
  PlantState init;
  double t_end = 6000.0;
  double dt_ctrl = 20.0;
  double dt_int = 1.0;
  double t_ref = 345.0;
  double action_min = 330.0;
  double action_max = 350.0;

  bool operator==(const PlantConfig&) const = default;

  void validate() const;
  std::size_t steps_per_episode() const;
};

/// Counters collected while stepping; clamped concentrations are not faults.
struct StepDiagnostics {
  std::size_t clamp_events = 0;
};

inline constexpr double kMinTemperature = 250.0;
inline constexpr double kMaxTemperature = 500.0;

/// Default reactor used throughout the project (see configs/default.json).
KineticParams default_kinetics();
PlantState default_initial_state();
PlantConfig default_plant_config();

/// k_i = k0_i * exp(-Ea_i / (R T)). Throws std::domain_error for T <= 0.
RateConstants rate_constants(double T_r, const KineticParams& params);

/// Right-hand side of the reactor ODE. Throws SimulationFault on non-finite
/// input.
StateRates derivatives(const PlantState& state, double action_tj_in, const KineticParams& params);

/// Advances one control interval with classical RK4 on dt_int sub-steps.
/// Negative concentrations are clamped to zero after each sub-step.
PlantState step(const PlantState& state, double action_tj_in, const PlantConfig& cfg,
                StepDiagnostics* diag = nullptr);

PlantState reset(const PlantConfig& cfg);

/// Multiplies each pre-exponential factor by (1 + z), z ~ N(0, rel_sd),
/// redrawing until 1 + z > 0. Everything else is copied unchanged.
KineticParams perturb(const KineticParams& params, double rel_sd, std::uint64_t seed);

}  // namespace batchrl
