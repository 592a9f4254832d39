#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <vector>

#include "acflow/energies.hpp"
#include "acflow/geometry.hpp"

namespace acflow {

/// Scalar parameters of the generalized action and the numerics.
struct FlowConfig {
  double k = 2;              // action exponent
  double lambda_action = 1;  // lambda weight of the potential term
  double rho0 = 1;           // constant density / initial flowable density
  double g = 0;              // mass-potential gravity, 0 disables
  double tau_diff = 0;       // velocity diffusion coefficient
  double tau_noise = 0;      // stochastic acceleration coefficient
  double cfl = 0.5;          // Courant number
  double t0 = 0;             // evolution-clock start; 0 means "first dt"
  double alpha_len = 0;      // Chan-Vese length weight
  double sobolev_lambda = 10;
  double dt_max = 0.1;
  int max_steps = 1000;
  int reinit_every = 10;  // level-set backend: reinit + extension cadence
  std::uint64_t seed = 0;

  void validate() const;
};

struct FlowState {
  MarkerCurve curve;
  double t = 0;
  long step = 0;
};

struct RunRecord {
  long step;
  double t, dt, energy, length, mass, max_speed;
};

struct RunLog {
  std::vector<RunRecord> records;
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
};

/// Explicit gradient flow dC/dt = f N.
FlowState gradient_step(FlowState state, const ForceField& force, double dt);

/// Solves (Id - lambda_s d^2/ds^2) u = rhs on the closed curve
/// (cyclic tridiagonal system); building block of the Sobolev flow.
Eigen::VectorXd sobolev_smooth(const MarkerCurve& curve, const Eigen::VectorXd& rhs,
                               double lambda_s);

/// Sobolev gradient flow: dC/dt = smoothed f N.
FlowState sobolev_step(FlowState state, const ForceField& force, double lambda_s, double dt);

/// Constant-density accelerated system:
///   dbeta/dt = (lambda k^2 t^{k-2}/rho) f + beta^2 kappa / 2 - (k+1)/t beta
///   dC/dt    = beta N
/// dt is chosen internally from the CFL rule; throws on dt underflow.
FlowState accel_const_step(FlowState state, const ForceField& force, const FlowConfig& cfg);

/// Flowable-mass accelerated system for V = v T + beta N and density rho:
///   dV/dt   = (lambda k^2 t^{k-2}/rho) f N - (V.T) V_s - (k+1)/t V
///             [+ tau_diff V_ss + tau_noise W]
///   dC/dt   = (V.N) N
///   drho/dt via the conservative parameter-space mass mu = rho ||C_p||
/// Upwind differencing against V.T; throws if rho loses positivity.
FlowState accel_flowable_step(FlowState state, const ForceField& force, const FlowConfig& cfg,
                              std::mt19937_64* rng = nullptr);

enum class MassModel { Constant, Flowable };

/// Circle-symmetric reduction of the accelerated systems, integrated with
/// an adaptive embedded Runge-Kutta pair; ground-truth oracle for the PDE
/// steppers. Stops with shock=true if the radius collapses below r_min.
struct CircleTrajectory {
  std::vector<double> t, radius, beta, rho;
  bool shock = false;

  double radius_at(double time) const;  // linear interpolation in t
};
CircleTrajectory circle_ode_oracle(double R0, double f_const, const FlowConfig& cfg,
                                   MassModel model = MassModel::Constant, double t_end = 50.0,
                                   double rtol = 1e-9, double r_min = 1e-3);

/// Nesterov's accelerated gradient recursion; returns the iterates x_0..x_n.
std::vector<Eigen::VectorXd> nesterov_reference(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
    const Eigen::VectorXd& x0, double beta_lip, int n);

enum class FlowMethod { Gradient, Sobolev, AccelConst, AccelFlowable };
enum class EnergyModel { ChanVese, Geodesic };

struct RunResult {
  FlowState state;
  RunLog log;
};

/// Drives the selected stepper against an image: recomputes forces each
/// step, logs (step, t, dt, energy, length, mass, max|beta|), stops on
/// max_steps or stagnation (sup-norm displacement < 1e-6 over 50 steps).
RunResult run_flow(const MarkerCurve& initial, const ImageGrid& image, FlowMethod method,
                   const FlowConfig& cfg, EnergyModel energy = EnergyModel::ChanVese);

// Parameter-space mass variables of the flowable model; definitions
// mu = rho ||C_p|| and v = xi ||C_p||, with matching fluxes mu*xi = rho*v.
Eigen::VectorXd rho_to_mu(const MarkerCurve& curve, const Eigen::VectorXd& rho);
Eigen::VectorXd mu_to_rho(const MarkerCurve& curve, const Eigen::VectorXd& mu);
Eigen::VectorXd v_to_xi(const MarkerCurve& curve, const Eigen::VectorXd& v);
Eigen::VectorXd xi_to_v(const MarkerCurve& curve, const Eigen::VectorXd& xi);

/// Kinetic energy sum(1/2 rho ||V||^2 ds) of a flowable state.
double kinetic_energy(const MarkerCurve& curve);

}  // namespace acflow
