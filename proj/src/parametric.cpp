#include "acflow/parametric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace acflow {

namespace {

constexpr double kEps = 1e-12;

int wrap(int i, int n) { return ((i % n) + n) % n; }

// Curvature clamp used by the flow terms, |kappa| <= 2 / mean spacing.
double clamp_kappa(double kappa, double h_mean) {
  const double cap = 2.0 / h_mean;
  return std::clamp(kappa, -cap, cap);
}

// Resample back to uniform spacing once markers cluster or spread by 2x.
void maybe_resample(MarkerCurve& curve) {
  const int n = curve.size();
  double lmin = std::numeric_limits<double>::infinity(), lmax = 0, lsum = 0;
  for (int i = 0; i < n; ++i) {
    const double l = (curve.points.col(wrap(i + 1, n)) - curve.points.col(i)).norm();
    lmin = std::min(lmin, l);
    lmax = std::max(lmax, l);
    lsum += l;
  }
  const double mean = lsum / n;
  if (lmax > 2.0 * mean || lmin < 0.5 * mean) curve = resample_arclength(curve, n);
}

}  // namespace

void FlowConfig::validate() const {
  if (!(k >= 1)) throw std::invalid_argument("FlowConfig: k must be >= 1");
  if (!(lambda_action > 0)) throw std::invalid_argument("FlowConfig: lambda_action must be > 0");
  if (!(rho0 > 0)) throw std::invalid_argument("FlowConfig: rho0 must be > 0");
  if (!(cfl > 0 && cfl <= 1)) throw std::invalid_argument("FlowConfig: cfl must be in (0, 1]");
  if (t0 < 0) throw std::invalid_argument("FlowConfig: t0 must be >= 0");
  if (max_steps < 0) throw std::invalid_argument("FlowConfig: max_steps must be >= 0");
}

void RunLog::write_csv(std::ostream& out) const {
  out.precision(17);
  out << "step,t,dt,energy,length,mass,max_speed\n";
  for (const auto& r : records)
    out << r.step << ',' << r.t << ',' << r.dt << ',' << r.energy << ',' << r.length << ','
        << r.mass << ',' << r.max_speed << '\n';
}

void RunLog::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("RunLog: cannot open " + path);
  write_csv(out);
}

FlowState gradient_step(FlowState state, const ForceField& force, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("gradient_step: dt must be > 0");
  if (!force.values.allFinite()) throw std::invalid_argument("gradient_step: non-finite force");
  const CurveFrame frame = compute_frame(state.curve);
  const int n = state.curve.size();
  for (int i = 0; i < n; ++i)
    state.curve.points.col(i) += dt * force.values[i] * frame.normal.col(i);
  maybe_resample(state.curve);
  state.t += dt;
  ++state.step;
  return state;
}

Eigen::VectorXd sobolev_smooth(const MarkerCurve& curve, const Eigen::VectorXd& rhs,
                               double lambda_s) {
  if (!(lambda_s > 0)) throw std::invalid_argument("sobolev_smooth: lambda_s must be > 0");
  const int n = curve.size();

  // (Id - lambda_s d^2/ds^2) on the closed curve; cyclic tridiagonal system
  // solved by Sherman-Morrison on top of the Thomas algorithm.
  Eigen::VectorXd ds = marker_spacing(curve);
  Eigen::VectorXd l(n);  // segment i -> i+1
  for (int i = 0; i < n; ++i)
    l[i] = (curve.points.col(wrap(i + 1, n)) - curve.points.col(i)).norm();

  Eigen::VectorXd sub(n), diag(n), sup(n);
  for (int i = 0; i < n; ++i) {
    const double wm = lambda_s / (l[wrap(i - 1, n)] * ds[i]);
    const double wp = lambda_s / (l[i] * ds[i]);
    sub[i] = -wm;
    sup[i] = -wp;
    diag[i] = 1.0 + wm + wp;
  }
  const double corner_first = sub[0];   // A[0][n-1]
  const double corner_last = sup[n - 1];  // A[n-1][0]

  auto thomas = [&](Eigen::VectorXd b, Eigen::VectorXd d) {
    // b: modified diagonal, d: rhs; sub/sup captured
    for (int i = 1; i < n; ++i) {
      const double m = sub[i] / b[i - 1];
      b[i] -= m * sup[i - 1];
      d[i] -= m * d[i - 1];
    }
    Eigen::VectorXd x(n);
    x[n - 1] = d[n - 1] / b[n - 1];
    for (int i = n - 2; i >= 0; --i) x[i] = (d[i] - sup[i] * x[i + 1]) / b[i];
    return x;
  };

  const double gamma = -diag[0];
  Eigen::VectorXd bmod = diag;
  bmod[0] -= gamma;
  bmod[n - 1] -= corner_first * corner_last / gamma;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  u[0] = gamma;
  u[n - 1] = corner_last;

  const Eigen::VectorXd y = thomas(bmod, rhs);
  const Eigen::VectorXd z = thomas(bmod, u);
  const double vy = y[0] + corner_first / gamma * y[n - 1];
  const double vz = z[0] + corner_first / gamma * z[n - 1];
  if (!std::isfinite(vz) || std::abs(1.0 + vz) < kEps)
    throw std::runtime_error("sobolev_smooth: singular cyclic system");
  return y - (vy / (1.0 + vz)) * z;
}

FlowState sobolev_step(FlowState state, const ForceField& force, double lambda_s, double dt) {
  const CurveFrame frame = compute_frame(state.curve);
  const int n = state.curve.size();
  Eigen::VectorXd fx(n), fy(n);
  for (int i = 0; i < n; ++i) {
    fx[i] = force.values[i] * frame.normal(0, i);
    fy[i] = force.values[i] * frame.normal(1, i);
  }
  const Eigen::VectorXd ux = sobolev_smooth(state.curve, fx, lambda_s);
  const Eigen::VectorXd uy = sobolev_smooth(state.curve, fy, lambda_s);
  for (int i = 0; i < n; ++i) state.curve.points.col(i) += dt * Vec2(ux[i], uy[i]);
  maybe_resample(state.curve);
  state.t += dt;
  ++state.step;
  return state;
}

namespace {

double accel_dt(const FlowConfig& cfg, double t, double h_mean, double max_speed) {
  double dt = cfg.dt_max;
  dt = std::min(dt, cfg.cfl * h_mean / (max_speed + kEps));
  if (cfg.tau_diff > 0) dt = std::min(dt, cfg.cfl * h_mean * h_mean / (2 * cfg.tau_diff));
  if (t > 0) dt = std::min(dt, cfg.cfl * t / (cfg.k + 1));
  if (dt < 1e-12) throw std::runtime_error("accelerated step: dt underflow, evolution blew up");
  return dt;
}

}  // namespace

FlowState accel_const_step(FlowState state, const ForceField& force, const FlowConfig& cfg) {
  cfg.validate();
  MarkerCurve& curve = state.curve;
  const int n = curve.size();
  if (!curve.has_beta()) curve.beta = Eigen::VectorXd::Zero(n);
  const CurveFrame frame = compute_frame(curve);
  const double h_mean = frame.length / n;

  const double dt = accel_dt(cfg, state.t, h_mean, curve.beta.cwiseAbs().maxCoeff());
  const double t_eff = state.t > 0 ? state.t : dt;
  const double coef = cfg.lambda_action * cfg.k * cfg.k * std::pow(t_eff, cfg.k - 2);

  Eigen::VectorXd beta_new(n);
  for (int i = 0; i < n; ++i) {
    const double kap = clamp_kappa(frame.kappa[i], h_mean);
    beta_new[i] = curve.beta[i] +
                  dt * (coef / cfg.rho0 * force.values[i] +
                        0.5 * curve.beta[i] * curve.beta[i] * kap -
                        (cfg.k + 1) / t_eff * curve.beta[i]);
  }
  for (int i = 0; i < n; ++i) curve.points.col(i) += dt * beta_new[i] * frame.normal.col(i);
  curve.beta = beta_new;
  maybe_resample(curve);

  state.t = t_eff + dt;
  ++state.step;
  return state;
}

FlowState accel_flowable_step(FlowState state, const ForceField& force, const FlowConfig& cfg,
                              std::mt19937_64* rng) {
  cfg.validate();
  MarkerCurve& curve = state.curve;
  const int n = curve.size();
  if (!curve.has_rho()) throw std::invalid_argument("accel_flowable_step: rho channel missing");
  if ((curve.rho.array() <= 0).any())
    throw std::invalid_argument("accel_flowable_step: rho must be positive");
  if (!curve.has_beta()) curve.beta = Eigen::VectorXd::Zero(n);
  if (!curve.has_v()) curve.v = Eigen::VectorXd::Zero(n);

  const CurveFrame frame = compute_frame(curve);
  const double h_mean = frame.length / n;
  const Eigen::VectorXd ds = marker_spacing(curve);
  Eigen::VectorXd l(n);
  for (int i = 0; i < n; ++i)
    l[i] = (curve.points.col(wrap(i + 1, n)) - curve.points.col(i)).norm();

  Eigen::Matrix2Xd V(2, n);
  for (int i = 0; i < n; ++i)
    V.col(i) = curve.v[i] * frame.tangent.col(i) + curve.beta[i] * frame.normal.col(i);

  double max_speed = 0;
  for (int i = 0; i < n; ++i) max_speed = std::max(max_speed, V.col(i).norm());
  const double dt = accel_dt(cfg, state.t, h_mean, max_speed);
  const double t_eff = state.t > 0 ? state.t : dt;
  const double coef = cfg.lambda_action * cfg.k * cfg.k * std::pow(t_eff, cfg.k - 2);

  // One-sided s-derivative of V against the tangential advection speed v.
  auto upwind_dV = [&](int i) -> Vec2 {
    if (curve.v[i] > 0) return (V.col(i) - V.col(wrap(i - 1, n))) / l[wrap(i - 1, n)];
    return (V.col(wrap(i + 1, n)) - V.col(i)) / l[i];
  };

  MassPotentialGradient mass_grad;
  if (cfg.g > 0) mass_grad = mass_potential_forces(curve, cfg.g);

  Eigen::Matrix2Xd V_new(2, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Vec2 accel = coef / curve.rho[i] * force.values[i] * frame.normal.col(i) -
                 curve.v[i] * upwind_dV(i) - (cfg.k + 1) / t_eff * V.col(i);
    if (cfg.tau_diff > 0) {
      const Vec2 d2V = ((V.col(wrap(i + 1, n)) - V.col(i)) / l[i] -
                        (V.col(i) - V.col(wrap(i - 1, n))) / l[wrap(i - 1, n)]) /
                       ds[i];
      accel += cfg.tau_diff * d2V;
    }
    if (cfg.g > 0)
      accel -= coef / curve.rho[i] * mass_grad.d_position.col(i) / ds[i];
    V_new.col(i) = V.col(i) + dt * accel;
    if (cfg.tau_noise > 0 && rng)
      V_new.col(i) += cfg.tau_noise * std::sqrt(dt) * Vec2(normal(*rng), normal(*rng));
  }

  // Conservative mass update in parameter space: mu_t + (rho v)_p = 0,
  // upwind flux at the inter-marker interfaces. Total mass is then
  // conserved to rounding, independent of the curve stretching.
  Eigen::VectorXd mu = curve.rho.cwiseProduct(ds);
  Eigen::VectorXd flux(n);  // interface between markers i and i+1
  for (int i = 0; i < n; ++i) {
    const double v_half = 0.5 * (curve.v[i] + curve.v[wrap(i + 1, n)]);
    flux[i] = v_half > 0 ? curve.rho[i] * curve.v[i]
                         : curve.rho[wrap(i + 1, n)] * curve.v[wrap(i + 1, n)];
  }
  Eigen::VectorXd mu_new(n);
  for (int i = 0; i < n; ++i) mu_new[i] = mu[i] - dt * (flux[i] - flux[wrap(i - 1, n)]);

  if (cfg.g > 0) {
    // Mass-potential feedback on the density, projected onto the
    // mass-conserving subspace so the continuity constraint survives.
    Eigen::VectorXd r = mass_grad.d_rho.cwiseQuotient(ds);
    const double rbar = r.dot(ds) / ds.sum();
    for (int i = 0; i < n; ++i) mu_new[i] -= dt * coef * (r[i] - rbar) * ds[i];
  }

  // Move the curve along the normal only, then decompose V in the frame
  // taken before the move.
  Eigen::VectorXd beta_new(n), v_new(n);
  for (int i = 0; i < n; ++i) {
    beta_new[i] = V_new.col(i).dot(frame.normal.col(i));
    v_new[i] = V_new.col(i).dot(frame.tangent.col(i));
  }
  for (int i = 0; i < n; ++i) curve.points.col(i) += dt * beta_new[i] * frame.normal.col(i);
  curve.beta = beta_new;
  curve.v = v_new;

  const Eigen::VectorXd ds_new = marker_spacing(curve);
  curve.rho = mu_new.cwiseQuotient(ds_new);
  if ((curve.rho.array() <= 0).any())
    throw std::runtime_error("accel_flowable_step: density positivity breached");

  state.t = t_eff + dt;
  ++state.step;
  if (state.step % 25 == 0) curve = resample_arclength(curve, n);
  return state;
}

double CircleTrajectory::radius_at(double time) const {
  if (t.empty()) throw std::runtime_error("CircleTrajectory: empty trajectory");
  if (time <= t.front()) return radius.front();
  if (time >= t.back()) return radius.back();
  const auto it = std::upper_bound(t.begin(), t.end(), time);
  const size_t j = static_cast<size_t>(it - t.begin());
  const double u = (time - t[j - 1]) / (t[j] - t[j - 1]);
  return (1 - u) * radius[j - 1] + u * radius[j];
}

namespace {

// Dormand-Prince 5(4) embedded pair with adaptive step control.
template <typename Rhs>
void integrate_dopri5(Rhs rhs, Eigen::VectorXd& y, double& t, double t_end, double rtol,
                      const std::function<bool(double, const Eigen::VectorXd&)>& record) {
  static const double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static const double a[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static const double b5[7] = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
                               11.0 / 84, 0};
  static const double b4[7] = {5179.0 / 57600, 0,           7571.0 / 16695, 393.0 / 640,
                               -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

  double h = std::min(1e-4, (t_end - t) / 10);
  const double atol = rtol;
  Eigen::VectorXd k[7];
  while (t < t_end) {
    h = std::min(h, t_end - t);
    k[0] = rhs(t, y);
    for (int s = 1; s < 7; ++s) {
      Eigen::VectorXd ys = y;
      for (int j = 0; j < s; ++j) ys += h * a[s][j] * k[j];
      k[s] = rhs(t + c[s] * h, ys);
    }
    Eigen::VectorXd y5 = y, y4 = y;
    for (int s = 0; s < 7; ++s) {
      y5 += h * b5[s] * k[s];
      y4 += h * b4[s] * k[s];
    }
    double err = 0;
    for (int i = 0; i < y.size(); ++i) {
      const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      err = std::max(err, std::abs(y5[i] - y4[i]) / sc);
    }
    if (err <= 1.0 || h < 1e-14) {
      t += h;
      y = y5;
      if (!record(t, y)) return;
    }
    const double fac = std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.2), 0.2, 5.0);
    h *= fac;
  }
}

}  // namespace

CircleTrajectory circle_ode_oracle(double R0, double f_const, const FlowConfig& cfg,
                                   MassModel model, double t_end, double rtol, double r_min) {
  cfg.validate();
  if (!(R0 > 0)) throw std::invalid_argument("circle_ode_oracle: R0 must be > 0");
  const double t0 = cfg.t0 > 0 ? cfg.t0 : 1e-3;
  const double k = cfg.k;
  const double lam = cfg.lambda_action;

  CircleTrajectory traj;
  const bool flowable = model == MassModel::Flowable;
  Eigen::VectorXd y(flowable ? 3 : 2);
  y[0] = R0;
  y[1] = 0;  // beta, inward speed: dR/dt = -beta
  if (flowable) y[2] = cfg.rho0;

  auto rhs = [&](double t, const Eigen::VectorXd& s) {
    Eigen::VectorXd d(s.size());
    const double R = s[0], beta = s[1];
    const double coef = lam * k * k * std::pow(t, k - 2);
    d[0] = -beta;
    if (flowable) {
      const double rho = s[2];
      d[1] = coef * f_const / rho - (k + 1) / t * beta;
      d[2] = rho * beta / R;  // continuity: rho * R = const
    } else {
      d[1] = coef * f_const / cfg.rho0 + 0.5 * beta * beta / R - (k + 1) / t * beta;
    }
    return d;
  };

  auto record = [&](double t, const Eigen::VectorXd& s) {
    traj.t.push_back(t);
    traj.radius.push_back(s[0]);
    traj.beta.push_back(s[1]);
    if (flowable) traj.rho.push_back(s[2]);
    if (s[0] < r_min) {
      traj.shock = true;
      return false;
    }
    return true;
  };

  double t = t0;
  record(t, y);
  traj.shock = false;
  integrate_dopri5(rhs, y, t, t_end, rtol, record);
  return traj;
}

std::vector<Eigen::VectorXd> nesterov_reference(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
    const Eigen::VectorXd& x0, double beta_lip, int n) {
  if (!(beta_lip > 0)) throw std::invalid_argument("nesterov_reference: beta_lip must be > 0");
  if (n < 1) throw std::invalid_argument("nesterov_reference: n must be >= 1");

  std::vector<Eigen::VectorXd> iterates;
  iterates.reserve(n + 1);
  iterates.push_back(x0);

  Eigen::VectorXd x = x0, y_prev = x0;
  double lambda_prev = 1.0;
  for (int it = 0; it < n; ++it) {
    const double lambda = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * lambda_prev * lambda_prev));
    const double gamma = (1.0 - lambda_prev) / lambda;
    const Eigen::VectorXd y = x - grad(x) / beta_lip;
    x = (1.0 - gamma) * y + gamma * y_prev;
    y_prev = y;
    lambda_prev = lambda;
    iterates.push_back(x);
  }
  return iterates;
}

Eigen::VectorXd rho_to_mu(const MarkerCurve& curve, const Eigen::VectorXd& rho) {
  return rho.cwiseProduct(parameterization_speed(curve));
}

Eigen::VectorXd mu_to_rho(const MarkerCurve& curve, const Eigen::VectorXd& mu) {
  return mu.cwiseQuotient(parameterization_speed(curve));
}

Eigen::VectorXd v_to_xi(const MarkerCurve& curve, const Eigen::VectorXd& v) {
  return v.cwiseQuotient(parameterization_speed(curve));
}

Eigen::VectorXd xi_to_v(const MarkerCurve& curve, const Eigen::VectorXd& xi) {
  return xi.cwiseProduct(parameterization_speed(curve));
}

double kinetic_energy(const MarkerCurve& curve) {
  if (!curve.has_rho()) throw std::invalid_argument("kinetic_energy: rho channel missing");
  const Eigen::VectorXd ds = marker_spacing(curve);
  const int n = curve.size();
  double ke = 0;
  for (int i = 0; i < n; ++i) {
    const double b = curve.has_beta() ? curve.beta[i] : 0.0;
    const double vi = curve.has_v() ? curve.v[i] : 0.0;
    ke += 0.5 * curve.rho[i] * (b * b + vi * vi) * ds[i];
  }
  return ke;
}

RunResult run_flow(const MarkerCurve& initial, const ImageGrid& image, FlowMethod method,
                   const FlowConfig& cfg, EnergyModel energy) {
  cfg.validate();
  initial.validate();
  image.validate();

  RunResult result;
  FlowState& state = result.state;
  state.curve = initial;
  state.t = cfg.t0;
  const int n0 = initial.size();
  if (method == FlowMethod::AccelConst && !state.curve.has_beta())
    state.curve.beta = Eigen::VectorXd::Zero(n0);
  if (method == FlowMethod::AccelFlowable) {
    if (!state.curve.has_rho()) state.curve.rho = Eigen::VectorXd::Constant(n0, cfg.rho0);
    if (!state.curve.has_beta()) state.curve.beta = Eigen::VectorXd::Zero(n0);
    if (!state.curve.has_v()) state.curve.v = Eigen::VectorXd::Zero(n0);
  }

  std::mt19937_64 rng(cfg.seed);
  const GridField phi =
      energy == EnergyModel::Geodesic ? edge_map(image, 2.0) : GridField();

  int stagnant = 0;
  for (int step = 0; step < cfg.max_steps; ++step) {
    const CurveFrame frame = compute_frame(state.curve);
    ForceField force;
    if (energy == EnergyModel::ChanVese) {
      const MaskGrid mask = rasterize_mask(state.curve, image.width, image.height);
      auto [c1, c2] = region_means(image, mask);
      force = chan_vese_force(image, state.curve, frame, c1, c2, cfg.alpha_len);
    } else {
      force = geodesic_force(phi, frame, state.curve);
    }

    const Eigen::Matrix2Xd before = state.curve.points;
    const double t_before = state.t;
    const double h_mean = frame.length / state.curve.size();
    switch (method) {
      case FlowMethod::Gradient: {
        const double dt = std::min(
            cfg.dt_max, cfg.cfl * h_mean / (force.values.cwiseAbs().maxCoeff() + kEps));
        state = gradient_step(std::move(state), force, dt);
        break;
      }
      case FlowMethod::Sobolev: {
        const double dt = std::min(
            cfg.dt_max, cfg.cfl * h_mean / (force.values.cwiseAbs().maxCoeff() + kEps));
        state = sobolev_step(std::move(state), force, cfg.sobolev_lambda, dt);
        break;
      }
      case FlowMethod::AccelConst:
        state = accel_const_step(std::move(state), force, cfg);
        break;
      case FlowMethod::AccelFlowable:
        state = accel_flowable_step(std::move(state), force, cfg, &rng);
        break;
    }

    const CurveFrame frame_after = compute_frame(state.curve);
    RunRecord rec;
    rec.step = state.step;
    rec.t = state.t;
    rec.dt = state.t - t_before;
    if (rec.dt <= 0) rec.dt = state.t;  // first accelerated step starts the clock
    if (energy == EnergyModel::ChanVese) {
      const MaskGrid mask = rasterize_mask(state.curve, image.width, image.height);
      rec.energy = chan_vese_energy(image, mask, cfg.alpha_len, frame_after.length);
    } else {
      double e = 0;
      const Eigen::VectorXd ds = marker_spacing(state.curve);
      for (int i = 0; i < state.curve.size(); ++i)
        e += phi(std::clamp(static_cast<int>(std::lround(state.curve.points(0, i))), 0,
                            image.width - 1),
                 std::clamp(static_cast<int>(std::lround(state.curve.points(1, i))), 0,
                            image.height - 1)) *
             ds[i];
      rec.energy = e;
    }
    rec.length = frame_after.length;
    rec.mass = state.curve.has_rho() ? total_mass(state.curve) : 0.0;
    rec.max_speed = state.curve.has_beta() ? state.curve.beta.cwiseAbs().maxCoeff()
                                           : force.values.cwiseAbs().maxCoeff();
    result.log.records.push_back(rec);

    if (before.cols() == state.curve.points.cols() &&
        (state.curve.points - before).cwiseAbs().maxCoeff() < 1e-6) {
      if (++stagnant >= 50) break;
    } else {
      stagnant = 0;
    }
  }
  return result;
}

}  // namespace acflow
