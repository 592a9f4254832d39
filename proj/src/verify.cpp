#include "acflow/verify.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "acflow/energies.hpp"
#include "acflow/parametric.hpp"

namespace acflow {

namespace {

MarkerCurve random_curve(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> amp(-0.15, 0.15);
  std::uniform_real_distribution<double> rad(4.0, 12.0);
  std::uniform_real_distribution<double> pos(40.0, 80.0);
  std::uniform_real_distribution<double> dens(0.3, 2.0);
  const double R = rad(rng);
  const double a2 = amp(rng), a3 = amp(rng), b2 = amp(rng);
  const Vec2 c(pos(rng), pos(rng));
  MarkerCurve curve;
  curve.points.resize(2, n);
  curve.rho.resize(n);
  for (int i = 0; i < n; ++i) {
    const double th = 2 * std::numbers::pi * i / n;
    const double r = R * (1 + a2 * std::cos(2 * th) + a3 * std::sin(3 * th) + b2 * std::cos(5 * th));
    curve.points.col(i) = c + r * Vec2(std::cos(th), std::sin(th));
    curve.rho[i] = dens(rng);
  }
  return curve;
}

VerifyCheck check_frame_evolution() {
  VerifyCheck check{"frame-evolution residual O(dt)+O(h^2)", false, ""};
  // Residual r(h, dt) ~ C1 dt + C2 h^2: halving h while quartering dt
  // should cut the residual by ~4x at each refinement level.
  const Vec2 c(64, 64);
  std::vector<double> residuals;
  double dt = 2e-3;
  for (int n : {96, 192, 384}) {
    MarkerCurve curve = make_ellipse(c, 20, 12, n);
    Eigen::VectorXd alpha(n), beta(n);
    for (int i = 0; i < n; ++i) {
      const double th = 2 * std::numbers::pi * i / n;
      alpha[i] = 0.7 * std::sin(2 * th);
      beta[i] = 0.5 * std::cos(3 * th) + 0.3;
    }
    residuals.push_back(verify_frame_evolution(curve, alpha, beta, dt));
    dt /= 4;
  }
  const double r01 = residuals[0] / residuals[1];
  const double r12 = residuals[1] / residuals[2];
  std::ostringstream os;
  os << "residuals " << residuals[0] << " -> " << residuals[1] << " -> " << residuals[2]
     << ", decay factors " << r01 << ", " << r12;
  check.detail = os.str();
  check.pass = r01 > 2.5 && r12 > 2.5;
  return check;
}

VerifyCheck check_mass_potential_fd(std::uint64_t seed) {
  VerifyCheck check{"mass_potential_forces vs finite differences", false, ""};
  std::mt19937_64 rng(seed + 17);
  const double g = 0.37;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    MarkerCurve curve = random_curve(rng, 48);
    const MassPotentialGradient grad = mass_potential_forces(curve, g);
    const double scale = grad.d_position.norm() + grad.d_rho.norm() + 1e-12;
    const double eps = 1e-6;
    for (int i = 0; i < curve.size(); i += 7) {
      for (int axis = 0; axis < 2; ++axis) {
        MarkerCurve p = curve, m = curve;
        p.points(axis, i) += eps;
        m.points(axis, i) -= eps;
        const double fd =
            (mass_potential_energy(p, g) - mass_potential_energy(m, g)) / (2 * eps);
        worst = std::max(worst, std::abs(fd - grad.d_position(axis, i)) / scale);
      }
      MarkerCurve p = curve, m = curve;
      p.rho[i] += eps;
      m.rho[i] -= eps;
      const double fd = (mass_potential_energy(p, g) - mass_potential_energy(m, g)) / (2 * eps);
      worst = std::max(worst, std::abs(fd - grad.d_rho[i]) / scale);
    }
  }
  std::ostringstream os;
  os << "max relative error " << worst << " (tol 1e-4, 100 instances)";
  check.detail = os.str();
  check.pass = worst < 1e-4;
  return check;
}

VerifyCheck check_umass_minimum(std::uint64_t seed) {
  VerifyCheck check{"min U_mass equals (g/2) M^2", false, ""};
  std::mt19937_64 rng(seed + 91);
  const double g = 1.3;
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    MarkerCurve curve = random_curve(rng, 64);
    const double M = total_mass(curve);
    const Eigen::VectorXd ds = marker_spacing(curve);
    const double L = ds.sum();
    // Uniform density at the same mass is the constrained minimizer.
    curve.rho.setConstant(M / L);
    const double u_min = mass_potential_energy(curve, g);
    const double target = 0.5 * g * M * M;
    worst = std::max(worst, std::abs(u_min - target) / std::max(1.0, target));

    // A mass-preserving perturbation must not go below it.
    Eigen::VectorXd pert(curve.rho.size());
    std::normal_distribution<double> nd;
    for (int i = 0; i < pert.size(); ++i) pert[i] = nd(rng);
    pert.array() -= pert.dot(ds) / L;  // keep sum(rho ds) fixed
    MarkerCurve bumped = curve;
    bumped.rho += 0.05 * pert;
    if (mass_potential_energy(bumped, g) < u_min - 1e-12) {
      check.detail = "perturbed density fell below the uniform minimum";
      return check;
    }
  }
  std::ostringstream os;
  os << "max relative gap " << worst << " (tol 1e-6, 20 curves)";
  check.detail = os.str();
  check.pass = worst < 1e-6;
  return check;
}

VerifyCheck check_mu_roundtrip(std::uint64_t seed) {
  VerifyCheck check{"mu = rho ||C_p|| round-trip", false, ""};
  std::mt19937_64 rng(seed + 5);
  double worst = 0;
  for (int trial = 0; trial < 25; ++trial) {
    MarkerCurve curve = random_curve(rng, 80);
    Eigen::VectorXd v(curve.size());
    std::normal_distribution<double> nd;
    for (int i = 0; i < v.size(); ++i) v[i] = nd(rng);

    const Eigen::VectorXd mu = rho_to_mu(curve, curve.rho);
    const Eigen::VectorXd rho_back = mu_to_rho(curve, mu);
    const Eigen::VectorXd xi = v_to_xi(curve, v);
    const Eigen::VectorXd v_back = xi_to_v(curve, xi);
    worst = std::max(worst, (rho_back - curve.rho).cwiseAbs().maxCoeff());
    worst = std::max(worst, (v_back - v).cwiseAbs().maxCoeff());
    // flux identity mu * xi = rho * v (the ||C_p|| factors cancel)
    for (int i = 0; i < v.size(); ++i) {
      const double lhs = mu[i] * xi[i];
      const double rhs = curve.rho[i] * v[i];
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
  }
  std::ostringstream os;
  os << "max deviation " << worst << " (tol 1e-12, 25 curves)";
  check.detail = os.str();
  check.pass = worst < 1e-12;
  return check;
}

}  // namespace

std::vector<VerifyCheck> run_verify_suite(std::uint64_t seed) {
  return {check_frame_evolution(), check_mass_potential_fd(seed), check_umass_minimum(seed),
          check_mu_roundtrip(seed)};
}

}  // namespace acflow
