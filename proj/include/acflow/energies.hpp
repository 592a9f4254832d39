#pragma once

#include <string>
#include <utility>

#include "acflow/geometry.hpp"

namespace acflow {

using GridField = Eigen::ArrayXXd;  // indexed (x, y)

struct GridVectorField {
  GridField x, y;
};

/// Grayscale image, intensities in [0, 1], indexed (x, y).
struct ImageGrid {
  int width = 0;
  int height = 0;
  GridField intensity;

  void validate() const;
  double bilinear(double x, double y) const;
};

/// Per-marker scalar force f of the flow dC/dt = f N.
struct ForceField {
  Eigen::VectorXd values;
  std::string energy;
};

/// Mean intensity inside and outside the mask. Throws if either region is empty.
std::pair<double, double> region_means(const ImageGrid& image, const MaskGrid& inside);

/// Chan-Vese normal speed f = (I - c1)^2 - (I - c2)^2 + alpha_len * kappa
/// sampled at the markers. With the inward-normal convention the gradient
/// flow dC/dt = f N descends the Chan-Vese energy.
ForceField chan_vese_force(const ImageGrid& image, const MarkerCurve& curve,
                           const CurveFrame& frame, double c1, double c2, double alpha_len);

/// Same speed evaluated at every pixel (the natural extension f_hat);
/// kappa is the per-pixel level-set curvature supplied by the caller.
GridField chan_vese_force_grid(const ImageGrid& image, const GridField& kappa, double c1,
                               double c2, double alpha_len);

/// sum_in (I-c1)^2 + sum_out (I-c2)^2 + alpha_len * length, pixel area measure.
double chan_vese_energy(const ImageGrid& image, const MaskGrid& inside, double alpha_len,
                        double length);

/// Edge-stopping map phi = 1 / (1 + ||grad(G_sigma * I)||^2), values in (0, 1].
GridField edge_map(const ImageGrid& image, double sigma);

/// Geodesic normal speed f = phi * kappa - grad(phi) . N at the markers.
/// Throws if a marker falls outside the grid.
ForceField geodesic_force(const GridField& phi, const CurveFrame& frame,
                          const MarkerCurve& curve);

/// U_mass = g * L * sum(1/2 rho^2 ds). Requires the rho channel, rho >= 0.
double mass_potential_energy(const MarkerCurve& curve, double g);

/// Exact gradient of the discretized U_mass.
struct MassPotentialGradient {
  Eigen::Matrix2Xd d_position;  // dU/dC per marker
  Eigen::VectorXd d_rho;        // dU/drho per marker
};
MassPotentialGradient mass_potential_forces(const MarkerCurve& curve, double g);

}  // namespace acflow
