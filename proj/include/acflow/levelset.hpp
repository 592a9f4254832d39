#pragma once

#include <string>
#include <vector>

#include "acflow/parametric.hpp"

namespace acflow {

/// Scalar grid whose zero level set is the contour; negative inside,
/// unit grid spacing (pixels).
struct LevelSetField {
  int width = 0;
  int height = 0;
  double h = 1.0;
  GridField psi;
};

/// Level-set flow state with the extended quantities living on the grid:
/// beta_hat for the constant-density model, V_hat / rho_hat for the
/// flowable-mass model.
struct ExtendedState {
  LevelSetField psi;
  GridField beta_hat;
  GridVectorField V_hat;
  GridField rho_hat;
  double t = 0;
  long step = 0;
};

LevelSetField signed_distance_circle(int width, int height, double cx, double cy, double radius);
LevelSetField signed_distance_rectangle(int width, int height, double x0, double y0, double x1,
                                        double y1);
LevelSetField signed_distance_polyline(int width, int height, const MarkerCurve& curve);

/// Fast-sweeping redistance; the zero level set moves < 0.5h.
/// Throws if the field has no zero crossing.
LevelSetField reinitialize(const LevelSetField& field);

/// Godunov upwind ||grad psi|| for the evolution psi_t = speed * ||grad psi||;
/// the one-sided stencil is selected per node by the sign of the speed.
GridField upwind_grad_norm(const GridField& psi, const GridField& speed);

/// Normal extension of q off the zero set: solves grad(q) . grad(psi) = 0
/// outward in |psi|, keeping the near-interface band fixed.
GridField extend_field(const LevelSetField& psi, const GridField& q);
GridVectorField extend_field(const LevelSetField& psi, const GridVectorField& q);

/// Level-set curvature div(grad psi / ||grad psi||), regularized quotient,
/// clamped to |kappa| <= 2/h. Same sign as the parametric kappa.
GridField grid_curvature(const LevelSetField& field);

/// Implicit gradient flow psi_t = f_hat * ||grad psi|| (inward-normal
/// convention with psi < 0 inside).
ExtendedState gradient_ls_step(ExtendedState state, const GridField& f_hat, double dt);

/// Level-set constant-density accelerated system:
///   dbeta_hat/dt = (lambda k^2 t^{k-2}/rho) f_hat
///                  + div(beta_hat^2/2 * grad psi/||grad psi||) - (k+1)/t beta_hat
///   dpsi/dt      = beta_hat ||grad psi||
/// dt from the combined CFL rule; reinit + extension every cfg.reinit_every steps.
ExtendedState accel_const_ls_step(ExtendedState state, const GridField& f_hat,
                                  const FlowConfig& cfg);

/// Level-set flowable-mass accelerated system; psi is advected linearly by
/// the normal part of V_hat, V_hat and rho_hat by the grid extension of the
/// parametric system with directional derivatives along the level-set tangent.
ExtendedState accel_flowable_ls_step(ExtendedState state, const GridField& f_hat,
                                     const FlowConfig& cfg);

/// Marching-squares zero set; closed CCW polyline(s) with linear
/// interpolation on cell edges. Throws if there is no crossing.
MarkerCurve extract_contour(const LevelSetField& field);           // largest component
std::vector<MarkerCurve> extract_contours(const LevelSetField& field);  // all components

ExtendedState make_extended_state(LevelSetField psi, MassModel model, const FlowConfig& cfg);

/// Smoothed-delta line integral of rho_hat over the zero set
/// (band mass of the flowable level-set model).
double delta_band_mass(const ExtendedState& state);

/// Smoothed-delta contour length.
double delta_contour_length(const LevelSetField& field);

enum class LsMethod { Gradient, AccelConst, AccelFlowable };

struct LsRunResult {
  ExtendedState state;
  RunLog log;
};

/// Level-set counterpart of run_flow: recomputes the Chan-Vese force grid
/// each step, logs the same record layout, stops on max_steps or stagnation.
LsRunResult run_flow_ls(const LevelSetField& initial, const ImageGrid& image, LsMethod method,
                        const FlowConfig& cfg);

// psi snapshots: 16-byte header (magic "LSF1", u32 width, height, step),
// then float32 row data, x fastest.
void write_lsf(const LevelSetField& field, long step, const std::string& path);
LevelSetField read_lsf(const std::string& path, long* step = nullptr);

/// 8-bit PGM preview: psi clamped to [-10h, 10h], linearly mapped to 0..255.
void write_psi_preview_pgm(const LevelSetField& field, const std::string& path);

}  // namespace acflow
