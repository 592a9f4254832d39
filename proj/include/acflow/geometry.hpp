#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace acflow {

using Vec2 = Eigen::Vector2d;
using MaskGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Closed polyline in pixel coordinates, counterclockwise, with optional
/// per-marker scalar channels. A channel of size 0 means "absent".
struct MarkerCurve {
  Eigen::Matrix2Xd points;  // one column per marker
  Eigen::VectorXd beta;     // normal speed
  Eigen::VectorXd v;        // internal tangential mass speed
  Eigen::VectorXd rho;      // mass density per unit arclength
  Eigen::VectorXd alpha;    // tangential curve speed

  int size() const { return static_cast<int>(points.cols()); }
  bool has_beta() const { return beta.size() == points.cols(); }
  bool has_v() const { return v.size() == points.cols(); }
  bool has_rho() const { return rho.size() == points.cols(); }

  double signed_area() const;

  /// Throws std::invalid_argument on any violated invariant
  /// (marker count, degenerate segments, orientation, channel sizes).
  void validate() const;
};

/// Discrete Frenet data of a closed curve. The normal is the tangent
/// rotated by +90 degrees, which points inward for CCW curves; with this
/// convention a circle of radius R has kappa = +1/R.
struct CurveFrame {
  Eigen::Matrix2Xd tangent;
  Eigen::Matrix2Xd normal;
  Eigen::VectorXd kappa;      // 1/pixels
  Eigen::VectorXd arclength;  // cumulative s, s[0] = 0
  double length = 0;          // total L
};

CurveFrame compute_frame(const MarkerCurve& curve);

/// ||C_p|| per marker with unit parameter spacing: half the distance
/// between the two neighbouring markers.
Eigen::VectorXd parameterization_speed(const MarkerCurve& curve);

/// Arclength increment attributed to each marker (same values as
/// parameterization_speed for unit parameter spacing).
Eigen::VectorXd marker_spacing(const MarkerCurve& curve);

/// Total mass sum(rho * ds). Requires the rho channel.
double total_mass(const MarkerCurve& curve);

/// Redistributes n markers at equal arclength spacing. Channels are
/// interpolated linearly in arclength; rho is rescaled afterwards so the
/// total mass is preserved exactly.
MarkerCurve resample_arclength(const MarkerCurve& curve, int n);

/// One Euler step of dC/dt = alpha T + beta N followed by a frame
/// recomputation; returns the max residual of
/// ||dT/dt - (beta_s + alpha*kappa) N|| over the markers.
double verify_frame_evolution(const MarkerCurve& curve,
                              const Eigen::VectorXd& alpha,
                              const Eigen::VectorXd& beta, double dt);

MarkerCurve make_circle(const Vec2& center, double radius, int n);
MarkerCurve make_ellipse(const Vec2& center, double a, double b, int n);

/// Even-odd scanline fill of the curve interior over a width x height
/// pixel grid; pixel (x, y) is tested at its integer coordinate.
MaskGrid rasterize_mask(const MarkerCurve& curve, int width, int height);

/// Symmetric Hausdorff distance between two closed polylines, measured
/// from the markers of each to the segments of the other.
double hausdorff_distance(const MarkerCurve& a, const MarkerCurve& b);

// CSV with header `x,y[,beta,v,rho]`, one marker per row, closed implicitly.
void write_curve_csv(const MarkerCurve& curve, const std::string& path);
MarkerCurve read_curve_csv(const std::string& path);

}  // namespace acflow
