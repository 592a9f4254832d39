#include "acflow/energies.hpp"

#include <cmath>
#include <stdexcept>

namespace acflow {

namespace {

int wrap(int i, int n) { return ((i % n) + n) % n; }

}  // namespace

void ImageGrid::validate() const {
  if (width < 16 || height < 16)
    throw std::invalid_argument("ImageGrid: width and height must be >= 16");
  if (intensity.rows() != width || intensity.cols() != height)
    throw std::invalid_argument("ImageGrid: intensity dimensions do not match width/height");
  if (!intensity.allFinite()) throw std::invalid_argument("ImageGrid: non-finite intensity");
}

double ImageGrid::bilinear(double x, double y) const {
  const double cx = std::clamp(x, 0.0, static_cast<double>(width - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const int x0 = std::min(static_cast<int>(cx), width - 2);
  const int y0 = std::min(static_cast<int>(cy), height - 2);
  const double u = cx - x0, w = cy - y0;
  return (1 - u) * (1 - w) * intensity(x0, y0) + u * (1 - w) * intensity(x0 + 1, y0) +
         (1 - u) * w * intensity(x0, y0 + 1) + u * w * intensity(x0 + 1, y0 + 1);
}

std::pair<double, double> region_means(const ImageGrid& image, const MaskGrid& inside) {
  image.validate();
  if (inside.rows() != image.width || inside.cols() != image.height)
    throw std::invalid_argument("region_means: mask dimensions do not match image");
  double sum_in = 0, sum_out = 0;
  long n_in = 0, n_out = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      if (inside(x, y)) {
        sum_in += image.intensity(x, y);
        ++n_in;
      } else {
        sum_out += image.intensity(x, y);
        ++n_out;
      }
    }
  if (n_in == 0) throw std::invalid_argument("region_means: empty inside region");
  if (n_out == 0) throw std::invalid_argument("region_means: empty outside region");
  return {sum_in / n_in, sum_out / n_out};
}

ForceField chan_vese_force(const ImageGrid& image, const MarkerCurve& curve,
                           const CurveFrame& frame, double c1, double c2, double alpha_len) {
  if (std::isnan(c1) || std::isnan(c2))
    throw std::invalid_argument("chan_vese_force: region means are NaN");
  const int n = curve.size();
  ForceField f;
  f.energy = "chan-vese";
  f.values.resize(n);
  for (int i = 0; i < n; ++i) {
    const double I = image.bilinear(curve.points(0, i), curve.points(1, i));
    const double d1 = I - c1, d2 = I - c2;
    f.values[i] = d1 * d1 - d2 * d2 + alpha_len * frame.kappa[i];
  }
  return f;
}

GridField chan_vese_force_grid(const ImageGrid& image, const GridField& kappa, double c1,
                               double c2, double alpha_len) {
  if (std::isnan(c1) || std::isnan(c2))
    throw std::invalid_argument("chan_vese_force_grid: region means are NaN");
  return (image.intensity - c1).square() - (image.intensity - c2).square() + alpha_len * kappa;
}

double chan_vese_energy(const ImageGrid& image, const MaskGrid& inside, double alpha_len,
                        double length) {
  auto [c1, c2] = region_means(image, inside);
  double e = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double d = image.intensity(x, y) - (inside(x, y) ? c1 : c2);
      e += d * d;
    }
  return e + alpha_len * length;
}

namespace {

// Separable Gaussian blur, kernel truncated at 3 sigma, clamped borders.
GridField gaussian_blur(const GridField& in, double sigma) {
  if (sigma <= 0) return in;
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  Eigen::VectorXd kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  kernel /= kernel.sum();

  const int w = static_cast<int>(in.rows()), h = static_cast<int>(in.cols());
  GridField tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * in(std::clamp(x + k, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp(x, std::clamp(y + k, 0, h - 1));
      out(x, y) = acc;
    }
  return out;
}

}  // namespace

GridField edge_map(const ImageGrid& image, double sigma) {
  image.validate();
  if (sigma < 0) throw std::invalid_argument("edge_map: sigma must be >= 0");
  const GridField smooth = gaussian_blur(image.intensity, sigma);
  const int w = image.width, h = image.height;
  GridField phi(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx =
          0.5 * (smooth(std::min(x + 1, w - 1), y) - smooth(std::max(x - 1, 0), y));
      const double gy =
          0.5 * (smooth(x, std::min(y + 1, h - 1)) - smooth(x, std::max(y - 1, 0)));
      phi(x, y) = 1.0 / (1.0 + gx * gx + gy * gy);
    }
  return phi;
}

ForceField geodesic_force(const GridField& phi, const CurveFrame& frame,
                          const MarkerCurve& curve) {
  const int w = static_cast<int>(phi.rows()), h = static_cast<int>(phi.cols());
  const int n = curve.size();
  ForceField f;
  f.energy = "geodesic";
  f.values.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = curve.points(0, i), y = curve.points(1, i);
    if (x < 0 || y < 0 || x > w - 1 || y > h - 1)
      throw std::invalid_argument("geodesic_force: marker " + std::to_string(i) + " outside grid");
    // bilinear sample of phi and its central-difference gradient
    const int x0 = std::min(static_cast<int>(x), w - 2);
    const int y0 = std::min(static_cast<int>(y), h - 2);
    const double u = x - x0, t = y - y0;
    auto sample = [&](auto&& field) {
      return (1 - u) * (1 - t) * field(x0, y0) + u * (1 - t) * field(x0 + 1, y0) +
             (1 - u) * t * field(x0, y0 + 1) + u * t * field(x0 + 1, y0 + 1);
    };
    auto gx = [&](int px, int py) {
      return 0.5 * (phi(std::min(px + 1, w - 1), py) - phi(std::max(px - 1, 0), py));
    };
    auto gy = [&](int px, int py) {
      return 0.5 * (phi(px, std::min(py + 1, h - 1)) - phi(px, std::max(py - 1, 0)));
    };
    const double phi_here = sample(phi);
    const double grad_x = sample(gx);
    const double grad_y = sample(gy);
    f.values[i] = phi_here * frame.kappa[i] -
                  (grad_x * frame.normal(0, i) + grad_y * frame.normal(1, i));
  }
  return f;
}

double mass_potential_energy(const MarkerCurve& curve, double g) {
  if (!curve.has_rho()) throw std::invalid_argument("mass_potential_energy: rho channel missing");
  if ((curve.rho.array() < 0).any())
    throw std::invalid_argument("mass_potential_energy: rho must be non-negative");
  const Eigen::VectorXd ds = marker_spacing(curve);
  const double L = ds.sum();
  return g * L * 0.5 * curve.rho.array().square().matrix().dot(ds);
}

MassPotentialGradient mass_potential_forces(const MarkerCurve& curve, double g) {
  if (!curve.has_rho()) throw std::invalid_argument("mass_potential_forces: rho channel missing");
  const int n = curve.size();
  const Eigen::VectorXd ds = marker_spacing(curve);
  const double L = ds.sum();
  const double S = 0.5 * curve.rho.array().square().matrix().dot(ds);

  MassPotentialGradient grad;
  grad.d_rho = g * L * curve.rho.cwiseProduct(ds);
  grad.d_position = Eigen::Matrix2Xd::Zero(2, n);

  // U = g * L(x) * S(x, rho); segment i joins markers i and i+1 with unit
  // direction u_i, contributing (rho_i^2 + rho_{i+1}^2)/4 * l_i to S.
  for (int j = 0; j < n; ++j) {
    const int jm = wrap(j - 1, n), jp = wrap(j + 1, n);
    const Vec2 u_prev = (curve.points.col(j) - curve.points.col(jm)).normalized();
    const Vec2 u_next = (curve.points.col(jp) - curve.points.col(j)).normalized();
    const Vec2 dL = u_prev - u_next;
    const double w_prev = 0.25 * (curve.rho[jm] * curve.rho[jm] + curve.rho[j] * curve.rho[j]);
    const double w_next = 0.25 * (curve.rho[j] * curve.rho[j] + curve.rho[jp] * curve.rho[jp]);
    const Vec2 dS = w_prev * u_prev - w_next * u_next;
    grad.d_position.col(j) = g * (dL * S + L * dS);
  }
  return grad;
}

}  // namespace acflow
