#include "acflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace acflow {

namespace {

int wrap(int i, int n) { return ((i % n) + n) % n; }

}  // namespace

double MarkerCurve::signed_area() const {
  const int n = size();
  double area = 0;
  for (int i = 0; i < n; ++i) {
    const auto& a = points.col(i);
    const auto& b = points.col(wrap(i + 1, n));
    area += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * area;
}

void MarkerCurve::validate() const {
  const int n = size();
  if (n < 8) throw std::invalid_argument("MarkerCurve: need at least 8 markers, got " + std::to_string(n));
  for (int i = 0; i < n; ++i) {
    const double len = (points.col(wrap(i + 1, n)) - points.col(i)).norm();
    if (!(len > 1e-12))
      throw std::invalid_argument("MarkerCurve: degenerate segment at marker " + std::to_string(i));
    if (!points.col(i).allFinite())
      throw std::invalid_argument("MarkerCurve: non-finite point at marker " + std::to_string(i));
  }
  if (!(signed_area() > 0))
    throw std::invalid_argument("MarkerCurve: orientation must be counterclockwise (signed area > 0)");
  for (const auto* ch : {&beta, &v, &rho, &alpha}) {
    if (ch->size() != 0 && ch->size() != n)
      throw std::invalid_argument("MarkerCurve: channel length does not match marker count");
  }
}

Eigen::VectorXd parameterization_speed(const MarkerCurve& curve) {
  const int n = curve.size();
  Eigen::VectorXd speed(n);
  for (int i = 0; i < n; ++i) {
    const double prev = (curve.points.col(i) - curve.points.col(wrap(i - 1, n))).norm();
    const double next = (curve.points.col(wrap(i + 1, n)) - curve.points.col(i)).norm();
    speed[i] = 0.5 * (prev + next);
  }
  return speed;
}

Eigen::VectorXd marker_spacing(const MarkerCurve& curve) { return parameterization_speed(curve); }

double total_mass(const MarkerCurve& curve) {
  if (!curve.has_rho()) throw std::invalid_argument("total_mass: rho channel missing");
  return curve.rho.dot(marker_spacing(curve));
}

CurveFrame compute_frame(const MarkerCurve& curve) {
  curve.validate();
  const int n = curve.size();
  CurveFrame frame;
  frame.tangent.resize(2, n);
  frame.normal.resize(2, n);
  frame.kappa.resize(n);
  frame.arclength.resize(n);

  // Central differences in the parameter p with periodic wraparound.
  for (int i = 0; i < n; ++i) {
    Vec2 cp = 0.5 * (curve.points.col(wrap(i + 1, n)) - curve.points.col(wrap(i - 1, n)));
    const double speed = cp.norm();
    if (!(speed > 1e-12))
      throw std::invalid_argument("compute_frame: vanishing parameterization speed at marker " + std::to_string(i));
    Vec2 t = cp / speed;
    frame.tangent.col(i) = t;
    frame.normal.col(i) = Vec2(-t.y(), t.x());  // +90 deg, inward for CCW
  }

  frame.arclength[0] = 0;
  for (int i = 1; i < n; ++i)
    frame.arclength[i] = frame.arclength[i - 1] + (curve.points.col(i) - curve.points.col(i - 1)).norm();
  frame.length = frame.arclength[n - 1] + (curve.points.col(0) - curve.points.col(n - 1)).norm();

  // kappa = (dT/ds) . N from the discrete Frenet relation.
  for (int i = 0; i < n; ++i) {
    const int ip = wrap(i + 1, n), im = wrap(i - 1, n);
    double ds = (curve.points.col(ip) - curve.points.col(i)).norm() +
                (curve.points.col(i) - curve.points.col(im)).norm();
    Vec2 dT = frame.tangent.col(ip) - frame.tangent.col(im);
    frame.kappa[i] = dT.dot(frame.normal.col(i)) / ds;
  }
  return frame;
}

MarkerCurve resample_arclength(const MarkerCurve& curve, int n) {
  if (n < 8) throw std::invalid_argument("resample_arclength: n must be >= 8");
  curve.validate();
  const int m = curve.size();

  // Cumulative arclength over the closed polygon, including the closing edge.
  std::vector<double> s(m + 1);
  s[0] = 0;
  for (int i = 0; i < m; ++i)
    s[i + 1] = s[i] + (curve.points.col(wrap(i + 1, m)) - curve.points.col(i)).norm();
  const double L = s[m];

  const double mass_before = curve.has_rho() ? total_mass(curve) : 0.0;

  MarkerCurve out;
  out.points.resize(2, n);
  auto resample_channel = [&](const Eigen::VectorXd& ch, Eigen::VectorXd& dst, int col, double target,
                              int seg, double u) {
    if (ch.size() != m) return;
    if (dst.size() != n) dst.resize(n);
    (void)target;
    dst[col] = (1 - u) * ch[seg] + u * ch[wrap(seg + 1, m)];
  };

  int seg = 0;
  for (int j = 0; j < n; ++j) {
    const double target = L * j / n;
    while (seg + 1 < m && s[seg + 1] <= target) ++seg;
    const double u = (target - s[seg]) / (s[seg + 1] - s[seg]);
    out.points.col(j) =
        (1 - u) * curve.points.col(seg) + u * curve.points.col(wrap(seg + 1, m));
    resample_channel(curve.beta, out.beta, j, target, seg, u);
    resample_channel(curve.v, out.v, j, target, seg, u);
    resample_channel(curve.rho, out.rho, j, target, seg, u);
    resample_channel(curve.alpha, out.alpha, j, target, seg, u);
  }

  if (out.has_rho()) {
    const double mass_after = total_mass(out);
    if (mass_after > 0) out.rho *= mass_before / mass_after;
  }
  return out;
}

double verify_frame_evolution(const MarkerCurve& curve, const Eigen::VectorXd& alpha,
                              const Eigen::VectorXd& beta, double dt) {
  const CurveFrame frame = compute_frame(curve);
  const int n = curve.size();

  MarkerCurve moved = curve;
  for (int i = 0; i < n; ++i)
    moved.points.col(i) += dt * (alpha[i] * frame.tangent.col(i) + beta[i] * frame.normal.col(i));
  const CurveFrame after = compute_frame(moved);

  double worst = 0;
  for (int i = 0; i < n; ++i) {
    const int ip = wrap(i + 1, n), im = wrap(i - 1, n);
    const double ds = frame.arclength[ip] - frame.arclength[im] +
                      (ip < im ? frame.length : 0.0);  // wrap across s = 0
    const double beta_s = (beta[ip] - beta[im]) / ds;
    Vec2 lhs = (after.tangent.col(i) - frame.tangent.col(i)) / dt;
    Vec2 rhs = (beta_s + alpha[i] * frame.kappa[i]) * frame.normal.col(i);
    worst = std::max(worst, (lhs - rhs).norm());
  }
  return worst;
}

MarkerCurve make_circle(const Vec2& center, double radius, int n) {
  MarkerCurve c;
  c.points.resize(2, n);
  for (int i = 0; i < n; ++i) {
    const double th = 2 * std::numbers::pi * i / n;
    c.points.col(i) = center + radius * Vec2(std::cos(th), std::sin(th));
  }
  return c;
}

MarkerCurve make_ellipse(const Vec2& center, double a, double b, int n) {
  MarkerCurve c;
  c.points.resize(2, n);
  for (int i = 0; i < n; ++i) {
    const double th = 2 * std::numbers::pi * i / n;
    c.points.col(i) = center + Vec2(a * std::cos(th), b * std::sin(th));
  }
  return c;
}

MaskGrid rasterize_mask(const MarkerCurve& curve, int width, int height) {
  MaskGrid mask = MaskGrid::Constant(width, height, false);
  const int n = curve.size();
  std::vector<double> xs;
  for (int y = 0; y < height; ++y) {
    xs.clear();
    for (int i = 0; i < n; ++i) {
      const Vec2 a = curve.points.col(i);
      const Vec2 b = curve.points.col(wrap(i + 1, n));
      // half-open rule in y avoids double counting at vertices
      if ((a.y() <= y && b.y() > y) || (b.y() <= y && a.y() > y)) {
        const double u = (y - a.y()) / (b.y() - a.y());
        xs.push_back(a.x() + u * (b.x() - a.x()));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int x0 = std::max(0, static_cast<int>(std::ceil(xs[k])));
      const int x1 = std::min(width - 1, static_cast<int>(std::floor(xs[k + 1])));
      for (int x = x0; x <= x1; ++x) mask(x, y) = true;
    }
  }
  return mask;
}

namespace {

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0) return (p - a).norm();
  const double u = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + u * ab)).norm();
}

double directed_hausdorff(const MarkerCurve& from, const MarkerCurve& to) {
  const int n = from.size(), m = to.size();
  double worst = 0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      best = std::min(best, point_segment_distance(from.points.col(i), to.points.col(j),
                                                   to.points.col(wrap(j + 1, m))));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

double hausdorff_distance(const MarkerCurve& a, const MarkerCurve& b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

void write_curve_csv(const MarkerCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_curve_csv: cannot open " + path);
  const bool channels = curve.has_beta() && curve.has_v() && curve.has_rho();
  out.precision(17);
  out << (channels ? "x,y,beta,v,rho\n" : "x,y\n");
  for (int i = 0; i < curve.size(); ++i) {
    out << curve.points(0, i) << ',' << curve.points(1, i);
    if (channels) out << ',' << curve.beta[i] << ',' << curve.v[i] << ',' << curve.rho[i];
    out << '\n';
  }
}

MarkerCurve read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_curve_csv: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("read_curve_csv: empty file " + path);
  const bool channels = header.find("beta") != std::string::npos;

  std::vector<double> xs, ys, betas, vs, rhos;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 2) throw std::runtime_error("read_curve_csv: malformed row in " + path);
    xs.push_back(vals[0]);
    ys.push_back(vals[1]);
    if (channels) {
      if (vals.size() < 5) throw std::runtime_error("read_curve_csv: missing channel values in " + path);
      betas.push_back(vals[2]);
      vs.push_back(vals[3]);
      rhos.push_back(vals[4]);
    }
  }

  MarkerCurve curve;
  const int n = static_cast<int>(xs.size());
  curve.points.resize(2, n);
  for (int i = 0; i < n; ++i) curve.points.col(i) = Vec2(xs[i], ys[i]);
  if (channels) {
    curve.beta = Eigen::Map<Eigen::VectorXd>(betas.data(), n);
    curve.v = Eigen::Map<Eigen::VectorXd>(vs.data(), n);
    curve.rho = Eigen::Map<Eigen::VectorXd>(rhos.data(), n);
  }
  curve.validate();
  return curve;
}

}  // namespace acflow
