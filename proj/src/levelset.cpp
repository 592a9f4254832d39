#include "acflow/levelset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace acflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kQuotEps = 1e-8;  // regularizes grad psi / ||grad psi||

int clampi(int v, int lo, int hi) { return std::clamp(v, lo, hi); }

struct Gradients {
  GridField cx, cy;  // central
};

Gradients central_gradient(const GridField& f) {
  const int w = static_cast<int>(f.rows()), h = static_cast<int>(f.cols());
  Gradients g{GridField(w, h), GridField(w, h)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.cx(x, y) = 0.5 * (f(clampi(x + 1, 0, w - 1), y) - f(clampi(x - 1, 0, w - 1), y));
      g.cy(x, y) = 0.5 * (f(x, clampi(y + 1, 0, h - 1)) - f(x, clampi(y - 1, 0, h - 1)));
    }
  return g;
}

// One-sided derivative of f at (x, y) along axis, upwinded against speed w.
double upwind_deriv(const GridField& f, int x, int y, int axis, double w) {
  const int W = static_cast<int>(f.rows()), H = static_cast<int>(f.cols());
  if (axis == 0) {
    if (w > 0) return f(x, y) - f(clampi(x - 1, 0, W - 1), y);
    return f(clampi(x + 1, 0, W - 1), y) - f(x, y);
  }
  if (w > 0) return f(x, y) - f(x, clampi(y - 1, 0, H - 1));
  return f(x, clampi(y + 1, 0, H - 1)) - f(x, y);
}

void check_dims(const LevelSetField& f) {
  if (f.psi.rows() != f.width || f.psi.cols() != f.height)
    throw std::invalid_argument("LevelSetField: psi dimensions do not match width/height");
}

double smoothed_delta(double x, double eps) {
  if (std::abs(x) >= eps) return 0.0;
  return 0.5 / eps * (1.0 + std::cos(std::numbers::pi * x / eps));
}

}  // namespace

LevelSetField signed_distance_circle(int width, int height, double cx, double cy, double radius) {
  if (cx - radius < 0 || cy - radius < 0 || cx + radius > width - 1 || cy + radius > height - 1)
    throw std::invalid_argument("signed_distance_circle: circle outside grid");
  LevelSetField f{width, height, 1.0, GridField(width, height)};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      f.psi(x, y) = std::hypot(x - cx, y - cy) - radius;
  return f;
}

LevelSetField signed_distance_rectangle(int width, int height, double x0, double y0, double x1,
                                        double y1) {
  if (x0 >= x1 || y0 >= y1 || x0 < 0 || y0 < 0 || x1 > width - 1 || y1 > height - 1)
    throw std::invalid_argument("signed_distance_rectangle: rectangle outside grid");
  LevelSetField f{width, height, 1.0, GridField(width, height)};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dx = std::max(x0 - x, x - x1);
      const double dy = std::max(y0 - y, y - y1);
      if (dx > 0 || dy > 0)
        f.psi(x, y) = std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
      else
        f.psi(x, y) = std::max(dx, dy);
    }
  return f;
}

LevelSetField signed_distance_polyline(int width, int height, const MarkerCurve& curve) {
  curve.validate();
  const int n = curve.size();
  LevelSetField f{width, height, 1.0, GridField(width, height)};

  // Unsigned distance to the closed polyline.
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Vec2 p(x, y);
      double best = kInf;
      for (int i = 0; i < n; ++i) {
        const Vec2 a = curve.points.col(i);
        const Vec2 b = curve.points.col((i + 1) % n);
        const Vec2 ab = b - a;
        const double u = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        best = std::min(best, (p - (a + u * ab)).norm());
      }
      f.psi(x, y) = best;
    }

  // Sign from even-odd parity, negative inside.
  const MaskGrid inside = rasterize_mask(curve, width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (inside(x, y)) f.psi(x, y) = -f.psi(x, y);
  return f;
}

namespace {

// Fast sweeping on |d| with frozen cells fixed; solves |grad d| = 1.
void fast_sweep(GridField& d, const MaskGrid& frozen, double h) {
  const int w = static_cast<int>(d.rows()), hh = static_cast<int>(d.cols());
  auto update = [&](int x, int y) {
    if (frozen(x, y)) return;
    const double ax = std::min(x > 0 ? d(x - 1, y) : kInf, x < w - 1 ? d(x + 1, y) : kInf);
    const double ay = std::min(y > 0 ? d(x, y - 1) : kInf, y < hh - 1 ? d(x, y + 1) : kInf);
    const double a = std::min(ax, ay), b = std::max(ax, ay);
    if (a == kInf) return;
    double cand;
    if (b - a >= h)
      cand = a + h;
    else
      cand = 0.5 * (a + b + std::sqrt(2 * h * h - (b - a) * (b - a)));
    d(x, y) = std::min(d(x, y), cand);
  };
  for (int pass = 0; pass < 2; ++pass) {
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < w; ++x) update(x, y);
    for (int y = 0; y < hh; ++y)
      for (int x = w - 1; x >= 0; --x) update(x, y);
    for (int y = hh - 1; y >= 0; --y)
      for (int x = 0; x < w; ++x) update(x, y);
    for (int y = hh - 1; y >= 0; --y)
      for (int x = w - 1; x >= 0; --x) update(x, y);
  }
}

}  // namespace

LevelSetField reinitialize(const LevelSetField& field) {
  check_dims(field);
  const int w = field.width, h = field.height;
  const double gh = field.h;
  const GridField& psi = field.psi;

  // Interface cells: sign change with a 4-neighbour. Their distance is
  // pinned by linear interpolation along the crossing edges so the zero
  // set does not move.
  MaskGrid frozen = MaskGrid::Constant(w, h, false);
  GridField dist = GridField::Constant(w, h, kInf);
  bool any_crossing = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double pc = psi(x, y);
      double dmin_x = kInf, dmin_y = kInf;
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
        const double pn = psi(nx[k], ny[k]);
        if (pc == 0 || (pc > 0) != (pn > 0)) {
          const double denom = std::abs(pc - pn);
          const double dd = denom > 1e-300 ? gh * std::abs(pc) / denom : 0.0;
          if (k < 2)
            dmin_x = std::min(dmin_x, dd);
          else
            dmin_y = std::min(dmin_y, dd);
        }
      }
      if (dmin_x < kInf || dmin_y < kInf) {
        any_crossing = true;
        frozen(x, y) = true;
        if (dmin_x < kInf && dmin_y < kInf)
          dist(x, y) = dmin_x * dmin_y / std::hypot(dmin_x, dmin_y);
        else
          dist(x, y) = std::min(dmin_x, dmin_y);
      }
    }
  if (!any_crossing) throw std::runtime_error("reinitialize: field has no zero crossing");

  fast_sweep(dist, frozen, gh);

  LevelSetField out = field;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.psi(x, y) = psi(x, y) < 0 ? -dist(x, y) : dist(x, y);
  return out;
}

GridField upwind_grad_norm(const GridField& psi, const GridField& speed) {
  const int w = static_cast<int>(psi.rows()), h = static_cast<int>(psi.cols());
  GridField out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dxm = x > 0 ? psi(x, y) - psi(x - 1, y) : 0.0;
      const double dxp = x < w - 1 ? psi(x + 1, y) - psi(x, y) : 0.0;
      const double dym = y > 0 ? psi(x, y) - psi(x, y - 1) : 0.0;
      const double dyp = y < h - 1 ? psi(x, y + 1) - psi(x, y) : 0.0;
      double gx2, gy2;
      if (speed(x, y) > 0) {
        // psi grows: information flows down-gradient
        gx2 = std::max(std::max(-dxm, 0.0), std::max(dxp, 0.0));
        gy2 = std::max(std::max(-dym, 0.0), std::max(dyp, 0.0));
      } else {
        gx2 = std::max(std::max(dxm, 0.0), std::max(-dxp, 0.0));
        gy2 = std::max(std::max(dym, 0.0), std::max(-dyp, 0.0));
      }
      out(x, y) = std::hypot(gx2, gy2);
    }
  return out;
}

GridField extend_field(const LevelSetField& psi_field, const GridField& q) {
  check_dims(psi_field);
  const int w = psi_field.width, h = psi_field.height;
  const GridField& psi = psi_field.psi;

  // Cells adjacent to the interface keep their values; everything else is
  // rebuilt outward in increasing |psi| from the two neighbours closer to
  // the interface, weighted by the |psi| drop (first-order transport
  // solution of grad q . grad psi = 0).
  MaskGrid fixed = MaskGrid::Constant(w, h, false);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool pc = psi(x, y) > 0;
      if ((x > 0 && (psi(x - 1, y) > 0) != pc) || (x < w - 1 && (psi(x + 1, y) > 0) != pc) ||
          (y > 0 && (psi(x, y - 1) > 0) != pc) || (y < h - 1 && (psi(x, y + 1) > 0) != pc))
        fixed(x, y) = true;
    }

  std::vector<int> order(static_cast<size_t>(w) * h);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(psi.data()[a]) < std::abs(psi.data()[b]);
  });

  GridField out = q;
  for (int idx : order) {
    const int x = idx % w, y = idx / w;
    if (fixed(x, y)) continue;
    const double ac = std::abs(psi(x, y));
    double wx = 0, wy = 0, qx = 0, qy = 0;
    const int xm = clampi(x - 1, 0, w - 1), xp = clampi(x + 1, 0, w - 1);
    const int ym = clampi(y - 1, 0, h - 1), yp = clampi(y + 1, 0, h - 1);
    const int bx = std::abs(psi(xm, y)) < std::abs(psi(xp, y)) ? xm : xp;
    const int by = std::abs(psi(x, ym)) < std::abs(psi(x, yp)) ? ym : yp;
    if (std::abs(psi(bx, y)) < ac) {
      wx = ac - std::abs(psi(bx, y));
      qx = out(bx, y);
    }
    if (std::abs(psi(x, by)) < ac) {
      wy = ac - std::abs(psi(x, by));
      qy = out(x, by);
    }
    if (wx + wy > 0) out(x, y) = (wx * qx + wy * qy) / (wx + wy);
  }
  return out;
}

GridVectorField extend_field(const LevelSetField& psi, const GridVectorField& q) {
  return {extend_field(psi, q.x), extend_field(psi, q.y)};
}

GridField grid_curvature(const LevelSetField& field) {
  check_dims(field);
  const int w = field.width, h = field.height;
  const Gradients g = central_gradient(field.psi);
  GridField nx(w, h), ny(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double norm = std::sqrt(g.cx(x, y) * g.cx(x, y) + g.cy(x, y) * g.cy(x, y) +
                                    kQuotEps * kQuotEps);
      nx(x, y) = g.cx(x, y) / norm;
      ny(x, y) = g.cy(x, y) / norm;
    }
  const Gradients gnx = central_gradient(nx);
  const Gradients gny = central_gradient(ny);
  const double cap = 2.0 / field.h;
  GridField kappa(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      kappa(x, y) = std::clamp((gnx.cx(x, y) + gny.cy(x, y)) / field.h, -cap, cap);
  return kappa;
}

ExtendedState gradient_ls_step(ExtendedState state, const GridField& f_hat, double dt) {
  check_dims(state.psi);
  const GridField grad = upwind_grad_norm(state.psi.psi, f_hat);
  state.psi.psi += dt * f_hat * grad;
  state.t += dt;
  ++state.step;
  return state;
}

namespace {

double ls_dt(const FlowConfig& cfg, double t, double h, double max_speed) {
  double dt = cfg.dt_max;
  dt = std::min(dt, cfg.cfl * h / (max_speed + 1e-12));
  if (cfg.tau_diff > 0) dt = std::min(dt, cfg.cfl * h * h / (2 * cfg.tau_diff));
  if (t > 0) dt = std::min(dt, cfg.cfl * t / (cfg.k + 1));
  if (dt < 1e-12) throw std::runtime_error("level-set step: dt underflow, evolution blew up");
  return dt;
}

}  // namespace

ExtendedState accel_const_ls_step(ExtendedState state, const GridField& f_hat,
                                  const FlowConfig& cfg) {
  cfg.validate();
  check_dims(state.psi);
  const int w = state.psi.width, h = state.psi.height;
  const double gh = state.psi.h;
  if (state.beta_hat.rows() != w) state.beta_hat = GridField::Zero(w, h);

  const double max_speed = state.beta_hat.abs().maxCoeff();
  const double dt = ls_dt(cfg, state.t, gh, max_speed);
  const double t_eff = state.t > 0 ? state.t : dt;
  const double coef = cfg.lambda_action * cfg.k * cfg.k * std::pow(t_eff, cfg.k - 2);

  const Gradients g = central_gradient(state.psi.psi);
  const GridField& b = state.beta_hat;

  // Flux F = beta^2/2 * grad psi / ||grad psi||_reg; the divergence is
  // taken with central differences of the flux itself so the momentum
  // transport term stays in conservation form.
  GridField Fx(w, h), Fy(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double norm = std::sqrt(g.cx(x, y) * g.cx(x, y) + g.cy(x, y) * g.cy(x, y) +
                                    kQuotEps * kQuotEps);
      Fx(x, y) = 0.5 * b(x, y) * b(x, y) * g.cx(x, y) / norm;
      Fy(x, y) = 0.5 * b(x, y) * b(x, y) * g.cy(x, y) / norm;
    }
  const Gradients gFx = central_gradient(Fx);
  const Gradients gFy = central_gradient(Fy);

  GridField beta_new(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double div = (gFx.cx(x, y) + gFy.cy(x, y)) / gh;
      beta_new(x, y) = b(x, y) + dt * (coef / cfg.rho0 * f_hat(x, y) + div -
                                       (cfg.k + 1) / t_eff * b(x, y));
    }
  state.beta_hat = beta_new;

  const GridField grad = upwind_grad_norm(state.psi.psi, state.beta_hat);
  state.psi.psi += dt * state.beta_hat * grad;

  state.t = t_eff + dt;
  ++state.step;
  if (cfg.reinit_every > 0 && state.step % cfg.reinit_every == 0) {
    state.psi = reinitialize(state.psi);
    state.beta_hat = extend_field(state.psi, state.beta_hat);
  }
  return state;
}

ExtendedState accel_flowable_ls_step(ExtendedState state, const GridField& f_hat,
                                     const FlowConfig& cfg) {
  cfg.validate();
  check_dims(state.psi);
  const int w = state.psi.width, h = state.psi.height;
  const double gh = state.psi.h;
  if (state.V_hat.x.rows() != w) {
    state.V_hat = {GridField::Zero(w, h), GridField::Zero(w, h)};
  }
  if (state.rho_hat.rows() != w) state.rho_hat = GridField::Constant(w, h, cfg.rho0);

  double max_speed = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      max_speed = std::max(max_speed, std::hypot(state.V_hat.x(x, y), state.V_hat.y(x, y)));
  const double dt = ls_dt(cfg, state.t, gh, max_speed);
  const double t_eff = state.t > 0 ? state.t : dt;
  const double coef = cfg.lambda_action * cfg.k * cfg.k * std::pow(t_eff, cfg.k - 2);

  const Gradients g = central_gradient(state.psi.psi);
  GridField nhx(w, h), nhy(w, h);  // inward normal extension N = -grad psi/||.||
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double norm = std::sqrt(g.cx(x, y) * g.cx(x, y) + g.cy(x, y) * g.cy(x, y) +
                                    kQuotEps * kQuotEps);
      nhx(x, y) = -g.cx(x, y) / norm;
      nhy(x, y) = -g.cy(x, y) / norm;
    }

  const GridField& Vx = state.V_hat.x;
  const GridField& Vy = state.V_hat.y;
  const Gradients gVx = central_gradient(Vx);
  const Gradients gVy = central_gradient(Vy);
  const Gradients grho = central_gradient(state.rho_hat);

  GridField Vx_new(w, h), Vy_new(w, h), rho_new(w, h), beta(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double ux = Vx(x, y), uy = Vy(x, y);
      const double tx = nhy(x, y), ty = -nhx(x, y);  // T = rot(N, -90)
      // The advection is purely tangential, -(V.T) dV/ds; normal
      // attachment is handled by the extension at each reinit. The
      // directional derivative along T is upwinded against V.T.
      const double vt = ux * tx + uy * ty;
      const double advx = vt *
                          (tx * upwind_deriv(Vx, x, y, 0, vt * tx) +
                           ty * upwind_deriv(Vx, x, y, 1, vt * ty)) /
                          gh;
      const double advy = vt *
                          (tx * upwind_deriv(Vy, x, y, 0, vt * tx) +
                           ty * upwind_deriv(Vy, x, y, 1, vt * ty)) /
                          gh;
      double diffx = 0, diffy = 0;
      if (cfg.tau_diff > 0) {
        const int xm = clampi(x - 1, 0, w - 1), xp = clampi(x + 1, 0, w - 1);
        const int ym = clampi(y - 1, 0, h - 1), yp = clampi(y + 1, 0, h - 1);
        diffx = cfg.tau_diff *
                (Vx(xm, y) + Vx(xp, y) + Vx(x, ym) + Vx(x, yp) - 4 * ux) / (gh * gh);
        diffy = cfg.tau_diff *
                (Vy(xm, y) + Vy(xp, y) + Vy(x, ym) + Vy(x, yp) - 4 * uy) / (gh * gh);
      }
      Vx_new(x, y) = ux + dt * (coef / state.rho_hat(x, y) * f_hat(x, y) * nhx(x, y) - advx -
                                (cfg.k + 1) / t_eff * ux + diffx);
      Vy_new(x, y) = uy + dt * (coef / state.rho_hat(x, y) * f_hat(x, y) * nhy(x, y) - advy -
                                (cfg.k + 1) / t_eff * uy + diffy);

      // rho: tangential advection plus the stretch source -rho (T . grad V) . T.
      const double adv_rho = vt *
                             (tx * upwind_deriv(state.rho_hat, x, y, 0, vt * tx) +
                              ty * upwind_deriv(state.rho_hat, x, y, 1, vt * ty)) /
                             gh;
      const double stretch = (tx * (tx * gVx.cx(x, y) + ty * gVx.cy(x, y)) +
                              ty * (tx * gVy.cx(x, y) + ty * gVy.cy(x, y))) /
                             gh;
      rho_new(x, y) = state.rho_hat(x, y) + dt * (-adv_rho - state.rho_hat(x, y) * stretch);

      beta(x, y) = Vx_new(x, y) * nhx(x, y) + Vy_new(x, y) * nhy(x, y);
    }
  state.V_hat.x = Vx_new;
  state.V_hat.y = Vy_new;
  state.rho_hat = rho_new;

  const GridField grad = upwind_grad_norm(state.psi.psi, beta);
  state.psi.psi += dt * beta * grad;

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::abs(state.psi.psi(x, y)) < 5 * gh && !(state.rho_hat(x, y) > 0))
        throw std::runtime_error("accel_flowable_ls_step: density positivity breached on band");

  state.t = t_eff + dt;
  ++state.step;
  if (cfg.reinit_every > 0 && state.step % cfg.reinit_every == 0) {
    state.psi = reinitialize(state.psi);
    state.V_hat = extend_field(state.psi, state.V_hat);
    state.rho_hat = extend_field(state.psi, state.rho_hat);
  }
  return state;
}

namespace {

struct EdgeKey {
  int x, y, axis;  // axis 0: edge (x,y)-(x+1,y); axis 1: edge (x,y)-(x,y+1)
  bool operator<(const EdgeKey& o) const {
    return std::tie(x, y, axis) < std::tie(o.x, o.y, o.axis);
  }
};

}  // namespace

std::vector<MarkerCurve> extract_contours(const LevelSetField& field) {
  check_dims(field);
  const int w = field.width, h = field.height;
  auto val = [&](int x, int y) {
    const double p = field.psi(x, y);
    return p == 0 ? 1e-12 : p;  // nudge exact zeros off the grid nodes
  };
  auto interp = [&](int x0, int y0, int x1, int y1) {
    const double a = val(x0, y0), b = val(x1, y1);
    const double u = a / (a - b);
    return Vec2(x0 + u * (x1 - x0), y0 + u * (y1 - y0));
  };

  // Marching squares: collect crossing points per cell edge, then the
  // segments each cell contributes as pairs of edge keys.
  std::map<EdgeKey, int> node_of;
  std::vector<Vec2> nodes;
  auto node = [&](EdgeKey k) {
    auto it = node_of.find(k);
    if (it != node_of.end()) return it->second;
    Vec2 p = k.axis == 0 ? interp(k.x, k.y, k.x + 1, k.y) : interp(k.x, k.y, k.x, k.y + 1);
    node_of[k] = static_cast<int>(nodes.size());
    nodes.push_back(p);
    return static_cast<int>(nodes.size()) - 1;
  };

  std::vector<std::array<int, 2>> adjacency;  // filled after nodes are known
  std::vector<std::pair<int, int>> segments;
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      const bool b00 = val(x, y) < 0, b10 = val(x + 1, y) < 0;
      const bool b01 = val(x, y + 1) < 0, b11 = val(x + 1, y + 1) < 0;
      const int code = (b00 ? 1 : 0) | (b10 ? 2 : 0) | (b11 ? 4 : 0) | (b01 ? 8 : 0);
      if (code == 0 || code == 15) continue;
      const EdgeKey bottom{x, y, 0}, top{x, y + 1, 0}, left{x, y, 1}, right{x + 1, y, 1};
      auto add = [&](EdgeKey a, EdgeKey b2) { segments.emplace_back(node(a), node(b2)); };
      switch (code) {
        case 1: case 14: add(bottom, left); break;
        case 2: case 13: add(bottom, right); break;
        case 4: case 11: add(right, top); break;
        case 8: case 7: add(left, top); break;
        case 3: case 12: add(left, right); break;
        case 6: case 9: add(bottom, top); break;
        case 5: case 10: {
          // saddle: disambiguate with the cell-centre average
          const double centre = 0.25 * (val(x, y) + val(x + 1, y) + val(x, y + 1) +
                                        val(x + 1, y + 1));
          const bool centre_in = centre < 0;
          const bool diag = (code == 5) == centre_in;
          if (diag) {
            add(bottom, right);
            add(left, top);
          } else {
            add(bottom, left);
            add(right, top);
          }
          break;
        }
      }
    }
  if (segments.empty()) throw std::runtime_error("extract_contour: no zero crossing");

  adjacency.assign(nodes.size(), {-1, -1});
  for (const auto& [a, b] : segments) {
    auto attach = [&](int from, int to) {
      if (adjacency[from][0] < 0)
        adjacency[from][0] = to;
      else if (adjacency[from][1] < 0)
        adjacency[from][1] = to;
    };
    attach(a, b);
    attach(b, a);
  }

  std::vector<MarkerCurve> curves;
  std::vector<bool> visited(nodes.size(), false);
  for (size_t start = 0; start < nodes.size(); ++start) {
    if (visited[start] || adjacency[start][1] < 0) continue;  // open chains dropped
    std::vector<int> loop;
    int prev = -1, cur = static_cast<int>(start);
    while (true) {
      visited[cur] = true;
      loop.push_back(cur);
      const int next = adjacency[cur][0] == prev ? adjacency[cur][1] : adjacency[cur][0];
      if (next < 0) break;
      prev = cur;
      cur = next;
      if (cur == static_cast<int>(start)) break;
    }
    if (cur != static_cast<int>(start)) continue;  // not a closed loop

    MarkerCurve curve;
    std::vector<Vec2> pts;
    for (int id : loop) {
      if (!pts.empty() && (nodes[id] - pts.back()).norm() < 1e-9) continue;
      pts.push_back(nodes[id]);
    }
    while (pts.size() > 1 && (pts.front() - pts.back()).norm() < 1e-9) pts.pop_back();
    if (pts.size() < 8) continue;
    curve.points.resize(2, static_cast<int>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i) curve.points.col(static_cast<int>(i)) = pts[i];
    if (curve.signed_area() < 0) curve.points.rowwise().reverseInPlace();
    curves.push_back(std::move(curve));
  }
  if (curves.empty()) throw std::runtime_error("extract_contour: no closed contour of >= 8 markers");

  std::sort(curves.begin(), curves.end(), [](const MarkerCurve& a, const MarkerCurve& b) {
    return std::abs(a.signed_area()) > std::abs(b.signed_area());
  });
  return curves;
}

MarkerCurve extract_contour(const LevelSetField& field) { return extract_contours(field).front(); }

ExtendedState make_extended_state(LevelSetField psi, MassModel model, const FlowConfig& cfg) {
  ExtendedState state;
  const int w = psi.width, h = psi.height;
  state.psi = std::move(psi);
  state.t = cfg.t0;
  if (model == MassModel::Constant) {
    state.beta_hat = GridField::Zero(w, h);
  } else {
    state.V_hat = {GridField::Zero(w, h), GridField::Zero(w, h)};
    state.rho_hat = GridField::Constant(w, h, cfg.rho0);
  }
  return state;
}

double delta_band_mass(const ExtendedState& state) {
  check_dims(state.psi);
  const int w = state.psi.width, h = state.psi.height;
  const double eps = 1.5 * state.psi.h;
  const Gradients g = central_gradient(state.psi.psi);
  double mass = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = smoothed_delta(state.psi.psi(x, y), eps);
      if (d == 0) continue;
      mass += state.rho_hat(x, y) * d * std::hypot(g.cx(x, y), g.cy(x, y));
    }
  return mass * state.psi.h * state.psi.h;
}

double delta_contour_length(const LevelSetField& field) {
  check_dims(field);
  const double eps = 1.5 * field.h;
  const Gradients g = central_gradient(field.psi);
  double len = 0;
  for (int y = 0; y < field.height; ++y)
    for (int x = 0; x < field.width; ++x) {
      const double d = smoothed_delta(field.psi(x, y), eps);
      if (d == 0) continue;
      len += d * std::hypot(g.cx(x, y), g.cy(x, y));
    }
  return len * field.h * field.h;
}

LsRunResult run_flow_ls(const LevelSetField& initial, const ImageGrid& image, LsMethod method,
                        const FlowConfig& cfg) {
  cfg.validate();
  image.validate();
  if (initial.width != image.width || initial.height != image.height)
    throw std::invalid_argument("run_flow_ls: field and image dimensions differ");

  LsRunResult result;
  result.state = make_extended_state(
      initial, method == LsMethod::AccelFlowable ? MassModel::Flowable : MassModel::Constant, cfg);
  ExtendedState& state = result.state;

  int stagnant = 0;
  for (int step = 0; step < cfg.max_steps; ++step) {
    MaskGrid mask(image.width, image.height);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) mask(x, y) = state.psi.psi(x, y) < 0;
    auto [c1, c2] = region_means(image, mask);
    const GridField kappa =
        cfg.alpha_len != 0 ? grid_curvature(state.psi) : GridField::Zero(image.width, image.height);
    const GridField f_hat = chan_vese_force_grid(image, kappa, c1, c2, cfg.alpha_len);

    const GridField before = state.psi.psi;
    const double t_before = state.t;
    switch (method) {
      case LsMethod::Gradient: {
        const double dt =
            std::min(cfg.dt_max, cfg.cfl * state.psi.h / (f_hat.abs().maxCoeff() + 1e-12));
        state = gradient_ls_step(std::move(state), f_hat, dt);
        if (cfg.reinit_every > 0 && state.step % cfg.reinit_every == 0)
          state.psi = reinitialize(state.psi);
        break;
      }
      case LsMethod::AccelConst:
        state = accel_const_ls_step(std::move(state), f_hat, cfg);
        break;
      case LsMethod::AccelFlowable:
        state = accel_flowable_ls_step(std::move(state), f_hat, cfg);
        break;
    }

    RunRecord rec;
    rec.step = state.step;
    rec.t = state.t;
    rec.dt = state.t - t_before;
    if (rec.dt <= 0) rec.dt = state.t;
    MaskGrid mask_after(image.width, image.height);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) mask_after(x, y) = state.psi.psi(x, y) < 0;
    const double length = delta_contour_length(state.psi);
    rec.energy = chan_vese_energy(image, mask_after, cfg.alpha_len, length);
    rec.length = length;
    rec.mass = method == LsMethod::AccelFlowable ? delta_band_mass(state) : 0.0;
    if (method == LsMethod::Gradient)
      rec.max_speed = f_hat.abs().maxCoeff();
    else if (method == LsMethod::AccelConst)
      rec.max_speed = state.beta_hat.abs().maxCoeff();
    else
      rec.max_speed =
          std::sqrt((state.V_hat.x.square() + state.V_hat.y.square()).maxCoeff());
    result.log.records.push_back(rec);

    if ((state.psi.psi - before).abs().maxCoeff() < 1e-6) {
      if (++stagnant >= 50) break;
    } else {
      stagnant = 0;
    }
  }
  return result;
}

void write_lsf(const LevelSetField& field, long step, const std::string& path) {
  check_dims(field);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_lsf: cannot open " + path);
  const char magic[4] = {'L', 'S', 'F', '1'};
  out.write(magic, 4);
  const std::uint32_t wh[3] = {static_cast<std::uint32_t>(field.width),
                               static_cast<std::uint32_t>(field.height),
                               static_cast<std::uint32_t>(step)};
  out.write(reinterpret_cast<const char*>(wh), 12);
  std::vector<float> row(field.width);
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) row[x] = static_cast<float>(field.psi(x, y));
    out.write(reinterpret_cast<const char*>(row.data()), sizeof(float) * row.size());
  }
}

LevelSetField read_lsf(const std::string& path, long* step) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_lsf: cannot open " + path);
  char magic[4];
  std::uint32_t wh[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(wh), 12);
  if (!in || std::memcmp(magic, "LSF1", 4) != 0)
    throw std::runtime_error("read_lsf: bad magic in " + path);
  LevelSetField field{static_cast<int>(wh[0]), static_cast<int>(wh[1]), 1.0,
                      GridField(static_cast<int>(wh[0]), static_cast<int>(wh[1]))};
  if (step) *step = wh[2];
  std::vector<float> row(field.width);
  for (int y = 0; y < field.height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), sizeof(float) * row.size());
    if (!in) throw std::runtime_error("read_lsf: truncated payload in " + path);
    for (int x = 0; x < field.width; ++x) field.psi(x, y) = row[x];
  }
  return field;
}

void write_psi_preview_pgm(const LevelSetField& field, const std::string& path) {
  check_dims(field);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_psi_preview_pgm: cannot open " + path);
  out << "P5\n" << field.width << ' ' << field.height << "\n255\n";
  const double lim = 10 * field.h;
  for (int y = 0; y < field.height; ++y)
    for (int x = 0; x < field.width; ++x) {
      const double v = std::clamp(field.psi(x, y), -lim, lim);
      out.put(static_cast<char>(static_cast<int>(std::lround((v + lim) / (2 * lim) * 255))));
    }
}

}  // namespace acflow
