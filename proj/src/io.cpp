#include "acflow/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace acflow {

using nlohmann::json;

void SceneSpec::validate() const {
  if (kind != "noisy-square" && kind != "noisy-rectangle" && kind != "disk" && kind != "custom")
    throw std::invalid_argument("SceneSpec: unknown kind '" + kind + "'");
  if (size < 64) throw std::invalid_argument("SceneSpec: size must be >= 64");
  if (noise_std < 0) throw std::invalid_argument("SceneSpec: noise-std must be >= 0");
}

ImageGrid generate_scene(const SceneSpec& spec) {
  spec.validate();
  const int n = spec.size;
  const double fg = std::clamp(spec.contrast, 0.0, 1.0);
  ImageGrid image{n, n, GridField::Zero(n, n)};

  if (spec.kind == "noisy-square") {
    const int lo = n / 4, hi = 3 * n / 4;
    for (int y = lo; y < hi; ++y)
      for (int x = lo; x < hi; ++x) image.intensity(x, y) = fg;
  } else if (spec.kind == "noisy-rectangle") {
    const int x0 = static_cast<int>(0.15 * n), x1 = static_cast<int>(0.85 * n);
    const int y0 = static_cast<int>(0.35 * n), y1 = static_cast<int>(0.65 * n);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) image.intensity(x, y) = fg;
  } else if (spec.kind == "disk") {
    const double c = 0.5 * (n - 1), r = n / 4.0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (std::hypot(x - c, y - c) <= r) image.intensity(x, y) = fg;
  } else {  // custom: flat mid-gray canvas, noise only
    image.intensity.setConstant(0.5 * fg);
  }

  if (spec.noise_std > 0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        image.intensity(x, y) = std::clamp(image.intensity(x, y) + noise(rng), 0.0, 1.0);
  }
  return image;
}

namespace {

// Reads the next PGM header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw std::runtime_error("read_pgm: truncated header in " + path);
  return tok;
}

}  // namespace

ImageGrid read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
  const std::string magic = pgm_token(in, path);
  if (magic != "P2" && magic != "P5")
    throw std::runtime_error("read_pgm: " + path + " is not P2/P5 (magic '" + magic + "')");
  int width, height, maxval;
  try {
    width = std::stoi(pgm_token(in, path));
    height = std::stoi(pgm_token(in, path));
    maxval = std::stoi(pgm_token(in, path));
  } catch (const std::exception&) {
    throw std::runtime_error("read_pgm: malformed header in " + path);
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw std::runtime_error("read_pgm: bad dimensions/maxval in " + path);

  ImageGrid image{width, height, GridField(width, height)};
  if (magic == "P5") {
    const int bytes_per = maxval > 255 ? 2 : 1;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        unsigned char buf[2];
        in.read(reinterpret_cast<char*>(buf), bytes_per);
        if (!in) {
          std::ostringstream os;
          os << "read_pgm: truncated payload in " << path << " at byte offset " << in.tellg()
             << " (pixel " << x << "," << y << ")";
          throw std::runtime_error(os.str());
        }
        const int v = bytes_per == 2 ? (buf[0] << 8) | buf[1] : buf[0];
        image.intensity(x, y) = static_cast<double>(v) / maxval;
      }
  } else {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        int v;
        if (!(in >> v)) {
          std::ostringstream os;
          os << "read_pgm: truncated P2 payload in " << path << " near byte offset " << in.tellg()
             << " (pixel " << x << "," << y << ")";
          throw std::runtime_error(os.str());
        }
        image.intensity(x, y) = static_cast<double>(v) / maxval;
      }
  }
  return image;
}

void write_pgm(const ImageGrid& image, const std::string& path, bool binary) {
  image.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << (binary ? "P5" : "P2") << "\n" << image.width << ' ' << image.height << "\n255\n";
  int col = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const int v = static_cast<int>(
          std::lround(std::clamp(image.intensity(x, y), 0.0, 1.0) * 255.0));
      if (binary) {
        out.put(static_cast<char>(v));
      } else {
        out << v << (++col % 16 == 0 ? '\n' : ' ');
      }
    }
  if (!binary && col % 16 != 0) out << '\n';
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

void export_contour_svg(const std::vector<MarkerCurve>& curves, const ImageGrid* image,
                        const std::string& path) {
  int width = 0, height = 0;
  if (image) {
    width = image->width;
    height = image->height;
  } else {
    for (const auto& c : curves) {
      width = std::max(width, static_cast<int>(std::ceil(c.points.row(0).maxCoeff())) + 2);
      height = std::max(height, static_cast<int>(std::ceil(c.points.row(1).maxCoeff())) + 2);
    }
    width = std::max(width, 1);
    height = std::max(height, 1);
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_contour_svg: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";

  if (image) {
    // Grayscale background as run-length encoded unit-height rects.
    for (int y = 0; y < height; ++y) {
      int x = 0;
      while (x < width) {
        const int v = static_cast<int>(
            std::lround(std::clamp(image->intensity(x, y), 0.0, 1.0) * 255.0));
        int run = 1;
        while (x + run < width &&
               static_cast<int>(std::lround(
                   std::clamp(image->intensity(x + run, y), 0.0, 1.0) * 255.0)) == v)
          ++run;
        char color[8];
        std::snprintf(color, sizeof color, "#%02x%02x%02x", v, v, v);
        out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << run
            << "\" height=\"1\" fill=\"" << color << "\"/>\n";
        x += run;
      }
    }
  }

  const char* palette[] = {"#e41a1c", "#377eb8", "#4daf4a", "#ff7f00", "#984ea3"};
  for (size_t k = 0; k < curves.size(); ++k) {
    out << "<polyline fill=\"none\" stroke=\"" << palette[k % 5]
        << "\" stroke-width=\"1\" points=\"";
    const auto& pts = curves[k].points;
    for (int i = 0; i < pts.cols(); ++i) {
      if (i) out << ' ';
      out << pts(0, i) << ',' << pts(1, i);
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("export_contour_svg: write failed for " + path);
}

void RunConfig::validate() const {
  scene.validate();
  flow.validate();
  if (method != "gradient" && method != "sobolev" && method != "accel-const" &&
      method != "accel-flowable")
    throw std::invalid_argument("RunConfig: unknown method '" + method + "'");
  if (backend != "parametric" && backend != "levelset")
    throw std::invalid_argument("RunConfig: unknown backend '" + backend + "'");
  if (energy != "chan-vese" && energy != "geodesic")
    throw std::invalid_argument("RunConfig: unknown energy '" + energy + "'");
  if (method == "sobolev" && backend != "parametric")
    throw std::invalid_argument("RunConfig: sobolev is parametric-only");
  if (energy == "geodesic" && backend != "parametric")
    throw std::invalid_argument("RunConfig: geodesic energy is parametric-only");
  if (init.shape != "circle" && init.shape != "rectangle")
    throw std::invalid_argument("RunConfig: unknown init shape '" + init.shape + "'");
  if (init.markers < 8) throw std::invalid_argument("RunConfig: init markers must be >= 8");
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(keys.begin(), keys.end(),
                     [&](const char* k) { return it.key() == k; }) == keys.end())
      throw std::invalid_argument("RunConfig: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig read_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("read_run_config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("read_run_config: " + path + ": " + e.what());
  }

  RunConfig cfg;
  reject_unknown(j, {"input", "scene", "method", "backend", "energy", "flow", "init", "outputs"},
                 "top level");
  maybe(j, "input", cfg.input);
  maybe(j, "method", cfg.method);
  maybe(j, "backend", cfg.backend);
  maybe(j, "energy", cfg.energy);
  maybe(j, "outputs", cfg.outputs);
  if (j.contains("scene")) {
    const json& s = j["scene"];
    reject_unknown(s, {"kind", "size", "contrast", "noise_std", "seed"}, "scene");
    maybe(s, "kind", cfg.scene.kind);
    maybe(s, "size", cfg.scene.size);
    maybe(s, "contrast", cfg.scene.contrast);
    maybe(s, "noise_std", cfg.scene.noise_std);
    maybe(s, "seed", cfg.scene.seed);
  }
  if (j.contains("flow")) {
    const json& f = j["flow"];
    reject_unknown(f,
                   {"k", "lambda_action", "rho0", "g", "tau_diff", "tau_noise", "cfl", "t0",
                    "alpha_len", "sobolev_lambda", "dt_max", "max_steps", "reinit_every", "seed"},
                   "flow");
    maybe(f, "k", cfg.flow.k);
    maybe(f, "lambda_action", cfg.flow.lambda_action);
    maybe(f, "rho0", cfg.flow.rho0);
    maybe(f, "g", cfg.flow.g);
    maybe(f, "tau_diff", cfg.flow.tau_diff);
    maybe(f, "tau_noise", cfg.flow.tau_noise);
    maybe(f, "cfl", cfg.flow.cfl);
    maybe(f, "t0", cfg.flow.t0);
    maybe(f, "alpha_len", cfg.flow.alpha_len);
    maybe(f, "sobolev_lambda", cfg.flow.sobolev_lambda);
    maybe(f, "dt_max", cfg.flow.dt_max);
    maybe(f, "max_steps", cfg.flow.max_steps);
    maybe(f, "reinit_every", cfg.flow.reinit_every);
    maybe(f, "seed", cfg.flow.seed);
  }
  if (j.contains("init")) {
    const json& i = j["init"];
    reject_unknown(i, {"shape", "cx", "cy", "radius", "x0", "y0", "x1", "y1", "markers"}, "init");
    maybe(i, "shape", cfg.init.shape);
    maybe(i, "cx", cfg.init.cx);
    maybe(i, "cy", cfg.init.cy);
    maybe(i, "radius", cfg.init.radius);
    maybe(i, "x0", cfg.init.x0);
    maybe(i, "y0", cfg.init.y0);
    maybe(i, "x1", cfg.init.x1);
    maybe(i, "y1", cfg.init.y1);
    maybe(i, "markers", cfg.init.markers);
  }
  cfg.validate();
  return cfg;
}

void write_run_config(const RunConfig& cfg, const std::string& path) {
  json j;
  j["input"] = cfg.input;
  j["scene"] = {{"kind", cfg.scene.kind},
                {"size", cfg.scene.size},
                {"contrast", cfg.scene.contrast},
                {"noise_std", cfg.scene.noise_std},
                {"seed", cfg.scene.seed}};
  j["method"] = cfg.method;
  j["backend"] = cfg.backend;
  j["energy"] = cfg.energy;
  j["flow"] = {{"k", cfg.flow.k},
               {"lambda_action", cfg.flow.lambda_action},
               {"rho0", cfg.flow.rho0},
               {"g", cfg.flow.g},
               {"tau_diff", cfg.flow.tau_diff},
               {"tau_noise", cfg.flow.tau_noise},
               {"cfl", cfg.flow.cfl},
               {"t0", cfg.flow.t0},
               {"alpha_len", cfg.flow.alpha_len},
               {"sobolev_lambda", cfg.flow.sobolev_lambda},
               {"dt_max", cfg.flow.dt_max},
               {"max_steps", cfg.flow.max_steps},
               {"reinit_every", cfg.flow.reinit_every},
               {"seed", cfg.flow.seed}};
  j["init"] = {{"shape", cfg.init.shape}, {"cx", cfg.init.cx},     {"cy", cfg.init.cy},
               {"radius", cfg.init.radius}, {"x0", cfg.init.x0},   {"y0", cfg.init.y0},
               {"x1", cfg.init.x1},       {"y1", cfg.init.y1},     {"markers", cfg.init.markers}};
  j["outputs"] = cfg.outputs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_run_config: cannot open " + path);
  out << j.dump(2) << '\n';
}

std::vector<MarkerCurve> figure_initializations(int width, int height, int markers) {
  const double w = width, h = height;
  return {make_circle({0.50 * w, 0.50 * h}, 0.12 * std::min(w, h), markers),
          make_circle({0.16 * w, 0.50 * h}, 0.09 * std::min(w, h), markers),
          make_circle({0.50 * w, 0.15 * h}, 0.09 * std::min(w, h), markers)};
}

double execute_run(const RunConfig& cfg) {
  cfg.validate();
  const ImageGrid image = cfg.input.empty() ? generate_scene(cfg.scene) : read_pgm(cfg.input);

  std::filesystem::create_directories(cfg.outputs);
  const std::filesystem::path dir(cfg.outputs);

  InitSpec init = cfg.init;
  if (init.shape == "circle" && init.radius <= 0) {
    init.cx = 0.5 * (image.width - 1);
    init.cy = 0.5 * (image.height - 1);
    init.radius = std::min(image.width, image.height) / 3.0;
  }

  double final_energy = std::numeric_limits<double>::quiet_NaN();
  if (cfg.backend == "parametric") {
    MarkerCurve initial;
    if (init.shape == "circle") {
      initial = make_circle({init.cx, init.cy}, init.radius, init.markers);
    } else {
      // rectangle resampled to equal arclength spacing
      MarkerCurve box;
      box.points.resize(2, 4);
      box.points.col(0) = Vec2(init.x0, init.y0);
      box.points.col(1) = Vec2(init.x1, init.y0);
      box.points.col(2) = Vec2(init.x1, init.y1);
      box.points.col(3) = Vec2(init.x0, init.y1);
      initial = resample_arclength(box, init.markers);
    }

    FlowMethod method = FlowMethod::Gradient;
    if (cfg.method == "sobolev") method = FlowMethod::Sobolev;
    if (cfg.method == "accel-const") method = FlowMethod::AccelConst;
    if (cfg.method == "accel-flowable") method = FlowMethod::AccelFlowable;
    const EnergyModel energy =
        cfg.energy == "geodesic" ? EnergyModel::Geodesic : EnergyModel::ChanVese;

    RunResult result = run_flow(initial, image, method, cfg.flow, energy);
    result.log.write_csv((dir / "run_log.csv").string());
    write_curve_csv(result.state.curve, (dir / "contour.csv").string());
    export_contour_svg({initial, result.state.curve}, &image, (dir / "overlay.svg").string());
    if (!result.log.records.empty()) final_energy = result.log.records.back().energy;
  } else {
    LevelSetField psi =
        init.shape == "circle"
            ? signed_distance_circle(image.width, image.height, init.cx, init.cy, init.radius)
            : signed_distance_rectangle(image.width, image.height, init.x0, init.y0, init.x1,
                                        init.y1);
    LsMethod method = LsMethod::Gradient;
    if (cfg.method == "accel-const") method = LsMethod::AccelConst;
    if (cfg.method == "accel-flowable") method = LsMethod::AccelFlowable;

    LsRunResult result = run_flow_ls(psi, image, method, cfg.flow);
    result.log.write_csv((dir / "run_log.csv").string());
    write_lsf(result.state.psi, result.state.step, (dir / "psi_final.lsf").string());
    write_psi_preview_pgm(result.state.psi, (dir / "psi_final.pgm").string());
    const MarkerCurve contour = extract_contour(result.state.psi);
    write_curve_csv(contour, (dir / "contour.csv").string());
    export_contour_svg({contour}, &image, (dir / "overlay.svg").string());
    if (!result.log.records.empty()) final_energy = result.log.records.back().energy;
  }
  return final_energy;
}

}  // namespace acflow
