#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acflow/levelset.hpp"

namespace acflow {

/// Synthetic test scene: axis-aligned bright shape on dark background
/// plus i.i.d. Gaussian noise, clipped to [0, 1].
struct SceneSpec {
  std::string kind = "noisy-square";  // noisy-square | noisy-rectangle | disk | custom
  int size = 256;
  double contrast = 1.0;
  double noise_std = 0.35;
  std::uint64_t seed = 0;

  void validate() const;
};

ImageGrid generate_scene(const SceneSpec& spec);

/// PGM P5 (binary) or P2 (ASCII), maxval <= 65535; intensities mapped
/// to [0, 1] on read. write_pgm emits 8-bit data, lossless for 8-bit input.
ImageGrid read_pgm(const std::string& path);
void write_pgm(const ImageGrid& image, const std::string& path, bool binary = true);

/// SVG overlay: grayscale image background (run-length rects) with one
/// polyline per curve, coordinates equal to marker positions.
void export_contour_svg(const std::vector<MarkerCurve>& curves, const ImageGrid* image,
                        const std::string& path);

/// Circle or rectangle initial contour, in pixel coordinates.
struct InitSpec {
  std::string shape = "circle";  // circle | rectangle
  double cx = 0, cy = 0, radius = 0;      // circle (0 -> centered, size/3)
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // rectangle
  int markers = 256;
};

/// One experiment: input image (file or synthetic), method x backend,
/// energy model, flow parameters, initialization, output directory.
struct RunConfig {
  std::string input;  // PGM path; empty -> synthetic scene
  SceneSpec scene;
  std::string method = "accel-const";   // gradient | sobolev | accel-const | accel-flowable
  std::string backend = "parametric";   // parametric | levelset
  std::string energy = "chan-vese";     // chan-vese | geodesic
  FlowConfig flow;
  InitSpec init;
  std::string outputs = "out";

  void validate() const;
};

/// JSON document mirroring the RunConfig field names; unknown keys are an error.
RunConfig read_run_config(const std::string& path);
void write_run_config(const RunConfig& cfg, const std::string& path);

/// Executes a RunConfig end to end and writes log/contour/overlay (and psi
/// snapshots for the level-set backend) into cfg.outputs. Returns the final
/// logged energy.
double execute_run(const RunConfig& cfg);

/// The three circle initializations used by `compare` (and the local-minima
/// experiment): inside the bright shape, at its left edge, and in the
/// background below it.
std::vector<MarkerCurve> figure_initializations(int width, int height, int markers = 256);

/// CLI entry point; subcommands {segment, oracle, verify, scene, compare}.
/// Returns 0 on success, 1 on runtime failure, 2 on usage/config errors.
int cli_main(int argc, char** argv);

}  // namespace acflow
