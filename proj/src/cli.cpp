#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "acflow/io.hpp"
#include "acflow/verify.hpp"

namespace acflow {

namespace {

int run_scene(const SceneSpec& spec, const std::string& out) {
  write_pgm(generate_scene(spec), out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int run_oracle(double R0, double f, const FlowConfig& flow, const std::string& model,
               double t_end, const std::string& out) {
  const MassModel m = model == "flowable" ? MassModel::Flowable : MassModel::Constant;
  const CircleTrajectory traj = circle_ode_oracle(R0, f, flow, m, t_end);
  std::ofstream os(out);
  if (!os) throw std::runtime_error("oracle: cannot open " + out);
  os << "t,radius,beta,rho\n";
  os.precision(17);
  for (size_t i = 0; i < traj.t.size(); ++i) {
    const double rho = i < traj.rho.size() ? traj.rho[i] : flow.rho0;
    os << traj.t[i] << ',' << traj.radius[i] << ',' << traj.beta[i] << ',' << rho << '\n';
  }
  std::cout << "wrote " << out << (traj.shock ? " (stopped at radius collapse)" : "") << "\n";
  return 0;
}

int run_verify(std::uint64_t seed) {
  const auto checks = run_verify_suite(seed);
  bool all = true;
  for (const auto& c : checks) {
    std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << c.detail << "\n";
    all = all && c.pass;
  }
  return all ? 0 : 1;
}

int run_compare(const SceneSpec& spec, int steps, int markers, double lambda,
                const std::string& out) {
  const ImageGrid image = generate_scene(spec);
  const auto inits = figure_initializations(image.width, image.height, markers);

  std::ofstream os(out);
  if (!os) throw std::runtime_error("compare: cannot open " + out);
  os << "init,method,final_energy,steps\n";
  os.precision(17);
  for (size_t i = 0; i < inits.size(); ++i) {
    for (const char* method : {"gradient", "accel-const"}) {
      FlowConfig cfg;
      cfg.max_steps = steps;
      cfg.lambda_action = lambda;
      const FlowMethod fm =
          std::string(method) == "gradient" ? FlowMethod::Gradient : FlowMethod::AccelConst;
      const RunResult res = run_flow(inits[i], image, fm, cfg);
      const double e = res.log.records.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : res.log.records.back().energy;
      os << i << ',' << method << ',' << e << ',' << res.state.step << '\n';
      std::cout << "init " << i << " " << method << ": final energy " << e << " ("
                << res.state.step << " steps)\n";
    }
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"acflow: accelerated curve evolution for image segmentation"};
  app.require_subcommand(1);

  // scene
  auto* scene_cmd = app.add_subcommand("scene", "write a synthetic test scene as PGM");
  SceneSpec scene_spec;
  std::string scene_out = "scene.pgm";
  scene_cmd->add_option("--kind", scene_spec.kind,
                        "noisy-square | noisy-rectangle | disk | custom");
  scene_cmd->add_option("--size", scene_spec.size, "grid side length (>= 64)");
  scene_cmd->add_option("--contrast", scene_spec.contrast, "foreground intensity");
  scene_cmd->add_option("--noise-std", scene_spec.noise_std, "Gaussian noise sigma");
  scene_cmd->add_option("--seed", scene_spec.seed, "noise seed");
  scene_cmd->add_option("--out", scene_out, "output PGM path");

  // oracle
  auto* oracle_cmd = app.add_subcommand("oracle", "circle-symmetric ODE reference trajectory");
  double oracle_R0 = 30, oracle_f = -0.05, oracle_tend = 50;
  std::string oracle_model = "constant", oracle_out = "oracle.csv";
  FlowConfig oracle_cfg;
  oracle_cmd->add_option("--R0", oracle_R0, "initial radius");
  oracle_cmd->add_option("--f", oracle_f, "constant normal force");
  oracle_cmd->add_option("--model", oracle_model, "constant | flowable");
  oracle_cmd->add_option("--k", oracle_cfg.k, "action exponent");
  oracle_cmd->add_option("--lambda", oracle_cfg.lambda_action, "potential weight");
  oracle_cmd->add_option("--rho", oracle_cfg.rho0, "density");
  oracle_cmd->add_option("--t0", oracle_cfg.t0, "clock start");
  oracle_cmd->add_option("--t-end", oracle_tend, "integration horizon");
  oracle_cmd->add_option("--out", oracle_out, "output CSV path");

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "derivation-identity checks");
  std::uint64_t verify_seed = 0;
  verify_cmd->add_option("--seed", verify_seed, "randomized-check seed");

  // segment
  auto* seg_cmd = app.add_subcommand("segment", "run one segmentation experiment");
  std::string seg_config;
  RunConfig seg;
  seg_cmd->add_option("--config", seg_config, "JSON RunConfig");
  auto* o_method = seg_cmd->add_option("--method", seg.method,
                                       "gradient | sobolev | accel-const | accel-flowable");
  auto* o_backend = seg_cmd->add_option("--backend", seg.backend, "parametric | levelset");
  auto* o_k = seg_cmd->add_option("--k", seg.flow.k, "action exponent");
  auto* o_lambda = seg_cmd->add_option("--lambda", seg.flow.lambda_action, "potential weight");
  auto* o_rho = seg_cmd->add_option("--rho", seg.flow.rho0, "density");
  auto* o_g = seg_cmd->add_option("--g", seg.flow.g, "mass-potential weight");
  auto* o_tau = seg_cmd->add_option("--tau", seg.flow.tau_diff, "velocity diffusion");
  auto* o_noise = seg_cmd->add_option("--noise", seg.flow.tau_noise, "stochastic acceleration");
  auto* o_steps = seg_cmd->add_option("--steps", seg.flow.max_steps, "max steps");
  auto* o_seed = seg_cmd->add_option("--seed", seg.flow.seed, "noise seed");
  auto* o_out = seg_cmd->add_option("--out", seg.outputs, "output directory");
  auto* o_input = seg_cmd->add_option("--input", seg.input, "input PGM (default: synthetic)");

  // compare
  auto* cmp_cmd = app.add_subcommand("compare",
                                     "gradient vs accelerated from the three standard inits");
  SceneSpec cmp_spec;
  cmp_spec.kind = "noisy-rectangle";
  int cmp_steps = 2000, cmp_markers = 256;
  double cmp_lambda = 1.0;
  std::string cmp_out = "compare.csv";
  cmp_cmd->add_option("--kind", cmp_spec.kind, "scene kind");
  cmp_cmd->add_option("--size", cmp_spec.size, "grid side length");
  cmp_cmd->add_option("--contrast", cmp_spec.contrast, "foreground intensity");
  cmp_cmd->add_option("--noise-std", cmp_spec.noise_std, "Gaussian noise sigma");
  cmp_cmd->add_option("--seed", cmp_spec.seed, "noise seed");
  cmp_cmd->add_option("--steps", cmp_steps, "max steps per run");
  cmp_cmd->add_option("--lambda", cmp_lambda, "accelerated potential weight");
  cmp_cmd->add_option("--out", cmp_out, "summary CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (*scene_cmd) return run_scene(scene_spec, scene_out);
    if (*oracle_cmd) return run_oracle(oracle_R0, oracle_f, oracle_cfg, oracle_model, oracle_tend,
                                       oracle_out);
    if (*verify_cmd) return run_verify(verify_seed);
    if (*cmp_cmd) return run_compare(cmp_spec, cmp_steps, cmp_markers, cmp_lambda, cmp_out);
    if (*seg_cmd) {
      RunConfig cfg;
      if (!seg_config.empty()) {
        try {
          cfg = read_run_config(seg_config);
        } catch (const std::invalid_argument& e) {
          std::cerr << e.what() << "\n";
          return 2;
        }
      }
      // flag overrides on top of the config file
      if (o_method->count()) cfg.method = seg.method;
      if (o_backend->count()) cfg.backend = seg.backend;
      if (o_k->count()) cfg.flow.k = seg.flow.k;
      if (o_lambda->count()) cfg.flow.lambda_action = seg.flow.lambda_action;
      if (o_rho->count()) cfg.flow.rho0 = seg.flow.rho0;
      if (o_g->count()) cfg.flow.g = seg.flow.g;
      if (o_tau->count()) cfg.flow.tau_diff = seg.flow.tau_diff;
      if (o_noise->count()) cfg.flow.tau_noise = seg.flow.tau_noise;
      if (o_steps->count()) cfg.flow.max_steps = seg.flow.max_steps;
      if (o_seed->count()) cfg.flow.seed = seg.flow.seed;
      if (o_out->count()) cfg.outputs = seg.outputs;
      if (o_input->count()) cfg.input = seg.input;
      try {
        cfg.validate();
      } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return 2;
      }
      const double e = execute_run(cfg);
      std::cout << "final energy " << e << "; outputs in " << cfg.outputs << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace acflow
