// Command-line front end: cs-run, image-restore, prox-check, version.
// Exit codes: 0 success, 1 validation error or failed check, 2 runtime failure.

#include "ratioprox/harness.hpp"
#include "ratioprox/imaging.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

namespace {

constexpr const char* kVersion = "0.1.0";

using namespace ratioprox;

int cs_run(const std::string& config, const std::string& output) {
  ExperimentSpec spec = load_experiment(config);
  if (!output.empty()) spec.output_path = output;
  const auto res = run_experiment(spec);
  std::cout << "wrote " << res.rows.size() << " rows to " << spec.output_path << "\n";
  std::cout << csv_text(res.rows);
  return 0;
}

struct ImageArgs {
  std::string input = "texture";
  Index size = 128;
  std::string blur = "average:5";
  double noise = 0.0;
  std::string method = "h2-admm";
  double lambda = 2e-2;
  double rho0 = 1e-8;
  double growth = 1.1;
  int max_iters = 2000;
  std::uint64_t seed = 0;
  std::string out;
};

int image_restore(const ImageArgs& a) {
  if (a.method != "h2-admm" && a.method != "tv-papc")
    throw InvalidConfig("--method must be h2-admm or tv-papc");
  const ImageGrid truth = a.input == "texture" ? make_texture_image(a.size) : read_pgm(a.input);
  const BlurKernel kernel = parse_blur(a.blur);
  Rng rng(a.seed);
  const ImageGrid b = add_gaussian_noise(apply_blur(kernel, truth), a.noise, rng);
  RestoreResult r;
  if (a.method == "h2-admm") {
    RestorationConfig rc;
    rc.lambda = a.lambda;
    rc.rho0 = a.rho0;
    rc.growth_sigma = a.growth;
    rc.max_iters = a.max_iters;
    r = restore_h2_admm(b, kernel, rc, &truth);
  } else {
    PapcConfig pc;
    pc.lambda = a.lambda;
    pc.max_iters = a.max_iters;
    r = restore_tv_papc(b, kernel, pc, &truth);
  }
  // Quality of the 8-bit image that is written out.
  ImageGrid q = r.image.clamped();
  for (Index k = 0; k < q.size(); ++k) q.pixels[k] = std::round(q.pixels[k]);
  if (!a.out.empty()) write_pgm(a.out, q);
  std::cout << "method=" << a.method << " blur=" << kernel.describe()
            << " noise=" << format_number(a.noise) << " psnr=" << format_number(psnr(q, truth))
            << " ssim=" << format_number(ssim(q, truth)) << " iterations=" << r.trace.iterations
            << " time=" << format_number(r.trace.wall_time) << "\n";
  return 0;
}

int prox_check(int samples, std::uint64_t seed) {
  int failures = 0;
  for (const auto& c : prox_oracle_check(samples, seed)) {
    std::printf("oracle p=%d n=%ld lambda=%g samples=%d failures=%d max_excess=%.3e\n", c.p,
                static_cast<long>(c.n), c.lambda, c.samples, c.failures, c.max_excess);
    failures += c.failures;
  }
  const auto t = prox_threshold_check(1000, seed);
  std::printf("threshold p=2 samples=%d failures=%d\n", t.samples, t.failures);
  failures += t.failures;
  std::printf("%s\n", failures == 0 ? "prox-check: ok" : "prox-check: FAILED");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse recovery and image restoration with (l1/l2)^p penalties"};
  app.require_subcommand(1);

  std::string config, output;
  auto* cs = app.add_subcommand("cs-run", "run a compressed sensing experiment from a config file");
  cs->add_option("--config", config, "key = value experiment file")->required();
  cs->add_option("--output", output, "override the CSV output path");

  ImageArgs ia;
  auto* im = app.add_subcommand("image-restore", "blur, add noise, restore and report quality");
  im->add_option("--input", ia.input, "PGM (P5) image or 'texture'");
  im->add_option("--size", ia.size, "side of the synthetic texture image");
  im->add_option("--blur", ia.blur, "average:H, gaussian:H:S or identity");
  im->add_option("--noise", ia.noise, "Gaussian noise standard deviation (gray levels)");
  im->add_option("--method", ia.method, "h2-admm or tv-papc");
  im->add_option("--lambda", ia.lambda, "regularization weight");
  im->add_option("--rho0", ia.rho0, "initial ADMM penalty");
  im->add_option("--growth", ia.growth, "ADMM penalty growth factor");
  im->add_option("--max-iters", ia.max_iters, "iteration cap");
  im->add_option("--seed", ia.seed, "noise seed");
  im->add_option("--out", ia.out, "output PGM path");

  int samples = 200;
  std::uint64_t seed = 0;
  auto* pc = app.add_subcommand("prox-check", "validate the prox against the brute-force oracle");
  pc->add_option("--samples", samples, "inputs per (p, n, lambda) cell");
  pc->add_option("--seed", seed, "sampling seed");

  auto* ver = app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (cs->parsed()) return cs_run(config, output);
    if (im->parsed()) return image_restore(ia);
    if (pc->parsed()) return prox_check(samples, seed);
    if (ver->parsed()) {
      std::cout << "ratioprox " << kVersion << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
