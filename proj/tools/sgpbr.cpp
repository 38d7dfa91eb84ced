// sgpbr command-line tool. Exit codes: 0 success, 1 usage, 2 input error,
// 3 numerical failure.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sgpbr/commands.hpp"

namespace {

using namespace sgpbr;

constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

void add_render(CLI::App& app, RenderCommand& cmd, std::uint64_t& seed) {
  auto* c = app.add_subcommand("render", "Render every AOV of a scene's views");
  c->add_option("scene", cmd.scene, "Scene file")->required()->check(CLI::ExistingFile);
  c->add_option("--out", cmd.out, "Output directory")->required();
  c->add_option("--views", cmd.views, "'all' or comma-separated view indices")
      ->capture_default_str();
  c->add_option("--seed", seed, "Override the scene's render seed");
}

void add_fit(CLI::App& app, FitCommand& cmd, std::string& unknowns, std::string& supervise,
             bool& free_energy, int& lobes) {
  auto* c = app.add_subcommand("fit", "Fit light and materials to rendered targets");
  c->add_option("scene", cmd.scene, "Scene file")->required()->check(CLI::ExistingFile);
  c->add_option("--targets", cmd.targets, "Directory with view_<i>/color.pfm and mask.pfm")
      ->required()
      ->check(CLI::ExistingDirectory);
  c->add_option("--out", cmd.out, "Output directory")->required();
  c->add_option("--unknowns", unknowns, "Comma-separated subset of light,materials")
      ->capture_default_str();
  c->add_option("--iters", cmd.options.iterations, "Optimizer steps")->capture_default_str();
  c->add_option("--lr", cmd.options.lr, "Adam learning rate")->capture_default_str();
  c->add_option("--seed", cmd.options.seed, "Ray batch seed")->capture_default_str();
  c->add_option("--rays", cmd.options.rays_per_step, "Rays per step")->capture_default_str();
  c->add_option("--lobes", lobes, "Lobe count of the fitted light (default: scene's)");
  c->add_option("--supervise", supervise, "Comma-separated subset of albedo,roughness,metallic");
  c->add_flag("--free-energy", free_energy, "Let the total light energy change");
}

void add_relight(CLI::App& app, RelightCommand& cmd) {
  auto* c = app.add_subcommand("relight", "Render a fitted checkpoint under a new light");
  c->add_option("checkpoint", cmd.checkpoint, "checkpoint.json from fit")
      ->required()
      ->check(CLI::ExistingFile);
  c->add_option("--light", cmd.light, "Lobes file or latitude-longitude map")
      ->required()
      ->check(CLI::ExistingFile);
  c->add_option("--out", cmd.out, "Output directory")->required();
  c->add_option("--envmap-lobes", cmd.envmap_lobes, "Lobes fitted to a map")
      ->capture_default_str();
  c->add_option("--views", cmd.views, "'all' or comma-separated view indices")
      ->capture_default_str();
}

void add_metrics(CLI::App& app, MetricsCommand& cmd, std::string& metric, std::string& mask,
                 std::string& manifest) {
  auto* c = app.add_subcommand("metrics", "PSNR and SSIM of two images");
  c->add_option("a", cmd.a, "First image")->required()->check(CLI::ExistingFile);
  c->add_option("b", cmd.b, "Second image")->required()->check(CLI::ExistingFile);
  c->add_option("--metric", metric, "Comma-separated subset of psnr,ssim")->capture_default_str();
  c->add_option("--mask", mask, "Mask image for PSNR")->check(CLI::ExistingFile);
  c->add_option("--manifest", manifest, "Verify both files against this manifest")
      ->check(CLI::ExistingFile);
}

void add_mc_check(CLI::App& app, McCheckCommand& cmd) {
  auto* c = app.add_subcommand("mc-check", "Compare SG shading with a Monte-Carlo reference");
  c->add_option("scene", cmd.scene, "Scene file")->required()->check(CLI::ExistingFile);
  c->add_option("--samples", cmd.samples, "Hemisphere samples per pixel")->capture_default_str();
  c->add_option("--view", cmd.view, "View index")->capture_default_str();
  c->add_option("--seed", cmd.seed, "Sampling seed")->capture_default_str();
  c->add_option("--out", cmd.out, "Report file")->required();
}

void add_export_mesh(CLI::App& app, ExportMeshCommand& cmd) {
  auto* c = app.add_subcommand("export-mesh", "Extract the zero level set as OBJ");
  c->add_option("scene", cmd.scene, "Scene file")->required()->check(CLI::ExistingFile);
  c->add_option("--res", cmd.resolution, "Cells per axis")->capture_default_str();
  c->add_option("--out", cmd.out, "OBJ file")->required();
  c->add_flag("--normals", cmd.normals, "Write SDF vertex normals");
}

void add_fit_envmap(CLI::App& app, FitEnvmapCommand& cmd) {
  auto* c = app.add_subcommand("fit-envmap", "Fit SG lobes to a latitude-longitude map");
  c->add_option("map", cmd.map, "PFM or PPM map")->required()->check(CLI::ExistingFile);
  c->add_option("--lobes", cmd.lobes, "Lobe count")->capture_default_str();
  c->add_option("--out", cmd.out, "Lobes file")->required();
}

void print_views(const std::vector<Manifest>& manifests) {
  std::size_t files = 0;
  for (const Manifest& m : manifests) files += m.size();
  std::cout << "views=" << manifests.size() << "\nfiles=" << files << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spherical-Gaussian PBR rendering, fitting and relighting"};
  app.require_subcommand(1);

  RenderCommand render_cmd;
  std::uint64_t render_seed = 0;
  FitCommand fit_cmd;
  std::string unknowns = "light,materials", supervise;
  bool free_energy = false;
  int lobes = 0;
  RelightCommand relight_cmd;
  MetricsCommand metrics_cmd;
  std::string metric = "psnr,ssim", mask, manifest;
  McCheckCommand mc_cmd;
  ExportMeshCommand mesh_cmd;
  FitEnvmapCommand envmap_cmd;

  add_render(app, render_cmd, render_seed);
  add_fit(app, fit_cmd, unknowns, supervise, free_energy, lobes);
  add_relight(app, relight_cmd);
  add_metrics(app, metrics_cmd, metric, mask, manifest);
  add_mc_check(app, mc_cmd);
  add_export_mesh(app, mesh_cmd);
  add_fit_envmap(app, envmap_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "render") {
      if (app.get_subcommand("render")->count("--seed") > 0) render_cmd.seed = render_seed;
      print_views(run_render(render_cmd));
    } else if (name == "fit") {
      parse_unknowns(unknowns, fit_cmd);
      if (app.get_subcommand("fit")->count("--lobes") > 0) fit_cmd.lobes = lobes;
      fit_cmd.fixed_energy = !free_energy;
      std::istringstream is(supervise);
      std::string item;
      while (std::getline(is, item, ',')) {
        if (item == "albedo") {
          fit_cmd.supervise_albedo = true;
        } else if (item == "roughness") {
          fit_cmd.supervise_roughness = true;
        } else if (item == "metallic") {
          fit_cmd.supervise_metallic = true;
        } else if (!item.empty()) {
          throw InputError("supervise: '" + item + "' is not albedo, roughness or metallic");
        }
      }
      const FitOutput out = run_fit(fit_cmd);
      std::cout << "loss_final=" << out.result.history.back().loss << "\n";
      for (std::size_t v = 0; v < out.result.view_psnr.size(); ++v) {
        std::cout << "view_psnr_" << v << "=" << out.result.view_psnr[v] << "\n";
      }
    } else if (name == "relight") {
      print_views(run_relight(relight_cmd));
    } else if (name == "metrics") {
      metrics_cmd.psnr = false;
      metrics_cmd.ssim = false;
      std::istringstream is(metric);
      std::string item;
      while (std::getline(is, item, ',')) {
        if (item == "psnr") {
          metrics_cmd.psnr = true;
        } else if (item == "ssim") {
          metrics_cmd.ssim = true;
        } else {
          throw InputError("metric: '" + item + "' is not psnr or ssim");
        }
      }
      if (!mask.empty()) metrics_cmd.mask = mask;
      if (!manifest.empty()) metrics_cmd.manifest = manifest;
      std::cout << run_metrics(metrics_cmd);
    } else if (name == "mc-check") {
      const ShadingComparison c = run_mc_check(mc_cmd);
      std::cout << "non_grazing_mean_relative=" << c.non_grazing.mean_relative << "\n";
    } else if (name == "export-mesh") {
      const TriangleMesh m = run_export_mesh(mesh_cmd);
      std::cout << "vertices=" << m.vertices.size() << "\ntriangles=" << m.triangles.size()
                << "\n";
    } else if (name == "fit-envmap") {
      const EnvmapFit f = run_fit_envmap(envmap_cmd);
      std::cout << "lobes=" << f.lobes.size() << "\nresidual_l2=" << f.residual_l2 << "\n";
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DegenerateError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return EXIT_SUCCESS;
}
