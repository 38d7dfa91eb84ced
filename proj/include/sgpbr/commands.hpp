#pragma once

// The command-line operations as library calls. Each writes its outputs
// under a directory and returns what it wrote; argument parsing lives in
// tools/.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sgpbr/checkpoint.hpp"
#include "sgpbr/envmap.hpp"
#include "sgpbr/image.hpp"
#include "sgpbr/inverse.hpp"
#include "sgpbr/marching_cubes.hpp"
#include "sgpbr/metrics.hpp"
#include "sgpbr/renderer.hpp"
#include "sgpbr/scene_io.hpp"

namespace sgpbr {

namespace fs = std::filesystem;

inline constexpr std::array<const char*, 7> kAovNames = {
    "color", "normal", "depth", "albedo", "roughness", "metallic", "mask"};

inline std::string view_dir_name(std::size_t view) { return "view_" + std::to_string(view); }

/// Writes the seven AOV PFMs, a color.ppm preview and manifest.txt into `dir`.
inline Manifest write_frame(const AovFrame& f, const fs::path& dir) {
  fs::create_directories(dir);
  const ImageBuffer* images[7] = {&f.color,    &f.normal,   &f.depth, &f.albedo,
                                  &f.roughness, &f.metallic, &f.mask};
  std::vector<std::string> files;
  for (std::size_t i = 0; i < kAovNames.size(); ++i) {
    const std::string name = std::string(kAovNames[i]) + ".pfm";
    write_file((dir / name).string(), encode_pfm(*images[i]));
    files.push_back(name);
  }
  write_file((dir / "color.ppm").string(), encode_ppm(f.color));
  files.push_back("color.ppm");
  return write_manifest(dir, files);
}

/// Parses a comma-separated list of view indices or "all".
inline std::vector<std::size_t> select_views(const std::string& spec, std::size_t n_views) {
  std::vector<std::size_t> out;
  if (spec == "all") {
    for (std::size_t i = 0; i < n_views; ++i) out.push_back(i);
    return out;
  }
  std::istringstream is(spec);
  std::string item;
  while (std::getline(is, item, ',')) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty() || v >= n_views) {
      throw InputError("views: '" + item + "' is not a view index below " +
                       std::to_string(n_views));
    }
    out.push_back(v);
  }
  if (out.empty()) throw InputError("views: empty selection");
  return out;
}

struct RenderCommand {
  fs::path scene;
  fs::path out;
  std::string views = "all";
  std::optional<std::uint64_t> seed;
};

/// Renders the selected views into out/view_<i>/ and echoes the scene with
/// all defaults to out/scene.txt. Returns the per-view manifests.
inline std::vector<Manifest> run_render(const RenderCommand& cmd) {
  SceneDescription desc = load_scene_description(cmd.scene);
  if (cmd.seed) desc.render.config.seed = *cmd.seed;
  const BuiltScene built = build_scene(desc, cmd.scene.parent_path());
  fs::create_directories(cmd.out);
  write_file((cmd.out / "scene.txt").string(), serialize(desc));
  std::vector<Manifest> manifests;
  for (std::size_t v : select_views(cmd.views, built.cameras.size())) {
    const AovFrame f = render(built.scene, built.cameras[v], built.config);
    manifests.push_back(write_frame(f, cmd.out / view_dir_name(v)));
  }
  return manifests;
}

struct FitCommand {
  fs::path scene;
  fs::path targets;
  fs::path out;
  bool fit_light = true;
  bool fit_materials = true;
  FitOptions options;
  /// Lobe count of the re-initialised light; the scene's count when unset.
  std::optional<int> lobes;
  /// Keep the total light energy at the scene light's value.
  bool fixed_energy = true;
  bool supervise_albedo = false;
  bool supervise_roughness = false;
  bool supervise_metallic = false;
};

/// Parses "light,materials" style unknown lists.
inline void parse_unknowns(const std::string& spec, FitCommand& cmd) {
  cmd.fit_light = false;
  cmd.fit_materials = false;
  std::istringstream is(spec);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item == "light") {
      cmd.fit_light = true;
    } else if (item == "materials") {
      cmd.fit_materials = true;
    } else {
      throw InputError("unknowns: '" + item + "' is not light or materials");
    }
  }
  if (!cmd.fit_light && !cmd.fit_materials) throw InputError("unknowns: nothing to fit");
}

/// Material initialisation for fitting: every channel at 0.5.
inline ParameterField reset_material(const ParameterField& f) {
  const Material mid{{0.5, 0.5, 0.5}, 0.5, 0.5, 0.5};
  if (f.as<field::Constant>()) return make_constant_field(mid);
  if (const auto* g = f.as<field::Grid>()) {
    return make_grid_field(g->origin, g->cell, g->resolution, mid);
  }
  return f;
}

inline std::string fit_report(const FitCommand& cmd, const FitProblem& prob,
                              const FitResult& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "seed " << cmd.options.seed << "\n"
     << "iterations " << cmd.options.iterations << "\n"
     << "lr " << cmd.options.lr << "\n"
     << "rays_per_step " << cmd.options.rays_per_step << "\n"
     << "unknowns " << (cmd.fit_light ? "light" : "")
     << (cmd.fit_light && cmd.fit_materials ? "," : "") << (cmd.fit_materials ? "materials" : "")
     << "\n";
  if (prob.fixed_energy) {
    os << "fixed_energy " << prob.fixed_energy->x << ' ' << prob.fixed_energy->y << ' '
       << prob.fixed_energy->z << "\n";
  } else {
    os << "fixed_energy none\n";
  }
  os << "loss_initial " << r.history.front().loss << "\n"
     << "loss_final " << r.history.back().loss << "\n";
  for (const LossRecord& h : r.history) os << "history " << h.step << ' ' << h.loss << "\n";
  double psnr_min = std::numeric_limits<double>::infinity(), psnr_sum = 0.0;
  for (std::size_t v = 0; v < r.view_psnr.size(); ++v) {
    os << "view_psnr " << v << ' ' << r.view_psnr[v] << "\n";
    psnr_min = std::min(psnr_min, r.view_psnr[v]);
    psnr_sum += r.view_psnr[v];
  }
  os << "psnr_mean " << psnr_sum / static_cast<double>(r.view_psnr.size()) << "\n"
     << "psnr_min " << psnr_min << "\n";
  for (std::size_t j = 0; j < r.light.size(); ++j) {
    const SgLobe& g = r.light[j];
    os << "lobe " << j << " axis " << g.axis.x << ' ' << g.axis.y << ' ' << g.axis.z
       << " sharpness " << g.sharpness << " amplitude " << g.amplitude.x << ' '
       << g.amplitude.y << ' ' << g.amplitude.z << "\n";
  }
  for (std::size_t i = 0; i < r.materials.size(); ++i) {
    if (!r.materials[i].as<field::Constant>()) continue;
    const Material m = field_eval(r.materials[i], Vec3d{});
    os << "material " << i << " albedo " << m.albedo.x << ' ' << m.albedo.y << ' '
       << m.albedo.z << " roughness " << m.roughness << " metallic " << m.metallic
       << " specular " << m.specular << "\n";
  }
  return os.str();
}

struct FitOutput {
  FitResult result;
  Manifest manifest;
};

/// Fits against out/view_<i>/ style targets (as written by run_render) for
/// every camera of the scene. Unknown light is re-initialised on a Fibonacci
/// lattice carrying the scene light's total energy; unknown constant and grid
/// materials restart at 0.5 in every channel.
inline FitOutput run_fit(const FitCommand& cmd) {
  const std::string scene_text = read_file(cmd.scene.string());
  const SceneDescription desc = parse_scene(scene_text);
  const BuiltScene built = build_scene(desc, cmd.scene.parent_path());

  FitProblem prob;
  prob.geometry = built.scene.geometry;
  prob.render = built.config;
  prob.unknowns = {cmd.fit_light, cmd.fit_materials};
  const Rgbd energy = mixture_integral(built.scene.light);
  prob.light = built.scene.light;
  if (cmd.fit_light) {
    const int n = cmd.lobes.value_or(static_cast<int>(built.scene.light.size()));
    prob.light = init_light(n, energy);
    if (cmd.fixed_energy) prob.fixed_energy = energy;
  }
  prob.materials = built.scene.materials;
  if (cmd.fit_materials) {
    for (ParameterField& f : prob.materials) f = reset_material(f);
  }
  for (std::size_t v = 0; v < built.cameras.size(); ++v) {
    const fs::path dir = cmd.targets / view_dir_name(v);
    ViewTarget t;
    t.camera = built.cameras[v];
    t.color = load_image((dir / "color.pfm").string());
    t.mask = load_image((dir / "mask.pfm").string());
    if (cmd.supervise_albedo) t.albedo = load_image((dir / "albedo.pfm").string());
    if (cmd.supervise_roughness) t.roughness = load_image((dir / "roughness.pfm").string());
    if (cmd.supervise_metallic) t.metallic = load_image((dir / "metallic.pfm").string());
    prob.views.push_back(std::move(t));
  }

  FitOutput out;
  out.result = fit(prob, cmd.options);
  fs::create_directories(cmd.out);
  Checkpoint ck{scene_text, out.result.params};
  write_file((cmd.out / "checkpoint.json").string(), serialize_checkpoint(ck));
  write_file((cmd.out / "report.txt").string(), fit_report(cmd, prob, out.result));
  out.manifest = write_manifest(cmd.out, {"checkpoint.json", "report.txt"});
  return out;
}

/// Loads lobes from a lobes file, or fits them to a latitude-longitude map
/// when the file is an image.
inline SgMixture load_light(const fs::path& path, int envmap_lobes) {
  const std::string bytes = read_file(path.string());
  if (bytes.rfind("P6", 0) == 0 || bytes.rfind("PF", 0) == 0 || bytes.rfind("Pf", 0) == 0) {
    return fit_envmap_to_sg(decode_image(bytes), envmap_lobes).lobes;
  }
  return build_light(parse_lobes(bytes), path.parent_path());
}

struct RelightCommand {
  fs::path checkpoint;
  fs::path light;
  fs::path out;
  int envmap_lobes = 16;
  std::string views = "all";
};

inline std::vector<Manifest> run_relight(const RelightCommand& cmd) {
  const Checkpoint ck = parse_checkpoint(read_file(cmd.checkpoint.string()));
  BuiltScene built = restore_checkpoint(ck, cmd.checkpoint.parent_path());
  const SgMixture light = load_light(cmd.light, cmd.envmap_lobes);
  std::vector<Manifest> manifests;
  for (std::size_t v : select_views(cmd.views, built.cameras.size())) {
    const AovFrame f = relight(built.scene.geometry, built.scene.materials, light,
                               built.cameras[v], built.config, built.scene.background);
    manifests.push_back(write_frame(f, cmd.out / view_dir_name(v)));
  }
  return manifests;
}

struct MetricsCommand {
  fs::path a, b;
  bool psnr = true;
  bool ssim = true;
  std::optional<fs::path> mask;
  std::optional<fs::path> manifest;
};

/// key=value lines. With a manifest, both files must be listed in it with
/// matching hashes.
inline std::string run_metrics(const MetricsCommand& cmd) {
  if (cmd.manifest) {
    const Manifest m = parse_manifest(read_file(cmd.manifest->string()));
    for (const fs::path& p : {cmd.a, cmd.b}) {
      const auto it = m.find(p.filename().string());
      if (it == m.end()) throw InputError("manifest does not list " + p.filename().string());
      if (it->second != hash_hex(fnv1a64(read_file(p.string())))) {
        throw InputError("hash mismatch for " + p.string());
      }
    }
  }
  const ImageBuffer a = load_image(cmd.a.string());
  const ImageBuffer b = load_image(cmd.b.string());
  std::optional<ImageBuffer> mask;
  if (cmd.mask) mask = load_image(cmd.mask->string());
  std::ostringstream os;
  os << std::setprecision(17);
  if (cmd.psnr) {
    const double v = psnr(a, b, mask ? &*mask : nullptr);
    os << "psnr=";
    if (std::isinf(v)) {
      os << "inf";
    } else {
      os << v;
    }
    os << "\n";
  }
  if (cmd.ssim) os << "ssim=" << ssim(a, b) << "\n";
  if (cmd.manifest) os << "manifest=verified\n";
  return os.str();
}

struct McCheckCommand {
  fs::path scene;
  fs::path out;
  int samples = 100000;
  std::size_t view = 0;
  std::uint64_t seed = 0;
};

inline ShadingComparison run_mc_check(const McCheckCommand& cmd) {
  const BuiltScene built = build_scene(load_scene_description(cmd.scene), cmd.scene.parent_path());
  if (cmd.view >= built.cameras.size()) throw InputError("mc-check: view index out of range");
  const Camera& cam = built.cameras[cmd.view];
  const AovFrame f = render(built.scene, cam, built.config);
  const ImageBuffer ref = render_reference_mc(built.scene, cam, cmd.samples, cmd.seed, built.config);
  const ShadingComparison c = compare_shading(f, ref, cam);
  std::ostringstream os;
  os << std::setprecision(6);
  os << "# pixel_set count mean_relative_error max_relative_error\n";
  const auto row = [&](const char* name, const ShadingErrorStats& s) {
    os << name << ' ' << s.count << ' ' << s.mean_relative << ' ' << s.max_relative << "\n";
  };
  row("non_grazing", c.non_grazing);
  row("grazing", c.grazing);
  row("all", c.all);
  os << "samples " << cmd.samples << "\nview " << cmd.view << "\nseed " << cmd.seed << "\n";
  if (cmd.out.has_parent_path()) fs::create_directories(cmd.out.parent_path());
  write_file(cmd.out.string(), os.str());
  return c;
}

struct ExportMeshCommand {
  fs::path scene;
  fs::path out;
  int resolution = 64;
  bool normals = false;
};

inline TriangleMesh run_export_mesh(const ExportMeshCommand& cmd) {
  const BuiltScene built = build_scene(load_scene_description(cmd.scene), cmd.scene.parent_path());
  const auto bounds = bounding_sphere(built.scene.geometry);
  if (!bounds) throw InputError("export-mesh: geometry is unbounded");
  const double r = bounds->radius * 1.05;
  const TriangleMesh mesh = marching_cubes(
      built.scene.geometry, Aabb{bounds->center - splat(r), bounds->center + splat(r)},
      cmd.resolution, cmd.normals);
  if (cmd.out.has_parent_path()) fs::create_directories(cmd.out.parent_path());
  write_file(cmd.out.string(), export_obj(mesh));
  return mesh;
}

struct FitEnvmapCommand {
  fs::path map;
  fs::path out;
  int lobes = 16;
};

inline EnvmapFit run_fit_envmap(const FitEnvmapCommand& cmd) {
  const EnvmapFit fit = fit_envmap_to_sg(load_image(cmd.map.string()), cmd.lobes);
  if (cmd.out.has_parent_path()) fs::create_directories(cmd.out.parent_path());
  write_file(cmd.out.string(), serialize_lobes(fit.lobes));
  return fit;
}

}  // namespace sgpbr
