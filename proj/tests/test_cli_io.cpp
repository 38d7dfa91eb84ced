#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sgpbr/commands.hpp"
#include "test_util.hpp"

namespace sgpbr {
namespace {

namespace fs = std::filesystem;

const char* const kMinimalScene =
    "version 1\n"
    "[geometry]\n"
    "sphere center 0 0 0 radius 1\n"
    "[materials]\n"
    "constant id 0 albedo 0.5 0.5 0.5\n"
    "[light]\n"
    "lobe axis 0 -1 0 sharpness 4 amplitude 1 1 1\n"
    "[cameras]\n"
    "canonical\n";

fs::path sample_scene(const std::string& name) {
  return test::source_dir() / "samples" / "scenes" / name;
}

struct CliResult {
  int code = -1;
  std::string out;
};

/// Runs the command-line tool with `args`, capturing standard output.
CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const std::string cmd = std::string("\"") + SGPBR_CLI_PATH + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + (scratch / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  CliResult r;
  if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
  r.out = read_file(out.string());
  return r;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

/// Value of `key=` in key=value output, or empty.
std::string value_of(const std::string& out, const std::string& key) {
  std::istringstream is(out);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  }
  return {};
}

ImageBuffer random_image(Rng& rng, int w, int h, int c) {
  ImageBuffer img(w, h, c);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// Scene format.

TEST(ParseScene, MinimalSceneGetsDefaults) {
  const SceneDescription d = parse_scene(kMinimalScene);
  EXPECT_EQ(d.version, 1);
  EXPECT_EQ(d.render.config.n_samples, 64);
  EXPECT_EQ(d.render.config.d, 8);
  EXPECT_EQ(d.render.config.spp, 1);
  const BuiltScene b = build_scene(d, {});
  EXPECT_EQ(b.cameras.size(), 6u);
  EXPECT_EQ(b.scene.light.size(), 1u);
}

TEST(ParseScene, DefaultsAreEchoed) {
  const std::string text = serialize(parse_scene(kMinimalScene));
  EXPECT_NE(text.find("samples 64"), std::string::npos) << text;
  EXPECT_NE(text.find("subdivision 8"), std::string::npos) << text;
  EXPECT_NE(text.find("spp 1"), std::string::npos) << text;
}

TEST(ParseScene, DuplicateGeometryRejected) {
  const std::string text =
      std::string(kMinimalScene) + "[geometry]\nsphere center 1 0 0 radius 1\n";
  EXPECT_THROW(parse_scene(text), ParseError);
}

TEST(ParseScene, UnknownKeyReportsLine) {
  std::string text = kMinimalScene;
  text.replace(text.find("radius 1"), 8, "radius 1 colour 3");
  try {
    parse_scene(text);
    FAIL() << "unknown key accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos) << e.what();
  }
}

TEST(ParseScene, RejectsMissingVersionAndBadNumbers) {
  std::string text = kMinimalScene;
  EXPECT_THROW(parse_scene(text.substr(text.find('\n') + 1)), ParseError);
  text.replace(text.find("radius 1"), 8, "radius one");
  EXPECT_THROW(parse_scene(text), ParseError);
}

TEST(ParseScene, RoundTripIsIdentity) {
  for (const char* name : {"sphere.scene", "roundtrip.scene"}) {
    const SceneDescription a = parse_scene(read_file(sample_scene(name).string()));
    const SceneDescription b = parse_scene(serialize(a));
    EXPECT_EQ(a, b) << name;
    EXPECT_EQ(serialize(a), serialize(b)) << name;
  }
  const SceneDescription m = parse_scene(kMinimalScene);
  EXPECT_EQ(parse_scene(serialize(m)), m);
}

// Images.

TEST(Image, WhiteAndGrayPpm) {
  ImageBuffer white(1, 1, 3, 1.0);
  const std::string bytes = encode_ppm(white);
  ASSERT_GE(bytes.size(), 3u);
  EXPECT_EQ(bytes.substr(0, 2), "P6");
  for (std::size_t i = bytes.size() - 3; i < bytes.size(); ++i) {
    EXPECT_EQ(static_cast<unsigned char>(bytes[i]), 255u);
  }
  // 1.055 * 0.5^(1/2.4) - 0.055 = 0.7354, times 255 is 187.5.
  EXPECT_NEAR(srgb_encode(0.5), 1.055 * std::pow(0.5, 1.0 / 2.4) - 0.055, 1e-15);
  EXPECT_EQ(srgb_byte(0.5), 188);
  const std::string gray = encode_ppm(ImageBuffer(1, 1, 3, 0.5));
  EXPECT_EQ(static_cast<unsigned char>(gray.back()), 188u);
}

TEST(Image, PpmRoundTripWithinQuantization) {
  Rng rng(60);
  const ImageBuffer a = random_image(rng, 7, 5, 3);
  const ImageBuffer b = decode_ppm(encode_ppm(a));
  ASSERT_TRUE(a.same_shape(b));
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    EXPECT_NEAR(srgb_encode(b.data[i]), srgb_encode(a.data[i]), 0.5 / 255.0 + 1e-9);
  }
}

TEST(Image, PfmRoundTripIsBitwise) {
  Rng rng(61);
  for (int c : {1, 3}) {
    ImageBuffer a = random_image(rng, 9, 4, c);
    for (double& v : a.data) v = static_cast<float>(v * 10.0 - 3.0);
    const std::string bytes = encode_pfm(a);
    EXPECT_EQ(bytes.substr(0, 2), c == 3 ? "PF" : "Pf");
    const ImageBuffer b = decode_pfm(bytes);
    EXPECT_EQ(a, b);
    EXPECT_EQ(encode_pfm(b), bytes);
  }
}

TEST(Image, PfmHeaderAndRowOrder) {
  ImageBuffer a(2, 2, 1);
  a.at(0, 0) = 1.0;  // top-left
  const std::string bytes = encode_pfm(a);
  EXPECT_EQ(bytes.substr(0, 12), "Pf\n2 2\n-1.0\n");
  // PFM stores rows bottom to top, so the top row comes last.
  float last_row_first = 0.0f;
  std::memcpy(&last_row_first, bytes.data() + bytes.size() - 8, 4);
  EXPECT_EQ(last_row_first, 1.0f);
}

TEST(Image, TruncatedInputReportsOffset) {
  const std::string bytes = encode_pfm(ImageBuffer(4, 4, 3, 0.25));
  try {
    decode_pfm(bytes.substr(0, bytes.size() - 5));
    FAIL() << "truncated PFM accepted";
  } catch (const DecodeError& e) {
    EXPECT_GT(e.offset(), 0u);
  }
  EXPECT_THROW(decode_ppm(encode_ppm(ImageBuffer(3, 3, 3)).substr(0, 20)), DecodeError);
  EXPECT_THROW(decode_image("GIF89a"), DecodeError);
  EXPECT_THROW(decode_pfm("PF\n2 x\n-1\n"), DecodeError);
}

// Metrics.

TEST(Psnr, IdenticalIsInfinite) {
  Rng rng(62);
  const ImageBuffer a = random_image(rng, 8, 8, 3);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_GT(psnr(a, a), 0.0);
}

TEST(Psnr, UniformOffsetIsTwentyDb) {
  ImageBuffer a(16, 16, 3, 0.25), b(16, 16, 3, 0.35);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
}

TEST(Psnr, MatchesDirectRecomputation) {
  Rng rng(63);
  const ImageBuffer a = random_image(rng, 13, 11, 3), b = random_image(rng, 13, 11, 3);
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += std::pow(a.data[i] - b.data[i], 2);
  EXPECT_NEAR(psnr(a, b), -10.0 * std::log10(se / static_cast<double>(a.data.size())), 1e-12);
}

TEST(Psnr, MaskSelectsPixelsAndEmptyMaskThrows) {
  ImageBuffer a(4, 4, 1, 0.0), b(4, 4, 1, 0.0), mask(4, 4, 1, 0.0);
  b.at(0, 0) = 0.9;  // outside the mask
  b.at(3, 3) = 0.1;
  mask.at(3, 3) = 1.0;
  mask.at(2, 3) = 1.0;
  EXPECT_NEAR(psnr(a, b, &mask), 10.0 * std::log10(1.0 / 0.005), 1e-12);
  const ImageBuffer empty(4, 4, 1, 0.0);
  EXPECT_THROW(psnr(a, b, &empty), InputError);
  EXPECT_THROW(psnr(a, ImageBuffer(4, 5, 1)), InputError);
}

TEST(Ssim, IdenticalIsOne) {
  Rng rng(64);
  const ImageBuffer a = random_image(rng, 24, 20, 3);
  EXPECT_EQ(ssim(a, a), 1.0);
}

TEST(Ssim, InvertedHighContrastScoresLow) {
  ImageBuffer a(32, 32, 1);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) a.at(x, y) = ((x / 4 + y / 4) % 2) ? 0.95 : 0.05;
  }
  ImageBuffer inv = a;
  for (double& v : inv.data) v = 1.0 - v;
  EXPECT_LT(ssim(a, inv), 0.5);
}

TEST(Ssim, SymmetricAndBounded) {
  Rng rng(65);
  for (int k = 0; k < 5; ++k) {
    const ImageBuffer a = random_image(rng, 16, 14, 3), b = random_image(rng, 16, 14, 3);
    const double s = ssim(a, b);
    EXPECT_NEAR(s, ssim(b, a), 1e-12);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Ssim, TooSmallThrows) {
  EXPECT_THROW(ssim(ImageBuffer(10, 20, 1), ImageBuffer(10, 20, 1)), InputError);
}

// Manifests and checkpoints.

TEST(Manifest, RoundTripAndFormat) {
  const Manifest m{{"a.pfm", hash_hex(fnv1a64("abc"))}, {"b.txt", hash_hex(fnv1a64(""))}};
  EXPECT_EQ(parse_manifest(serialize_manifest(m)), m);
  // Reference values of 64-bit FNV-1a.
  EXPECT_EQ(hash_hex(fnv1a64("")), "cbf29ce484222325");
  EXPECT_EQ(hash_hex(fnv1a64("a")), "af63dc4c8601ec8c");
  EXPECT_THROW(parse_manifest("sha1:1234  x\n"), ParseError);
}

TEST(Manifest, MetricsVerifiesHashes) {
  const fs::path dir = test::scratch_dir("manifest");
  write_file((dir / "a.pfm").string(), encode_pfm(ImageBuffer(12, 12, 1, 0.3)));
  write_file((dir / "b.pfm").string(), encode_pfm(ImageBuffer(12, 12, 1, 0.4)));
  write_manifest(dir, {"a.pfm", "b.pfm"});
  MetricsCommand cmd;
  cmd.a = dir / "a.pfm";
  cmd.b = dir / "b.pfm";
  cmd.manifest = dir / "manifest.txt";
  const std::string out = run_metrics(cmd);
  EXPECT_EQ(value_of(out, "manifest"), "verified");
  EXPECT_NEAR(std::stod(value_of(out, "psnr")), 20.0, 1e-6);
  write_file((dir / "b.pfm").string(), encode_pfm(ImageBuffer(12, 12, 1, 0.5)));
  EXPECT_THROW(run_metrics(cmd), InputError);
}

// Command-line tool.

TEST(Cli, UsageErrorsExitOne) {
  const fs::path dir = test::scratch_dir("cli_usage");
  EXPECT_EQ(run_cli("", dir).code, 1);
  EXPECT_EQ(run_cli("frobnicate", dir).code, 1);
  EXPECT_EQ(run_cli("render", dir).code, 1);
  EXPECT_EQ(run_cli("render " + quoted(dir / "missing.scene") + " --out x", dir).code, 1);
  EXPECT_EQ(run_cli("--help", dir).code, 0);
}

TEST(Cli, InputErrorsExitTwo) {
  const fs::path dir = test::scratch_dir("cli_input");
  write_file((dir / "bad.scene").string(), "version 1\n[geometry]\nblob radius 1\n");
  EXPECT_EQ(run_cli("render " + quoted(dir / "bad.scene") + " --out " + quoted(dir / "o"), dir)
                .code,
            2);
  write_file((dir / "junk.pfm").string(), "not an image");
  EXPECT_EQ(run_cli("metrics " + quoted(dir / "junk.pfm") + " " + quoted(dir / "junk.pfm"), dir)
                .code,
            2);
  EXPECT_EQ(run_cli("render " + quoted(sample_scene("sphere.scene")) + " --views 9 --out " +
                        quoted(dir / "o"),
                    dir)
                .code,
            2);
}

TEST(Cli, RenderSphereWritesAovsAndManifest) {
  const fs::path dir = test::scratch_dir("cli_render");
  const CliResult r =
      run_cli("render " + quoted(sample_scene("sphere.scene")) + " --views 0,3 --out " +
                  quoted(dir / "out"),
              dir);
  ASSERT_EQ(r.code, 0) << read_file((dir / "stderr.txt").string());
  EXPECT_EQ(value_of(r.out, "views"), "2");
  for (const char* view : {"view_0", "view_3"}) {
    const fs::path v = dir / "out" / view;
    int pfms = 0;
    for (const auto& e : fs::directory_iterator(v)) pfms += e.path().extension() == ".pfm";
    EXPECT_EQ(pfms, 7) << view;
    const Manifest m = parse_manifest(read_file((v / "manifest.txt").string()));
    EXPECT_EQ(m.size(), 8u);
    for (const char* aov : kAovNames) {
      const std::string name = std::string(aov) + ".pfm";
      ASSERT_TRUE(m.count(name)) << name;
      EXPECT_EQ(m.at(name), hash_hex(fnv1a64(read_file((v / name).string()))));
      const ImageBuffer img = load_image((v / name).string());
      EXPECT_EQ(img.width, 64);
      EXPECT_EQ(img.height, 64);
    }
    EXPECT_TRUE(fs::exists(v / "color.ppm"));
  }
  EXPECT_FALSE(fs::exists(dir / "out" / "view_1"));
  // The echoed scene carries every default and parses back to the same description.
  const SceneDescription echoed = parse_scene(read_file((dir / "out" / "scene.txt").string()));
  EXPECT_EQ(echoed, parse_scene(read_file(sample_scene("sphere.scene").string())));
}

TEST(Cli, MetricsOfFileAgainstItself) {
  const fs::path dir = test::scratch_dir("cli_metrics");
  Rng rng(66);
  write_file((dir / "a.pfm").string(), encode_pfm(random_image(rng, 20, 16, 3)));
  const CliResult r = run_cli("metrics " + quoted(dir / "a.pfm") + " " + quoted(dir / "a.pfm") +
                                  " --metric psnr,ssim",
                              dir);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(value_of(r.out, "psnr"), "inf");
  EXPECT_EQ(std::stod(value_of(r.out, "ssim")), 1.0);
}

TEST(Cli, SeededRenderIsReproducible) {
  const fs::path dir = test::scratch_dir("cli_seeded");
  for (const char* run : {"a", "b"}) {
    ASSERT_EQ(run_cli("render " + quoted(sample_scene("sphere.scene")) +
                          " --views 1 --seed 9 --out " + quoted(dir / run),
                      dir)
                  .code,
              0);
  }
  EXPECT_EQ(read_file((dir / "a" / "view_1" / "manifest.txt").string()),
            read_file((dir / "b" / "view_1" / "manifest.txt").string()));
  EXPECT_EQ(read_file((dir / "a" / "view_1" / "color.pfm").string()),
            read_file((dir / "b" / "view_1" / "color.pfm").string()));
}

TEST(Cli, ExportMeshAndFitEnvmap) {
  const fs::path dir = test::scratch_dir("cli_mesh");
  CliResult r = run_cli("export-mesh " + quoted(sample_scene("sphere.scene")) +
                            " --res 24 --out " + quoted(dir / "s.obj"),
                        dir);
  ASSERT_EQ(r.code, 0);
  EXPECT_GT(std::stoi(value_of(r.out, "vertices")), 100);
  EXPECT_TRUE(fs::exists(dir / "s.obj"));

  // Latitude-longitude map: dim sky with one bright patch.
  ImageBuffer map(64, 32, 3, 0.05);
  for (int y = 6; y < 10; ++y) {
    for (int x = 20; x < 26; ++x) {
      for (int c = 0; c < 3; ++c) map.at(x, y, c) = 8.0;
    }
  }
  write_file((dir / "map.pfm").string(), encode_pfm(map));
  r = run_cli("fit-envmap " + quoted(dir / "map.pfm") + " --lobes 8 --out " +
                  quoted(dir / "map.lobes"),
              dir);
  ASSERT_EQ(r.code, 0) << read_file((dir / "stderr.txt").string());
  EXPECT_EQ(value_of(r.out, "lobes"), "8");
  EXPECT_EQ(parse_lobes(read_file((dir / "map.lobes").string())).size(), 8u);
}

TEST(Cli, McCheckReport) {
  const fs::path dir = test::scratch_dir("cli_mc");
  const CliResult r = run_cli("mc-check " + quoted(sample_scene("sphere.scene")) +
                                  " --samples 1000 --out " + quoted(dir / "report.txt"),
                              dir);
  ASSERT_EQ(r.code, 0) << read_file((dir / "stderr.txt").string());
  EXPECT_FALSE(value_of(r.out, "non_grazing_mean_relative").empty());
  EXPECT_FALSE(read_file((dir / "report.txt").string()).empty());
}

/// Targets of the bundled two-object fixture, rendered once for the suite.
class CliRoundTrip : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = test::scratch_dir("cli_roundtrip");
    const CliResult r = run_cli(
        "render " + quoted(sample_scene("roundtrip.scene")) + " --out " + quoted(dir_ / "targets"),
        dir_);
    ASSERT_EQ(r.code, 0) << read_file((dir_ / "stderr.txt").string());
    ASSERT_EQ(value_of(r.out, "views"), "6");
  }
  static fs::path dir_;
};
fs::path CliRoundTrip::dir_;

TEST_F(CliRoundTrip, DivergentFitExitsThree) {
  const CliResult r = run_cli("fit " + quoted(sample_scene("roundtrip.scene")) + " --targets " +
                                  quoted(dir_ / "targets") + " --iters 5 --lr inf --out " +
                                  quoted(dir_ / "diverged"),
                              dir_);
  EXPECT_EQ(r.code, 3) << read_file((dir_ / "stderr.txt").string());
}

TEST_F(CliRoundTrip, DefaultFitReachesThirtyDbThenRelights) {
  const fs::path fit_dir = dir_ / "fit";
  const CliResult r = run_cli("fit " + quoted(sample_scene("roundtrip.scene")) + " --targets " +
                                  quoted(dir_ / "targets") + " --out " + quoted(fit_dir),
                              dir_);
  ASSERT_EQ(r.code, 0) << read_file((dir_ / "stderr.txt").string());
  for (int v = 0; v < 6; ++v) {
    const std::string key = "view_psnr_" + std::to_string(v);
    ASSERT_FALSE(value_of(r.out, key).empty()) << key;
    EXPECT_GT(std::stod(value_of(r.out, key)), 30.0) << key;
  }
  const std::string report = read_file((fit_dir / "report.txt").string());
  EXPECT_NE(report.find("psnr_min"), std::string::npos);
  const Manifest m = parse_manifest(read_file((fit_dir / "manifest.txt").string()));
  EXPECT_EQ(m.at("checkpoint.json"),
            hash_hex(fnv1a64(read_file((fit_dir / "checkpoint.json").string()))));

  // Relight the fitted checkpoint under a single lobe and compare intrinsics
  // with the targets.
  write_file((dir_ / "key.lobes").string(),
             serialize_lobes({SgLobe{{0, -1, 0.2}, 8.0, {2.0, 2.0, 2.0}}}));
  const CliResult rl = run_cli("relight " + quoted(fit_dir / "checkpoint.json") + " --light " +
                                   quoted(dir_ / "key.lobes") + " --views 0 --out " +
                                   quoted(dir_ / "relit"),
                               dir_);
  ASSERT_EQ(rl.code, 0) << read_file((dir_ / "stderr.txt").string());
  const ImageBuffer mask = load_image((dir_ / "targets" / "view_0" / "mask.pfm").string());
  const ImageBuffer albedo = load_image((dir_ / "relit" / "view_0" / "albedo.pfm").string());
  const ImageBuffer truth = load_image((dir_ / "targets" / "view_0" / "albedo.pfm").string());
  EXPECT_EQ(load_image((dir_ / "relit" / "view_0" / "mask.pfm").string()), mask);
  EXPECT_GT(psnr(albedo, truth, &mask), 20.0);
}

}  // namespace
}  // namespace sgpbr
