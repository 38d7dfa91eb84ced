#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace sgpbr {
namespace {

using test::random_direction;
using test::random_lobe;
using test::rel_err;

TEST(EvalSg, AtAxisReturnsAmplitude) {
  const SgLobe g{normalize(Vec3d{1, 2, 3}), 7.5, {0.3, 0.6, 0.9}};
  const Rgbd v = eval_sg(g, g.axis);
  EXPECT_DOUBLE_EQ(v.x, 0.3);
  EXPECT_DOUBLE_EQ(v.y, 0.6);
  EXPECT_DOUBLE_EQ(v.z, 0.9);
}

TEST(EvalSg, Antipodal) {
  const SgLobe g{{0, 0, 1}, 1.0, {1, 1, 1}};
  const Rgbd v = eval_sg(g, Vec3d{0, 0, -1});
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(v[c], std::exp(-2.0), 1e-15);
}

TEST(EvalSg, MatchesDirectFormula) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const SgLobe g = random_lobe(rng);
    const Vec3d v = random_direction(rng);
    const double w = test::sg_scalar(g.axis, g.sharpness, v);
    const Rgbd got = eval_sg(g, v);
    for (int c = 0; c < 3; ++c) EXPECT_LE(rel_err(got[c], g.amplitude[c] * w), 1e-12);
  }
}

TEST(SgProduct, AlignedAxesAddSharpness) {
  const Vec3d axis = normalize(Vec3d{-1, 0.5, 2});
  const SgLobe a{axis, 3.0, {0.2, 0.4, 0.8}};
  const SgLobe b{axis, 5.5, {1, 1, 1}};
  const SgLobe p = sg_product(a, b);
  EXPECT_NEAR(length(p.axis - axis), 0.0, 1e-12);
  EXPECT_NEAR(p.sharpness, 8.5, 1e-12);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.amplitude[c], a.amplitude[c], 1e-12);
}

TEST(SgProduct, ClosureAtRandomDirections) {
  Rng rng(12);
  for (int pair = 0; pair < 50; ++pair) {
    const SgLobe a = random_lobe(rng);
    const SgLobe b = random_lobe(rng);
    const SgLobe p = sg_product(a, b);
    for (int k = 0; k < 1000; ++k) {
      const Vec3d v = random_direction(rng);
      const Rgbd got = eval_sg(p, v);
      const Rgbd want = cmul(eval_sg(a, v), eval_sg(b, v));
      for (int c = 0; c < 3; ++c) {
        const double err = std::abs(got[c] - want[c]) / std::max(want[c], 1e-12);
        ASSERT_LT(err, 1e-6) << "pair " << pair << " dir " << k;
      }
    }
  }
}

TEST(SgProduct, AntipodalEqualSharpnessFallsBack) {
  const SgLobe a{{0, 0, 1}, 4.0, {1, 1, 1}};
  const SgLobe b{{0, 0, -1}, 4.0, {1, 1, 1}};
  const SgLobe p = sg_product(a, b);
  EXPECT_EQ(p.sharpness, kDegenerateSharpness);
  EXPECT_EQ(p.axis, a.axis);
  // The fallback is near-constant; the pointwise error is recorded only.
  Rng rng(13);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vec3d v = random_direction(rng);
    const double got = eval_sg(p, v).x;
    const double want = eval_sg(a, v).x * eval_sg(b, v).x;
    ASSERT_TRUE(std::isfinite(got));
    worst = std::max(worst, std::abs(got - want) / want);
  }
  RecordProperty("antipodal_max_rel_error", std::to_string(worst));
}

TEST(SgIntegral, SharpLimit) {
  const double lambda = 1e4;
  const Rgbd v = sg_integral(SgLobe{{0, 1, 0}, lambda, {1, 1, 1}});
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(v[c], 2.0 * kPi / lambda, 1e-15);
}

TEST(SgIntegral, ZeroAmplitude) {
  const Rgbd v = sg_integral(SgLobe{{1, 0, 0}, 3.0, {0, 0, 0}});
  EXPECT_EQ(v, Rgbd{});
}

TEST(SgIntegral, ClosedForm) {
  for (double lambda : {1e-6, 1e-3, 0.1, 1.0, 10.0, 500.0}) {
    const double want = 2.0 * kPi / lambda * -std::expm1(-2.0 * lambda);
    EXPECT_LE(rel_err(sg_integral(SgLobe{{0, 0, 1}, lambda, {1, 1, 1}}).x, want), 1e-12)
        << lambda;
  }
}

TEST(SgIntegral, PositiveForPositiveAmplitude) {
  Rng rng(14);
  for (int i = 0; i < 200; ++i) {
    const Rgbd v = sg_integral(random_lobe(rng, 1e-3, 1e4));
    for (int c = 0; c < 3; ++c) EXPECT_GT(v[c], 0.0);
  }
}

TEST(SgIntegral, MatchesMonteCarlo) {
  Rng rng(15);
  for (int i = 0; i < 8; ++i) {
    const SgLobe g = random_lobe(rng);
    const double mc = test::sphere_mc(
        [&](const Vec3d& v) { return test::sg_scalar(g.axis, g.sharpness, v); }, g.axis, 10000,
        100, 100 + i);
    const Rgbd closed = sg_integral(g);
    EXPECT_LT(rel_err(closed.x, g.amplitude.x * mc), 1e-3) << "lambda " << g.sharpness;
  }
}

TEST(SgInnerProduct, ConstantLikeFactor) {
  const SgLobe g{normalize(Vec3d{1, 1, 0}), 12.0, {0.5, 1.0, 2.0}};
  const double tiny = 1e-7;
  // exp(tiny (v.p - 1)) is within 2e-7 of 1 everywhere.
  const SgLobe flat{{0, 0, 1}, tiny, {3, 3, 3}};
  const Rgbd got = sg_inner_product(g, flat);
  const Rgbd want = sg_integral(g) * 3.0;
  for (int c = 0; c < 3; ++c) EXPECT_LT(rel_err(got[c], want[c]), 1e-6);
}

TEST(SgInnerProduct, IdenticalUnitLobes) {
  const Vec3d axis = normalize(Vec3d{0.3, -0.2, 0.9});
  const SgLobe g{axis, 1.0, {1, 1, 1}};
  const Rgbd got = sg_inner_product(g, g);
  const Rgbd want = sg_integral(SgLobe{axis, 2.0, {1, 1, 1}});
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(got[c], want[c], 1e-12);
}

TEST(SgInnerProduct, MatchesMonteCarlo) {
  Rng rng(16);
  for (int i = 0; i < 8; ++i) {
    const SgLobe a = random_lobe(rng);
    const SgLobe b = random_lobe(rng);
    const SgLobe& sharp = a.sharpness > b.sharpness ? a : b;
    const double mc = test::sphere_mc(
        [&](const Vec3d& v) {
          return test::sg_scalar(a.axis, a.sharpness, v) * test::sg_scalar(b.axis, b.sharpness, v);
        },
        sharp.axis, 10000, 100, 200 + i);
    const double closed = sg_inner_product(a, b).x / (a.amplitude.x * b.amplitude.x);
    if (mc < 1e-250) continue;  // both lobes underflow in the overlap
    EXPECT_LT(rel_err(closed, mc), 1e-3) << a.sharpness << " " << b.sharpness;
  }
}

TEST(SgInnerProduct, RotationEquivariant) {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const SgLobe a = random_lobe(rng, 0.1, 50.0);
    const SgLobe b = random_lobe(rng, 0.1, 50.0);
    const Vec3d pole = random_direction(rng);
    SgLobe ra = a, rb = b;
    ra.axis = normalize(test::rotate_to(pole, a.axis));
    rb.axis = normalize(test::rotate_to(pole, b.axis));
    const Rgbd x = sg_inner_product(a, b);
    const Rgbd y = sg_inner_product(ra, rb);
    for (int c = 0; c < 3; ++c) EXPECT_LE(rel_err(x[c], y[c]), 1e-9);
  }
}

TEST(CosineSg, Constants) {
  const CosineLobe<double> c = cosine_sg(Vec3d{0, 0, 1});
  EXPECT_EQ(c.lobe.sharpness, 0.0315);
  EXPECT_EQ(c.lobe.amplitude.x, 32.7080);
  EXPECT_EQ(c.offset, 31.7003);
  const Vec3d n{0, 0, 1};
  EXPECT_NEAR(eval_cosine_sg(n, n), 1.0077, 1e-4);
  EXPECT_NEAR(eval_cosine_sg(n, Vec3d{1, 0, 0}), -0.00645, 1e-4);
}

TEST(CosineSg, ErrorBoundAndSign) {
  Rng rng(18);
  const Vec3d n = normalize(Vec3d{0.2, -0.4, 0.7});
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const Vec3d w = random_direction(rng);
    const double approx = eval_cosine_sg(n, w);
    const double exact = dot(w, n);
    worst = std::max(worst, std::abs(approx - exact));
    if (std::abs(exact) > 0.1) {
      ASSERT_EQ(approx > 0.0, exact > 0.0) << exact;
    }
  }
  RecordProperty("cosine_max_abs_error", std::to_string(worst));
  EXPECT_LE(worst, 0.06);
}

TEST(CosineResponse, MatchesProductExpansion) {
  // cosine_response(p, lambda, sigma, s, n) is <G_p G_s, C> - c0 int G_p G_s
  // for unit-amplitude lobes.
  Rng rng(19);
  for (int i = 0; i < 200; ++i) {
    const Vec3d p = random_direction(rng), s = random_direction(rng), n = random_direction(rng);
    const double lambda = test::log_uniform(rng, 0.1, 200.0);
    const double sigma = i % 3 == 0 ? 0.0 : test::log_uniform(rng, 0.1, 200.0);
    const SgLobe gp{p, lambda, {1, 1, 1}};
    SgLobe prod = gp;
    if (sigma > 0.0) prod = sg_product(gp, SgLobe{s, sigma, {1, 1, 1}});
    const CosineLobe<double> c = cosine_sg(n);
    const double want = sg_inner_product(prod, c.lobe).x - c.offset * sg_integral(prod).x;
    const double got = cosine_response(p, lambda, sigma, s, n);
    EXPECT_NEAR(got, want, 1e-9 * std::max(1.0, std::abs(want)));
  }
}

TEST(FitEnvmap, ConstantGrayEnergy) {
  const ImageBuffer gray(64, 32, 3, 0.5);
  const EnvmapFit f = fit_envmap_to_sg(gray, 1);
  ASSERT_EQ(f.lobes.size(), 1u);
  const Rgbd energy = envmap_energy(gray);
  EXPECT_LT(rel_err(sg_integral(f.lobes[0]).x, energy.x), 0.05);
}

TEST(FitEnvmap, SingleTexelGetsDominantLobe) {
  const int w = 64, h = 32;
  ImageBuffer img(w, h, 3, 0.0);
  img.set_rgb(10 * w + 20, {50, 50, 50});
  const EnvmapFit f = fit_envmap_to_sg(img, 16);
  ASSERT_EQ(f.lobes.size(), 16u);
  std::size_t best = 0;
  for (std::size_t j = 1; j < f.lobes.size(); ++j) {
    if (max_component(f.lobes[j].amplitude) > max_component(f.lobes[best].amplitude)) best = j;
  }
  const Vec3d texel = envmap_direction(20, 10, w, h);
  const double angle = std::acos(std::min(1.0, dot(f.lobes[best].axis, texel))) * 180.0 / kPi;
  EXPECT_LT(angle, 5.0);
}

TEST(FitEnvmap, AllBlackGivesZeroLobes) {
  const EnvmapFit f = fit_envmap_to_sg(ImageBuffer(32, 16, 3, 0.0), 4);
  ASSERT_EQ(f.lobes.size(), 4u);
  for (const SgLobe& g : f.lobes) {
    EXPECT_TRUE(is_valid(g));
    EXPECT_EQ(g.amplitude, Rgbd{});
  }
}

TEST(FitEnvmap, RejectsNan) {
  ImageBuffer img(32, 16, 3, 0.2);
  img.data[5] = std::nan("");
  EXPECT_THROW(fit_envmap_to_sg(img, 2), InputError);
}

TEST(FitEnvmap, RoundTripFromKnownMixture) {
  const int w = 64, h = 32;
  Rng rng(3);
  SgMixture truth;
  for (int i = 0; i < 16; ++i) {
    const Vec3d a = fibonacci_direction(i, 16) + random_direction(rng) * 0.15;
    truth.push_back({normalize(a), 5.0 + 35.0 * rng.uniform(),
                     {0.2 + rng.uniform(), 0.2 + rng.uniform(), 0.2 + rng.uniform()}});
  }
  const ImageBuffer clean = render_envmap(truth, w, h);
  double mean = 0.0;
  for (double v : clean.data) mean += v;
  mean /= static_cast<double>(clean.data.size());
  ImageBuffer noisy = clean;
  for (double& v : noisy.data) v = std::max(0.0, v + 0.01 * mean * rng.normal());
  const double synthesis = envmap_l2(noisy, clean);
  const EnvmapFit f = fit_envmap_to_sg(noisy, 16);
  const double recon = envmap_l2(render_envmap(f.lobes, w, h), noisy);
  EXPECT_LE(recon, 1.2 * synthesis) << "synthesis " << synthesis << " recon " << recon;
}

}  // namespace
}  // namespace sgpbr
