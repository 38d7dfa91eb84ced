#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace sgpbr {
namespace {

using ad::Var;
using test::random_direction;

// Shaded-pixel setup shared by the gradient tests.
struct PixelSetup {
  Vec3d n = normalize(Vec3d{0.2, 0.1, 1.0});
  Vec3d wo = normalize(Vec3d{-0.3, 0.2, 1.0});
  Vec3d x{0.1, -0.2, 0.3};
  Vec3d target{0.3, 0.2, 0.1};
  ParameterField field;
  ParameterStore store;
  std::size_t axis = 0, sharp = 0, amp = 0, mat = 0;

  PixelSetup(ParameterField f, const SgMixture& light) : field(std::move(f)) {
    add_light_blocks(store, light);
    axis = store.index(kLightAxisBlock);
    sharp = store.index(kLightSharpnessBlock);
    amp = store.index(kLightAmplitudeBlock);
    const auto p = field.parameters();
    mat = store.add(material_block_name(0), {p.begin(), p.end()});
  }

  Rgb<Var> color(const Bindings& b, const Vec3d& at, const Rgbd* energy = nullptr) const {
    const auto light = light_from_raw<Var>(b[axis], b[sharp], b[amp], energy);
    const MaterialSample<Var> m = field_eval<Var>(field, b[mat], at);
    return shade_point<Var>(n, wo, m, std::span<const SphericalGaussian<Var>>(light));
  }

  LossBuilder loss(const Vec3d& at, const Rgbd* energy = nullptr) const {
    return [this, at, energy](const Bindings& b) {
      const Rgb<Var> c = color(b, at, energy);
      Var l = 0.0;
      for (int k = 0; k < 3; ++k) l = l + (c[k] - target[k]) * (c[k] - target[k]);
      return l;
    };
  }
};

SgMixture test_light() {
  return {{normalize(Vec3d{0.1, 0.3, 1.0}), 8.0, {1.0, 0.9, 0.8}},
          {normalize(Vec3d{-0.5, 0.2, 0.8}), 20.0, {0.6, 0.7, 0.9}},
          {normalize(Vec3d{0.4, -0.6, 0.5}), 3.0, {0.3, 0.3, 0.4}}};
}

/// Gradients of `loss` at the store's current values.
std::vector<std::vector<double>> gradients(ParameterStore store, const LossBuilder& loss) {
  store.zero_grad();
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const Bindings b = bind(store, tape);
  backward(tape, loss(b), store, b);
  std::vector<std::vector<double>> g;
  for (const auto& blk : store.blocks()) g.push_back(blk.grad);
  return g;
}

TEST(PositionalEncoding, ZeroInput) {
  for (int order : {0, 1, 4, 10}) {
    const std::vector<double> e = positional_encoding(Vec3d{}, order);
    ASSERT_EQ(e.size(), static_cast<std::size_t>(6 * order + 3));
    for (int a = 0; a < 3; ++a) EXPECT_EQ(e[a], 0.0);
    for (int k = 0; k < order; ++k) {
      for (int a = 0; a < 3; ++a) {
        EXPECT_EQ(e[3 + 6 * k + a], 0.0);
        EXPECT_EQ(e[3 + 6 * k + 3 + a], 1.0);
      }
    }
  }
}

TEST(PositionalEncoding, OrderZeroIsIdentity) {
  const Vec3d x{0.3, -1.2, 2.5};
  EXPECT_EQ(positional_encoding(x, 0), (std::vector<double>{0.3, -1.2, 2.5}));
}

TEST(PositionalEncoding, OrderTenLayout) {
  const Vec3d x{0.3, -0.7, 0.11};
  const std::vector<double> e = positional_encoding(x, 10);
  ASSERT_EQ(e.size(), 63u);
  EXPECT_EQ(encoded_size(10), 63);
  for (int k = 0; k < 10; ++k) {
    const double f = std::ldexp(kPi, k);
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(e[3 + 6 * k + a], std::sin(f * x[a]), 1e-12);
      EXPECT_NEAR(e[3 + 6 * k + 3 + a], std::cos(f * x[a]), 1e-12);
    }
  }
}

TEST(FieldEval, ConstantIgnoresPosition) {
  const Material m{{0.5, 0.5, 0.5}, 0.4, 0.0, 0.5};
  const ParameterField f = make_constant_field(m);
  Rng rng(51);
  for (int i = 0; i < 100; ++i) {
    const Material got = field_eval(f, random_direction(rng) * (10.0 * rng.uniform()));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(got.albedo[c], 0.5, 1e-12);
    EXPECT_NEAR(got.roughness, 0.4, 1e-12);
    EXPECT_NEAR(got.metallic, 0.0, 1e-12);
    EXPECT_NEAR(got.specular, 0.5, 1e-12);
  }
}

TEST(FieldEval, UniformGridIsConstant) {
  const Material m{{0.2, 0.6, 0.9}, 0.3, 0.7, 0.5};
  const ParameterField f = make_grid_field({-1, -1, -1}, 0.25, 9, m);
  const Material ref = field_eval(f, Vec3d{});
  Rng rng(52);
  for (int i = 0; i < 200; ++i) {
    // Includes points outside the grid, which clamp to its bounds.
    const Material got = field_eval(f, random_direction(rng) * (3.0 * rng.uniform()));
    EXPECT_NEAR(length(got.albedo - ref.albedo), 0.0, 1e-14);
    EXPECT_NEAR(got.roughness, ref.roughness, 1e-14);
    EXPECT_NEAR(got.metallic, ref.metallic, 1e-14);
  }
  EXPECT_NEAR(ref.albedo.y, 0.6, 1e-12);
}

TEST(FieldEval, GridClampsOutsideBounds) {
  ParameterField f = make_grid_field({0, 0, 0}, 1.0, 2, Material{});
  auto p = f.parameters();
  Rng rng(53);
  for (double& v : p) v = 4.0 * rng.uniform() - 2.0;
  const Material in = field_eval(f, Vec3d{1.0, 1.0, 0.0});
  const Material out = field_eval(f, Vec3d{5.0, 3.0, -2.0});
  EXPECT_EQ(in.albedo, out.albedo);
  EXPECT_EQ(in.roughness, out.roughness);
}

TEST(FieldEval, NeuralDeterministicAndValid) {
  const ParameterField f = make_neural_field(7, 10, 128, 4);
  Rng rng(54);
  for (int i = 0; i < 20; ++i) {
    const Vec3d x = random_direction(rng) * rng.uniform();
    const Material a = field_eval(f, x), b = field_eval(f, x);
    EXPECT_EQ(a.albedo, b.albedo);
    EXPECT_EQ(a.roughness, b.roughness);
    EXPECT_EQ(a.metallic, b.metallic);
    EXPECT_EQ(a.specular, b.specular);
    EXPECT_TRUE(is_valid(a));
  }
}

TEST(FieldEval, StrictlyInsideUnitInterval) {
  Rng rng(55);
  ParameterField grid = make_grid_field({-1, -1, -1}, 0.5, 5, Material{});
  for (double& v : grid.parameters()) v = 30.0 * (2.0 * rng.uniform() - 1.0);
  const ParameterField neural = make_neural_field(8, 4, 32, 2);
  for (int i = 0; i < 500; ++i) {
    const Vec3d x = random_direction(rng) * (1.5 * rng.uniform());
    for (const ParameterField* f : std::array<const ParameterField*, 2>{&grid, &neural}) {
      const auto ch = material_channels(field_eval(*f, x));
      for (double c : ch) {
        EXPECT_GT(c, 0.0);
        EXPECT_LT(c, 1.0);
      }
    }
  }
}

TEST(FieldEval, GridGradientScattersToCorners) {
  ParameterField f = make_grid_field({0, 0, 0}, 0.5, 3, Material{});
  Rng rng(56);
  for (double& v : f.parameters()) v = 2.0 * rng.uniform() - 1.0;
  const Vec3d x{0.3, 0.6, 0.85};
  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::vector<Var> leaves;
  for (double v : f.parameters()) leaves.push_back(tape.leaf(v));
  const MaterialSample<Var> m = field_eval<Var>(f, leaves, x);
  const std::vector<double> adj = tape.adjoints(m.roughness);
  const double s = m.roughness.v;
  const double bound = s * (1.0 - s);
  double total = 0.0;
  int touched = 0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const double g = adj[static_cast<std::size_t>(leaves[i].id)];
    if (i % kMaterialChannels != 3) {
      EXPECT_EQ(g, 0.0);
      continue;
    }
    EXPECT_LE(g, bound + 1e-15);
    EXPECT_GE(g, 0.0);
    total += g;
    if (g > 0.0) ++touched;
  }
  // The corner weights sum to one.
  EXPECT_NEAR(total, bound, 1e-14);
  EXPECT_EQ(touched, 8);
}

TEST(FieldEval, SaturatedGradientVanishes) {
  ParameterField f = make_constant_field(Material{});
  for (double& v : f.parameters()) v = 40.0;
  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::vector<Var> leaves;
  for (double v : f.parameters()) leaves.push_back(tape.leaf(v));
  const MaterialSample<Var> m = field_eval<Var>(f, leaves, Vec3d{});
  const std::vector<double> adj = tape.adjoints(m.albedo.x);
  EXPECT_LT(adj[static_cast<std::size_t>(leaves[0].id)], 1e-15);
}

TEST(Backward, LinearLoss) {
  ParameterStore store;
  store.add("p", {1.5, -2.0});
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const Bindings b = bind(store, tape);
  EXPECT_TRUE(backward(tape, b[0][1] * 3.25, store, b));
  EXPECT_EQ(store.block("p").grad, (std::vector<double>{0.0, 3.25}));
}

TEST(Backward, DisconnectedLossFlagged) {
  ParameterStore store;
  store.add("p", {1.0, 2.0});
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const Bindings b = bind(store, tape);
  EXPECT_FALSE(backward(tape, Var(4.0), store, b));
  const Var other = tape.leaf(2.0);
  EXPECT_FALSE(backward(tape, other * other, store, b));
  EXPECT_EQ(store.block("p").grad, (std::vector<double>{0.0, 0.0}));
}

TEST(Backward, AlbedoGradientSignMatchesFiniteDifference) {
  PixelSetup px(make_constant_field({{0.5, 0.4, 0.3}, 0.5, 0.2, 0.5}), test_light());
  const LossBuilder loss = px.loss(px.x);
  const auto g = gradients(px.store, loss);
  for (std::size_t k = 0; k < 3; ++k) {
    ParameterStore s = px.store;
    const double h = 1e-4;
    s.block(px.mat).values[k] += h;
    const double lp = evaluate_loss(s, loss);
    s.block(px.mat).values[k] -= 2.0 * h;
    const double lm = evaluate_loss(s, loss);
    const double fd = (lp - lm) / (2.0 * h);
    ASSERT_GT(std::abs(fd), 1e-6);
    EXPECT_EQ(std::signbit(fd), std::signbit(g[px.mat][k])) << "channel " << k;
  }
}

TEST(Backward, MetallicDecoupledWhenPathwayIsZero) {
  // Black albedo and zero specular under white light at normal view: metallic
  // enters only through terms multiplied by zero.
  ParameterField f = make_constant_field(Material{});
  auto p = f.parameters();
  p[0] = p[1] = p[2] = -40.0;  // albedo
  p[3] = 0.0;                  // roughness 0.5
  p[4] = 0.3;                  // metallic
  p[5] = -40.0;                // specular
  PixelSetup px(f, {{{0, 0, 1}, 4.0, {1.0, 1.0, 1.0}}});
  px.n = {0, 0, 1};
  px.wo = {0, 0, 1};
  const auto g = gradients(px.store, px.loss(px.x));
  EXPECT_LT(std::abs(g[px.mat][4]), 1e-8);
}

TEST(FiniteDifference, QuadraticToyLoss) {
  ParameterStore store;
  store.add("a", {0.3, -1.2, 2.0});
  store.add("b", {0.7});
  const LossBuilder loss = [](const Bindings& b) {
    return 3.0 * b[0][0] * b[0][0] + b[0][1] * b[1][0] - 0.5 * b[0][2] * b[0][2] + 2.0 * b[1][0];
  };
  const FdReport r = finite_difference_check(store, loss, 1e-4, 1);
  EXPECT_EQ(r.checked, 4u);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(FiniteDifference, RejectsNonDeterministicLoss) {
  ParameterStore store;
  store.add("a", {1.0});
  int calls = 0;
  const LossBuilder loss = [&calls](const Bindings& b) { return b[0][0] * static_cast<double>(++calls); };
  EXPECT_THROW(finite_difference_check(store, loss), InputError);
}

TEST(FiniteDifference, ShadingPipelineConstantField) {
  PixelSetup px(make_constant_field({{0.6, 0.5, 0.4}, 0.45, 0.3, 0.5}), test_light());
  const FdReport r = finite_difference_check(px.store, px.loss(px.x), 1e-4, 2);
  EXPECT_EQ(r.checked, 9u + 3u + 9u + 6u);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_block << "[" << r.worst_index << "]";
}

TEST(FiniteDifference, ShadingPipelineFixedEnergy) {
  PixelSetup px(make_constant_field({{0.6, 0.5, 0.4}, 0.45, 0.3, 0.5}), test_light());
  const Rgbd energy{6.0, 5.0, 4.0};
  const FdReport r = finite_difference_check(px.store, px.loss(px.x, &energy), 1e-4, 3);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_block << "[" << r.worst_index << "]";
}

TEST(FiniteDifference, ShadingPipelineGridField) {
  ParameterField f = make_grid_field({-1, -1, -1}, 0.5, 5, Material{});
  Rng rng(57);
  for (double& v : f.parameters()) v = 2.0 * rng.uniform() - 1.0;
  PixelSetup px(f, test_light());
  const FdReport r = finite_difference_check(px.store, px.loss(px.x), 1e-4, 4);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_block << "[" << r.worst_index << "]";
}

TEST(FiniteDifference, NeuralFieldThroughShadedPixel) {
  PixelSetup px(make_neural_field(9, 10, 128, 4), test_light());
  const FdReport r = finite_difference_check(px.store, px.loss(px.x), 1e-4, 5);
  EXPECT_GE(r.checked, 64u);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_block << "[" << r.worst_index << "]";
}

TEST(Gradient, Linearity) {
  PixelSetup px(make_grid_field({-1, -1, -1}, 0.5, 5, {{0.6, 0.5, 0.4}, 0.45, 0.3, 0.5}),
                test_light());
  const LossBuilder l1 = px.loss(px.x);
  const LossBuilder l2 = px.loss(Vec3d{-0.4, 0.35, 0.1});
  const double a = 1.7, b = -0.6;
  const auto g1 = gradients(px.store, l1);
  const auto g2 = gradients(px.store, l2);
  const auto g = gradients(px.store, [&](const Bindings& bb) { return a * l1(bb) + b * l2(bb); });
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t k = 0; k < g[i].size(); ++k) {
      EXPECT_NEAR(g[i][k], a * g1[i][k] + b * g2[i][k], 1e-9);
    }
  }
}

TEST(Gradient, ZeroingContract) {
  PixelSetup px(make_constant_field({{0.6, 0.5, 0.4}, 0.45, 0.3, 0.5}), test_light());
  const LossBuilder loss = px.loss(px.x);
  std::vector<std::vector<double>> first;
  for (int pass = 0; pass < 2; ++pass) {
    px.store.zero_grad();
    ad::Tape tape;
    ad::TapeScope scope(tape);
    const Bindings b = bind(px.store, tape);
    backward(tape, loss(b), px.store, b);
    std::vector<std::vector<double>> g;
    for (const auto& blk : px.store.blocks()) g.push_back(blk.grad);
    if (pass == 0) {
      first = g;
    } else {
      EXPECT_EQ(g, first);
    }
  }
  // Without zeroing the buffers accumulate.
  {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    const Bindings b = bind(px.store, tape);
    backward(tape, loss(b), px.store, b);
  }
  EXPECT_NEAR(px.store.block(px.mat).grad[0], 2.0 * first[px.mat][0], 1e-15);
}

TEST(Gradient, ShapesMirrorParameters) {
  PixelSetup px(make_neural_field(10, 2, 16, 2), test_light());
  for (const auto& blk : px.store.blocks()) EXPECT_EQ(blk.grad.size(), blk.values.size());
  EXPECT_EQ(px.store.block(px.axis).values.size(), 9u);
  EXPECT_EQ(px.store.block(px.sharp).values.size(), 3u);
  EXPECT_THROW(px.store.add(material_block_name(0), {}), InputError);
}

TEST(LightBlocks, RoundTripAndConstraints) {
  ParameterStore store;
  const SgMixture light = test_light();
  add_light_blocks(store, light);
  const SgMixture back = read_light(store);
  ASSERT_EQ(back.size(), light.size());
  for (std::size_t j = 0; j < light.size(); ++j) {
    EXPECT_NEAR(length(back[j].axis - light[j].axis), 0.0, 1e-14);
    EXPECT_NEAR(back[j].sharpness, light[j].sharpness, 1e-12);
    EXPECT_NEAR(length(back[j].amplitude - light[j].amplitude), 0.0, 1e-12);
  }
  // Arbitrary raw values still give valid lobes.
  Rng rng(58);
  for (double& v : store.block(kLightSharpnessBlock).values) v = 10.0 * rng.uniform() - 5.0;
  for (double& v : store.block(kLightAmplitudeBlock).values) v = 20.0 * rng.uniform() - 10.0;
  for (const SgLobe& g : read_light(store)) {
    EXPECT_GT(g.sharpness, 0.0);
    for (int c = 0; c < 3; ++c) EXPECT_GT(g.amplitude[c], 0.0);
  }
}

TEST(LightBlocks, FixedEnergyRescales) {
  ParameterStore store;
  add_light_blocks(store, test_light());
  const Rgbd energy{2.0, 3.0, 4.0};
  const Rgbd total = mixture_integral(read_light(store, &energy));
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(total[c], energy[c], 1e-12);
}

TEST(LightBlocks, AxisReprojection) {
  ParameterStore store;
  add_light_blocks(store, test_light());
  Rng rng(59);
  for (int step = 0; step < 100; ++step) {
    for (double& v : store.block(kLightAxisBlock).values) v += 0.1 * (2.0 * rng.uniform() - 1.0);
    reproject_light_axes(store);
    const auto& a = store.block(kLightAxisBlock).values;
    for (std::size_t j = 0; j < a.size(); j += 3) {
      EXPECT_NEAR(std::sqrt(a[j] * a[j] + a[j + 1] * a[j + 1] + a[j + 2] * a[j + 2]), 1.0, 1e-6);
    }
  }
  for (double& v : store.block(kLightAxisBlock).values) v = 0.0;
  EXPECT_THROW(reproject_light_axes(store), NumericalError);
}

}  // namespace
}  // namespace sgpbr
