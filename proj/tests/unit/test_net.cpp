#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "gace/adam.hpp"
#include "gace/gace_net.hpp"
#include "gace/model_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gace;
using gace::testing::random_detection;
using gace::testing::uniform;
using gace::testing::uniform_int;
using gace::testing::TinyFrame;
using gace::testing::relative_error;

namespace {

constexpr ModelShape kTinyShape{6, 5, 4};

}  // namespace

TEST_CASE("mlp forward examples") {
  SUBCASE("zero weights give the activated bias") {
    const std::size_t dims[] = {3, 2};
    auto m = MlpParams::zeros(dims, Activation::kRelu, Activation::kIdentity);
    m.layers[0].bias << 0.5, -2.0;
    const auto y = mlp_forward(m, Eigen::Vector3d(1, 2, 3));
    CHECK(y(0) == 0.5);
    CHECK(y(1) == -2.0);
    m.layers[0].activation = Activation::kRelu;
    CHECK(mlp_forward(m, Eigen::Vector3d(1, 2, 3))(1) == 0.0);
  }
  SUBCASE("identity weights with rectifier") {
    const std::size_t dims[] = {2, 2};
    auto m = MlpParams::zeros(dims, Activation::kRelu, Activation::kRelu);
    m.layers[0].weight.setIdentity();
    const auto y = mlp_forward(m, Eigen::Vector2d(-1, 2));
    CHECK(y(0) == 0.0);
    CHECK(y(1) == 2.0);
  }
  SUBCASE("shape mismatch is an error") {
    const std::size_t dims[] = {2, 2};
    const auto m = MlpParams::zeros(dims, Activation::kRelu, Activation::kIdentity);
    CHECK_THROWS_AS(mlp_forward(m, Eigen::Vector3d(1, 2, 3)), std::invalid_argument);
    auto broken = m;
    broken.layers.push_back(broken.layers[0]);
    broken.layers[1].weight.resize(2, 3);
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    const std::size_t one[] = {2};
    CHECK_THROWS_AS(MlpParams::zeros(one, Activation::kRelu, Activation::kIdentity),
                    std::invalid_argument);
  }
}

TEST_CASE("mlp forward matches a straight-line computation") {
  std::mt19937_64 rng(41);
  const std::size_t dims[] = {3, 7, 2};
  auto m = MlpParams::zeros(dims, Activation::kRelu, Activation::kLogistic);
  init_fan_in_uniform(m, rng);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Vector3d x(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
    std::vector<double> hidden(7);
    for (int h = 0; h < 7; ++h) {
      double acc = m.layers[0].bias(h);
      for (int i = 0; i < 3; ++i) acc += m.layers[0].weight(h, i) * x(i);
      hidden[static_cast<std::size_t>(h)] = acc > 0 ? acc : 0.0;
    }
    const auto y = mlp_forward(m, x);
    for (int o = 0; o < 2; ++o) {
      double acc = m.layers[1].bias(o);
      for (int h = 0; h < 7; ++h) acc += m.layers[1].weight(o, h) * hidden[static_cast<std::size_t>(h)];
      CHECK(std::abs(y(o) - 1.0 / (1.0 + std::exp(-acc))) < 1e-12);
    }
  }
  // Initialization stays inside the fan-in bound.
  for (const auto& l : m.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim()));
    CHECK(l.weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(l.bias.cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("max pool examples") {
  const std::vector<Eigen::VectorXd> two = {Eigen::Vector2d(1, 5), Eigen::Vector2d(3, 2)};
  CHECK(max_pool(two, 2) == Eigen::Vector2d(3, 5));
  const std::vector<Eigen::VectorXd> reversed = {two[1], two[0]};
  CHECK(max_pool(reversed, 2) == Eigen::Vector2d(3, 5));
  CHECK(max_pool(std::span(two).first(1), 2) == two[0]);
  CHECK(max_pool({}, 4) == Eigen::VectorXd::Zero(4));
  const std::vector<Eigen::VectorXd> ragged = {Eigen::Vector2d(1, 5), Eigen::Vector3d(1, 2, 3)};
  CHECK_THROWS_AS(max_pool(ragged, 2), std::invalid_argument);
}

TEST_CASE("focal and regression loss values") {
  CHECK(focal_loss(0.5, 1, 0.0, 0.5) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK(focal_loss(0.5, 1, 0.0, 0.5) == doctest::Approx(0.34657).epsilon(1e-5));
  CHECK(focal_loss(1.0 - 1e-7, 1, 2.0, 0.25) < 1e-15);
  CHECK(focal_loss(1.0, 1, 2.0, 0.25) < 1e-15);  // clamped, finite
  CHECK(std::isfinite(focal_loss(0.0, 1, 2.0, 0.25)));
  CHECK(focal_loss(0.9, 1, 2.0, 0.25) == doctest::Approx(2.6341e-4).epsilon(1e-4));
  CHECK(focal_loss(0.9, 1, 2.0, 0.25) ==
        doctest::Approx(0.25 * 0.01 * -std::log(0.9)).epsilon(1e-12));
  // Negative labels use 1 - s and 1 - alpha.
  CHECK(focal_loss(0.1, 0, 2.0, 0.25) == doctest::Approx(0.75 * 0.01 * -std::log(0.9)));
  // Analytic derivative against central differences.
  for (const double s : {0.05, 0.3, 0.5, 0.77, 0.95}) {
    for (const int u : {0, 1}) {
      for (const double gamma : {0.0, 0.5, 2.0}) {
        const double h = 1e-6;
        const double fd = (focal_loss(s + h, u, gamma, 0.25) - focal_loss(s - h, u, gamma, 0.25)) / (2 * h);
        CHECK(relative_error(focal_loss_grad(s, u, gamma, 0.25), fd) < 1e-6);
      }
    }
  }
  CHECK(focal_loss_grad(1.0, 1, 2.0, 0.25) == 0.0);

  CHECK(iou_l1_loss(0.4, 0.4) == 0.0);
  CHECK(iou_l1_loss(0.3, 0.8) == doctest::Approx(0.5));
  CHECK(iou_l1_loss(0.8, 0.3) == iou_l1_loss(0.3, 0.8));
}

TEST_CASE("total loss") {
  const std::vector<double> s = {0.9, 0.2}, vh = {0.5, 0.1}, v = {0.7, 0.0};
  const std::vector<std::uint8_t> u = {1, 0};
  LossConfig lc;
  const auto parts = total_loss(s, vh, u, v, lc);
  const double focal = (focal_loss(0.9, 1, 2, 0.25) + focal_loss(0.2, 0, 2, 0.25)) / 2;
  CHECK(parts.focal == doctest::Approx(focal));
  CHECK(parts.iou_l1 == doctest::Approx(0.15));
  CHECK(parts.total == doctest::Approx(focal + 0.5 * 0.15));
  lc.lambda_iou = 0.0;
  CHECK(total_loss(s, vh, u, v, lc).total == doctest::Approx(focal));
  CHECK(LossConfig{}.lambda_iou == 0.5);
  const std::vector<double> perfect_s = {1.0}, perfect_v = {0.6};
  const std::vector<std::uint8_t> one = {1};
  CHECK(total_loss(perfect_s, perfect_v, one, perfect_v, LossConfig{}).total < 1e-12);
  CHECK_THROWS_AS(total_loss({}, {}, {}, {}, lc), std::invalid_argument);
  CHECK_THROWS_AS(total_loss(s, vh, one, v, lc), std::invalid_argument);
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 rng(42);
  NormConfig cfg;
  cfg.radius = 5.0;
  const LossConfig lc;
  const double h = 1e-4;
  gace::testing::GradientCheck result;
  for (int trial = 0; trial < 20; ++trial) {
    // Trial 0 has no neighbors, trial 1 a lone detection, the rest are crowded.
    const std::size_t n = trial == 1 ? 1 : uniform_int(rng, 2, 6);
    const TinyFrame f = gace::testing::make_tiny_frame(rng, n, cfg, trial == 0 ? 200.0 : 3.0);
    if (trial == 0) REQUIRE(f.inputs.pair_count() == 0);
    auto model = GaceModel::create(cfg, kTinyShape, FeatureGroups::all(), true,
                                   static_cast<std::uint64_t>(trial));
    gace::testing::check_gradients(model, f, lc, h, result);
  }
  const auto [checked, kinks, worst] = result;
  MESSAGE("checked " << checked << ", kinks skipped " << kinks << ", worst " << worst);
  CHECK(worst < 1e-4);
  CHECK(static_cast<double>(kinks) < 0.02 * static_cast<double>(checked));
}

TEST_CASE("masked inputs get exactly zero gradient and detach stops neighbor flow") {
  std::mt19937_64 rng(43);
  NormConfig cfg;
  FeatureGroups groups;
  groups.statistics = false;
  groups.viewing_angle = false;
  const TinyFrame f = gace::testing::make_tiny_frame(rng, 5, cfg, 3.0);
  auto model = GaceModel::create(cfg, kTinyShape, groups, true, 9);
  ForwardState<double> st;
  gace_forward(model.params, f.inputs, st);
  auto grads = GaceGradients::zeros_like(model.params);
  BackwardOptions opts;
  opts.want_input_gradient = true;
  accumulate_gradients(model.params, f.inputs, st, f.u, f.v, LossConfig{}, 5, opts, grads);
  const auto mask = ablation_mask(groups, cfg);
  REQUIRE(grads.d_instance_input.rows() == static_cast<Eigen::Index>(mask.size()));
  bool any_nonzero = false;
  for (std::size_t r = 0; r < mask.size(); ++r) {
    for (Eigen::Index c = 0; c < grads.d_instance_input.cols(); ++c) {
      const double g = grads.d_instance_input(static_cast<Eigen::Index>(r), c);
      if (mask[r] == 0.0) CHECK(g == 0.0);
      any_nonzero |= g != 0.0;
    }
  }
  CHECK(any_nonzero);
  // First-layer weight columns feeding masked entries never move.
  const auto& w = grads.instance_net.layers[0].weight;
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (mask[r] == 0.0) CHECK(w.col(static_cast<Eigen::Index>(r)).cwiseAbs().maxCoeff() == 0.0);
  }

  // Detaching neighbor embeddings changes only the instance network gradient.
  auto detached = GaceGradients::zeros_like(model.params);
  opts.detach_neighbor_embeddings = true;
  accumulate_gradients(model.params, f.inputs, st, f.u, f.v, LossConfig{}, 5, opts, detached);
  REQUIRE(f.inputs.pair_count() > 0);
  CHECK(detached.fusion_net.layers[0].weight == grads.fusion_net.layers[0].weight);
  CHECK(detached.context_net.layers[0].weight == grads.context_net.layers[0].weight);
  CHECK(detached.instance_net.layers[0].weight != grads.instance_net.layers[0].weight);
}

TEST_CASE("saturated outputs give finite zero gradients") {
  std::mt19937_64 rng(44);
  const NormConfig cfg;
  TinyFrame f = gace::testing::make_tiny_frame(rng, 3, cfg, 3.0);
  auto model = GaceModel::create(cfg, kTinyShape, FeatureGroups::all(), true, 1);
  // A huge score bias drives the logistic into the clamp for positive labels.
  model.params.fusion_net.layers[1].bias(0) = 1e3;
  std::fill(f.u.begin(), f.u.end(), 1);
  ForwardState<double> st;
  gace_forward(model.params, f.inputs, st);
  for (Eigen::Index i = 0; i < 3; ++i) f.v[static_cast<std::size_t>(i)] = st.v_hat(i);
  auto grads = GaceGradients::zeros_like(model.params);
  const auto sums =
      accumulate_gradients(model.params, f.inputs, st, f.u, f.v, LossConfig{}, 3, {}, grads);
  CHECK(std::isfinite(sums.total));
  for (const auto block : parameter_blocks(grads)) {
    for (const double g : block) CHECK(g == 0.0);
  }
}

TEST_CASE("forward properties") {
  std::mt19937_64 rng(45);
  NormConfig cfg;
  cfg.radius = 6.0;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = uniform_int(rng, 1, 12);
    const TinyFrame f = gace::testing::make_tiny_frame(rng, n, cfg, 5.0);
    const auto model = GaceModel::create(cfg, ModelShape{16, 8, 8}, FeatureGroups::all(), true,
                                         static_cast<std::uint64_t>(trial));
    ForwardState<double> st;
    gace_forward(model.params, f.inputs, st);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      CHECK(st.s_hat(i) > 0.0);
      CHECK(st.s_hat(i) < 1.0);
      CHECK(st.v_hat(i) > 0.0);
      CHECK(st.v_hat(i) < 1.0);
      if (f.inputs.pair_offsets[static_cast<std::size_t>(i)] ==
          f.inputs.pair_offsets[static_cast<std::size_t>(i) + 1]) {
        CHECK(st.f_context.col(i).isZero(0));
      }
    }

    // Reordering detections reorders outputs.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Detection> pd;
    for (const auto p : perm) pd.push_back(f.dets[p]);
    const auto pin = build_frame_inputs(pd, f.cloud, cfg);
    ForwardState<double> pst;
    gace_forward(model.params, pin, pst);
    for (std::size_t k = 0; k < n; ++k) {
      const auto a = static_cast<Eigen::Index>(perm[k]), b = static_cast<Eigen::Index>(k);
      CHECK(pst.s_hat(b) == doctest::Approx(st.s_hat(a)).epsilon(1e-12));
      CHECK(pst.v_hat(b) == doctest::Approx(st.v_hat(a)).epsilon(1e-12));
    }

    // Reordering or duplicating neighbors leaves the context signature unchanged.
    std::vector<std::vector<std::uint32_t>> lists(n);
    for (std::size_t i = 0; i < n; ++i) {
      lists[i].assign(f.inputs.pair_neighbor.begin() + f.inputs.pair_offsets[i],
                      f.inputs.pair_neighbor.begin() + f.inputs.pair_offsets[i + 1]);
      std::shuffle(lists[i].begin(), lists[i].end(), rng);
      if (!lists[i].empty()) lists[i].push_back(lists[i].front());
    }
    FrameInputs dup = f.inputs;
    set_neighbors(dup, f.dets, lists, cfg);
    ForwardState<double> dst;
    gace_forward(model.params, dup, dst);
    CHECK((dst.f_context - st.f_context).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((dst.s_hat - st.s_hat).cwiseAbs().maxCoeff() < 1e-12);

    // Without context the signature is zero.
    auto no_ctx = model.params;
    no_ctx.use_context = false;
    ForwardState<double> nst;
    gace_forward(no_ctx, f.inputs, nst);
    CHECK(nst.f_context.isZero(0));
  }
}

TEST_CASE("blocked inference equals the cached forward") {
  std::mt19937_64 rng(46);
  NormConfig cfg;
  cfg.radius = 30.0;
  const TinyFrame f = gace::testing::make_tiny_frame(rng, 90, cfg, 20.0);
  REQUIRE(f.inputs.pair_count() > 1000);
  const auto model = GaceModel::create(cfg, ModelShape{}, FeatureGroups::all(), true, 3);
  const auto fp = model.params.cast<float>();
  ForwardState<float> cached, blocked;
  blocked.keep_pair_cache = false;
  gace_forward(fp, f.inputs, cached);
  gace_forward(fp, f.inputs, blocked);
  CHECK(blocked.pair_out.size() == 0);
  CHECK(blocked.argmax == cached.argmax);
  CHECK((blocked.s_hat - cached.s_hat).cwiseAbs().maxCoeff() < 1e-6f);
  CHECK((blocked.f_context - cached.f_context).cwiseAbs().maxCoeff() < 1e-5f);
  // Single precision tracks the double forward.
  ForwardState<double> dst;
  gace_forward(model.params, f.inputs, dst);
  CHECK((dst.s_hat - cached.s_hat.cast<double>()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("adam updates") {
  std::vector<double> p = {1.0, -2.0, 0.5}, g = {0.0, 0.0, 0.0};
  std::vector<std::span<double>> ps = {p}, gs = {g};
  auto state = AdamState::zeros_like(ps);
  const AdamConfig cfg;
  adam_step(ps, gs, state, cfg);
  CHECK(p == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(state.step == 1);

  g = {3.0, -0.2, 1e-3};
  auto fresh = AdamState::zeros_like(ps);
  const auto before = p;
  adam_step(ps, gs, fresh, cfg);
  for (std::size_t i = 0; i < p.size(); ++i) {
    // Bias correction makes the first step lr * g / (|g| + eps).
    const double expected = -cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps);
    CHECK(p[i] - before[i] == doctest::Approx(expected).epsilon(1e-9));
  }

  std::vector<double> wrong = {1.0};
  std::vector<std::span<double>> ws = {wrong};
  CHECK_THROWS_AS(adam_step(ws, gs, fresh, cfg), std::invalid_argument);
}

TEST_CASE("training steps are deterministic and reduce the loss") {
  NormConfig cfg;
  cfg.radius = 5.0;
  const LossConfig lc;
  // Separable toy task: label 1 exactly when the base score is high.
  std::mt19937_64 rng(47);
  std::vector<TinyFrame> frames;
  for (int k = 0; k < 4; ++k) {
    TinyFrame f = gace::testing::make_tiny_frame(rng, 6, cfg, 4.0);
    for (std::size_t i = 0; i < f.dets.size(); ++i) {
      f.u[i] = f.dets[i].score > 0.5 ? 1 : 0;
      f.v[i] = f.dets[i].score;
    }
    frames.push_back(std::move(f));
  }
  auto run = [&](std::vector<double>* losses) {
    auto model = GaceModel::create(cfg, ModelShape{16, 8, 8}, FeatureGroups::all(), true, 5);
    auto state = AdamState::zeros_like(parameter_blocks(model.params));
    AdamConfig ac;
    ac.lr = 0.01;
    for (int step = 0; step < 50; ++step) {
      auto grads = GaceGradients::zeros_like(model.params);
      double total = 0.0;
      for (const auto& f : frames) {
        ForwardState<double> st;
        gace_forward(model.params, f.inputs, st);
        total += accumulate_gradients(model.params, f.inputs, st, f.u, f.v, lc, 24.0, {}, grads)
                     .total;
      }
      if (losses) losses->push_back(total / 24.0);
      adam_step(parameter_blocks(model.params), parameter_blocks(grads), state, ac);
    }
    return serialize_model(model);
  };
  std::vector<double> losses;
  const auto a = run(&losses);
  const auto b = run(nullptr);
  CHECK(a == b);
  int rises = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) rises += losses[i] > losses[i - 1];
  CHECK(rises <= 5);
  CHECK(losses.back() < 0.5 * losses.front());
}

TEST_CASE("model file round trip") {
  NormConfig cfg;
  cfg.radius = 15.0;
  cfg.use_elongation = false;
  FeatureGroups groups;
  groups.box = false;
  groups.keep_score = true;
  auto model = GaceModel::create(cfg, kTinyShape, groups, false, 77);
  const auto bytes = serialize_model(model);
  REQUIRE(bytes.size() > 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "GACE");
  const auto loaded = deserialize_model(bytes);
  CHECK(serialize_model(loaded) == bytes);
  CHECK(loaded.norm == cfg);
  CHECK(loaded.groups == groups);
  CHECK(loaded.shape == kTinyShape);
  CHECK(loaded.seed == 77);
  CHECK_FALSE(loaded.params.use_context);
  model.round_to_storage_precision();
  CHECK(loaded.params.instance_net.layers[0].weight == model.params.instance_net.layers[0].weight);
  CHECK(loaded.params.input_mask == model.params.input_mask);

  const auto dir = std::filesystem::temp_directory_path() / "gace_test_net_model";
  std::filesystem::create_directories(dir);
  save_model(loaded, dir / "m.bin");
  CHECK(serialize_model(load_model(dir / "m.bin")) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_model(bad), ModelFormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(deserialize_model(truncated), ModelFormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_model(trailing), ModelFormatError);
  CHECK_THROWS_AS(load_model(dir / "missing.bin"), std::exception);
  std::filesystem::remove_all(dir);
}
