#include <catch2/catch_amalgamated.hpp>

#include "flowlab/mlp.hpp"
#include "flowlab/optim.hpp"
#include "test_util.hpp"

using namespace flowlab;

TEST_CASE("mlp forward: zero weights pass bias through activation") {
  MlpSpec spec;
  spec.widths = {3, 2};
  spec.activations = {Activation::kTanh};
  Rng rng(1);
  Mlp mlp = make_mlp(spec, "net", rng);
  mlp.weight(0).values.setZero();
  mlp.bias(0).values << 0.3, -1.2;

  const Eigen::VectorXd out = mlp_forward(mlp, Eigen::Vector3d(1.0, 2.0, 3.0));
  CHECK(out(0) == Catch::Approx(std::tanh(0.3)).margin(1e-15));
  CHECK(out(1) == Catch::Approx(std::tanh(-1.2)).margin(1e-15));
}

TEST_CASE("mlp forward: identity layer with identity weights") {
  MlpSpec spec;
  spec.widths = {4, 4};
  spec.activations = {Activation::kIdentity};
  Rng rng(2);
  Mlp mlp = make_mlp(spec, "net", rng);
  mlp.weight(0).values = Eigen::MatrixXd::Identity(4, 4);
  mlp.bias(0).values.setZero();

  Eigen::VectorXd x(4);
  x << 0.1, -0.2, 0.3, 5.0;
  CHECK((mlp_forward(mlp, x) - x).norm() == 0.0);
}

TEST_CASE("mlp forward: fixed 2-3-1 tanh net matches scalar recomputation") {
  MlpSpec spec;
  spec.widths = {2, 3, 1};
  spec.activations = {Activation::kTanh, Activation::kTanh};
  Rng rng(3);
  Mlp mlp = make_mlp(spec, "net", rng);
  mlp.weight(0).values << 0.2, -0.4, 0.5, 0.1, -0.3, 0.7;
  mlp.bias(0).values << 0.05, -0.1, 0.2;
  mlp.weight(1).values << 0.6, -0.5, 0.2;
  mlp.bias(1).values << -0.15;

  const double x0 = 0.5, x1 = -0.5;
  const double h0 = std::tanh(0.2 * x0 + -0.4 * x1 + 0.05);
  const double h1 = std::tanh(0.5 * x0 + 0.1 * x1 + -0.1);
  const double h2 = std::tanh(-0.3 * x0 + 0.7 * x1 + 0.2);
  const double y = std::tanh(0.6 * h0 + -0.5 * h1 + 0.2 * h2 + -0.15);

  const Eigen::VectorXd out = mlp_forward(mlp, Eigen::Vector2d(x0, x1));
  CHECK(out(0) == Catch::Approx(y).margin(1e-15));
}

TEST_CASE("mlp forward: pure function of params and input") {
  Rng rng(4);
  MlpSpec spec = MlpSpec::dense(5, 3, 8, 2);
  Mlp mlp = make_mlp(spec, "net", rng);
  const Eigen::VectorXd x = testutil::random_vector(rng, 5);
  const Eigen::VectorXd a = mlp_forward(mlp, x);
  const Eigen::VectorXd b = mlp_forward(mlp, x);
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("mlp forward: dimension mismatch raises configuration error") {
  Rng rng(5);
  Mlp mlp = make_mlp(MlpSpec::dense(4, 2, 6, 1), "net", rng);
  CHECK_THROWS_AS(mlp_forward(mlp, Eigen::Vector3d(1, 2, 3)), ConfigError);
}

TEST_CASE("mlp backward: zero upstream yields zero gradients") {
  Rng rng(6);
  Mlp mlp = make_mlp(MlpSpec::dense(3, 2, 5, 2), "net", rng);
  MlpTape tape;
  mlp_forward(mlp, testutil::random_vector(rng, 3), &tape);
  const Eigen::VectorXd dx = mlp_backward(mlp, tape, Eigen::Vector2d::Zero());
  CHECK(dx.norm() == 0.0);
  for (const auto& b : mlp.blocks) CHECK(b.grad.norm() == 0.0);
}

TEST_CASE("mlp backward: single linear layer has analytic gradients") {
  MlpSpec spec;
  spec.widths = {3, 2};
  spec.activations = {Activation::kIdentity};
  Rng rng(7);
  Mlp mlp = make_mlp(spec, "net", rng);
  const Eigen::VectorXd x = testutil::random_vector(rng, 3);
  const Eigen::VectorXd u = testutil::random_vector(rng, 2);

  MlpTape tape;
  mlp_forward(mlp, x, &tape);
  const Eigen::VectorXd dx = mlp_backward(mlp, tape, u);

  const Eigen::MatrixXd dw_expected = u * x.transpose();
  CHECK((mlp.weight(0).grad - dw_expected).norm() < 1e-14);
  CHECK((mlp.bias(0).grad.col(0) - u).norm() < 1e-14);
  CHECK((dx - mlp.weight(0).values.transpose() * u).norm() < 1e-14);
}

TEST_CASE("mlp backward: random 3-layer net matches central finite differences") {
  Rng rng(8);
  MlpSpec spec = MlpSpec::dense(4, 3, 6, 2);
  Mlp mlp = make_mlp(spec, "net", rng);
  const Eigen::VectorXd x = testutil::random_vector(rng, 4);
  const Eigen::VectorXd u = testutil::random_vector(rng, 3);

  const auto oracle = testutil::finite_difference_grads(
      mlp, [&] { return u.dot(mlp_forward(mlp, x)); });

  MlpTape tape;
  mlp_forward(mlp, x, &tape);
  mlp_backward(mlp, tape, u);
  CHECK(testutil::max_rel_error(oracle, mlp) <= 1e-4);
}

TEST_CASE("mlp backward: 20 random specs match finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    MlpSpec spec = testutil::random_spec(rng);
    Mlp mlp = make_mlp(spec, "net", rng);
    // Relu derivatives are discontinuous; redraw inputs that land a
    // pre-activation inside the finite-difference window of the kink.
    Eigen::VectorXd x = testutil::random_vector(rng, spec.input_width());
    for (int attempt = 0; attempt < 100; ++attempt) {
      MlpTape probe;
      mlp_forward(mlp, x, &probe);
      double closest = 1e9;
      for (int l = 0; l < spec.num_layers(); ++l) {
        if (spec.activations[l] != Activation::kRelu) continue;
        closest = std::min(closest, probe.preacts[l].cwiseAbs().minCoeff());
      }
      if (closest > 1e-3) break;
      x = testutil::random_vector(rng, spec.input_width());
    }
    const Eigen::VectorXd u = testutil::random_vector(rng, spec.output_width());

    const auto oracle = testutil::finite_difference_grads(
        mlp, [&] { return u.dot(mlp_forward(mlp, x)); });
    MlpTape tape;
    mlp_forward(mlp, x, &tape);
    mlp_backward(mlp, tape, u);
    INFO("trial " << trial);
    CHECK(testutil::max_rel_error(oracle, mlp) <= 1e-4);
  }
}

TEST_CASE("mlp backward: stale tape raises usage error") {
  Rng rng(10);
  Mlp a = make_mlp(MlpSpec::dense(3, 2, 4, 1), "a", rng);
  Mlp b = make_mlp(MlpSpec::dense(3, 2, 4, 2), "b", rng);
  MlpTape tape;
  mlp_forward(a, testutil::random_vector(rng, 3), &tape);
  CHECK_THROWS_AS(mlp_backward(b, tape, Eigen::Vector2d(1, 1)), UsageError);
}

TEST_CASE("clip_global_norm: below threshold is identity") {
  ParamBlock b("p", 2, 1);
  b.grad << 0.18, 0.24;  // norm 0.3
  std::vector<ParamBlock*> blocks{&b};
  const double norm = clip_global_norm(blocks, 0.5);
  CHECK(norm == Catch::Approx(0.3).margin(1e-15));
  CHECK(b.grad(0, 0) == 0.18);
  CHECK(b.grad(1, 0) == 0.24);
}

TEST_CASE("clip_global_norm: norm 1.0 against 0.5 halves every entry") {
  ParamBlock b("p", 2, 1);
  b.grad << 0.6, 0.8;  // norm 1.0
  std::vector<ParamBlock*> blocks{&b};
  clip_global_norm(blocks, 0.5);
  CHECK(b.grad(0, 0) == Catch::Approx(0.3).margin(1e-15));
  CHECK(b.grad(1, 0) == Catch::Approx(0.4).margin(1e-15));
}

TEST_CASE("clip_global_norm: idempotent") {
  Rng rng(11);
  ParamBlock b("p", 4, 3);
  for (Eigen::Index i = 0; i < b.grad.rows(); ++i)
    for (Eigen::Index j = 0; j < b.grad.cols(); ++j) b.grad(i, j) = rng.normal();
  std::vector<ParamBlock*> blocks{&b};
  clip_global_norm(blocks, 0.5);
  const Eigen::MatrixXd once = b.grad;
  clip_global_norm(blocks, 0.5);
  CHECK((b.grad - once).norm() == 0.0);
}

TEST_CASE("adam_step: zero gradients leave parameters unchanged") {
  ParamBlock b("p", 2, 2);
  b.values << 1.0, 2.0, 3.0, 4.0;
  std::vector<ParamBlock*> blocks{&b};
  OptimizerState state = make_optimizer_state(blocks);
  const Eigen::MatrixXd before = b.values;
  adam_step(blocks, state, 1e-3);
  CHECK((b.values - before).norm() == 0.0);
  CHECK(state.step_count == 1);
}

TEST_CASE("adam_step: first step matches closed form") {
  ParamBlock b("p", 1, 1);
  b.values(0, 0) = 0.5;
  b.grad(0, 0) = -0.37;
  std::vector<ParamBlock*> blocks{&b};
  OptimizerState state = make_optimizer_state(blocks);
  const double lr = 2e-5;
  adam_step(blocks, state, lr);
  // m_hat = g, v_hat = g^2 on the first step, so the update is
  // lr * g / (|g| * sqrt(1) + eps).
  const double expected = 0.5 - lr * (-0.37) / (std::abs(-0.37) + 1e-8);
  CHECK(b.values(0, 0) == Catch::Approx(expected).margin(1e-16));
}

TEST_CASE("adam_step: bit-deterministic across runs") {
  auto run = [] {
    Rng rng(12);
    Mlp mlp = make_mlp(MlpSpec::dense(3, 2, 4, 2), "net", rng);
    std::vector<ParamBlock*> blocks;
    for (auto& b : mlp.blocks) blocks.push_back(&b);
    OptimizerState state = make_optimizer_state(blocks);
    Rng grad_rng(13);
    for (int step = 0; step < 25; ++step) {
      for (auto* b : blocks) {
        for (Eigen::Index i = 0; i < b->grad.rows(); ++i)
          for (Eigen::Index j = 0; j < b->grad.cols(); ++j) b->grad(i, j) = grad_rng.normal();
      }
      clip_global_norm(blocks, 0.5);
      adam_step(blocks, state, 3e-4);
    }
    return mlp;
  };
  const Mlp a = run();
  const Mlp b = run();
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    CHECK(a.blocks[i].values == b.blocks[i].values);
  }
}

TEST_CASE("adam_step: non-finite gradient names the parameter block") {
  ParamBlock b("policy/encoder/W0", 1, 1);
  b.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  std::vector<ParamBlock*> blocks{&b};
  OptimizerState state = make_optimizer_state(blocks);
  CHECK_THROWS_WITH(adam_step(blocks, state, 1e-3),
                    Catch::Matchers::ContainsSubstring("policy/encoder/W0"));
}
