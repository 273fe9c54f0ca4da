#include <catch_amalgamated.hpp>

#include <filesystem>
#include <functional>
#include <random>

#include "cauvis/autograd/checkpoint.hpp"
#include "cauvis/autograd/gradcheck.hpp"
#include "cauvis/autograd/ops.hpp"
#include "cauvis/autograd/optim.hpp"
#include "oracles.hpp"

using namespace cauvis;
using Catch::Matchers::WithinAbs;

namespace {

// Reduces any op output to a scalar with fixed random weights so every
// output entry contributes a distinct gradient.
ad::Var weighted_sum(ad::Var v, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return ad::sum(ad::hadamard(v, v.tape().constant(oracle::random_matrix(v.rows(), v.cols(), gen))));
}

double check_unary(const std::function<ad::Var(ad::Var)>& op, std::size_t r, std::size_t c,
                   std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 gen(seed);
  ad::ParameterStore ps;
  ps.add("a", oracle::random_matrix(r, c, gen, sd));
  return ad::finite_diff_check(
      [&](ad::Tape& t, ad::ParameterStore& p) { return weighted_sum(op(t.parameter(p.at("a"))), seed + 1); },
      ps);
}

double check_binary(const std::function<ad::Var(ad::Var, ad::Var)>& op, std::size_t ra,
                    std::size_t ca, std::size_t rb, std::size_t cb, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  ad::ParameterStore ps;
  ps.add("a", oracle::random_matrix(ra, ca, gen));
  ps.add("b", oracle::random_matrix(rb, cb, gen));
  return ad::finite_diff_check(
      [&](ad::Tape& t, ad::ParameterStore& p) {
        return weighted_sum(op(t.parameter(p.at("a")), t.parameter(p.at("b"))), seed + 1);
      },
      ps);
}

}  // namespace

TEST_CASE("linear and sigmoid gradients by hand", "[autograd]") {
  ad::ParameterStore ps;
  auto& w = ps.add("w", Matrix{{1, 2, 3}, {4, 5, 6}});
  const Matrix x{{7}, {8}, {9}};
  {
    ad::Tape t;
    t.backward(ad::sum(ad::matmul(t.parameter(w), t.constant(x))));
  }
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(w.grad(i, j) == x(j, 0));

  auto& z = ps.add("z", Matrix(2, 2));
  ps.zero_grad();
  {
    ad::Tape t;
    t.backward(ad::sum(ad::sigmoid(t.parameter(z))));
  }
  for (double g : z.grad.values()) CHECK(g == 0.25);
}

TEST_CASE("gradient checker on known functions", "[autograd]") {
  ad::ParameterStore ps;
  ps.add("p", Matrix(2, 3, 1.0));
  const auto quad = [](ad::Tape& t, ad::ParameterStore& p) { return ad::sum(ad::square(t.parameter(p.at("p")))); };
  const auto rep = ad::finite_diff_report(quad, ps);
  CHECK(rep.max_rel_error <= 1e-9);
  for (double g : ps.at("p").grad.values()) CHECK_THAT(g, WithinAbs(2.0, 1e-12));

  const auto constant = [](ad::Tape& t, ad::ParameterStore& p) {
    return ad::add(ad::scale(ad::sum(t.parameter(p.at("p"))), 0.0), t.constant(Matrix(1, 1, 4.0)));
  };
  const auto rc = ad::finite_diff_report(constant, ps);
  CHECK(rc.max_rel_error == 0.0);
  for (double g : ps.at("p").grad.values()) CHECK(g == 0.0);
  CHECK_THROWS_AS(ad::finite_diff_check(quad, ps, 0.0), ConfigError);
}

TEST_CASE("every differentiable op passes finite differences", "[autograd][gradcheck]") {
  constexpr double tol = 1e-4;
  CHECK(check_binary([](ad::Var a, ad::Var b) { return ad::matmul(a, b); }, 3, 4, 4, 2, 1) <= tol);
  CHECK(check_binary([](ad::Var a, ad::Var b) { return ad::matmul_nt(a, b); }, 3, 4, 5, 4, 2) <= tol);
  CHECK(check_binary([](ad::Var a, ad::Var b) { return ad::add(a, b); }, 3, 2, 3, 2, 3) <= tol);
  CHECK(check_binary([](ad::Var a, ad::Var b) { return ad::sub(a, b); }, 3, 2, 3, 2, 4) <= tol);
  CHECK(check_binary([](ad::Var a, ad::Var b) { return ad::hadamard(a, b); }, 3, 2, 3, 2, 5) <= tol);
  CHECK(check_binary([](ad::Var s, ad::Var a) { return ad::scale_by(s, a); }, 1, 1, 3, 3, 6) <= tol);
  CHECK(check_binary([](ad::Var a, ad::Var b) { return ad::add_row(a, b); }, 4, 3, 1, 3, 7) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::scale(a, -1.7); }, 3, 3, 8) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::sigmoid(a); }, 3, 3, 9) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::tanh(a); }, 3, 3, 10) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::square(a); }, 3, 3, 11) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::row_softmax(a); }, 3, 5, 12) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::sum(a); }, 3, 3, 13) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::mean(a); }, 3, 3, 14) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::col_mean(a); }, 4, 3, 15) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::mean_abs(a); }, 4, 3, 16) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::smooth_rms(a); }, 4, 3, 17) <= tol);
  const FrequencyMask m = make_highpass(4, 4, 0.5);
  CHECK(check_unary([&m](ad::Var a) { return ad::spectral_filter(a, m); }, 16, 3, 18) <= tol);
  CHECK(check_unary([](ad::Var a) { return ad::softmax_cross_entropy(a, {0, 2, 1}); }, 3, 3, 19) <= tol);
}

TEST_CASE("op values match direct formulas", "[autograd]") {
  std::mt19937_64 gen(20);
  ad::Tape t(false);
  const Matrix a = oracle::random_matrix(3, 5, gen);
  CHECK(oracle::max_abs_diff(ad::row_softmax(t.constant(a)).value(), oracle::softmax_rows(a)) <= 1e-12);
  const double ce = ad::softmax_cross_entropy(t.constant(a), {4, 0, 2}).value()(0, 0);
  const Matrix p = oracle::softmax_rows(a);
  CHECK_THAT(ce, WithinAbs(-(std::log(p(0, 4)) + std::log(p(1, 0)) + std::log(p(2, 2))) / 3.0, 1e-12));
  CHECK_THAT(ad::smooth_rms(t.constant(Matrix(2, 2, 3.0)), 0.0).value()(0, 0), WithinAbs(3.0, 1e-12));
  CHECK(ad::smooth_rms(t.constant(Matrix(2, 2))).value()(0, 0) == 0.0);
  CHECK_THROWS_AS(ad::add(t.constant(Matrix(2, 2)), t.constant(Matrix(2, 3))), ShapeError);
}

TEST_CASE("graph errors", "[autograd]") {
  ad::ParameterStore ps;
  auto& p = ps.add("p", Matrix(2, 2, 1.0));
  {
    ad::Tape t;
    ad::Var x = t.parameter(p);
    ad::Var op = t.opaque(x.value(), {x}, "external");
    CHECK_THROWS_AS(t.backward(ad::sum(op)), GraphError);
  }
  {
    ad::Tape t;
    CHECK_THROWS_AS(t.backward(t.parameter(p)), GraphError);
  }
  {
    ad::Tape t(false);
    CHECK_THROWS_AS(t.backward(ad::sum(t.parameter(p))), GraphError);
  }
}

TEST_CASE("frozen parameters collect no gradient", "[autograd]") {
  ad::ParameterStore ps;
  auto& a = ps.add("a", Matrix(1, 2, 1.0), false);
  auto& b = ps.add("b", Matrix(1, 2, 1.0));
  ps.zero_grad();
  ad::Tape t;
  t.backward(ad::sum(ad::hadamard(t.parameter(a), t.parameter(b))));
  CHECK(max_abs(a.grad) == 0.0);
  CHECK(b.grad == Matrix(1, 2, 1.0));
}

TEST_CASE("AdamW step rules", "[autograd][optim]") {
  ad::TrainConfig cfg;
  cfg.weight_decay = 0.0;
  ad::ParameterStore ps;
  auto& p = ps.add("p", Matrix{{0.3, -2.0, 5.0}});
  ps.zero_grad();
  ad::AdamState st;
  ad::adamw_step(ps, st, cfg, 1);
  CHECK(p.value == Matrix{{0.3, -2.0, 5.0}});

  ad::ParameterStore q;
  auto& w = q.add("w", Matrix{{1.0, 1.0, 1.0}});
  w.grad = Matrix{{0.5, -3.0, 1e-3}};
  ad::AdamState st2;
  ad::adamw_step(q, st2, cfg, 1);
  const double g[] = {0.5, -3.0, 1e-3};
  for (std::size_t i = 0; i < 3; ++i) {
    const double step = 1.0 - w.value(0, i);
    CHECK_THAT(step, WithinAbs(cfg.learning_rate * (g[i] > 0 ? 1.0 : -1.0), cfg.learning_rate * 1e-4));
  }
  CHECK_THROWS_AS(ad::adamw_step(q, st2, cfg, 0), ConfigError);
}

TEST_CASE("AdamW minimizes a quadratic", "[autograd][optim]") {
  ad::TrainConfig cfg;
  cfg.learning_rate = 0.1;
  ad::ParameterStore ps;
  auto& p = ps.add("p", Matrix(1, 1, 1.0));
  ad::AdamState st;
  for (std::size_t step = 1; step <= 100; ++step) {
    ps.zero_grad();
    ad::Tape t;
    t.backward(ad::sum(ad::square(t.parameter(p))));
    ad::adamw_step(ps, st, cfg, step);
  }
  CHECK(std::abs(p.value(0, 0)) < 0.05);
}

TEST_CASE("training trajectories are bitwise reproducible", "[autograd][optim]") {
  auto run = [] {
    std::mt19937_64 gen(33);
    ad::ParameterStore ps;
    ps.add("a", oracle::random_matrix(4, 3, gen));
    ps.add("b", oracle::random_matrix(1, 3, gen));
    const Matrix x = oracle::random_matrix(6, 4, gen);
    ad::TrainConfig cfg;
    cfg.learning_rate = 0.05;
    ad::AdamState st;
    std::vector<ad::ParameterStore> snaps;
    for (std::size_t step = 1; step <= 20; ++step) {
      ps.zero_grad();
      ad::Tape t;
      ad::Var h = ad::add_row(ad::matmul(t.constant(x), t.parameter(ps.at("a"))), t.parameter(ps.at("b")));
      t.backward(ad::softmax_cross_entropy(h, {0, 1, 2, 0, 1, 2}));
      ad::adamw_step(ps, st, cfg, step);
      snaps.push_back(ps);
    }
    return snaps;
  };
  const auto r1 = run(), r2 = run();
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("train config validation and JSON", "[autograd][optim]") {
  ad::TrainConfig c;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ad::TrainConfig d;
  d.lambda_inv = 0.3;
  d.epochs = 7;
  const ad::TrainConfig back = nlohmann::json(d).get<ad::TrainConfig>();
  CHECK(back.lambda_inv == 0.3);
  CHECK(back.epochs == 7);
  CHECK_THROWS_AS(nlohmann::json({{"learning_rat", 1e-3}}).get<ad::TrainConfig>(), ConfigError);
}

TEST_CASE("checkpoint round trip", "[autograd][io]") {
  namespace fs = std::filesystem;
  std::mt19937_64 gen(40);
  ad::ParameterStore ps;
  ps.add("L0.prompts", oracle::random_matrix(3, 4, gen));
  ps.add("embed.e", oracle::random_matrix(1, 4, gen), false);
  const fs::path dir = fs::temp_directory_path() / "cauvis_test_ckpt";
  fs::remove_all(dir);
  ad::save_checkpoint(dir, ps, {{"note", "x"}}, 12);
  const ad::Checkpoint ck = ad::load_checkpoint(dir);
  CHECK(ck.params == ps);
  CHECK(ck.step == 12);
  CHECK(ck.config.at("note") == "x");
  CHECK_FALSE(ck.params.at("embed.e").trainable);

  fs::remove(dir / "params" / "L0.prompts.cmat");
  CHECK_THROWS_AS(ad::load_checkpoint(dir), IoError);
  CHECK_THROWS_AS(ad::load_checkpoint(dir / "missing"), IoError);
  fs::remove_all(dir);
}
