#include <doctest.h>

#include <random>

#include "smile/tensor.hpp"
#include "oracles.hpp"

using namespace smile;
using ad::Mat;
using ad::Tape;
using ad::Tensor;

namespace {

Mat rand_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -2.0,
             double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

TEST_CASE("matmul value examples") {
  Mat id = Mat::Identity(2, 2);
  Mat a(2, 2);
  a << 1, 2, 3, 4;
  CHECK((ad::matmul(Tensor::constant(id), Tensor::constant(a)).value() - a).norm() == 0.0);

  Mat l(2, 2), r(2, 1), want(2, 1);
  l << 1, 0, 0, 0;
  r << 0, 5;
  want << 0, 0;
  CHECK((ad::matmul(Tensor::constant(l), Tensor::constant(r)).value() - want).norm() == 0.0);
}

TEST_CASE("matmul shape error names both shapes") {
  Mat a = Mat::Zero(2, 3), b = Mat::Zero(2, 3);
  try {
    ad::matmul(Tensor::constant(a), Tensor::constant(b));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches central differences") {
  std::mt19937_64 rng(11);
  std::vector<Mat> theta = {rand_mat(rng, 3, 3), rand_mat(rng, 3, 3)};
  const double err = ad::finite_difference_check(
      [](Tape&, const std::vector<Tensor>& th) { return ad::sum(ad::matmul(th[0], th[1])); },
      theta, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("column_standardize examples") {
  SUBCASE("already standardized column is a fixed point") {
    Mat z(2, 1);
    z << 1, -1;
    Mat out = ad::column_standardize(Tensor::constant(z)).value();
    CHECK(out(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out(1, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("constant column maps to zero") {
    Mat z(3, 1);
    z << 4.2, 4.2, 4.2;
    Mat out = ad::column_standardize(Tensor::constant(z)).value();
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("random 8x4: unit stats and idempotence") {
    std::mt19937_64 rng(5);
    Mat z = rand_mat(rng, 8, 4);
    Mat out = ad::column_standardize(Tensor::constant(z)).value();
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const double mean = out.col(j).mean();
      const double sd = std::sqrt(out.col(j).squaredNorm() / 8.0 - mean * mean);
      CHECK(std::abs(mean) < 1e-12);
      CHECK(std::abs(sd - 1.0) < 1e-9);
    }
    Mat twice = ad::column_standardize(Tensor::constant(out)).value();
    CHECK((twice - out).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("batch of one is rejected") {
    CHECK_THROWS_AS(ad::column_standardize(Tensor::constant(Mat::Zero(1, 3))), ConfigError);
  }
  SUBCASE("matches the loop oracle") {
    std::mt19937_64 rng(17);
    Mat z = rand_mat(rng, 6, 5);
    Mat got = ad::column_standardize(Tensor::constant(z)).value();
    Mat want = oracles::standardize_columns(z);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("softmax examples") {
  SUBCASE("uniform") {
    Mat x = Mat::Zero(3, 1);
    Mat s = ad::softmax(Tensor::constant(x)).value();
    for (int i = 0; i < 3; ++i) CHECK(s(i, 0) == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }
  SUBCASE("shift-invariance stress survives large logits") {
    Mat x(2, 1);
    x << 1000.0, 0.0;
    Mat s = ad::softmax(Tensor::constant(x)).value();
    CHECK(s.allFinite());
    CHECK(s(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("closed form ln 1, ln 2, ln 3") {
    Mat x(3, 1);
    x << std::log(1.0), std::log(2.0), std::log(3.0);
    Mat s = ad::softmax(Tensor::constant(x)).value();
    CHECK(s(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(s(1, 0) == doctest::Approx(2.0 / 6).epsilon(1e-12));
    CHECK(s(2, 0) == doctest::Approx(3.0 / 6).epsilon(1e-12));
  }
  SUBCASE("simplex property on random vectors") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
      Mat x = rand_mat(rng, 7, 1, -30.0, 30.0);
      Mat s = ad::softmax(Tensor::constant(x)).value();
      CHECK(std::abs(s.sum() - 1.0) <= 1e-12);
      CHECK((s.array() > 0.0).all());
    }
  }
  SUBCASE("NaN input rejected") {
    Mat x(2, 1);
    x << std::nan(""), 0.0;
    CHECK_THROWS_AS(ad::softmax(Tensor::constant(x)), NumericError);
  }
}

TEST_CASE("cosine_sim examples") {
  Mat a(3, 1), b(3, 1);
  a << 1, 2, 3;
  CHECK(ad::cosine_sim(Tensor::constant(a), Tensor::constant(a)).scalar_value() ==
        doctest::Approx(1.0).epsilon(1e-12));

  b << 0, 0, 0;
  ad::reset_degenerate_cosine_count();
  CHECK(ad::cosine_sim(Tensor::constant(a), Tensor::constant(b)).scalar_value() == 0.0);
  CHECK(ad::degenerate_cosine_count() == 1);

  Mat u(2, 1), v(2, 1);
  u << 1, 0;
  v << 0, 1;
  CHECK(ad::cosine_sim(Tensor::constant(u), Tensor::constant(v)).scalar_value() ==
        doctest::Approx(0.0).epsilon(1e-14));

  Mat p(2, 1), q(2, 1);
  p << 1, 1;
  q << 1, 0;
  CHECK(ad::cosine_sim(Tensor::constant(p), Tensor::constant(q)).scalar_value() ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("backward basics") {
  SUBCASE("sum of leaf gives ones") {
    Tape tape;
    Tensor w = tape.leaf(Mat::Constant(2, 3, 0.5));
    tape.backward(ad::sum(w));
    CHECK((tape.grad(w) - Mat::Ones(2, 3)).norm() == 0.0);
  }
  SUBCASE("squared norm gives 2w") {
    Tape tape;
    std::mt19937_64 rng(3);
    Mat w0 = rand_mat(rng, 3, 2);
    Tensor w = tape.leaf(w0);
    tape.backward(ad::sum(ad::square(w)));
    CHECK((tape.grad(w) - 2.0 * w0).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("non-scalar loss is a rank error") {
    Tape tape;
    Tensor w = tape.leaf(Mat::Ones(2, 2));
    CHECK_THROWS_AS(tape.backward(w), ShapeError);
  }
  SUBCASE("second backward without new forward is rejected") {
    Tape tape;
    Tensor w = tape.leaf(Mat::Ones(2, 2));
    Tensor l = ad::sum(w);
    tape.backward(l);
    CHECK_THROWS_AS(tape.backward(l), ConfigError);
    // New forward work re-arms the tape.
    Tensor l2 = ad::sum(ad::square(w));
    tape.backward(l2);
    CHECK((tape.grad(w) - 2.0 * Mat::Ones(2, 2)).norm() == 0.0);
  }
  SUBCASE("untouched leaf gets a zero gradient of the right shape") {
    Tape tape;
    Tensor used = tape.leaf(Mat::Ones(2, 2));
    Tensor unused = tape.leaf(Mat::Ones(3, 1));
    tape.backward(ad::sum(used));
    CHECK(tape.grad(unused).rows() == 3);
    CHECK(tape.grad(unused).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("operands from two tapes are rejected") {
    Tape t1, t2;
    Tensor a = t1.leaf(Mat::Ones(2, 2));
    Tensor b = t2.leaf(Mat::Ones(2, 2));
    CHECK_THROWS_AS(ad::add(a, b), ConfigError);
  }
}

TEST_CASE("tape replay determinism: identical op sequences give bit-identical grads") {
  auto run = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Mat a0 = rand_mat(rng, 4, 3), b0 = rand_mat(rng, 3, 4);
    Tape tape;
    Tensor a = tape.leaf(a0), b = tape.leaf(b0);
    Tensor loss = ad::sum(ad::square(ad::tanh(ad::matmul(a, b))));
    tape.backward(loss);
    return std::make_pair(Mat(tape.grad(a)), Mat(tape.grad(b)));
  };
  auto [ga1, gb1] = run(99);
  auto [ga2, gb2] = run(99);
  CHECK(std::memcmp(ga1.data(), ga2.data(), sizeof(double) * ga1.size()) == 0);
  CHECK(std::memcmp(gb1.data(), gb2.data(), sizeof(double) * gb1.size()) == 0);
}

TEST_CASE("finite_difference_check oracle self-tests") {
  SUBCASE("quadratic") {
    Mat theta(2, 1);
    theta << 1, 2;
    // Also pin the analytic gradient itself.
    Tape tape;
    Tensor t = tape.leaf(theta);
    tape.backward(ad::sum(ad::square(t)));
    CHECK(tape.grad(t)(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(tape.grad(t)(1, 0) == doctest::Approx(4.0).epsilon(1e-14));

    const double err = ad::finite_difference_check(
        [](Tape&, const std::vector<Tensor>& th) { return ad::sum(ad::square(th[0])); },
        {theta}, 1e-5);
    CHECK(err < 1e-8);
  }
  SUBCASE("softmax cross-entropy on three logits") {
    Mat logits(1, 3);
    logits << 0.3, -1.1, 0.7;
    const double err = ad::finite_difference_check(
        [](Tape&, const std::vector<Tensor>& th) {
          Tensor lse = ad::logsumexp_rows(th[0]);
          Tensor target = ad::col(th[0], 1);
          return ad::sub(ad::sum(lse), ad::sum(target));
        },
        {logits}, 1e-5);
    CHECK(err < 1e-6);
  }
  SUBCASE("non-finite function is a numeric error") {
    Mat theta = Mat::Constant(1, 1, -1.0);
    CHECK_THROWS_AS(ad::finite_difference_check(
                        [](Tape&, const std::vector<Tensor>& th) { return ad::log(th[0]); },
                        {theta}, 1e-5),
                    NumericError);
  }
}

TEST_CASE("every exported primitive agrees with central differences") {
  std::mt19937_64 rng(2024);
  const double tol = 1e-6;
  // Probe loss is a random-weighted sum of the op output; a plain square
  // would be blind to ops with structural invariances (standardization).
  auto check1 = [&](const std::string& name, auto op, Mat input) {
    Mat y0 = op(Tensor::constant(input)).value();
    Mat w = rand_mat(rng, y0.rows(), y0.cols());
    const double err = ad::finite_difference_check(
        [&](Tape&, const std::vector<Tensor>& th) {
          return ad::sum(ad::mul(op(th[0]), Tensor::constant(w)));
        },
        {input}, 1e-5);
    INFO(name);
    CHECK(err < tol);
  };
  auto check2 = [&](const std::string& name, auto op, Mat a, Mat b) {
    Mat y0 = op(Tensor::constant(a), Tensor::constant(b)).value();
    Mat w = rand_mat(rng, y0.rows(), y0.cols());
    const double err = ad::finite_difference_check(
        [&](Tape&, const std::vector<Tensor>& th) {
          return ad::sum(ad::mul(op(th[0], th[1]), Tensor::constant(w)));
        },
        {a, b}, 1e-5);
    INFO(name);
    CHECK(err < tol);
  };

  check1("transpose", [](const Tensor& t) { return ad::transpose(t); }, rand_mat(rng, 3, 4));
  check1("neg", [](const Tensor& t) { return ad::neg(t); }, rand_mat(rng, 3, 4));
  check1("scale", [](const Tensor& t) { return ad::scale(t, -1.7); }, rand_mat(rng, 3, 4));
  check1("add_scalar", [](const Tensor& t) { return ad::add_scalar(t, 0.9); }, rand_mat(rng, 3, 4));
  check1("tanh", [](const Tensor& t) { return ad::tanh(t); }, rand_mat(rng, 3, 4));
  check1("exp", [](const Tensor& t) { return ad::exp(t); }, rand_mat(rng, 3, 4, -1.0, 1.0));
  check1("log", [](const Tensor& t) { return ad::log(t); }, rand_mat(rng, 3, 4, 0.5, 2.5));
  check1("sqrt", [](const Tensor& t) { return ad::sqrt(t); }, rand_mat(rng, 3, 4, 0.5, 2.5));
  check1("square", [](const Tensor& t) { return ad::square(t); }, rand_mat(rng, 3, 4));
  check1("clamp_min", [](const Tensor& t) { return ad::clamp_min(t, 0.1); },
         rand_mat(rng, 3, 4, 0.5, 2.0));
  check1("row_sum", [](const Tensor& t) { return ad::row_sum(t); }, rand_mat(rng, 3, 4));
  check1("col_sum", [](const Tensor& t) { return ad::col_sum(t); }, rand_mat(rng, 3, 4));
  check1("col_mean", [](const Tensor& t) { return ad::col_mean(t); }, rand_mat(rng, 3, 4));
  check1("diagonal", [](const Tensor& t) { return ad::diagonal(t); }, rand_mat(rng, 4, 4));
  check1("col", [](const Tensor& t) { return ad::col(t, 2); }, rand_mat(rng, 3, 4));
  check1("reshape", [](const Tensor& t) { return ad::reshape(t, 4, 3); }, rand_mat(rng, 3, 4));
  check1("softmax_rows", [](const Tensor& t) { return ad::softmax_rows(t); },
         rand_mat(rng, 3, 4));
  check1("logsumexp_rows", [](const Tensor& t) { return ad::logsumexp_rows(t); },
         rand_mat(rng, 3, 4));
  check1("softmax", [](const Tensor& t) { return ad::softmax(t); }, rand_mat(rng, 5, 1));
  check1("l2_normalize_rows", [](const Tensor& t) { return ad::l2_normalize_rows(t); },
         rand_mat(rng, 3, 4, 0.5, 2.0));
  check1("column_standardize", [](const Tensor& t) { return ad::column_standardize(t); },
         rand_mat(rng, 5, 3));
  check1("gather_rows", [](const Tensor& t) { return ad::gather_rows(t, {0, 2, 2, 1}); },
         rand_mat(rng, 4, 3));
  check1("bag_mean_rows",
         [](const Tensor& t) { return ad::bag_mean_rows(t, {{0, 1}, {2}, {1, 3, 3}}); },
         rand_mat(rng, 4, 3));

  check2("matmul", [](const Tensor& a, const Tensor& b) { return ad::matmul(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 4, 2));
  check2("add", [](const Tensor& a, const Tensor& b) { return ad::add(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 3, 4));
  check2("sub", [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 3, 4));
  check2("mul", [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 3, 4));
  check2("div", [](const Tensor& a, const Tensor& b) { return ad::div(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 3, 4, 0.5, 2.5));
  check2("badd_row", [](const Tensor& a, const Tensor& b) { return ad::badd_row(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 1, 4));
  check2("bsub_row", [](const Tensor& a, const Tensor& b) { return ad::bsub_row(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 1, 4));
  check2("bdiv_row", [](const Tensor& a, const Tensor& b) { return ad::bdiv_row(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 1, 4, 0.5, 2.5));
  check2("bmul_col", [](const Tensor& a, const Tensor& b) { return ad::bmul_col(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 3, 1));
  check2("bdiv_col", [](const Tensor& a, const Tensor& b) { return ad::bdiv_col(a, b); },
         rand_mat(rng, 3, 4), rand_mat(rng, 3, 1, 0.5, 2.5));
  check2("cosine_sim", [](const Tensor& a, const Tensor& b) { return ad::cosine_sim(a, b); },
         rand_mat(rng, 5, 1), rand_mat(rng, 5, 1));
  check2("hcat",
         [](const Tensor& a, const Tensor& b) { return ad::hcat({a, b}); },
         rand_mat(rng, 3, 2), rand_mat(rng, 3, 3));
}
