#include <doctest.h>

#include <random>

#include "smile/losses.hpp"
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

TEST_CASE("cross_correlation") {
  std::mt19937_64 rng(41);

  SUBCASE("self-correlation of standardized data has unit diagonal, symmetric") {
    Mat z = rand_mat(rng, 6, 4);
    Mat c = loss::cross_correlation(Tensor::constant(z), Tensor::constant(z)).values.value();
    for (Eigen::Index k = 0; k < 4; ++k) CHECK(c(k, k) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((c - Mat(c.transpose())).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("constant column zeroes its row") {
    Mat za = rand_mat(rng, 5, 3);
    za.col(1).setConstant(7.0);
    Mat zb = rand_mat(rng, 5, 3);
    Mat c = loss::cross_correlation(Tensor::constant(za), Tensor::constant(zb)).values.value();
    CHECK(c.row(1).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches the two-loop oracle") {
    Mat za = rand_mat(rng, 4, 2), zb = rand_mat(rng, 4, 2);
    Mat got = loss::cross_correlation(Tensor::constant(za), Tensor::constant(zb)).values.value();
    Mat want = oracles::cross_correlation(za, zb);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("raw variant matches the oracle without standardization") {
    Mat za = rand_mat(rng, 4, 3), zb = rand_mat(rng, 4, 3);
    Mat got =
        loss::cross_correlation(Tensor::constant(za), Tensor::constant(zb), false).values.value();
    Mat want = oracles::cross_correlation(za, zb, false);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("batch too small") {
    CHECK_THROWS_AS(
        loss::cross_correlation(Tensor::constant(Mat::Zero(1, 2)), Tensor::constant(Mat::Zero(1, 2))),
        ConfigError);
  }
}

TEST_CASE("average_correlation") {
  std::mt19937_64 rng(42);
  auto as_corr = [](Mat m) {
    loss::CorrelationMatrix c;
    c.values = Tensor::constant(std::move(m));
    return c;
  };

  SUBCASE("single matrix is the identity map") {
    Mat m = rand_mat(rng, 3, 3);
    Mat got = loss::average_correlation({as_corr(m)}).values.value();
    CHECK((got - m).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("C and -C cancel") {
    Mat m = rand_mat(rng, 3, 3);
    Mat got = loss::average_correlation({as_corr(m), as_corr(-m)}).values.value();
    CHECK(got.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("three matrices: entrywise mean") {
    Mat a = rand_mat(rng, 3, 3), b = rand_mat(rng, 3, 3), c = rand_mat(rng, 3, 3);
    Mat got = loss::average_correlation({as_corr(a), as_corr(b), as_corr(c)}).values.value();
    Mat want = (a + b + c) / 3.0;
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("empty list rejected") {
    CHECK_THROWS_AS(loss::average_correlation({}), ConfigError);
  }
}

TEST_CASE("mv_bt_loss") {
  auto as_corr = [](Mat m) {
    loss::CorrelationMatrix c;
    c.values = Tensor::constant(std::move(m));
    return c;
  };

  SUBCASE("identity gives zero") {
    CHECK(loss::mv_bt_loss(as_corr(Mat::Identity(5, 5)), 0.005).scalar_value() == 0.0);
  }
  SUBCASE("frozen closed-form value") {
    Mat c(2, 2);
    c << 1, 0.5, 0.5, 1;
    CHECK(std::abs(loss::mv_bt_loss(as_corr(c), 0.005).scalar_value() - 0.0025) <= 1e-12);
  }
  SUBCASE("collapse penalty equals d") {
    CHECK(loss::mv_bt_loss(as_corr(Mat::Zero(7, 7)), 123.0).scalar_value() ==
          doctest::Approx(7.0).epsilon(1e-14));
  }
  SUBCASE("non-negative, matches oracle on random matrices") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 10; ++trial) {
      Mat c = rand_mat(rng, 4, 4);
      const double got = loss::mv_bt_loss(as_corr(c), 0.005).scalar_value();
      CHECK(got >= 0.0);
      CHECK(got == doctest::Approx(oracles::identity_penalty(c, 0.005)).epsilon(1e-12));
    }
  }
  SUBCASE("invariant under view permutation before averaging") {
    std::mt19937_64 rng(44);
    Mat za1 = rand_mat(rng, 5, 3), zb1 = rand_mat(rng, 5, 3);
    Mat za2 = rand_mat(rng, 5, 3), zb2 = rand_mat(rng, 5, 3);
    Mat za3 = rand_mat(rng, 5, 3), zb3 = rand_mat(rng, 5, 3);
    auto corr = [](const Mat& a, const Mat& b) {
      return loss::cross_correlation(Tensor::constant(a), Tensor::constant(b));
    };
    const double fwd = loss::mv_bt_loss(
        loss::average_correlation({corr(za1, zb1), corr(za2, zb2), corr(za3, zb3)}), 0.005)
        .scalar_value();
    const double rev = loss::mv_bt_loss(
        loss::average_correlation({corr(za3, zb3), corr(za1, zb1), corr(za2, zb2)}), 0.005)
        .scalar_value();
    CHECK(std::abs(fwd - rev) <= 1e-12);
  }
}

TEST_CASE("vl_align_loss") {
  std::mt19937_64 rng(45);

  SUBCASE("B=1 is exactly zero") {
    Mat z = rand_mat(rng, 1, 4), t = rand_mat(rng, 1, 4);
    CHECK(loss::vl_align_loss({Tensor::constant(z)}, Tensor::constant(z),
                              Tensor::constant(t), 0.07)
              .scalar_value() == 0.0);
  }
  SUBCASE("uniform similarities give ln B") {
    const int b = 5;
    Mat z = Mat::Zero(b, 3), t = Mat::Zero(b, 3);
    for (int i = 0; i < b; ++i) {
      z.row(i) << 1, 2, 3;  // identical rows everywhere
      t.row(i) << -1, 0.5, 2;
    }
    const double got = loss::vl_align_loss({Tensor::constant(z)}, Tensor::constant(z),
                                           Tensor::constant(t), 0.07)
                           .scalar_value();
    CHECK(std::abs(got - std::log(static_cast<double>(b))) <= 1e-9);
  }
  SUBCASE("frozen closed-form case: B=2, N=1, tau=1, sims 1 and 0") {
    Mat z(2, 2), t(2, 2);
    z << 1, 0, 0, 1;
    t << 1, 0, 0, 1;
    const double got = loss::vl_align_loss({Tensor::constant(z)}, Tensor::constant(z),
                                           Tensor::constant(t), 1.0)
                           .scalar_value();
    CHECK(std::abs(got - 0.313262) <= 1e-6);
  }
  SUBCASE("scale invariance of any input") {
    Mat views = rand_mat(rng, 4, 6), fused = rand_mat(rng, 4, 6), text = rand_mat(rng, 4, 6);
    const double base = loss::vl_align_loss({Tensor::constant(views)}, Tensor::constant(fused),
                                            Tensor::constant(text), 0.07)
                            .scalar_value();
    for (double c : {0.5, 2.0, 10.0}) {
      const double sv = loss::vl_align_loss({Tensor::constant(Mat(c * views))},
                                            Tensor::constant(fused), Tensor::constant(text), 0.07)
                            .scalar_value();
      const double sf = loss::vl_align_loss({Tensor::constant(views)},
                                            Tensor::constant(Mat(c * fused)),
                                            Tensor::constant(text), 0.07)
                            .scalar_value();
      const double st = loss::vl_align_loss({Tensor::constant(views)}, Tensor::constant(fused),
                                            Tensor::constant(Mat(c * text)), 0.07)
                            .scalar_value();
      CHECK(std::abs(sv - base) <= 1e-9);
      CHECK(std::abs(sf - base) <= 1e-9);
      CHECK(std::abs(st - base) <= 1e-9);
    }
  }
  SUBCASE("invariant under a common batch permutation") {
    Mat views = rand_mat(rng, 5, 4), fused = rand_mat(rng, 5, 4), text = rand_mat(rng, 5, 4);
    const double base = loss::vl_align_loss({Tensor::constant(views)}, Tensor::constant(fused),
                                            Tensor::constant(text), 0.07)
                            .scalar_value();
    std::vector<int> perm = {3, 0, 4, 1, 2};
    Mat pv(5, 4), pf(5, 4), pt(5, 4);
    for (int i = 0; i < 5; ++i) {
      pv.row(i) = views.row(perm[static_cast<std::size_t>(i)]);
      pf.row(i) = fused.row(perm[static_cast<std::size_t>(i)]);
      pt.row(i) = text.row(perm[static_cast<std::size_t>(i)]);
    }
    const double permuted = loss::vl_align_loss({Tensor::constant(pv)}, Tensor::constant(pf),
                                                Tensor::constant(pt), 0.07)
                                .scalar_value();
    CHECK(std::abs(permuted - base) <= 1e-9);
  }
  SUBCASE("matches the loop oracle on random inputs") {
    std::vector<Mat> views = {rand_mat(rng, 4, 5), rand_mat(rng, 4, 5), rand_mat(rng, 4, 5)};
    Mat fused = rand_mat(rng, 4, 5), text = rand_mat(rng, 4, 5);
    const double got =
        loss::vl_align_loss({Tensor::constant(views[0]), Tensor::constant(views[1]),
                             Tensor::constant(views[2])},
                            Tensor::constant(fused), Tensor::constant(text), 0.07)
            .scalar_value();
    const double want = oracles::vl_align(views, fused, text, 0.07);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
  SUBCASE("bad temperature and empty batch rejected") {
    Mat z = rand_mat(rng, 2, 2);
    CHECK_THROWS_AS(
        loss::vl_align_loss({Tensor::constant(z)}, Tensor::constant(z), Tensor::constant(z), 0.0),
        ConfigError);
    Mat empty(0, 2);
    CHECK_THROWS_AS(loss::vl_align_loss({Tensor::constant(empty)}, Tensor::constant(empty),
                                        Tensor::constant(empty), 1.0),
                    ConfigError);
  }
}

TEST_CASE("red_min_loss") {
  std::mt19937_64 rng(46);

  SUBCASE("identity correlation gives zero") {
    Mat z(4, 2);
    z << 1, 1, 1, -1, -1, 1, -1, -1;  // orthogonal, zero-mean, unit-sd columns
    CHECK(loss::red_min_loss(Tensor::constant(z), Tensor::constant(z), 0.005).scalar_value() ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("self-pairing leaves only the off-diagonal term") {
    Mat z = rand_mat(rng, 6, 3);
    const double got =
        loss::red_min_loss(Tensor::constant(z), Tensor::constant(z), 0.005).scalar_value();
    Mat c = oracles::cross_correlation(z, z);
    // Diagonal of a standardized self-correlation is 1, so only the
    // off-diagonal term contributes.
    double off = 0.0;
    for (Eigen::Index k = 0; k < 3; ++k)
      for (Eigen::Index l = 0; l < 3; ++l)
        if (k != l) off += c(k, l) * c(k, l);
    CHECK(got == doctest::Approx(0.005 * off).epsilon(1e-9));
  }
  SUBCASE("matches the double-loop oracle") {
    Mat f = rand_mat(rng, 4, 3), t = rand_mat(rng, 4, 3);
    const double got =
        loss::red_min_loss(Tensor::constant(f), Tensor::constant(t), 0.005).scalar_value();
    const double want =
        oracles::identity_penalty(oracles::cross_correlation(f, t), 0.005);
    CHECK(std::abs(got - want) < 1e-12);
  }
  SUBCASE("symmetric in its arguments") {
    Mat f = rand_mat(rng, 5, 4), t = rand_mat(rng, 5, 4);
    const double ab =
        loss::red_min_loss(Tensor::constant(f), Tensor::constant(t), 0.005).scalar_value();
    const double ba =
        loss::red_min_loss(Tensor::constant(t), Tensor::constant(f), 0.005).scalar_value();
    CHECK(std::abs(ab - ba) <= 1e-12);
  }
  SUBCASE("batch too small") {
    Mat z = rand_mat(rng, 1, 3);
    CHECK_THROWS_AS(loss::red_min_loss(Tensor::constant(z), Tensor::constant(z), 0.005),
                    ConfigError);
  }
}

TEST_CASE("joint_loss") {
  std::mt19937_64 rng(47);
  Tensor mv = Tensor::scalar(0.5), vl = Tensor::scalar(0.3), red = Tensor::scalar(0.2);

  SUBCASE("zero weights give zero total") {
    loss::LossConfig cfg;
    cfg.alpha = cfg.beta = cfg.gamma = 0.0;
    loss::JointLoss j = loss::joint_loss(mv, vl, red, cfg);
    CHECK(j.breakdown.total == 0.0);
    CHECK_FALSE(j.total.on_tape());
  }
  SUBCASE("single component passes through exactly") {
    loss::LossConfig cfg;
    cfg.alpha = 1.0;
    cfg.beta = cfg.gamma = 0.0;
    CHECK(loss::joint_loss(mv, vl, red, cfg).breakdown.total == 0.5);
  }
  SUBCASE("unit weights sum the parts") {
    loss::LossConfig cfg;
    CHECK(loss::joint_loss(mv, vl, red, cfg).breakdown.total ==
          doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("decomposition identity") {
    loss::LossConfig cfg;
    cfg.alpha = 0.7;
    cfg.beta = 2.0;
    cfg.gamma = 0.25;
    loss::JointLoss j = loss::joint_loss(mv, vl, red, cfg);
    CHECK(std::abs(j.breakdown.total -
                   (cfg.alpha * j.breakdown.mv_bt + cfg.beta * j.breakdown.vl_align +
                    cfg.gamma * j.breakdown.red_min)) <= 1e-12);
  }
  SUBCASE("negative weights rejected") {
    loss::LossConfig cfg;
    cfg.alpha = -1.0;
    CHECK_THROWS_AS(loss::joint_loss(mv, vl, red, cfg), ConfigError);
  }
  SUBCASE("disabled component receives no gradient") {
    Tape tape;
    Tensor a = tape.leaf(rand_mat(rng, 4, 3));
    Tensor b = tape.leaf(rand_mat(rng, 4, 3));
    Tensor mvt = loss::mv_bt_loss(loss::cross_correlation(a, a), 0.005);
    Tensor vlt = loss::vl_align_loss({b}, b, Tensor::constant(rand_mat(rng, 4, 3)), 0.07);
    loss::LossConfig cfg;
    cfg.alpha = 0.0;  // mv_bt path disabled
    loss::JointLoss j = loss::joint_loss(mvt, vlt, Tensor::scalar(0.0), cfg);
    tape.backward(j.total);
    CHECK(tape.grad(a).cwiseAbs().maxCoeff() == 0.0);
    CHECK(tape.grad(b).cwiseAbs().maxCoeff() > 0.0);
  }
}
