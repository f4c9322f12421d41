#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "losses.hpp"
#include "util.hpp"

using namespace r2d2;
using namespace r2d2::losses;

namespace {

double fd_slope(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("clamp_prob pins probabilities into the open unit interval") {
  CHECK(clamp_prob(0.5) == 0.5);
  CHECK(clamp_prob(0.0) == kProbEps);
  CHECK(clamp_prob(1.0) == 1.0 - kProbEps);
  CHECK(clamp_prob(-3.0) == kProbEps);
  CHECK(clamp_prob(7.0) == 1.0 - kProbEps);
  CHECK_THROWS_AS(clamp_prob(std::nan("")), Error);
}

TEST_CASE("sentence detection loss on frozen values") {
  CHECK(rd_sentence_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(rd_sentence_loss(0.9, 0) == doctest::Approx(-std::log(0.1)).epsilon(1e-12));
  CHECK(rd_sentence_loss(0.9, 1) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
  // Extreme inputs stay finite thanks to the clamp.
  CHECK(rd_sentence_loss(0.0, 1) == doctest::Approx(-std::log(kProbEps)).epsilon(1e-9));
  CHECK(rd_sentence_loss(1.0, 0) == doctest::Approx(-std::log(kProbEps)).epsilon(1e-9));
  CHECK_THROWS_AS(rd_sentence_loss(0.5, 2), Error);
  CHECK_THROWS_AS(rd_sentence_loss(0.5, -1), Error);
}

TEST_CASE("sentence detection gradient matches finite differences") {
  for (double p : {0.05, 0.3, 0.5, 0.77, 0.99}) {
    for (int label : {0, 1}) {
      double a = rd_sentence_loss_grad(p, label);
      double f = fd_slope([label](double x) { return rd_sentence_loss(x, label); }, p);
      CHECK(a == doctest::Approx(f).epsilon(1e-5));
    }
  }
  // Zero slope where the clamp is active.
  CHECK(rd_sentence_loss_grad(0.0, 1) == 0.0);
  CHECK(rd_sentence_loss_grad(1.0, 0) == 0.0);
}

TEST_CASE("token detection loss sums per-step binary cross-entropy") {
  std::vector<double> probs{0.1, 0.2, 0.8};
  std::vector<int> labels{0, 0, 1};
  double expected = -(std::log(0.9) + std::log(0.8) + std::log(0.8));
  CHECK(rd_token_loss(probs, labels) == doctest::Approx(expected).epsilon(1e-12));

  std::vector<int> bad{0, 0};
  CHECK_THROWS_AS(rd_token_loss(probs, bad), Error);
  CHECK(rd_token_loss({}, {}) == 0.0);
}

TEST_CASE("token detection gradient matches finite differences") {
  std::vector<double> probs{0.1, 0.25, 0.6, 0.93};
  std::vector<int> labels{1, 0, 1, 0};
  std::vector<double> grad = rd_token_loss_grad(probs, labels);
  REQUIRE(grad.size() == probs.size());
  for (size_t t = 0; t < probs.size(); ++t) {
    double f = fd_slope(
        [&, t](double x) {
          std::vector<double> q = probs;
          q[t] = x;
          return rd_token_loss(q, labels);
        },
        probs[t]);
    CHECK(grad[t] == doctest::Approx(f).epsilon(1e-5));
  }
}

TEST_CASE("unlikelihood pushes span probabilities down and the rest up") {
  std::vector<double> probs{0.9, 0.7, 0.6};
  std::vector<int> mask{0, 0, 1};
  double expected = -(std::log(0.9) + std::log(0.7) + std::log(0.4));
  CHECK(unlikelihood_loss(probs, mask) == doctest::Approx(expected).epsilon(1e-12));

  // All-zero mask degenerates to plain negative log likelihood.
  std::vector<int> zeros{0, 0, 0};
  CHECK(unlikelihood_loss(probs, zeros) == doctest::Approx(nll_loss(probs)).epsilon(1e-12));

  std::vector<int> bad{0, 2, 0};
  CHECK_THROWS_AS(unlikelihood_loss(probs, bad), Error);
}

TEST_CASE("unlikelihood gradient matches finite differences") {
  std::vector<double> probs{0.15, 0.5, 0.84, 0.33};
  std::vector<int> mask{1, 0, 1, 0};
  std::vector<double> grad = unlikelihood_loss_grad(probs, mask);
  for (size_t t = 0; t < probs.size(); ++t) {
    double f = fd_slope(
        [&, t](double x) {
          std::vector<double> q = probs;
          q[t] = x;
          return unlikelihood_loss(q, mask);
        },
        probs[t]);
    CHECK(grad[t] == doctest::Approx(f).epsilon(1e-5));
  }
  // Span tokens get a positive slope (raising p raises the loss), others negative.
  CHECK(grad[0] > 0.0);
  CHECK(grad[1] < 0.0);
}

TEST_CASE("negative log likelihood on frozen values") {
  std::vector<double> probs{0.5, 0.25};
  CHECK(nll_loss(probs) == doctest::Approx(std::log(2.0) + std::log(4.0)).epsilon(1e-12));
  std::vector<double> g = nll_loss_grad(probs);
  CHECK(g[0] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-4.0).epsilon(1e-12));
  std::vector<double> clamped{0.0};
  CHECK(nll_loss_grad(clamped)[0] == 0.0);
}

TEST_CASE("combined loss averages generation and detection terms over the group") {
  // One perturbation: N = 1, so the denominator is 2.
  std::vector<double> ul{1.0};
  std::vector<double> rd_false{0.4};
  double combined = r2d2_loss(2.0, ul, 0.2, rd_false, 0.5);
  // 0.5 * (2.0 + 1.0) + 0.5 * (0.2 + 0.4) = 1.8; divided by 2 = 0.9.
  CHECK(combined == doctest::Approx(0.9).epsilon(1e-12));

  // lambda 1 keeps only the generation terms.
  CHECK(r2d2_loss(2.0, ul, 0.2, rd_false, 1.0) == doctest::Approx(1.5).epsilon(1e-12));
  // lambda 0 keeps only the detection terms.
  CHECK(r2d2_loss(2.0, ul, 0.2, rd_false, 0.0) == doctest::Approx(0.3).epsilon(1e-12));

  // No perturbations: N = 0, denominator 1.
  CHECK(r2d2_loss(2.0, {}, 0.2, {}, 0.5) == doctest::Approx(1.1).epsilon(1e-12));

  CHECK_THROWS_AS(r2d2_loss(1.0, ul, 0.0, {}, 0.5), Error);
  CHECK_THROWS_AS(r2d2_loss(1.0, ul, 0.0, rd_false, 1.5), Error);
  CHECK_THROWS_AS(r2d2_loss(1.0, ul, 0.0, rd_false, -0.1), Error);
}

TEST_CASE("loss breakdown recombines exactly") {
  std::vector<double> ul{0.7, 1.3, 0.2};
  std::vector<double> rd_false{0.5, 0.1, 0.9};
  LossBreakdown b = make_breakdown(3.1, ul, 0.25, rd_false, 0.35);
  CHECK(b.n_false == 3);
  CHECK(b.ul_sum == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(b.rd_false_sum == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(b.combined == doctest::Approx(b.recombine()).epsilon(1e-15));
  double manual = (0.35 * (3.1 + 2.2) + 0.65 * (0.25 + 1.5)) / 4.0;
  CHECK(b.combined == doctest::Approx(manual).epsilon(1e-12));
}
