#include "doctest.h"

#include <cmath>
#include <vector>

#include "modest/hsic.hpp"
#include "modest/rng.hpp"

using namespace modest;

namespace {

// Independent oracle: explicit centering matrix and double-loop trace.
Real hsic_trace_oracle(const Vec& u, const Vec& v, Real su, Real sv) {
  const auto d = u.size();
  Mat ku(d, d), kv(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      ku(a, b) = std::exp(-(u(a) - u(b)) * (u(a) - u(b)) / (su * su));
      kv(a, b) = std::exp(-(v(a) - v(b)) * (v(a) - v(b)) / (sv * sv));
    }
  }
  const Mat p = Mat::Identity(d, d) - Mat::Constant(d, d, 1.0 / d);
  const Mat prod = ku * p * kv * p;
  Real tr = 0.0;
  for (Eigen::Index a = 0; a < d; ++a) tr += prod(a, a);
  return tr / ((d - 1.0) * (d - 1.0));
}

Vec random_vec(RngStream& rng, int d) {
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.gaussian();
  return v;
}

Real sigmoid(Real x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("rbf kernel matches scalar loop") {
  Vec u(3);
  u << 0.0, 1.0, 3.0;
  Mat k = rbf_kernel(u, 2.0);
  REQUIRE(k.rows() == 3);
  for (int a = 0; a < 3; ++a) {
    CHECK(k(a, a) == doctest::Approx(1.0));
    for (int b = 0; b < 3; ++b) {
      const Real want = std::exp(-(u(a) - u(b)) * (u(a) - u(b)) / 4.0);
      CHECK(k(a, b) == doctest::Approx(want).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(rbf_kernel(u, 0.0), ConfigError);
}

TEST_CASE("median heuristic enumerates pairs") {
  Vec u2(2);
  u2 << 0.0, 2.0;
  CHECK(median_heuristic_sigma(u2) == doctest::Approx(2.0));

  Vec uc(3);
  uc << 1.0, 1.0, 1.0;
  CHECK(median_heuristic_sigma(uc) == 1.0);

  Vec u4(4);
  u4 << 0.0, 1.0, 2.0, 4.0;
  // pairwise diffs {1,2,4,1,3,2}, sorted {1,1,2,2,3,4}, median (2+2)/2
  CHECK(median_heuristic_sigma(u4) == doctest::Approx(2.0));

  Vec u3(3);
  u3 << 1.0, 2.0, 4.0;
  // diffs {1,3,2} -> median 2
  CHECK(median_heuristic_sigma(u3) == doctest::Approx(2.0));

  Vec u1(1);
  u1 << 5.0;
  CHECK_THROWS_AS(median_heuristic_sigma(u1), ConfigError);
}

TEST_CASE("empirical hsic equals the explicit trace formula") {
  Vec u(3);
  u << 0.0, 1.0, 2.0;
  CHECK(empirical_hsic(u, u, 1.0, 1.0) ==
        doctest::Approx(hsic_trace_oracle(u, u, 1.0, 1.0)).epsilon(1e-12));

  RngStream rng(42, "test.hsic.trace");
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform_index(5));
    Vec a = random_vec(rng, d);
    Vec b = random_vec(rng, d);
    const Real sa = median_heuristic_sigma(a);
    const Real sb = median_heuristic_sigma(b);
    const Real got = empirical_hsic(a, b, sa, sb);
    const Real want = hsic_trace_oracle(a, b, sa, sb);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("hsic is symmetric, nonnegative, and kills constants") {
  RngStream rng(7, "test.hsic.props");
  for (int trial = 0; trial < 50; ++trial) {
    Vec a = random_vec(rng, 6);
    Vec b = random_vec(rng, 6);
    const Real ab = empirical_hsic(a, b);
    const Real ba = empirical_hsic(b, a);
    CHECK(ab >= 0.0);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  }

  Vec c = Vec::Constant(5, 3.5);
  Vec b = random_vec(rng, 5);
  CHECK(empirical_hsic(c, b, 1.0, median_heuristic_sigma(b)) == 0.0);
}

TEST_CASE("dependent beats shuffled-independent hsic") {
  Vec u(4);
  u << 0.0, 1.0, 2.0, 3.0;
  Vec v(4);
  v << 7.0, -2.0, 5.0, 0.0;
  const Real su = median_heuristic_sigma(u);
  CHECK(empirical_hsic(u, u, su, su) >
        empirical_hsic(u, v, su, median_heuristic_sigma(v)));
}

TEST_CASE("joint permutation and shift leave hsic unchanged") {
  RngStream rng(13, "test.hsic.inv");
  Vec a = random_vec(rng, 7);
  Vec b = random_vec(rng, 7);
  const Real sa = median_heuristic_sigma(a);
  const Real sb = median_heuristic_sigma(b);
  const Real base = empirical_hsic(a, b, sa, sb);

  std::vector<int> perm{3, 0, 6, 1, 5, 2, 4};
  Vec ap(7), bp(7);
  for (int i = 0; i < 7; ++i) {
    ap(i) = a(perm[i]);
    bp(i) = b(perm[i]);
  }
  CHECK(empirical_hsic(ap, bp, sa, sb) == doctest::Approx(base).epsilon(1e-12));
  CHECK(median_heuristic_sigma(ap) == doctest::Approx(sa));

  Vec as = a.array() + 11.25;
  CHECK(empirical_hsic(as, b, sa, sb) == doctest::Approx(base).epsilon(1e-11));
  CHECK(median_heuristic_sigma(as) == doctest::Approx(sa));
}

TEST_CASE("hsic input validation") {
  Vec a(3), b(2);
  a << 0, 1, 2;
  b << 0, 1;
  CHECK_THROWS_AS(empirical_hsic(a, b, 1.0, 1.0), ConfigError);
  Vec c(1), d(1);
  c << 0;
  d << 1;
  CHECK_THROWS_AS(empirical_hsic(c, d, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(hsic_mode_from_name("both"), ConfigError);
  CHECK(hsic_mode_from_name("per_item") == HsicMode::per_item);
  CHECK(hsic_mode_from_name("population") == HsicMode::population);
}

namespace {

struct WorkspaceFixture {
  std::vector<Mat> projected;
  std::vector<Vec> mask;
  std::vector<ItemIndex> items;

  WorkspaceFixture(int n_items, int d, int modalities, std::uint64_t seed) {
    RngStream rng(seed, "test.hsic.ws");
    for (int m = 0; m < modalities; ++m) {
      Mat e(n_items, d);
      for (int i = 0; i < n_items; ++i)
        for (int j = 0; j < d; ++j) e(i, j) = rng.gaussian();
      projected.push_back(std::move(e));
      mask.push_back(Vec::Ones(d));
    }
    for (int i = 0; i < n_items; ++i) items.push_back(i);
  }
};

}  // namespace

TEST_CASE("workspace applies the mask and freezes sigmas") {
  WorkspaceFixture fx(4, 5, 2, 99);
  fx.mask[0] << 2.0, 0.0, 1.0, 1.0, 0.5;
  auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);

  for (int r = 0; r < 4; ++r) {
    Vec want = fx.projected[0].row(r).transpose().array() * fx.mask[0].array();
    CHECK((ws.masked[0].row(r).transpose() - want).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ws.sigma[0](r) ==
          doctest::Approx(median_heuristic_sigma(want)).epsilon(1e-14));
  }
}

TEST_CASE("per-item loss is the sum of independent per-item hsic values") {
  // 3 items, 2 modalities, d'=4, w=1, mask=1: the loss must equal the sum of
  // empirical_hsic over each item's pair of masked rows with frozen sigmas.
  WorkspaceFixture fx(3, 4, 2, 2024);
  auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);
  const Vec w = Vec::Ones(3);
  const Real loss = masked_weighted_hsic_loss(ws, w);

  Real want = 0.0;
  for (int i = 0; i < 3; ++i) {
    Vec a = fx.projected[0].row(i).transpose();
    Vec b = fx.projected[1].row(i).transpose();
    want += empirical_hsic(a, b, median_heuristic_sigma(a),
                           median_heuristic_sigma(b));
  }
  CHECK(loss == doctest::Approx(want).epsilon(1e-10));
  CHECK(loss > 0.0);
}

TEST_CASE("three modalities sum over unordered pairs") {
  WorkspaceFixture fx(2, 4, 3, 5);
  auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);
  const Vec w = Vec::Constant(2, 0.7);
  const Real loss = masked_weighted_hsic_loss(ws, w);

  Real want = 0.0;
  for (int i = 0; i < 2; ++i) {
    std::vector<Vec> rows(3);
    std::vector<Real> sig(3);
    for (int m = 0; m < 3; ++m) {
      rows[m] = fx.projected[m].row(i).transpose();
      sig[m] = median_heuristic_sigma(rows[m]);  // frozen at w=1
    }
    for (int m1 = 0; m1 < 3; ++m1)
      for (int m2 = m1 + 1; m2 < 3; ++m2)
        want += empirical_hsic(0.7 * rows[m1], 0.7 * rows[m2], sig[m1], sig[m2]);
  }
  CHECK(loss == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("weighted loss with scaled weights matches scaled-vector hsic") {
  WorkspaceFixture fx(3, 5, 2, 31);
  auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);
  Vec w(3);
  w << 0.2, 1.0, 1.7;
  const Real loss = masked_weighted_hsic_loss(ws, w);

  Real want = 0.0;
  for (int i = 0; i < 3; ++i) {
    Vec a = fx.projected[0].row(i).transpose();
    Vec b = fx.projected[1].row(i).transpose();
    want += empirical_hsic(w(i) * a, w(i) * b, median_heuristic_sigma(a),
                           median_heuristic_sigma(b));
  }
  CHECK(loss == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("all-zero weights give zero loss") {
  WorkspaceFixture fx(4, 4, 2, 8);
  auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);
  CHECK(masked_weighted_hsic_loss(ws, Vec::Zero(4)) == 0.0);
}

TEST_CASE("constant modality row contributes zero") {
  WorkspaceFixture fx(1, 4, 2, 12);
  fx.projected[0].row(0).setConstant(2.0);
  auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);
  CHECK(masked_weighted_hsic_loss(ws, Vec::Ones(1)) == 0.0);
}

TEST_CASE("empty subset yields zero loss") {
  WorkspaceFixture fx(3, 4, 2, 4);
  auto ws = make_hsic_workspace(fx.projected, fx.mask, {});
  CHECK(masked_weighted_hsic_loss(ws, Vec(0)) == 0.0);
}

TEST_CASE("thread count does not change the per-item loss") {
  WorkspaceFixture fx(17, 6, 2, 55);
  auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);
  Vec w(17);
  RngStream rng(3, "test.hsic.threads");
  for (int i = 0; i < 17; ++i) w(i) = rng.uniform(0.1, 2.0);
  const Real l1 = masked_weighted_hsic_loss(ws, w, 1);
  const Real l4 = masked_weighted_hsic_loss(ws, w, 4);
  CHECK(l1 == l4);

  Vec logits = random_vec(rng, 17);
  Vec g1, g4;
  const Real a1 = hsic_loss_and_grad_logits(ws, logits, 2.0, 0.1, g1, 1);
  const Real a4 = hsic_loss_and_grad_logits(ws, logits, 2.0, 0.1, g4, 4);
  CHECK(a1 == a4);
  CHECK((g1 - g4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("per-item gradient matches central finite differences") {
  // 3 items, d'=5, 20 seeds; relative error < 1e-4 everywhere.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    WorkspaceFixture fx(3, 5, 2, seed);
    auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);
    RngStream rng(seed, "test.hsic.fd");
    Vec logits = random_vec(rng, 3);
    const Real w_max = 2.0;
    const Real gamma = 0.1;

    Vec grad;
    hsic_loss_and_grad_logits(ws, logits, w_max, gamma, grad);

    const Real h = 1e-5;
    for (int i = 0; i < 3; ++i) {
      Vec lp = logits, lm = logits;
      lp(i) += h;
      lm(i) -= h;
      Vec dump;
      const Real fp = hsic_loss_and_grad_logits(ws, lp, w_max, gamma, dump);
      const Real fm = hsic_loss_and_grad_logits(ws, lm, w_max, gamma, dump);
      const Real fd = (fp - fm) / (2.0 * h);
      const Real denom = std::max(std::abs(fd), 1e-8);
      CHECK(std::abs(grad(i) - fd) / denom < 1e-4);
    }
  }
}

TEST_CASE("population gradient matches central finite differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    WorkspaceFixture fx(6, 4, 2, seed + 100);
    auto ws =
        make_hsic_workspace(fx.projected, fx.mask, fx.items, HsicMode::population);
    RngStream rng(seed, "test.hsic.popfd");
    Vec logits = random_vec(rng, 6);
    const Real w_max = 2.0;
    const Real gamma = 0.1;

    Vec grad;
    hsic_loss_and_grad_logits(ws, logits, w_max, gamma, grad);

    const Real h = 1e-5;
    for (int i = 0; i < 6; ++i) {
      Vec lp = logits, lm = logits;
      lp(i) += h;
      lm(i) -= h;
      Vec dump;
      const Real fp = hsic_loss_and_grad_logits(ws, lp, w_max, gamma, dump);
      const Real fm = hsic_loss_and_grad_logits(ws, lm, w_max, gamma, dump);
      const Real fd = (fp - fm) / (2.0 * h);
      const Real denom = std::max(std::abs(fd), 1e-8);
      CHECK(std::abs(grad(i) - fd) / denom < 1e-4);
    }
  }
}

TEST_CASE("population loss mixes items through the kernel") {
  WorkspaceFixture fx(5, 4, 2, 77);
  auto ws =
      make_hsic_workspace(fx.projected, fx.mask, fx.items, HsicMode::population);
  CHECK(ws.pop_sigma.size() == 2);
  CHECK(ws.pop_sigma.minCoeff() > 0.0);
  const Real loss = masked_weighted_hsic_loss(ws, Vec::Ones(5));
  CHECK(loss > 0.0);
  CHECK(std::isfinite(loss));

  CHECK_THROWS_AS(
      make_hsic_workspace(fx.projected, fx.mask, {0}, HsicMode::population),
      ConfigError);
}

TEST_CASE("saturated logits have vanishing gradient") {
  WorkspaceFixture fx(3, 5, 2, 17);
  auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);
  Vec logits(3);
  logits << 20.0, -20.0, 0.0;
  Vec grad;
  hsic_loss_and_grad_logits(ws, logits, 2.0, 0.1, grad);
  CHECK(std::abs(grad(0)) < 1e-6);
  CHECK(std::abs(grad(1)) < 1e-6);
}

TEST_CASE("anchor penalty pulls weights toward one") {
  // With no HSIC term (single modality) the objective is just the anchor.
  WorkspaceFixture fx(2, 4, 1, 3);
  auto ws = make_hsic_workspace(fx.projected, fx.mask, fx.items);
  Vec logits(2);
  logits << 0.3, -0.8;
  Vec grad;
  const Real gamma = 0.5;
  const Real loss = hsic_loss_and_grad_logits(ws, logits, 2.0, gamma, grad);

  Real want = 0.0;
  for (int i = 0; i < 2; ++i) {
    const Real w = 2.0 * sigmoid(logits(i));
    want += gamma * (w - 1.0) * (w - 1.0) / 2.0;
  }
  CHECK(loss == doctest::Approx(want).epsilon(1e-12));
  // w(0) > 1 so the anchor pushes logit 0 down; w(1) < 1 pushes logit 1 up.
  CHECK(grad(0) > 0.0);
  CHECK(grad(1) < 0.0);
}
