#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "modest/rng.hpp"

using namespace modest;

TEST_CASE("fnv1a64 matches reference vectors") {
  // Published FNV-1a test vectors.
  CHECK(fnv1a64("", 0) == 14695981039346656037ull);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("named streams are independent and reproducible") {
  RngStream a1(42, "dataset"), a2(42, "dataset"), b(42, "init"), c(43, "dataset");
  std::vector<std::uint64_t> va1, va2, vb, vc;
  for (int i = 0; i < 16; ++i) {
    va1.push_back(a1.next_u64());
    va2.push_back(a2.next_u64());
    vb.push_back(b.next_u64());
    vc.push_back(c.next_u64());
  }
  CHECK(va1 == va2);
  CHECK(va1 != vb);
  CHECK(va1 != vc);
}

TEST_CASE("uniform stays in (0,1) and has sane moments") {
  RngStream rng(7, "test");
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.01);
  CHECK(std::abs(var - 1.0 / 12.0) < 0.01);
}

TEST_CASE("uniform(lo,hi) respects bounds") {
  RngStream rng(7, "test");
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-3.0, 5.0);
    REQUIRE(u > -3.0);
    REQUIRE(u < 5.0);
  }
}

TEST_CASE("uniform_index covers the whole range") {
  RngStream rng(11, "test");
  std::set<std::size_t> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(rng.uniform_index(7));
  CHECK(seen.size() == 7);
  CHECK(*seen.rbegin() == 6);
}

TEST_CASE("gaussian moments") {
  RngStream rng(13, "test");
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sum2 += g * g;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sum2 / n - 1.0) < 0.03);
}

TEST_CASE("gumbel moments match Euler-Mascheroni mean") {
  RngStream rng(17, "test");
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += rng.gumbel();
  CHECK(std::abs(sum / n - 0.5772156649) < 0.02);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  RngStream r1(5, "s"), r2(5, "s");
  std::vector<int> v1(50), v2(50);
  for (int i = 0; i < 50; ++i) v1[i] = v2[i] = i;
  r1.shuffle(v1);
  r2.shuffle(v2);
  CHECK(v1 == v2);
  auto sorted = v1;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(v1 != sorted);  // 50! leaves identity vanishingly unlikely
}
