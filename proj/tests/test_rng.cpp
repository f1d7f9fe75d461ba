#include <cmath>
#include <set>

#include "doctest.h"
#include "rmlp/rng.hpp"
#include "rmlp/special_functions.hpp"

using namespace rmlp;

TEST_SUITE("rng") {
  TEST_CASE("philox4x64-10 known answers") {
    auto a = philox4x64({0, 0, 0, 0}, {0, 0});
    CHECK(a[0] == 0x16554d9eca36314cULL);
    CHECK(a[1] == 0xdb20fe9d672d0fdcULL);
    CHECK(a[2] == 0xd7e772cee186176bULL);
    CHECK(a[3] == 0x7e68b68aec7ba23bULL);

    const u64 ff = ~0ULL;
    auto b = philox4x64({ff, ff, ff, ff}, {ff, ff});
    CHECK(b[0] == 0x87b092c3013fe90bULL);
    CHECK(b[1] == 0x438c3c67be8d0224ULL);
    CHECK(b[2] == 0x9cc7d7c69cd777b6ULL);
    CHECK(b[3] == 0xa09caebf594f0ba0ULL);

    auto c = philox4x64({0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL, 0xa4093822299f31d0ULL, 0x082efa98ec4e6c89ULL},
                        {0x452821e638d01377ULL, 0xbe5466cf34e90c6cULL});
    CHECK(c[0] == 0xa528f45403e61d95ULL);
    CHECK(c[1] == 0x38c72dbd566e9788ULL);
    CHECK(c[2] == 0xa5a1610e72fd18b5ULL);
    CHECK(c[3] == 0x57bd43b5e52b7fe6ULL);
  }

  TEST_CASE("same key and lane give the same draws") {
    const RngKey k = RngKey::root(42, 3).child(2, 17, 1);
    RngStream a(k, 9), b(k, 9);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(a.counter() == 1000);
  }

  TEST_CASE("children, lanes and replicates are distinct") {
    const RngKey root = RngKey::root(1);
    std::set<u64> firsts;
    for (int l = -3; l <= 3; ++l)
      for (int m = 0; m < 5; ++m) {
        RngStream s(root.child(l, m, 2));
        firsts.insert(s.next_u64());
      }
    CHECK(firsts.size() == 35);
    CHECK(!(root.child(1, 0, 2) == root.child(-1, 0, 2)));
    CHECK(!(RngKey::root(1, 0) == RngKey::root(1, 1)));
    RngStream l0(root, 0), l1(root, 1);
    CHECK(l0.next_u64() != l1.next_u64());
  }

  TEST_CASE("uniform lies in the open unit interval with the right moments") {
    RngStream s(RngKey::root(5));
    double sum = 0, sq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = s.uniform();
      REQUIRE(u > 0.0);
      REQUIRE(u < 1.0);
      sum += u;
      sq += u * u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.005));
    CHECK(sq / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12).epsilon(0.01));
  }

  TEST_CASE("normal quantile matches tabulated values") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-14));
    CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-13));
    CHECK(std::isinf(normal_quantile(0.0)));
    CHECK(std::isinf(normal_quantile(1.0)));
    CHECK(std::isnan(normal_quantile(1.5)));
    for (double p : {1e-6, 0.01, 0.2, 0.7, 0.99, 1 - 1e-9}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }

  TEST_CASE("normal and exponential draws have the right moments") {
    RngStream s(RngKey::root(11));
    const int n = 400000;
    double m1 = 0, m2 = 0, e1 = 0;
    for (int i = 0; i < n; ++i) {
      const double z = s.normal();
      m1 += z;
      m2 += z * z;
      e1 += s.exponential();
    }
    CHECK(std::fabs(m1 / n) < 4.0 / std::sqrt(n));
    CHECK(m2 / n == doctest::Approx(1.0).epsilon(0.01));
    CHECK(e1 / n == doctest::Approx(1.0).epsilon(0.01));
  }
}
