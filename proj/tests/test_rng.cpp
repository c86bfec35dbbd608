#include "dlab/rng.hpp"

#include "doctest.h"

#include <cmath>

using namespace dlab;

TEST_CASE("split is a pure function of the path") {
  const RngStream root(42);
  auto a = root.split(0), b = root.split(0);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  auto c = root.split(0), d = root.split(1);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += c.next_u64() == d.next_u64();
  CHECK(same == 0);

  // drawing from the parent does not move its children
  RngStream parent(42);
  for (int i = 0; i < 17; ++i) parent.next_u64();
  auto e = parent.split(0), f = root.split(0);
  CHECK(e.next_u64() == f.next_u64());
  CHECK(root.split(3).split(5).path() == std::vector<std::uint64_t>{3, 5});
}

TEST_CASE("normal draws have the right first two moments") {
  RngStream r(7);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 0.01);
}

TEST_CASE("uniform and below stay in range") {
  RngStream r(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
  }
}
