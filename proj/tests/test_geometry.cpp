#include "tal/geometry.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"

using namespace tal;

namespace {

// Independent oracle: discretize at fixed resolution and count cells
// covered by the intersection and the union.
double tiou_brute_force(const Segment& a, const Segment& b, double res = 1e-3) {
  const double lo = std::min(a.start, b.start);
  const double hi = std::max(a.end, b.end);
  long inter = 0, uni = 0;
  for (double t = lo + 0.5 * res; t < hi; t += res) {
    const bool in_a = t >= a.start && t <= a.end;
    const bool in_b = t >= b.start && t <= b.end;
    if (in_a && in_b) ++inter;
    if (in_a || in_b) ++uni;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TEST_CASE("tiou worked examples") {
  CHECK(tiou({3, 7}, {3, 7}) == doctest::Approx(1.0));
  CHECK(tiou({0, 1}, {5, 9}) == doctest::Approx(0.0));
  CHECK(tiou({0, 2}, {1, 3}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("tiou degenerate unions score zero") {
  CHECK(tiou({5, 5}, {5, 5}) == 0.0);
  CHECK(tiou({5, 5}, {3, 7}) == 0.0);
}

TEST_CASE("tiou symmetry, identity and bounds on random pairs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 2000; ++i) {
    double a0 = u(rng), a1 = u(rng), b0 = u(rng), b1 = u(rng);
    Segment a{std::min(a0, a1), std::max(a0, a1)};
    Segment b{std::min(b0, b1), std::max(b0, b1)};
    const double t = tiou(a, b);
    CHECK(t == tiou(b, a));
    CHECK(t >= 0.0);
    CHECK(t <= 1.0);
    if (a.length() > 0.0) CHECK(tiou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("tiou matches the discretized brute-force oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 500; ++i) {
    double a0 = u(rng), a1 = u(rng), b0 = u(rng), b1 = u(rng);
    Segment a{std::min(a0, a1), std::max(a0, a1)};
    Segment b{std::min(b0, b1), std::max(b0, b1)};
    CHECK(tiou(a, b) == doctest::Approx(tiou_brute_force(a, b)).epsilon(0.0).scale(0.0).epsilon(2e-3));
  }
}

TEST_CASE("best_tiou picks the arg-max with lowest-index ties") {
  std::vector<Segment> gts = {{1, 3}, {0, 2}};
  auto [score, idx] = best_tiou({0, 2}, gts);
  CHECK(score == doctest::Approx(1.0));
  CHECK(idx == 1);

  auto [s2, i2] = best_tiou({0, 2}, std::vector<Segment>{{1, 3}});
  CHECK(s2 == doctest::Approx(1.0 / 3.0));
  CHECK(i2 == 0);

  auto [s3, i3] = best_tiou({10, 11}, std::vector<Segment>{{0, 1}, {20, 21}});
  CHECK(s3 == 0.0);
  CHECK(i3 == 0);

  CHECK_THROWS_AS(best_tiou({0, 1}, {}), std::invalid_argument);
}

TEST_CASE("anchor offset transform") {
  Segment r = apply_anchor_offset({10, 20}, {0.1, -0.1});
  CHECK(r.start == doctest::Approx(11.0));
  CHECK(r.end == doctest::Approx(19.0));
  CHECK(apply_anchor_offset({10, 20}, {0, 0}) == Segment{10, 20});
  CHECK(apply_anchor_offset({5, 5}, {3.7, -1.2}) == Segment{5, 5});
}

TEST_CASE("center offset transform") {
  CHECK(apply_center_offset(10, {0, 4}) == Segment{8, 12});
  CHECK(apply_center_offset(10, {2, 0}) == Segment{12, 12});
  // Out-of-range center: raw [-5,-3] clamps to [0,0].
  CHECK(apply_center_offset(1, {-5, 2}) == Segment{0, 0});
  // Negative predicted length clamps to 0.
  CHECK(apply_center_offset(10, {0, -3}) == Segment{10, 10});
}

TEST_CASE("continuous offset transform") {
  Segment r = apply_continuous_offset({4, 8}, {0.25, -0.25});
  CHECK(r.start == doctest::Approx(5.0));
  CHECK(r.end == doctest::Approx(7.0));
  CHECK(apply_continuous_offset({4, 8}, {0, 0}) == Segment{4, 8});
  CHECK(apply_continuous_offset({6, 6}, {0.5, 0.5}) == Segment{6, 6});
}

TEST_CASE("continuous offset is the identity at zero offsets (property)") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  for (int i = 0; i < 500; ++i) {
    double a = u(rng), b = u(rng);
    Segment x{std::min(a, b), std::max(a, b)};
    CHECK(apply_continuous_offset(x, {0, 0}) == x);
  }
}

TEST_CASE("anchor and continuous transforms agree when anchor == x") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  for (int i = 0; i < 500; ++i) {
    double a = u(rng), b = u(rng);
    Segment x{std::min(a, b), std::max(a, b)};
    OffsetPair off{d(rng), d(rng)};
    CHECK(apply_anchor_offset(x, off) == apply_continuous_offset(x, off));
  }
}

TEST_CASE("offset transforms re-order inverted endpoints and clamp at 0") {
  // Large opposing offsets invert the endpoints.
  Segment r = apply_continuous_offset({2, 4}, {3.0, -3.0});
  CHECK(r.start <= r.end);
  CHECK(r.start >= 0.0);
  Segment r2 = apply_continuous_offset({0, 4}, {-2.0, -2.0});
  CHECK(r2.start == 0.0);
}

TEST_CASE("spf floor") {
  TimeGrid grid{10, 10.0};  // step 1
  SUBCASE("symmetric expansion") {
    Segment r = clamp_spf({5.0, 5.0}, grid, 4);
    CHECK(r.start == doctest::Approx(4.875));
    CHECK(r.end == doctest::Approx(5.125));
  }
  SUBCASE("longer segments untouched") {
    CHECK(clamp_spf({2, 6}, grid, 4) == Segment{2, 6});
  }
  SUBCASE("left clamp pushes expansion rightward") {
    Segment r = clamp_spf({0, 0}, grid, 2);
    CHECK(r.start == doctest::Approx(0.0));
    CHECK(r.end == doctest::Approx(0.5));
  }
  SUBCASE("right boundary pushes expansion leftward") {
    Segment r = clamp_spf({10, 10}, grid, 2);
    CHECK(r.start == doctest::Approx(9.5));
    CHECK(r.end == doctest::Approx(10.0));
  }
}

TEST_CASE("spf floor never yields shorter than spf unless duration is") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  TimeGrid grid{10, 10.0};
  for (int i = 0; i < 500; ++i) {
    double a = u(rng), b = u(rng);
    Segment x{std::min(a, b), std::max(a, b)};
    const int fps = 1 + static_cast<int>(u(rng));
    const double spf = grid.step() / fps;
    Segment r = clamp_spf(x, grid, fps);
    CHECK(r.length() >= spf - 1e-12);
    CHECK(r.start >= 0.0);
    CHECK(r.end <= grid.duration + 1e-12);
  }
}

TEST_CASE("bottom-up fusion") {
  CHECK(bottom_up_fuse(1, 1, 1) == 1.0);
  CHECK(bottom_up_fuse(0.5, 0.5, 0.8) == doctest::Approx(0.2));
  CHECK(bottom_up_fuse(0, 0.4, 0.9) == 0.0);
}
