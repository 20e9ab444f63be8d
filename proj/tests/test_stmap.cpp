#include "doctest.h"
#include "helpers.hpp"

#include "dgan/stmap.hpp"

using namespace dgan;

TEST_CASE("locate single cell and outer boundary") {
  GridSpec one{0, 0, 1, 1, 1, 1};
  auto c = locate(one, 0.5, 0.5);
  REQUIRE(c);
  CHECK(*c == Cell{0, 0});

  GridSpec g{40.0, -74.0, 41.0, -73.0, 9, 9};
  auto corner = locate(g, 41.0, -73.0);
  REQUIRE(corner);
  CHECK(*corner == Cell{8, 8});
  CHECK_FALSE(locate(g, 39.999, -73.5));
  CHECK_FALSE(locate(g, 40.5, -72.9));
}

TEST_CASE("locate agrees with brute-force interval scan") {
  GridSpec g{-3.0, 10.0, 2.0, 17.0, 7, 5};
  Rng rng(3);
  std::uniform_real_distribution<double> lat(-3.0, 2.0), lon(10.0, 17.0);
  const double dlat = (g.lat_end - g.lat_start) / static_cast<double>(g.rows);
  const double dlon = (g.lon_end - g.lon_start) / static_cast<double>(g.cols);
  for (int k = 0; k < 5000; ++k) {
    const double a = lat(rng), b = lon(rng);
    int hits = 0;
    Cell found{};
    for (Index r = 0; r < g.rows; ++r)
      for (Index q = 0; q < g.cols; ++q) {
        const double lo_a = g.lat_start + dlat * static_cast<double>(r);
        const double lo_b = g.lon_start + dlon * static_cast<double>(q);
        const bool in_a = a >= lo_a && (a < lo_a + dlat || r == g.rows - 1);
        const bool in_b = b >= lo_b && (b < lo_b + dlon || q == g.cols - 1);
        if (in_a && in_b) {
          ++hits;
          found = {r, q};
        }
      }
    REQUIRE(hits == 1);
    auto c = locate(g, a, b);
    REQUIRE(c);
    CHECK(*c == found);
  }
}

TEST_CASE("grid validation") {
  CHECK_THROWS(GridSpec{1, 0, 0, 1, 1, 1}.validate());
  CHECK_THROWS(GridSpec{0, 0, 1, 1, 0, 1}.validate());
  CHECK_NOTHROW(GridSpec{0, 0, 1, 1, 2, 3}.validate());
}

TEST_CASE("fit_minmax") {
  std::vector<STMap> maps;
  GridMatrix<double> a(2, 6);
  for (int i = 0; i < 12; ++i) a.data()[i] = std::min(i, 10);
  maps.push_back({a, 0});
  auto s = fit_minmax(maps);
  CHECK(s.data_min == 0.0);
  CHECK(s.data_max == 10.0);

  std::vector<STMap> flat{{GridMatrix<double>::Constant(3, 3, 5.0), 0}};
  s = fit_minmax(flat);
  CHECK(s.data_min == 5.0);
  CHECK(s.data_max == 5.0);

  CHECK_THROWS_WITH(fit_minmax(std::span<const STMap>{}), "no training data");

  Rng rng(11);
  std::vector<STMap> many;
  double lo = 1e300, hi = -1e300;
  for (int k = 0; k < 100; ++k) {
    many.push_back({testutil::random_map(4, 5, rng, -3, 8), k});
    for (Index i = 0; i < 20; ++i) {
      lo = std::min(lo, many.back().values.data()[i]);
      hi = std::max(hi, many.back().values.data()[i]);
    }
  }
  s = fit_minmax(many);
  CHECK(s.data_min == lo);
  CHECK(s.data_max == hi);
}

TEST_CASE("normalize and denormalize") {
  MinMaxScaler s{0.0, 10.0};
  GridMatrix<double> m = GridMatrix<double>::Constant(1, 1, 10.0);
  CHECK(s.normalize(m)(0, 0) == 1.0);
  m(0, 0) = 25.0;
  CHECK(s.normalize(m)(0, 0) == 1.0);  // clamped
  m(0, 0) = -1.0;
  CHECK(s.normalize(m)(0, 0) == 0.0);

  MinMaxScaler d{5.0, 5.0};
  GridMatrix<double> five = GridMatrix<double>::Constant(2, 2, 5.0);
  CHECK(d.normalize(five).isZero());
  CHECK(d.denormalize(GridMatrix<double>::Zero(2, 2)).isApproxToConstant(5.0));

  Rng rng(5);
  MinMaxScaler r{-2.0, 7.0};
  for (int k = 0; k < 50; ++k) {
    auto x = testutil::random_map(3, 4, rng, -2.0, 7.0);
    auto y = r.denormalize(r.normalize(x));
    CHECK((x - y).cwiseAbs().maxCoeff() < 1e-12);
    auto n = r.normalize(x);
    CHECK(n.minCoeff() >= 0.0);
    CHECK(n.maxCoeff() <= 1.0);
  }
}

TEST_CASE("sequence invariants") {
  STSequence seq(2, 2, 100);
  seq.push_back(GridMatrix<double>::Ones(2, 2));
  seq.push_back(GridMatrix<double>::Ones(2, 2));
  CHECK(seq[1].slot == 101);
  CHECK(seq.total() == 8.0);
  CHECK_THROWS(seq.push_back(GridMatrix<double>::Ones(3, 2)));
  GridMatrix<double> bad = GridMatrix<double>::Ones(2, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS(seq.push_back(bad));
}

namespace {

std::shared_ptr<const STSequence> ramp(int n) {
  auto s = std::make_shared<STSequence>(1, 1, 0);
  for (int i = 0; i < n; ++i) s->push_back(GridMatrix<double>::Constant(1, 1, i));
  return s;
}

}  // namespace

TEST_CASE("window counts") {
  CHECK(window(ramp(25), nullptr, 24).size() == 1);
  CHECK(window(ramp(48), nullptr, 24).size() == 24);
  CHECK_THROWS(window(ramp(24), nullptr, 24));
  for (int n = 4; n < 40; ++n) CHECK(window(ramp(n), nullptr, 3).size() == static_cast<std::size_t>(n - 3));

  auto w = window(ramp(30), nullptr, 5);
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (Index t = 0; t < 5; ++t) CHECK(w.history(i, t).slot == static_cast<std::int64_t>(i) + t);
    CHECK(w.target(i).slot == w.history(i, 4).slot + 1);
  }
}
