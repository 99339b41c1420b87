#include "doctest.h"

#include "phenoflux/data_model.hpp"

#include <random>
#include <set>

using namespace phenoflux;

namespace {

std::map<int, GccSeries> random_history(std::mt19937_64& rng, int years) {
  std::uniform_real_distribution<double> u(0.2, 0.5);
  std::map<int, GccSeries> h;
  for (int y = 0; y < years; ++y) {
    GccSeries s;
    for (Index d = 0; d < kYearDays; ++d) {
      s.observed(d) = (rng() % 10) != 0;
      s.values(d) = s.observed(d) ? u(rng) : 0.0;
    }
    h.emplace(2000 + y, s);
  }
  return h;
}

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("S" + std::to_string(i));
  return v;
}

}  // namespace

TEST_CASE("leap years and noleap day of year") {
  CHECK(is_leap_year(2000));
  CHECK(is_leap_year(2004));
  CHECK_FALSE(is_leap_year(1900));
  CHECK_FALSE(is_leap_year(2001));

  CHECK(day_of_year_noleap({2001, 1, 1}) == 1);
  CHECK(day_of_year_noleap({2001, 12, 31}) == 365);
  CHECK(day_of_year_noleap({2004, 3, 1}) == 60);
  CHECK(day_of_year_noleap({2003, 3, 1}) == 60);
  CHECK_FALSE(day_of_year_noleap({2004, 2, 29}).has_value());

  for (int doy = 1; doy <= 365; ++doy) CHECK(day_of_year_noleap(date_from_doy_noleap(2004, doy)) == doy);
}

TEST_CASE("ISO dates") {
  CHECK(parse_iso_date("2004-02-29") == CivilDate{2004, 2, 29});
  CHECK(parse_iso_date("2001-07-04T12:00:00") == CivilDate{2001, 7, 4});
  CHECK_THROWS_AS(parse_iso_date("2001-02-29"), Error);
  CHECK_THROWS_AS(parse_iso_date("2001-13-01"), Error);
  CHECK_THROWS_AS(parse_iso_date("01-01-2001"), Error);
  CHECK_THROWS_AS(parse_iso_date("2001/01/01"), Error);
}

TEST_CASE("daily 90th percentile") {
  // three values per day: percentile with linear interpolation at rank 1.8
  std::vector<GccObservation> obs;
  obs.push_back({{2001, 1, 1}, 0.30});
  obs.push_back({{2001, 1, 1}, 0.40});
  obs.push_back({{2001, 1, 1}, 0.35});
  obs.push_back({{2001, 1, 3}, 0.25});
  const GccSeries s = daily_gcc_percentile(obs);
  CHECK(s.values(0) == doctest::Approx(0.35 + 0.8 * 0.05).epsilon(1e-14));
  CHECK(s.observed(0));
  CHECK_FALSE(s.observed(1));
  CHECK(s.values(2) == 0.25);
  CHECK(s.observed_count() == 2);

  obs.push_back({{2002, 1, 1}, 0.3});
  CHECK_THROWS_AS(daily_gcc_percentile(obs), Error);
}

TEST_CASE("filled series interpolates masked days") {
  GccSeries s;
  s.observed(10) = s.observed(14) = true;
  s.values(10) = 1.0;
  s.values(14) = 3.0;
  const Vector f = s.filled();
  CHECK(f(0) == 1.0);
  CHECK(f(12) == doctest::Approx(2.0));
  CHECK(f(364) == 3.0);
}

TEST_CASE("quality filter") {
  SiteGccHistory good;
  good.site_id = "A";
  good.raw_values = {0.2, 0.3};
  GccSeries full;
  full.observed.setConstant(true);
  full.values.setConstant(0.3);
  good.daily[2001] = full;

  auto bad_group = good;
  bad_group.site_id = "B";
  bad_group.quality_group = 3;
  auto bad_range = good;
  bad_range.site_id = "C";
  bad_range.raw_values.push_back(0.65);
  auto short_year = good;
  short_year.site_id = "D";
  short_year.daily[2001].observed.head(70).setConstant(false);

  const QualityReport r = quality_filter({good, bad_group, bad_range, short_year});
  REQUIRE(r.accepted.size() == 1);
  CHECK(r.accepted[0].site_id == "A");
  REQUIRE(r.rejected.size() == 3);
  CHECK(r.rejected[0].site_id == "B");
  CHECK(r.rejected[1].reason == "gcc out of range");
  CHECK(r.rejected[2].reason == "no complete year");
}

TEST_CASE("gcc standardization round trip") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto h = random_history(rng, 1 + trial % 4);
    GccRange range;
    const auto z = standardize_gcc(h, &range);
    double lo = 1.0, hi = 0.0;
    for (const auto& [y, s] : z)
      for (Index d = 0; d < kYearDays; ++d)
        if (s.observed(d)) {
          lo = std::min(lo, s.values(d));
          hi = std::max(hi, s.values(d));
        }
    CHECK(lo == 0.0);
    CHECK(hi == doctest::Approx(1.0).epsilon(1e-15));
    const auto back = destandardize_gcc(z, range);
    for (const auto& [y, s] : h)
      for (Index d = 0; d < kYearDays; ++d)
        if (s.observed(d)) CHECK(std::abs(back.at(y).values(d) - s.values(d)) <= 1e-12);
  }
  std::map<int, GccSeries> flat;
  flat[2001].observed.setConstant(true);
  CHECK_THROWS_AS(standardize_gcc(flat), Error);
}

TEST_CASE("split sizes") {
  const auto s = split_sizes(12);
  CHECK(s.train == 9);
  CHECK(s.validation == 1);
  CHECK(s.test == 2);
  for (std::size_t n = 3; n < 200; ++n) {
    const auto z = split_sizes(n);
    CHECK(z.train + z.validation + z.test == n);
    CHECK(z.train >= 1);
    CHECK(z.validation >= 1);
    CHECK(z.test >= 1);
  }
  CHECK_THROWS_AS(split_sizes(2), Error);
}

TEST_CASE("site split is a partition and seeded") {
  const auto v = ids(23);
  const auto a = split_sites(v, 11);
  const auto b = split_sites(v, 11);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  validate_split(a);
  std::set<std::string> all(a.train.begin(), a.train.end());
  all.insert(a.validation.begin(), a.validation.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == v.size());

  auto dup = a;
  dup.test.push_back(dup.train.front());
  CHECK_THROWS_AS(validate_split(dup), Error);
  CHECK_THROWS_AS(split_sites({"A", "A", "B"}, 1), Error);
}

TEST_CASE("normalization statistics pool samples and days") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(3.0, 2.0);
  std::vector<Matrix> inputs(4, Matrix(3, 50));
  for (auto& m : inputs)
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  inputs[0].row(2).setConstant(7.0);
  for (auto& m : inputs) m.row(2).setConstant(7.0);
  const NormStats s = fit_norm_stats(inputs);
  // oracle: concatenate all columns
  Matrix all(3, 200);
  for (int k = 0; k < 4; ++k) all.middleCols(50 * k, 50) = inputs[static_cast<std::size_t>(k)];
  for (Index r = 0; r < 2; ++r) {
    const double mean = all.row(r).mean();
    const double sd = std::sqrt((all.row(r).array() - mean).square().mean());
    CHECK(s.mean(r) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(s.std(r) == doctest::Approx(sd).epsilon(1e-12));
  }
  CHECK(s.std(2) == 1.0);
  const Matrix z = apply_norm(inputs[1], s);
  CHECK(z.row(2).isZero());
}

TEST_CASE("met gap filling") {
  Matrix m = Matrix::Zero(2, 20);
  std::vector<bool> present(20, true);
  for (Index d = 0; d < 20; ++d) m.col(d).setConstant(static_cast<double>(d));
  for (int d = 5; d < 12; ++d) {
    present[static_cast<std::size_t>(d)] = false;
    m.col(d).setConstant(-1.0);
  }
  Matrix filled = m;
  CHECK(fill_met_gaps(filled, present, 7));
  CHECK(filled(1, 8) == doctest::Approx(8.0));
  Matrix too_long = m;
  CHECK_FALSE(fill_met_gaps(too_long, present, 6));
  present[0] = false;
  Matrix edge = m;
  CHECK_FALSE(fill_met_gaps(edge, present, 7));
}
