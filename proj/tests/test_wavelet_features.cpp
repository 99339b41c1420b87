#include "doctest.h"

#include "phenoflux/climate_features.hpp"
#include "phenoflux/wavelet.hpp"

#include <filesystem>
#include <numbers>
#include <random>

using namespace phenoflux;

namespace {

// plain double loop over every day pair, no kernel tables
Matrix direct_cwt(const Vector& x, const WaveletConfig& c) {
  Matrix out = Matrix::Zero(c.scales(), x.size());
  for (Index i = 0; i < c.scales(); ++i) {
    const double sigma = std::pow(2.0, c.scale_exponents[static_cast<std::size_t>(i)]);
    const double half = std::floor(c.truncation_radius * sigma);
    for (Index d = 0; d < x.size(); ++d)
      for (Index k = 0; k < x.size(); ++k)
        if (std::abs(static_cast<double>(k - d)) <= half) out(i, d) += x(k) * ricker(static_cast<double>(k - d), sigma);
  }
  return out;
}

Vector random_series(std::mt19937_64& rng, Index n, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> g(mean, sd);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

MetGrid random_met(std::mt19937_64& rng) {
  MetGrid m;
  for (Index r = 0; r < kMetVariables; ++r) m.values.row(r) = random_series(rng, kMetDays, 280.0, 8.0).transpose();
  return m;
}

}  // namespace

TEST_CASE("ricker wavelet has unit energy and zero mean") {
  for (double sigma : {0.5, 1.0, 4.0, 32.0}) {
    double energy = 0.0, mean = 0.0;
    const double h = sigma / 200.0;
    for (double t = -30 * sigma; t <= 30 * sigma; t += h) {
      const double v = ricker(t, sigma);
      energy += v * v * h;
      mean += v * h;
    }
    CHECK(energy == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(mean) < 1e-6);
  }
  CHECK(ricker(0.0, 1.0) == doctest::Approx(2.0 / (std::sqrt(3.0) * std::pow(std::numbers::pi, 0.25))));
  CHECK_THROWS_AS(ricker(0.0, 0.0), Error);
}

TEST_CASE("cwt matches the direct sum") {
  std::mt19937_64 rng(17);
  const WaveletConfig c;
  for (int trial = 0; trial < 3; ++trial) {
    const Vector x = random_series(rng, kMetDays);
    const Matrix a = cwt(x, c);
    const Matrix b = direct_cwt(x, c);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("cwt of an impulse is the sampled wavelet") {
  WaveletConfig c;
  c.scale_exponents = {1};
  Vector x = Vector::Zero(101);
  x(50) = 1.0;
  const Matrix w = cwt(x, c);
  for (Index d = 0; d < 101; ++d) {
    const double expected = std::abs(d - 50) <= 10 ? ricker(static_cast<double>(50 - d), 2.0) : 0.0;
    CHECK(w(0, d) == doctest::Approx(expected));
  }
}

TEST_CASE("cwt is linear and templated on the scalar") {
  std::mt19937_64 rng(4);
  const WaveletConfig c;
  const Vector x = random_series(rng, 200), y = random_series(rng, 200);
  const Matrix lhs = cwt((2.0 * x + 3.0 * y).eval(), c);
  const Matrix rhs = 2.0 * cwt(x, c) + 3.0 * cwt(y, c);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);

  const Eigen::VectorXf xf = x.cast<float>();
  const Eigen::MatrixXf wf = cwt(xf, c);
  CHECK((wf.cast<double>() - cwt(x, c)).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("wavelet config validation") {
  WaveletConfig c;
  c.scale_exponents = {2, 1};
  CHECK_THROWS_AS(c.validate(), Error);
  c.scale_exponents = {};
  CHECK_THROWS_AS(c.validate(), Error);
  c.scale_exponents = {0};
  c.truncation_radius = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("stacked input layout is variable-major") {
  std::mt19937_64 rng(8);
  const MetGrid met = random_met(rng);
  const Vector walk = random_walk(kMetDays, 99);
  const WaveletConfig c;
  const Matrix s = stack_wavelet_rows(met, walk, c);
  REQUIRE(s.rows() == 120);
  REQUIRE(s.cols() == kMetDays);
  const Matrix v3 = cwt(Vector(met.values.row(3).transpose()), c);
  CHECK((s.middleRows(30, 10) - v3).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((s.bottomRows(10) - cwt(walk, c)).cwiseAbs().maxCoeff() < 1e-9);

  const Matrix r = stack_raw_rows(met, walk);
  CHECK(r.rows() == 12);
  CHECK(r.row(11).transpose() == walk);
}

TEST_CASE("tensor dump round trip") {
  std::mt19937_64 rng(2);
  Matrix m(5, 7);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = random_series(rng, 1)(0);
  const auto path = std::filesystem::temp_directory_path() / "phenoflux_tensor_test.bin";
  write_tensor(path, m);
  CHECK(read_tensor(path) == m);
  std::filesystem::remove(path);
}

TEST_CASE("gdd worked example") {
  const Vector t = Vector::Constant(365, 278.15);
  CHECK(gdd(t, 10) == 10.0);
  CHECK(chill_days(t, 10) == 0);
  const Vector warm = Vector::Constant(365, 280.0);
  // 2.85 K per day reaches 28.5 on day 10
  CHECK(gdd(warm, 10) == doctest::Approx(28.5).epsilon(1e-12));
  CHECK_THROWS_AS(gdd(t, 0), Error);
  CHECK_THROWS_AS(gdd(t, 366), Error);
}

TEST_CASE("gdd and chill days against brute force") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector t = random_series(rng, 365, 278.0, 6.0);
    const int doy = 1 + static_cast<int>(rng() % 365);
    double g = 0.0;
    int c = 0;
    for (int d = 1; d <= doy; ++d) g += std::max(0.0, t(d - 1) - 277.15);
    for (int d = 1; d < doy; ++d) c += t(d - 1) < 277.15 ? 1 : 0;
    CHECK(gdd(t, doy) == g);
    CHECK(chill_days(t, doy) == c);
    const DegreeProfile p = degree_profile(t);
    CHECK(p.gdd(doy - 1) == g);
    CHECK(p.chill(doy - 1) == c);
  }
}

TEST_CASE("degree features by year offset and chill start") {
  MetGrid m;
  m.values.row(kTminRow).setConstant(270.0);
  m.values.row(kTmaxRow).setConstant(280.0);  // mean 275 K, chilling every day
  m.values.row(kTmaxRow).tail(kYearDays).setConstant(290.0);  // current year warm: mean 280 K
  const auto cur = degree_features(m, 100, YearOffset::Current);
  CHECK(cur.gdd == doctest::Approx(100 * 2.85));
  CHECK(cur.chill_days == 0);
  const auto prev = degree_features(m, 100, YearOffset::Previous);
  CHECK(prev.gdd == 0.0);
  CHECK(prev.chill_days == 99);
  const auto autumn = degree_features(m, 100, YearOffset::Current, 300);
  CHECK(autumn.chill_days == 66);
}

TEST_CASE("random walk is seeded and cumulative") {
  const Vector a = random_walk(730, 5), b = random_walk(730, 5), c = random_walk(730, 6);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(walk_seed("SITE", 2001) == walk_seed("SITE", 2001));
  CHECK(walk_seed("SITE", 2001) != walk_seed("SITE", 2002));
}

TEST_CASE("normals use the most recent window") {
  Matrix t(3, 365), p(3, 365);
  t.row(0).setConstant(270.0);
  t.row(1).setConstant(280.0);
  t.row(2).setConstant(290.0);
  p.setConstant(1.0);
  const auto n = normals_from_history(t, p, 2);
  CHECK(n.mean_annual_temp == doctest::Approx(285.0));
  CHECK(n.mean_annual_precip == doctest::Approx(365.0));
}
