#include "doctest.h"

#include "phenoflux/climate_features.hpp"
#include "phenoflux/mechanistic.hpp"
#include "phenoflux/pheno_metrics.hpp"

#include <random>

using namespace phenoflux;

namespace {

Vector seasonal_tmean(double base, double amplitude, std::mt19937_64& rng, double noise = 0.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector t(kYearDays);
  for (Index d = 0; d < kYearDays; ++d)
    t(d) = base - amplitude * std::cos(2.0 * std::numbers::pi * static_cast<double>(d + 1 - 20) / 365.0) + noise * g(rng);
  return t;
}

Vector double_logistic(double sos, double eos, double slope = 0.15, double lo = 0.0, double hi = 1.0) {
  Vector g(kYearDays);
  for (Index d = 0; d < kYearDays; ++d) {
    const double t = static_cast<double>(d + 1);
    g(d) = lo + (hi - lo) * (sigmoid(slope * (t - sos)) - sigmoid(slope * (t - eos)));
  }
  return g;
}

}  // namespace

TEST_CASE("spring onset worked examples") {
  const Vector t = Vector::Constant(365, 280.0);
  CHECK(spring_onset(t, {28.5, 0.0, 0.1}) == 10);
  CHECK(spring_onset(t, {0.0, 0.0, 0.1}) == 1);
  const Vector cold = Vector::Constant(365, 270.0);
  CHECK(spring_onset(cold, {10.0, 0.0, 0.1}) == kNeverReached);
  CHECK_THROWS_AS(SpringParams({-1.0, 0.0, 0.0}).validate(), Error);
}

TEST_CASE("spring onset never later under uniform warming when b = 0") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector t = seasonal_tmean(280.0, 12.0, rng, 2.0);
    const SpringParams p{static_cast<double>(rng() % 800), 0.0, 0.05};
    CHECK(spring_onset(Vector(t.array() + 1.0), p) <= spring_onset(t, p));
  }
}

TEST_CASE("spring fit recovers generating parameters") {
  std::mt19937_64 rng(9);
  const SpringParams truth{300.0, 200.0, 0.05};
  std::vector<Vector> series;
  std::vector<int> sos;
  for (int i = 0; i < 20; ++i) {
    series.push_back(seasonal_tmean(278.0 + 0.5 * i, 11.0, rng, 2.0));
    sos.push_back(spring_onset(series.back(), truth));
  }
  const SpringFit fit = fit_spring_params(series, sos);
  CHECK(fit.rmse_train <= 1e-12);
  for (std::size_t i = 0; i < series.size(); ++i) CHECK(std::abs(spring_onset(series[i], fit.params) - sos[i]) <= 1);
  CHECK(fit.grid.size() == 101 * 13 * 5);

  CHECK_THROWS_AS(fit_spring_params(std::span(series).first(3), std::span(sos).first(3)), Error);
}

TEST_CASE("spring fit tie keeps the first grid point") {
  std::mt19937_64 rng(2);
  const Vector t = seasonal_tmean(281.0, 11.0, rng);
  std::vector<Vector> series(5, t);
  const int target = spring_onset(t, {400.0, 0.0, 0.01});
  std::vector<int> sos(5, target);
  SpringGrid grid;
  grid.a = {390.0, 400.0, 401.0};
  grid.b = {0.0, 1.0};
  grid.c = {0.01, 0.02};
  const SpringFit fit = fit_spring_params(series, sos, grid);
  CHECK(fit.rmse_train == 0.0);
  // the first (a, b, c) reaching the same date wins
  bool first_found = false;
  for (double a : grid.a)
    for (double b : grid.b)
      for (double c : grid.c)
        if (!first_found && spring_onset(t, {a, b, c}) == target) {
          first_found = true;
          CHECK(fit.params.a == a);
          CHECK(fit.params.b == b);
          CHECK(fit.params.c == c);
        }
}

TEST_CASE("date calibration") {
  const std::vector<double> raw = {100, 110, 120, 130};
  auto c = calibrate_dates(raw, raw);
  CHECK(c.slope == doctest::Approx(1.0));
  CHECK(c.intercept == doctest::Approx(0.0).epsilon(1e-9));
  std::vector<double> shifted = {105, 115, 125, 135};
  c = calibrate_dates(raw, shifted);
  CHECK(c.slope == doctest::Approx(1.0));
  CHECK(c.intercept == doctest::Approx(5.0));
  CHECK(c.apply(112.4) == 117);
  CHECK(c.apply(-50) == 1);
  CHECK(c.apply(900) == 365);

  // normal equations oracle
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<double> x, y;
  for (int i = 0; i < 30; ++i) {
    x.push_back(90.0 + i * 2.0 + g(rng));
    y.push_back(0.8 * x.back() + 20.0 + g(rng));
  }
  Matrix A(30, 2);
  Vector b(30);
  for (int i = 0; i < 30; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = x[static_cast<std::size_t>(i)];
    b(i) = y[static_cast<std::size_t>(i)];
  }
  const Vector beta = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  c = calibrate_dates(x, y);
  CHECK(std::abs(c.intercept - beta(0)) < 1e-9);
  CHECK(std::abs(c.slope - beta(1)) < 1e-9);

  // least squares never worse than identity on its own data
  double raw_sse = 0.0, cal_sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    raw_sse += (x[i] - y[i]) * (x[i] - y[i]);
    cal_sse += (c.predict(x[i]) - y[i]) * (c.predict(x[i]) - y[i]);
  }
  CHECK(cal_sse <= raw_sse);

  const std::vector<double> flat = {120, 120, 120};
  const std::vector<double> obs = {110, 120, 133};
  c = calibrate_dates(flat, obs);
  CHECK(c.degenerate);
  CHECK(c.slope == 0.0);
  CHECK(c.intercept == doctest::Approx(121.0));
  CHECK_THROWS_AS(calibrate_dates(std::vector<double>{1.0}, std::vector<double>{1.0}), Error);
}

TEST_CASE("climatology and prescribed anomalies") {
  std::vector<GccSeries> train(3);
  for (int k = 0; k < 3; ++k) {
    train[static_cast<std::size_t>(k)].values = double_logistic(120 + 5 * k, 280);
    train[static_cast<std::size_t>(k)].observed.setConstant(true);
  }
  train[0].observed(50) = false;
  const ClimatologyCurve c = fit_climatology(train);
  CHECK(c.count(50) == 2);
  CHECK(c.count(51) == 3);
  CHECK(c.mean_gcc(51) == doctest::Approx((train[0].values(51) + train[1].values(51) + train[2].values(51)) / 3.0));

  const Vector obs = double_logistic(131, 270);
  CHECK(r2_anomalies(c.mean_gcc, obs, c.mean_gcc).value() == 0.0);
  CHECK(r2_anomalies(obs, obs, c.mean_gcc).value() == 1.0);
  CHECK(anomalies(c.mean_gcc, c.mean_gcc).isZero());
}

TEST_CASE("extract dates") {
  Vector plateau = Vector::Zero(kYearDays);
  plateau.segment(119, 161).setOnes();  // doy 120..280
  const SeasonDates d = extract_dates(plateau);
  CHECK(d.sos == 120);
  CHECK(d.eos == 280);
  CHECK(d.threshold == 0.5);

  for (double sos : {95.3, 120.0, 151.7})
    for (double eos : {250.0, 301.2}) {
      const SeasonDates e = extract_dates(double_logistic(sos, eos));
      CHECK(std::abs(*e.sos - sos) <= 1.0);
      CHECK(std::abs(*e.eos - eos) <= 1.0);
    }

  // invariant under increasing affine maps
  const Vector g = double_logistic(133.0, 288.0);
  const SeasonDates a = extract_dates(g), b = extract_dates((3.0 * g.array() + 0.2).matrix());
  CHECK(a.sos == b.sos);
  CHECK(a.eos == b.eos);

  CHECK_THROWS_AS(extract_dates(Vector::Constant(365, 0.3)), Error);
  Vector rising = Vector::LinSpaced(365, 0.0, 1.0);
  CHECK_FALSE(extract_dates(rising).eos.has_value());
}

TEST_CASE("soft sos gradient and monotonicity") {
  const Vector g = double_logistic(118.0, 290.0);
  for (double k : {1.0, 50.0}) {
    const Vector grad = soft_sos_gradient(g, k);
    for (Index t = 0; t < kYearDays; ++t) {
      Vector up = g, down = g;
      const double h = 1e-6;
      up(t) += h;
      down(t) -= h;
      const double fd = (soft_sos(up, k) - soft_sos(down, k)) / (2 * h);
      CHECK(std::abs(grad(t) - fd) <= 1e-5 * std::abs(fd) + 1e-6);
      CHECK(grad(t) <= 0.0);
    }
  }
  Vector raised = g;
  raised.segment(100, 20).array() += 0.1;
  CHECK(soft_sos(raised) <= soft_sos(g));
}

TEST_CASE("r2, rmse and the results table") {
  const Vector obs = Vector::LinSpaced(10, 0.0, 9.0);
  CHECK(r2(obs, obs).value() == 1.0);
  CHECK(rmse(obs, obs) == 0.0);
  CHECK_FALSE(r2(obs, Vector::Constant(10, 1.0)).has_value());
  CHECK(rmse(Vector::Zero(4), Vector::Constant(4, 2.0)) == 2.0);

  EvaluationTruth truth;
  ModelEvaluation good, bad;
  good.name = "good";
  bad.name = "bad";
  truth.climatology = double_logistic(120, 280);
  for (int k = 0; k < 4; ++k) {
    GccSeries s;
    s.values = double_logistic(110 + 5 * k, 280);
    s.observed.setConstant(true);
    truth.gcc.push_back(s);
    truth.sos.push_back(110 + 5 * k);
    truth.eos.push_back(280);
    good.gcc.push_back(s.values);
    good.sos.push_back(110 + 5 * k);
    good.eos.push_back(280);
    bad.sos.push_back(120);
    bad.eos.push_back(283);
  }
  const ResultsTable t = results_table({good, bad}, truth);
  CHECK(t.rows[0].r2.value() == 1.0);
  CHECK(t.rows[0].rmse.value() == 0.0);
  CHECK_FALSE(t.rows[1].r2.has_value());
  CHECK(t.rows[1].sos_rmse.value() == doctest::Approx(std::sqrt((100 + 25 + 0 + 25) / 4.0)));
  const auto best = t.best();
  CHECK(best[4][0]);
  CHECK_FALSE(best[4][1]);
  const std::string csv = t.to_csv();
  CHECK(csv.rfind("model,r2,r2_anom,rmse,sos_r2,sos_rmse,eos_r2,eos_rmse\n", 0) == 0);
  CHECK(csv.find("bad,,,,") != std::string::npos);
  const std::string md = t.to_markdown();
  CHECK(md.find("| good | **1.000** |") != std::string::npos);
  CHECK(md.find("--") != std::string::npos);

  CHECK_THROWS_AS(results_table({}, EvaluationTruth{}), Error);
}
