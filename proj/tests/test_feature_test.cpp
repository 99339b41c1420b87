#include "doctest.h"

#include "phenoflux/feature_test.hpp"

#include <random>

using namespace phenoflux;

namespace {

Vector gaussian(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

// textbook biased HSIC with H = I - 11'/n and explicit kernel loops
double naive_hsic(const Vector& x, const Vector& y) {
  const Index n = x.size();
  auto bandwidth = [&](const Vector& v) {
    std::vector<double> d;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) d.push_back(std::abs(v(i) - v(j)));
    std::sort(d.begin(), d.end());
    return d[d.size() / 2];
  };
  const double hx = bandwidth(x), hy = bandwidth(y);
  Matrix K(n, n), L(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      K(i, j) = std::exp(-std::pow(x(i) - x(j), 2) / (2 * hx * hx));
      L(i, j) = std::exp(-std::pow(y(i) - y(j), 2) / (2 * hy * hy));
    }
  const Matrix H = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  return (K * H * L * H).trace() / static_cast<double>(n * n);
}

}  // namespace

TEST_CASE("hsic matches the textbook formula") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector x = gaussian(rng, 31);
    const Vector y = x.array().square() + 0.3 * gaussian(rng, 31).array();
    CHECK(hsic(x, y) == doctest::Approx(naive_hsic(x, y)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(hsic(Vector::Zero(3), Vector::Zero(4)), Error);
}

TEST_CASE("hsic permutation test separates dependence from independence") {
  std::mt19937_64 rng(2);
  const Vector x = gaussian(rng, 80);
  const Vector dep = (2.0 * x).array().sin() + 0.2 * gaussian(rng, 80).array();
  CHECK(hsic_test(x, dep, 200, 3).p_value < 0.01);
  CHECK(hsic_test(x, gaussian(rng, 80), 200, 3).p_value > 0.01);
  const auto a = hsic_test(x, dep, 100, 9), b = hsic_test(x, dep, 100, 9);
  CHECK(a.p_value == b.p_value);
  CHECK(a.p_value >= 1.0 / 101.0);
}

TEST_CASE("residualize removes the linear confounder") {
  std::mt19937_64 rng(3);
  const Vector c = gaussian(rng, 50);
  const Vector f = 3.0 * c.array() + 7.0 + gaussian(rng, 50).array();
  const Vector r = residualize(f, c);
  CHECK(std::abs(r.mean()) < 1e-12);
  CHECK(std::abs(r.dot(c)) < 1e-10);
  // matches the OLS residual
  Matrix A(50, 2);
  A << Vector::Ones(50), c;
  const Vector beta = A.colPivHouseholderQr().solve(f);
  CHECK((r - (f - A * beta)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("median bandwidth") {
  Matrix x(4, 1);
  x << 0, 1, 3, 6;
  // distances 1 2 3 5 6 3 -> sorted 1 2 3 3 5 6, element 3
  CHECK(median_bandwidth(x) == 3.0);
  Matrix same = Matrix::Zero(5, 1);
  CHECK(median_bandwidth(same) == 1.0);
  Matrix mostly(5, 1);
  mostly << 0, 0, 0, 0, 2;
  CHECK(median_bandwidth(mostly) == 2.0);
}

TEST_CASE("conditional test flags a used feature and spares a placebo") {
  std::mt19937_64 rng(4);
  const Index n = 150;
  FeatureTestConfig cfg;
  cfg.permutations = 200;
  cfg.seed = 5;
  const Vector z = gaussian(rng, n);
  const Vector used = gaussian(rng, n);
  const Vector placebo = gaussian(rng, n);
  const Vector pred = z + 0.8 * used + 0.1 * gaussian(rng, n);
  const auto hit = conditional_independence_test(pred, used, Matrix(z), cfg, "used");
  CHECK(hit.used);
  CHECK(hit.feature == "used");
  CHECK(hit.n == n);
  const auto miss = conditional_independence_test(pred, placebo, Matrix(z), cfg, "placebo");
  CHECK(miss.p_value > cfg.alpha);
  // same seed gives the same answer on any thread count
  FeatureTestConfig par = cfg;
  par.jobs = 3;
  CHECK(conditional_independence_test(pred, used, Matrix(z), par).p_value == hit.p_value);
}

TEST_CASE("conditional test rejects small samples and bad config") {
  FeatureTestConfig cfg;
  const Vector v = Vector::LinSpaced(19, 0.0, 1.0);
  try {
    conditional_independence_test(v, v, Matrix(v), cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("n = 19") != std::string::npos);
  }
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("feature use report") {
  std::mt19937_64 rng(6);
  const Index n = 60;
  FeatureSet fs{gaussian(rng, n), gaussian(rng, n), gaussian(rng, n), gaussian(rng, n)};
  const Vector conf = gaussian(rng, n), truth = gaussian(rng, n);
  FeatureTestConfig cfg;
  cfg.permutations = 100;
  const auto r = feature_use_report(truth + fs.gdd_current, fs, conf, truth, cfg);
  REQUIRE(r.size() == 4);
  CHECK(r[0].feature == "chill_days_current");
  CHECK(r[3].feature == "chill_days_previous");
  const std::string csv = feature_use_csv(r);
  CHECK(csv.rfind("feature,statistic,p_value,decision,alpha,n\n", 0) == 0);
  CHECK(csv.find("gdd_previous,") != std::string::npos);
}
