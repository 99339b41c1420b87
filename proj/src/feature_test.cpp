#include "phenoflux/feature_test.hpp"

#include "phenoflux/parallel.hpp"

#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

namespace phenoflux {

void FeatureTestConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)", ErrorKind::Validation);
  if (!(epsilon > 0.0)) throw Error("epsilon must be > 0", ErrorKind::Validation);
  if (permutations < 100) throw Error("permutations must be >= 100", ErrorKind::Validation);
  if (bins < 1) throw Error("bins must be >= 1", ErrorKind::Validation);
}

Vector residualize(const Vector& feature, const Vector& confounder) {
  if (feature.size() != confounder.size()) throw Error("residualize: length mismatch");
  if (feature.size() < 3) throw Error("residualize: need at least 3 samples");
  const Vector f = feature.array() - feature.mean();
  const Vector c = confounder.array() - confounder.mean();
  const double var = c.squaredNorm();
  if (!(var > 0.0)) {
    warn("residualize: constant confounder; returning the mean-centred feature");
    return f;
  }
  const Vector r = f - (f.dot(c) / var) * c;
  // second pass removes the rounding left by the first
  return r - (r.dot(c) / var) * c - Vector::Constant(r.size(), r.mean());
}

double median_bandwidth(const Matrix& x) {
  const Index n = x.rows();
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) d.push_back((x.row(i) - x.row(j)).norm());
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (*mid > 0.0) return *mid;
  std::vector<double> nz;
  for (double v : d)
    if (v > 0.0) nz.push_back(v);
  if (nz.empty()) return 1.0;
  mid = nz.begin() + static_cast<std::ptrdiff_t>(nz.size() / 2);
  std::nth_element(nz.begin(), mid, nz.end());
  return *mid;
}

Matrix gaussian_gram(const Matrix& x, double bandwidth) {
  const Index n = x.rows();
  Matrix k(n, n);
  const double s = 1.0 / (2.0 * bandwidth * bandwidth);
  for (Index j = 0; j < n; ++j) {
    k(j, j) = 1.0;
    for (Index i = j + 1; i < n; ++i) {
      const double v = std::exp(-(x.row(i) - x.row(j)).squaredNorm() * s);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Matrix center_gram(const Matrix& k) {
  const Vector col_mean = k.colwise().mean().transpose();
  const Vector row_mean = k.rowwise().mean();
  Matrix c = k;
  c.colwise() -= row_mean;
  c.rowwise() -= col_mean.transpose();
  c.array() += k.mean();
  return c;
}

namespace {

Matrix centered_gaussian(const Matrix& x) { return center_gram(gaussian_gram(x, median_bandwidth(x))); }

// sum_ij A(i, j) * B(perm_i, perm_j)
double permuted_inner(const Matrix& a, const Matrix& b, const std::vector<Index>& perm) {
  const Index n = a.rows();
  double total = 0.0;
  for (Index j = 0; j < n; ++j) {
    const double* bc = b.col(perm[static_cast<std::size_t>(j)]).data();
    const double* ac = a.col(j).data();
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += ac[i] * bc[perm[static_cast<std::size_t>(i)]];
    total += s;
  }
  return total;
}

std::vector<Index> identity_perm(Index n) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  return p;
}

template <typename Shuffle>
double p_value_from(double stat, int permutations, std::uint64_t seed, unsigned jobs, Shuffle&& permuted_stat) {
  std::vector<double> null(static_cast<std::size_t>(permutations));
  parallel_for(static_cast<std::size_t>(permutations), jobs, [&](std::size_t b) {
    std::mt19937_64 rng(mix_seed(seed, b));
    null[b] = permuted_stat(rng);
  });
  // relative slack so that exact ties are not lost to rounding
  const double tol = 1e-12 * std::max(1.0, std::abs(stat));
  const auto exceed = std::count_if(null.begin(), null.end(), [&](double t) { return t >= stat - tol; });
  return static_cast<double>(1 + exceed) / static_cast<double>(1 + permutations);
}

Matrix as_column(const Vector& v) { return Matrix(v); }

Matrix regularized_projection(const Matrix& g, double epsilon) {
  const auto n = static_cast<double>(g.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  const Vector lam = es.eigenvalues().cwiseMax(0.0);
  const Vector f = lam.array() / (lam.array() + n * epsilon);
  return es.eigenvectors() * f.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double hsic(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw Error("hsic: length mismatch");
  if (x.size() < 2) throw Error("hsic: need at least 2 samples");
  const auto n = static_cast<double>(x.size());
  return centered_gaussian(as_column(x)).cwiseProduct(centered_gaussian(as_column(y))).sum() / (n * n);
}

PermutationTest hsic_test(const Vector& x, const Vector& y, int permutations, std::uint64_t seed) {
  if (x.size() != y.size()) throw Error("hsic: length mismatch");
  if (permutations < 1) throw Error("hsic_test: permutations must be >= 1");
  const Index n = x.size();
  const Matrix k = centered_gaussian(as_column(x));
  const Matrix l = centered_gaussian(as_column(y));
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  PermutationTest out;
  out.statistic = k.cwiseProduct(l).sum() / nn;
  out.p_value = p_value_from(out.statistic * nn, permutations, seed, 1, [&](std::mt19937_64& rng) {
    std::vector<Index> p = identity_perm(n);
    for (std::size_t i = p.size() - 1; i > 0; --i) std::swap(p[i], p[rng() % (i + 1)]);
    return permuted_inner(k, l, p);
  });
  return out;
}

FeatureTestResult conditional_independence_test(const Vector& prediction, const Vector& feature,
                                                const Matrix& conditioning, const FeatureTestConfig& config,
                                                const std::string& name) {
  config.validate();
  const Index n = prediction.size();
  if (feature.size() != n || conditioning.rows() != n) throw Error("conditional test: sample counts differ");
  if (n < 20) throw Error("insufficient samples (n = " + std::to_string(n) + ", need >= 20)", ErrorKind::Validation);
  if (conditioning.cols() < 1) throw Error("conditional test: empty conditioning set");

  Matrix z = conditioning;
  for (Index c = 0; c < z.cols(); ++c) {
    z.col(c).array() -= z.col(c).mean();
    const double sd = std::sqrt(z.col(c).squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) z.col(c) /= sd;
  }
  const Matrix r_x = regularized_projection(centered_gaussian(as_column(feature)), config.epsilon);
  const Matrix r_y = regularized_projection(centered_gaussian(as_column(prediction)), config.epsilon);
  const Matrix r_z = regularized_projection(centered_gaussian(z), config.epsilon);
  const Matrix resid = Matrix::Identity(n, n) - r_z;
  const Matrix a = resid * r_y * resid;

  // strata: quantile bins of the first conditioning column
  std::vector<Index> order = identity_perm(n);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return conditioning(i, 0) < conditioning(j, 0); });
  std::vector<std::vector<Index>> strata(static_cast<std::size_t>(config.bins));
  for (Index r = 0; r < n; ++r)
    strata[static_cast<std::size_t>(r * config.bins / n)].push_back(order[static_cast<std::size_t>(r)]);

  FeatureTestResult out;
  out.feature = name;
  out.alpha = config.alpha;
  out.n = n;
  const std::vector<Index> id = identity_perm(n);
  out.statistic = permuted_inner(a, r_x, id);
  out.p_value = p_value_from(out.statistic, config.permutations, config.seed, config.jobs, [&](std::mt19937_64& rng) {
    std::vector<Index> p = id;
    for (const auto& s : strata) {
      std::vector<Index> shuffled = s;
      for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng() % i]);
      for (std::size_t i = 0; i < s.size(); ++i) p[static_cast<std::size_t>(s[i])] = shuffled[i];
    }
    return permuted_inner(a, r_x, p);
  });
  out.used = out.p_value < config.alpha;
  return out;
}

std::vector<FeatureTestResult> feature_use_report(const Vector& prediction, const FeatureSet& features,
                                                  const Vector& confounder, const Vector& truth,
                                                  const FeatureTestConfig& config) {
  const std::pair<const char*, const Vector*> tests[] = {{"chill_days_current", &features.chill_current},
                                                         {"gdd_current", &features.gdd_current},
                                                         {"gdd_previous", &features.gdd_previous},
                                                         {"chill_days_previous", &features.chill_previous}};
  const Matrix z = as_column(truth);
  std::vector<FeatureTestResult> out;
  std::uint64_t stream = 0;
  for (const auto& [name, values] : tests) {
    FeatureTestConfig c = config;
    c.seed = mix_seed(config.seed, stream++);
    out.push_back(conditional_independence_test(prediction, residualize(*values, confounder), z, c, name));
  }
  return out;
}

std::string feature_use_csv(const std::vector<FeatureTestResult>& results) {
  std::ostringstream os;
  os << "feature,statistic,p_value,decision,alpha,n\n";
  char buf[256];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.6f,%s,%g,%ld\n", r.feature.c_str(), r.statistic, r.p_value,
                  r.used ? "used" : "not-used", r.alpha, static_cast<long>(r.n));
    os << buf;
  }
  return os.str();
}

}  // namespace phenoflux
