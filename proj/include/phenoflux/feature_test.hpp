#ifndef PHENOFLUX_FEATURE_TEST_HPP
#define PHENOFLUX_FEATURE_TEST_HPP

#include "phenoflux/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace phenoflux {

struct FeatureTestConfig {
  double alpha = 0.05;
  double epsilon = 1e-3;  // ridge on the conditioning Gram matrix
  int permutations = 1000;
  int bins = 10;          // quantile strata of the conditioning variable
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  void validate() const;
};

struct FeatureTestResult {
  std::string feature;
  double statistic = 0.0;
  double p_value = 1.0;
  bool used = false;
  double alpha = 0.05;
  Index n = 0;
};

/// OLS residual of `feature` on [1, confounder].
Vector residualize(const Vector& feature, const Vector& confounder);

/// Median of the pairwise distances of the rows of `x` (non-zero ones if the
/// median itself is zero; 1 when all points coincide).
double median_bandwidth(const Matrix& x);
/// exp(-|xi - xj|^2 / (2 h^2)).
Matrix gaussian_gram(const Matrix& x, double bandwidth);
Matrix center_gram(const Matrix& k);

/// Biased HSIC, tr(K~ L~) / n^2, Gaussian kernels with median bandwidths.
double hsic(const Vector& x, const Vector& y);

struct PermutationTest {
  double statistic = 0.0;
  double p_value = 1.0;
};
/// p = (1 + #{T_perm >= T}) / (1 + B) with B random permutations of y.
PermutationTest hsic_test(const Vector& x, const Vector& y, int permutations, std::uint64_t seed);

/// Regularised conditional cross-covariance statistic
///   T = tr(R_X (I - R_Z) R_Y (I - R_Z)),  R_U = G~_U (G~_U + n eps I)^-1,
/// with p-value from permutations of `feature` within quantile bins of the
/// first conditioning column.
FeatureTestResult conditional_independence_test(const Vector& prediction, const Vector& feature,
                                                const Matrix& conditioning, const FeatureTestConfig& config,
                                                const std::string& name = "feature");

struct FeatureSet {
  Vector chill_current, gdd_current, gdd_previous, chill_previous;
};

/// The four feature-use tests: current-year chill days and GDD, and the
/// previous-year placebos, each residualized against `confounder` first.
std::vector<FeatureTestResult> feature_use_report(const Vector& prediction, const FeatureSet& features,
                                                  const Vector& confounder, const Vector& truth,
                                                  const FeatureTestConfig& config);

std::string feature_use_csv(const std::vector<FeatureTestResult>& results);

}  // namespace phenoflux

#endif  // PHENOFLUX_FEATURE_TEST_HPP
