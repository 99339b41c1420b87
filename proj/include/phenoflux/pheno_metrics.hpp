#ifndef PHENOFLUX_PHENO_METRICS_HPP
#define PHENOFLUX_PHENO_METRICS_HPP

#include "phenoflux/core.hpp"
#include "phenoflux/data_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace phenoflux {

struct SeasonDates {
  std::optional<int> sos;
  std::optional<int> eos;
  double threshold = 0.0;
};

/// Halfway threshold (max + min) / 2. SoS is the first upward crossing and
/// EoS the last downward crossing, both located by linear interpolation and
/// rounded towards the above-threshold side (first / last day above).
SeasonDates extract_dates(const Vector& gcc);

inline constexpr int kSoftSosFirstDay = 80;
inline constexpr int kSoftSosLastDay = 150;

/// 150 - sum_{t=80..150} sigmoid(k (gcc_t - 0.5)); gcc indexed by doy - 1.
template <typename Derived>
typename Derived::Scalar soft_sos(const Eigen::MatrixBase<Derived>& gcc, double steepness = 50.0) {
  using Scalar = typename Derived::Scalar;
  Scalar total(0);
  for (int t = kSoftSosFirstDay; t <= kSoftSosLastDay; ++t)
    total += Scalar(sigmoid(steepness * (gcc(t - 1) - 0.5)));
  return Scalar(kSoftSosLastDay) - total;
}

/// d soft_sos / d gcc, length of the input series.
Vector soft_sos_gradient(const Vector& gcc, double steepness = 50.0);

/// Coefficient of determination about the observation mean; nullopt when
/// the observations have zero variance.
std::optional<double> r2(const Vector& pred, const Vector& obs);
double rmse(const Vector& pred, const Vector& obs);

Vector anomalies(const Vector& series, const Vector& climatology);
/// R^2 of anomaly pairs with the climatology as reference (total sum of
/// squares about zero anomaly).
std::optional<double> r2_anomalies(const Vector& pred, const Vector& obs, const Vector& climatology);

struct MetricsRow {
  std::optional<double> r2;
  std::optional<double> r2_anomalies;
  std::optional<double> rmse;
  std::optional<double> sos_r2;
  std::optional<double> sos_rmse;
  std::optional<double> eos_r2;
  std::optional<double> eos_rmse;

  static constexpr int kColumns = 7;
  std::optional<double> column(int i) const;
};

/// Predictions of one model on the evaluation site-years, dates already calibrated.
struct ModelEvaluation {
  std::string name;
  std::vector<Vector> gcc;  // empty when the model does not predict daily gcc
  std::vector<int> sos;
  std::vector<int> eos;
};

struct EvaluationTruth {
  std::vector<GccSeries> gcc;
  std::vector<std::optional<int>> sos;
  std::vector<std::optional<int>> eos;
  Vector climatology;
};

MetricsRow evaluate_model(const ModelEvaluation& model, const EvaluationTruth& truth);

struct ResultsTable {
  std::vector<std::string> models;
  std::vector<MetricsRow> rows;

  /// best[c][m]: model m holds the best value of column c.
  std::vector<std::vector<bool>> best() const;
  std::string to_csv() const;
  std::string to_markdown() const;
};

ResultsTable results_table(const std::vector<ModelEvaluation>& models, const EvaluationTruth& truth);

}  // namespace phenoflux

#endif  // PHENOFLUX_PHENO_METRICS_HPP
