#ifndef PHENOFLUX_MECHANISTIC_HPP
#define PHENOFLUX_MECHANISTIC_HPP

#include "phenoflux/climate_features.hpp"
#include "phenoflux/core.hpp"
#include "phenoflux/data_model.hpp"

#include <span>
#include <string>
#include <vector>

namespace phenoflux {

/// Mean standardized GCC per day of year (prescribed phenology).
struct ClimatologyCurve {
  Vector mean_gcc = Vector::Zero(kYearDays);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(kYearDays);
};

ClimatologyCurve fit_climatology(std::span<const GccSeries> train);

/// Alternating-model spring onset: forcing (GDD) must reach
/// a + b * exp(-c * chill_days).
struct SpringParams {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  void validate() const;
  double critical_forcing(int chill) const { return a + b * std::exp(-c * chill); }
};

inline constexpr int kNeverReached = 365;

int spring_onset(const DegreeProfile& profile, const SpringParams& params);
int spring_onset(const Vector& tmean, const SpringParams& params);

struct SpringGrid {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;

  static SpringGrid standard();
  std::size_t size() const { return a.size() * b.size() * c.size(); }
};

struct SpringFit {
  SpringParams params;
  double rmse_train = 0.0;
  SpringGrid grid;
};

/// Exhaustive grid search minimising SoS RMSE; ties keep the first grid point
/// in (a, b, c) lexicographic order.
SpringFit fit_spring_params(std::span<const Vector> tmean_current, std::span<const int> observed_sos,
                            const SpringGrid& grid = SpringGrid::standard());

struct DateCalibration {
  double slope = 1.0;
  double intercept = 0.0;
  bool degenerate = false;

  double predict(double raw) const { return slope * raw + intercept; }
  /// Rounded to the nearest day and clamped to [1, 365].
  int apply(double raw) const;
};

DateCalibration calibrate_dates(std::span<const double> raw, std::span<const double> observed);

}  // namespace phenoflux

#endif  // PHENOFLUX_MECHANISTIC_HPP
