#ifndef PHENOFLUX_CLIMATE_FEATURES_HPP
#define PHENOFLUX_CLIMATE_FEATURES_HPP

#include "phenoflux/core.hpp"
#include "phenoflux/data_model.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>

namespace phenoflux {

namespace detail {
template <typename Derived>
void check_doy(const Eigen::MatrixBase<Derived>& tmean, int doy) {
  if (doy < 1 || doy > tmean.size()) throw Error("doy " + std::to_string(doy) + " outside [1, series length]");
}
}  // namespace detail

/// Growing degree days: sum over t = 1..doy of max(0, T_t - 277.15 K).
template <typename Derived>
typename Derived::Scalar gdd(const Eigen::MatrixBase<Derived>& tmean, int doy) {
  using Scalar = typename Derived::Scalar;
  detail::check_doy(tmean, doy);
  // summed in day order, same rounding as the running profile
  Scalar acc(0);
  for (int t = 0; t < doy; ++t) acc += std::max(Scalar(0), Scalar(tmean(t) - Scalar(kBaseTemperature)));
  return acc;
}

/// Days t in [1, doy - 1] with T_t below 277.15 K.
template <typename Derived>
int chill_days(const Eigen::MatrixBase<Derived>& tmean, int doy) {
  using Scalar = typename Derived::Scalar;
  detail::check_doy(tmean, doy);
  return static_cast<int>((tmean.derived().head(doy - 1).array() < Scalar(kBaseTemperature)).count());
}

/// Running GDD and chill counts for every doy (index doy - 1), used by fitting loops.
struct DegreeProfile {
  Vector gdd;                 // gdd(tmean, doy)
  Eigen::VectorXi chill;      // chill_days(tmean, doy)
};
DegreeProfile degree_profile(const Vector& tmean);

enum class YearOffset { Current, Previous };

struct DegreeFeatures {
  double gdd = 0.0;
  int chill_days = 0;
  int doy = 120;
  YearOffset year_offset = YearOffset::Current;
};

/// Chill counting may start on 1 January of the current year (default) or in
/// the previous autumn; `chill_start_prev_doy` > 0 selects the latter.
DegreeFeatures degree_features(const MetGrid& met, int doy, YearOffset offset, int chill_start_prev_doy = 0);

/// Cumulative sum of standard-normal steps; element 0 equals the first step.
Vector random_walk(Index length, std::uint64_t seed);
std::uint64_t walk_seed(const std::string& site_id, int year);

/// Annual means over the most recent `window_years` full years.
/// `tmean_years` and `precip_years` hold one 365-day row per year, oldest first.
ClimateNormals normals_from_history(const Matrix& tmean_years, const Matrix& precip_years, int window_years = 30);

}  // namespace phenoflux

#endif  // PHENOFLUX_CLIMATE_FEATURES_HPP
