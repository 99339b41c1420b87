#include "phenoflux/climate_features.hpp"

#include <random>

namespace phenoflux {

DegreeProfile degree_profile(const Vector& tmean) {
  const Index n = tmean.size();
  DegreeProfile p{Vector(n), Eigen::VectorXi(n)};
  double acc = 0.0;
  int chill = 0;
  for (Index t = 0; t < n; ++t) {
    acc += std::max(0.0, tmean(t) - kBaseTemperature);
    p.gdd(t) = acc;
    p.chill(t) = chill;  // days strictly before doy t + 1
    if (tmean(t) < kBaseTemperature) ++chill;
  }
  return p;
}

DegreeFeatures degree_features(const MetGrid& met, int doy, YearOffset offset, int chill_start_prev_doy) {
  const Vector all = met.tmean();
  const Vector year = offset == YearOffset::Current ? Vector(all.tail(kYearDays)) : Vector(all.head(kYearDays));
  DegreeFeatures f;
  f.doy = doy;
  f.year_offset = offset;
  f.gdd = gdd(year, doy);
  f.chill_days = chill_days(year, doy);
  if (chill_start_prev_doy > 0 && offset == YearOffset::Current) {
    const Vector autumn = all.segment(chill_start_prev_doy - 1, kYearDays - chill_start_prev_doy + 1);
    f.chill_days += static_cast<int>((autumn.array() < kBaseTemperature).count());
  }
  return f;
}

Vector random_walk(Index length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> step(0.0, 1.0);
  Vector walk(length);
  double acc = 0.0;
  for (Index i = 0; i < length; ++i) {
    acc += step(rng);
    walk(i) = acc;
  }
  return walk;
}

std::uint64_t walk_seed(const std::string& site_id, int year) {
  return mix_seed(stable_hash(site_id), static_cast<std::uint64_t>(year));
}

ClimateNormals normals_from_history(const Matrix& tmean_years, const Matrix& precip_years, int window_years) {
  if (tmean_years.rows() < 1 || tmean_years.cols() != kYearDays || precip_years.rows() != tmean_years.rows() ||
      precip_years.cols() != kYearDays)
    throw Error("normals need at least one full year of tmean and precipitation");
  const Index years = std::min<Index>(tmean_years.rows(), window_years);
  ClimateNormals n;
  n.window_years = window_years;
  n.mean_annual_temp = tmean_years.bottomRows(years).rowwise().mean().mean();
  n.mean_annual_precip = precip_years.bottomRows(years).rowwise().sum().mean();
  return n;
}

}  // namespace phenoflux
