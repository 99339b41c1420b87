#include "phenoflux/mechanistic.hpp"

#include <limits>

namespace phenoflux {

ClimatologyCurve fit_climatology(std::span<const GccSeries> train) {
  if (train.empty()) throw Error("climatology needs at least one training site-year");
  ClimatologyCurve curve;
  Vector sum = Vector::Zero(kYearDays);
  for (const auto& s : train) {
    for (Index d = 0; d < kYearDays; ++d) {
      if (!s.observed(d)) continue;
      sum(d) += s.values(d);
      ++curve.count(d);
    }
  }
  GccSeries pooled;
  for (Index d = 0; d < kYearDays; ++d) {
    if (curve.count(d) == 0) continue;
    pooled.values(d) = sum(d) / curve.count(d);
    pooled.observed(d) = true;
  }
  if (pooled.observed_count() == 0) throw Error("climatology: no observed day in training data");
  curve.mean_gcc = pooled.filled();
  return curve;
}

void SpringParams::validate() const {
  if (!(a >= 0.0 && b >= 0.0 && c >= 0.0)) throw Error("spring params must be non-negative");
}

int spring_onset(const DegreeProfile& profile, const SpringParams& params) {
  const Index n = profile.gdd.size();
  for (Index t = 0; t < n; ++t)
    if (profile.gdd(t) >= params.critical_forcing(profile.chill(t))) return static_cast<int>(t + 1);
  return kNeverReached;
}

int spring_onset(const Vector& tmean, const SpringParams& params) {
  return spring_onset(degree_profile(tmean), params);
}

SpringGrid SpringGrid::standard() {
  SpringGrid g;
  for (int i = 0; i <= 100; ++i) g.a.push_back(10.0 * i);
  for (int i = 0; i <= 12; ++i) g.b.push_back(50.0 * i);
  g.c = {0.01, 0.02, 0.05, 0.1, 0.2};
  return g;
}

SpringFit fit_spring_params(std::span<const Vector> tmean_current, std::span<const int> observed_sos,
                            const SpringGrid& grid) {
  if (observed_sos.empty()) throw Error("spring fit: no observed SoS");
  if (observed_sos.size() != tmean_current.size()) throw Error("spring fit: series / SoS count mismatch");
  if (observed_sos.size() < 5) throw Error("spring fit needs at least 5 observed SoS");
  if (grid.size() == 0) throw Error("spring fit: empty grid");

  std::vector<DegreeProfile> profiles;
  profiles.reserve(tmean_current.size());
  for (const auto& t : tmean_current) profiles.push_back(degree_profile(t));

  SpringFit fit;
  fit.grid = grid;
  double best = std::numeric_limits<double>::infinity();
  for (double a : grid.a) {
    for (double b : grid.b) {
      for (double c : grid.c) {
        const SpringParams p{a, b, c};
        double sse = 0.0;
        for (std::size_t i = 0; i < profiles.size() && sse < best; ++i) {
          const double e = spring_onset(profiles[i], p) - observed_sos[i];
          sse += e * e;
        }
        if (sse < best) {
          best = sse;
          fit.params = p;
        }
      }
    }
  }
  fit.rmse_train = std::sqrt(best / static_cast<double>(profiles.size()));
  return fit;
}

int DateCalibration::apply(double raw) const {
  const double v = std::round(predict(raw));
  return static_cast<int>(std::clamp(v, 1.0, 365.0));
}

DateCalibration calibrate_dates(std::span<const double> raw, std::span<const double> observed) {
  if (raw.size() != observed.size()) throw Error("calibration: length mismatch");
  if (raw.size() < 2) throw Error("calibration needs at least 2 pairs");
  const auto n = static_cast<Index>(raw.size());
  const Eigen::Map<const Vector> x(raw.data(), n);
  const Eigen::Map<const Vector> y(observed.data(), n);
  const double mx = x.mean();
  const double my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  DateCalibration cal;
  if (!(sxx > 1e-12 * std::max(1.0, mx * mx))) {
    warn("date calibration: raw dates have no variance, using the observed mean");
    cal.slope = 0.0;
    cal.intercept = my;
    cal.degenerate = true;
    return cal;
  }
  cal.slope = ((x.array() - mx) * (y.array() - my)).sum() / sxx;
  cal.intercept = my - cal.slope * mx;
  return cal;
}

}  // namespace phenoflux
