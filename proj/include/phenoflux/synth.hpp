#ifndef PHENOFLUX_SYNTH_HPP
#define PHENOFLUX_SYNTH_HPP

#include "phenoflux/core.hpp"
#include "phenoflux/data_model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace phenoflux {

/// One synthetic site-year. Weather of calendar year Y depends only on
/// (seed, Y), so consecutive site-years of a site share their overlap.
struct SynthParams {
  std::string site_id = "SYN000";
  int year = 2001;
  double latitude = 45.0;
  double elevation = 300.0;            // m, sets surface pressure
  double base_temp = 283.0;            // K, annual mean
  double seasonal_amplitude = 12.0;    // K
  double noise_std = 2.0;              // K, daily AR(1) weather noise
  double anomaly_std = 1.5;            // K, year-to-year offset
  double gdd_onset_threshold = 250.0;  // K day
  int eos_doy = 290;
  double logistic_slope = 0.15;        // 1 / day
  double precip_mean = 2.5;            // mm / day
  double gcc_floor = 0.33;             // raw gcc of dormant canopy
  double gcc_amplitude = 0.12;
  double gcc_noise = 0.004;            // sd of sub-daily observations
  double missing_fraction = 0.01;
  int observations_per_day = 3;
  int quality_group = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthSiteYear {
  SiteYear site_year;                         // gcc standardized over this year alone
  std::vector<GccObservation> observations;   // raw sub-daily gcc of the current year
  GccSeries raw_daily;                        // 90th percentiles of `observations`
  Matrix met_celsius;                         // met with temperatures in degrees C
  int true_sos = 0;
  int true_eos = 0;
};

/// Mean temperature offset of calendar year `year` (K).
double synth_year_anomaly(const SynthParams& p, int year);

SynthSiteYear gen_site_year(const SynthParams& params);

struct SynthTruth {
  std::string site_id;
  int year = 0;
  int true_sos = 0;
  int true_eos = 0;
};

struct SynthDataset {
  std::vector<Site> sites;
  std::vector<SynthParams> site_params;        // year field = first year
  std::vector<SynthSiteYear> site_years;       // gcc standardized per site over all its years
  std::vector<SynthTruth> truth;
};

struct SynthOptions {
  int n_sites = 12;
  int years_per_site = 4;
  int first_year = 2001;
  double climate_spread = 1.0;   // scales the spread of base temperatures
  double noise_std = 2.0;
  double gcc_noise = 0.004;
  double photoperiod_gain = 0.0;  // K day of extra forcing per degree of latitude above 35 N
  std::uint64_t seed = 0;
};

SynthDataset gen_dataset(const SynthOptions& options);

/// Day length (s) at `latitude` for a day of year.
double day_length_seconds(double latitude, int doy);

/// Writes sites.csv, normals.csv, met.csv, gcc.csv, aux.csv, kndvi.csv and truth.csv.
void write_synth_csv(const SynthDataset& data, const std::filesystem::path& dir);

}  // namespace phenoflux

#endif  // PHENOFLUX_SYNTH_HPP
