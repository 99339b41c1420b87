#include "phenoflux/synth.hpp"

#include "phenoflux/climate_features.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

namespace phenoflux {

void SynthParams::validate() const {
  if (site_id.empty()) throw Error("synth: empty site id");
  if (!(seasonal_amplitude >= 0.0)) throw Error("synth: seasonal_amplitude must be >= 0");
  if (!(noise_std >= 0.0) || !(anomaly_std >= 0.0) || !(gcc_noise >= 0.0)) throw Error("synth: noise must be >= 0");
  if (eos_doy <= 200 || eos_doy >= 360) throw Error("synth: eos_doy must lie in (200, 360)");
  if (!(logistic_slope > 0.0)) throw Error("synth: logistic_slope must be > 0");
  if (!(gdd_onset_threshold >= 0.0)) throw Error("synth: negative onset threshold");
  if (std::abs(latitude) > 66.0) throw Error("synth: latitude beyond the polar circles");
  if (!(missing_fraction >= 0.0 && missing_fraction < 0.1)) throw Error("synth: missing_fraction must be in [0, 0.1)");
  if (observations_per_day < 1) throw Error("synth: observations_per_day must be >= 1");
  if (gcc_floor - 4 * gcc_noise < 0.1 || gcc_floor + gcc_amplitude + 4 * gcc_noise > 0.6)
    throw Error("synth: raw gcc would leave [0.1, 0.6]");
}

double day_length_seconds(double latitude, int doy) {
  // Forsythe et al. CBM model, sunrise at the top of the disc
  const double theta = 0.2163108 + 2.0 * std::atan(0.9671396 * std::tan(0.00860 * (doy - 186)));
  const double phi = std::asin(0.39795 * std::cos(theta));
  const double rad = std::numbers::pi / 180.0;
  const double arg = (std::sin(0.8333 * rad) + std::sin(latitude * rad) * std::sin(phi)) /
                     (std::cos(latitude * rad) * std::cos(phi));
  const double hours = 24.0 - 24.0 / std::numbers::pi * std::acos(std::clamp(arg, -1.0, 1.0));
  return hours * 3600.0;
}

namespace {

enum Stream : std::uint64_t { kAnomaly = 0, kWeather = 1, kPrecip = 2, kGcc = 3, kAux = 4 };

std::mt19937_64 stream_rng(const SynthParams& p, int year, Stream s) {
  return std::mt19937_64(mix_seed(p.seed, static_cast<std::uint64_t>(year) * 8 + s));
}

double saturation_vp(double celsius) { return 611.0 * std::exp(17.27 * celsius / (celsius + 237.3)); }

// 11 x 365 met of one calendar year, temperatures in degrees C.
Matrix year_weather(const SynthParams& p, int year) {
  std::mt19937_64 wrng = stream_rng(p, year, kWeather);
  std::mt19937_64 prng = stream_rng(p, year, kPrecip);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double anomaly = synth_year_anomaly(p, year);
  constexpr double phi = 0.7;
  const double innovation = p.noise_std * std::sqrt(1.0 - phi * phi);
  double e = p.noise_std * normal(wrng);
  double swe = 0.0;
  const double pres0 = 101325.0 * std::exp(-p.elevation / 8434.0);

  Matrix m(kMetVariables, kYearDays);
  for (int doy = 1; doy <= kYearDays; ++doy) {
    if (doy > 1) e = phi * e + innovation * normal(wrng);
    const double season = -p.seasonal_amplitude * std::cos(2.0 * std::numbers::pi * (doy - 20) / 365.0);
    const double tmean_c = p.base_temp + anomaly + season + e - kCelsiusOffset;
    const double dtr = std::max(2.0, 9.0 + 3.0 * std::sin(2.0 * std::numbers::pi * (doy - 100) / 365.0) +
                                         0.5 * normal(wrng));
    const double tmin = tmean_c - 0.5 * dtr;
    const double tmax = tmin + dtr;

    const bool wet = unit(prng) < 0.35;
    const double prcp = wet ? -std::log(1.0 - unit(prng)) * p.precip_mean / 0.35 : 0.0;
    const double dayl = day_length_seconds(p.latitude, doy);
    const double srad = std::max(10.0, (wet ? 0.55 : 1.0) * (60.0 + 22.0 * dayl / 3600.0) * (1.0 + 0.05 * normal(wrng)));
    const double snow = tmean_c < 0.0 ? prcp : 0.0;
    swe = std::max(0.0, swe + snow - 2.0 * std::max(0.0, tmean_c));
    const double vp = saturation_vp(tmin) * (wet ? 1.0 : 0.9);
    const double vpd = std::max(0.0, saturation_vp(tmean_c) - vp);
    const double pet = std::max(0.0, 0.0023 * (srad * 0.0864 / 2.45) * (tmean_c + 17.8) * std::sqrt(dtr));
    const double pres = pres0 + 150.0 * normal(wrng);

    const Index c = doy - 1;
    m(0, c) = dayl;
    m(1, c) = prcp;
    m(2, c) = srad;
    m(3, c) = swe;
    m(4, c) = vp;
    m(5, c) = vpd;
    m(kTminRow, c) = tmin;
    m(kTmaxRow, c) = tmax;
    m(8, c) = pet;
    m(9, c) = snow;
    m(10, c) = pres;
  }
  return m;
}

Vector double_logistic(int sos, int eos, double slope) {
  Vector g(kYearDays);
  for (Index d = 0; d < kYearDays; ++d) {
    const double doy = static_cast<double>(d + 1);
    g(d) = sigmoid(slope * (doy - (sos - 0.5))) * sigmoid(-slope * (doy - (eos + 0.5)));
  }
  return g;
}

}  // namespace

double synth_year_anomaly(const SynthParams& p, int year) {
  std::mt19937_64 rng = stream_rng(p, year, kAnomaly);
  return p.anomaly_std * std::normal_distribution<double>(0.0, 1.0)(rng);
}

SynthSiteYear gen_site_year(const SynthParams& p) {
  p.validate();
  SynthSiteYear out;
  out.met_celsius.resize(kMetVariables, kMetDays);
  out.met_celsius.leftCols(kYearDays) = year_weather(p, p.year - 1);
  out.met_celsius.rightCols(kYearDays) = year_weather(p, p.year);

  SiteYear& sy = out.site_year;
  sy.site_id = p.site_id;
  sy.year = p.year;
  sy.met.values = out.met_celsius;
  // same arithmetic as CSV ingestion, so onset dates agree bit for bit
  sy.met.values.row(kTminRow).array() += kCelsiusOffset;
  sy.met.values.row(kTmaxRow).array() += kCelsiusOffset;
  sy.normals.mean_annual_temp = p.base_temp;
  sy.normals.mean_annual_precip = 365.0 * p.precip_mean;

  const DegreeProfile profile = degree_profile(sy.met.tmean_current());
  int sos = 0;
  for (Index t = 0; t < kYearDays; ++t) {
    if (profile.gdd(t) >= p.gdd_onset_threshold) {
      sos = static_cast<int>(t + 1);
      break;
    }
  }
  if (sos == 0 || sos > p.eos_doy - 30)
    throw Error("synth: onset threshold unreachable for " + p.site_id + " " + std::to_string(p.year));
  out.true_sos = sos;
  out.true_eos = p.eos_doy;

  const Vector g = double_logistic(sos, p.eos_doy, p.logistic_slope);
  std::mt19937_64 grng = stream_rng(p, p.year, kGcc);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int doy = 1; doy <= kYearDays; ++doy) {
    if (unit(grng) < p.missing_fraction) continue;
    const CivilDate date = date_from_doy_noleap(p.year, doy);
    for (int k = 0; k < p.observations_per_day; ++k) {
      const double v = p.gcc_floor + p.gcc_amplitude * g(doy - 1) + p.gcc_noise * normal(grng);
      out.observations.push_back({date, std::clamp(v, 0.1, 0.6)});
    }
  }
  out.raw_daily = daily_gcc_percentile(out.observations);
  std::map<int, GccSeries> one{{p.year, out.raw_daily}};
  sy.gcc = standardize_gcc(one).at(p.year);

  std::mt19937_64 arng = stream_rng(p, p.year, kAux);
  Matrix aux(kAuxIndices, kYearDays);
  for (Index c = 0; c < kAuxIndices; ++c) {
    std::mt19937_64 crng(mix_seed(0xA0C0ULL, static_cast<std::uint64_t>(c)));
    const double offset = 0.2 * normal(crng);
    const double gain = 0.6 + 0.8 * unit(crng);
    for (Index d = 0; d < kYearDays; ++d) {
      const double noise = 0.02 * normal(arng);
      aux(c, d) = sy.gcc.observed(d) ? offset + gain * g(d) + noise : std::numeric_limits<double>::quiet_NaN();
    }
  }
  sy.aux_color = aux;
  std::vector<double> gv(g.data(), g.data() + g.size());
  Vector kndvi(kKndviStats);
  kndvi(0) = g.mean();
  kndvi(1) = std::sqrt((g.array() - g.mean()).square().mean());
  kndvi(2) = percentile(gv, 50.0);
  kndvi(3) = percentile(gv, 75.0);
  kndvi(4) = percentile(gv, 90.0);
  sy.kndvi = kndvi;
  return out;
}

SynthDataset gen_dataset(const SynthOptions& o) {
  if (o.n_sites < 3) throw Error("synth: need at least 3 sites");
  if (o.years_per_site < 1) throw Error("synth: need at least one year per site");
  SynthDataset data;
  for (int i = 0; i < o.n_sites; ++i) {
    std::mt19937_64 rng(mix_seed(o.seed, 1000 + static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SynthParams p;
    char id[16];
    std::snprintf(id, sizeof(id), "SYN%03d", i);
    p.site_id = id;
    p.seed = mix_seed(o.seed, 5000 + static_cast<std::uint64_t>(i));
    p.latitude = 35.0 + 20.0 * unit(rng);
    const double longitude = -120.0 + 50.0 * unit(rng);
    p.elevation = 1500.0 * unit(rng);
    p.base_temp = 283.0 + o.climate_spread * (10.0 * unit(rng) - 5.0);
    p.seasonal_amplitude = 10.0 + 4.0 * unit(rng);
    p.precip_mean = 1.5 + 2.0 * unit(rng);
    // photoperiod-dependent forcing requirement
    p.gdd_onset_threshold = 150.0 + o.photoperiod_gain * (p.latitude - 35.0);
    const int eos_site = 270 + static_cast<int>(35.0 * unit(rng));
    p.gcc_floor = 0.30 + 0.06 * unit(rng);
    p.gcc_amplitude = 0.08 + 0.07 * unit(rng);
    p.quality_group = unit(rng) < 0.5 ? 1 : 2;
    p.noise_std = o.noise_std;
    p.gcc_noise = o.gcc_noise;
    p.year = o.first_year;

    Site site;
    site.site_id = p.site_id;
    site.latitude = p.latitude;
    site.longitude = longitude;
    site.normals.mean_annual_temp = p.base_temp;
    site.normals.mean_annual_precip = 365.0 * p.precip_mean;
    data.sites.push_back(site);
    data.site_params.push_back(p);

    std::map<int, GccSeries> raw;
    const std::size_t first = data.site_years.size();
    for (int y = 0; y < o.years_per_site; ++y) {
      SynthParams py = p;
      py.year = o.first_year + y;
      py.eos_doy = std::clamp(eos_site + static_cast<int>(std::lround(2.0 * synth_year_anomaly(p, py.year))), 201, 359);
      SynthSiteYear sy = gen_site_year(py);
      raw.emplace(py.year, sy.raw_daily);
      data.truth.push_back({p.site_id, py.year, sy.true_sos, sy.true_eos});
      data.site_years.push_back(std::move(sy));
    }
    const auto standardized = standardize_gcc(raw);
    for (std::size_t k = first; k < data.site_years.size(); ++k) {
      SiteYear& s = data.site_years[k].site_year;
      s.gcc = standardized.at(s.year);
    }
  }
  return data;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << header << '\n';
  return os;
}

std::string iso(const CivilDate& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

}  // namespace

void write_synth_csv(const SynthDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char buf[512];
  {
    auto os = open_csv(dir / "sites.csv", "site_id,latitude,longitude");
    for (const auto& s : data.sites) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", s.site_id.c_str(), s.latitude, s.longitude);
      os << buf;
    }
  }
  {
    auto os = open_csv(dir / "normals.csv", "site_id,tmean_annual,prcp_annual");
    for (const auto& s : data.sites) {
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g\n", s.site_id.c_str(),
                    s.normals.mean_annual_temp - kCelsiusOffset, s.normals.mean_annual_precip);
      os << buf;
    }
  }
  std::map<std::string, int> group;
  for (const auto& p : data.site_params) group[p.site_id] = p.quality_group;

  auto met = open_csv(dir / "met.csv", "site_id,date,dayl,prcp,srad,swe,vp,vpd,tmin,tmax,pet,snow,pres");
  auto gcc = open_csv(dir / "gcc.csv", "site_id,timestamp,gcc,quality_group");
  std::string aux_header = "site_id,date";
  for (Index c = 0; c < kAuxIndices; ++c) {
    std::snprintf(buf, sizeof(buf), ",aux_%02d", static_cast<int>(c + 1));
    aux_header += buf;
  }
  auto aux = open_csv(dir / "aux.csv", aux_header.c_str());
  auto kndvi = open_csv(dir / "kndvi.csv", "site_id,year,mean,std,p50,p75,p90");
  auto truth = open_csv(dir / "truth.csv", "site_id,year,true_sos,true_eos");

  auto write_met_year = [&](const std::string& id, int year, const Matrix& m, Index col0) {
    for (int doy = 1; doy <= kYearDays; ++doy) {
      met << id << ',' << iso(date_from_doy_noleap(year, doy));
      for (Index v = 0; v < kMetVariables; ++v) {
        std::snprintf(buf, sizeof(buf), ",%.17g", m(v, col0 + doy - 1));
        met << buf;
      }
      met << '\n';
    }
  };

  std::string last_site;
  for (const auto& s : data.site_years) {
    const SiteYear& y = s.site_year;
    if (y.site_id != last_site) write_met_year(y.site_id, y.year - 1, s.met_celsius, 0);
    last_site = y.site_id;
    write_met_year(y.site_id, y.year, s.met_celsius, kYearDays);

    int k = 0;
    CivilDate prev{};
    for (const auto& o : s.observations) {
      k = (o.date == prev) ? k + 1 : 0;
      prev = o.date;
      std::snprintf(buf, sizeof(buf), "%s,%sT%02d:00:00,%.6f,%d\n", y.site_id.c_str(), iso(o.date).c_str(), 10 + 2 * k,
                    o.gcc, group[y.site_id]);
      gcc << buf;
    }
    if (y.aux_color) {
      for (Index d = 0; d < kYearDays; ++d) {
        if (!y.gcc.observed(d)) continue;
        aux << y.site_id << ',' << iso(date_from_doy_noleap(y.year, static_cast<int>(d + 1)));
        for (Index c = 0; c < kAuxIndices; ++c) {
          std::snprintf(buf, sizeof(buf), ",%.6f", (*y.aux_color)(c, d));
          aux << buf;
        }
        aux << '\n';
      }
    }
    if (y.kndvi) {
      const Vector& kv = *y.kndvi;
      std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", y.site_id.c_str(), y.year, kv(0), kv(1),
                    kv(2), kv(3), kv(4));
      kndvi << buf;
    }
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d\n", y.site_id.c_str(), y.year, s.true_sos, s.true_eos);
    truth << buf;
  }
}

}  // namespace phenoflux
