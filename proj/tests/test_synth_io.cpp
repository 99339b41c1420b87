#include "doctest.h"

#include "phenoflux/config.hpp"
#include "phenoflux/dataset_io.hpp"
#include "phenoflux/pheno_metrics.hpp"
#include "phenoflux/synth.hpp"

#include <filesystem>
#include <fstream>

using namespace phenoflux;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SynthOptions small_synth(std::uint64_t seed) {
  SynthOptions o;
  o.n_sites = 4;
  o.years_per_site = 2;
  o.seed = seed;
  return o;
}

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("noise-free synthetic dates are recovered") {
  for (int lat : {36, 45, 54}) {
    SynthParams p;
    p.latitude = lat;
    p.gcc_noise = 0.0;
    p.missing_fraction = 0.0;
    p.seed = static_cast<std::uint64_t>(lat);
    p.gdd_onset_threshold = 150.0 + 8.0 * (lat - 35.0);
    const SynthSiteYear s = gen_site_year(p);
    const SeasonDates d = extract_dates(s.site_year.gcc.values);
    CHECK(std::abs(*d.sos - s.true_sos) <= 1);
    CHECK(std::abs(*d.eos - s.true_eos) <= 1);
  }
}

TEST_CASE("synthetic data is seeded and shares weather across overlapping years") {
  const SynthDataset a = gen_dataset(small_synth(3)), b = gen_dataset(small_synth(3)), c = gen_dataset(small_synth(4));
  REQUIRE(a.site_years.size() == 8);
  CHECK(a.site_years[1].met_celsius == b.site_years[1].met_celsius);
  CHECK(a.site_years[1].met_celsius != c.site_years[1].met_celsius);
  CHECK(a.truth[5].true_sos == b.truth[5].true_sos);
  // second year's previous-year half is the first year's current half
  CHECK(a.site_years[1].met_celsius.leftCols(kYearDays) == a.site_years[0].met_celsius.rightCols(kYearDays));
}

TEST_CASE("day length") {
  CHECK(day_length_seconds(0.0, 80) / 3600.0 == doctest::Approx(12.1).epsilon(0.01));
  CHECK(day_length_seconds(50.0, 172) > day_length_seconds(40.0, 172));
  CHECK(day_length_seconds(50.0, 355) < day_length_seconds(40.0, 355));
}

TEST_CASE("synthetic CSV ingests back to the generated series") {
  TempDir dir("phenoflux_synth_io");
  const SynthDataset data = gen_dataset(small_synth(5));
  write_synth_csv(data, dir.path);
  const Dataset d = ingest_csv_dir(dir.path);
  REQUIRE(d.site_years.size() == data.site_years.size());
  for (std::size_t i = 0; i < d.site_years.size(); ++i) {
    const SiteYear& got = d.site_years[i];
    const SiteYear& want = data.site_years[i].site_year;
    CHECK(got.site_id == want.site_id);
    CHECK((got.met.values - want.met.values).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((got.gcc.observed == want.gcc.observed).all());
  }

  save_dataset(d, dir.path / "dataset");
  const Dataset back = load_dataset(dir.path / "dataset");
  REQUIRE(back.site_years.size() == d.site_years.size());
  CHECK(back.site_years[3].met.values == d.site_years[3].met.values);
  CHECK(back.site_years[3].gcc.values == d.site_years[3].gcc.values);
  CHECK(back.sites.size() == d.sites.size());
  CHECK(back.gcc_ranges.at("SYN001").max == d.gcc_ranges.at("SYN001").max);
}

TEST_CASE("ingest names a missing column") {
  TempDir dir("phenoflux_bad_csv");
  write_synth_csv(gen_dataset(small_synth(6)), dir.path);
  {
    std::ofstream os(dir.path / "gcc.csv");
    os << "site_id,timestamp,value\nSYN000,2001-01-01,0.3\n";
  }
  const std::string msg = error_of([&] { ingest_csv_dir(dir.path); });
  CHECK(msg.find("gcc") != std::string::npos);
  CHECK(msg.find("'gcc'") != std::string::npos);
  try {
    ingest_csv_dir(dir.path);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
  }
  CHECK_THROWS_AS(load_dataset(dir.path / "nothing"), Error);
}

TEST_CASE("csv reader reports line numbers") {
  TempDir dir("phenoflux_csv_lines");
  {
    std::ofstream os(dir.path / "t.csv");
    os << "a,b\n1,2\n3\n";
  }
  const std::string msg = error_of([&] { read_csv(dir.path / "t.csv"); });
  CHECK(msg.find("t.csv:3") != std::string::npos);
  {
    std::ofstream os(dir.path / "u.csv");
    os << "a,b\n1,x\n";
  }
  const CsvTable t = read_csv(dir.path / "u.csv");
  CHECK(t.integer(0, 0) == 1);
  CHECK(error_of([&] { t.number(0, 1); }).find("u.csv:2") != std::string::npos);
  CHECK(error_of([&] { t.column("c"); }).find("'c'") != std::string::npos);
}

TEST_CASE("config text round trip and overrides") {
  RunConfig c;
  c.seed = 42;
  c.train.learning_rate = 0.0123456789;
  c.network.channels = {8, 16};
  c.wavelet.scale_exponents = {-1, 0, 1};
  const RunConfig back = RunConfig::parse(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.train.learning_rate == c.train.learning_rate);

  const RunConfig o = with_overrides(c, {"ensemble.size=3", "feature_test.subset=all"});
  CHECK(o.ensemble_size == 3);
  CHECK(o.feature_test_subset == "all");
  CHECK(o.seed == 42);

  CHECK(error_of([] { RunConfig::parse("seed = 1\n# note\nbogus line\n"); }).find("line 3") != std::string::npos);
  CHECK(error_of([] { RunConfig::parse("no.such.key = 1\n"); }).find("no.such.key") != std::string::npos);
  CHECK(error_of([] { RunConfig::parse("train.max_epochs = many\n"); }).find("train.max_epochs") != std::string::npos);
  CHECK_THROWS_AS(with_overrides(c, {"feature_test.subset=some"}).validate(), Error);
  CHECK(config_assignments("a = 1\n\n# c\nb=2\n") == std::vector<std::string>{"a=1", "b=2"});
}

TEST_CASE("split and norm stats files round trip") {
  TempDir dir("phenoflux_split_io");
  const DatasetSplit s = split_sites({"A", "B", "C", "D", "E"}, 9);
  save_split(s, dir.path / "split.json");
  const DatasetSplit t = load_split(dir.path / "split.json");
  CHECK(t.train == s.train);
  CHECK(t.validation == s.validation);
  CHECK(t.test == s.test);
  CHECK(t.seed == 9);

  NormStats n;
  n.mean = Vector::LinSpaced(4, 0.1, 0.7);
  n.std = Vector::Constant(4, 1.0 / 3.0);
  save_norm_stats(n, dir.path / "n.csv");
  const NormStats m = load_norm_stats(dir.path / "n.csv");
  CHECK(m.mean == n.mean);
  CHECK(m.std == n.std);
  try {
    load_split(dir.path / "absent.json");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingArtifact);
  }
}
