#ifndef PHENOFLUX_CONFIG_HPP
#define PHENOFLUX_CONFIG_HPP

#include "phenoflux/feature_test.hpp"
#include "phenoflux/network.hpp"
#include "phenoflux/synth.hpp"
#include "phenoflux/training.hpp"
#include "phenoflux/wavelet.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace phenoflux {

/// Every setting of a run. Serialized as sorted `key = value` lines; the
/// text form round-trips exactly.
struct RunConfig {
  std::string input_dir = "raw";  // CSV inputs, relative to the run directory unless absolute
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  // data
  std::string gcc_standardization = "per_site";
  int chill_start_prev_doy = 0;  // 0: count chill days from 1 January
  int feature_doy = 120;

  // models
  WaveletConfig wavelet;
  NeuralConfig network;
  TrainConfig train;
  int ensemble_size = 20;
  int search_budget = 0;  // 0: train with `train` as given
  std::vector<double> ridge_grid;

  // attribution
  int ig_steps = 256;
  double soft_sos_steepness = 50.0;
  bool ig_pooled_cutoff = true;
  double ig_cutoff_percentile = 99.9;
  int attribution_min_sos = 80;

  // feature test
  FeatureTestConfig feature_test;
  std::string feature_test_subset = "test";  // or "all"

  // synthetic data
  SynthOptions synth;

  RunConfig();

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static RunConfig from_map(const std::map<std::string, std::string>& kv);
  std::string to_text() const;
  static RunConfig parse(const std::string& text);
};

RunConfig load_config(const std::filesystem::path& path);

/// The `key=value` assignments of a config text, in file order.
std::vector<std::string> config_assignments(const std::string& text);

/// Applies `key=value` overrides on top of `base`.
RunConfig with_overrides(const RunConfig& base, const std::vector<std::string>& assignments);

}  // namespace phenoflux

#endif  // PHENOFLUX_CONFIG_HPP
