#include "phenoflux/pipeline.hpp"

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

using namespace phenoflux;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingArtifact: return 3;
    case ErrorKind::Numerical: return 4;
    default: return 2;
  }
}

struct CommonArgs {
  std::string run = "run";
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  bool deterministic = false;
  bool quiet = false;
};

// defaults < PHENOFLUX_SEED < config file < --set < --seed / --jobs
RunConfig effective_config(const CommonArgs& a) {
  std::vector<std::string> sets;
  if (const char* env = std::getenv("PHENOFLUX_SEED"); env && *env) sets.push_back(std::string("seed=") + env);
  if (!a.config_file.empty()) {
    const auto file = config_assignments(read_text(a.config_file));
    sets.insert(sets.end(), file.begin(), file.end());
  }
  sets.insert(sets.end(), a.overrides.begin(), a.overrides.end());
  RunConfig cfg = with_overrides(RunConfig(), sets);
  if (a.seed) cfg.seed = *a.seed;
  if (a.jobs) cfg.jobs = *a.jobs;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--run", a.run, "Run directory holding raw/, dataset/, features/, models/ and reports/")
      ->capture_default_str();
  sub->add_option("--config", a.config_file, "Config file of 'key = value' lines")->check(CLI::ExistingFile);
  sub->add_option("--set", a.overrides, "Override one config key, e.g. --set train.max_epochs=30 (repeatable)");
  sub->add_option("--seed", a.seed, "Random seed (falls back to PHENOFLUX_SEED, then the config)");
  sub->add_option("--jobs", a.jobs, "Worker threads for ensemble training, attribution and permutations")
      ->check(CLI::PositiveNumber);
  sub->add_flag("--deterministic-output", a.deterministic, "Omit timestamps so reruns are byte-identical");
  sub->add_flag("--quiet", a.quiet, "No progress messages");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phenoflux: wavelet and neural-network models of vegetation phenology"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string model = "all";
  bool no_wavelet = false;
  std::string subset_choice;
  std::string input_dir;

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"synth", "Write a synthetic CSV dataset with known season dates to <run>/raw"},
      {"ingest", "Validate and ingest CSV inputs into <run>/dataset"},
      {"featurize", "Split sites and fit input normalization; write degree-day features"},
      {"train", "Fit the prescribed, spring, linear and neural models"},
      {"calibrate", "Fit linear date corrections on the validation site-years"},
      {"eval", "Evaluate every trained model on the test site-years (results.csv, results.md)"},
      {"attribute", "Integrated-gradient attributions of the wavelet ensemble's spring onset"},
      {"feature-test", "Conditional-independence tests of degree-day feature use"},
      {"report", "Collect all reports into report.md"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, args);
    subs[c.name] = sub;
  }
  subs["ingest"]->add_option("--input", input_dir, "CSV input directory (default <run>/raw)");
  subs["synth"]->add_option("--output", input_dir, "Output directory for the CSV files (default <run>/raw)");
  subs["train"]
      ->add_option("--model", model, "Models to fit")
      ->check(CLI::IsMember({"all", "mechanistic", "linear", "nn"}))
      ->capture_default_str();
  subs["train"]->add_flag("--no-wavelet", no_wavelet, "Skip the wavelet-input variants");
  subs["feature-test"]
      ->add_option("--subset", subset_choice, "Site-years to test: test or all")
      ->check(CLI::IsMember({"test", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = effective_config(args);
    if (!input_dir.empty()) cfg.input_dir = input_dir;
    if (!subset_choice.empty()) cfg.feature_test_subset = subset_choice;
    const RunPaths paths{args.run};
    StageOptions opts;
    opts.deterministic_output = args.deterministic;
    opts.quiet = args.quiet;

    const std::string name = app.get_subcommands().front()->get_name();
    write_effective_config(cfg, paths, name, opts);
    if (name == "synth") run_synth(cfg, paths, opts);
    else if (name == "ingest") run_ingest(cfg, paths, opts);
    else if (name == "featurize") run_featurize(cfg, paths, opts);
    else if (name == "train") run_train(cfg, paths, train_selection(model, no_wavelet), opts);
    else if (name == "calibrate") run_calibrate(cfg, paths, opts);
    else if (name == "eval") std::cout << run_eval(cfg, paths, opts).to_markdown();
    else if (name == "attribute") run_attribute(cfg, paths, opts);
    else if (name == "feature-test") std::cout << feature_use_csv(run_feature_test(cfg, paths, opts));
    else if (name == "report") run_report(cfg, paths, opts);
    return 0;
  } catch (const Error& e) {
    std::cerr << "phenoflux: error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "phenoflux: error: " << e.what() << '\n';
    return 1;
  }
}
