#include "phenoflux/pipeline.hpp"

#include "phenoflux/attribution.hpp"
#include "phenoflux/climate_features.hpp"
#include "phenoflux/parallel.hpp"
#include "phenoflux/training.hpp"
#include "phenoflux/wavelet.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace phenoflux {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void say(const StageOptions& o, const std::string& msg) {
  if (!o.quiet) std::cerr << "phenoflux: " << msg << '\n';
}

std::string num(double v, const char* f = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

const fs::path& require(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p))
    throw Error(p.string() + " not found; run 'phenoflux " + stage + "' first", ErrorKind::MissingArtifact);
  return p;
}

fs::path stats_path(const RunPaths& paths, Layout l) { return paths.features() / ("norm_" + layout_name(l) + ".csv"); }
fs::path fusion_stats_path(const RunPaths& paths) { return paths.features() / "norm_fusion.csv"; }
fs::path ensemble_dir(const RunPaths& paths, Layout l) { return paths.models() / ("nn_" + layout_name(l)); }
fs::path linear_path(const RunPaths& paths, Layout l) { return paths.models() / ("linear_" + layout_name(l) + ".phxl"); }

Vector raw_fusion(const SiteYear& sy) {
  Vector f(2);
  f << sy.normals.mean_annual_temp, sy.normals.mean_annual_precip;
  return f;
}

Vector flatten(const Matrix& m) {
  const Matrix t = m.transpose();
  return Eigen::Map<const Vector>(t.data(), t.size());
}

Labels labels_of(const SiteYear& sy) {
  Labels l;
  l.gcc = sy.gcc.values;
  l.gcc_observed = sy.gcc.observed;
  if (sy.aux_color) l.aux = flatten(*sy.aux_color);
  if (sy.kndvi) l.kndvi = *sy.kndvi;
  return l;
}

int date_or_sentinel(const std::optional<int>& d) { return d ? *d : kNeverReached; }

SeasonDates dates_of(const Vector& gcc) {
  try {
    return extract_dates(gcc);
  } catch (const Error&) {
    return {};
  }
}

Matrix design(const Workspace& ws, const std::vector<std::size_t>& rows, Layout l) {
  const Index p = ws.input_stats(l).rows() * kMetDays;
  Matrix X(static_cast<Index>(rows.size()), p);
  for (std::size_t k = 0; k < rows.size(); ++k) X.row(static_cast<Index>(k)) = flatten(ws.input(rows[k], l)).transpose();
  return X;
}

Matrix gcc_targets(const Workspace& ws, const std::vector<std::size_t>& rows) {
  Matrix Y(static_cast<Index>(rows.size()), kYearDays);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& g = ws.site_year(rows[k]).gcc;
    for (Index d = 0; d < kYearDays; ++d)
      Y(static_cast<Index>(k), d) = g.observed(d) ? g.values(d) : std::numeric_limits<double>::quiet_NaN();
  }
  return Y;
}

std::vector<TrainingSample> samples(const Workspace& ws, const std::vector<std::size_t>& rows, Layout l) {
  std::vector<TrainingSample> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back({ws.input(i, l), ws.fusion(i), labels_of(ws.site_year(i))});
  return out;
}

// Output biases start at the training means so early epochs fit anomalies.
void init_biases(Network& net, std::span<const TrainingSample> train_set, const ClimatologyCurve& clim) {
  net.gcc_bias() = clim.mean_gcc;
  const Index na = net.config().aux_outputs;
  if (na > 0) {
    Vector sum = Vector::Zero(na), cnt = Vector::Zero(na);
    for (const auto& s : train_set) {
      if (!s.labels.aux) continue;
      for (Index j = 0; j < na; ++j)
        if (!std::isnan((*s.labels.aux)(j))) {
          sum(j) += (*s.labels.aux)(j);
          cnt(j) += 1;
        }
    }
    for (Index j = 0; j < na; ++j) net.aux_bias()(j) = cnt(j) > 0 ? sum(j) / cnt(j) : 0.0;
  }
  const Index nk = net.config().kndvi_outputs;
  if (nk > 0) {
    Vector sum = Vector::Zero(nk);
    int cnt = 0;
    for (const auto& s : train_set)
      if (s.labels.kndvi) {
        sum += *s.labels.kndvi;
        ++cnt;
      }
    if (cnt > 0) net.kndvi_bias() = sum / cnt;
  }
}

std::vector<Index> channels_for(int blocks) {
  static const Index widths[] = {16, 32, 48, 64, 80, 96};
  return std::vector<Index>(widths, widths + blocks);
}

NeuralConfig network_config(const RunConfig& cfg, Layout l, Index rows) {
  NeuralConfig nc = cfg.network;
  nc.input_rows = rows;
  if (l == Layout::Raw) nc.stem_stride_rows = 1;
  return nc;
}

ClimatologyCurve load_climatology(const RunPaths& paths) {
  const CsvTable t = read_csv(require(paths.models() / "climatology.csv", "train --model mechanistic"));
  ClimatologyCurve c;
  const auto cd = t.column("doy"), cm = t.column("mean_gcc"), cc = t.column("count");
  if (t.rows.size() != static_cast<std::size_t>(kYearDays)) throw Error("climatology.csv must have 365 rows", ErrorKind::Validation);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int d = t.integer(r, cd);
    if (d < 1 || d > kYearDays) throw Error(t.where(r) + ": doy out of range", ErrorKind::Validation);
    c.mean_gcc(d - 1) = t.number(r, cm);
    c.count(d - 1) = t.integer(r, cc);
  }
  return c;
}

SpringParams load_spring(const RunPaths& paths) {
  const auto j = json::parse(read_text(require(paths.models() / "spring.json", "train --model mechanistic")));
  SpringParams p{j.at("a").get<double>(), j.at("b").get<double>(), j.at("c").get<double>()};
  p.validate();
  return p;
}

std::map<std::string, std::pair<DateCalibration, DateCalibration>> load_calibration(const RunPaths& paths) {
  const auto j = json::parse(read_text(require(paths.models() / "calibration.json", "calibrate")));
  std::map<std::string, std::pair<DateCalibration, DateCalibration>> out;
  auto get = [](const json& c) {
    DateCalibration d;
    d.slope = c.at("slope").get<double>();
    d.intercept = c.at("intercept").get<double>();
    d.degenerate = c.at("degenerate").get<bool>();
    return d;
  };
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = {get(it.value().at("sos")), get(it.value().at("eos"))};
  return out;
}

std::vector<std::size_t> subset(const Workspace& ws, const std::string& which) {
  return which == "all" ? ws.all() : ws.test();
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

fs::path RunPaths::input(const RunConfig& c) const {
  const fs::path p(c.input_dir);
  return p.is_absolute() ? p : root / p;
}

std::string layout_name(Layout l) { return l == Layout::Raw ? "raw" : "wavelet"; }

TrainSelection train_selection(const std::string& model, bool no_wavelet) {
  TrainSelection s;
  if (model == "mechanistic") s.linear = s.neural = false;
  else if (model == "linear") s.mechanistic = s.neural = false;
  else if (model == "nn") s.mechanistic = s.linear = false;
  else if (model != "all")
    throw Error("--model must be one of all, mechanistic, linear, nn (got '" + model + "')", ErrorKind::Validation);
  if (no_wavelet) s.wavelet = false;
  return s;
}

// ---------------------------------------------------------------------------
// Workspace

Workspace::Workspace(RunConfig config, RunPaths paths) : config_(std::move(config)), paths_(std::move(paths)) {
  data_ = load_dataset(paths_.dataset());
  split_ = load_split(require(paths_.features() / "split.json", "featurize"));
  const std::set<std::string> tr(split_.train.begin(), split_.train.end());
  const std::set<std::string> va(split_.validation.begin(), split_.validation.end());
  const std::set<std::string> te(split_.test.begin(), split_.test.end());
  for (std::size_t i = 0; i < data_.site_years.size(); ++i) {
    const auto& id = data_.site_years[i].site_id;
    if (tr.count(id)) train_.push_back(i);
    else if (va.count(id)) validation_.push_back(i);
    else if (te.count(id)) test_.push_back(i);
    else throw Error("site '" + id + "' is in no split; rerun 'phenoflux featurize'", ErrorKind::Validation);
  }
  if (train_.empty() || validation_.empty() || test_.empty())
    throw Error("a split part has no complete site-years", ErrorKind::Validation);
}

std::vector<std::size_t> Workspace::all() const {
  std::vector<std::size_t> v(data_.site_years.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

const Matrix& Workspace::stacked(std::size_t i, Layout l) const {
  const auto key = std::make_pair(i, static_cast<int>(l));
  auto it = stack_cache_.find(key);
  if (it != stack_cache_.end()) return it->second;
  const auto& sy = data_.site_years.at(i);
  const Vector walk = random_walk(kMetDays, walk_seed(sy.site_id, sy.year));
  Matrix m = l == Layout::Wavelet ? stack_wavelet_rows(sy.met, walk, config_.wavelet) : stack_raw_rows(sy.met, walk);
  return stack_cache_.emplace(key, std::move(m)).first->second;
}

const NormStats& Workspace::input_stats(Layout l) const {
  auto it = stats_.find(static_cast<int>(l));
  if (it != stats_.end()) return it->second;
  NormStats s = load_norm_stats(require(stats_path(paths_, l), "featurize"));
  if (l == Layout::Wavelet && s.rows() != (kMetVariables + 1) * config_.wavelet.scales())
    throw Error("wavelet normalization rows do not match the wavelet config; rerun 'phenoflux featurize'",
                ErrorKind::Validation);
  return stats_.emplace(static_cast<int>(l), std::move(s)).first->second;
}

Index Workspace::scales(Layout l) const { return l == Layout::Wavelet ? config_.wavelet.scales() : 1; }

Matrix Workspace::input(std::size_t i, Layout l) const { return apply_norm(stacked(i, l), input_stats(l)); }

Vector Workspace::fusion(std::size_t i) const {
  if (!fusion_stats_) fusion_stats_ = load_norm_stats(require(fusion_stats_path(paths_), "featurize"));
  const Vector f = raw_fusion(data_.site_years.at(i));
  return (f - fusion_stats_->mean).cwiseQuotient(fusion_stats_->std);
}

SeasonDates Workspace::observed_dates(std::size_t i) const { return dates_of(data_.site_years.at(i).gcc.filled()); }

// ---------------------------------------------------------------------------
// Ensembles

Vector NeuralEnsemble::predict_gcc(const Matrix& input, const Vector& fusion) const {
  Vector g = Vector::Zero(kYearDays);
  for (std::size_t m = 0; m < members.size(); ++m) {
    const double w = weights(static_cast<Index>(m));
    if (w != 0.0) g += w * members[m].forward(input, fusion).gcc;
  }
  return g;
}

std::vector<const Network*> NeuralEnsemble::member_pointers() const {
  std::vector<const Network*> p;
  for (const auto& m : members) p.push_back(&m);
  return p;
}

NeuralEnsemble load_ensemble(const RunPaths& paths, Layout l) {
  const fs::path dir = ensemble_dir(paths, l);
  const auto j = json::parse(read_text(require(dir / "weights.json", "train --model nn")));
  NeuralEnsemble e;
  e.layout = l;
  const auto files = j.at("members").get<std::vector<std::string>>();
  const auto w = j.at("weights").get<std::vector<double>>();
  if (files.size() != w.size()) throw Error(dir.string() + "/weights.json: member count mismatch", ErrorKind::Validation);
  e.weights = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
  for (const auto& f : files) e.members.push_back(load_checkpoint(require(dir / f, "train --model nn")));
  return e;
}

// ---------------------------------------------------------------------------
// Stages

void write_effective_config(const RunConfig& config, const RunPaths& paths, const std::string& stage,
                            const StageOptions& options) {
  std::string text = "# effective configuration of 'phenoflux " + stage + "'\n";
  if (!options.deterministic_output) text += "# written " + timestamp() + "\n";
  write_text(paths.root / "config" / (stage + ".conf"), text + config.to_text());
}

void run_synth(const RunConfig& config, const RunPaths& paths, const StageOptions& options) {
  SynthOptions so = config.synth;
  so.seed = config.seed;
  const SynthDataset data = gen_dataset(so);
  write_synth_csv(data, paths.input(config));
  say(options, "synthesized " + std::to_string(data.site_years.size()) + " site-years into " +
                   paths.input(config).string());
}

void run_ingest(const RunConfig& config, const RunPaths& paths, const StageOptions& options) {
  IngestOptions io;
  io.gcc_standardization = config.gcc_standardization;
  const Dataset data = ingest_csv_dir(paths.input(config), io);
  if (data.site_years.empty()) throw Error("no complete site-years survived ingestion", ErrorKind::Validation);
  save_dataset(data, paths.dataset());
  say(options, "ingested " + std::to_string(data.site_years.size()) + " site-years from " +
                   std::to_string(data.sites.size()) + " sites (" + std::to_string(data.rejected.size()) +
                   " rejected)");
}

void run_featurize(const RunConfig& config, const RunPaths& paths, const StageOptions& options) {
  const Dataset data = load_dataset(paths.dataset());
  save_split(split_sites(data.site_ids(), config.seed), paths.features() / "split.json");
  const Workspace ws(config, paths);

  for (Layout l : {Layout::Wavelet, Layout::Raw}) {
    std::vector<Matrix> stacks;
    for (std::size_t i : ws.train()) stacks.push_back(ws.stacked(i, l));
    save_norm_stats(fit_norm_stats(stacks), stats_path(paths, l));
  }
  NormStats fstats;
  {
    Matrix f(2, static_cast<Index>(ws.train().size()));
    for (std::size_t k = 0; k < ws.train().size(); ++k) f.col(static_cast<Index>(k)) = raw_fusion(ws.site_year(ws.train()[k]));
    fstats.mean = f.rowwise().mean();
    fstats.std = ((f.colwise() - fstats.mean).array().square().rowwise().sum() / static_cast<double>(f.cols())).sqrt();
    for (Index r = 0; r < 2; ++r)
      if (!(fstats.std(r) > 1e-12)) fstats.std(r) = 1.0;
  }
  save_norm_stats(fstats, fusion_stats_path(paths));

  std::ostringstream os;
  os << "site_id,year,doy,gdd,chill_days,gdd_prev,chill_prev\n";
  for (const auto& sy : data.site_years) {
    for (int d = 1; d <= kYearDays; ++d) {
      const auto f = degree_features(sy.met, d, YearOffset::Current, config.chill_start_prev_doy);
      const auto p = degree_features(sy.met, d, YearOffset::Previous, config.chill_start_prev_doy);
      os << sy.site_id << ',' << sy.year << ',' << d << ',' << num(f.gdd, "%.6f") << ',' << f.chill_days << ','
         << num(p.gdd, "%.6f") << ',' << p.chill_days << '\n';
    }
  }
  write_text(paths.features() / "degree_features.csv", os.str());
  say(options, "features written for " + std::to_string(data.site_years.size()) + " site-years");
}

void run_train(const RunConfig& config, const RunPaths& paths, const TrainSelection& sel, const StageOptions& options) {
  const Workspace ws(config, paths);
  std::vector<Layout> layouts;
  if (sel.raw) layouts.push_back(Layout::Raw);
  if (sel.wavelet) layouts.push_back(Layout::Wavelet);

  std::vector<GccSeries> train_gcc;
  for (std::size_t i : ws.train()) train_gcc.push_back(ws.site_year(i).gcc);
  const ClimatologyCurve clim = fit_climatology(train_gcc);

  if (sel.mechanistic) {
    std::ostringstream os;
    os << "doy,mean_gcc,count\n";
    for (Index d = 0; d < kYearDays; ++d) os << d + 1 << ',' << num(clim.mean_gcc(d)) << ',' << clim.count(d) << '\n';
    write_text(paths.models() / "climatology.csv", os.str());

    std::vector<Vector> tmeans;
    std::vector<int> sos;
    for (std::size_t i : ws.train()) {
      const auto d = ws.observed_dates(i);
      if (!d.sos) continue;
      tmeans.push_back(ws.site_year(i).met.tmean_current());
      sos.push_back(*d.sos);
    }
    const SpringFit fit = fit_spring_params(tmeans, sos);
    json j;
    j["a"] = fit.params.a;
    j["b"] = fit.params.b;
    j["c"] = fit.params.c;
    j["rmse_train"] = fit.rmse_train;
    j["n"] = sos.size();
    j["grid"] = {{"a", fit.grid.a}, {"b", fit.grid.b}, {"c", fit.grid.c}};
    write_text(paths.models() / "spring.json", j.dump(2) + "\n");
    say(options, "spring model a=" + num(fit.params.a, "%g") + " b=" + num(fit.params.b, "%g") +
                     " c=" + num(fit.params.c, "%g") + " train rmse " + num(fit.rmse_train, "%.2f"));
  }

  if (sel.linear) {
    for (Layout l : layouts) {
      const RidgeSelection rs = select_ridge(design(ws, ws.train(), l), gcc_targets(ws, ws.train()),
                                             design(ws, ws.validation(), l), gcc_targets(ws, ws.validation()),
                                             config.ridge_grid);
      LinearModel m = rs.model;
      m.layout = layout_name(l);
      m.feature_groups = input_variable_names();
      m.features_per_group = ws.scales(l) * kMetDays;
      m.save(linear_path(paths, l));
      std::ostringstream os;
      os << "ridge,validation_mse\n";
      for (std::size_t k = 0; k < config.ridge_grid.size(); ++k)
        os << num(config.ridge_grid[k]) << ',' << num(rs.validation_mse[k]) << '\n';
      write_text(paths.models() / ("linear_" + layout_name(l) + "_ridge.csv"), os.str());
      say(options, "linear " + layout_name(l) + " ridge " + num(rs.ridge, "%g"));
    }
  }

  if (sel.neural) {
    for (Layout l : layouts) {
      const auto train_set = samples(ws, ws.train(), l);
      const auto val_set = samples(ws, ws.validation(), l);
      const fs::path dir = ensemble_dir(paths, l);
      const std::uint64_t stream = l == Layout::Wavelet ? 2 : 1;
      NeuralConfig nc = network_config(config, l, ws.input_stats(l).rows());
      TrainConfig tc = config.train;

      auto fit_member = [&](const NeuralConfig& n, TrainConfig t, std::uint64_t seed, TrainResult* result) {
        t.seed = seed;
        Network net(n, seed);
        init_biases(net, train_set, clim);
        *result = train(net, train_set, val_set, t);
        return net;
      };

      if (config.search_budget > 0) {
        const std::uint64_t search_seed = mix_seed(config.seed, 100 + stream);
        const SearchResult sr = hyperparam_search(
            SearchSpace{}, config.search_budget, search_seed,
            [&](const Candidate& c) {
              NeuralConfig n = nc;
              n.channels = channels_for(blocks_for_resnet_size(c.resnet_size));
              TrainResult r;
              fit_member(n, c.train, mix_seed(search_seed, 7), &r);
              return r.best_val_loss;
            },
            tc);
        const auto cands = sample_candidates(SearchSpace{}, config.search_budget, search_seed, tc);
        std::ostringstream os;
        os << "candidate,batch_size,learning_rate,optimizer,cosine_t0,early_stop_patience,aux_weight,resnet_size,"
              "val_loss\n";
        for (std::size_t k = 0; k < cands.size(); ++k) {
          const auto& c = cands[k];
          os << k << ',' << c.train.batch_size << ',' << num(c.train.learning_rate) << ','
             << to_string(c.train.optimizer) << ',' << c.train.cosine_t0 << ',' << c.train.early_stop_patience << ','
             << num(c.train.aux_weight) << ',' << c.resnet_size << ',' << num(sr.scores[k]) << '\n';
        }
        write_text(dir / "search.csv", os.str());
        tc = sr.best.train;
        nc.channels = channels_for(blocks_for_resnet_size(sr.best.resnet_size));
      }

      CheckpointExtras extras;
      extras.input_stats = ws.input_stats(l);
      extras.fusion_stats = load_norm_stats(fusion_stats_path(paths));
      extras.input_layout = layout_name(l);

      const auto E = static_cast<std::size_t>(config.ensemble_size);
      std::vector<std::string> files(E);
      std::vector<Matrix> val_pred(E);
      std::vector<double> best(E);
      parallel_for(E, config.jobs, [&](std::size_t m) {
        TrainResult r;
        const Network net = fit_member(nc, tc, mix_seed(config.seed, 1000 * stream + m), &r);
        char name[32];
        std::snprintf(name, sizeof(name), "member_%02zu", m);
        files[m] = std::string(name) + ".phxm";
        CheckpointExtras ex = extras;
        ex.best_val_loss = r.best_val_loss;
        save_checkpoint(dir / files[m], net, ex);
        write_text(dir / (std::string(name) + "_log.csv"), training_log_csv(r.log));
        Matrix p(kYearDays, static_cast<Index>(val_set.size()));
        for (std::size_t k = 0; k < val_set.size(); ++k)
          p.col(static_cast<Index>(k)) = net.forward(val_set[k].input, val_set[k].fusion).gcc;
        val_pred[m] = std::move(p);
        best[m] = r.best_val_loss;
      });

      // stack observed validation days, one column per member
      std::vector<std::pair<Index, Index>> obs;
      for (std::size_t k = 0; k < val_set.size(); ++k)
        for (Index d = 0; d < kYearDays; ++d)
          if (val_set[k].labels.gcc_observed(d)) obs.emplace_back(static_cast<Index>(k), d);
      Matrix P(static_cast<Index>(obs.size()), static_cast<Index>(E));
      Vector y(static_cast<Index>(obs.size()));
      for (std::size_t r = 0; r < obs.size(); ++r) {
        const auto [k, d] = obs[r];
        y(static_cast<Index>(r)) = val_set[static_cast<std::size_t>(k)].labels.gcc(d);
        for (std::size_t m = 0; m < E; ++m) P(static_cast<Index>(r), static_cast<Index>(m)) = val_pred[m](d, k);
      }
      const EnsembleWeights ew = fit_ensemble_weights(P, y);
      Vector member_mse(static_cast<Index>(E));
      for (std::size_t m = 0; m < E; ++m)
        member_mse(static_cast<Index>(m)) = (P.col(static_cast<Index>(m)) - y).squaredNorm() / static_cast<double>(y.size());

      json j;
      j["layout"] = layout_name(l);
      j["members"] = files;
      j["weights"] = std::vector<double>(ew.weights.data(), ew.weights.data() + ew.weights.size());
      j["validation_mse"] = ew.validation_mse;
      j["member_validation_mse"] = std::vector<double>(member_mse.data(), member_mse.data() + member_mse.size());
      j["member_best_val_loss"] = best;
      j["iterations"] = ew.iterations;
      write_text(dir / "weights.json", j.dump(2) + "\n");
      say(options, "nn " + layout_name(l) + ": " + std::to_string(E) + " members, ensemble validation mse " +
                       num(ew.validation_mse, "%.5f") + " (best member " + num(member_mse.minCoeff(), "%.5f") + ")");
    }
  }
}

std::map<std::string, ModelPredictions> predict_models(const Workspace& ws, const std::vector<std::size_t>& rows) {
  std::map<std::string, ModelPredictions> out;
  const RunPaths& paths = ws.paths();
  const auto n = rows.size();

  auto from_gcc = [&](ModelPredictions& p) {
    for (const auto& g : p.gcc) {
      const SeasonDates d = dates_of(g);
      p.sos.push_back(date_or_sentinel(d.sos));
      p.eos.push_back(date_or_sentinel(d.eos));
    }
  };

  if (fs::exists(paths.models() / "climatology.csv")) {
    const ClimatologyCurve clim = load_climatology(paths);
    ModelPredictions p;
    p.gcc.assign(n, clim.mean_gcc);
    from_gcc(p);
    const int clim_eos = p.eos.empty() ? kNeverReached : p.eos.front();
    out["prescribed"] = p;
    if (fs::exists(paths.models() / "spring.json")) {
      const SpringParams sp = load_spring(paths);
      ModelPredictions s;
      for (std::size_t i : rows) {
        s.sos.push_back(spring_onset(Vector(ws.site_year(i).met.tmean_current()), sp));
        s.eos.push_back(clim_eos);
      }
      out["spring"] = s;
    }
  }
  for (Layout l : {Layout::Raw, Layout::Wavelet}) {
    const std::string suffix = l == Layout::Wavelet ? "+wavelet" : "";
    if (fs::exists(linear_path(paths, l))) {
      const LinearModel m = LinearModel::load(linear_path(paths, l));
      ModelPredictions p;
      for (std::size_t i : rows) p.gcc.push_back(m.predict(flatten(ws.input(i, l))));
      from_gcc(p);
      out["linear" + suffix] = p;
    }
    if (fs::exists(ensemble_dir(paths, l) / "weights.json")) {
      const NeuralEnsemble e = load_ensemble(paths, l);
      ModelPredictions p;
      for (std::size_t i : rows) p.gcc.push_back(e.predict_gcc(ws.input(i, l), ws.fusion(i)));
      from_gcc(p);
      out["nn" + suffix] = p;
    }
  }
  return out;
}

void run_calibrate(const RunConfig& config, const RunPaths& paths, const StageOptions& options) {
  const Workspace ws(config, paths);
  const auto preds = predict_models(ws, ws.validation());
  if (preds.empty()) throw Error("no trained models in " + paths.models().string() + "; run 'phenoflux train' first",
                                 ErrorKind::MissingArtifact);
  std::vector<SeasonDates> observed;
  for (std::size_t i : ws.validation()) observed.push_back(ws.observed_dates(i));

  json j;
  for (const auto& name : kModelNames) {
    auto it = preds.find(name);
    if (it == preds.end()) continue;
    auto fit = [&](const std::vector<int>& raw, bool sos) {
      std::vector<double> r, o;
      for (std::size_t k = 0; k < raw.size(); ++k) {
        const auto& obs = sos ? observed[k].sos : observed[k].eos;
        if (!obs) continue;
        r.push_back(raw[k]);
        o.push_back(*obs);
      }
      const DateCalibration c = calibrate_dates(r, o);
      return json{{"slope", c.slope}, {"intercept", c.intercept}, {"degenerate", c.degenerate}, {"n", r.size()}};
    };
    j[name] = {{"sos", fit(it->second.sos, true)}, {"eos", fit(it->second.eos, false)}};
  }
  write_text(paths.models() / "calibration.json", j.dump(2) + "\n");
  say(options, "date calibration fitted on " + std::to_string(ws.validation().size()) + " validation site-years");
}

ResultsTable run_eval(const RunConfig& config, const RunPaths& paths, const StageOptions& options) {
  const Workspace ws(config, paths);
  const auto cal = load_calibration(paths);
  const auto& rows = ws.test();
  const auto preds = predict_models(ws, rows);

  EvaluationTruth truth;
  truth.climatology = load_climatology(paths).mean_gcc;
  for (std::size_t i : rows) {
    truth.gcc.push_back(ws.site_year(i).gcc);
    const auto d = ws.observed_dates(i);
    truth.sos.push_back(d.sos);
    truth.eos.push_back(d.eos);
  }

  std::vector<ModelEvaluation> models;
  std::ostringstream dates;
  dates << "model,site_id,year,sos,eos,observed_sos,observed_eos\n";
  for (const auto& name : kModelNames) {
    auto it = preds.find(name);
    if (it == preds.end()) continue;
    auto c = cal.find(name);
    if (c == cal.end())
      throw Error("no date calibration for model '" + name + "'; run 'phenoflux calibrate' again",
                  ErrorKind::MissingArtifact);
    ModelEvaluation m;
    m.name = name;
    m.gcc = it->second.gcc;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      m.sos.push_back(c->second.first.apply(it->second.sos[k]));
      m.eos.push_back(c->second.second.apply(it->second.eos[k]));
      const auto& sy = ws.site_year(rows[k]);
      dates << name << ',' << sy.site_id << ',' << sy.year << ',' << m.sos.back() << ',' << m.eos.back() << ',';
      if (truth.sos[k]) dates << *truth.sos[k];
      dates << ',';
      if (truth.eos[k]) dates << *truth.eos[k];
      dates << '\n';
    }
    models.push_back(std::move(m));
  }
  const ResultsTable table = results_table(models, truth);
  write_text(paths.reports() / "results.csv", table.to_csv());
  write_text(paths.reports() / "results.md",
             table.to_markdown() + "\nDate R2 values are pooled over all " + std::to_string(rows.size()) +
                 " test site-years. Best value per column in bold.\n");
  write_text(paths.reports() / "predicted_dates.csv", dates.str());
  say(options, "evaluated " + std::to_string(models.size()) + " models on " + std::to_string(rows.size()) +
                   " test site-years");
  return table;
}

void run_attribute(const RunConfig& config, const RunPaths& paths, const StageOptions& options) {
  const Workspace ws(config, paths);
  const NeuralEnsemble e = load_ensemble(paths, Layout::Wavelet);
  const Index scales = ws.scales(Layout::Wavelet);

  std::vector<std::size_t> rows;
  std::ostringstream excluded;
  for (std::size_t i : ws.test()) {
    const SeasonDates d = dates_of(e.predict_gcc(ws.input(i, Layout::Wavelet), ws.fusion(i)));
    if (d.sos && *d.sos >= config.attribution_min_sos) rows.push_back(i);
    else {
      const auto& sy = ws.site_year(i);
      say(options, "skipping " + sy.site_id + " " + std::to_string(sy.year) + ": predicted SoS before day " +
                       std::to_string(config.attribution_min_sos));
    }
  }
  if (rows.empty()) throw Error("every test site-year has predicted SoS before the attribution window", ErrorKind::Validation);

  std::vector<Matrix> inputs;
  std::vector<Vector> fusions;
  for (std::size_t i : rows) {
    inputs.push_back(ws.input(i, Layout::Wavelet));
    fusions.push_back(ws.fusion(i));
  }
  const auto members = e.member_pointers();
  std::vector<AttributionMap> maps(rows.size());
  parallel_for(rows.size(), config.jobs, [&](std::size_t k) {
    const ScalarHead head = soft_sos_head(members, e.weights, fusions[k], config.soft_sos_steepness);
    const Matrix baseline = Matrix::Zero(inputs[k].rows(), inputs[k].cols());
    maps[k] = integrated_gradients(head, inputs[k], baseline, config.ig_steps);
  });

  std::vector<Matrix> raw_maps;
  for (const auto& m : maps) raw_maps.push_back(m.values);
  std::vector<FilteredMap> filtered;
  std::vector<double> cutoffs;
  if (config.ig_pooled_cutoff) {
    const double c = random_walk_cutoff(raw_maps, scales, config.ig_cutoff_percentile);
    for (const auto& m : raw_maps) {
      filtered.push_back(filter_attributions(m, c));
      cutoffs.push_back(c);
    }
  } else {
    for (const auto& m : raw_maps) {
      const double c = random_walk_cutoff(std::span<const Matrix>(&m, 1), scales, config.ig_cutoff_percentile);
      filtered.push_back(filter_attributions(m, c));
      cutoffs.push_back(c);
    }
  }

  const auto names = input_variable_names();
  {
    std::ofstream os;
    const fs::path p = paths.reports() / "attributions.csv";
    fs::create_directories(p.parent_path());
    os.open(p, std::ios::binary);
    os << "site_id,year,variable,scale,day,value,filtered\n";
    char buf[64];
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& sy = ws.site_year(rows[k]);
      const Matrix& v = filtered[k].values;
      for (Index r = 0; r < v.rows(); ++r) {
        const std::string prefix =
            sy.site_id + ',' + std::to_string(sy.year) + ',' + names[static_cast<std::size_t>(r / scales)] + ',' +
            std::to_string(config.wavelet.scale_exponents[static_cast<std::size_t>(r % scales)]) + ',';
        for (Index d = 0; d < v.cols(); ++d) {
          std::snprintf(buf, sizeof(buf), "%.9g", maps[k].values(r, d));
          os << prefix << d - kYearDays + 1 << ',' << buf << ',' << (filtered[k].filtered(r, d) ? 1 : 0) << '\n';
        }
      }
    }
    if (!os) throw Error("cannot write " + p.string());
  }

  std::vector<Matrix> kept;
  for (const auto& f : filtered) kept.push_back(f.values);
  const ImportanceSummary summary = aggregate_importance(kept, scales, names);
  {
    std::ostringstream os;
    os << "rank,variable,mean,abs_mean";
    for (std::size_t i : rows) os << ',' << ws.site_year(i).site_id << '_' << ws.site_year(i).year;
    os << '\n';
    for (std::size_t v = 0; v < summary.variables.size(); ++v) {
      const auto& vi = summary.variables[v];
      os << v + 1 << ',' << vi.variable << ',' << num(vi.mean, "%.9g") << ',' << num(std::abs(vi.mean), "%.9g");
      for (double x : vi.per_site_year) os << ',' << num(x, "%.9g");
      os << '\n';
    }
    write_text(paths.reports() / "importance_by_variable.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "variable,scale,value\n";
    for (Index r = 0; r < summary.per_scale.rows(); ++r)
      for (Index s = 0; s < summary.per_scale.cols(); ++s)
        os << names[static_cast<std::size_t>(r)] << ',' << config.wavelet.scale_exponents[static_cast<std::size_t>(s)]
           << ',' << num(summary.per_scale(r, s), "%.9g") << '\n';
    write_text(paths.reports() / "importance_by_scale.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "day,value\n";
    for (Index d = 0; d < summary.per_day.size(); ++d)
      os << d - kYearDays + 1 << ',' << num(summary.per_day(d), "%.9g") << '\n';
    write_text(paths.reports() / "importance_by_day.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "site_id,year,output_delta,completeness_residual,cutoff,kept\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& sy = ws.site_year(rows[k]);
      os << sy.site_id << ',' << sy.year << ',' << num(maps[k].output_delta, "%.9g") << ','
         << num(maps[k].completeness_residual, "%.3e") << ',' << num(cutoffs[k], "%.9g") << ','
         << filtered[k].filtered.size() - filtered[k].filtered.count() << '\n';
    }
    write_text(paths.reports() / "attribution_summary.csv", os.str());
  }

  // linear importance at the configured day
  std::ostringstream lin;
  lin << "model,rank,variable,importance\n";
  bool any_linear = false;
  for (Layout l : {Layout::Raw, Layout::Wavelet}) {
    if (!fs::exists(linear_path(paths, l))) continue;
    any_linear = true;
    const LinearModel m = LinearModel::load(linear_path(paths, l));
    const Matrix X = design(ws, ws.train(), l);
    const Vector mean = X.colwise().mean();
    const Vector sd = ((X.rowwise() - mean.transpose()).array().square().colwise().sum() / static_cast<double>(X.rows()))
                          .sqrt()
                          .transpose();
    const auto ranked = linear_importance(m, sd, config.feature_doy);
    for (std::size_t r = 0; r < ranked.size(); ++r)
      lin << (l == Layout::Wavelet ? "linear+wavelet" : "linear") << ',' << r + 1 << ',' << ranked[r].name << ','
          << num(ranked[r].importance, "%.9g") << '\n';
  }
  if (any_linear) write_text(paths.reports() / "linear_importance.csv", lin.str());
  say(options, "attributions for " + std::to_string(rows.size()) + " site-years written");
}

std::vector<FeatureTestResult> run_feature_test(const RunConfig& config, const RunPaths& paths,
                                                const StageOptions& options) {
  const Workspace ws(config, paths);
  const NeuralEnsemble e = load_ensemble(paths, Layout::Wavelet);
  std::vector<double> pred, truth, conf;
  FeatureSet fsets;
  std::vector<double> cc, gc, gp, cp;
  for (std::size_t i : subset(ws, config.feature_test_subset)) {
    const auto obs = ws.observed_dates(i);
    if (!obs.sos) continue;
    const auto& sy = ws.site_year(i);
    const Vector g = e.predict_gcc(ws.input(i, Layout::Wavelet), ws.fusion(i));
    pred.push_back(soft_sos(g, config.soft_sos_steepness));
    truth.push_back(*obs.sos);
    conf.push_back(sy.normals.mean_annual_temp);
    const auto cur = degree_features(sy.met, config.feature_doy, YearOffset::Current, config.chill_start_prev_doy);
    const auto prev = degree_features(sy.met, config.feature_doy, YearOffset::Previous, config.chill_start_prev_doy);
    cc.push_back(cur.chill_days);
    gc.push_back(cur.gdd);
    gp.push_back(prev.gdd);
    cp.push_back(prev.chill_days);
  }
  auto vec = [](const std::vector<double>& v) { return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()))); };
  fsets.chill_current = vec(cc);
  fsets.gdd_current = vec(gc);
  fsets.gdd_previous = vec(gp);
  fsets.chill_previous = vec(cp);
  FeatureTestConfig ft = config.feature_test;
  ft.seed = config.seed;
  ft.jobs = config.jobs;
  const auto results = feature_use_report(vec(pred), fsets, vec(conf), vec(truth), ft);
  write_text(paths.reports() / "feature_use.csv", feature_use_csv(results));
  say(options, "feature-use tests on " + std::to_string(pred.size()) + " site-years (" + config.feature_test_subset + ")");
  return results;
}

void run_report(const RunConfig& config, const RunPaths& paths, const StageOptions& options) {
  std::ostringstream os;
  os << "# phenoflux report\n\n";
  auto section = [&](const std::string& title, const fs::path& p, const std::string& stage, bool csv) {
    os << "## " << title << "\n\n";
    if (!fs::exists(p)) {
      os << "(missing: run 'phenoflux " << stage << "')\n\n";
      return;
    }
    const std::string text = read_text(p);
    if (csv) os << "```\n" << text << "```\n\n";
    else os << text << '\n';
  };
  section("Results on the test site-years", paths.reports() / "results.md", "eval", false);
  section("Date calibration", paths.models() / "calibration.json", "calibrate", true);
  section("Feature use", paths.reports() / "feature_use.csv", "feature-test", true);
  section("Variable importance (integrated gradients)", paths.reports() / "importance_by_variable.csv", "attribute",
          true);
  section("Linear model importance (day " + std::to_string(config.feature_doy) + ")",
          paths.reports() / "linear_importance.csv", "attribute", true);
  section("Attribution completeness", paths.reports() / "attribution_summary.csv", "attribute", true);
  os << "## Configuration\n\n```\n" << config.to_text() << "```\n";
  if (!options.deterministic_output) os << "\nGenerated " << timestamp() << "\n";
  write_text(paths.reports() / "report.md", os.str());
  say(options, "report written to " + (paths.reports() / "report.md").string());
}

}  // namespace phenoflux
