#include "phenoflux/pheno_metrics.hpp"

#include <cstdio>
#include <sstream>

namespace phenoflux {

SeasonDates extract_dates(const Vector& gcc) {
  const double hi = gcc.maxCoeff();
  const double lo = gcc.minCoeff();
  if (!(hi > lo)) throw Error("flat series");
  SeasonDates dates;
  dates.threshold = 0.5 * (hi + lo);
  const double thr = dates.threshold;
  const Index n = gcc.size();
  for (Index d = 1; d < n; ++d) {
    if (gcc(d - 1) < thr && gcc(d) >= thr) {
      const double doy = static_cast<double>(d) + (thr - gcc(d - 1)) / (gcc(d) - gcc(d - 1));
      dates.sos = static_cast<int>(std::ceil(doy - 1e-9));
      break;
    }
  }
  for (Index d = n - 1; d >= 1; --d) {
    if (gcc(d - 1) >= thr && gcc(d) < thr) {
      const double doy = static_cast<double>(d) + (gcc(d - 1) - thr) / (gcc(d - 1) - gcc(d));
      dates.eos = static_cast<int>(std::floor(doy + 1e-9));
      break;
    }
  }
  if (dates.sos && dates.eos && *dates.eos <= *dates.sos) dates.eos.reset();
  return dates;
}

Vector soft_sos_gradient(const Vector& gcc, double steepness) {
  Vector grad = Vector::Zero(gcc.size());
  for (int t = kSoftSosFirstDay; t <= kSoftSosLastDay; ++t) {
    const double s = sigmoid(steepness * (gcc(t - 1) - 0.5));
    grad(t - 1) = -steepness * s * (1.0 - s);
  }
  return grad;
}

namespace {

void check_pair(const Vector& pred, const Vector& obs) {
  if (pred.size() != obs.size()) throw Error("metric inputs differ in length");
  if (obs.size() == 0) throw Error("metric on empty sample");
}

}  // namespace

std::optional<double> r2(const Vector& pred, const Vector& obs) {
  check_pair(pred, obs);
  const double sst = (obs.array() - obs.mean()).square().sum();
  if (!(sst > 0.0)) return std::nullopt;
  return 1.0 - (pred - obs).squaredNorm() / sst;
}

double rmse(const Vector& pred, const Vector& obs) {
  check_pair(pred, obs);
  return std::sqrt((pred - obs).squaredNorm() / static_cast<double>(obs.size()));
}

Vector anomalies(const Vector& series, const Vector& climatology) {
  if (series.size() != climatology.size()) throw Error("anomalies: length mismatch with climatology");
  return series - climatology;
}

std::optional<double> r2_anomalies(const Vector& pred, const Vector& obs, const Vector& climatology) {
  check_pair(pred, obs);
  const Vector pa = anomalies(pred, climatology);
  const Vector oa = anomalies(obs, climatology);
  double sse = 0.0;
  double sst = 0.0;
  for (Index i = 0; i < oa.size(); ++i) {
    const double e = oa(i) - pa(i);
    sse += e * e;
    sst += oa(i) * oa(i);
  }
  if (!(sst > 0.0)) return std::nullopt;
  return 1.0 - sse / sst;
}

std::optional<double> MetricsRow::column(int i) const {
  switch (i) {
    case 0: return r2;
    case 1: return r2_anomalies;
    case 2: return rmse;
    case 3: return sos_r2;
    case 4: return sos_rmse;
    case 5: return eos_r2;
    case 6: return eos_rmse;
    default: throw Error("metrics column out of range");
  }
}

MetricsRow evaluate_model(const ModelEvaluation& model, const EvaluationTruth& truth) {
  const std::size_t n = truth.gcc.size();
  if (n == 0) throw Error("empty test set");
  if (model.sos.size() != n || model.eos.size() != n) throw Error("model '" + model.name + "' date count mismatch");
  MetricsRow row;
  if (!model.gcc.empty()) {
    if (model.gcc.size() != n) throw Error("model '" + model.name + "' gcc count mismatch");
    std::vector<double> p, o, c;
    for (std::size_t s = 0; s < n; ++s) {
      const auto& obs = truth.gcc[s];
      for (Index d = 0; d < obs.values.size(); ++d) {
        if (!obs.observed(d)) continue;
        p.push_back(model.gcc[s](d));
        o.push_back(obs.values(d));
        c.push_back(truth.climatology(d));
      }
    }
    const Vector pv = Eigen::Map<const Vector>(p.data(), static_cast<Index>(p.size()));
    const Vector ov = Eigen::Map<const Vector>(o.data(), static_cast<Index>(o.size()));
    const Vector cv = Eigen::Map<const Vector>(c.data(), static_cast<Index>(c.size()));
    row.r2 = r2(pv, ov);
    row.rmse = rmse(pv, ov);
    row.r2_anomalies = r2_anomalies(pv, ov, cv);
  }
  auto date_metrics = [&](const std::vector<int>& pred, const std::vector<std::optional<int>>& obs,
                          std::optional<double>& r2_out, std::optional<double>& rmse_out) {
    std::vector<double> p, o;
    for (std::size_t s = 0; s < n; ++s) {
      if (!obs[s]) continue;
      p.push_back(pred[s]);
      o.push_back(*obs[s]);
    }
    if (p.empty()) return;
    const Vector pv = Eigen::Map<const Vector>(p.data(), static_cast<Index>(p.size()));
    const Vector ov = Eigen::Map<const Vector>(o.data(), static_cast<Index>(o.size()));
    r2_out = r2(pv, ov);
    rmse_out = rmse(pv, ov);
  };
  date_metrics(model.sos, truth.sos, row.sos_r2, row.sos_rmse);
  date_metrics(model.eos, truth.eos, row.eos_r2, row.eos_rmse);
  return row;
}

std::vector<std::vector<bool>> ResultsTable::best() const {
  std::vector<std::vector<bool>> flags(MetricsRow::kColumns, std::vector<bool>(rows.size(), false));
  for (int c = 0; c < MetricsRow::kColumns; ++c) {
    const bool higher_is_better = c == 0 || c == 1 || c == 3 || c == 5;
    std::optional<double> best_value;
    for (const auto& row : rows) {
      const auto v = row.column(c);
      if (!v) continue;
      if (!best_value || (higher_is_better ? *v > *best_value : *v < *best_value)) best_value = v;
    }
    if (!best_value) continue;
    for (std::size_t m = 0; m < rows.size(); ++m) {
      const auto v = rows[m].column(c);
      flags[static_cast<std::size_t>(c)][m] = v && *v == *best_value;
    }
  }
  return flags;
}

namespace {

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string ResultsTable::to_csv() const {
  std::ostringstream os;
  os << "model,r2,r2_anom,rmse,sos_r2,sos_rmse,eos_r2,eos_rmse\n";
  for (std::size_t m = 0; m < rows.size(); ++m) {
    os << models[m];
    for (int c = 0; c < MetricsRow::kColumns; ++c) {
      os << ',';
      if (auto v = rows[m].column(c)) os << fmt(*v, 6);
    }
    os << '\n';
  }
  return os.str();
}

std::string ResultsTable::to_markdown() const {
  static constexpr int kDigits[MetricsRow::kColumns] = {3, 3, 3, 3, 1, 3, 1};
  const auto flags = best();
  std::ostringstream os;
  os << "| model | r2 | r2_anom | rmse | sos_r2 | sos_rmse | eos_r2 | eos_rmse |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  for (std::size_t m = 0; m < rows.size(); ++m) {
    os << "| " << models[m];
    for (int c = 0; c < MetricsRow::kColumns; ++c) {
      os << " | ";
      const auto v = rows[m].column(c);
      if (!v) {
        os << "--";
        continue;
      }
      const std::string text = fmt(*v, kDigits[c]);
      if (flags[static_cast<std::size_t>(c)][m]) os << "**" << text << "**";
      else os << text;
    }
    os << " |\n";
  }
  return os.str();
}

ResultsTable results_table(const std::vector<ModelEvaluation>& models, const EvaluationTruth& truth) {
  if (truth.gcc.empty()) throw Error("empty test set");
  ResultsTable table;
  for (const auto& model : models) {
    table.models.push_back(model.name);
    table.rows.push_back(evaluate_model(model, truth));
  }
  return table;
}

}  // namespace phenoflux
