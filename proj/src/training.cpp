#include "phenoflux/training.hpp"

#include "phenoflux/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

namespace phenoflux {

double multitask_loss(const MultiTaskOutput& pred, const Labels& labels, double aux_weight, LossGradient* grad) {
  const Index days = labels.gcc.size();
  if (pred.gcc.size() != days) throw Error("multitask_loss: gcc length mismatch");
  if (labels.gcc_observed.size() != days) throw Error("multitask_loss: gcc mask length mismatch");

  Vector d_gcc = Vector::Zero(days);
  const Index n_gcc = labels.gcc_observed.count();
  double gcc_term = 0.0;
  if (n_gcc > 0) {
    for (Index d = 0; d < days; ++d) {
      if (!labels.gcc_observed(d)) continue;
      const double e = pred.gcc(d) - labels.gcc(d);
      gcc_term += e * e;
      d_gcc(d) = 2.0 * e / static_cast<double>(n_gcc);
    }
    gcc_term /= static_cast<double>(n_gcc);
  }

  int present = 0;
  double aux_sum = 0.0;
  Vector d_aux, d_kndvi;
  if (labels.aux) {
    if (labels.aux->size() != kAuxIndices * days || pred.aux.size() != labels.aux->size())
      throw Error("multitask_loss: aux length mismatch");
    d_aux = Vector::Zero(pred.aux.size());
    for (Index c = 0; c < kAuxIndices; ++c) {
      Index count = 0;
      double sse = 0.0;
      for (Index d = 0; d < days; ++d) {
        const double y = (*labels.aux)(c * days + d);
        if (!std::isnan(y)) {
          const double e = pred.aux(c * days + d) - y;
          sse += e * e;
          ++count;
        }
      }
      if (count == 0) continue;
      ++present;
      aux_sum += sse / static_cast<double>(count);
      for (Index d = 0; d < days; ++d) {
        const double y = (*labels.aux)(c * days + d);
        if (!std::isnan(y)) d_aux(c * days + d) = 2.0 * (pred.aux(c * days + d) - y) / static_cast<double>(count);
      }
    }
  }
  if (labels.kndvi) {
    if (labels.kndvi->size() != kKndviStats || pred.kndvi.size() != kKndviStats)
      throw Error("multitask_loss: kndvi length mismatch");
    d_kndvi = Vector::Zero(kKndviStats);
    for (Index k = 0; k < kKndviStats; ++k) {
      const double y = (*labels.kndvi)(k);
      if (std::isnan(y)) continue;
      const double e = pred.kndvi(k) - y;
      aux_sum += e * e;
      d_kndvi(k) = 2.0 * e;
      ++present;
    }
  }
  if (n_gcc == 0 && present == 0) throw Error("multitask_loss: all targets masked");

  const double scale = present > 0 ? aux_weight * static_cast<double>(kAuxIndices + kKndviStats) / present : 0.0;
  if (grad) {
    grad->d_gcc = std::move(d_gcc);
    grad->d_aux = d_aux.size() ? Vector(scale * d_aux) : Vector();
    grad->d_kndvi = d_kndvi.size() ? Vector(scale * d_kndvi) : Vector();
  }
  return gcc_term + scale * aux_sum;
}

std::string to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::Adam;
  if (s == "sgd") return Optimizer::Sgd;
  throw Error("unknown optimizer '" + s + "'", ErrorKind::Validation);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0", ErrorKind::Validation);
  if (!(aux_weight >= 0.0 && aux_weight <= 1.0)) throw Error("aux_weight must lie in [0, 1]", ErrorKind::Validation);
  if (batch_size < 1) throw Error("batch_size must be >= 1", ErrorKind::Validation);
  if (cosine_t0 < 1) throw Error("cosine_t0 must be >= 1", ErrorKind::Validation);
  if (early_stop_patience < 1) throw Error("early_stop_patience must be >= 1", ErrorKind::Validation);
  if (max_epochs < 1) throw Error("max_epochs must be >= 1", ErrorKind::Validation);
}

double cosine_lr(double lr, Index step, Index t0) {
  const double phase = static_cast<double>(step % t0) / static_cast<double>(t0);
  return lr * (1.0 + std::cos(std::numbers::pi * phase)) / 2.0;
}

bool EarlyStopping::update(double val_loss) {
  ++epochs_;
  last_improved_ = val_loss < best_;
  if (last_improved_) {
    best_ = val_loss;
    best_epoch_ = epochs_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

double dataset_loss(const Network& net, std::span<const TrainingSample> data, double aux_weight) {
  if (data.empty()) throw Error("dataset_loss on empty set");
  double total = 0.0;
  for (const auto& s : data) total += multitask_loss(net.forward(s.input, s.fusion), s.labels, aux_weight);
  return total / static_cast<double>(data.size());
}

TrainResult train(Network& net, std::span<const TrainingSample> train_set, std::span<const TrainingSample> val_set,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw Error("train: empty training set");
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const Index n_params = net.parameter_count();
  Vector grad(n_params), adam_m = Vector::Zero(n_params), adam_v = Vector::Zero(n_params);
  Vector best_params = net.parameters();
  EarlyStopping stopper(config.early_stop_patience);
  TrainResult result;
  Index step = 0;
  Network::Tape tape;
  LossGradient lg;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    double epoch_loss = 0.0;
    double lr_now = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      grad.setZero();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const TrainingSample& s = train_set[order[k]];
        const MultiTaskOutput out = net.forward(s.input, s.fusion, &tape);
        batch_loss += multitask_loss(out, s.labels, config.aux_weight, &lg);
        net.backward(tape, lg.d_gcc, lg.d_aux, lg.d_kndvi, &grad);
      }
      const double bs = static_cast<double>(end - start);
      grad /= bs;
      if (!std::isfinite(batch_loss) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", step " << step << " (lr " << lr_now
            << "); lower the learning rate or enable clip_norm";
        throw Error(msg.str(), ErrorKind::Numerical);
      }
      if (config.clip_norm > 0.0) {
        const double norm = grad.norm();
        if (norm > config.clip_norm) grad *= config.clip_norm / norm;
      }
      lr_now = cosine_lr(config.learning_rate, step, config.cosine_t0);
      Vector& p = net.parameters();
      if (config.optimizer == Optimizer::Sgd) {
        p -= lr_now * grad;
      } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        adam_m = b1 * adam_m + (1.0 - b1) * grad;
        adam_v = b2 * adam_v + (1.0 - b2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step + 1));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step + 1));
        p.array() -= lr_now * (adam_m.array() / c1) / ((adam_v.array() / c2).sqrt() + eps);
      }
      ++step;
      epoch_loss += batch_loss;
    }
    TrainLogRow row;
    row.epoch = epoch;
    row.step = step;
    row.lr = lr_now;
    row.train_loss = epoch_loss / static_cast<double>(train_set.size());
    row.val_loss = val_set.empty() ? row.train_loss : dataset_loss(net, val_set, config.aux_weight);
    if (!std::isfinite(row.val_loss))
      throw Error("non-finite validation loss at epoch " + std::to_string(epoch), ErrorKind::Numerical);
    result.log.push_back(row);
    const bool stop = stopper.update(row.val_loss);
    if (stopper.last_improved()) best_params = net.parameters();
    if (stop) break;
  }
  net.parameters() = best_params;
  result.best_val_loss = stopper.best();
  result.best_epoch = stopper.best_epoch();
  result.epochs_run = stopper.epochs();
  return result;
}

std::string training_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream os;
  os << "epoch,step,lr,train_loss,val_loss\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%ld,%.9g,%.9g,%.9g\n", r.epoch, static_cast<long>(r.step), r.lr, r.train_loss,
                  r.val_loss);
    os << buf;
  }
  return os.str();
}

Vector project_to_simplex(const Vector& v) {
  const Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

EnsembleWeights fit_ensemble_weights(const Matrix& P, const Vector& y, int max_iterations, double tolerance) {
  const Index m = P.cols();
  if (m == 0) throw Error("ensemble needs at least one member");
  if (P.rows() != y.size()) throw Error("ensemble: prediction / target length mismatch");
  const double n = static_cast<double>(P.rows());
  const Matrix Q = P.transpose() * P / n;
  const Vector c = P.transpose() * y / n;
  const double lipschitz = 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(Q, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  auto mse = [&](const Vector& w) { return (P * w - y).squaredNorm() / n; };

  EnsembleWeights out;
  Vector w = Vector::Constant(m, 1.0 / static_cast<double>(m));
  if (lipschitz > 0.0) {
    Vector z = w;
    double t = 1.0;
    for (int it = 1; it <= max_iterations; ++it) {
      const Vector grad = 2.0 * (Q * z - c);
      const Vector w_next = project_to_simplex(z - grad / lipschitz);
      const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      z = w_next + ((t - 1.0) / t_next) * (w_next - w);
      const double change = (w_next - w).norm();
      w = w_next;
      t = t_next;
      out.iterations = it;
      if (change < tolerance) break;
    }
  }
  // The simplex vertices are feasible too; never return worse than the best single member.
  double best = mse(w);
  for (Index k = 0; k < m; ++k) {
    const double e = (P.col(k) - y).squaredNorm() / n;
    if (e < best) {
      best = e;
      w = Vector::Unit(m, k);
    }
  }
  out.weights = w;
  out.validation_mse = best;
  return out;
}

int blocks_for_resnet_size(int size) {
  switch (size) {
    case 18: return 2;
    case 34: return 3;
    case 50: return 4;
    case 101: return 5;
    case 152: return 6;
    default: throw Error("unsupported resnet size " + std::to_string(size), ErrorKind::Validation);
  }
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
T uniform_int(std::mt19937_64& rng, T lo, T hi) {
  return lo + static_cast<T>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

}  // namespace

std::vector<Candidate> sample_candidates(const SearchSpace& space, int budget, std::uint64_t seed,
                                         const TrainConfig& base) {
  if (budget < 1) throw Error("search budget must be >= 1", ErrorKind::Validation);
  std::mt19937_64 rng(seed);
  std::vector<Candidate> out;
  for (int i = 0; i < budget; ++i) {
    Candidate c;
    c.train = base;
    c.train.batch_size = uniform_int(rng, space.batch_min, space.batch_max);
    c.train.learning_rate = space.lr_min + (space.lr_max - space.lr_min) * uniform01(rng);
    c.train.cosine_t0 = uniform_int(rng, space.t0_min, space.t0_max);
    c.train.early_stop_patience = uniform_int(rng, space.patience_min, space.patience_max);
    c.train.aux_weight = space.aux_min + (space.aux_max - space.aux_min) * uniform01(rng);
    c.train.optimizer = space.optimizers[rng() % space.optimizers.size()];
    c.resnet_size = space.resnet_sizes[rng() % space.resnet_sizes.size()];
    out.push_back(c);
  }
  return out;
}

SearchResult hyperparam_search(const SearchSpace& space, int budget, std::uint64_t seed,
                               const std::function<double(const Candidate&)>& evaluate, const TrainConfig& base) {
  SearchResult result;
  result.best_score = std::numeric_limits<double>::infinity();
  for (const auto& c : sample_candidates(space, budget, seed, base)) {
    double score = std::numeric_limits<double>::infinity();
    try {
      score = evaluate(c);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numerical) throw;
    }
    if (std::isnan(score)) score = std::numeric_limits<double>::infinity();
    result.scores.push_back(score);
    if (result.scores.size() == 1 || score < result.best_score) {
      result.best_score = score;
      result.best = c;
    }
  }
  return result;
}

namespace {

constexpr char kCheckpointMagic[6] = "PHXM1";

nlohmann::json config_json(const NeuralConfig& c) {
  return {{"input_rows", c.input_rows},
          {"input_days", c.input_days},
          {"channels", c.channels},
          {"kernel", c.kernel},
          {"stem_kernel_rows", c.stem_kernel_rows},
          {"stem_kernel_days", c.stem_kernel_days},
          {"stem_stride_rows", c.stem_stride_rows},
          {"stem_stride_days", c.stem_stride_days},
          {"hidden", c.hidden},
          {"fusion_dims", c.fusion_dims},
          {"gcc_outputs", c.gcc_outputs},
          {"aux_outputs", c.aux_outputs},
          {"kndvi_outputs", c.kndvi_outputs}};
}

NeuralConfig config_from_json(const nlohmann::json& j) {
  NeuralConfig c;
  c.input_rows = j.at("input_rows").get<Index>();
  c.input_days = j.at("input_days").get<Index>();
  c.channels = j.at("channels").get<std::vector<Index>>();
  c.kernel = j.at("kernel").get<Index>();
  c.stem_kernel_rows = j.at("stem_kernel_rows").get<Index>();
  c.stem_kernel_days = j.at("stem_kernel_days").get<Index>();
  c.stem_stride_rows = j.at("stem_stride_rows").get<Index>();
  c.stem_stride_days = j.at("stem_stride_days").get<Index>();
  c.hidden = j.at("hidden").get<Index>();
  c.fusion_dims = j.at("fusion_dims").get<Index>();
  c.gcc_outputs = j.at("gcc_outputs").get<Index>();
  c.aux_outputs = j.at("aux_outputs").get<Index>();
  c.kndvi_outputs = j.at("kndvi_outputs").get<Index>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& net, const CheckpointExtras& extras) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint " + path.string());
  io::put_magic(os, kCheckpointMagic);
  nlohmann::json meta = {{"network", config_json(net.config())},
                         {"input_layout", extras.input_layout},
                         {"best_val_loss", extras.best_val_loss}};
  io::put_string(os, meta.dump());
  io::put_matrix(os, net.parameters());
  io::put_matrix(os, extras.input_stats.mean);
  io::put_matrix(os, extras.input_stats.std);
  io::put_matrix(os, extras.fusion_stats.mean);
  io::put_matrix(os, extras.fusion_stats.std);
}

Network load_checkpoint(const std::filesystem::path& path, CheckpointExtras* extras) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("missing checkpoint " + path.string(), ErrorKind::MissingArtifact);
  io::expect_magic(is, kCheckpointMagic, path.string());
  const auto meta = nlohmann::json::parse(io::get_string(is));
  Vector params = io::get_matrix(is);
  Network net(config_from_json(meta.at("network")), std::move(params));
  CheckpointExtras local;
  CheckpointExtras& ex = extras ? *extras : local;
  ex.input_stats.mean = io::get_matrix(is);
  ex.input_stats.std = io::get_matrix(is);
  ex.fusion_stats.mean = io::get_matrix(is);
  ex.fusion_stats.std = io::get_matrix(is);
  ex.input_layout = meta.at("input_layout").get<std::string>();
  ex.best_val_loss = meta.at("best_val_loss").get<double>();
  return net;
}

}  // namespace phenoflux
