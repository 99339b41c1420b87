#include "phenoflux/linear_model.hpp"

#include "phenoflux/serialization.hpp"

#include <fstream>
#include <limits>
#include <map>
#include "json.hpp"

namespace phenoflux {

LinearModel::LinearModel(Matrix weights, Vector bias, double ridge)
    : weights_(std::move(weights)), bias_(std::move(bias)), ridge_(ridge) {}

LinearModel::LinearModel(Matrix support, Matrix dual, Vector bias, double ridge)
    : dual_form_(true), support_(std::move(support)), dual_(std::move(dual)), bias_(std::move(bias)), ridge_(ridge) {}

Vector LinearModel::weights_for(Index output) const {
  if (dual_form_) return support_.transpose() * dual_.col(output);
  return weights_.row(output).transpose();
}

Matrix LinearModel::weights() const { return dual_form_ ? Matrix(dual_.transpose() * support_) : weights_; }

Vector LinearModel::predict(const Vector& x) const {
  if (x.size() != features()) throw Error("linear model: feature count mismatch");
  if (dual_form_) return dual_.transpose() * (support_ * x) + bias_;
  return weights_ * x + bias_;
}

Matrix LinearModel::predict_rows(const Matrix& X) const {
  if (X.cols() != features()) throw Error("linear model: feature count mismatch");
  Matrix out = dual_form_ ? Matrix((X * support_.transpose()) * dual_) : Matrix(X * weights_.transpose());
  out.rowwise() += bias_.transpose();
  return out;
}

namespace {

constexpr char kLinearMagic[6] = "PHXL1";

}  // namespace

void LinearModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  io::put_magic(os, kLinearMagic);
  nlohmann::json meta = {{"ridge", ridge_},
                         {"dual", dual_form_},
                         {"layout", layout},
                         {"feature_groups", feature_groups},
                         {"features_per_group", features_per_group}};
  io::put_string(os, meta.dump());
  io::put_matrix(os, bias_);
  if (dual_form_) {
    io::put_matrix(os, support_);
    io::put_matrix(os, dual_);
  } else {
    io::put_matrix(os, weights_);
  }
}

LinearModel LinearModel::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("missing linear model " + path.string(), ErrorKind::MissingArtifact);
  io::expect_magic(is, kLinearMagic, path.string());
  const auto meta = nlohmann::json::parse(io::get_string(is));
  Vector bias = io::get_matrix(is);
  LinearModel m;
  if (meta.at("dual").get<bool>()) {
    Matrix support = io::get_matrix(is);
    Matrix dual = io::get_matrix(is);
    m = LinearModel(std::move(support), std::move(dual), std::move(bias), meta.at("ridge").get<double>());
  } else {
    Matrix w = io::get_matrix(is);
    m = LinearModel(std::move(w), std::move(bias), meta.at("ridge").get<double>());
  }
  m.layout = meta.at("layout").get<std::string>();
  m.feature_groups = meta.at("feature_groups").get<std::vector<std::string>>();
  m.features_per_group = meta.at("features_per_group").get<Index>();
  return m;
}

LinearModel fit_linear(const Matrix& X, const Matrix& Y, double ridge) {
  if (X.rows() != Y.rows()) throw Error("fit_linear: X and Y row counts differ");
  if (X.rows() == 0) throw Error("fit_linear: no samples");
  if (!(ridge >= 0.0)) throw Error("fit_linear: ridge must be >= 0");
  const Index n = X.rows();
  const Index p = X.cols();
  const Index q = Y.cols();

  std::vector<Index> active;
  for (Index j = 0; j < p; ++j)
    if (X.col(j).maxCoeff() > X.col(j).minCoeff()) active.push_back(j);
  const auto pa = static_cast<Index>(active.size());
  const bool dual = pa >= n;

  // Outputs sharing a missing-target pattern share one factorisation.
  std::map<std::vector<bool>, std::vector<Index>> groups;
  for (Index o = 0; o < q; ++o) {
    std::vector<bool> present(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) present[static_cast<std::size_t>(i)] = !std::isnan(Y(i, o));
    groups[present].push_back(o);
  }

  const Vector x_mean_all = X.colwise().mean().transpose();
  Matrix support;
  if (dual) {
    support = Matrix::Zero(n, p);
    for (Index j : active) support.col(j) = X.col(j).array() - x_mean_all(j);
  }
  Matrix weights = dual ? Matrix() : Matrix::Zero(q, p);
  Matrix dual_coef = dual ? Matrix::Zero(n, q) : Matrix();
  Vector bias = Vector::Zero(q);

  for (const auto& [present, outputs] : groups) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
      if (present[static_cast<std::size_t>(i)]) rows.push_back(i);
    const auto m = static_cast<Index>(rows.size());
    const auto k = static_cast<Index>(outputs.size());
    if (m == 0) {
      warn("fit_linear: an output has no observed target; weights and bias set to 0");
      continue;
    }
    Matrix Ys(m, k);
    for (Index r = 0; r < m; ++r)
      for (Index c = 0; c < k; ++c) Ys(r, c) = Y(rows[static_cast<std::size_t>(r)], outputs[static_cast<std::size_t>(c)]);
    const Vector y_mean = Ys.colwise().mean().transpose();
    Ys.rowwise() -= y_mean.transpose();

    if (pa == 0) {
      for (Index c = 0; c < k; ++c) bias(outputs[static_cast<std::size_t>(c)]) = y_mean(c);
      continue;
    }

    if (!dual) {
      Matrix Xs(m, pa);
      for (Index r = 0; r < m; ++r)
        for (Index j = 0; j < pa; ++j) Xs(r, j) = X(rows[static_cast<std::size_t>(r)], active[static_cast<std::size_t>(j)]);
      const Vector x_mean = Xs.colwise().mean().transpose();
      Xs.rowwise() -= x_mean.transpose();
      Matrix A = Xs.transpose() * Xs;
      A.diagonal().array() += ridge;
      Eigen::LDLT<Matrix> ldlt(A);
      if (ldlt.info() != Eigen::Success || (ridge == 0.0 && ldlt.rcond() < 1e-13))
        throw Error("fit_linear: singular normal matrix; use ridge > 0", ErrorKind::Numerical);
      const Matrix W = ldlt.solve(Xs.transpose() * Ys);  // pa x k
      for (Index c = 0; c < k; ++c) {
        const Index o = outputs[static_cast<std::size_t>(c)];
        for (Index j = 0; j < pa; ++j) weights(o, active[static_cast<std::size_t>(j)]) = W(j, c);
        bias(o) = y_mean(c) - W.col(c).dot(x_mean);
      }
    } else {
      Matrix S(m, p);
      Vector x_mean = Vector::Zero(p);
      for (Index r = 0; r < m; ++r) {
        S.row(r) = support.row(rows[static_cast<std::size_t>(r)]);
        x_mean += X.row(rows[static_cast<std::size_t>(r)]).transpose();
      }
      x_mean /= static_cast<double>(m);
      const Vector s_mean = S.colwise().mean().transpose();
      Matrix Sc = S.rowwise() - s_mean.transpose();
      Matrix K = Sc * Sc.transpose();
      K.diagonal().array() += ridge;
      Eigen::LDLT<Matrix> ldlt(K);
      if (ridge == 0.0 || ldlt.info() != Eigen::Success)
        throw Error("fit_linear: singular normal matrix; use ridge > 0", ErrorKind::Numerical);
      const Matrix alpha = ldlt.solve(Ys);  // m x k, columns sum to zero
      const Vector sx = support * x_mean;
      for (Index c = 0; c < k; ++c) {
        const Index o = outputs[static_cast<std::size_t>(c)];
        double wx = 0.0;
        for (Index r = 0; r < m; ++r) {
          const Index i = rows[static_cast<std::size_t>(r)];
          dual_coef(i, o) = alpha(r, c);
          wx += alpha(r, c) * sx(i);
        }
        bias(o) = y_mean(c) - wx;
      }
    }
  }
  if (dual) return LinearModel(std::move(support), std::move(dual_coef), std::move(bias), ridge);
  return LinearModel(std::move(weights), std::move(bias), ridge);
}

std::vector<double> default_ridge_grid() {
  std::vector<double> g;
  for (int e = -2; e <= 7; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

RidgeSelection select_ridge(const Matrix& X_train, const Matrix& Y_train, const Matrix& X_val, const Matrix& Y_val,
                            const std::vector<double>& grid) {
  if (grid.empty()) throw Error("ridge grid is empty");
  RidgeSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (double r : grid) {
    LinearModel m = fit_linear(X_train, Y_train, r);
    const Matrix pred = m.predict_rows(X_val);
    double sse = 0.0;
    double count = 0.0;
    for (Index i = 0; i < Y_val.rows(); ++i)
      for (Index j = 0; j < Y_val.cols(); ++j)
        if (!std::isnan(Y_val(i, j))) {
          const double e = pred(i, j) - Y_val(i, j);
          sse += e * e;
          count += 1.0;
        }
    const double mse = count > 0 ? sse / count : 0.0;
    sel.validation_mse.push_back(mse);
    if (mse < best) {
      best = mse;
      sel.model = std::move(m);
      sel.ridge = r;
    }
  }
  return sel;
}

}  // namespace phenoflux
