// Copyright 2026 The mbra2d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mbra2d/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mbra2d/rng.hpp"

namespace mbra2d {

namespace {

constexpr char kModelMagic[8] = {'M', '2', 'D', 'M', 'L', 'P', '1', '\n'};
constexpr double kStdFloor = 1e-8;

// Forward pass keeping every layer's activations for the backward sweep.
void forward_stack(const MlpModel& model, const Eigen::MatrixXd& xn,
                   std::vector<Eigen::MatrixXd>* activations) {
  activations->clear();
  activations->push_back(xn);
  const std::size_t layers = model.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z =
        (activations->back() * model.weights[l].transpose()).rowwise() +
        model.biases[l].transpose();
    if (l + 1 < layers) z = z.array().tanh();
    activations->push_back(std::move(z));
  }
}

}  // namespace

void AdamState::update(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
                       double lr) {
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
    t = 0;
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  params -= (lr / bc1) * m.cwiseQuotient(
                             ((v / bc2).cwiseSqrt().array() + epsilon).matrix());
}

Normalizer Normalizer::fit(const Eigen::MatrixXd& rows) {
  Normalizer n;
  n.mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - n.mean.transpose();
  n.std = (centered.array().square().colwise().mean()).sqrt();
  n.std = n.std.cwiseMax(kStdFloor);
  return n;
}

Normalizer Normalizer::identity(int dim) {
  Normalizer n;
  n.mean = Eigen::VectorXd::Zero(dim);
  n.std = Eigen::VectorXd::Ones(dim);
  return n;
}

Eigen::MatrixXd Normalizer::normalize(const Eigen::MatrixXd& rows) const {
  return (rows.rowwise() - mean.transpose()).array().rowwise() /
         std.transpose().array();
}

Eigen::MatrixXd Normalizer::denormalize(const Eigen::MatrixXd& rows) const {
  return (rows.array().rowwise() * std.transpose().array()).matrix().rowwise() +
         mean.transpose();
}

Eigen::VectorXd Normalizer::normalize_row(const Eigen::VectorXd& row) const {
  return (row - mean).cwiseQuotient(std);
}

Eigen::VectorXd Normalizer::denormalize_row(const Eigen::VectorXd& row) const {
  return row.cwiseProduct(std) + mean;
}

MlpModel MlpModel::create(int input_dim, const std::vector<int>& hidden,
                          int output_dim, std::uint64_t seed) {
  if (input_dim < 1 || output_dim < 1) {
    throw std::invalid_argument("MlpModel: dimensions must be positive");
  }
  MlpModel model;
  model.train_seed = seed;
  Rng rng(derive_seed(seed, {0x6d6c70}));
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output_dim);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    Eigen::MatrixXd w(out, in);
    const double scale = std::sqrt(1.0 / in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = scale * rng.normal();
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  model.in_norm = Normalizer::identity(input_dim);
  model.out_norm = Normalizer::identity(output_dim);
  return model;
}

std::vector<int> MlpModel::layer_sizes() const {
  std::vector<int> sizes;
  sizes.push_back(input_dim());
  for (const auto& w : weights) sizes.push_back(static_cast<int>(w.rows()));
  return sizes;
}

int MlpModel::parameter_count() const {
  int n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<int>(weights[l].size() + biases[l].size());
  }
  return n;
}

Eigen::VectorXd MlpModel::flatten_parameters() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.segment(at, weights[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(weights[l].data(), weights[l].size());
    at += weights[l].size();
    flat.segment(at, biases[l].size()) = biases[l];
    at += biases[l].size();
  }
  return flat;
}

void MlpModel::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("set_parameters: size mismatch");
  }
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::Map<Eigen::VectorXd>(weights[l].data(), weights[l].size()) =
        flat.segment(at, weights[l].size());
    at += weights[l].size();
    biases[l] = flat.segment(at, biases[l].size());
    at += biases[l].size();
  }
}

Eigen::VectorXd MlpModel::predict(const Eigen::VectorXd& raw_input) const {
  if (raw_input.size() != input_dim()) {
    throw std::invalid_argument("predict: input dimension mismatch");
  }
  const Eigen::MatrixXd xn = in_norm.normalize_row(raw_input).transpose();
  const Eigen::MatrixXd yn = mlp_forward(*this, xn);
  return out_norm.denormalize_row(yn.row(0).transpose());
}

Eigen::MatrixXd mlp_forward(const MlpModel& model, const Eigen::MatrixXd& xn) {
  if (xn.cols() != model.input_dim()) {
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  }
  std::vector<Eigen::MatrixXd> acts;
  forward_stack(model, xn, &acts);
  return acts.back();
}

double mlp_loss_gradient(const MlpModel& model, const Eigen::MatrixXd& xn,
                         const Eigen::MatrixXd& yn, Eigen::VectorXd* grad) {
  if (xn.rows() != yn.rows()) {
    throw std::invalid_argument("mlp_loss_gradient: batch size mismatch");
  }
  std::vector<Eigen::MatrixXd> acts;
  forward_stack(model, xn, &acts);
  const Eigen::MatrixXd diff = acts.back() - yn;
  const double denom = static_cast<double>(diff.size());
  const double loss = diff.array().square().sum() / denom;
  if (!grad) return loss;

  grad->resize(model.parameter_count());
  Eigen::MatrixXd delta = 2.0 / denom * diff;  // dL/dZ at the output layer

  // Walk layers in reverse, writing each block straight into the flat vector.
  std::vector<Eigen::Index> offsets(model.weights.size());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    offsets[l] = at;
    at += model.weights[l].size() + model.biases[l].size();
  }
  for (int l = static_cast<int>(model.weights.size()) - 1; l >= 0; --l) {
    const Eigen::MatrixXd dw = delta.transpose() * acts[static_cast<std::size_t>(l)];
    const Eigen::VectorXd db = delta.colwise().sum();
    grad->segment(offsets[static_cast<std::size_t>(l)], dw.size()) =
        Eigen::Map<const Eigen::VectorXd>(dw.data(), dw.size());
    grad->segment(offsets[static_cast<std::size_t>(l)] + dw.size(), db.size()) = db;
    if (l > 0) {
      // Through the tanh of the previous hidden layer.
      const Eigen::MatrixXd& h = acts[static_cast<std::size_t>(l)];
      delta = (delta * model.weights[static_cast<std::size_t>(l)]).array() *
              (1.0 - h.array().square());
    }
  }
  return loss;
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || patience < 1) {
    throw std::invalid_argument("TrainConfig: counts must be >= 1");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: val_fraction must be in (0, 1)");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning rate must be positive");
  }
}

MlpModel train_regressor(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                         const std::vector<int>& group_ids,
                         const TrainConfig& cfg,
                         std::vector<EpochMetrics>* metrics) {
  cfg.validate();
  const int n = static_cast<int>(x.rows());
  if (n == 0) throw std::invalid_argument("train_regressor: empty dataset");
  if (y.rows() != n || static_cast<int>(group_ids.size()) != n) {
    throw std::invalid_argument("train_regressor: row count mismatch");
  }

  Rng rng(derive_seed(cfg.seed, {0x747261696eULL}));

  // Split whole groups (trajectories) into train/val.
  std::vector<int> unique_groups(group_ids.begin(), group_ids.end());
  std::sort(unique_groups.begin(), unique_groups.end());
  unique_groups.erase(std::unique(unique_groups.begin(), unique_groups.end()),
                      unique_groups.end());
  std::vector<int> train_rows, val_rows;
  if (unique_groups.size() >= 2) {
    std::shuffle(unique_groups.begin(), unique_groups.end(), rng.engine());
    const std::size_t val_groups = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg.val_fraction * unique_groups.size()));
    std::set<int> val_set(unique_groups.begin(),
                          unique_groups.begin() + static_cast<long>(val_groups));
    for (int i = 0; i < n; ++i) {
      (val_set.count(group_ids[static_cast<std::size_t>(i)]) ? val_rows
                                                             : train_rows)
          .push_back(i);
    }
  } else {
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    const int val_count = std::max(1, static_cast<int>(cfg.val_fraction * n));
    val_rows.assign(rows.begin(), rows.begin() + val_count);
    train_rows.assign(rows.begin() + val_count, rows.end());
  }
  if (train_rows.empty()) {
    // Tiny datasets (e.g. the single-example overfit check) train on all rows.
    train_rows = val_rows;
  }

  auto gather = [](const Eigen::MatrixXd& m, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
  };
  const Eigen::MatrixXd x_train = gather(x, train_rows);
  const Eigen::MatrixXd y_train = gather(y, train_rows);
  const Eigen::MatrixXd x_val = gather(x, val_rows);
  const Eigen::MatrixXd y_val = gather(y, val_rows);

  MlpModel model = MlpModel::create(static_cast<int>(x.cols()), cfg.hidden,
                                    static_cast<int>(y.cols()), cfg.seed);
  model.in_norm = Normalizer::fit(x_train);
  model.out_norm = Normalizer::fit(y_train);

  const Eigen::MatrixXd xn_train = model.in_norm.normalize(x_train);
  const Eigen::MatrixXd yn_train = model.out_norm.normalize(y_train);
  const Eigen::MatrixXd xn_val = model.in_norm.normalize(x_val);
  const Eigen::MatrixXd yn_val = model.out_norm.normalize(y_val);

  // Fail fast if the analytic gradient disagrees with finite differences.
  {
    const int probe_rows = std::min<int>(4, static_cast<int>(xn_train.rows()));
    const Eigen::MatrixXd px = xn_train.topRows(probe_rows);
    const Eigen::MatrixXd py = yn_train.topRows(probe_rows);
    Eigen::VectorXd analytic;
    mlp_loss_gradient(model, px, py, &analytic);
    Eigen::VectorXd params = model.flatten_parameters();
    MlpModel probe = model;
    const double h = 1e-6;
    for (int check = 0; check < 16; ++check) {
      const int idx = static_cast<int>(rng.next_u64() % params.size());
      Eigen::VectorXd p = params;
      p(idx) += h;
      probe.set_parameters(p);
      const double up = mlp_loss_gradient(probe, px, py, nullptr);
      p(idx) -= 2.0 * h;
      probe.set_parameters(p);
      const double down = mlp_loss_gradient(probe, px, py, nullptr);
      const double fd = (up - down) / (2.0 * h);
      const double scale = std::max({1e-6, std::abs(fd), std::abs(analytic(idx))});
      if (std::abs(fd - analytic(idx)) / scale > 1e-4) {
        throw std::runtime_error("train_regressor: gradient check failed");
      }
    }
  }

  Eigen::VectorXd params = model.flatten_parameters();
  AdamState adam;
  Eigen::VectorXd grad;

  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params = params;
  int since_best = 0;
  std::vector<int> order(train_rows.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double train_loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Eigen::MatrixXd bx(static_cast<Eigen::Index>(stop - start), xn_train.cols());
      Eigen::MatrixXd by(static_cast<Eigen::Index>(stop - start), yn_train.cols());
      for (std::size_t i = start; i < stop; ++i) {
        bx.row(static_cast<Eigen::Index>(i - start)) = xn_train.row(order[i]);
        by.row(static_cast<Eigen::Index>(i - start)) = yn_train.row(order[i]);
      }
      model.set_parameters(params);
      const double loss = mlp_loss_gradient(model, bx, by, &grad);
      if (!std::isfinite(loss)) {
        throw std::runtime_error(
            "train_regressor: non-finite loss at epoch " + std::to_string(epoch));
      }
      adam.update(params, grad, cfg.learning_rate);
      train_loss_sum += loss;
      ++batches;
    }
    model.set_parameters(params);
    const double val_loss =
        mlp_loss_gradient(model, xn_val, yn_val, nullptr);

    if (metrics) {
      metrics->push_back({epoch, train_loss_sum / std::max(1, batches), val_loss});
    }
    if (val_loss < best_val - 1e-12) {
      best_val = val_loss;
      best_params = params;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }

  model.set_parameters(best_params);
  model.trained = true;
  return model;
}

void save_model(const MlpModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out.write(kModelMagic, sizeof(kModelMagic));
  const auto put_u64 = [&](std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  const auto put_vec = [&](const Eigen::VectorXd& v) {
    put_u64(static_cast<std::uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  put_u64(model.train_seed);
  put_u64(model.trained ? 1 : 0);
  const auto sizes = model.layer_sizes();
  put_u64(sizes.size());
  for (int s : sizes) put_u64(static_cast<std::uint64_t>(s));
  put_vec(model.in_norm.mean);
  put_vec(model.in_norm.std);
  put_vec(model.out_norm.mean);
  put_vec(model.out_norm.std);
  put_vec(model.flatten_parameters());
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  char magic[sizeof(kModelMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("load_model: bad header in " + path);
  }
  const auto get_u64 = [&]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("load_model: truncated file " + path);
    return v;
  };
  const auto get_vec = [&]() {
    const std::uint64_t size = get_u64();
    if (size > (1ULL << 32)) {
      throw std::runtime_error("load_model: corrupt vector size in " + path);
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(size));
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(size * sizeof(double)));
    if (!in) throw std::runtime_error("load_model: truncated file " + path);
    return v;
  };

  const std::uint64_t seed = get_u64();
  const bool trained = get_u64() != 0;
  const std::uint64_t layer_count = get_u64();
  if (layer_count < 2 || layer_count > 64) {
    throw std::runtime_error("load_model: corrupt layer count in " + path);
  }
  std::vector<int> sizes(static_cast<std::size_t>(layer_count));
  for (auto& s : sizes) s = static_cast<int>(get_u64());

  std::vector<int> hidden(sizes.begin() + 1, sizes.end() - 1);
  MlpModel model = MlpModel::create(sizes.front(), hidden, sizes.back(), seed);
  model.train_seed = seed;
  model.trained = trained;
  model.in_norm.mean = get_vec();
  model.in_norm.std = get_vec();
  model.out_norm.mean = get_vec();
  model.out_norm.std = get_vec();
  model.set_parameters(get_vec());
  return model;
}

void write_metrics(const std::vector<EpochMetrics>& metrics,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics: cannot open " + path);
  out << "epoch train_loss val_loss\n";
  char buf[96];
  for (const EpochMetrics& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%d %.9g %.9g\n", m.epoch, m.train_loss,
                  m.val_loss);
    out << buf;
  }
}

}  // namespace mbra2d
