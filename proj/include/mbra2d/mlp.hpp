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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mbra2d {

/// Adaptive-moment gradient step over a flat parameter vector.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);
};

/// Per-dimension standardization. std is floored so the map stays invertible.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  static Normalizer fit(const Eigen::MatrixXd& rows);
  static Normalizer identity(int dim);
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& rows) const;
  Eigen::VectorXd normalize_row(const Eigen::VectorXd& row) const;
  Eigen::VectorXd denormalize_row(const Eigen::VectorXd& row) const;
};

/// Dense feed-forward regressor: tanh hidden layers, linear output, trained
/// on standardized inputs and outputs.
struct MlpModel {
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: (out x in)
  std::vector<Eigen::VectorXd> biases;
  Normalizer in_norm;
  Normalizer out_norm;
  std::uint64_t train_seed = 0;
  bool trained = false;

  static MlpModel create(int input_dim, const std::vector<int>& hidden,
                         int output_dim, std::uint64_t seed);

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  std::vector<int> layer_sizes() const;

  int parameter_count() const;
  Eigen::VectorXd flatten_parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  /// Raw input -> raw output (normalization handled internally).
  Eigen::VectorXd predict(const Eigen::VectorXd& raw_input) const;
};

/// Forward pass over a batch of already-normalized rows (n x in) -> (n x out).
Eigen::MatrixXd mlp_forward(const MlpModel& model, const Eigen::MatrixXd& xn);

/// Mean-squared-error loss over normalized targets plus the gradient with
/// respect to the flattened parameters.
double mlp_loss_gradient(const MlpModel& model, const Eigen::MatrixXd& xn,
                         const Eigen::MatrixXd& yn, Eigen::VectorXd* grad);

struct TrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  double val_fraction = 0.2;  // fraction of trajectories held out
  int patience = 8;
  std::vector<int> hidden = {128, 128, 128};

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Deterministic minibatch training with an adaptive-moment optimizer and
/// early stopping on the validation split. The split is by group id (whole
/// trajectories) so frames never leak across it; with a single group it
/// falls back to a by-row split. Before the loop starts, the model's
/// gradient is validated against finite differences on a probe batch and
/// training aborts if they disagree.
MlpModel train_regressor(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                         const std::vector<int>& group_ids,
                         const TrainConfig& config,
                         std::vector<EpochMetrics>* metrics = nullptr);

/// Round-trips are bit-exact; the file carries a format tag, layer sizes,
/// normalization statistics, and the training seed.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

void write_metrics(const std::vector<EpochMetrics>& metrics,
                   const std::string& path);

}  // namespace mbra2d
