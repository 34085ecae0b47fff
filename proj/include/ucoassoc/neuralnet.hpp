#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ucoassoc/linalg.hpp"
#include "ucoassoc/rng.hpp"

namespace ucoassoc::nn {

inline constexpr std::size_t kHiddenLayers = 6;
inline constexpr std::size_t kClasses = 2;
inline constexpr int kNoMatchClass = 0;
inline constexpr int kMatchClass = 1;
inline constexpr double kBatchNormEpsilon = 1e-8;
inline constexpr double kBatchNormMomentum = 0.1;

/// Trainable tensors of the network; also the shape of gradients and Adam moments.
/// Layer k maps rows of width dims[k] to width dims[k+1] (weights are in x out).
struct ParameterSet {
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;
  std::vector<RowVector> gammas;  // hidden layers only
  std::vector<RowVector> betas;

  ParameterSet zeros_like() const;
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::size_t scalar_count() const;
};

/// Activations kept by a training-mode forward pass for backpropagation.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;  // kHiddenLayers + 1 entries
  std::vector<Matrix> pre_activation;
  std::vector<Matrix> normalized;
  std::vector<RowVector> inv_std;
  Matrix log_probs;
  bool valid = false;
};

/// Fully connected classifier: six hidden blocks of affine -> ReLU -> batch norm,
/// then an affine output layer with log-softmax over {no_match, match}.
class Mlp {
 public:
  Mlp() = default;
  /// Zero weights and biases, gamma = 1, beta = 0, running mean 0 and variance 1.
  explicit Mlp(std::vector<std::size_t> layer_dims);
  /// He-scaled Gaussian weights.
  static Mlp he_initialized(std::vector<std::size_t> layer_dims, Rng& rng);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::vector<RowVector>& running_mean() { return running_mean_; }
  const std::vector<RowVector>& running_mean() const { return running_mean_; }
  std::vector<RowVector>& running_var() { return running_var_; }
  const std::vector<RowVector>& running_var() const { return running_var_; }

  /// Batch statistics; updates the running statistics and fills `cache`.
  Matrix forward_train(const Matrix& batch, ForwardCache& cache);
  /// Running statistics; pure.
  Matrix forward_eval(const Matrix& batch) const;

  /// Gradient of the mean negative log-likelihood over the cached batch.
  ParameterSet backward(const ForwardCache& cache, std::span<const int> labels) const;

  /// d log p(target_class) / d input for each row, evaluated in eval mode.
  Matrix input_gradient(const Matrix& batch, int target_class) const;

  bool finalized() const { return finalized_; }
  void finalize() { finalized_ = true; }

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  void check_width(const Matrix& batch) const;

  std::vector<std::size_t> dims_;
  ParameterSet params_;
  std::vector<RowVector> running_mean_;
  std::vector<RowVector> running_var_;
  bool finalized_ = false;
};

/// Mean negative log-likelihood of the true labels.
double nll_loss(const Matrix& log_probs, std::span<const int> labels);

double accuracy(const Matrix& log_probs, std::span<const int> labels);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const ParameterSet& shape, AdamConfig cfg);

  /// One bias-corrected update. Rejects non-finite gradients before touching
  /// any parameter.
  void step(ParameterSet& params, const ParameterSet& grads, double learning_rate);
  std::uint64_t steps() const { return step_; }

 private:
  AdamConfig cfg_;
  ParameterSet first_moment_;
  ParameterSet second_moment_;
  std::uint64_t step_ = 0;
};

struct TrainConfig {
  std::vector<std::size_t> hidden = {64, 32, 32, 16, 16, 8};
  double learning_rate = 1e-4;
  double lr_floor = 1e-6;
  double lr_decay = 0.1;
  int plateau_patience = 5;
  std::size_t batch_size = 256;
  int epochs = 100;
  AdamConfig adam;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  std::optional<double> test_acc;
  double seconds = 0.0;
};

struct TrainResult {
  Mlp model;
  TrainReport report;
};

/// Mini-batch Adam with plateau learning-rate decay. Returns the model from the
/// epoch with the best validation accuracy, finalized.
TrainResult train(const Matrix& train_x, std::span<const int> train_y, const Matrix& val_x,
                  std::span<const int> val_y, const TrainConfig& cfg);

/// exp(log p(match)) per row. Requires a finalized model.
Eigen::VectorXd predict_match_prob(const Mlp& model, const Matrix& batch);

void save_model(const std::filesystem::path& path, const Mlp& model);
Mlp load_model(const std::filesystem::path& path);

void write_report_csv(const std::filesystem::path& path, const TrainReport& report);

}  // namespace ucoassoc::nn
