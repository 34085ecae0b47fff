#include "ucoassoc/neuralnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "ucoassoc/binary_io.hpp"
#include "ucoassoc/error.hpp"

namespace ucoassoc::nn {
namespace {

constexpr char kModelMagic[4] = {'U', 'C', 'O', 'M'};
constexpr std::uint32_t kModelVersion = 1;

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

void check_labels(std::span<const int> labels, Eigen::Index rows) {
  require(static_cast<Eigen::Index>(labels.size()) == rows, ErrorKind::kShape,
          "label count does not match batch rows");
  for (int y : labels) {
    require(y == kNoMatchClass || y == kMatchClass, ErrorKind::kDomain, "label must be 0 or 1");
  }
}

void check_dims(const std::vector<std::size_t>& dims) {
  require(dims.size() == kHiddenLayers + 2, ErrorKind::kShape,
          "network needs exactly " + std::to_string(kHiddenLayers) + " hidden layers");
  require(dims.back() == kClasses, ErrorKind::kShape, "output width must be 2");
  for (auto d : dims) require(d >= 1, ErrorKind::kShape, "layer widths must be positive");
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet z;
  for (const auto& w : weights) z.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : biases) z.biases.push_back(RowVector::Zero(b.size()));
  for (const auto& g : gammas) z.gammas.push_back(RowVector::Zero(g.size()));
  for (const auto& b : betas) z.betas.push_back(RowVector::Zero(b.size()));
  return z;
}

std::vector<std::span<double>> ParameterSet::tensors() {
  std::vector<std::span<double>> out;
  for (auto& w : weights) out.emplace_back(w.data(), static_cast<std::size_t>(w.size()));
  for (auto& b : biases) out.emplace_back(b.data(), static_cast<std::size_t>(b.size()));
  for (auto& g : gammas) out.emplace_back(g.data(), static_cast<std::size_t>(g.size()));
  for (auto& b : betas) out.emplace_back(b.data(), static_cast<std::size_t>(b.size()));
  return out;
}

std::vector<std::span<const double>> ParameterSet::tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& t : const_cast<ParameterSet*>(this)->tensors()) out.emplace_back(t);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

Mlp::Mlp(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
  check_dims(dims_);
  for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
    const auto in = static_cast<Eigen::Index>(dims_[k]);
    const auto out = static_cast<Eigen::Index>(dims_[k + 1]);
    params_.weights.push_back(Matrix::Zero(in, out));
    params_.biases.push_back(RowVector::Zero(out));
    if (k < kHiddenLayers) {
      params_.gammas.push_back(RowVector::Ones(out));
      params_.betas.push_back(RowVector::Zero(out));
      running_mean_.push_back(RowVector::Zero(out));
      running_var_.push_back(RowVector::Ones(out));
    }
  }
}

Mlp Mlp::he_initialized(std::vector<std::size_t> layer_dims, Rng& rng) {
  Mlp m(std::move(layer_dims));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& w : m.params_.weights) {
    const double scale = std::sqrt(2.0 / static_cast<double>(w.rows()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * gauss(rng);
  }
  return m;
}

void Mlp::check_width(const Matrix& batch) const {
  require(!dims_.empty(), ErrorKind::kState, "network has no layers");
  require(static_cast<std::size_t>(batch.cols()) == dims_.front(), ErrorKind::kShape,
          "input width " + std::to_string(batch.cols()) + " does not match network input " +
              std::to_string(dims_.front()));
}

Matrix Mlp::forward_train(const Matrix& batch, ForwardCache& cache) {
  check_width(batch);
  const auto n = batch.rows();
  require(n >= 2, ErrorKind::kShape, "training-mode batch norm needs at least 2 rows");
  const double inv_n = 1.0 / static_cast<double>(n);

  cache = ForwardCache{};
  Matrix h = batch;
  for (std::size_t k = 0; k < kHiddenLayers; ++k) {
    Matrix z = h * params_.weights[k];
    z.rowwise() += params_.biases[k];
    Matrix a = z.cwiseMax(0.0);
    const RowVector mean = a.colwise().sum() * inv_n;
    a.rowwise() -= mean;
    const RowVector var = a.array().square().colwise().sum().matrix() * inv_n;
    const RowVector inv_std = (var.array() + kBatchNormEpsilon).rsqrt().matrix();
    Matrix xhat = a.array().rowwise() * inv_std.array();
    Matrix y = xhat.array().rowwise() * params_.gammas[k].array();
    y.rowwise() += params_.betas[k];

    const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
    running_mean_[k] = (1.0 - kBatchNormMomentum) * running_mean_[k] + kBatchNormMomentum * mean;
    running_var_[k] =
        (1.0 - kBatchNormMomentum) * running_var_[k] + (kBatchNormMomentum * unbias) * var;

    cache.layer_inputs.push_back(std::move(h));
    cache.pre_activation.push_back(std::move(z));
    cache.normalized.push_back(std::move(xhat));
    cache.inv_std.push_back(inv_std);
    h = std::move(y);
  }
  Matrix logits = h * params_.weights.back();
  logits.rowwise() += params_.biases.back();
  cache.layer_inputs.push_back(std::move(h));
  cache.log_probs = log_softmax(logits);
  cache.valid = true;
  return cache.log_probs;
}

Matrix Mlp::forward_eval(const Matrix& batch) const {
  check_width(batch);
  Matrix h;
  for (std::size_t k = 0; k < kHiddenLayers; ++k) {
    const RowVector scale =
        params_.gammas[k].array() * (running_var_[k].array() + kBatchNormEpsilon).rsqrt();
    const RowVector shift = params_.betas[k].array() - running_mean_[k].array() * scale.array();
    Matrix z = (k == 0 ? batch : h) * params_.weights[k];
    z.rowwise() += params_.biases[k];
    h = z.cwiseMax(0.0).array().rowwise() * scale.array();
    h.rowwise() += shift;
  }
  Matrix logits = h * params_.weights.back();
  logits.rowwise() += params_.biases.back();
  return log_softmax(logits);
}

ParameterSet Mlp::backward(const ForwardCache& cache, std::span<const int> labels) const {
  require(cache.valid, ErrorKind::kState, "backward called without a training forward pass");
  const auto n = cache.log_probs.rows();
  check_labels(labels, n);
  const double inv_n = 1.0 / static_cast<double>(n);

  ParameterSet g = params_.zeros_like();
  Matrix d = cache.log_probs.array().exp();
  for (Eigen::Index i = 0; i < n; ++i) d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  d *= inv_n;

  g.weights.back().noalias() = cache.layer_inputs.back().transpose() * d;
  g.biases.back() = d.colwise().sum();
  Matrix dh = d * params_.weights.back().transpose();

  for (std::size_t k = kHiddenLayers; k-- > 0;) {
    const Matrix& xhat = cache.normalized[k];
    g.gammas[k] = (dh.array() * xhat.array()).colwise().sum();
    g.betas[k] = dh.colwise().sum();
    const Matrix dxhat = dh.array().rowwise() * params_.gammas[k].array();
    const RowVector sum_dxhat = dxhat.colwise().sum();
    const RowVector sum_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().sum();
    Matrix dz = dxhat * static_cast<double>(n);
    dz.rowwise() -= sum_dxhat;
    dz.array() -= xhat.array().rowwise() * sum_dxhat_xhat.array();
    dz.array().rowwise() *= (cache.inv_std[k] * inv_n).array();
    dz.array() *= (cache.pre_activation[k].array() > 0.0).cast<double>();

    g.weights[k].noalias() = cache.layer_inputs[k].transpose() * dz;
    g.biases[k] = dz.colwise().sum();
    if (k > 0) dh = dz * params_.weights[k].transpose();
  }
  return g;
}

Matrix Mlp::input_gradient(const Matrix& batch, int target_class) const {
  require(target_class == kNoMatchClass || target_class == kMatchClass, ErrorKind::kDomain,
          "target class must be 0 or 1");
  check_width(batch);
  std::vector<Matrix> active;
  std::vector<RowVector> scales;
  Matrix h = batch;
  for (std::size_t k = 0; k < kHiddenLayers; ++k) {
    const RowVector scale =
        params_.gammas[k].array() * (running_var_[k].array() + kBatchNormEpsilon).rsqrt();
    const RowVector shift = params_.betas[k].array() - running_mean_[k].array() * scale.array();
    Matrix z = h * params_.weights[k];
    z.rowwise() += params_.biases[k];
    active.push_back((z.array() > 0.0).cast<double>());
    h = z.cwiseMax(0.0).array().rowwise() * scale.array();
    h.rowwise() += shift;
    scales.push_back(scale);
  }
  Matrix logits = h * params_.weights.back();
  logits.rowwise() += params_.biases.back();

  // d log p_t / d logits = onehot(t) - softmax
  Matrix d = -log_softmax(logits).array().exp();
  d.col(target_class).array() += 1.0;
  Matrix dh = d * params_.weights.back().transpose();
  for (std::size_t k = kHiddenLayers; k-- > 0;) {
    dh.array().rowwise() *= scales[k].array();
    dh.array() *= active[k].array();
    dh = dh * params_.weights[k].transpose();
  }
  return dh;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.dims_ != b.dims_) return false;
  const auto ta = a.params_.tensors();
  const auto tb = b.params_.tensors();
  for (std::size_t k = 0; k < ta.size(); ++k) {
    if (!std::equal(ta[k].begin(), ta[k].end(), tb[k].begin())) return false;
  }
  return a.running_mean_ == b.running_mean_ && a.running_var_ == b.running_var_;
}

double nll_loss(const Matrix& log_probs, std::span<const int> labels) {
  check_labels(labels, log_probs.rows());
  require(log_probs.rows() > 0, ErrorKind::kShape, "loss of an empty batch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < log_probs.rows(); ++i) {
    sum -= log_probs(i, labels[static_cast<std::size_t>(i)]);
  }
  return sum / static_cast<double>(log_probs.rows());
}

double accuracy(const Matrix& log_probs, std::span<const int> labels) {
  check_labels(labels, log_probs.rows());
  if (log_probs.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < log_probs.rows(); ++i) {
    const int predicted = log_probs(i, kMatchClass) > log_probs(i, kNoMatchClass) ? kMatchClass
                                                                                   : kNoMatchClass;
    correct += predicted == labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(correct) / static_cast<double>(log_probs.rows());
}

AdamOptimizer::AdamOptimizer(const ParameterSet& shape, AdamConfig cfg)
    : cfg_(cfg), first_moment_(shape.zeros_like()), second_moment_(shape.zeros_like()) {}

void AdamOptimizer::step(ParameterSet& params, const ParameterSet& grads, double learning_rate) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = first_moment_.tensors();
  auto v = second_moment_.tensors();
  require(p.size() == g.size() && p.size() == m.size(), ErrorKind::kShape,
          "gradient does not match parameter layout");
  for (std::size_t t = 0; t < g.size(); ++t) {
    require(g[t].size() == p[t].size(), ErrorKind::kShape, "gradient tensor size mismatch");
    for (double x : g[t]) {
      if (!std::isfinite(x)) fail(ErrorKind::kDivergence, "non-finite gradient");
    }
  }

  ++step_;
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      m[t][i] = b1 * m[t][i] + (1.0 - b1) * g[t][i];
      v[t][i] = b2 * v[t][i] + (1.0 - b2) * g[t][i] * g[t][i];
      const double m_hat = m[t][i] / c1;
      const double v_hat = v[t][i] / c2;
      p[t][i] -= learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  require(hidden.size() == kHiddenLayers, ErrorKind::kConfig,
          "exactly " + std::to_string(kHiddenLayers) + " hidden widths are required");
  require(lr_floor > 0.0 && lr_floor <= learning_rate, ErrorKind::kConfig,
          "need 0 < lr_floor <= learning_rate");
  require(lr_decay > 0.0 && lr_decay < 1.0, ErrorKind::kConfig, "lr_decay must lie in (0, 1)");
  require(plateau_patience >= 1, ErrorKind::kConfig, "plateau patience must be >= 1");
  require(batch_size >= 2, ErrorKind::kConfig, "batch size must be >= 2");
  require(epochs >= 1, ErrorKind::kConfig, "epochs must be >= 1");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
              adam.epsilon > 0.0,
          ErrorKind::kConfig, "invalid Adam constants");
}

TrainResult train(const Matrix& train_x, std::span<const int> train_y, const Matrix& val_x,
                  std::span<const int> val_y, const TrainConfig& cfg) {
  cfg.validate();
  check_labels(train_y, train_x.rows());
  check_labels(val_y, val_x.rows());
  require(train_x.rows() >= 2 && val_x.rows() >= 1, ErrorKind::kInput,
          "training and validation sets must be non-empty");
  const auto positives = std::count(train_y.begin(), train_y.end(), kMatchClass);
  require(2 * static_cast<std::size_t>(positives) == train_y.size(), ErrorKind::kInput,
          "training labels must be balanced");

  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> dims{static_cast<std::size_t>(train_x.cols())};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(kClasses);

  Rng init_rng = make_rng(cfg.seed, 0);
  Rng shuffle_rng = make_rng(cfg.seed, 1);
  Mlp model = Mlp::he_initialized(dims, init_rng);
  AdamOptimizer adam(model.params(), cfg.adam);

  TrainResult result;
  result.model = model;
  result.report.best_epoch = 0;
  result.report.best_val_acc = -1.0;

  std::vector<std::size_t> order(static_cast<std::size_t>(train_x.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  double lr = cfg.learning_rate;
  int since_improvement = 0;
  ForwardCache cache;
  std::vector<int> batch_labels;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    double correct = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      if (end - begin < 2) break;
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Matrix xb = gather_rows(train_x, rows);
      batch_labels.clear();
      for (auto r : rows) batch_labels.push_back(train_y[r]);

      const Matrix log_probs = model.forward_train(xb, cache);
      const double loss = nll_loss(log_probs, batch_labels);
      if (!std::isfinite(loss)) {
        fail(ErrorKind::kDivergence, "loss became non-finite in epoch " + std::to_string(epoch) +
                                         " at batch offset " + std::to_string(begin));
      }
      const auto nb = static_cast<double>(rows.size());
      loss_sum += loss * nb;
      correct += accuracy(log_probs, batch_labels) * nb;
      seen += rows.size();
      adam.step(model.params(), model.backward(cache, batch_labels), lr);
    }

    const double val_acc = accuracy(model.forward_eval(val_x), val_y);
    result.report.epochs.push_back({epoch, loss_sum / static_cast<double>(seen),
                                    correct / static_cast<double>(seen), val_acc, lr});
    if (val_acc > result.report.best_val_acc) {
      result.report.best_val_acc = val_acc;
      result.report.best_epoch = epoch;
      result.model = model;
      since_improvement = 0;
    } else if (++since_improvement >= cfg.plateau_patience) {
      lr = std::max(lr * cfg.lr_decay, cfg.lr_floor);
      since_improvement = 0;
    }
  }

  result.model.finalize();
  result.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

Eigen::VectorXd predict_match_prob(const Mlp& model, const Matrix& batch) {
  require(model.finalized(), ErrorKind::kState, "model is not finalized");
  return model.forward_eval(batch).col(kMatchClass).array().exp();
}

void save_model(const std::filesystem::path& path, const Mlp& model) {
  require(model.finalized(), ErrorKind::kState, "only finalized models can be saved");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  const auto& dims = model.layer_dims();
  binary::put_bytes(os, kModelMagic, 4);
  binary::put<std::uint32_t>(os, kModelVersion);
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size() - 1));
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    binary::put<std::uint64_t>(os, dims[k]);
    binary::put<std::uint64_t>(os, dims[k + 1]);
  }
  auto put_vec = [&](const RowVector& v) {
    binary::put_bytes(os, v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
  };
  const auto& p = model.params();
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    binary::put_bytes(os, p.weights[k].data(),
                      static_cast<std::size_t>(p.weights[k].size()) * sizeof(double));
    put_vec(p.biases[k]);
    if (k < kHiddenLayers) {
      put_vec(p.gammas[k]);
      put_vec(p.betas[k]);
      put_vec(model.running_mean()[k]);
      put_vec(model.running_var()[k]);
    }
  }
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

Mlp load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kIo, "cannot read " + path.string());
  binary::Reader in(is, path.string());
  char magic[4];
  in.get_bytes(magic, 4);
  require(std::equal(magic, magic + 4, kModelMagic), ErrorKind::kFormat,
          path.string() + ": not a model file");
  require(in.get<std::uint32_t>() == kModelVersion, ErrorKind::kFormat,
          path.string() + ": unsupported model version");
  const auto layers = in.get<std::uint32_t>();
  require(layers == kHiddenLayers + 1, ErrorKind::kFormat, path.string() + ": bad layer count");
  std::vector<std::size_t> dims;
  for (std::uint32_t k = 0; k < layers; ++k) {
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    require(rows >= 1 && cols >= 1 && rows < (1u << 24) && cols < (1u << 24), ErrorKind::kFormat,
            path.string() + ": implausible layer shape");
    if (k == 0) dims.push_back(rows);
    require(dims.back() == rows, ErrorKind::kFormat, path.string() + ": layer shapes do not chain");
    dims.push_back(cols);
  }
  require(dims.back() == kClasses, ErrorKind::kFormat, path.string() + ": output width must be 2");

  Mlp model(dims);
  auto get_vec = [&](RowVector& v) {
    in.get_bytes(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
  };
  auto& p = model.params();
  for (std::size_t k = 0; k < layers; ++k) {
    in.get_bytes(p.weights[k].data(), static_cast<std::size_t>(p.weights[k].size()) * sizeof(double));
    get_vec(p.biases[k]);
    if (k < kHiddenLayers) {
      get_vec(p.gammas[k]);
      get_vec(p.betas[k]);
      get_vec(model.running_mean()[k]);
      get_vec(model.running_var()[k]);
      require((model.running_var()[k].array() > 0.0).all(), ErrorKind::kFormat,
              path.string() + ": running variance must be positive");
    }
  }
  in.expect_end();
  model.finalize();
  return model;
}

void write_report_csv(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write " + path.string());
  os << "epoch,train_loss,train_acc,val_acc\n";
  char buf[128];
  for (const auto& e : report.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.train_acc,
                  e.val_acc);
    os << buf;
  }
  require(os.good(), ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace ucoassoc::nn
