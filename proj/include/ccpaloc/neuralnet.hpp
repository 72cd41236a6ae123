#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccpaloc/error.hpp"
#include "ccpaloc/rng.hpp"

namespace ccpaloc {

/// Dense row-major tensor used at the checkpoint boundary.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  int element_count() const;
};

/// Fixed topology: a stack of length-preserving 1-D convolutions (stride 1,
/// zero padding (k-1)/2, ReLU) followed by one linear layer and a sigmoid.
/// Channel widths and kernel sizes are configurable; the default matches the
/// localization network (input 1x54, conv 128/256/128/64, linear -> 20).
struct CnnArch {
  int input_len = 54;
  int n_outputs = 20;
  std::vector<int> channels{128, 256, 128, 64};
  std::vector<int> kernels{5, 3, 3, 3};

  int n_conv() const { return static_cast<int>(channels.size()); }
  int in_channels(int layer) const { return layer == 0 ? 1 : channels[static_cast<std::size_t>(layer - 1)]; }
  int pad(int layer) const { return (kernels[static_cast<std::size_t>(layer)] - 1) / 2; }
  int flat_dim() const { return channels.back() * input_len; }

  /// Offsets into the flat parameter vector.
  struct Block {
    int w_offset = 0, w_rows = 0, w_cols = 0;  // weight is (w_rows x w_cols), column-major
    int b_offset = 0, b_len = 0;
  };
  Block conv_block(int layer) const;
  Block linear_block() const;
  int param_count() const;

  void check() const;
  nlohmann::json to_json() const;
  static CnnArch from_json(const nlohmann::json& doc);
  bool operator==(const CnnArch&) const = default;
};

/// Model = architecture + one flat parameter vector (+ a fixed input
/// standardization learned from training data; identity by default).
struct CnnModel {
  CnnArch arch;
  Eigen::VectorXd params;
  Eigen::VectorXd input_mean;   // length input_len
  Eigen::VectorXd input_scale;  // length input_len, multiplies (z - mean)

  bool has_identity_normalization() const;
  void set_input_standardization(const Eigen::MatrixXd& x, double min_std = 1e-3);
};

/// Uniform +-sqrt(1/fan_in) initialization, seeded.
CnnModel make_cnn(const CnnArch& arch, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Layer primitives (batched, position-major activations: row b*T+t, column c).

/// out = conv(act) with kernel k, zero padding pad, stride 1. w is
/// (Cin*k x Cout) with row ic*k+j holding tap j of input channel ic; col, when
/// given, receives the im2col matrix for reuse in the backward pass.
void conv1d_forward(const Eigen::MatrixXd& act, int batch, int t_len, int k, int pad,
                    const Eigen::MatrixXd& w, const Eigen::VectorXd& b, Eigen::MatrixXd& out,
                    Eigen::MatrixXd* col);

/// Gradients given the cached im2col matrix and the upstream d_out.
void conv1d_backward(const Eigen::MatrixXd& col, const Eigen::MatrixXd& w, int batch, int t_len,
                     int k, int pad, const Eigen::MatrixXd& d_out, Eigen::MatrixXd& d_w,
                     Eigen::VectorXd& d_b, Eigen::MatrixXd* d_act);

/// Mean over samples of mean over outputs of binary cross-entropy;
/// predictions are clamped to [1e-7, 1 - 1e-7] before the logs.
double bce_loss(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y);

// ---------------------------------------------------------------------------
// Whole-network passes.

/// Probabilities for a batch (rows are samples of length input_len).
Eigen::MatrixXd cnn_forward(const CnnModel& model, const Eigen::MatrixXd& x);
/// Single-sample convenience.
Eigen::VectorXd cnn_forward(const CnnModel& model, const Eigen::VectorXd& z);

/// Training objective: BCE + (lambda/2)||w||^2.
double cnn_loss(const CnnModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                double lambda);

/// Reusable buffers for the fused forward/backward pass.
struct CnnWorkspace {
  std::vector<Eigen::MatrixXd> col, pre, act, d_buf;
  Eigen::MatrixXd flat, logits, probs, d_flat;
};

struct CnnGradient {
  Eigen::VectorXd grad;  // includes the lambda * w term
  double loss = 0.0;
};

/// Analytic gradients for the whole stack (conv / ReLU / linear / fused
/// sigmoid+BCE), averaged over the batch, plus weight decay.
CnnGradient cnn_loss_grad(const CnnModel& model, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& y, double lambda, CnnWorkspace& ws);

// ---------------------------------------------------------------------------
// Optimization.

struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;
  static AdamState zeros(Eigen::Index n);
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, double lr,
               double beta1, double beta2, double eps);

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // L2, enters the gradient
  int batch_size = 64;
  int epochs = 100;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  bool standardize_input = true;

  void check() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

/// Seeded mini-batch Adam training. When standardize_input is set and the
/// model still has the identity transform, per-channel standardization is
/// fitted on x first (fine-tuning an existing model keeps its transform).
TrainResult train(CnnModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                  const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints.

std::map<std::string, Tensor> named_tensors(const CnnModel& model);
void save_checkpoint(const CnnModel& model, const std::string& path,
                     const nlohmann::json& extra = nlohmann::json::object());
CnnModel load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr);

}  // namespace ccpaloc
