#include "ccpaloc/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ccpaloc {

using nlohmann::json;

int Tensor::element_count() const {
  int n = 1;
  for (int s : shape) n *= s;
  return n;
}

// ---------------------------------------------------------------------------
// Architecture / parameter layout

void CnnArch::check() const {
  if (input_len < 1 || n_outputs < 1) fail(ErrorCode::InvalidConfig, "bad network dimensions");
  if (channels.size() != kernels.size() || channels.empty())
    fail(ErrorCode::InvalidConfig, "channel and kernel lists must align");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] < 1) fail(ErrorCode::InvalidConfig, "channel widths must be positive");
    if (kernels[i] < 1 || kernels[i] % 2 == 0)
      fail(ErrorCode::InvalidConfig, "kernels must be odd so (k-1)/2 padding preserves length");
  }
}

CnnArch::Block CnnArch::conv_block(int layer) const {
  Block blk;
  int offset = 0;
  for (int i = 0; i <= layer; ++i) {
    blk.w_rows = in_channels(i) * kernels[static_cast<std::size_t>(i)];
    blk.w_cols = channels[static_cast<std::size_t>(i)];
    blk.b_len = channels[static_cast<std::size_t>(i)];
    blk.w_offset = offset;
    blk.b_offset = offset + blk.w_rows * blk.w_cols;
    offset = blk.b_offset + blk.b_len;
  }
  return blk;
}

CnnArch::Block CnnArch::linear_block() const {
  const Block last = conv_block(n_conv() - 1);
  Block blk;
  blk.w_rows = flat_dim();
  blk.w_cols = n_outputs;
  blk.w_offset = last.b_offset + last.b_len;
  blk.b_offset = blk.w_offset + blk.w_rows * blk.w_cols;
  blk.b_len = n_outputs;
  return blk;
}

int CnnArch::param_count() const {
  const Block lin = linear_block();
  return lin.b_offset + lin.b_len;
}

json CnnArch::to_json() const {
  return json{{"input_len", input_len},
              {"n_outputs", n_outputs},
              {"channels", channels},
              {"kernels", kernels}};
}

CnnArch CnnArch::from_json(const json& doc) {
  CnnArch arch;
  try {
    arch.input_len = doc.at("input_len").get<int>();
    arch.n_outputs = doc.at("n_outputs").get<int>();
    arch.channels = doc.at("channels").get<std::vector<int>>();
    arch.kernels = doc.at("kernels").get<std::vector<int>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("bad architecture: ") + e.what());
  }
  arch.check();
  return arch;
}

bool CnnModel::has_identity_normalization() const {
  return input_mean.isZero(0.0) && (input_scale.array() == 1.0).all();
}

void CnnModel::set_input_standardization(const Eigen::MatrixXd& x, double min_std) {
  if (x.cols() != arch.input_len) fail(ErrorCode::ShapeMismatch, "input width != input_len");
  if (x.rows() < 2) fail(ErrorCode::InvalidConfig, "standardization needs at least 2 samples");
  input_mean = x.colwise().mean();
  const Eigen::ArrayXd var =
      (x.rowwise() - input_mean.transpose()).array().square().colwise().sum() /
      static_cast<double>(x.rows() - 1);
  input_scale = (var.sqrt().max(min_std)).inverse().matrix();
}

namespace {

using MapMat = Eigen::Map<const Eigen::MatrixXd>;
using MapVec = Eigen::Map<const Eigen::VectorXd>;
using MutMat = Eigen::Map<Eigen::MatrixXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

MapMat weight_of(const Eigen::VectorXd& p, const CnnArch::Block& blk) {
  return MapMat(p.data() + blk.w_offset, blk.w_rows, blk.w_cols);
}
MapVec bias_of(const Eigen::VectorXd& p, const CnnArch::Block& blk) {
  return MapVec(p.data() + blk.b_offset, blk.b_len);
}
MutMat weight_of(Eigen::VectorXd& p, const CnnArch::Block& blk) {
  return MutMat(p.data() + blk.w_offset, blk.w_rows, blk.w_cols);
}
MutVec bias_of(Eigen::VectorXd& p, const CnnArch::Block& blk) {
  return MutVec(p.data() + blk.b_offset, blk.b_len);
}

}  // namespace

CnnModel make_cnn(const CnnArch& arch, std::uint64_t seed) {
  arch.check();
  CnnModel model;
  model.arch = arch;
  model.params.resize(arch.param_count());
  model.input_mean = Eigen::VectorXd::Zero(arch.input_len);
  model.input_scale = Eigen::VectorXd::Ones(arch.input_len);

  auto fill = [](MutMat w, MutVec b, double bound, Rng& rng) {
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-bound, bound);
  };
  for (int layer = 0; layer < arch.n_conv(); ++layer) {
    Rng rng(Rng::derive(seed, 0x1A5EULL + static_cast<std::uint64_t>(layer)));
    const CnnArch::Block blk = arch.conv_block(layer);
    fill(weight_of(model.params, blk), bias_of(model.params, blk),
         std::sqrt(1.0 / blk.w_rows), rng);
  }
  Rng rng(Rng::derive(seed, 0xF1A7ULL));
  const CnnArch::Block lin = arch.linear_block();
  fill(weight_of(model.params, lin), bias_of(model.params, lin), std::sqrt(1.0 / lin.w_rows), rng);
  return model;
}

// ---------------------------------------------------------------------------
// Layer primitives

void conv1d_forward(const Eigen::MatrixXd& act, int batch, int t_len, int k, int pad,
                    const Eigen::MatrixXd& w, const Eigen::VectorXd& b, Eigen::MatrixXd& out,
                    Eigen::MatrixXd* col_out) {
  const int cin = static_cast<int>(act.cols());
  if (act.rows() != static_cast<Eigen::Index>(batch) * t_len)
    fail(ErrorCode::ShapeMismatch, "activation rows != batch * length");
  if (w.rows() != static_cast<Eigen::Index>(cin) * k)
    fail(ErrorCode::ShapeMismatch, "conv weight rows != Cin * k");

  Eigen::MatrixXd local_col;
  Eigen::MatrixXd& col = col_out ? *col_out : local_col;
  col.setZero(static_cast<Eigen::Index>(batch) * t_len, static_cast<Eigen::Index>(cin) * k);
  // col(b*T + t, ic*k + j) = act(b*T + t + j - pad, ic), zero outside the sample.
  for (int ic = 0; ic < cin; ++ic) {
    for (int j = 0; j < k; ++j) {
      const int shift = j - pad;
      const int t_begin = std::max(0, -shift);
      const int t_end = std::min(t_len, t_len - shift);
      if (t_begin >= t_end) continue;
      const int len = t_end - t_begin;
      for (int bi = 0; bi < batch; ++bi) {
        col.col(static_cast<Eigen::Index>(ic) * k + j)
            .segment(static_cast<Eigen::Index>(bi) * t_len + t_begin, len) =
            act.col(ic).segment(static_cast<Eigen::Index>(bi) * t_len + t_begin + shift, len);
      }
    }
  }
  out.noalias() = col * w;
  out.rowwise() += b.transpose();
}

void conv1d_backward(const Eigen::MatrixXd& col, const Eigen::MatrixXd& w, int batch, int t_len,
                     int k, int pad, const Eigen::MatrixXd& d_out, Eigen::MatrixXd& d_w,
                     Eigen::VectorXd& d_b, Eigen::MatrixXd* d_act) {
  d_w.noalias() = col.transpose() * d_out;
  d_b = d_out.colwise().sum();
  if (!d_act) return;
  const int cin = static_cast<int>(w.rows()) / k;
  Eigen::MatrixXd d_col;
  d_col.noalias() = d_out * w.transpose();
  d_act->setZero(static_cast<Eigen::Index>(batch) * t_len, cin);
  // Transpose of im2col: scatter-add each kernel tap back to its input slot.
  for (int ic = 0; ic < cin; ++ic) {
    for (int j = 0; j < k; ++j) {
      const int shift = j - pad;
      const int t_begin = std::max(0, -shift);
      const int t_end = std::min(t_len, t_len - shift);
      if (t_begin >= t_end) continue;
      const int len = t_end - t_begin;
      for (int bi = 0; bi < batch; ++bi) {
        d_act->col(ic).segment(static_cast<Eigen::Index>(bi) * t_len + t_begin + shift, len) +=
            d_col.col(static_cast<Eigen::Index>(ic) * k + j)
                .segment(static_cast<Eigen::Index>(bi) * t_len + t_begin, len);
      }
    }
  }
}

double bce_loss(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y) {
  if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols())
    fail(ErrorCode::ShapeMismatch, "prediction and label shapes differ");
  constexpr double kEps = 1e-7;
  const Eigen::ArrayXXd p = y_hat.array().min(1.0 - kEps).max(kEps);
  const Eigen::ArrayXXd term = y.array() * p.log() + (1.0 - y.array()) * (1.0 - p).log();
  return -term.mean();
}

// ---------------------------------------------------------------------------
// Whole-network passes

namespace {

// Shared forward walk. With `ws` non-null the im2col and pre-activation
// buffers are kept for the backward pass.
void forward_impl(const CnnModel& model, const Eigen::MatrixXd& x, CnnWorkspace* ws,
                  Eigen::MatrixXd& probs_out) {
  const CnnArch& arch = model.arch;
  if (x.cols() != arch.input_len) fail(ErrorCode::ShapeMismatch, "input width != input_len");
  const int batch = static_cast<int>(x.rows());
  const int t_len = arch.input_len;

  CnnWorkspace local;
  CnnWorkspace& w = ws ? *ws : local;
  w.col.resize(static_cast<std::size_t>(arch.n_conv()));
  w.pre.resize(static_cast<std::size_t>(arch.n_conv()));
  w.act.resize(static_cast<std::size_t>(arch.n_conv()) + 1);

  // Standardized input, laid out position-major: row b*T + t, single channel.
  Eigen::MatrixXd& a0 = w.act[0];
  a0.resize(static_cast<Eigen::Index>(batch) * t_len, 1);
  for (int bi = 0; bi < batch; ++bi)
    a0.col(0).segment(static_cast<Eigen::Index>(bi) * t_len, t_len) =
        ((x.row(bi).transpose() - model.input_mean).cwiseProduct(model.input_scale));

  for (int layer = 0; layer < arch.n_conv(); ++layer) {
    const CnnArch::Block blk = arch.conv_block(layer);
    conv1d_forward(w.act[static_cast<std::size_t>(layer)], batch, t_len,
                   arch.kernels[static_cast<std::size_t>(layer)], arch.pad(layer),
                   weight_of(model.params, blk), bias_of(model.params, blk),
                   w.pre[static_cast<std::size_t>(layer)],
                   &w.col[static_cast<std::size_t>(layer)]);
    w.act[static_cast<std::size_t>(layer) + 1] =
        w.pre[static_cast<std::size_t>(layer)].cwiseMax(0.0);  // ReLU
  }

  // Flatten each sample's (T x C) block row-major: index t * C + c.
  const int c_last = arch.channels.back();
  w.flat.resize(batch, arch.flat_dim());
  const Eigen::MatrixXd& last = w.act[static_cast<std::size_t>(arch.n_conv())];
  for (int bi = 0; bi < batch; ++bi) {
    for (int t = 0; t < t_len; ++t)
      w.flat.row(bi).segment(static_cast<Eigen::Index>(t) * c_last, c_last) =
          last.row(static_cast<Eigen::Index>(bi) * t_len + t);
  }

  const CnnArch::Block lin = arch.linear_block();
  w.logits.noalias() = w.flat * weight_of(model.params, lin);
  w.logits.rowwise() += bias_of(model.params, lin).transpose();
  probs_out = (1.0 + (-w.logits.array()).exp()).inverse();
}

}  // namespace

Eigen::MatrixXd cnn_forward(const CnnModel& model, const Eigen::MatrixXd& x) {
  // Chunked to bound im2col memory on large batches.
  constexpr int kChunk = 512;
  const int rows = static_cast<int>(x.rows());
  if (rows <= kChunk) {
    Eigen::MatrixXd probs;
    forward_impl(model, x, nullptr, probs);
    return probs;
  }
  Eigen::MatrixXd probs(rows, model.arch.n_outputs);
  for (int begin = 0; begin < rows; begin += kChunk) {
    const int len = std::min(kChunk, rows - begin);
    Eigen::MatrixXd part;
    forward_impl(model, x.middleRows(begin, len), nullptr, part);
    probs.middleRows(begin, len) = part;
  }
  return probs;
}

Eigen::VectorXd cnn_forward(const CnnModel& model, const Eigen::VectorXd& z) {
  Eigen::MatrixXd probs;
  forward_impl(model, z.transpose(), nullptr, probs);
  return probs.row(0).transpose();
}

double cnn_loss(const CnnModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                double lambda) {
  Eigen::MatrixXd probs;
  forward_impl(model, x, nullptr, probs);
  return bce_loss(probs, y) + 0.5 * lambda * model.params.squaredNorm();
}

CnnGradient cnn_loss_grad(const CnnModel& model, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& y, double lambda, CnnWorkspace& ws) {
  const CnnArch& arch = model.arch;
  if (y.rows() != x.rows() || y.cols() != arch.n_outputs)
    fail(ErrorCode::ShapeMismatch, "label shape mismatch");
  const int batch = static_cast<int>(x.rows());
  const int t_len = arch.input_len;

  forward_impl(model, x, &ws, ws.probs);

  CnnGradient result;
  result.loss = bce_loss(ws.probs, y) + 0.5 * lambda * model.params.squaredNorm();
  result.grad.setZero(model.params.size());

  // Fused sigmoid + BCE: d(loss)/d(logit) = (p - y) / (B * n_out).
  const double scale = 1.0 / (static_cast<double>(batch) * arch.n_outputs);
  Eigen::MatrixXd d_logits = (ws.probs - y) * scale;

  const CnnArch::Block lin = arch.linear_block();
  weight_of(result.grad, lin).noalias() = ws.flat.transpose() * d_logits;
  bias_of(result.grad, lin) = d_logits.colwise().sum();
  ws.d_flat.noalias() = d_logits * weight_of(model.params, lin).transpose();

  // Un-flatten back to position-major.
  const int c_last = arch.channels.back();
  Eigen::MatrixXd d_act(static_cast<Eigen::Index>(batch) * t_len, c_last);
  for (int bi = 0; bi < batch; ++bi)
    for (int t = 0; t < t_len; ++t)
      d_act.row(static_cast<Eigen::Index>(bi) * t_len + t) =
          ws.d_flat.row(bi).segment(static_cast<Eigen::Index>(t) * c_last, c_last);

  for (int layer = arch.n_conv() - 1; layer >= 0; --layer) {
    // ReLU mask on the pre-activation.
    d_act = d_act.cwiseProduct(
        (ws.pre[static_cast<std::size_t>(layer)].array() > 0.0).cast<double>().matrix());
    const CnnArch::Block blk = arch.conv_block(layer);
    Eigen::MatrixXd d_w;
    Eigen::VectorXd d_b;
    Eigen::MatrixXd d_prev;
    conv1d_backward(ws.col[static_cast<std::size_t>(layer)], weight_of(model.params, blk), batch,
                    t_len, arch.kernels[static_cast<std::size_t>(layer)], arch.pad(layer), d_act,
                    d_w, d_b, layer > 0 ? &d_prev : nullptr);
    weight_of(result.grad, blk) = d_w;
    bias_of(result.grad, blk) = d_b;
    if (layer > 0) d_act = std::move(d_prev);
  }

  result.grad += lambda * model.params;
  return result;
}

// ---------------------------------------------------------------------------
// Optimization

AdamState AdamState::zeros(Eigen::Index n) {
  return AdamState{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  if (grad.size() != params.size() || state.m.size() != params.size())
    fail(ErrorCode::ShapeMismatch, "optimizer state shape mismatch");
  state.t += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double mc = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double vc = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  params.array() -=
      lr * (state.m.array() / mc) / ((state.v.array() / vc).sqrt() + eps);
}

void TrainConfig::check() const {
  if (!(lr >= 0)) fail(ErrorCode::InvalidConfig, "learning rate must be >= 0");
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
    fail(ErrorCode::InvalidConfig, "betas must be in (0,1)");
  if (batch_size < 1) fail(ErrorCode::InvalidConfig, "batch size must be >= 1");
  if (epochs < 0) fail(ErrorCode::InvalidConfig, "epochs must be >= 0");
  if (!(weight_decay >= 0)) fail(ErrorCode::InvalidConfig, "weight decay must be >= 0");
}

json TrainConfig::to_json() const {
  return json{{"lr", lr},
              {"beta1", beta1},
              {"beta2", beta2},
              {"eps", eps},
              {"weight_decay", weight_decay},
              {"batch_size", batch_size},
              {"epochs", epochs},
              {"seed", seed},
              {"threshold", threshold},
              {"standardize_input", standardize_input}};
}

TrainConfig TrainConfig::from_json(const json& doc) {
  TrainConfig cfg;
  try {
    cfg.lr = doc.at("lr").get<double>();
    cfg.beta1 = doc.at("beta1").get<double>();
    cfg.beta2 = doc.at("beta2").get<double>();
    cfg.eps = doc.at("eps").get<double>();
    cfg.weight_decay = doc.at("weight_decay").get<double>();
    cfg.batch_size = doc.at("batch_size").get<int>();
    cfg.epochs = doc.at("epochs").get<int>();
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    cfg.threshold = doc.at("threshold").get<double>();
    cfg.standardize_input = doc.at("standardize_input").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("bad train config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

TrainResult train(CnnModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                  const TrainConfig& cfg) {
  cfg.check();
  if (x.rows() == 0) fail(ErrorCode::InvalidConfig, "empty training set");
  if (x.rows() != y.rows()) fail(ErrorCode::ShapeMismatch, "sample and label counts differ");
  if (cfg.standardize_input && model.has_identity_normalization() && x.rows() >= 2)
    model.set_input_standardization(x);

  const int n = static_cast<int>(x.rows());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  AdamState state = AdamState::zeros(model.params.size());
  CnnWorkspace ws;
  TrainResult result;
  Eigen::MatrixXd xb, yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::derive(cfg.seed, 0xE70CULL + static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
      const int j = rng.uniform_int(0, i);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    double loss_sum = 0.0;
    for (int begin = 0; begin < n; begin += cfg.batch_size) {
      const int len = std::min(cfg.batch_size, n - begin);
      xb.resize(len, x.cols());
      yb.resize(len, y.cols());
      for (int i = 0; i < len; ++i) {
        xb.row(i) = x.row(order[static_cast<std::size_t>(begin + i)]);
        yb.row(i) = y.row(order[static_cast<std::size_t>(begin + i)]);
      }
      const CnnGradient g = cnn_loss_grad(model, xb, yb, cfg.weight_decay, ws);
      adam_step(model.params, g.grad, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
      loss_sum += g.loss * len;
    }
    result.epoch_loss.push_back(loss_sum / n);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::map<std::string, Tensor> named_tensors(const CnnModel& model) {
  std::map<std::string, Tensor> tensors;
  auto add = [&](const std::string& name, const CnnArch::Block& blk) {
    Tensor w;
    w.shape = {blk.w_rows, blk.w_cols};
    w.data.assign(model.params.data() + blk.w_offset,
                  model.params.data() + blk.w_offset + blk.w_rows * blk.w_cols);
    tensors[name + ".weight"] = std::move(w);
    Tensor b;
    b.shape = {blk.b_len};
    b.data.assign(model.params.data() + blk.b_offset,
                  model.params.data() + blk.b_offset + blk.b_len);
    tensors[name + ".bias"] = std::move(b);
  };
  for (int layer = 0; layer < model.arch.n_conv(); ++layer)
    add("conv" + std::to_string(layer + 1), model.arch.conv_block(layer));
  add("fc", model.arch.linear_block());
  return tensors;
}

void save_checkpoint(const CnnModel& model, const std::string& path, const json& extra) {
  json doc;
  doc["schema"] = "ccpaloc.checkpoint.v1";
  doc["arch"] = model.arch.to_json();
  doc["input_mean"] = std::vector<double>(model.input_mean.data(),
                                          model.input_mean.data() + model.input_mean.size());
  doc["input_scale"] = std::vector<double>(model.input_scale.data(),
                                           model.input_scale.data() + model.input_scale.size());
  json tensors = json::object();
  for (const auto& [name, tensor] : named_tensors(model))
    tensors[name] = json{{"shape", tensor.shape}, {"data", tensor.data}};
  doc["tensors"] = std::move(tensors);
  doc["extra"] = extra;

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write checkpoint " + path);
  out << doc.dump() << "\n";
}

CnnModel load_checkpoint(const std::string& path, json* extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open checkpoint " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("bad checkpoint: ") + e.what());
  }
  if (!doc.contains("schema") || doc["schema"] != "ccpaloc.checkpoint.v1")
    fail(ErrorCode::SchemaMismatch, "unsupported checkpoint schema");

  CnnModel model;
  try {
    model.arch = CnnArch::from_json(doc.at("arch"));
    model.params.resize(model.arch.param_count());
    const auto mean = doc.at("input_mean").get<std::vector<double>>();
    const auto scale = doc.at("input_scale").get<std::vector<double>>();
    if (static_cast<int>(mean.size()) != model.arch.input_len ||
        static_cast<int>(scale.size()) != model.arch.input_len)
      fail(ErrorCode::SchemaMismatch, "normalization length mismatch");
    model.input_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), model.arch.input_len);
    model.input_scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), model.arch.input_len);

    auto read = [&](const std::string& name, const CnnArch::Block& blk) {
      const json& jw = doc.at("tensors").at(name + ".weight");
      const json& jb = doc.at("tensors").at(name + ".bias");
      const auto wshape = jw.at("shape").get<std::vector<int>>();
      if (wshape != std::vector<int>{blk.w_rows, blk.w_cols})
        fail(ErrorCode::SchemaMismatch, "tensor shape mismatch for " + name);
      const auto wdata = jw.at("data").get<std::vector<double>>();
      const auto bdata = jb.at("data").get<std::vector<double>>();
      if (static_cast<int>(wdata.size()) != blk.w_rows * blk.w_cols ||
          static_cast<int>(bdata.size()) != blk.b_len)
        fail(ErrorCode::SchemaMismatch, "tensor size mismatch for " + name);
      std::copy(wdata.begin(), wdata.end(), model.params.data() + blk.w_offset);
      std::copy(bdata.begin(), bdata.end(), model.params.data() + blk.b_offset);
    };
    for (int layer = 0; layer < model.arch.n_conv(); ++layer)
      read("conv" + std::to_string(layer + 1), model.arch.conv_block(layer));
    read("fc", model.arch.linear_block());
    if (extra) *extra = doc.value("extra", json::object());
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("bad checkpoint contents: ") + e.what());
  }
  return model;
}

}  // namespace ccpaloc
