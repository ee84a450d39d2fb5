#include "ntkdfl/mlp.hpp"

#include <cmath>
#include <string>

#include "ntkdfl/error.hpp"
#include "ntkdfl/rng.hpp"

namespace ntkdfl {

namespace {

void check_inputs(const ModelDims& dims, const WeightVector& w, const Matrix& inputs) {
  require(static_cast<std::size_t>(w.size()) == dims.param_count(), ErrorCode::DimensionMismatch,
          "weight vector has " + std::to_string(w.size()) + " entries, model needs " +
              std::to_string(dims.param_count()));
  require(static_cast<std::size_t>(inputs.cols()) == dims.input, ErrorCode::DimensionMismatch,
          "input has " + std::to_string(inputs.cols()) + " columns, model expects " +
              std::to_string(dims.input));
}

// Hidden pre-activations z = X W1^T + b1, rows x hidden.
Matrix preactivations(const LayerViews& l, const Matrix& inputs) {
  Matrix z = inputs * l.w1.transpose();
  z.rowwise() += l.b1.transpose();
  return z;
}

Matrix head(const LayerViews& l, const Matrix& hidden) {
  Matrix out = hidden * l.w2.transpose();
  out.rowwise() += l.b2.transpose();
  return out;
}

// Backprop of an rows x output upstream gradient into the flat layout.
WeightVector backprop(const ModelDims& dims, const Eigen::Ref<const RowMatrix>& w2,
                      const Matrix& inputs, const Matrix& hidden, const Matrix& gate,
                      const Matrix& upstream) {
  WeightVector g(dims.param_count());
  Eigen::Map<RowMatrix> gw1(g.data() + dims.w1_offset(), dims.hidden, dims.input);
  Eigen::Map<Vector> gb1(g.data() + dims.b1_offset(), dims.hidden);
  Eigen::Map<RowMatrix> gw2(g.data() + dims.w2_offset(), dims.output, dims.hidden);
  Eigen::Map<Vector> gb2(g.data() + dims.b2_offset(), dims.output);

  gb2 = upstream.colwise().sum().transpose();
  gw2.noalias() = upstream.transpose() * hidden;
  Matrix back = (upstream * w2).cwiseProduct(gate);
  gb1 = back.colwise().sum().transpose();
  gw1.noalias() = back.transpose() * inputs;
  return g;
}

}  // namespace

void ModelDims::validate() const {
  require(input >= 1 && hidden >= 1 && output >= 1, ErrorCode::InvalidArgument,
          "model dimensions must all be >= 1");
}

LayerViews layers(const ModelDims& dims, const WeightVector& w) {
  const double* p = w.data();
  return LayerViews{
      Eigen::Map<const RowMatrix>(p + dims.w1_offset(), dims.hidden, dims.input),
      Eigen::Map<const Vector>(p + dims.b1_offset(), dims.hidden),
      Eigen::Map<const RowMatrix>(p + dims.w2_offset(), dims.output, dims.hidden),
      Eigen::Map<const Vector>(p + dims.b2_offset(), dims.output),
  };
}

WeightVector init_weights(std::uint64_t seed, const ModelDims& dims, InitScheme scheme,
                          std::size_t client_id) {
  dims.validate();
  const std::uint64_t stream =
      scheme == InitScheme::Shared ? derive_seed(seed, "init")
                                   : derive_seed(seed, "init-client", client_id);
  Engine eng = make_engine(stream);
  WeightVector w = WeightVector::Zero(dims.param_count());

  const double s1 = std::sqrt(2.0 / static_cast<double>(dims.input));
  for (std::size_t i = 0; i < dims.input * dims.hidden; ++i)
    w[dims.w1_offset() + i] = s1 * standard_normal(eng);
  const double s2 = std::sqrt(2.0 / static_cast<double>(dims.hidden));
  for (std::size_t i = 0; i < dims.output * dims.hidden; ++i)
    w[dims.w2_offset() + i] = s2 * standard_normal(eng);
  return w;
}

Matrix forward(const ModelDims& dims, const WeightVector& w, const Matrix& inputs) {
  check_inputs(dims, w, inputs);
  const LayerViews l = layers(dims, w);
  return head(l, preactivations(l, inputs).cwiseMax(0.0));
}

JacobianStack jacobian(const ModelDims& dims, const WeightVector& w, const Matrix& inputs) {
  return MlpJacobian(dims, w, inputs).to_dense();
}

MlpJacobian::MlpJacobian(const ModelDims& dims, const WeightVector& w, const Matrix& inputs,
                         std::size_t owner)
    : dims_(dims) {
  check_inputs(dims, w, inputs);
  const LayerViews l = layers(dims, w);
  w2_ = l.w2;
  inputs_ = inputs;
  const Matrix z = preactivations(l, inputs);
  hidden_ = z.cwiseMax(0.0);
  gate_ = (z.array() > 0.0).cast<double>().matrix();
  outputs_ = head(l, hidden_);
  owner_.assign(static_cast<std::size_t>(inputs.rows()), owner);
}

void MlpJacobian::append(const MlpJacobian& other) {
  if (other.rows() == 0) return;
  if (rows() == 0 && w2_.size() == 0) {
    *this = other;
    return;
  }
  require(dims_ == other.dims_, ErrorCode::DimensionMismatch, "appending stacks of different models");
  require(w2_ == other.w2_, ErrorCode::InvalidArgument,
          "appending stacks linearized at different weights");
  auto stack = [](Matrix& top, const Matrix& bottom) {
    Matrix joined(top.rows() + bottom.rows(), top.cols());
    joined << top, bottom;
    top.swap(joined);
  };
  stack(inputs_, other.inputs_);
  stack(hidden_, other.hidden_);
  stack(gate_, other.gate_);
  stack(outputs_, other.outputs_);
  owner_.insert(owner_.end(), other.owner_.begin(), other.owner_.end());
}

MlpJacobian MlpJacobian::slice_rows(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= rows(), ErrorCode::InvalidArgument, "row slice out of range");
  const auto n = static_cast<Eigen::Index>(end - begin);
  const auto b = static_cast<Eigen::Index>(begin);
  MlpJacobian out;
  out.dims_ = dims_;
  out.w2_ = w2_;
  out.inputs_ = inputs_.middleRows(b, n);
  out.hidden_ = hidden_.middleRows(b, n);
  out.gate_ = gate_.middleRows(b, n);
  out.outputs_ = outputs_.middleRows(b, n);
  out.owner_.assign(owner_.begin() + b, owner_.begin() + b + n);
  return out;
}

Matrix MlpJacobian::gram() const {
  // Output layer: every output contributes h_m . h_n + 1.
  // Hidden layer: (x_m . x_n + 1) * sum_k (sum_j W2[j,k]^2) g_mk g_nk.
  const double d2 = static_cast<double>(dims_.output);
  const Vector col_energy = w2_.colwise().squaredNorm().transpose();

  Matrix h = hidden_ * hidden_.transpose();
  h.array() += 1.0;
  h *= d2;

  Matrix xx = inputs_ * inputs_.transpose();
  xx.array() += 1.0;
  const Matrix scaled_gate = gate_ * col_energy.asDiagonal();
  const Matrix gg = scaled_gate * gate_.transpose();
  h.array() += xx.array() * gg.array();

  h /= d2;
  return 0.5 * (h + h.transpose());
}

WeightVector MlpJacobian::transpose_apply(const Matrix& r) const {
  require(static_cast<std::size_t>(r.rows()) == rows() &&
              static_cast<std::size_t>(r.cols()) == dims_.output,
          ErrorCode::DimensionMismatch, "coefficient matrix shape does not match the stack");
  return backprop(dims_, w2_, inputs_, hidden_, gate_, r);
}

Matrix MlpJacobian::apply(const WeightVector& delta) const {
  require(static_cast<std::size_t>(delta.size()) == dims_.param_count(),
          ErrorCode::DimensionMismatch, "perturbation length does not match the model");
  const LayerViews d = layers(dims_, delta);
  Matrix dz = inputs_ * d.w1.transpose();
  dz.rowwise() += d.b1.transpose();
  dz = dz.cwiseProduct(gate_);
  Matrix out = hidden_ * d.w2.transpose() + dz * w2_.transpose();
  out.rowwise() += d.b2.transpose();
  return out;
}

JacobianStack MlpJacobian::to_dense() const {
  JacobianStack out;
  out.rows = rows();
  out.outputs = dims_.output;
  out.values = Matrix::Zero(rows() * dims_.output, dims_.param_count());
  out.row_owner = owner_;
  for (std::size_t n = 0; n < rows(); ++n) {
    for (std::size_t j = 0; j < dims_.output; ++j) {
      auto row = out.values.row(n * dims_.output + j);
      for (std::size_t k = 0; k < dims_.hidden; ++k) {
        const double coef = w2_(j, k) * gate_(n, k);
        if (coef != 0.0) {
          for (std::size_t c = 0; c < dims_.input; ++c)
            row[dims_.w1_offset() + k * dims_.input + c] = coef * inputs_(n, c);
          row[dims_.b1_offset() + k] = coef;
        }
        // relu'(0) is taken as 0 through the gate
        row[dims_.w2_offset() + j * dims_.hidden + k] = hidden_(n, k);
      }
      row[dims_.b2_offset() + j] = 1.0;
    }
  }
  return out;
}

namespace {

void check_batch(const ModelDims& dims, const WeightVector& w, const Batch& batch) {
  require(batch.size() >= 1, ErrorCode::EmptyInput, "loss over an empty batch");
  check_inputs(dims, w, batch.inputs);
  require(static_cast<std::size_t>(batch.inputs.rows()) == batch.size() &&
              static_cast<std::size_t>(batch.targets.rows()) == batch.size() &&
              static_cast<std::size_t>(batch.targets.cols()) == dims.output,
          ErrorCode::DimensionMismatch, "batch inputs, targets and labels disagree in shape");
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index n = 0; n < p.rows(); ++n) {
    const double m = p.row(n).maxCoeff();
    p.row(n) = (p.row(n).array() - m).exp().matrix();
    p.row(n) /= p.row(n).sum();
  }
  return p;
}

}  // namespace

WeightVector loss_gradient(const ModelDims& dims, const WeightVector& w, const Batch& batch,
                           Loss loss) {
  check_batch(dims, w, batch);
  const LayerViews l = layers(dims, w);
  const Matrix z = preactivations(l, batch.inputs);
  const Matrix hidden = z.cwiseMax(0.0);
  const Matrix gate = (z.array() > 0.0).cast<double>().matrix();
  const Matrix out = head(l, hidden);
  const double n = static_cast<double>(batch.size());

  Matrix upstream;
  if (loss == Loss::SoftmaxCrossEntropy) {
    upstream = (softmax_rows(out) - batch.targets) / n;
  } else {
    upstream = (out - batch.targets) / (n * static_cast<double>(dims.output));
  }
  return backprop(dims, l.w2, batch.inputs, hidden, gate, upstream);
}

double loss_value(const ModelDims& dims, const WeightVector& w, const Batch& batch, Loss loss) {
  check_batch(dims, w, batch);
  const Matrix out = forward(dims, w, batch.inputs);
  const double n = static_cast<double>(batch.size());
  if (loss == Loss::MeanSquared)
    return (out - batch.targets).squaredNorm() / (2.0 * n * static_cast<double>(dims.output));

  double total = 0.0;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    total += lse - out(r, batch.labels[static_cast<std::size_t>(r)]);
  }
  return total / n;
}

}  // namespace ntkdfl
