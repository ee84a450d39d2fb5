#pragma once

// Two-layer perceptron: f(x) = W2 * relu(W1 x + b1) + b2.
//
// Parameters live in one flat vector so that clients can average models
// elementwise. Layout (all blocks row-major):
//
//   [ W1 (hidden x input) | b1 (hidden) | W2 (output x hidden) | b2 (output) ]

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace ntkdfl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelDims {
  std::size_t input = 784;
  std::size_t hidden = 100;
  std::size_t output = 10;

  std::size_t param_count() const { return (input + 1) * hidden + (hidden + 1) * output; }
  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return input * hidden; }
  std::size_t w2_offset() const { return (input + 1) * hidden; }
  std::size_t b2_offset() const { return (input + 1) * hidden + output * hidden; }

  void validate() const;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Flat parameter vector.
using WeightVector = Vector;

/// Inputs, one-hot targets and integer labels of one client (or any sample set).
struct Batch {
  Matrix inputs;                 // N x input
  Matrix targets;                // N x output, one-hot rows
  std::vector<int> labels;       // N

  std::size_t size() const { return labels.size(); }
};

enum class InitScheme { Shared, PerClient };
enum class Loss { SoftmaxCrossEntropy, MeanSquared };

/// Read-only views of the four parameter blocks.
struct LayerViews {
  Eigen::Map<const RowMatrix> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const RowMatrix> w2;
  Eigen::Map<const Vector> b2;
};

LayerViews layers(const ModelDims& dims, const WeightVector& w);

/// Weight blocks ~ N(0, 2 / fan_in), biases zero. The shared scheme ignores
/// client_id; per-client mixes it into the stream.
WeightVector init_weights(std::uint64_t seed, const ModelDims& dims, InitScheme scheme,
                          std::size_t client_id);

/// N x output predictions.
Matrix forward(const ModelDims& dims, const WeightVector& w, const Matrix& inputs);

/// Dense per-sample Jacobians, shape (rows * output) x d. Row n * output + j
/// holds d f_j(x_n) / d w. Only practical for small models; the protocol uses
/// MlpJacobian, which represents the same tensor in factored form.
struct JacobianStack {
  std::size_t rows = 0;
  std::size_t outputs = 0;
  Matrix values;
  std::vector<std::size_t> row_owner;

  auto slice(std::size_t n) const { return values.middleRows(n * outputs, outputs); }
};

JacobianStack jacobian(const ModelDims& dims, const WeightVector& w, const Matrix& inputs);

/// Exact Jacobian of the MLP at one weight vector over a set of inputs, kept as
/// the per-row quantities backprop needs (inputs, hidden activations, ReLU
/// gates) instead of a rows x output x d tensor. Memory is O(rows * (input +
/// hidden)) rather than O(rows * output * d).
class MlpJacobian {
 public:
  MlpJacobian() = default;
  MlpJacobian(const ModelDims& dims, const WeightVector& w, const Matrix& inputs,
              std::size_t owner = 0);

  std::size_t rows() const { return static_cast<std::size_t>(inputs_.rows()); }
  const ModelDims& dims() const { return dims_; }
  const std::vector<std::size_t>& row_owner() const { return owner_; }

  /// Predictions f(x_n; w) for the rows, as a by-product of the construction.
  const Matrix& outputs() const { return outputs_; }

  /// Appends rows evaluated at the same weights.
  void append(const MlpJacobian& other);

  /// Rows [begin, end) as a new stack.
  MlpJacobian slice_rows(std::size_t begin, std::size_t end) const;

  /// (1/output) <J(x_m), J(x_n)>_F for all row pairs.
  Matrix gram() const;

  /// sum_j J_j^T r_j for an rows x output coefficient matrix r.
  WeightVector transpose_apply(const Matrix& r) const;

  /// J * delta as an rows x output matrix.
  Matrix apply(const WeightVector& delta) const;

  JacobianStack to_dense() const;

 private:
  ModelDims dims_{};
  RowMatrix w2_;        // output x hidden, copy of the linearization point
  Matrix inputs_;       // rows x input
  Matrix hidden_;       // rows x hidden, relu(z)
  Matrix gate_;         // rows x hidden, relu'(z) in {0, 1}
  Matrix outputs_;      // rows x output
  std::vector<std::size_t> owner_;
};

/// Gradient of the mean loss over the batch.
///   softmax_ce: -(1/N) sum_n log softmax(f(x_n))[label_n]
///   mse:        (1 / (2 N output)) ||f - Y||_F^2
WeightVector loss_gradient(const ModelDims& dims, const WeightVector& w, const Batch& batch,
                           Loss loss);

/// Mean loss value with the same normalization as loss_gradient.
double loss_value(const ModelDims& dims, const WeightVector& w, const Batch& batch, Loss loss);

}  // namespace ntkdfl
