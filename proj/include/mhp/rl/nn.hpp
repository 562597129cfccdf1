#pragma once

// Small dense networks with hand-written backpropagation.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace mhp::rl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Fully connected tanh network with a linear output layer. Parameters live
/// in one flat vector: for each layer, W (out x in, column-major) then b.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  const std::vector<int>& sizes() const noexcept { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  Eigen::Index param_count() const noexcept { return count_; }

  /// Scaled Gaussian init; the last layer is multiplied by out_gain.
  void init(VectorXd& params, Eigen::Index offset, std::mt19937_64& rng, double out_gain) const;

  struct Cache {
    std::vector<MatrixXd> acts;  // acts[0] = input, acts[k] = layer k output
  };

  /// x: input_dim x batch. Returns output_dim x batch.
  MatrixXd forward(const VectorXd& params, Eigen::Index offset, const MatrixXd& x, Cache* cache = nullptr) const;

  /// Accumulates dLoss/dparams into grad[offset..] given dLoss/dout.
  void backward(const VectorXd& params, Eigen::Index offset, const Cache& cache, const MatrixXd& dout,
                VectorXd& grad) const;

 private:
  std::vector<int> sizes_;
  Eigen::Index count_ = 0;
};

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(VectorXd& params, const VectorXd& grad);
  double lr() const noexcept { return lr_; }
  std::int64_t steps() const noexcept { return t_; }

 private:
  double lr_ = 3e-4, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  VectorXd m_, v_;
};

}  // namespace mhp::rl
