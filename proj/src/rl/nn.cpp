#include "mhp/rl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mhp::rl {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  for (int s : sizes_)
    if (s <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
  for (std::size_t k = 1; k < sizes_.size(); ++k) count_ += Eigen::Index(sizes_[k]) * (sizes_[k - 1] + 1);
}

void Mlp::init(VectorXd& params, Eigen::Index offset, std::mt19937_64& rng, double out_gain) const {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::Index pos = offset;
  for (std::size_t k = 1; k < sizes_.size(); ++k) {
    const int in = sizes_[k - 1], out = sizes_[k];
    double gain = std::sqrt(1.0 / in);
    if (k + 1 == sizes_.size()) gain *= out_gain;
    for (Eigen::Index i = 0; i < Eigen::Index(in) * out; ++i) params[pos++] = gain * n01(rng);
    for (int i = 0; i < out; ++i) params[pos++] = 0.0;
  }
}

MatrixXd Mlp::forward(const VectorXd& params, Eigen::Index offset, const MatrixXd& x, Cache* cache) const {
  if (x.rows() != sizes_.front()) throw std::invalid_argument("Mlp::forward: input dimension mismatch");
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  MatrixXd a = x;
  Eigen::Index pos = offset;
  for (std::size_t k = 1; k < sizes_.size(); ++k) {
    const int in = sizes_[k - 1], out = sizes_[k];
    Eigen::Map<const MatrixXd> w(params.data() + pos, out, in);
    pos += Eigen::Index(in) * out;
    Eigen::Map<const VectorXd> b(params.data() + pos, out);
    pos += out;
    MatrixXd z = w * a;
    z.colwise() += b;
    if (k + 1 < sizes_.size()) z = z.array().tanh().matrix();
    a = std::move(z);
    if (cache) cache->acts.push_back(a);
  }
  return a;
}

void Mlp::backward(const VectorXd& params, Eigen::Index offset, const Cache& cache, const MatrixXd& dout,
                   VectorXd& grad) const {
  // offsets of each layer
  std::vector<Eigen::Index> w_pos(sizes_.size()), b_pos(sizes_.size());
  Eigen::Index pos = offset;
  for (std::size_t k = 1; k < sizes_.size(); ++k) {
    w_pos[k] = pos;
    pos += Eigen::Index(sizes_[k - 1]) * sizes_[k];
    b_pos[k] = pos;
    pos += sizes_[k];
  }
  MatrixXd dz = dout;
  for (std::size_t k = sizes_.size() - 1; k >= 1; --k) {
    const int in = sizes_[k - 1], out = sizes_[k];
    if (k + 1 < sizes_.size()) dz = (dz.array() * (1.0 - cache.acts[k].array().square())).matrix();
    const MatrixXd& a_prev = cache.acts[k - 1];
    Eigen::Map<MatrixXd> gw(grad.data() + w_pos[k], out, in);
    Eigen::Map<VectorXd> gb(grad.data() + b_pos[k], out);
    gw.noalias() += dz * a_prev.transpose();
    gb += dz.rowwise().sum();
    if (k == 1) break;
    Eigen::Map<const MatrixXd> w(params.data() + w_pos[k], out, in);
    dz = w.transpose() * dz;
  }
}

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)) {}

void Adam::step(VectorXd& params, const VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace mhp::rl
