#include "autodiff.hpp"

#include <cmath>
#include <utility>

namespace r2d2::ad {

Parameter::Parameter(std::string name_in, Eigen::MatrixXd init)
    : name(std::move(name_in)), value(std::move(init)) {
  grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  adam_m = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  adam_v = Eigen::MatrixXd::Zero(value.rows(), value.cols());
}

void Parameter::zero_grad() { grad.setZero(); }

NodeId Tape::push(Eigen::MatrixXd value, std::function<void()> back) {
  Node n;
  n.grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::check(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
    fail(Error::Kind::InvalidArgument, "tape node id out of range");
}

const Eigen::MatrixXd& Tape::value(NodeId id) const {
  check(id);
  return nodes_[id].value;
}

Eigen::MatrixXd& Tape::grad(NodeId id) {
  check(id);
  return nodes_[id].grad;
}

void Tape::backward() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if (it->back) it->back();
}

NodeId Tape::constant(Eigen::MatrixXd value) { return push(std::move(value), nullptr); }

NodeId Tape::param(Parameter& p) {
  NodeId out = push(p.value, nullptr);
  Parameter* pp = &p;
  nodes_[out].back = [this, out, pp] { pp->grad += nodes_[out].grad; };
  return out;
}

NodeId Tape::rows(NodeId a, std::vector<int> idx) {
  check(a);
  const Eigen::MatrixXd& src = nodes_[a].value;
  Eigen::MatrixXd out(static_cast<long>(idx.size()), src.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= src.rows())
      fail(Error::Kind::InvalidArgument, "row gather index out of range");
    out.row(static_cast<long>(i)) = src.row(idx[i]);
  }
  NodeId o = push(std::move(out), nullptr);
  nodes_[o].back = [this, a, o, idx = std::move(idx)] {
    for (size_t i = 0; i < idx.size(); ++i)
      nodes_[a].grad.row(idx[i]) += nodes_[o].grad.row(static_cast<long>(i));
  };
  return o;
}

NodeId Tape::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  const auto& va = nodes_[a].value;
  const auto& vb = nodes_[b].value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols())
    fail(Error::Kind::InvalidArgument, "add: shape mismatch");
  NodeId o = push(va + vb, nullptr);
  nodes_[o].back = [this, a, b, o] {
    nodes_[a].grad += nodes_[o].grad;
    nodes_[b].grad += nodes_[o].grad;
  };
  return o;
}

NodeId Tape::add_rowvec(NodeId a, NodeId b) {
  check(a);
  check(b);
  const auto& va = nodes_[a].value;
  const auto& vb = nodes_[b].value;
  if (vb.rows() != 1 || va.cols() != vb.cols())
    fail(Error::Kind::InvalidArgument, "add_rowvec: expected 1 x cols(a)");
  Eigen::MatrixXd out = va.rowwise() + vb.row(0);
  NodeId o = push(std::move(out), nullptr);
  nodes_[o].back = [this, a, b, o] {
    nodes_[a].grad += nodes_[o].grad;
    nodes_[b].grad.row(0) += nodes_[o].grad.colwise().sum();
  };
  return o;
}

NodeId Tape::mul_rowvec(NodeId a, NodeId b) {
  check(a);
  check(b);
  const auto& va = nodes_[a].value;
  const auto& vb = nodes_[b].value;
  if (vb.rows() != 1 || va.cols() != vb.cols())
    fail(Error::Kind::InvalidArgument, "mul_rowvec: expected 1 x cols(a)");
  Eigen::MatrixXd out = va.array().rowwise() * vb.row(0).array();
  NodeId o = push(std::move(out), nullptr);
  nodes_[o].back = [this, a, b, o] {
    nodes_[a].grad.array() +=
        nodes_[o].grad.array().rowwise() * nodes_[b].value.row(0).array();
    nodes_[b].grad.row(0).array() +=
        (nodes_[o].grad.array() * nodes_[a].value.array()).colwise().sum();
  };
  return o;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  check(a);
  check(b);
  const auto& va = nodes_[a].value;
  const auto& vb = nodes_[b].value;
  if (va.cols() != vb.rows()) fail(Error::Kind::InvalidArgument, "matmul: inner dim mismatch");
  NodeId o = push(va * vb, nullptr);
  nodes_[o].back = [this, a, b, o] {
    nodes_[a].grad += nodes_[o].grad * nodes_[b].value.transpose();
    nodes_[b].grad += nodes_[a].value.transpose() * nodes_[o].grad;
  };
  return o;
}

NodeId Tape::scale(NodeId a, double s) {
  check(a);
  NodeId o = push(nodes_[a].value * s, nullptr);
  nodes_[o].back = [this, a, o, s] { nodes_[a].grad += nodes_[o].grad * s; };
  return o;
}

NodeId Tape::transpose(NodeId a) {
  check(a);
  NodeId o = push(nodes_[a].value.transpose(), nullptr);
  nodes_[o].back = [this, a, o] { nodes_[a].grad += nodes_[o].grad.transpose(); };
  return o;
}

NodeId Tape::softmax_rows(NodeId a) {
  check(a);
  const auto& va = nodes_[a].value;
  Eigen::MatrixXd out(va.rows(), va.cols());
  for (long r = 0; r < va.rows(); ++r) {
    Eigen::ArrayXd row = va.row(r).array();
    double mx = row.maxCoeff();
    Eigen::ArrayXd e = (row - mx).exp();
    out.row(r) = e / e.sum();
  }
  NodeId o = push(std::move(out), nullptr);
  nodes_[o].back = [this, a, o] {
    const auto& y = nodes_[o].value;
    const auto& dy = nodes_[o].grad;
    for (long r = 0; r < y.rows(); ++r) {
      double dot = (dy.row(r).array() * y.row(r).array()).sum();
      nodes_[a].grad.row(r).array() += y.row(r).array() * (dy.row(r).array() - dot);
    }
  };
  return o;
}

NodeId Tape::layer_norm_rows(NodeId a, double eps) {
  check(a);
  const auto& va = nodes_[a].value;
  long d = va.cols();
  Eigen::MatrixXd out(va.rows(), d);
  Eigen::VectorXd inv_sigma(va.rows());
  for (long r = 0; r < va.rows(); ++r) {
    double mu = va.row(r).mean();
    Eigen::ArrayXd centered = va.row(r).array() - mu;
    double var = centered.square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r) = is;
    out.row(r) = centered * is;
  }
  NodeId o = push(std::move(out), nullptr);
  nodes_[o].back = [this, a, o, d, inv_sigma = std::move(inv_sigma)] {
    const auto& y = nodes_[o].value;
    const auto& dy = nodes_[o].grad;
    double nd = static_cast<double>(d);
    for (long r = 0; r < y.rows(); ++r) {
      double mean_dy = dy.row(r).mean();
      double mean_dy_y = (dy.row(r).array() * y.row(r).array()).sum() / nd;
      nodes_[a].grad.row(r).array() +=
          inv_sigma(r) * (dy.row(r).array() - mean_dy - y.row(r).array() * mean_dy_y);
    }
  };
  return o;
}

NodeId Tape::relu(NodeId a) {
  check(a);
  Eigen::MatrixXd out = nodes_[a].value.cwiseMax(0.0);
  NodeId o = push(std::move(out), nullptr);
  nodes_[o].back = [this, a, o] {
    nodes_[a].grad.array() +=
        nodes_[o].grad.array() * (nodes_[a].value.array() > 0.0).cast<double>();
  };
  return o;
}

NodeId Tape::sigmoid(NodeId a) {
  check(a);
  Eigen::MatrixXd out = (1.0 / (1.0 + (-nodes_[a].value.array()).exp())).matrix();
  NodeId o = push(std::move(out), nullptr);
  nodes_[o].back = [this, a, o] {
    const auto& y = nodes_[o].value.array();
    nodes_[a].grad.array() += nodes_[o].grad.array() * y * (1.0 - y);
  };
  return o;
}

NodeId Tape::dropout(NodeId a, double rate, Rng& rng) {
  check(a);
  if (rate <= 0.0) return a;
  if (rate >= 1.0) fail(Error::Kind::InvalidArgument, "dropout rate must be < 1");
  const auto& va = nodes_[a].value;
  Eigen::MatrixXd mask(va.rows(), va.cols());
  double keep = 1.0 - rate;
  for (long r = 0; r < va.rows(); ++r)
    for (long c = 0; c < va.cols(); ++c)
      mask(r, c) = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  Eigen::MatrixXd out = va.array() * mask.array();
  NodeId o = push(std::move(out), nullptr);
  nodes_[o].back = [this, a, o, mask = std::move(mask)] {
    nodes_[a].grad.array() += nodes_[o].grad.array() * mask.array();
  };
  return o;
}

NodeId Tape::detach(NodeId a) {
  check(a);
  return push(nodes_[a].value, nullptr);
}

Eigen::MatrixXd gaussian_init(int rows, int cols, double stddev, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.gaussian() * stddev;
  return m;
}

}  // namespace r2d2::ad
