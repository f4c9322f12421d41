#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "util.hpp"

namespace r2d2::ad {

// A trainable tensor.  Lives outside any tape; value, grad and Adam state
// share its address for the lifetime of the model.
struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd adam_m;
  Eigen::MatrixXd adam_v;

  Parameter() = default;
  Parameter(std::string name, Eigen::MatrixXd init);

  void zero_grad();
  long size() const { return value.size(); }
};

using NodeId = int;

// Reverse-mode tape over dense double matrices.  Build a graph forward,
// seed gradients on any nodes (typically the probability outputs), then run
// backward() once; parameter gradients accumulate into Parameter::grad.
class Tape {
 public:
  NodeId constant(Eigen::MatrixXd value);
  NodeId param(Parameter& p);

  // Gather rows of a by index (embedding lookup).
  NodeId rows(NodeId a, std::vector<int> idx);
  NodeId add(NodeId a, NodeId b);
  // b is 1 x d, broadcast over the rows of a.
  NodeId add_rowvec(NodeId a, NodeId b);
  NodeId mul_rowvec(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId transpose(NodeId a);
  NodeId softmax_rows(NodeId a);
  // Per-row standardization, no learnable part (apply mul_rowvec/add_rowvec
  // on top for gain and bias).
  NodeId layer_norm_rows(NodeId a, double eps = 1e-5);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  // Inverted dropout; rate 0 is the identity.  The mask is drawn from rng.
  NodeId dropout(NodeId a, double rate, Rng& rng);
  // Same value, but gradients stop here.
  NodeId detach(NodeId a);

  const Eigen::MatrixXd& value(NodeId id) const;
  Eigen::MatrixXd& grad(NodeId id);
  void backward();
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    std::function<void()> back;
  };

  NodeId push(Eigen::MatrixXd value, std::function<void()> back);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
};

// Fan-in scaled gaussian init, the shape used for every weight matrix.
Eigen::MatrixXd gaussian_init(int rows, int cols, double stddev, Rng& rng);

}  // namespace r2d2::ad
