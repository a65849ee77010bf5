#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "gridode/common.hpp"

namespace gridode::nn {

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { Relu, Softplus, Gelu, Silu, Identity };

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
    case Activation::Gelu: return "gelu";
    case Activation::Silu: return "silu";
    case Activation::Identity: return "identity";
  }
  fail("bad activation enum");
}

inline Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "softplus") return Activation::Softplus;
  if (name == "gelu") return Activation::Gelu;
  if (name == "silu") return Activation::Silu;
  if (name == "identity") return Activation::Identity;
  fail("unknown activation '" + name + "'");
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) {
  // exact for large |z|: softplus(z) = z + softplus(-z)
  return z > 30.0 ? z : std::log1p(std::exp(z));
}

inline double activation_value(Activation a, double z) {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Softplus: return softplus(z);
    case Activation::Gelu:  // exact Gaussian CDF form
      return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2));
    case Activation::Silu: return z * sigmoid(z);
    case Activation::Identity: return z;
  }
  fail("bad activation enum");
}

inline double activation_grad(Activation a, double z) {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Softplus: return sigmoid(z);
    case Activation::Gelu: {
      const double phi =
          std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      const double Phi = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
      return Phi + z * phi;
    }
    case Activation::Silu: {
      const double s = sigmoid(z);
      return s * (1.0 + z * (1.0 - s));
    }
    case Activation::Identity: return 1.0;
  }
  fail("bad activation enum");
}

// ---------------------------------------------------------------------------
// Parameter store
// ---------------------------------------------------------------------------

/// Flat parameter vector with named matrix slices plus a matching gradient
/// buffer. Declare every slice before taking views; adding slices may
/// reallocate the backing storage.
class ParameterStore {
 public:
  using SliceId = std::size_t;

  struct Slice {
    std::string name;
    std::size_t offset;
    Eigen::Index rows, cols;
  };

  SliceId add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    require(rows > 0 && cols > 0, "slice dimensions must be positive");
    require(!by_name_.count(name), "duplicate parameter slice '" + name + "'");
    const SliceId id = slices_.size();
    slices_.push_back({name, theta_.size(), rows, cols});
    by_name_[name] = id;
    theta_.resize(theta_.size() + static_cast<std::size_t>(rows * cols), 0.0);
    grad_.resize(theta_.size(), 0.0);
    return id;
  }

  SliceId id_of(const std::string& name) const {
    const auto it = by_name_.find(name);
    require(it != by_name_.end(), "unknown parameter slice '" + name + "'");
    return it->second;
  }

  const Slice& slice(SliceId id) const { return slices_.at(id); }
  std::size_t slice_count() const { return slices_.size(); }
  std::size_t size() const { return theta_.size(); }

  Eigen::Map<Eigen::MatrixXd> view(SliceId id) {
    const auto& s = slices_.at(id);
    return {theta_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Eigen::MatrixXd> view(SliceId id) const {
    const auto& s = slices_.at(id);
    return {theta_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<Eigen::MatrixXd> grad_view(SliceId id) {
    const auto& s = slices_.at(id);
    return {grad_.data() + s.offset, s.rows, s.cols};
  }

  std::vector<double>& theta() { return theta_; }
  const std::vector<double>& theta() const { return theta_; }
  std::vector<double>& grad() { return grad_; }
  const std::vector<double>& grad() const { return grad_; }

  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

  /// Weight slices get uniform(-s, s) with s = sqrt(1/fan_in) where fan_in
  /// is the column count; slices named "*.b" are biases and start at zero.
  void init_uniform(Rng& rng) {
    for (SliceId id = 0; id < slices_.size(); ++id) {
      const auto& s = slices_[id];
      auto v = view(id);
      if (s.name.size() >= 2 && s.name.compare(s.name.size() - 2, 2, ".b") == 0) {
        v.setZero();
        continue;
      }
      const double bound = std::sqrt(1.0 / static_cast<double>(s.cols));
      for (Eigen::Index c = 0; c < s.cols; ++c)
        for (Eigen::Index r = 0; r < s.rows; ++r)
          v(r, c) = rng.uniform(-bound, bound);
    }
  }

 private:
  std::vector<double> theta_, grad_;
  std::vector<Slice> slices_;
  std::map<std::string, SliceId> by_name_;
};

// ---------------------------------------------------------------------------
// Reverse-mode tape over matrix-valued nodes
// ---------------------------------------------------------------------------

/// Records matrix operations and replays them in reverse to accumulate
/// gradients into a ParameterStore. With gradients disabled the same ops
/// run as a plain forward evaluation, so train and eval share one
/// arithmetic path.
class Tape {
 public:
  using NodeId = std::size_t;

  explicit Tape(ParameterStore* params, bool grad_enabled = true)
      : params_(params), grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  const Eigen::MatrixXd& value(NodeId id) const { return nodes_.at(id).value; }

  double scalar(NodeId id) const {
    const auto& v = nodes_.at(id).value;
    require(v.size() == 1, "node is not scalar");
    return v(0, 0);
  }

  void reset() {
    nodes_.clear();
    grads_.clear();
  }

  NodeId constant(Eigen::MatrixXd v) {
    return push({std::move(v), {}, false});
  }

  NodeId param(ParameterStore::SliceId slice) {
    require(params_ != nullptr, "tape has no parameter store");
    Node node{params_->view(slice), {}, grad_enabled_};
    if (grad_enabled_) {
      node.backward = [slice](Tape& t, NodeId self) {
        t.params_->grad_view(slice) += t.grads_[self];
      };
    }
    return push(std::move(node));
  }

  /// W * X + b broadcast over columns. W: (m x n), X: (n x B), b: (m x 1).
  NodeId affine(NodeId W, NodeId X, NodeId b) {
    const auto& w = value(W);
    const auto& x = value(X);
    const auto& bias = value(b);
    require(w.cols() == x.rows(), "affine inner dimension mismatch");
    require(bias.rows() == w.rows() && bias.cols() == 1, "affine bias shape");
    Eigen::MatrixXd out = (w * x).colwise() + bias.col(0);
    Node node{std::move(out), {}, requires_grad(W, X, b)};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [W, X, b](Tape& t, NodeId self) {
        const auto& G = t.grads_[self];
        if (t.nodes_[W].requires_grad)
          t.accumulate(W, G * t.value(X).transpose());
        if (t.nodes_[X].requires_grad)
          t.accumulate(X, t.value(W).transpose() * G);
        if (t.nodes_[b].requires_grad)
          t.accumulate(b, G.rowwise().sum());
      };
    }
    return push(std::move(node));
  }

  NodeId add(NodeId A, NodeId B) { return add_scaled(A, 1.0, B); }

  /// A + alpha * B
  NodeId add_scaled(NodeId A, double alpha, NodeId B) {
    require(value(A).rows() == value(B).rows() &&
                value(A).cols() == value(B).cols(),
            "add shape mismatch");
    Node node{value(A) + alpha * value(B), {}, requires_grad(A, B)};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [A, B, alpha](Tape& t, NodeId self) {
        const auto& G = t.grads_[self];
        if (t.nodes_[A].requires_grad) t.accumulate(A, G);
        if (t.nodes_[B].requires_grad) t.accumulate(B, alpha * G);
      };
    }
    return push(std::move(node));
  }

  NodeId scale(NodeId A, double s) {
    Node node{s * value(A), {}, nodes_[A].requires_grad};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [A, s](Tape& t, NodeId self) {
        t.accumulate(A, s * t.grads_[self]);
      };
    }
    return push(std::move(node));
  }

  NodeId activation(NodeId A, Activation act) {
    const auto& x = value(A);
    Eigen::MatrixXd out = x.unaryExpr(
        [act](double z) { return activation_value(act, z); });
    Node node{std::move(out), {}, nodes_[A].requires_grad};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [A, act](Tape& t, NodeId self) {
        const Eigen::MatrixXd d = t.value(A).unaryExpr(
            [act](double z) { return activation_grad(act, z); });
        t.accumulate(A, t.grads_[self].cwiseProduct(d));
      };
    }
    return push(std::move(node));
  }

  /// Causal dilated 1-D convolution along columns (time axis). Input
  /// (C_in x T); kernel (C_out x C_in*k) laid out as k blocks of C_in
  /// columns, block m applying to the sample m*dilation steps in the past;
  /// bias (C_out x 1). History beyond the window start is zero padded.
  NodeId causal_conv1d(NodeId X, NodeId W, NodeId b, int kernel_size,
                       int dilation) {
    require(kernel_size >= 1 && dilation >= 1, "conv geometry out of range");
    const auto& x = value(X);
    const auto& w = value(W);
    const auto& bias = value(b);
    const Eigen::Index c_in = x.rows();
    const Eigen::Index T = x.cols();
    require(w.cols() == c_in * kernel_size, "conv kernel width mismatch");
    const Eigen::Index c_out = w.rows();
    require(bias.rows() == c_out && bias.cols() == 1, "conv bias shape");
    Eigen::MatrixXd out = bias.col(0).replicate(1, T);
    for (int m = 0; m < kernel_size; ++m) {
      const Eigen::Index shift = static_cast<Eigen::Index>(m) * dilation;
      if (shift >= T) break;
      out.rightCols(T - shift).noalias() +=
          w.middleCols(static_cast<Eigen::Index>(m) * c_in, c_in) *
          x.leftCols(T - shift);
    }
    Node node{std::move(out), {}, requires_grad(X, W, b)};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [X, W, b, kernel_size, dilation](Tape& t, NodeId self) {
        const auto& G = t.grads_[self];
        const auto& x = t.value(X);
        const auto& w = t.value(W);
        const Eigen::Index c_in = x.rows();
        const Eigen::Index T = x.cols();
        if (t.nodes_[b].requires_grad) t.accumulate(b, G.rowwise().sum());
        if (t.nodes_[W].requires_grad) {
          Eigen::MatrixXd dW = Eigen::MatrixXd::Zero(w.rows(), w.cols());
          for (int m = 0; m < kernel_size; ++m) {
            const Eigen::Index shift = static_cast<Eigen::Index>(m) * dilation;
            if (shift >= T) break;
            dW.middleCols(static_cast<Eigen::Index>(m) * c_in, c_in).noalias() +=
                G.rightCols(T - shift) * x.leftCols(T - shift).transpose();
          }
          t.accumulate(W, dW);
        }
        if (t.nodes_[X].requires_grad) {
          Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(x.rows(), T);
          for (int m = 0; m < kernel_size; ++m) {
            const Eigen::Index shift = static_cast<Eigen::Index>(m) * dilation;
            if (shift >= T) break;
            dX.leftCols(T - shift).noalias() +=
                w.middleCols(static_cast<Eigen::Index>(m) * c_in, c_in)
                    .transpose() *
                G.rightCols(T - shift);
          }
          t.accumulate(X, dX);
        }
      };
    }
    return push(std::move(node));
  }

  /// Rows of A stacked above rows of B.
  NodeId vstack(NodeId A, NodeId B) {
    const auto& a = value(A);
    const auto& bm = value(B);
    require(a.cols() == bm.cols(), "vstack column mismatch");
    Eigen::MatrixXd out(a.rows() + bm.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(bm.rows()) = bm;
    Node node{std::move(out), {}, requires_grad(A, B)};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [A, B](Tape& t, NodeId self) {
        const auto& G = t.grads_[self];
        const auto ra = t.value(A).rows();
        if (t.nodes_[A].requires_grad) t.accumulate(A, G.topRows(ra));
        if (t.nodes_[B].requires_grad)
          t.accumulate(B, G.bottomRows(G.rows() - ra));
      };
    }
    return push(std::move(node));
  }

  NodeId hstack(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "hstack of nothing");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    bool needs = false;
    for (const auto id : parts) {
      require(value(id).rows() == rows, "hstack row mismatch");
      cols += value(id).cols();
      needs = needs || nodes_[id].requires_grad;
    }
    Eigen::MatrixXd out(rows, cols);
    Eigen::Index at = 0;
    for (const auto id : parts) {
      out.middleCols(at, value(id).cols()) = value(id);
      at += value(id).cols();
    }
    Node node{std::move(out), {}, needs};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [parts](Tape& t, NodeId self) {
        const auto& G = t.grads_[self];
        Eigen::Index at = 0;
        for (const auto id : parts) {
          const auto w = t.value(id).cols();
          if (t.nodes_[id].requires_grad)
            t.accumulate(id, G.middleCols(at, w));
          at += w;
        }
      };
    }
    return push(std::move(node));
  }

  NodeId select_cols(NodeId A, Eigen::Index start, Eigen::Index count) {
    const auto& a = value(A);
    require(start >= 0 && count >= 1 && start + count <= a.cols(),
            "select_cols out of range");
    Node node{a.middleCols(start, count), {}, nodes_[A].requires_grad};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [A, start, count](Tape& t, NodeId self) {
        Eigen::MatrixXd dA =
            Eigen::MatrixXd::Zero(t.value(A).rows(), t.value(A).cols());
        dA.middleCols(start, count) = t.grads_[self];
        t.accumulate(A, dA);
      };
    }
    return push(std::move(node));
  }

  NodeId select_rows(NodeId A, Eigen::Index start, Eigen::Index count) {
    const auto& a = value(A);
    require(start >= 0 && count >= 1 && start + count <= a.rows(),
            "select_rows out of range");
    Node node{a.middleRows(start, count), {}, nodes_[A].requires_grad};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [A, start, count](Tape& t, NodeId self) {
        Eigen::MatrixXd dA =
            Eigen::MatrixXd::Zero(t.value(A).rows(), t.value(A).cols());
        dA.middleRows(start, count) = t.grads_[self];
        t.accumulate(A, dA);
      };
    }
    return push(std::move(node));
  }

  /// Rows picked by index list: out.row(r) = A.row(rows[r]).
  NodeId gather_rows(NodeId A, std::vector<Eigen::Index> rows) {
    const auto& a = value(A);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      require(rows[r] >= 0 && rows[r] < a.rows(), "gather_rows out of range");
      out.row(static_cast<Eigen::Index>(r)) = a.row(rows[r]);
    }
    Node node{std::move(out), {}, nodes_[A].requires_grad};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [A, rows = std::move(rows)](Tape& t, NodeId self) {
        const auto& G = t.grads_[self];
        Eigen::MatrixXd dA =
            Eigen::MatrixXd::Zero(t.value(A).rows(), t.value(A).cols());
        for (std::size_t r = 0; r < rows.size(); ++r)
          dA.row(rows[r]) += G.row(static_cast<Eigen::Index>(r));
        t.accumulate(A, dA);
      };
    }
    return push(std::move(node));
  }

  /// Rows of A placed at the listed positions of an otherwise zero matrix
  /// with `total_rows` rows. Positions must be distinct.
  NodeId scatter_rows(NodeId A, std::vector<Eigen::Index> rows,
                      Eigen::Index total_rows) {
    const auto& a = value(A);
    require(static_cast<Eigen::Index>(rows.size()) == a.rows(),
            "scatter_rows needs one position per row");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(total_rows, a.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      require(rows[r] >= 0 && rows[r] < total_rows, "scatter_rows out of range");
      out.row(rows[r]) = a.row(static_cast<Eigen::Index>(r));
    }
    Node node{std::move(out), {}, nodes_[A].requires_grad};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [A, rows = std::move(rows)](Tape& t, NodeId self) {
        const auto& G = t.grads_[self];
        Eigen::MatrixXd dA(static_cast<Eigen::Index>(rows.size()), G.cols());
        for (std::size_t r = 0; r < rows.size(); ++r)
          dA.row(static_cast<Eigen::Index>(r)) = G.row(rows[r]);
        t.accumulate(A, dA);
      };
    }
    return push(std::move(node));
  }

  /// Sum of squared entries, as a 1x1 node.
  NodeId sum_sq(NodeId A) {
    Eigen::MatrixXd out(1, 1);
    out(0, 0) = value(A).squaredNorm();
    Node node{std::move(out), {}, nodes_[A].requires_grad};
    if (node.requires_grad && grad_enabled_) {
      node.backward = [A](Tape& t, NodeId self) {
        t.accumulate(A, 2.0 * t.grads_[self](0, 0) * t.value(A));
      };
    }
    return push(std::move(node));
  }

  /// Runs reverse accumulation from a scalar node. Parameter gradients add
  /// into the store; call zero_grad() beforehand for a fresh gradient.
  void backward(NodeId root) {
    require(grad_enabled_, "backward on a no-grad tape");
    require(nodes_.at(root).value.size() == 1, "backward root must be scalar");
    grads_.assign(nodes_.size(), Eigen::MatrixXd());
    grads_[root] = Eigen::MatrixXd::Ones(1, 1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (grads_[i].size() == 0) continue;
      if (nodes_[i].backward) nodes_[i].backward(*this, i);
    }
  }

 private:
  struct Node {
    Eigen::MatrixXd value;
    std::function<void(Tape&, NodeId)> backward;
    bool requires_grad = false;
  };

  bool requires_grad(NodeId a, NodeId b) const {
    return nodes_[a].requires_grad || nodes_[b].requires_grad;
  }
  bool requires_grad(NodeId a, NodeId b, NodeId c) const {
    return requires_grad(a, b) || nodes_[c].requires_grad;
  }

  NodeId push(Node node) {
    if (!grad_enabled_) node.backward = nullptr;
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
  }

  void accumulate(NodeId id, const Eigen::MatrixXd& g) {
    if (!nodes_[id].requires_grad) return;
    if (grads_[id].size() == 0)
      grads_[id] = g;
    else
      grads_[id] += g;
  }

  ParameterStore* params_;
  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<Eigen::MatrixXd> grads_;
};

// ---------------------------------------------------------------------------
// Multilayer perceptron
// ---------------------------------------------------------------------------

struct MlpSpec {
  Eigen::Index in = 0;
  Eigen::Index out = 0;
  Eigen::Index hidden = 0;
  int depth = 1;  // number of hidden layers
  Activation act = Activation::Silu;
};

/// Fully connected net: depth hidden layers with one activation, linear
/// output layer. Parameters live in a shared store under a name prefix.
struct Mlp {
  MlpSpec spec;
  std::vector<ParameterStore::SliceId> weights, biases;

  static Mlp create(ParameterStore& store, const std::string& prefix,
                    const MlpSpec& spec) {
    require(spec.in > 0 && spec.out > 0 && spec.depth >= 0, "bad mlp spec");
    require(spec.depth == 0 || spec.hidden > 0, "bad mlp spec");
    Mlp net;
    net.spec = spec;
    Eigen::Index prev = spec.in;
    for (int l = 0; l < spec.depth; ++l) {
      const std::string base = prefix + ".h" + std::to_string(l);
      net.weights.push_back(store.add(base + ".W", spec.hidden, prev));
      net.biases.push_back(store.add(base + ".b", spec.hidden, 1));
      prev = spec.hidden;
    }
    net.weights.push_back(store.add(prefix + ".out.W", spec.out, prev));
    net.biases.push_back(store.add(prefix + ".out.b", spec.out, 1));
    return net;
  }

  /// X: (in x B) -> (out x B)
  Tape::NodeId forward(Tape& tape, Tape::NodeId X) const {
    Tape::NodeId h = X;
    for (std::size_t l = 0; l + 1 < weights.size(); ++l) {
      h = tape.affine(tape.param(weights[l]), h, tape.param(biases[l]));
      h = tape.activation(h, spec.act);
    }
    return tape.affine(tape.param(weights.back()), h,
                       tape.param(biases.back()));
  }

  Eigen::MatrixXd evaluate(const ParameterStore& store,
                           const Eigen::MatrixXd& X) const {
    Tape tape(const_cast<ParameterStore*>(&store), false);
    return tape.value(forward(tape, tape.constant(X)));
  }
};

// ---------------------------------------------------------------------------
// Temporal convolutional network
// ---------------------------------------------------------------------------

/// Oldest sample that can influence the newest output of a causal stack of
/// `blocks` residual blocks, two convolutions each, dilation doubling per
/// block: the window reaches 2*(k-1)*(2^blocks - 1) steps into the past.
inline Eigen::Index receptive_field(int kernel_size, int blocks) {
  require(kernel_size >= 1 && blocks >= 0, "bad tcn geometry");
  return 1 + 2 * static_cast<Eigen::Index>(kernel_size - 1) *
                 ((Eigen::Index{1} << blocks) - 1);
}

/// Smallest block count (at least one) whose receptive field covers
/// `horizon` samples.
inline int minimal_blocks(int kernel_size, Eigen::Index horizon) {
  require(kernel_size >= 2, "kernel size must be >= 2 to grow the field");
  require(horizon >= 1, "horizon must be >= 1");
  int b = 1;
  while (receptive_field(kernel_size, b) < horizon) {
    ++b;
    require(b <= 62, "horizon out of range");
  }
  return b;
}

struct TcnSpec {
  Eigen::Index in_channels = 0;
  Eigen::Index out_channels = 0;
  Eigen::Index hidden_channels = 0;
  int kernel_size = 2;
  int blocks = 1;  // dilation of block b is 2^b
  Activation act = Activation::Relu;
};

/// Residual TCN: each block applies conv-act-conv-act and adds a skip path
/// (1x1 projection where channel counts differ); a final 1x1 convolution
/// maps to the output channels.
struct Tcn {
  TcnSpec spec;
  struct Block {
    ParameterStore::SliceId w1, b1, w2, b2;
    ParameterStore::SliceId skip_w = 0;
    bool has_skip = false;
  };
  std::vector<Block> blocks;
  ParameterStore::SliceId head_w = 0, head_b = 0;

  static Tcn create(ParameterStore& store, const std::string& prefix,
                    const TcnSpec& spec) {
    require(spec.in_channels > 0 && spec.out_channels > 0 &&
                spec.hidden_channels > 0,
            "bad tcn spec");
    require(spec.kernel_size >= 2 && spec.blocks >= 1, "bad tcn geometry");
    Tcn net;
    net.spec = spec;
    Eigen::Index prev = spec.in_channels;
    for (int b = 0; b < spec.blocks; ++b) {
      const std::string base = prefix + ".blk" + std::to_string(b);
      Block blk;
      blk.w1 = store.add(base + ".c1.W", spec.hidden_channels,
                         prev * spec.kernel_size);
      blk.b1 = store.add(base + ".c1.b", spec.hidden_channels, 1);
      blk.w2 = store.add(base + ".c2.W", spec.hidden_channels,
                         spec.hidden_channels * spec.kernel_size);
      blk.b2 = store.add(base + ".c2.b", spec.hidden_channels, 1);
      if (prev != spec.hidden_channels) {
        blk.skip_w = store.add(base + ".skip.W", spec.hidden_channels, prev);
        blk.has_skip = true;
      }
      net.blocks.push_back(blk);
      prev = spec.hidden_channels;
    }
    net.head_w = store.add(prefix + ".head.W", spec.out_channels, prev);
    net.head_b = store.add(prefix + ".head.b", spec.out_channels, 1);
    return net;
  }

  /// X: (in_channels x T) -> (out_channels x T), causal along columns.
  Tape::NodeId forward(Tape& tape, Tape::NodeId X) const {
    Tape::NodeId h = X;
    for (int b = 0; b < spec.blocks; ++b) {
      const auto& blk = blocks[static_cast<std::size_t>(b)];
      const int dilation = 1 << b;
      Tape::NodeId z = tape.causal_conv1d(h, tape.param(blk.w1),
                                          tape.param(blk.b1),
                                          spec.kernel_size, dilation);
      z = tape.activation(z, spec.act);
      z = tape.causal_conv1d(z, tape.param(blk.w2), tape.param(blk.b2),
                             spec.kernel_size, dilation);
      z = tape.activation(z, spec.act);
      Tape::NodeId skip = h;
      if (blk.has_skip) {
        // 1x1 channel projection so the residual sum is well formed
        Tape::NodeId zero =
            tape.constant(Eigen::MatrixXd::Zero(spec.hidden_channels, 1));
        skip = tape.causal_conv1d(h, tape.param(blk.skip_w), zero, 1, 1);
      }
      h = tape.add(skip, z);
    }
    return tape.causal_conv1d(h, tape.param(head_w), tape.param(head_b), 1, 1);
  }

  Eigen::MatrixXd evaluate(const ParameterStore& store,
                           const Eigen::MatrixXd& X) const {
    Tape tape(const_cast<ParameterStore*>(&store), false);
    return tape.value(forward(tape, tape.constant(X)));
  }
};

// ---------------------------------------------------------------------------
// Adam optimizer
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update from the store's current gradient.
inline void adam_step(ParameterStore& params, AdamState& state, double lr) {
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  require(state.m.size() == params.size(), "adam state size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto& theta = params.theta();
  const auto& g = params.grad();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

// ---------------------------------------------------------------------------
// Numeric gradient (independent of the tape's reverse pass)
// ---------------------------------------------------------------------------

/// Central finite differences of a scalar function of the parameters.
template <typename F>
std::vector<double> numeric_gradient(ParameterStore& params, const F& f,
                                     double h = 1e-6) {
  std::vector<double> g(params.size());
  auto& theta = params.theta();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    const double up = f();
    theta[i] = keep - h;
    const double dn = f();
    theta[i] = keep;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

}  // namespace gridode::nn
