#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "eventsr/tensor.hpp"

// Minimal reverse-mode differentiation over Tensor values. A graph is built
// eagerly by the op functions below and discarded when the last Var handle
// goes out of scope. Ops whose inputs do not require gradients record no
// backward closure, so pure inference builds no graph.
namespace eventsr::ag
{

struct Node
{
  Tensor value;
  Tensor grad;  // allocated lazily during backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node &)> backward;
};

class Var
{
public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor & value() const { return node_->value; }
  /// Gradient accumulated by backward(); zeros if the node was not reached.
  Tensor grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node> & node() const { return node_; }
  static Var from_node(std::shared_ptr<Node> n);

private:
  std::shared_ptr<Node> node_;
};

/// Back-propagates from a single-element root, accumulating into every
/// reachable node that requires a gradient.
void backward(const Var & root);

Var add(const Var & a, const Var & b);
Var sub(const Var & a, const Var & b);
Var mul(const Var & a, const Var & b);
Var scale(const Var & a, double s);
Var add_scalar(const Var & a, double s);
/// a - s where s holds a single element.
Var sub_broadcast(const Var & a, const Var & s);

inline Var operator+(const Var & a, const Var & b) { return add(a, b); }
inline Var operator-(const Var & a, const Var & b) { return sub(a, b); }
inline Var operator*(double s, const Var & a) { return scale(a, s); }

/// 2-D cross-correlation. x: [N,Cin,H,W], w: [Cout,Cin,k,k], b: [Cout].
Var conv2d(const Var & x, const Var & w, const Var & b, int stride, int pad);
Var leaky_relu(const Var & x, double slope);
Var relu(const Var & x);
Var sigmoid(const Var & x);
/// log(sigmoid(x)) evaluated without overflow.
Var log_sigmoid(const Var & x);
Var log(const Var & x);
/// [N, C*r*r, H, W] -> [N, C, H*r, W*r].
Var pixel_shuffle(const Var & x, int r);
/// [N,C,H,W] -> [N,C,1,1].
Var global_avg_pool(const Var & x);
/// [N,1,H,W] -> [N,n,H,W] by copying the single channel.
Var repeat_channels(const Var & x, int n);
Var sum(const Var & x);
Var mean(const Var & x);
/// Root-sum-square over each batch item: [N,...] -> [N,1,1,1].
/// The gradient at a zero norm is taken as zero.
Var rss_per_item(const Var & x);
/// Forward differences along height plus along width, with the last row
/// (resp. column) of each difference zero, summed into one field.
Var tv_field(const Var & x);

}  // namespace eventsr::ag
