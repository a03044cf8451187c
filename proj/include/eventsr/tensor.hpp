#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace eventsr
{

/// Dense row-major array of doubles. Activations use NCHW layout; parameters
/// may have any rank (conv weights are [out, in, kh, kw], biases are [out]).
struct Tensor
{
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, double fill = 0.0);

  /// 1x1xHxW image.
  static Tensor image(int height, int width, double fill = 0.0);
  static Tensor scalar(double v);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  // NCHW accessors; only valid for rank-4 tensors.
  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }

  double & at(int n_, int c_, int y, int x)
  {
    return data[((static_cast<std::size_t>(n_) * shape[1] + c_) * shape[2] + y) * shape[3] + x];
  }
  double at(int n_, int c_, int y, int x) const
  {
    return data[((static_cast<std::size_t>(n_) * shape[1] + c_) * shape[2] + y) * shape[3] + x];
  }

  bool same_shape(const Tensor & other) const { return shape == other.shape; }
  bool all_finite() const;

  /// Copy of batch item i as a 1xCxHxW tensor.
  Tensor item(int i) const;
  /// Concatenate rank-4 tensors with identical CHW along the batch axis.
  static Tensor stack_batch(const std::vector<Tensor> & items);

  friend bool operator==(const Tensor & a, const Tensor & b)
  {
    return a.shape == b.shape && a.data == b.data;
  }
};

std::size_t shape_size(const std::vector<int> & shape);
std::string shape_string(const std::vector<int> & shape);

}  // namespace eventsr
