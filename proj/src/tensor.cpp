#include "eventsr/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace eventsr
{

std::size_t shape_size(const std::vector<int> & shape)
{
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const std::vector<int> & shape)
{
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(std::vector<int> shape_, double fill)
: shape(std::move(shape_)), data(shape_size(shape), fill)
{
}

Tensor Tensor::image(int height, int width, double fill) { return Tensor({1, 1, height, width}, fill); }

Tensor Tensor::scalar(double v) { return Tensor({1, 1, 1, 1}, v); }

bool Tensor::all_finite() const
{
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::item(int i) const
{
  if (rank() != 4 || i < 0 || i >= n()) throw std::out_of_range("batch item out of range");
  Tensor out({1, c(), h(), w()});
  const std::size_t stride = out.size();
  std::copy(
    data.begin() + static_cast<std::ptrdiff_t>(stride * i),
    data.begin() + static_cast<std::ptrdiff_t>(stride * (i + 1)), out.data.begin());
  return out;
}

Tensor Tensor::stack_batch(const std::vector<Tensor> & items)
{
  if (items.empty()) throw std::invalid_argument("stack_batch: no items");
  const auto & first = items.front();
  if (first.rank() != 4) throw std::invalid_argument("stack_batch: items must be rank 4");
  int total = 0;
  for (const auto & t : items) {
    if (t.rank() != 4 || t.c() != first.c() || t.h() != first.h() || t.w() != first.w())
      throw std::invalid_argument("stack_batch: mismatched item shapes");
    total += t.n();
  }
  Tensor out({total, first.c(), first.h(), first.w()});
  auto it = out.data.begin();
  for (const auto & t : items) it = std::copy(t.data.begin(), t.data.end(), it);
  return out;
}

}  // namespace eventsr
