#include <doctest.h>

#include <random>

#include "eventsr/autograd.hpp"
#include "oracles.hpp"

using namespace eventsr;

namespace
{

double worst_gradient_error(const Tensor & x, const std::function<ag::Var(const ag::Var &)> & f, std::mt19937_64 & rng)
{
  ag::Var v(x, true);
  ag::backward(ag::sum(f(v)));
  auto scalar = [&](const Tensor & t) { return ag::sum(f(ag::Var(t))).value().data[0]; };
  return oracle::gradient_check(scalar, x, v.grad(), rng, 30);
}

}  // namespace

TEST_CASE("conv2d forward matches a direct loop")
{
  std::mt19937_64 rng(1);
  for (int stride : {1, 2}) {
    const Tensor x = oracle::random_tensor({2, 3, 9, 7}, rng, -1, 1);
    const Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng, -1, 1);
    const Tensor b = oracle::random_tensor({4}, rng, -1, 1);
    const Tensor got = ag::relu(ag::conv2d(ag::Var(x), ag::Var(w), ag::Var(b), stride, 1)).value();
    const Tensor want = oracle::conv_relu(x, w, b, stride);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("op gradients")
{
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({2, 4, 6, 6}, rng, -1, 1);
  const Tensor w = oracle::random_tensor({3, 4, 3, 3}, rng, -1, 1);
  const Tensor b = oracle::random_tensor({3}, rng, -1, 1);
  const Tensor probe = oracle::random_tensor({2, 4, 6, 6}, rng, -1, 1);
  const ag::Var pv(probe);

  CHECK(worst_gradient_error(x, [&](const ag::Var & v) { return ag::conv2d(v, ag::Var(w), ag::Var(b), 2, 1); }, rng) < 1e-6);
  CHECK(worst_gradient_error(w, [&](const ag::Var & v) { return ag::conv2d(ag::Var(x), v, ag::Var(b), 1, 1); }, rng) < 1e-6);
  CHECK(worst_gradient_error(b, [&](const ag::Var & v) { return ag::conv2d(ag::Var(x), ag::Var(w), v, 1, 1); }, rng) < 1e-6);
  CHECK(worst_gradient_error(x, [&](const ag::Var & v) { return ag::mul(ag::sigmoid(v), pv); }, rng) < 1e-6);
  CHECK(worst_gradient_error(x, [&](const ag::Var & v) { return ag::mul(ag::log_sigmoid(v), pv); }, rng) < 1e-6);
  CHECK(worst_gradient_error(x, [&](const ag::Var & v) { return ag::mul(ag::leaky_relu(v, 0.2), pv); }, rng) < 1e-6);
  CHECK(worst_gradient_error(x, [&](const ag::Var & v) { return ag::mul(ag::pixel_shuffle(v, 2), ag::pixel_shuffle(pv, 2)); }, rng) < 1e-6);
  CHECK(worst_gradient_error(x, [&](const ag::Var & v) { return ag::global_avg_pool(ag::mul(v, v)); }, rng) < 1e-6);
  CHECK(worst_gradient_error(x, [&](const ag::Var & v) { return ag::rss_per_item(v); }, rng) < 1e-6);
  CHECK(worst_gradient_error(x, [&](const ag::Var & v) { return ag::mul(ag::tv_field(v), pv); }, rng) < 1e-6);
  CHECK(worst_gradient_error(x, [&](const ag::Var & v) { return ag::sub_broadcast(ag::mul(v, v), ag::mean(v)); }, rng) < 1e-6);
  const Tensor one = oracle::random_tensor({2, 1, 5, 5}, rng);
  CHECK(worst_gradient_error(one, [&](const ag::Var & v) {
    return ag::mul(ag::repeat_channels(v, 3), ag::Var(Tensor({2, 3, 5, 5}, 0.7)));
  }, rng) < 1e-6);
  const Tensor pos = oracle::random_tensor({3, 3}, rng, 0.2, 2.0);
  CHECK(worst_gradient_error(pos, [&](const ag::Var & v) { return ag::log(v); }, rng) < 1e-6);
}

TEST_CASE("pixel_shuffle layout")
{
  Tensor x({1, 4, 1, 1});
  for (int c = 0; c < 4; ++c) x.data[static_cast<std::size_t>(c)] = c;
  const Tensor y = ag::pixel_shuffle(ag::Var(x), 2).value();
  CHECK(y.shape == std::vector<int>{1, 1, 2, 2});
  CHECK(y.data == std::vector<double>{0, 1, 2, 3});
}

TEST_CASE("gradient accumulates over shared inputs and stops at constants")
{
  ag::Var a(Tensor::scalar(3.0), true);
  ag::Var c(Tensor::scalar(5.0));
  ag::backward(ag::mul(a, a) + ag::mul(a, c));
  CHECK(a.grad().data[0] == 11.0);
  CHECK(c.grad().data[0] == 0.0);

  ag::Var z(Tensor({1, 1, 2, 2}, 0.0), true);
  ag::backward(ag::sum(ag::rss_per_item(z)));
  for (double g : z.grad().data) CHECK(g == 0.0);
}
