#include <catch2/catch_amalgamated.hpp>

#include "panofc/tensor.hpp"
#include "testutil.hpp"

using namespace panofc;

TEST_CASE("tensor construction and invariants", "[tensor]") {
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimError);
  CHECK_THROWS_AS(Tensor(Shape{}), DimError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1.0}), DimError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}).value(), DimError);
}

TEST_CASE("matmul_add identity", "[tensor]") {
  Tensor x(Shape{1, 2}, {1, 2});
  Tensor w(Shape{2, 2}, {1, 0, 0, 1});
  Tensor b(Shape{2}, {0, 0});
  Tensor y = matmul_add(x, w, b);
  CHECK(y.at(0, 0) == 1.0);
  CHECK(y.at(0, 1) == 2.0);
}

TEST_CASE("matmul_add hand arithmetic", "[tensor]") {
  Tensor x(Shape{1, 2}, {1, 1});
  Tensor w(Shape{2, 2}, {2, 3, 4, 5});
  Tensor b(Shape{2}, {1, 1});
  Tensor y = matmul_add(x, w, b);
  CHECK(y.at(0, 0) == 7.0);
  CHECK(y.at(0, 1) == 9.0);
}

TEST_CASE("matmul_add shape errors name both shapes", "[tensor]") {
  Tensor x(Shape{1, 3});
  Tensor w(Shape{2, 2});
  Tensor b(Shape{2});
  try {
    matmul_add(x, w, b);
    FAIL("expected DimError");
  } catch (const DimError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("{1,3}") != std::string::npos);
    CHECK(msg.find("{2,2}") != std::string::npos);
  }
}

TEST_CASE("matmul_add W gradient matches finite differences", "[tensor][grad]") {
  Rng rng(11);
  ParamStore store;
  Tensor& w = store.create("w", Shape{3, 4});
  testutil::fill_uniform(w, rng, -0.8, 0.8);
  Tensor x = testutil::random_tensor(Shape{2, 3}, rng, -1.0, 1.0);
  Tensor b = testutil::random_tensor(Shape{4}, rng, -0.5, 0.5);
  auto forward = [&] { return sum(matmul_add(x, store.at("w"), b)); };
  CHECK(testutil::max_grad_rel_err(store, forward) < 1e-6);
  // sum(y) gradient w.r.t. W is the column sum of x broadcast over output.
  store.zero_grad();
  forward().backward();
  for (int i = 0; i < 3; ++i) {
    double colsum = x.at(0, i) + x.at(1, i);
    for (int o = 0; o < 4; ++o)
      CHECK(store.at("w").grad()[static_cast<size_t>(i) * 4 + o] ==
            Catch::Approx(colsum).margin(1e-12));
  }
}

TEST_CASE("elementwise ops forward values", "[tensor]") {
  Tensor a(Shape{2}, {1, -2});
  Tensor b(Shape{2}, {3, 5});
  CHECK(add(a, b).values() == std::vector<double>{4, 3});
  CHECK(sub(a, b).values() == std::vector<double>{-2, -7});
  CHECK(mul(a, b).values() == std::vector<double>{3, -10});
  CHECK(scale(a, -2).values() == std::vector<double>{-2, 4});
  CHECK(one_minus(a).values() == std::vector<double>{0, 3});
  CHECK(relu(a).values() == std::vector<double>{1, 0});
  CHECK(sigmoid(Tensor(Shape{1}, {0.0})).value() == 0.5);
  CHECK(tanh(Tensor(Shape{1}, {0.0})).value() == 0.0);
  CHECK_THROWS_AS(add(a, Tensor(Shape{3})), DimError);
}

TEST_CASE("elementwise and composed gradients vs finite differences", "[tensor][grad]") {
  Rng rng(23);
  ParamStore store;
  Tensor& a = store.create("a", Shape{2, 3});
  Tensor& b = store.create("b", Shape{2, 3});
  testutil::fill_uniform(a, rng, 0.2, 1.0);
  testutil::fill_uniform(b, rng, -1.0, -0.2);
  Tensor r = testutil::random_tensor(Shape{2, 3}, rng, 0.5, 1.5);
  auto forward = [&] {
    Tensor u = mul(sigmoid(store.at("a")), tanh(store.at("b")));
    Tensor v = add(scale(store.at("a"), 0.7), one_minus(store.at("b")));
    return mean(mul(add(u, v), r));
  };
  CHECK(testutil::max_grad_rel_err(store, forward) < 1e-4);
}

TEST_CASE("relu gradient away from the kink", "[tensor][grad]") {
  Rng rng(31);
  ParamStore store;
  Tensor& a = store.create("a", Shape{2, 4});
  // Keep all magnitudes well away from zero so the subgradient is exact.
  for (size_t i = 0; i < a.values().size(); ++i)
    a.values()[i] = (i % 2 ? 1.0 : -1.0) * rng.uniform(0.3, 1.0);
  Tensor r = testutil::random_tensor(Shape{2, 4}, rng, 0.5, 1.5);
  auto forward = [&] { return sum(mul(relu(store.at("a")), r)); };
  CHECK(testutil::max_grad_rel_err(store, forward) < 1e-6);
}

TEST_CASE("gradients accumulate when a tensor is used twice", "[tensor][grad]") {
  ParamStore store;
  Tensor& a = store.create("a", Shape{1});
  a.values()[0] = 3.0;
  Tensor loss = sum(mul(store.at("a"), store.at("a")));
  loss.backward();
  CHECK(a.grad()[0] == Catch::Approx(6.0));  // d(a^2)/da = 2a
}

TEST_CASE("concat and slice along dim 1", "[tensor]") {
  Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  Tensor b(Shape{2, 1}, {9, 8});
  Tensor c = concat_dim1(a, b);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.values() == std::vector<double>{1, 2, 9, 3, 4, 8});
  Tensor s = slice_dim1(c, 2, 3);
  CHECK(s.values() == std::vector<double>{9, 8});
  CHECK_THROWS_AS(concat_dim1(a, Tensor(Shape{3, 1})), DimError);
  CHECK_THROWS_AS(slice_dim1(c, 2, 2), DimError);

  Tensor x(Shape{1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor y(Shape{1, 1, 2, 2}, {-1, -2, -3, -4});
  Tensor z = concat_dim1(x, y);
  CHECK(z.shape() == Shape{1, 3, 2, 2});
  CHECK(z.at(0, 2, 1, 1) == -4.0);
  CHECK(slice_dim1(z, 1, 2).values() == std::vector<double>{5, 6, 7, 8});
}

TEST_CASE("concat/slice gradients", "[tensor][grad]") {
  Rng rng(37);
  ParamStore store;
  Tensor& a = store.create("a", Shape{2, 2, 3, 3});
  Tensor& b = store.create("b", Shape{2, 1, 3, 3});
  testutil::fill_uniform(a, rng, -1, 1);
  testutil::fill_uniform(b, rng, -1, 1);
  Tensor r = testutil::random_tensor(Shape{2, 2, 3, 3}, rng, 0.5, 1.5);
  auto forward = [&] {
    Tensor c = concat_dim1(store.at("a"), store.at("b"));
    return sum(mul(slice_dim1(c, 1, 3), r));
  };
  CHECK(testutil::max_grad_rel_err(store, forward) < 1e-4);
}

TEST_CASE("conv2d identity with 1x1 channel-identity kernel", "[tensor]") {
  Rng rng(41);
  Tensor x = testutil::random_tensor(Shape{2, 3, 4, 5}, rng, -1, 1);
  Tensor k(Shape{3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) k.values()[static_cast<size_t>(c) * 3 + c] = 1.0;
  Tensor b(Shape{3});
  Tensor y = conv2d(x, k, b);
  CHECK(y.values() == x.values());
}

TEST_CASE("conv2d constant input, all-ones 3x3 kernel", "[tensor]") {
  const int Ci = 2;
  Tensor x(Shape{1, Ci, 5, 6}, 1.0);
  Tensor k(Shape{1, Ci, 3, 3}, 1.0);
  Tensor b(Shape{1});
  Tensor y = conv2d(x, k, b);
  // Interior pixels see the full kernel support: Ci * 9.
  CHECK(y.at(0, 0, 2, 3) == Catch::Approx(Ci * 9.0));
  // Corner only overlaps 2x2 of each input channel.
  CHECK(y.at(0, 0, 0, 0) == Catch::Approx(Ci * 4.0));
}

TEST_CASE("conv2d rejects even kernels and bad channel counts", "[tensor]") {
  Tensor x(Shape{1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1})), ConfigError);
  CHECK_THROWS_AS(conv2d(x, Tensor(Shape{1, 3, 3, 3}), Tensor(Shape{1})), DimError);
  CHECK_THROWS_AS(conv2d(x, Tensor(Shape{2, 2, 3, 3}), Tensor(Shape{1})), DimError);
}

TEST_CASE("conv2d gradients vs finite differences", "[tensor][grad]") {
  Rng rng(43);
  ParamStore store;
  Tensor& x = store.create("x", Shape{1, 2, 4, 5});
  Tensor& k = store.create("k", Shape{3, 2, 3, 3});
  Tensor& b = store.create("b", Shape{3});
  testutil::fill_uniform(x, rng, -1, 1);
  testutil::fill_uniform(k, rng, -0.5, 0.5);
  testutil::fill_uniform(b, rng, -0.5, 0.5);
  Tensor r = testutil::random_tensor(Shape{1, 3, 4, 5}, rng, 0.5, 1.5);
  auto forward = [&] {
    return sum(mul(conv2d(store.at("x"), store.at("k"), store.at("b")), r));
  };
  CHECK(testutil::max_grad_rel_err(store, forward) < 1e-5);
}

TEST_CASE("bilinear_resize constants and identity", "[tensor]") {
  Tensor c(Shape{2, 3, 4}, 0.7);
  Tensor up = bilinear_resize(c, 7, 9);
  for (double v : up.values()) CHECK(v == Catch::Approx(0.7).margin(1e-15));

  Rng rng(47);
  Tensor x = testutil::random_tensor(Shape{2, 3, 4}, rng, -1, 1);
  CHECK(bilinear_resize(x, 3, 4).values() == x.values());

  Tensor one(Shape{1, 1, 1}, {3.0});
  Tensor rep = bilinear_resize(one, 4, 5);
  for (double v : rep.values()) CHECK(v == 3.0);

  CHECK_THROWS_AS(bilinear_resize(x, 0, 4), ConfigError);
}

TEST_CASE("bilinear_resize corner alignment", "[tensor]") {
  // 1D ramp 0..3 resized from width 4 to width 7 keeps the endpoints and
  // samples at index * 3/6.
  Tensor x(Shape{1, 1, 4}, {0, 1, 2, 3});
  Tensor y = bilinear_resize(x, 1, 7);
  for (int i = 0; i < 7; ++i)
    CHECK(y.values()[static_cast<size_t>(i)] == Catch::Approx(i * 0.5).margin(1e-12));
}

TEST_CASE("bilinear_resize gradients (up and down)", "[tensor][grad]") {
  Rng rng(53);
  ParamStore store;
  Tensor& x = store.create("x", Shape{1, 2, 3, 4});
  testutil::fill_uniform(x, rng, -1, 1);
  Tensor ru = testutil::random_tensor(Shape{1, 2, 5, 7}, rng, 0.5, 1.5);
  Tensor rd = testutil::random_tensor(Shape{1, 2, 2, 3}, rng, 0.5, 1.5);
  auto forward = [&] {
    return add(sum(mul(bilinear_resize(store.at("x"), 5, 7), ru)),
               sum(mul(bilinear_resize(store.at("x"), 2, 3), rd)));
  };
  CHECK(testutil::max_grad_rel_err(store, forward) < 1e-4);
}

TEST_CASE("broadcast_spatial forward and gradient", "[tensor][grad]") {
  Rng rng(59);
  ParamStore store;
  Tensor& v = store.create("v", Shape{2, 3});
  testutil::fill_uniform(v, rng, -1, 1);
  Tensor y = broadcast_spatial(store.at("v"), 2, 4);
  CHECK(y.shape() == Shape{2, 3, 2, 4});
  CHECK(y.at(1, 2, 1, 3) == v.at(1, 2));
  Tensor r = testutil::random_tensor(Shape{2, 3, 2, 4}, rng, 0.5, 1.5);
  auto forward = [&] { return sum(mul(broadcast_spatial(store.at("v"), 2, 4), r)); };
  CHECK(testutil::max_grad_rel_err(store, forward) < 1e-4);
}

TEST_CASE("reductions and reshape", "[tensor]") {
  Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  CHECK(sum(a).value() == 10.0);
  CHECK(mean(a).value() == 2.5);
  Tensor r = reshape(a, Shape{4});
  CHECK(r.shape() == Shape{4});
  CHECK_THROWS_AS(reshape(a, Shape{5}), DimError);
}

TEST_CASE("loss ops: values", "[tensor]") {
  Tensor a(Shape{2}, {1.0, 2.0});
  Tensor b(Shape{2}, {1.5, 0.0});
  CHECK(mse_loss(a, b).value() == Catch::Approx((0.25 + 4.0) / 2.0));
  // smooth L1: 0.5*0.5^2 = 0.125 and 2 - 0.5 = 1.5, mean = 0.8125
  CHECK(smooth_l1_loss(a, b).value() == Catch::Approx(0.8125));
  Tensor z(Shape{2}, {0.0, 0.0});
  CHECK(bce_logits_loss(z, {0.5, 0.5}).value() == Catch::Approx(std::log(2.0)));
}

TEST_CASE("loss ops: gradients", "[tensor][grad]") {
  Rng rng(61);
  ParamStore store;
  Tensor& a = store.create("a", Shape{3, 2});
  testutil::fill_uniform(a, rng, -0.6, 0.6);
  Tensor t = testutil::random_tensor(Shape{3, 2}, rng, -0.3, 0.3);
  std::vector<double> bt = {0.1, 0.9, 0.4, 0.6, 0.2, 0.8};
  auto forward = [&] {
    Tensor sl = smooth_l1_loss(store.at("a"), t);
    Tensor ms = mse_loss(store.at("a"), t);
    Tensor bc = bce_logits_loss(store.at("a"), bt);
    return add(add(sl, ms), bc);
  };
  CHECK(testutil::max_grad_rel_err(store, forward) < 1e-4);
}

TEST_CASE("smooth_l1 branches", "[tensor]") {
  Tensor a(Shape{1}, {2.0});
  Tensor b(Shape{1}, {0.0});
  CHECK(smooth_l1_loss(a, b).value() == Catch::Approx(1.5));
  Tensor c(Shape{1}, {0.5});
  CHECK(smooth_l1_loss(c, b).value() == Catch::Approx(0.125));
}

TEST_CASE("softmax_ce_masked values, empty mask, label errors", "[tensor]") {
  // 2 classes on a 1x2 image, uniform logits -> ln 2 per counted pixel.
  Tensor logits(Shape{2, 1, 2}, {0, 0, 0, 0});
  std::vector<int> target = {0, 1};
  std::vector<uint8_t> counted = {1, 1};
  CHECK(softmax_ce_masked(logits, target, counted).value() == Catch::Approx(std::log(2.0)));

  std::vector<uint8_t> none = {0, 0};
  Tensor zero = softmax_ce_masked(logits, target, none);
  CHECK(zero.value() == 0.0);

  std::vector<int> bad = {0, 7};
  CHECK_THROWS_AS(softmax_ce_masked(logits, bad, counted), LabelError);
  // The bad label is not counted -> no error.
  std::vector<uint8_t> first_only = {1, 0};
  CHECK_NOTHROW(softmax_ce_masked(logits, bad, first_only));
}

TEST_CASE("softmax_ce_masked gradient", "[tensor][grad]") {
  Rng rng(67);
  ParamStore store;
  Tensor& logits = store.create("l", Shape{3, 2, 2});
  testutil::fill_uniform(logits, rng, -1, 1);
  std::vector<int> target = {0, 2, 1, 1};
  std::vector<uint8_t> counted = {1, 0, 1, 1};
  auto forward = [&] { return softmax_ce_masked(store.at("l"), target, counted); };
  CHECK(testutil::max_grad_rel_err(store, forward) < 1e-4);
}

TEST_CASE("forward and backward are deterministic", "[tensor]") {
  auto run = [] {
    Rng rng(101);
    ParamStore store;
    Tensor& k = store.create("k", Shape{2, 2, 3, 3});
    testutil::fill_uniform(k, rng, -0.5, 0.5);
    Tensor x = testutil::random_tensor(Shape{1, 2, 5, 5}, rng, -1, 1);
    Tensor loss = mean(tanh(conv2d(x, store.at("k"), Tensor(Shape{2}))));
    loss.backward();
    std::vector<double> out = {loss.value()};
    auto& g = store.at("k").grad();
    out.insert(out.end(), g.begin(), g.end());
    return out;
  };
  auto a = run();
  auto b = run();
  CHECK(a == b);  // bit-identical
}

TEST_CASE("values stay finite through forward/backward", "[tensor]") {
  Rng rng(103);
  ParamStore store;
  Tensor& w = store.create("w", Shape{6, 6});
  testutil::fill_uniform(w, rng, -1, 1);
  Tensor x = testutil::random_tensor(Shape{3, 6}, rng, -2, 2);
  Tensor y = tanh(matmul_add(x, store.at("w"), Tensor(Shape{6})));
  Tensor loss = mean(y);
  loss.backward();
  CHECK(all_finite(y));
  CHECK(all_finite(store.at("w")));
  bool grads_finite = true;
  for (double g : store.at("w").grad()) grads_finite = grads_finite && std::isfinite(g);
  CHECK(grads_finite);
}
