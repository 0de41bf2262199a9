#include <cmath>
#include <limits>
#include <tuple>

#include "doctest.h"
#include "meshtime/autodiff.hpp"
#include "meshtime/kernels.hpp"
#include "checks.hpp"
#include "support.hpp"

using namespace meshtime;
using namespace meshtime::ad;
using testsupport::grad_check;
using testsupport::random_edges;
using testsupport::random_matrix;

namespace {

Tensor param(Rng& rng, std::size_t r, std::size_t c) { return Tensor::parameter(random_matrix(rng, r, c)); }

}  // namespace

TEST_CASE("op examples") {
  const Tensor x = Tensor::constant(Matrix(1, 3, {0.0, -1e300, 2.0}));
  const Tensor y = elu(x);
  CHECK(y.value()(0, 0) == 0.0);
  CHECK(y.value()(0, 1) == doctest::Approx(-1.0));
  CHECK(y.value()(0, 2) == 2.0);

  const Tensor l = leaky_relu(Tensor::constant(Matrix(1, 2, {-2.0, 3.0})), 0.2);
  CHECK(l.value()(0, 0) == doctest::Approx(-0.4));
  CHECK(l.value()(0, 1) == 3.0);

  Segments seg;
  seg.offsets = {0, 1, 3};
  const Tensor sm = segment_softmax(Tensor::constant(Matrix(3, 1, {5.0, 1.0, 1.0})), seg);
  CHECK(sm.value()(0, 0) == 1.0);
  CHECK(sm.value()(1, 0) == doctest::Approx(0.5));

  const Tensor a = Tensor::constant(Matrix(2, 2, {1, 2, 3, 4}));
  const Tensor b = Tensor::constant(Matrix(2, 2, {5, 6, 7, 8}));
  CHECK(matmul(a, b).value().values() == std::vector<double>{19, 22, 43, 50});
  CHECK(add(a, b).value().values() == std::vector<double>{6, 8, 10, 12});
  CHECK(mul(a, b).value().values() == std::vector<double>{5, 12, 21, 32});
  CHECK(scale(a, -2).value().values() == std::vector<double>{-2, -4, -6, -8});
  CHECK(add_row(a, Tensor::constant(Matrix(1, 2, {10, 20}))).value().values() == std::vector<double>{11, 22, 13, 24});
  const Tensor parts[] = {a, b};
  CHECK(concat_cols(parts).value().values() == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});
  CHECK(slice_cols(concat_cols(parts), 1, 3).value().values() == std::vector<double>{2, 5, 4, 7});
  CHECK(elementwise_max(parts).value().values() == std::vector<double>{5, 6, 7, 8});
  CHECK(sum(a).item() == 10.0);
  CHECK(exp(Tensor::constant(Matrix(1, 1, 0.0))).item() == 1.0);
  const int rows[] = {1, 1, 0};
  CHECK(gather_rows(a, rows).value().values() == std::vector<double>{3, 4, 3, 4, 1, 2});

  Segments two;
  two.offsets = {0, 2, 2};
  const Tensor ss = segment_sum(a, two);
  CHECK(ss.value().values() == std::vector<double>{4, 6, 0, 0});

  const std::uint8_t mask[] = {0, 1};
  CHECK(mse_masked(a, b, mask).item() == doctest::Approx(16.0));
}

TEST_CASE("segments from ids") {
  const int ids[] = {0, 0, 2, 2, 2};
  const Segments s = Segments::from_ids(ids, 4);
  CHECK(s.offsets == std::vector<std::size_t>{0, 2, 2, 5, 5});
  CHECK(s.count() == 4);
  CHECK(s.total() == 5);
  const int unsorted[] = {1, 0};
  CHECK_THROWS_AS(Segments::from_ids(unsorted, 2), ShapeError);
  const int too_big[] = {0, 3};
  CHECK_THROWS_AS(Segments::from_ids(too_big, 2), ShapeError);
}

TEST_CASE("segment softmax sums to one per segment") {
  Rng rng(3);
  const Matrix x = random_matrix(rng, 40, 3, -30, 30);
  const int ids[] = {0, 0, 0, 1, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3,
                     4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 5, 5};
  const Segments seg = Segments::from_ids(ids, 6);
  const Tensor y = segment_softmax(Tensor::constant(x), seg);
  const Tensor s = segment_sum(y, seg);
  for (double v : s.value().values()) CHECK(std::abs(v - 1.0) <= 1e-12);
}

TEST_CASE("finite-difference checks of every op") {
  const auto errors = testsupport::op_gradient_errors(11, 3);
  CHECK(errors.size() == 19);
  for (const auto& e : errors) {
    INFO(e.name);
    CHECK(e.checked > 0);
    CHECK(e.max_rel < 1e-6);
  }
}

TEST_CASE("gradients accumulate over shared uses and only into parameters") {
  Rng rng(4);
  Tensor a = param(rng, 2, 2);
  const Tensor c = Tensor::constant(random_matrix(rng, 2, 2));
  backward(sum(add(a, add(a, c))));
  for (double g : a.grad().values()) CHECK(g == 2.0);
  CHECK(c.grad().empty());
  a.zero_grad();
  for (double g : a.grad().values()) CHECK(g == 0.0);
}

TEST_CASE("shape errors at construction") {
  const Tensor a = Tensor::constant(Matrix(2, 3));
  const Tensor b = Tensor::constant(Matrix(2, 2));
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(mul(a, b), ShapeError);
  CHECK_THROWS_AS(add_row(a, Tensor::constant(Matrix(1, 2))), ShapeError);
  CHECK_THROWS_AS(slice_cols(a, 2, 4), ShapeError);
  const Tensor rows_differ[] = {a, Tensor::constant(Matrix(3, 3))};
  CHECK_THROWS_AS(concat_cols(rows_differ), ShapeError);
  const Tensor mismatched[] = {a, b};
  CHECK_THROWS_AS(elementwise_max(mismatched), ShapeError);
  Segments seg;
  seg.offsets = {0, 1};
  CHECK_THROWS_AS(segment_softmax(a, seg), ShapeError);
  const std::uint8_t none[] = {0, 0};
  CHECK_THROWS_AS(mse_masked(a, a, none), ShapeError);
  const std::uint8_t short_mask[] = {1};
  CHECK_THROWS_AS(mse_masked(a, a, short_mask), ShapeError);
  const int bad_rows[] = {5};
  CHECK_THROWS_AS(gather_rows(a, bad_rows), ShapeError);
  CHECK_THROWS_AS(a.item(), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1.0}), ShapeError);
  CHECK_THROWS_AS(backward(a), ShapeError);
  // ShapeError is an invalid_argument.
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("serial and OpenMP kernels agree") {
  Rng rng(8);
  auto run = [&]<typename T>(T tol) {
    auto max_diff = [](const std::vector<T>& x, const std::vector<T>& y) {
      T worst = 0;
      for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
      return worst;
    };
    for (auto [m, k, n] : {std::tuple{1, 1, 1}, {7, 5, 3}, {33, 17, 40}, {130, 64, 70}}) {
      std::vector<T> A(m * k), B(k * n), Bt(n * k), At(k * m), c1(m * n), c2(m * n);
      for (auto& v : A) v = T(rng.uniform(-1, 1));
      for (auto& v : B) v = T(rng.uniform(-1, 1));
      for (auto& v : Bt) v = T(rng.uniform(-1, 1));
      for (auto& v : At) v = T(rng.uniform(-1, 1));
      auto close = [&](const std::vector<T>& x, const std::vector<T>& y) {
        T worst = 0;
        for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
        return worst <= tol;
      };
      kernels::serial::gemm_nn<T>(m, k, n, A.data(), B.data(), c1.data());
      kernels::omp::gemm_nn<T>(m, k, n, A.data(), B.data(), c2.data());
      CHECK(close(c1, c2));
      kernels::serial::gemm_tn<T>(m, k, n, At.data(), B.data(), c1.data());
      kernels::omp::gemm_tn<T>(m, k, n, At.data(), B.data(), c2.data());
      CHECK(close(c1, c2));
      kernels::serial::gemm_nt<T>(m, k, n, A.data(), Bt.data(), c1.data());
      kernels::omp::gemm_nt<T>(m, k, n, A.data(), Bt.data(), c2.data());
      CHECK(close(c1, c2));
    }
    const std::size_t nodes = 50, heads = 4, dim = 16, width = heads * dim;
    const kernels::EdgeIndex ix = random_edges(rng, nodes, 200);
    const std::size_t e = ix.num_edges();
    std::vector<T> X(nodes * width), a(heads * dim), alpha(e * heads), dout(nodes * width);
    for (auto* v : {&X, &a, &alpha, &dout}) {
      for (auto& x : *v) x = T(rng.uniform(-1, 1));
    }
    std::vector<T> o1(nodes * heads), o2(nodes * heads);
    kernels::serial::head_dot<T>(nodes, heads, dim, X.data(), a.data(), o1.data());
    kernels::omp::head_dot<T>(nodes, heads, dim, X.data(), a.data(), o2.data());
    CHECK(max_diff(o1, o2) <= tol);

    std::vector<T> s1(e * heads), s2(e * heads);
    kernels::serial::segment_softmax<T>(ix.dst_offsets, heads, alpha.data(), s1.data());
    kernels::omp::segment_softmax<T>(ix.dst_offsets, heads, alpha.data(), s2.data());
    {
      T worst = 0;
      for (std::size_t i = 0; i < s1.size(); ++i) worst = std::max(worst, std::abs(s1[i] - s2[i]));
      CHECK(worst <= tol);
    }
    std::vector<T> dx1(e * heads, 0), dx2(e * heads, 0);
    kernels::serial::segment_softmax_backward<T>(ix.dst_offsets, heads, s1.data(), alpha.data(), dx1.data());
    kernels::omp::segment_softmax_backward<T>(ix.dst_offsets, heads, s1.data(), alpha.data(), dx2.data());
    CHECK(max_diff(dx1, dx2) <= tol);

    std::vector<T> g1(nodes * heads), g2(nodes * heads);
    kernels::serial::segment_sum<T>(ix.dst_offsets, heads, alpha.data(), g1.data());
    kernels::omp::segment_sum<T>(ix.dst_offsets, heads, alpha.data(), g2.data());
    CHECK(max_diff(g1, g2) <= tol);

    std::vector<T> ag1(nodes * width), ag2(nodes * width);
    kernels::serial::attention_aggregate<T>(ix, heads, dim, alpha.data(), X.data(), ag1.data());
    kernels::omp::attention_aggregate<T>(ix, heads, dim, alpha.data(), X.data(), ag2.data());
    {
      T worst = 0;
      for (std::size_t i = 0; i < ag1.size(); ++i) worst = std::max(worst, std::abs(ag1[i] - ag2[i]));
      CHECK(worst <= tol);
    }
    std::vector<T> da1(e * heads, 0), da2(e * heads, 0), dX1(nodes * width, 0), dX2(nodes * width, 0);
    kernels::serial::attention_aggregate_backward<T>(ix, heads, dim, alpha.data(), X.data(), dout.data(), da1.data(),
                                                     dX1.data());
    kernels::omp::attention_aggregate_backward<T>(ix, heads, dim, alpha.data(), X.data(), dout.data(), da2.data(),
                                                  dX2.data());
    T worst = 0;
    for (std::size_t i = 0; i < da1.size(); ++i) worst = std::max(worst, std::abs(da1[i] - da2[i]));
    for (std::size_t i = 0; i < dX1.size(); ++i) worst = std::max(worst, std::abs(dX1[i] - dX2[i]));
    CHECK(worst <= tol);
  };
  run(1e-12);
  run(1e-4f);
}

TEST_CASE("OpenMP kernels do not depend on the thread count") {
  Rng rng(9);
  const std::size_t m = 97, k = 300, n = 64;
  std::vector<double> A(k * m), B(k * n), c1(m * n), c2(m * n);
  for (auto& v : A) v = rng.uniform(-1, 1);
  for (auto& v : B) v = rng.uniform(-1, 1);
  const int keep = omp_get_max_threads();
  omp_set_num_threads(1);
  kernels::omp::gemm_tn<double>(m, k, n, A.data(), B.data(), c1.data());
  omp_set_num_threads(3);
  kernels::omp::gemm_tn<double>(m, k, n, A.data(), B.data(), c2.data());
  omp_set_num_threads(keep);
  CHECK(c1 == c2);
}

TEST_CASE("Adam update formula") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;

  SUBCASE("first step is a sign step of size lr") {
    Tensor p = Tensor::parameter(Matrix(1, 2, {1.0, -3.0}));
    p.grad() = Matrix(1, 2, {0.37, -2.5});
    Adam opt(cfg);
    std::vector<Tensor> ps{p};
    opt.step(ps);
    CHECK(p.value()(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p.value()(0, 1) == doctest::Approx(-3.0 + 0.01).epsilon(1e-6));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("zero gradient leaves the parameter unchanged") {
    Tensor p = Tensor::parameter(Matrix(1, 1, 2.0));
    p.grad() = Matrix(1, 1, 0.0);
    Adam opt(cfg);
    std::vector<Tensor> ps{p};
    for (int i = 0; i < 3; ++i) opt.step(ps);
    CHECK(p.value()(0, 0) == 2.0);
  }
  SUBCASE("weight decay enters through the gradient") {
    AdamConfig wd = cfg;
    wd.weight_decay = 5e-4;
    Tensor p = Tensor::parameter(Matrix(1, 1, 2.0));
    p.grad() = Matrix(1, 1, 0.0);
    Adam opt(wd);
    std::vector<Tensor> ps{p};
    // Reference: hand-evaluated update with g = wd * p.
    double w = 2.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 5; ++t) {
      const double g = 5e-4 * w;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      w -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      opt.step(ps);
      CHECK(p.value()(0, 0) == doctest::Approx(w).epsilon(1e-14));
    }
    CHECK(p.value()(0, 0) < 2.0);
  }
  SUBCASE("moments follow the recurrences") {
    Tensor p = Tensor::parameter(Matrix(1, 1, 0.5));
    Adam opt(cfg);
    std::vector<Tensor> ps{p};
    p.grad() = Matrix(1, 1, 2.0);
    opt.step(ps);
    p.grad() = Matrix(1, 1, -1.0);
    opt.step(ps);
    CHECK(opt.first_moments()[0](0, 0) == doctest::Approx(0.9 * 0.2 + 0.1 * -1.0));
    CHECK(opt.second_moments()[0](0, 0) == doctest::Approx(0.999 * 0.004 + 0.001 * 1.0));
  }
}

TEST_CASE("non-finite gradient aborts the step without touching parameters") {
  Tensor p = Tensor::parameter(Matrix(1, 2, {1.0, 2.0}));
  Tensor q = Tensor::parameter(Matrix(1, 1, 3.0));
  p.grad() = Matrix(1, 2, {0.1, 0.2});
  q.grad() = Matrix(1, 1, std::numeric_limits<double>::quiet_NaN());
  Adam opt;
  std::vector<Tensor> ps{p, q};
  CHECK_THROWS_AS(opt.step(ps), NumericalError);
  CHECK(p.value().values() == std::vector<double>{1.0, 2.0});
  CHECK(q.value()(0, 0) == 3.0);
  CHECK(opt.steps() == 0);
}

TEST_CASE("training steps are deterministic") {
  auto trajectory = [] {
    Rng rng(77);
    Tensor w = param(rng, 4, 3);
    const Tensor x = Tensor::constant(random_matrix(rng, 10, 4));
    const Tensor y = Tensor::constant(random_matrix(rng, 10, 3));
    const std::vector<std::uint8_t> mask(10, 1);
    Adam opt;
    std::vector<Tensor> ps{w};
    std::vector<double> losses;
    for (int i = 0; i < 20; ++i) {
      w.zero_grad();
      const Tensor loss = mse_masked(matmul(x, w), y, mask);
      losses.push_back(loss.item());
      backward(loss);
      opt.step(ps);
    }
    losses.insert(losses.end(), w.value().values().begin(), w.value().values().end());
    return losses;
  };
  CHECK(trajectory() == trajectory());
}
