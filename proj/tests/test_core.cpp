#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

#include "mata/core/adam.hpp"
#include "mata/core/checkpoint.hpp"
#include "mata/core/kernels.hpp"
#include "mata/core/rng.hpp"
#include "mata/core/tape.hpp"
#include "support/fd.hpp"

using namespace mata;
using core::ParamStore;
using core::Rng;
using core::Tape;
using core::Tensor;

namespace {

using GraphFn = std::function<Tensor(Tape&, const ParamStore&)>;

// Runs the finite-difference oracle against tape gradients for a scalar graph.
void require_grads_match(ParamStore ps, const GraphFn& graph) {
  Tape tape;
  Tensor loss = graph(tape, ps);
  REQUIRE(loss.numel() == 1);
  tape.backward(loss);
  ParamStore analytic = tape.gradients(ps);
  auto loss_fn = [&graph](const ParamStore& p) {
    Tape t;
    return graph(t, p).values[0];
  };
  auto r = mata::testing::check_param_gradients(ps, loss_fn, analytic);
  INFO("mismatch at " << r.where << ": analytic " << r.analytic << " numeric " << r.numeric);
  CHECK(r.ok);
}

}  // namespace

TEST_CASE("matmul matches hand-computed values") {
  Tape tape;
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 1}, {1, 0, -1});
  Tensor c = tape.matmul(a, b);
  REQUIRE(c.shape == core::Shape{2, 1});
  CHECK(c.values[0] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(c.values[1] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("matmul dimension error names both shapes") {
  Tape tape;
  Tensor a({2, 3});
  Tensor b({2, 4});
  try {
    tape.matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x4]") != std::string::npos);
  }
}

TEST_CASE("softmax closed forms under row shifts") {
  Tape tape;
  Tensor zeros({1, 3}, {0, 0, 0});
  for (double v : tape.softmax_rows(zeros).values)
    CHECK(std::abs(v - 1.0 / 3.0) < 1e-15);
  for (double c : {0.0, -3.5, 100.0, 1e6}) {
    Tensor x({1, 2}, {c, c + std::log(3.0)});
    Tensor y = tape.softmax_rows(x);
    CHECK(std::abs(y.values[0] - 0.25) < 1e-9);
    CHECK(std::abs(y.values[1] - 0.75) < 1e-9);
  }
}

TEST_CASE("matmul identity and projector rows") {
  Tape tape;
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  Tensor r = tape.matmul(eye, m);
  CHECK(r.values == m.values);
  Tensor proj({2, 2}, {1, 0, 0, 0});
  Tensor pm({2, 2}, {5, 6, 7, 8});
  Tensor pr = tape.matmul(proj, pm);
  CHECK(pr.values == std::vector<double>{5, 6, 0, 0});
}

TEST_CASE("backward closed forms: linear and quadratic") {
  ParamStore ps;
  ps["w"] = Tensor({2, 2}, {0.5, -1.5, 2.0, 3.0});
  Tape t1;
  t1.backward(t1.sum_all(t1.watch(ps, "w")));
  ParamStore g1 = t1.gradients(ps);
  for (double v : g1.at("w").values) CHECK(v == 1.0);
  Tape t2;
  Tensor w = t2.watch(ps, "w");
  t2.backward(t2.scale(t2.sum_all(t2.mul(w, w)), 0.5));
  ParamStore g = t2.gradients(ps);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(g.at("w").values[i] == doctest::Approx(ps["w"].values[i]).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one on random inputs") {
  Rng rng(7);
  for (int it = 0; it < 20; ++it) {
    Tape tape;
    Tensor x = Tensor::normal({5, 9}, rng);
    core::active_kernels().scale(x.values.data(), 10.0, x.values.data(), x.numel());
    Tensor y = tape.softmax_rows(x);
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 9; ++j) s += y.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("forward ops stay finite on extreme inputs") {
  Tape tape;
  Tensor big({1, 4}, {1e8, -1e8, 700.0, -700.0});
  for (double v : tape.softmax_rows(big).values) CHECK(std::isfinite(v));
  for (double v : tape.sigmoid(big).values) CHECK(std::isfinite(v));
  for (double v : tape.tanh(big).values) CHECK(std::isfinite(v));
  Tensor tiny({2}, {0.0, 1e-300});
  for (double v : tape.log(tiny).values) CHECK(std::isfinite(v));
}

TEST_CASE("gradients: matmul, add_rows, relu, mean_all") {
  Rng rng(11);
  ParamStore ps;
  ps["a"] = Tensor::normal({3, 4}, rng);
  ps["b"] = Tensor::normal({4, 5}, rng);
  ps["bias"] = Tensor::normal({5}, rng);
  require_grads_match(ps, [](Tape& tp, const ParamStore& p) {
    Tensor a = tp.watch(p, "a");
    Tensor b = tp.watch(p, "b");
    Tensor bias = tp.watch(p, "bias");
    return tp.mean_all(tp.relu(tp.add_rows(tp.matmul(a, b), bias)));
  });
}

TEST_CASE("gradients: transpose, sub, mul, sum_all") {
  Rng rng(12);
  ParamStore ps;
  ps["a"] = Tensor::normal({3, 4}, rng);
  ps["b"] = Tensor::normal({4, 3}, rng);
  ps["c"] = Tensor::normal({4, 3}, rng);
  require_grads_match(ps, [](Tape& tp, const ParamStore& p) {
    Tensor a = tp.watch(p, "a");
    Tensor b = tp.watch(p, "b");
    Tensor c = tp.watch(p, "c");
    return tp.sum_all(tp.mul(tp.sub(tp.transpose(a), b), c));
  });
}

TEST_CASE("gradients: tanh, sigmoid, scale, add_scalar, add") {
  Rng rng(13);
  ParamStore ps;
  ps["a"] = Tensor::normal({2, 6}, rng);
  require_grads_match(ps, [](Tape& tp, const ParamStore& p) {
    Tensor a = tp.watch(p, "a");
    Tensor lhs = tp.tanh(tp.scale(a, 0.7));
    Tensor rhs = tp.sigmoid(tp.add_scalar(a, 0.3));
    return tp.sum_all(tp.add(lhs, rhs));
  });
}

TEST_CASE("gradients: exp and clamped log") {
  Rng rng(14);
  ParamStore ps;
  ps["a"] = Tensor::normal({3, 3}, rng);
  require_grads_match(ps, [](Tape& tp, const ParamStore& p) {
    Tensor a = tp.watch(p, "a");
    return tp.sum_all(tp.log(tp.add_scalar(tp.exp(tp.scale(a, 0.5)), 1.0)));
  });
}

TEST_CASE("gradients: softmax_rows against weights") {
  Rng rng(15);
  ParamStore ps;
  ps["a"] = Tensor::normal({4, 7}, rng);
  ps["w"] = Tensor::normal({4, 7}, rng);
  require_grads_match(ps, [](Tape& tp, const ParamStore& p) {
    Tensor a = tp.watch(p, "a");
    Tensor w = tp.watch(p, "w");
    return tp.sum_all(tp.mul(tp.softmax_rows(a), w));
  });
}

TEST_CASE("gradients: log_softmax_rows with row/column slices") {
  Rng rng(16);
  ParamStore ps;
  ps["a"] = Tensor::normal({5, 6}, rng);
  require_grads_match(ps, [](Tape& tp, const ParamStore& p) {
    Tensor a = tp.watch(p, "a");
    Tensor ls = tp.log_softmax_rows(a);
    return tp.sum_all(tp.slice_cols(tp.slice_rows(ls, 1, 3), 0, 4));
  });
}

TEST_CASE("gradients: concat both axes and repeat_rows") {
  Rng rng(17);
  ParamStore ps;
  ps["a"] = Tensor::normal({2, 3}, rng);
  ps["b"] = Tensor::normal({2, 2}, rng);
  ps["v"] = Tensor::normal({5}, rng);
  require_grads_match(ps, [](Tape& tp, const ParamStore& p) {
    Tensor top = tp.concat(tp.watch(p, "a"), tp.watch(p, "b"), 1);
    Tensor rep = tp.repeat_rows(tp.watch(p, "v"), 3);
    Tensor all = tp.concat(top, rep, 0);
    return tp.mean_all(tp.tanh(all));
  });
}

TEST_CASE("gradients: slice_vec, vector concat, reshape, mean_axis, leaky_relu") {
  Rng rng(18);
  ParamStore ps;
  ps["v"] = Tensor::normal({6}, rng);
  ps["a"] = Tensor::normal({4, 5}, rng);
  require_grads_match(ps, [](Tape& tp, const ParamStore& p) {
    Tensor part = tp.slice_vec(tp.watch(p, "v"), 1, 3);
    Tensor rowm = tp.mean_axis(tp.watch(p, "a"), 1);
    Tensor joined = tp.concat(part, rowm, 0);
    Tensor resh = tp.reshape(joined, {1, 7});
    return tp.sum_all(tp.leaky_relu(resh, 0.2));
  });
}

TEST_CASE("gradients: mean_axis over columns") {
  Rng rng(19);
  ParamStore ps;
  ps["a"] = Tensor::normal({6, 3}, rng);
  require_grads_match(ps, [](Tape& tp, const ParamStore& p) {
    return tp.sum_all(tp.sigmoid(tp.mean_axis(tp.watch(p, "a"), 0)));
  });
}

TEST_CASE("backward additivity over independent subgraphs") {
  Rng rng(20);
  ParamStore ps;
  ps["a"] = Tensor::normal({3, 3}, rng);
  ps["b"] = Tensor::normal({2, 4}, rng);

  Tape joint;
  Tensor la = joint.mean_all(joint.mul(joint.watch(ps, "a"), joint.watch(ps, "a")));
  Tensor lb = joint.sum_all(joint.tanh(joint.watch(ps, "b")));
  joint.backward(joint.add(la, lb));
  ParamStore gj = joint.gradients(ps);

  Tape ta;
  ta.backward(ta.mean_all(ta.mul(ta.watch(ps, "a"), ta.watch(ps, "a"))));
  ParamStore ga = ta.gradients(ps);
  Tape tb;
  tb.backward(tb.sum_all(tb.tanh(tb.watch(ps, "b"))));
  ParamStore gb = tb.gradients(ps);

  for (const auto& [name, g] : gj)
    for (std::size_t i = 0; i < g.numel(); ++i)
      CHECK(g.values[i] ==
            doctest::Approx(ga.at(name).values[i] + gb.at(name).values[i]).epsilon(1e-12));
}

TEST_CASE("unreachable parameters get zero gradients") {
  Rng rng(21);
  ParamStore ps;
  ps["used"] = Tensor::normal({2, 2}, rng);
  ps["unused"] = Tensor::normal({3, 5}, rng);
  Tape tp;
  tp.backward(tp.sum_all(tp.watch(ps, "used")));
  ParamStore g = tp.gradients(ps);
  REQUIRE(g.count("unused") == 1);
  CHECK(g.at("unused").shape == core::Shape{3, 5});
  for (double v : g.at("unused").values) CHECK(v == 0.0);
  for (double v : g.at("used").values) CHECK(v == 1.0);
}

TEST_CASE("backward rejects non-scalar and foreign losses") {
  Tape tp;
  Tensor x = tp.input(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK_THROWS_AS(tp.backward(x), ContractError);
  Tape other;
  Tensor y = other.sum_all(other.input(Tensor::scalar(1.0)));
  (void)y;
  Tensor constant = Tensor::scalar(3.0);
  CHECK_THROWS_AS(tp.backward(constant), ContractError);
}

TEST_CASE("no-grad scope records nothing") {
  ParamStore ps;
  ps["w"] = Tensor({2, 2}, {1, 2, 3, 4});
  Tape tp;
  {
    Tape::NoGrad guard(tp);
    Tensor w = tp.watch(ps, "w");
    Tensor y = tp.mean_all(tp.relu(w));
    CHECK(y.node == -1);
    CHECK(y.values[0] == doctest::Approx(2.5));
  }
  CHECK(tp.size() == 0);
  CHECK(tp.recording());
}

TEST_CASE("adam first step matches closed form") {
  ParamStore ps;
  ps["w"] = Tensor::scalar(0.0);
  ParamStore g;
  g["w"] = Tensor::scalar(2.0);
  core::AdamState st;
  core::adam_step(ps, g, st, 0.1);
  CHECK(st.t == 1);
  const double expected = -0.1 * 2.0 / (2.0 + 1e-8);
  CHECK(ps["w"].values[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adam two steps reproduce the moment recurrence") {
  // Oracle: the textbook recurrence evaluated by hand for constant gradient.
  const double g = 0.7, lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0, theta = 1.3;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    theta -= lr * mhat / (std::sqrt(vhat) + eps);
  }

  ParamStore ps;
  ps["w"] = Tensor::scalar(1.3);
  ParamStore grad;
  grad["w"] = Tensor::scalar(g);
  core::AdamState st;
  core::adam_step(ps, grad, st, lr);
  core::adam_step(ps, grad, st, lr);
  CHECK(st.t == 2);
  CHECK(ps["w"].values[0] == doctest::Approx(theta).epsilon(1e-14));
}

TEST_CASE("adam rejects missing and misshapen gradients") {
  ParamStore ps;
  ps["w"] = Tensor({2, 2});
  core::AdamState st;
  ParamStore empty;
  CHECK_THROWS_AS(core::adam_step(ps, empty, st, 0.1), ContractError);
  ParamStore bad;
  bad["w"] = Tensor({2, 3});
  CHECK_THROWS_AS(core::adam_step(ps, bad, st, 0.1), DimensionError);
}

TEST_CASE("checkpoint round-trips within float32 precision") {
  Rng rng(33);
  ParamStore ps;
  ps["mhsa/wq0"] = Tensor::normal({8, 4}, rng);
  ps["head/wr"] = Tensor::normal({2, 12}, rng);
  ps["critic/b0"] = Tensor::uniform({7}, -3.0, 3.0, rng);
  const std::string path = (std::filesystem::temp_directory_path() / "mata_ckpt_test.bin").string();
  core::save_checkpoint(ps, path);
  ParamStore back = core::load_checkpoint(path);
  REQUIRE(back.size() == ps.size());
  for (const auto& [name, t] : ps) {
    REQUIRE(back.count(name) == 1);
    CHECK(back.at(name).shape == t.shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t.values[i];
      const double loaded = back.at(name).values[i];
      CHECK(std::abs(orig - loaded) <= std::abs(orig) * 1e-6 + 1e-30);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects unknown version and truncated blob") {
  namespace fs = std::filesystem;
  const std::string vpath = (fs::temp_directory_path() / "mata_ckpt_badver.bin").string();
  {
    std::FILE* f = std::fopen(vpath.c_str(), "wb");
    const char* txt = "{\"format_version\":2,\"params\":[]}\n";
    std::fwrite(txt, 1, std::strlen(txt), f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(core::load_checkpoint(vpath), IoError);
  fs::remove(vpath);

  const std::string tpath = (fs::temp_directory_path() / "mata_ckpt_trunc.bin").string();
  {
    std::FILE* f = std::fopen(tpath.c_str(), "wb");
    const char* txt =
        "{\"format_version\":1,\"params\":[{\"name\":\"w\",\"shape\":[4],\"offset\":0}]}\n";
    std::fwrite(txt, 1, std::strlen(txt), f);
    const char bytes[8] = {0};
    std::fwrite(bytes, 1, 8, f);  // 8 bytes, manifest promises 16
    std::fclose(f);
  }
  CHECK_THROWS_AS(core::load_checkpoint(tpath), IoError);
  fs::remove(tpath);
}

TEST_CASE("rng streams are deterministic and label-separated") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());

  Rng s1 = core::derive_rng(1234, "env", 0);
  Rng s2 = core::derive_rng(1234, "env", 0);
  Rng s3 = core::derive_rng(1234, "action", 0);
  Rng s4 = core::derive_rng(1234, "env", 1);
  bool differs3 = false, differs4 = false;
  for (int i = 0; i < 16; ++i) {
    const std::uint64_t x = s1.next();
    CHECK(x == s2.next());
    differs3 |= (x != s3.next());
    differs4 |= (x != s4.next());
  }
  CHECK(differs3);
  CHECK(differs4);

  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  Rng n(6);
  for (int i = 0; i < 1000; ++i) CHECK(std::isfinite(n.normal()));
  Rng ib(7);
  for (int i = 0; i < 1000; ++i) CHECK(ib.below(13) < 13);
}

TEST_CASE("scalar and simd kernels agree") {
  const core::KernelTable& s = core::scalar_kernels();
  const core::KernelTable* simd = core::avx2_kernels();
  if (simd == nullptr) {
    MESSAGE("AVX2 unavailable; scalar-only configuration");
    return;
  }
  Rng rng(55);
  auto fill = [&rng](std::vector<double>& v) {
    for (auto& x : v) x = rng.normal();
  };
  for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{4}, std::size_t{7},
                        std::size_t{64}, std::size_t{301}}) {
    std::vector<double> x(n), y(n), o1(n), o2(n);
    fill(x);
    fill(y);
    auto close = [](const std::vector<double>& a, const std::vector<double>& b) {
      for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > 1e-12 * (1.0 + std::abs(a[i]))) return false;
      return true;
    };
    s.add(x.data(), y.data(), o1.data(), n);
    simd->add(x.data(), y.data(), o2.data(), n);
    CHECK(close(o1, o2));
    s.sub(x.data(), y.data(), o1.data(), n);
    simd->sub(x.data(), y.data(), o2.data(), n);
    CHECK(close(o1, o2));
    s.mul(x.data(), y.data(), o1.data(), n);
    simd->mul(x.data(), y.data(), o2.data(), n);
    CHECK(close(o1, o2));
    s.scale(x.data(), 1.7, o1.data(), n);
    simd->scale(x.data(), 1.7, o2.data(), n);
    CHECK(close(o1, o2));
    s.relu(x.data(), o1.data(), n);
    simd->relu(x.data(), o2.data(), n);
    CHECK(close(o1, o2));
    s.leaky_relu(x.data(), 0.2, o1.data(), n);
    simd->leaky_relu(x.data(), 0.2, o2.data(), n);
    CHECK(close(o1, o2));

    std::vector<double> g1(n, 0.5), g2(n, 0.5);
    s.relu_grad_acc(x.data(), y.data(), g1.data(), n);
    simd->relu_grad_acc(x.data(), y.data(), g2.data(), n);
    CHECK(close(g1, g2));
    g1.assign(n, 0.25);
    g2.assign(n, 0.25);
    s.leaky_relu_grad_acc(x.data(), 0.2, y.data(), g1.data(), n);
    simd->leaky_relu_grad_acc(x.data(), 0.2, y.data(), g2.data(), n);
    CHECK(close(g1, g2));

    std::vector<double> a1 = y, a2 = y;
    s.axpy(0.3, x.data(), a1.data(), n);
    simd->axpy(0.3, x.data(), a2.data(), n);
    CHECK(close(a1, a2));

    const double d1 = s.dot(x.data(), y.data(), n);
    const double d2 = simd->dot(x.data(), y.data(), n);
    CHECK(std::abs(d1 - d2) <= 1e-10 * (1.0 + std::abs(d1)));
    const double s1 = s.sum(x.data(), n);
    const double s2 = simd->sum(x.data(), n);
    CHECK(std::abs(s1 - s2) <= 1e-10 * (1.0 + std::abs(s1)));
  }

  // gemm variants on a few irregular shapes
  struct Dims {
    std::size_t m, k, n;
  };
  for (const auto& d : {Dims{1, 1, 1}, Dims{3, 5, 2}, Dims{8, 8, 8}, Dims{13, 31, 17}}) {
    std::vector<double> A(d.m * d.k), B(d.k * d.n), Bt(d.n * d.k), At(d.k * d.m);
    fill(A);
    fill(B);
    fill(Bt);
    fill(At);
    std::vector<double> c1(d.m * d.n, 0.1), c2(d.m * d.n, 0.1);
    s.gemm_nn(A.data(), B.data(), c1.data(), d.m, d.k, d.n);
    simd->gemm_nn(A.data(), B.data(), c2.data(), d.m, d.k, d.n);
    for (std::size_t i = 0; i < c1.size(); ++i)
      CHECK(std::abs(c1[i] - c2[i]) <= 1e-10 * (1.0 + std::abs(c1[i])));
    c1.assign(d.m * d.n, -0.2);
    c2.assign(d.m * d.n, -0.2);
    s.gemm_nt(A.data(), Bt.data(), c1.data(), d.m, d.k, d.n);
    simd->gemm_nt(A.data(), Bt.data(), c2.data(), d.m, d.k, d.n);
    for (std::size_t i = 0; i < c1.size(); ++i)
      CHECK(std::abs(c1[i] - c2[i]) <= 1e-10 * (1.0 + std::abs(c1[i])));
    c1.assign(d.m * d.n, 0.0);
    c2.assign(d.m * d.n, 0.0);
    s.gemm_tn(At.data(), B.data(), c1.data(), d.m, d.k, d.n);
    simd->gemm_tn(At.data(), B.data(), c2.data(), d.m, d.k, d.n);
    for (std::size_t i = 0; i < c1.size(); ++i)
      CHECK(std::abs(c1[i] - c2[i]) <= 1e-10 * (1.0 + std::abs(c1[i])));
  }
}

TEST_CASE("active kernel table is one of the two implementations") {
  const core::KernelTable& active = core::active_kernels();
  const std::string name = active.name;
  CHECK((name == "scalar" || name == "avx2"));
}
