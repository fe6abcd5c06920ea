#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "stylecal/checkpoint.hpp"
#include "stylecal/nn.hpp"
#include "stylecal/rng.hpp"

using namespace stylecal;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  int n = shape_size(s);
  Array d(n);
  for (int i = 0; i < n; ++i) d[i] = rng.uniform(lo, hi);
  return Tensor(std::move(s), std::move(d));
}

GruP zero_gru(int in, int hid) {
  GruP p;
  p.Wz = Tensor::zeros({in, hid});
  p.Uz = Tensor::zeros({hid, hid});
  p.bz = Tensor::zeros({hid});
  p.Wr = Tensor::zeros({in, hid});
  p.Ur = Tensor::zeros({hid, hid});
  p.br = Tensor::zeros({hid});
  p.Wh = Tensor::zeros({in, hid});
  p.Uh = Tensor::zeros({hid, hid});
  p.bh = Tensor::zeros({hid});
  return p;
}

}  // namespace

TEST_CASE("gru_step with zero parameters halves the hidden state") {
  Rng rng(1);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor h = random_tensor({3, 5}, rng);
  Tensor h2 = gru_step(x, h, zero_gru(4, 5));
  CHECK((h2.data - 0.5 * h.data).abs().maxCoeff() < 1e-15);

  Tensor h0 = Tensor::zeros({3, 5});
  Tensor out = gru_step(Tensor::zeros({3, 4}), h0, zero_gru(4, 5));
  CHECK(out.data.abs().maxCoeff() == 0.0);
}

TEST_CASE("gradient through 5 chained GRU steps matches finite differences") {
  Rng rng(2);
  ParameterStore store;
  add_gru_params(store, "g", 3, 4, rng);
  std::vector<Tensor> point;
  std::vector<std::string> names = store.names();
  for (const auto& n : names) point.push_back(Tensor(store.at(n).shape, store.at(n).value));
  Tensor x = random_tensor({2, 3}, rng);
  point.push_back(x);

  auto fn = [&names](Tape&, std::vector<Tensor>& v) {
    std::map<std::string, Tensor> p;
    for (std::size_t i = 0; i < names.size(); ++i) p.emplace(names[i], v[i]);
    GruP g = gru_ref(p, "g");
    Tensor h = Tensor::zeros({2, 4});
    for (int t = 0; t < 5; ++t) h = gru_step(v.back(), h, g);
    return sum(square(h));
  };
  CHECK(grad_check(fn, point, 1e-5) < 1e-4);
}

TEST_CASE("bigru_encode basics") {
  Rng rng(3);
  ParameterStore store;
  add_gru_params(store, "fwd", 3, 4, rng);
  add_gru_params(store, "bwd", 3, 4, rng);
  add_linear_params(store, "out", 8, 6, rng);
  Tape tape;
  auto p = store.leaves(tape);
  GruP fwd = gru_ref(p, "fwd"), bwd = gru_ref(p, "bwd");
  LinearP out = linear_ref(p, "out");

  SUBCASE("length-1 sequences are allowed and sized correctly") {
    std::vector<Tensor> seq{random_tensor({2, 3}, rng)};
    Tensor enc = bigru_encode(seq, fwd, bwd, out);
    CHECK(enc.shape == Shape{2, 6});
  }
  SUBCASE("output shape holds for longer sequences") {
    std::vector<Tensor> seq;
    for (int t = 0; t < 7; ++t) seq.push_back(random_tensor({2, 3}, rng));
    CHECK(bigru_encode(seq, fwd, bwd, out).shape == Shape{2, 6});
  }
  SUBCASE("empty sequence is an error") {
    std::vector<Tensor> seq;
    CHECK_THROWS(bigru_encode(seq, fwd, bwd, out));
  }
}

TEST_CASE("reversing the sequence swaps forward/backward roles under tied weights") {
  Rng rng(4);
  ParameterStore store;
  add_gru_params(store, "g", 3, 4, rng);
  Tape tape;
  auto p = store.leaves(tape);
  GruP g = gru_ref(p, "g");
  // identity output layer exposes concat(h_fwd, h_bwd) directly
  Array eye = Array::Zero(8 * 8);
  for (int i = 0; i < 8; ++i) eye[i * 8 + i] = 1.0;
  LinearP out{Tensor({8, 8}, eye), Tensor::zeros({8})};

  std::vector<Tensor> seq, rev;
  for (int t = 0; t < 5; ++t) seq.push_back(random_tensor({2, 3}, rng));
  rev.assign(seq.rbegin(), seq.rend());

  Tensor enc = bigru_encode(seq, g, g, out);
  Tensor enc_rev = bigru_encode(rev, g, g, out);
  // forward half of the reversed encoding equals the backward half of the original
  Eigen::Map<const MatRM> e(enc.data.data(), 2, 8);
  Eigen::Map<const MatRM> er(enc_rev.data.data(), 2, 8);
  CHECK((er.leftCols(4) - e.rightCols(4)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((er.rightCols(4) - e.leftCols(4)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("kl to standard normal") {
  SUBCASE("matches the prior exactly at zero") {
    DiagGaussian g{Tensor::zeros({4}), Tensor::zeros({4})};
    CHECK(kl_to_standard_normal(g).scalar() == doctest::Approx(0.0));
  }
  SUBCASE("unit mean shift costs one half") {
    DiagGaussian g{Tensor::constant({1}, 1.0), Tensor::zeros({1})};
    CHECK(kl_to_standard_normal(g).scalar() == doctest::Approx(0.5));
  }
  SUBCASE("closed form matches a Monte Carlo estimate") {
    Rng rng(5);
    double mu = 0.4, ls = -0.3, sigma = std::exp(ls);
    DiagGaussian g{Tensor::constant({1}, mu), Tensor::constant({1}, ls)};
    double closed = kl_to_standard_normal(g).scalar();
    // E_q[log q(x) - log p(x)]
    const int n = 1000000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      double x = mu + sigma * rng.normal();
      double logq = -0.5 * std::log(2 * M_PI) - ls - (x - mu) * (x - mu) / (2 * sigma * sigma);
      double logp = -0.5 * std::log(2 * M_PI) - x * x / 2;
      acc += logq - logp;
    }
    CHECK(std::abs(closed - acc / n) < 1e-2);
  }
  SUBCASE("is non-negative") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      DiagGaussian g{random_tensor({3}, rng, -3, 3), random_tensor({3}, rng, -2, 1)};
      CHECK(kl_to_standard_normal(g).scalar() >= -1e-12);
    }
  }
}

TEST_CASE("gaussian log density") {
  SUBCASE("standard normal at the mean") {
    DiagGaussian g{Tensor::zeros({1}), Tensor::zeros({1})};
    CHECK(gaussian_log_density(g, Tensor::zeros({1})).scalar() ==
          doctest::Approx(-0.5 * std::log(2 * M_PI)));
  }
  SUBCASE("density integrates to 1 on a fine grid") {
    double mu = 0.3, ls = -0.5;
    DiagGaussian g{Tensor::constant({1}, mu), Tensor::constant({1}, ls)};
    double lo = mu - 8 * std::exp(ls), hi = mu + 8 * std::exp(ls);
    int n = 20000;
    double h = (hi - lo) / n, acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      double x = lo + i * h;
      double w = (i == 0 || i == n) ? 0.5 : 1.0;
      acc += w * std::exp(gaussian_log_density(g, Tensor::constant({1}, x)).scalar());
    }
    CHECK(std::abs(acc * h - 1.0) < 1e-3);
  }
  SUBCASE("gradient w.r.t. mean vanishes at x = mean") {
    Tape tape;
    Tensor mu = tape.leaf({2}, (Array(2) << 0.1, -0.4).finished());
    DiagGaussian g{mu, Tensor::zeros({2})};
    Tensor ld = gaussian_log_density(g, Tensor({2}, (Array(2) << 0.1, -0.4).finished()));
    tape.backward(ld);
    CHECK(tape.grad(mu).abs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("reparameterized sampling") {
  Rng rng(7);
  DiagGaussian g{Tensor::constant({2}, 0.7), Tensor::constant({2}, -1.0)};
  SUBCASE("zero noise returns the mean") {
    Tensor s = sample_reparameterized(g, Tensor::zeros({2}));
    CHECK((s.data - 0.7).abs().maxCoeff() == 0.0);
  }
  SUBCASE("gradient w.r.t. mean is the identity") {
    Tape tape;
    Tensor mu = tape.leaf({2}, Array::Constant(2, 0.7));
    Tensor s = sample_reparameterized({mu, Tensor::constant({2}, -1.0)},
                                      Tensor({2}, (Array(2) << 0.3, -0.8).finished()));
    tape.backward(sum(s));
    CHECK((tape.grad(mu) - 1.0).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("empirical mean is within 3 standard errors") {
    Rng rng(12345);
    const int n = 100000;
    double acc = 0.0, sigma = std::exp(-1.0);
    for (int i = 0; i < n; ++i) {
      Tensor noise({2}, (Array(2) << rng.normal(), rng.normal()).finished());
      acc += sample_reparameterized(g, noise).data.mean();
    }
    double se = sigma / std::sqrt(2.0 * n);
    CHECK(std::abs(acc / n - 0.7) < 3 * se);
  }
}

TEST_CASE("adam") {
  SUBCASE("first step moves by about lr, zero grad leaves parameters fixed") {
    ParameterStore store;
    store.add("x", {2}, (Array(2) << 1.0, -2.0).finished());
    AdamConfig cfg;
    cfg.lr = 0.01;
    GradMap grads{{"x", (Array(2) << 0.3, -0.7).finished()}};
    adam_step(store, grads, cfg);
    // bias-corrected first step is lr * g/(|g|+eps)
    CHECK(store.at("x").value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
    CHECK(store.at("x").value[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));

    GradMap zero{{"x", Array::Zero(2)}};
    Array before = store.at("x").value;
    ParameterStore fresh;
    fresh.add("y", {2}, before);
    adam_step(fresh, GradMap{{"y", Array::Zero(2)}}, cfg);
    CHECK((fresh.at("y").value == before).all());
  }
  SUBCASE("missing gradient is an error") {
    ParameterStore store;
    store.add_zeros("x", {2});
    CHECK_THROWS_AS(adam_step(store, GradMap{}, AdamConfig{}), std::invalid_argument);
  }
  SUBCASE("minimizes x^2 from 5 within 2000 steps at lr 0.05") {
    ParameterStore store;
    store.add("x", {1}, Array::Constant(1, 5.0));
    AdamConfig cfg;
    cfg.lr = 0.05;
    int steps = 0;
    for (; steps < 2000; ++steps) {
      double x = store.at("x").value[0];
      if (std::abs(x) < 1e-3) break;
      adam_step(store, GradMap{{"x", Array::Constant(1, 2 * x)}}, cfg);
    }
    CHECK(std::abs(store.at("x").value[0]) < 1e-3);
  }
}

TEST_CASE("cross entropy values") {
  SUBCASE("uniform logits give ln K") {
    Tensor logits = Tensor::zeros({4, 3});
    CHECK(cross_entropy(logits, {0, 1, 2, 0}).scalar() == doctest::Approx(std::log(3.0)));
  }
  SUBCASE("confident correct logits give near-zero loss") {
    Array d = Array::Zero(2 * 3);
    d[0 * 3 + 1] = 1000.0;
    d[1 * 3 + 2] = 1000.0;
    CHECK(cross_entropy(Tensor({2, 3}, d), {1, 2}).scalar() < 1e-3);
  }
}

TEST_CASE("log-std bounding keeps values in range and passes grad_check") {
  Rng rng(8);
  Tensor raw = random_tensor({3, 4}, rng, -30, 30);
  Tensor ls = bounded_log_std(raw);
  CHECK(ls.data.minCoeff() >= kLogStdMin);
  CHECK(ls.data.maxCoeff() <= kLogStdMax);
  auto fn = [](Tape&, std::vector<Tensor>& v) {
    return sum(square(bounded_log_std(v[0])));
  };
  CHECK(grad_check(fn, {random_tensor({2, 3}, rng, -2, 2)}, 1e-5) < 1e-4);
}

TEST_CASE("clip_global_norm rescales only above the threshold") {
  GradMap g{{"a", Array::Constant(4, 3.0)}, {"b", Array::Constant(4, 4.0)}};
  double norm = clip_global_norm(g, 5.0);
  CHECK(norm == doctest::Approx(10.0));
  double after = std::sqrt(g["a"].square().sum() + g["b"].square().sum());
  CHECK(after == doctest::Approx(5.0));
  GradMap small{{"a", Array::Constant(2, 0.1)}};
  clip_global_norm(small, 5.0);
  CHECK(small["a"][0] == doctest::Approx(0.1));
}

TEST_CASE("checkpoint round-trip is byte identical") {
  Rng rng(9);
  Checkpoint ckpt;
  ckpt.header = {{"format", "1"}, {"kind", "test"}, {"seed", "9"}};
  ParameterStore s;
  add_linear_params(s, "layer", 5, 3, rng);
  ckpt.stores.emplace_back("policy", std::move(s));

  std::string p1 = "ckpt_roundtrip_1.bin", p2 = "ckpt_roundtrip_2.bin";
  save_checkpoint(p1, ckpt);
  Checkpoint loaded = load_checkpoint(p1);
  CHECK(loaded.header_value("kind") == "test");
  CHECK(loaded.store("policy").names() == ckpt.store("policy").names());
  save_checkpoint(p2, loaded);

  auto slurp = [](const std::string& p) {
    FILE* f = std::fopen(p.c_str(), "rb");
    REQUIRE(f);
    std::string data;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) data.append(buf, n);
    std::fclose(f);
    return data;
  };
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("parameter store checksum tracks content") {
  ParameterStore s;
  s.add("a", {2}, (Array(2) << 1, 2).finished());
  auto c1 = s.checksum();
  s.at("a").value[0] = 1.5;
  CHECK(s.checksum() != c1);
}
