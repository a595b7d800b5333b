#include "doctest.h"

#include <cmath>

#include "test_helpers.hpp"
#include "tgan/lipschitz.hpp"

using namespace tgan;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Tensor reconstruct(const SvdResult& r) {
  const int64_t rank = r.s.numel();
  Tensor us = r.u.clone();
  for (int64_t i = 0; i < us.size(0); ++i)
    for (int64_t j = 0; j < rank; ++j)
      us.mutable_data()[static_cast<size_t>(i * rank + j)] *= r.s.at(j);
  return matmul(us, permute(r.v, {1, 0}));
}

double orthonormality_defect(const Tensor& m) {
  // || M^T M - I ||_max over the columns.
  Tensor g = matmul(permute(m, {1, 0}), m);
  const int64_t n = g.size(0);
  double worst = 0.0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      worst = std::max(worst,
                       std::abs(g.at(i * n + j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

double frob(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("svd of the identity is all-ones singular values") {
  Tensor eye = zeros({3, 3});
  for (int64_t i = 0; i < 3; ++i) eye.mutable_data()[i * 3 + i] = 1.0;
  SvdResult r = svd(eye);
  REQUIRE(r.s.numel() == 3);
  for (int64_t i = 0; i < 3; ++i) CHECK(r.s.at(i) == doctest::Approx(1.0));
}

TEST_CASE("svd of a diagonal matrix returns the magnitudes, descending") {
  Tensor d = zeros({2, 2});
  d.mutable_data()[0] = 3.0;
  d.mutable_data()[3] = 0.5;
  SvdResult r = svd(d);
  CHECK(r.s.at(0) == doctest::Approx(3.0));
  CHECK(r.s.at(1) == doctest::Approx(0.5));
  CHECK(spectral_norm(d) == doctest::Approx(3.0));
}

TEST_CASE("svd reconstructs random matrices to 1e-10") {
  Rng rng(101);
  for (auto shape : {Shape{8, 8}, Shape{12, 5}, Shape{5, 12}, Shape{1, 7},
                     Shape{30, 30}}) {
    Tensor w = uniform(shape, -2.0, 2.0, rng);
    SvdResult r = svd(w);
    CHECK(max_abs_diff(reconstruct(r), w) < 1e-10);
    CHECK(orthonormality_defect(r.u) < 1e-10);
    CHECK(orthonormality_defect(r.v) < 1e-10);
    for (int64_t i = 0; i + 1 < r.s.numel(); ++i)
      CHECK(r.s.at(i) >= r.s.at(i + 1));
    for (int64_t i = 0; i < r.s.numel(); ++i) CHECK(r.s.at(i) >= 0.0);
  }
}

TEST_CASE("svd handles rank-deficient matrices") {
  // Rank-1: outer product of two vectors.
  Rng rng(7);
  Tensor a = uniform({6, 1}, -1.0, 1.0, rng);
  Tensor b = uniform({1, 4}, -1.0, 1.0, rng);
  Tensor w = matmul(a, b);
  SvdResult r = svd(w);
  CHECK(max_abs_diff(reconstruct(r), w) < 1e-10);
  CHECK(r.s.at(0) > 0.0);
  for (int64_t i = 1; i < r.s.numel(); ++i)
    CHECK(r.s.at(i) < 1e-10);
  CHECK(orthonormality_defect(r.u) < 1e-10);
}

TEST_CASE("svd rejects non-finite and non-matrix input") {
  Tensor bad = ones({2, 2});
  bad.mutable_data()[0] = std::nan("");
  CHECK_THROWS_AS(svd(bad), NumericalError);
  CHECK_THROWS_AS(svd(ones({2, 2, 2})), ValueError);
}

TEST_CASE("power iteration agrees with the Jacobi largest singular value") {
  Rng rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor w = normal({20, 13}, 0.0, 1.0, rng);
    PowerIterResult p = power_iteration(w);
    CHECK(p.converged);
    CHECK(std::abs(p.sigma - spectral_norm(w)) < 1e-5);
  }
  CHECK_THROWS_AS(power_iteration(zeros({3, 3})), ValueError);
}

TEST_CASE("clip_singular_values caps exactly the values above the bound") {
  Tensor d = zeros({3, 3});
  d.mutable_data()[0] = 3.0;
  d.mutable_data()[4] = 0.9;
  d.mutable_data()[8] = 1.2;
  Tensor c = clip_singular_values(d, 1.0);
  SvdResult r = svd(c);
  CHECK(r.s.at(0) == doctest::Approx(1.0));
  CHECK(r.s.at(1) == doctest::Approx(1.0));
  CHECK(r.s.at(2) == doctest::Approx(0.9));
  CHECK(spectral_norm(c) <= 1.0 + 1e-10);
}

TEST_CASE("clipping is a no-op when the norm is already within the bound") {
  Rng rng(9);
  Tensor w = uniform({6, 6}, -0.05, 0.05, rng);
  REQUIRE(spectral_norm(w) < 1.0);
  Tensor c = clip_singular_values(w, 1.0);
  CHECK(max_abs_diff(c, w) == 0.0);  // bitwise: returned unchanged
}

TEST_CASE("clipping is idempotent and never grows the Frobenius norm") {
  Rng rng(41);
  Tensor w = normal({10, 7}, 0.0, 1.0, rng);
  Tensor once = clip_singular_values(w, 1.0);
  Tensor twice = clip_singular_values(once, 1.0);
  CHECK(max_abs_diff(once, twice) < 1e-10);
  CHECK(frob(once) <= frob(w) + 1e-12);
  CHECK(spectral_norm(once) <= 1.0 + 1e-10);
  // Minimality: singular values below the cap are untouched.
  SvdResult before = svd(w);
  SvdResult after = svd(once);
  for (int64_t i = 0; i < before.s.numel(); ++i) {
    const double expect = std::min(before.s.at(i), 1.0);
    CHECK(after.s.at(i) == doctest::Approx(expect).epsilon(1e-9));
  }
  CHECK_THROWS_AS(clip_singular_values(w, 0.0), ValueError);
}

TEST_CASE("conv weights matricize to out_channels x rest and round trip") {
  Rng rng(3);
  Tensor w = uniform({64, 3, 4, 4, 4}, -1.0, 1.0, rng);
  Tensor m = matricize_conv(w);
  CHECK(m.shape() == Shape{64, 3 * 4 * 4 * 4});
  Tensor back = dematricize_conv(m, w.shape());
  CHECK(back.shape() == w.shape());
  CHECK(max_abs_diff(back, w) == 0.0);
}

TEST_CASE("bn gamma clamps against sqrt(sigma_B^2 + eps)") {
  BnState state(3, 0.9, 1e-5);
  state.running_std = {1.0, 2.0, 0.5};
  Tensor gamma = from_data({3}, {2.0, -0.3, 1.0});
  clip_bn_gamma(gamma, state);
  CHECK(gamma.at(0) == doctest::Approx(std::sqrt(1.0 + 1e-5)));  // clamped
  CHECK(gamma.at(1) == -0.3);  // inside the bound, sign kept, untouched
  CHECK(gamma.at(2) == doctest::Approx(std::sqrt(0.25 + 1e-5)));

  Tensor tiny = from_data({3}, {0.0, 1e-12, -1e-12});
  clip_bn_gamma(tiny, state);
  CHECK(tiny.at(0) == 1e-8);  // strictly positive magnitude enforced
  CHECK(tiny.at(1) == 1e-8);
  CHECK(tiny.at(2) == -1e-8);

  Tensor wrong = ones({2});
  CHECK_THROWS_AS(clip_bn_gamma(wrong, state), ValueError);
}

TEST_CASE("svc_apply clips every discriminator weight and gamma, nothing else") {
  ModelConfig c = ModelConfig::preset("desk32");
  ParamStore store = build(c, 123);
  // Inflate a few parameters past the bound.
  for (auto& v : store.at("d.conv1.w").mutable_data()) v *= 40.0;
  for (auto& v : store.at("d.fc.w").mutable_data()) v *= 40.0;
  store.at("d.bn1.gamma").mutable_data()[0] = 5.0;
  // Inflate a generator weight too; it must pass through untouched.
  for (auto& v : store.at("g0.deconv1.w").mutable_data()) v *= 40.0;
  Tensor g_before = store.at("g0.deconv1.w").clone();
  Tensor beta_before = store.at("d.bn1.beta").clone();

  ParamStore clipped = svc_apply(store);

  CHECK(spectral_norm(matricize_conv(clipped.at("d.conv1.w"))) <= 1.0 + 1e-9);
  CHECK(spectral_norm(matricize_conv(clipped.at("d.conv0.w"))) <= 1.0 + 1e-9);
  CHECK(spectral_norm(clipped.at("d.fc.w")) <= 1.0 + 1e-9);
  CHECK(clipped.at("d.bn1.gamma").at(0) ==
        doctest::Approx(std::sqrt(1.0 + 1e-5)));
  CHECK(max_abs_diff(clipped.at("g0.deconv1.w"), g_before) == 0.0);
  CHECK(max_abs_diff(clipped.at("d.bn1.beta"), beta_before) == 0.0);
  // Pure: the input store is unchanged.
  CHECK(store.at("d.bn1.gamma").at(0) == 5.0);
  CHECK(clipped.at("d.conv1.w").shape() == store.at("d.conv1.w").shape());
}

TEST_CASE("compose_bound multiplies per-layer constants over the plan") {
  ModelConfig c = ModelConfig::preset("desk32");
  ParamStore store = build(c, 5);
  LipschitzCertificate cert = compose_bound(store, 42);
  CHECK(cert.iteration == 42);
  // conv0, lrelu, (conv, bn, lrelu) x2, fc
  REQUIRE(cert.layers.size() == 2 + 2 * 3 + 1);
  double prod = 1.0;
  for (const auto& l : cert.layers) {
    CHECK(l.k >= 0.0);
    prod *= l.k;
  }
  CHECK(cert.k == doctest::Approx(prod));
  // Independent check of one factor.
  CHECK(cert.layers[0].k ==
        doctest::Approx(spectral_norm(matricize_conv(store.at("d.conv0.w")))));
  CHECK(cert.layers[1].k == 1.0);  // leaky relu

  nlohmann::json j = cert.to_json();
  CHECK(j.at("k").get<double>() == doctest::Approx(cert.k));
  CHECK(j.at("iteration").get<int64_t>() == 42);
  CHECK(j.at("layers").size() == cert.layers.size());
}

TEST_CASE("after clipping, the certificate bound collapses toward 1") {
  ModelConfig c = ModelConfig::preset("desk32");
  ParamStore store = build(c, 7);
  ParamStore clipped = svc_apply(store);
  LipschitzCertificate cert = compose_bound(clipped);
  // Every weight factor is <= 1; BN factors are <= 1 after the gamma clamp
  // (fresh stats: sigma_B = 1).
  for (const auto& l : cert.layers) CHECK(l.k <= 1.0 + 1e-9);
  CHECK(cert.k <= 1.0 + 1e-9);
}

TEST_CASE("empirical slope of a linear map stays under its spectral norm") {
  Rng rng(77);
  Tensor w = normal({1, 16}, 0.0, 1.0, rng);
  const double bound = spectral_norm(w);
  auto f = [&](const Tensor& x) {
    return matmul(x, permute(w, {1, 0})).item();
  };
  auto sampler = [](Rng& r) { return normal({1, 16}, 0.0, 1.0, r); };
  Rng pair_rng(5);
  const double slope = empirical_lipschitz(f, sampler, 64, pair_rng);
  CHECK(slope > 0.0);
  CHECK(slope <= bound + 1e-6);
  // A rich sample should get close to the true constant for a linear map.
  CHECK(slope > 0.5 * bound);
}
