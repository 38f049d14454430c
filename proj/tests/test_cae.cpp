#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <doctest.h>

#include "satrestore/cae.hpp"
#include "satrestore/dct.hpp"
#include "satrestore/errors.hpp"
#include "satrestore/image.hpp"
#include "satrestore/net.hpp"
#include "satrestore/rng.hpp"
#include "support/test_support.hpp"

using namespace satrestore;
using namespace satrestore::testing;

namespace {

Tensor3 random_tensor(int c, int h, int w, Rng& rng, double scale = 1.0) {
  Tensor3 t(c, h, w);
  for (double& v : t.v) v = scale * (rng.uniform() - 0.5);
  return t;
}

double tensor_dot(const Tensor3& a, const Tensor3& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) acc += a.v[i] * b.v[i];
  return acc;
}

std::shared_ptr<CaeModel> fixture_cae() {
  return CaeModel::load(fixtures_dir() + "/tiny_cae.json");
}

}  // namespace

TEST_CASE("network: conv2d forward matches a nested-loop oracle") {
  Rng rng(60);
  LayerDesc l;
  l.kind = LayerKind::Conv2d;
  l.in_ch = 2;
  l.out_ch = 3;
  l.kh = l.kw = 3;
  l.stride = 2;
  l.pad = 1;
  l.offset = 0;
  Network net;
  net.layers = {l};
  net.weights.resize(l.weight_count());
  for (double& w : net.weights) w = rng.uniform() - 0.5;

  const Tensor3 x = random_tensor(2, 6, 6, rng);
  const Tensor3 y = net.forward(x);
  REQUIRE(y.c == 3);
  REQUIRE(y.h == 3);
  REQUIRE(y.w == 3);
  for (int oc = 0; oc < 3; ++oc) {
    for (int r = 0; r < y.h; ++r) {
      for (int c = 0; c < y.w; ++c) {
        double acc = 0.0;
        for (int ic = 0; ic < 2; ++ic) {
          for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
              const int rr = r * 2 - 1 + i;
              const int cc = c * 2 - 1 + j;
              if (rr < 0 || rr >= 6 || cc < 0 || cc >= 6) continue;
              const double w =
                  net.weights[((static_cast<std::size_t>(oc) * 2 + ic) * 3 + i) * 3 + j];
              acc += w * x.at(ic, rr, cc);
            }
          }
        }
        CHECK(y.at(oc, r, c) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("network: transposed convolution is the adjoint of convolution") {
  Rng rng(61);
  LayerDesc conv;
  conv.kind = LayerKind::Conv2d;
  conv.in_ch = 3;
  conv.out_ch = 2;
  conv.kh = conv.kw = 4;
  conv.stride = 2;
  conv.pad = 1;
  conv.offset = 0;

  // Same blob read through the transposed layout ([in][out][kh][kw]) with
  // in/out swapped is exactly the adjoint map.
  LayerDesc tconv;
  tconv.kind = LayerKind::ConvTranspose2d;
  tconv.in_ch = 2;
  tconv.out_ch = 3;
  tconv.kh = tconv.kw = 4;
  tconv.stride = 2;
  tconv.pad = 1;
  tconv.offset = 0;

  Network a, b;
  a.layers = {conv};
  b.layers = {tconv};
  a.weights.resize(conv.weight_count());
  for (double& w : a.weights) w = rng.uniform() - 0.5;
  b.weights = a.weights;

  const Tensor3 x = random_tensor(3, 8, 8, rng);
  const Tensor3 y = random_tensor(2, 4, 4, rng);
  const Tensor3 ax = a.forward(x);
  REQUIRE(ax.c == 2);
  REQUIRE(ax.h == 4);
  const Tensor3 bty = b.forward(y);
  REQUIRE(bty.c == 3);
  REQUIRE(bty.h == 8);
  CHECK(tensor_dot(ax, y) == doctest::Approx(tensor_dot(x, bty)).epsilon(1e-10));
}

TEST_CASE("network: reverse-mode input gradient matches finite differences") {
  Rng rng(62);
  Network net;
  LayerDesc c1;
  c1.kind = LayerKind::Conv2d;
  c1.in_ch = 2;
  c1.out_ch = 3;
  c1.kh = c1.kw = 3;
  c1.stride = 1;
  c1.pad = 1;
  c1.offset = 0;
  LayerDesc b1;
  b1.kind = LayerKind::AddBias;
  b1.out_ch = 3;
  b1.offset = c1.weight_count();
  LayerDesc act;
  act.kind = LayerKind::LeakyRelu;
  act.slope = 0.1;
  LayerDesc c2;
  c2.kind = LayerKind::Conv2d;
  c2.in_ch = 3;
  c2.out_ch = 1;
  c2.kh = c2.kw = 3;
  c2.stride = 1;
  c2.pad = 1;
  c2.offset = b1.offset + b1.weight_count();
  net.layers = {c1, b1, act, c2};
  net.weights.resize(c2.offset + c2.weight_count());
  for (double& w : net.weights) w = 0.4 * (rng.uniform() - 0.5);
  // Bias keeps pre-activations away from the kink.
  for (std::size_t i = b1.offset; i < b1.offset + 3; ++i) net.weights[i] = 0.6;

  const Tensor3 x = random_tensor(2, 5, 5, rng, 0.6);
  const Tensor3 cot = random_tensor(1, 5, 5, rng);
  const Tensor3 g = net.vjp(x, cot);
  REQUIRE(g.same_shape(x));

  const double step = 1e-6;
  Tensor3 xp = x;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    xp.v[i] = x.v[i] + step;
    const double up = tensor_dot(net.forward(xp), cot);
    xp.v[i] = x.v[i] - step;
    const double dn = tensor_dot(net.forward(xp), cot);
    xp.v[i] = x.v[i];
    const double fd = (up - dn) / (2.0 * step);
    num += (fd - g.v[i]) * (fd - g.v[i]);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-7);
}

TEST_CASE("analytic model: decode inverts encode and fixes constants") {
  const AnalyticCae m(16, 16, 8, 0.5, 0.05);
  Rng rng(63);
  Tensor3 x(1, 16, 16);
  for (double& v : x.v) v = rng.uniform();
  const Tensor3 z = m.encode(x);
  const DecodeOut out = m.decode(z);
  REQUIRE(out.mean.same_shape(x));
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    CHECK(out.mean.v[i] == doctest::Approx(x.v[i]).epsilon(1e-12));
  }
  for (double s : out.sigma.v) CHECK(s == 0.05);
}

TEST_CASE("analytic model: decode_vjp is the exact adjoint of decode") {
  const AnalyticCae m(16, 16, 8, 0.5, 0.05);
  Rng rng(64);
  const Tensor3 z = random_tensor(1, 16, 16, rng);
  const Tensor3 cot = random_tensor(1, 16, 16, rng);
  const Tensor3 zero(1, 16, 16);
  const Tensor3 g = m.decode_vjp(z, cot, zero);
  // Directional derivative along a random direction.
  const Tensor3 dir = random_tensor(1, 16, 16, rng);
  Tensor3 z2 = z;
  const double t = 1e-6;
  for (std::size_t i = 0; i < z2.v.size(); ++i) z2.v[i] += t * dir.v[i];
  const double fd =
      (tensor_dot(m.decode(z2).mean, cot) - tensor_dot(m.decode(z).mean, cot)) / t;
  CHECK(fd == doctest::Approx(tensor_dot(g, dir)).epsilon(1e-6));
}

TEST_CASE("analytic model: hyper is the fixed zero-mean prior and rejects latents") {
  const AnalyticCae m(16, 16, 8, 0.7, 0.02);
  const HyperOut h = m.hyper(Tensor3());
  REQUIRE(h.mu_z.c == 1);
  REQUIRE(h.mu_z.h == 16);
  for (double v : h.mu_z.v) CHECK(v == 0.0);
  for (double v : h.sigma_z.v) CHECK(v == 0.7);
  CHECK_THROWS_AS(m.hyper(Tensor3(1, 2, 2)), ConfigError);
}

TEST_CASE("latent prior log-density matches the Gaussian formula") {
  const double tau = 0.5;
  const AnalyticCae m(8, 8, 8, tau, 0.05);
  Rng rng(65);
  const Tensor3 z = random_tensor(1, 8, 8, rng);
  double expected = 0.0;
  const double log_norm = -0.5 * std::log(2.0 * 3.14159265358979323846) - std::log(tau);
  for (double v : z.v) expected += log_norm - 0.5 * v * v / (tau * tau);
  CHECK(latent_prior_logpdf(m, z, Tensor3()) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("latent prior log-density differentiates to -(z - mu)/sigma^2") {
  const double tau = 0.5;
  const AnalyticCae m(8, 8, 8, tau, 0.05);
  Rng rng(66);
  const Tensor3 z = random_tensor(1, 8, 8, rng);
  Tensor3 zp = z;
  const double step = 1e-6;
  for (std::size_t i = 0; i < z.v.size(); i += 7) {
    zp.v[i] = z.v[i] + step;
    const double up = latent_prior_logpdf(m, zp, Tensor3());
    zp.v[i] = z.v[i] - step;
    const double dn = latent_prior_logpdf(m, zp, Tensor3());
    zp.v[i] = z.v[i];
    CHECK((up - dn) / (2 * step) == doctest::Approx(-z.v[i] / (tau * tau)).epsilon(1e-5));
  }
}

TEST_CASE("fixture autoencoder loads with the advertised geometry") {
  auto m = fixture_cae();
  CHECK(m->latent_channels() == 2);
  CHECK(m->downsample_factor() == 4);
  CHECK(m->has_hyper());
  const std::string desc = m->describe();
  CHECK(desc.find("encoder") != std::string::npos);
  CHECK(desc.find("decoder") != std::string::npos);
  CHECK(desc.find("conv2d") != std::string::npos);
}

TEST_CASE("fixture autoencoder: shapes line up end to end") {
  auto m = fixture_cae();
  Rng rng(67);
  const Tensor3 x = random_tensor(1, 16, 16, rng, 0.5);
  const Tensor3 z = m->encode(x);
  REQUIRE(z.c == 2);
  REQUIRE(z.h == 4);
  REQUIRE(z.w == 4);
  const DecodeOut out = m->decode(z);
  REQUIRE(out.mean.same_shape(x));
  REQUIRE(out.sigma.same_shape(x));
  for (double s : out.sigma.v) CHECK(s > 0.0);
  const Tensor3 h = m->hyper_encode(z);
  REQUIRE(h.c == 2);
  REQUIRE(h.h == 2);
  const HyperOut hp = m->hyper(h);
  REQUIRE(hp.mu_z.same_shape(z));
  REQUIRE(hp.sigma_z.same_shape(z));
  for (double s : hp.sigma_z.v) CHECK(s > 0.0);
}

TEST_CASE("fixture autoencoder: decode_vjp matches finite differences") {
  auto m = fixture_cae();
  Rng rng(68);
  const Tensor3 z = random_tensor(2, 4, 4, rng, 0.8);
  const Tensor3 cm = random_tensor(1, 16, 16, rng);
  const Tensor3 cs = random_tensor(1, 16, 16, rng);
  const Tensor3 g = m->decode_vjp(z, cm, cs);
  REQUIRE(g.same_shape(z));

  auto value = [&](const Tensor3& zz) {
    const DecodeOut out = m->decode(zz);
    return tensor_dot(out.mean, cm) + tensor_dot(out.sigma, cs);
  };
  const double step = 1e-6;
  Tensor3 zp = z;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < z.v.size(); ++i) {
    zp.v[i] = z.v[i] + step;
    const double up = value(zp);
    zp.v[i] = z.v[i] - step;
    const double dn = value(zp);
    zp.v[i] = z.v[i];
    const double fd = (up - dn) / (2.0 * step);
    num += (fd - g.v[i]) * (fd - g.v[i]);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("fixture autoencoder: hyper_vjp matches finite differences") {
  auto m = fixture_cae();
  Rng rng(69);
  const Tensor3 h = random_tensor(2, 2, 2, rng, 0.8);
  const Tensor3 cmu = random_tensor(2, 4, 4, rng);
  const Tensor3 csig = random_tensor(2, 4, 4, rng);
  const Tensor3 g = m->hyper_vjp(h, cmu, csig);
  REQUIRE(g.same_shape(h));

  auto value = [&](const Tensor3& hh) {
    const HyperOut out = m->hyper(hh);
    return tensor_dot(out.mu_z, cmu) + tensor_dot(out.sigma_z, csig);
  };
  const double step = 1e-6;
  Tensor3 hp = h;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < h.v.size(); ++i) {
    hp.v[i] = h.v[i] + step;
    const double up = value(hp);
    hp.v[i] = h.v[i] - step;
    const double dn = value(hp);
    hp.v[i] = h.v[i];
    const double fd = (up - dn) / (2.0 * step);
    num += (fd - g.v[i]) * (fd - g.v[i]);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("vjp_latent pulls output cotangents back to both latents") {
  auto m = fixture_cae();
  Rng rng(70);
  const Tensor3 z = random_tensor(2, 4, 4, rng, 0.8);
  const Tensor3 h = random_tensor(2, 2, 2, rng, 0.8);

  LatentCotangents cot;
  cot.on_mean = random_tensor(1, 16, 16, rng);
  cot.on_sigma = random_tensor(1, 16, 16, rng);
  cot.on_mu_z = random_tensor(2, 4, 4, rng);
  cot.on_sigma_z = random_tensor(2, 4, 4, rng);
  auto [gz, gh] = vjp_latent(*m, z, h, cot);
  REQUIRE(gz.same_shape(z));
  REQUIRE(gh.same_shape(h));

  // Scalar the cotangents contract against: decode terms depend on z only,
  // hyper terms on h only.
  auto value = [&](const Tensor3& zz, const Tensor3& hh) {
    const DecodeOut d = m->decode(zz);
    const HyperOut p = m->hyper(hh);
    return tensor_dot(d.mean, cot.on_mean) + tensor_dot(d.sigma, cot.on_sigma) +
           tensor_dot(p.mu_z, cot.on_mu_z) + tensor_dot(p.sigma_z, cot.on_sigma_z);
  };
  const double step = 1e-6;
  {
    Tensor3 zp = z;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < z.v.size(); ++i) {
      zp.v[i] = z.v[i] + step;
      const double up = value(zp, h);
      zp.v[i] = z.v[i] - step;
      const double dn = value(zp, h);
      zp.v[i] = z.v[i];
      const double fd = (up - dn) / (2.0 * step);
      num += (fd - gz.v[i]) * (fd - gz.v[i]);
      den += fd * fd;
    }
    CHECK(std::sqrt(num / den) < 1e-6);
  }
  {
    Tensor3 hp = h;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < h.v.size(); ++i) {
      hp.v[i] = h.v[i] + step;
      const double up = value(z, hp);
      hp.v[i] = h.v[i] - step;
      const double dn = value(z, hp);
      hp.v[i] = h.v[i];
      const double fd = (up - dn) / (2.0 * step);
      num += (fd - gh.v[i]) * (fd - gh.v[i]);
      den += fd * fd;
    }
    CHECK(std::sqrt(num / den) < 1e-6);
  }
}

TEST_CASE("encode_init produces shapes consistent with the model") {
  Rng rng(71);
  {
    const AnalyticCae m(16, 16, 8, 0.5, 0.05);
    Tensor3 x(1, 16, 16);
    for (double& v : x.v) v = rng.uniform();
    auto [z, h] = encode_init(m, x);
    REQUIRE(z.same_shape(x));
    CHECK(h.size() == 0);
    // The analytic encoder inverts its decoder exactly.
    const DecodeOut out = m.decode(z);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
      CHECK(out.mean.v[i] == doctest::Approx(x.v[i]).epsilon(1e-12));
    }
  }
  {
    auto m = fixture_cae();
    const Tensor3 x = random_tensor(1, 16, 16, rng, 0.5);
    auto [z, h] = encode_init(*m, x);
    CHECK(z.c == 2);
    CHECK(z.h == 4);
    CHECK(h.c == 2);
    CHECK(h.h == 2);
  }
}

TEST_CASE("autoencoder load rejects manifests missing a required network") {
  const std::string dir = make_temp_dir("cae");
  // A weights file with only an encoder network.
  LayerDesc conv;
  conv.kind = LayerKind::Conv2d;
  conv.in_ch = 1;
  conv.out_ch = 1;
  conv.kh = conv.kw = 3;
  conv.stride = 2;
  conv.pad = 1;
  conv.offset = 0;
  std::vector<float> blob(conv.weight_count(), 0.1f);
  const std::string path = dir + "/half.json";
  save_weights_file(path, {{"encoder", {conv}}}, blob);
  CHECK_THROWS_AS(CaeModel::load(path), DataError);
}
