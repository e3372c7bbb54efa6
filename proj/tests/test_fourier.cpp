#include <doctest.h>

#include <cmath>
#include <tuple>
#include <vector>

#include "oracles.hpp"
#include "sfunet/fourier.hpp"
#include "sfunet/gradcheck.hpp"
#include "sfunet/ops.hpp"

using namespace sfunet;

namespace {

double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

ComplexTensor random_complex(Shape s, Rng& rng) {
  ComplexTensor t(s);
  for (auto& v : t.data()) v = Complex(Real(rng.uniform(-1, 1)), Real(rng.uniform(-1, 1)));
  return t;
}

}  // namespace

TEST_CASE("2D DFT matches the direct sum for every size up to 16") {
  Rng rng(1);
  for (std::size_t h = 1; h <= 16; ++h) {
    for (std::size_t w = 1; w <= 16; ++w) {
      const ComplexTensor x = random_complex(Shape{1, 2, h, w}, rng);
      const double err = max_abs_diff(fourier::dft2(x), oracle::direct_dft2(x));
      INFO("h=" << h << " w=" << w);
      CHECK(err < 1e-12 * double(h * w));
    }
  }
}

TEST_CASE("2D DFT matches the direct sum at encoder resolutions") {
  Rng rng(2);
  for (std::size_t s : {7, 14, 28, 56, 112, 224}) {
    const Tensor x = oracle::random_tensor(Shape{1, 1, s, s}, rng);
    const double err = max_abs_diff(fourier::dft2(x), oracle::direct_dft2_separable(oracle::to_complex(x)));
    INFO("size " << s);
    CHECK(err < 1e-9);
  }
}

TEST_CASE("inverse DFT round-trips and satisfies Parseval") {
  Rng rng(3);
  for (std::size_t s : {5, 12, 28, 30}) {
    const ComplexTensor x = random_complex(Shape{2, 3, s, s + 2}, rng);
    const ComplexTensor f = fourier::dft2(x);
    CHECK(max_abs_diff(fourier::idft2(f), x) < 1e-12);
    CHECK(max_abs_diff(fourier::idft2(f), oracle::direct_dft2(f, true)) < 1e-11);
    double ex = 0, ef = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      ex += std::norm(x[i]);
      ef += std::norm(f[i]);
    }
    CHECK(ef == doctest::Approx(ex * double(s * (s + 2))).epsilon(1e-12));
  }
}

TEST_CASE("1D plans handle prime and composite lengths") {
  for (std::size_t n : {1, 2, 3, 7, 13, 49, 97, 224}) {
    fourier::FftPlan plan(n);
    std::vector<Complex> in(n, Complex(0)), out(n);
    in[1 % n] = Complex(1);
    plan.execute(in.data(), 1, out.data(), false);
    // Impulse at x=1: out[k] = exp(-2 pi i k / n).
    for (std::size_t k = 0; k < n; ++k) {
      const double a = -2.0 * std::numbers::pi * double(k % n * (1 % n)) / double(n);
      CHECK(std::abs(out[k] - Complex(Real(std::cos(a)), Real(std::sin(a)))) < 1e-12);
    }
  }
}

TEST_CASE("low and high masks are complementary centered blocks") {
  const std::vector<std::tuple<std::size_t, std::size_t, double>> cases{
      {224, 224, 0.5}, {7, 7, 0.5}, {8, 6, 0.25}, {5, 9, 1.0}, {4, 4, 0.01}};
  for (auto [h, w, rho] : cases) {
    const auto m = fourier::build_masks(h, w, rho);
    const std::size_t n = std::max<std::size_t>(1, std::size_t(std::floor(rho * double(std::min(h, w)))));
    CHECK(m.side_n == n);
    double low_sum = 0;
    for (std::size_t i = 0; i < m.low.numel(); ++i) {
      CHECK(m.low[i] + m.high[i] == 1);
      CHECK(m.low[i] * m.high[i] == 0);
      low_sum += m.low[i];
    }
    CHECK(low_sum == double(n * n));
    // DC sits at (h/2, w/2) in the centered layout and is always low.
    CHECK(m.low(0, 0, h / 2, w / 2) == 1);
  }
  CHECK(fourier::centered_index(0, 224) == 112);
  CHECK(fourier::centered_index(0, 7) == 3);
}

TEST_CASE("mask construction rejects rho outside (0, 1]") {
  CHECK_THROWS_AS(fourier::build_masks(8, 8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(fourier::build_masks(8, 8, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(fourier::build_masks(8, 8, -0.1), std::invalid_argument);
}

TEST_CASE("low plus high band reconstructs the input") {
  Rng rng(4);
  const Tensor x = oracle::random_tensor(Shape{2, 3, 14, 14}, rng);
  const auto m = fourier::build_masks(14, 14, 0.5);
  const CVar f = fourier::dft2(Var(x));
  const Var back = fourier::take_real(
      fourier::idft2(fourier::add(fourier::apply_mask(f, m.low), fourier::apply_mask(f, m.high))));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(back.value()[i] - x[i]) < 1e-12);
}

TEST_CASE("a filter of ones leaves the spectrum unchanged") {
  Rng rng(5);
  const Tensor x = oracle::random_tensor(Shape{1, 4, 8, 8}, rng);
  const CVar f = fourier::dft2(Var(x));
  const CVar g = fourier::apply_filter(f, Var(Tensor(Shape{1, 1, 8, 8}, Real{1})),
                                       fourier::FilterMode::broadcast);
  CHECK(max_abs_diff(g.value(), f.value()) == 0);
  const CVar pc = fourier::apply_filter(f, Var(Tensor(Shape{1, 4, 8, 8}, Real{1})),
                                        fourier::FilterMode::per_channel);
  CHECK(max_abs_diff(pc.value(), f.value()) == 0);
}

TEST_CASE("filter values are indexed in centered order") {
  // Scaling only the centered DC bin scales the mean of the signal.
  Tensor x(Shape{1, 1, 6, 6}, Real{2});
  Tensor filt(Shape{1, 1, 6, 6}, Real{1});
  filt(0, 0, 3, 3) = 0.5;
  const Var y = fourier::take_real(fourier::idft2(
      fourier::apply_filter(fourier::dft2(Var(x)), Var(filt), fourier::FilterMode::broadcast)));
  for (Real v : y.value().data()) CHECK(v == doctest::Approx(1));
}

TEST_CASE("spectral energy gradient is 2HW x") {
  Rng rng(6);
  ParameterRegistry reg;
  Parameter& p = reg.add("x", oracle::random_tensor(Shape{1, 2, 6, 10}, rng));
  Tape tape;
  TapeScope scope(tape);
  tape.backward(fourier::sum_abs2(fourier::dft2(use(p))));
  for (std::size_t i = 0; i < p.value.numel(); ++i)
    CHECK(p.grad[i] == doctest::Approx(2.0 * 60 * p.value[i]).epsilon(1e-10));
}

TEST_CASE("frequency pipeline gradients match central differences") {
  Rng rng(7);
  ParameterRegistry reg;
  Parameter& x = reg.add("x", oracle::random_tensor(Shape{2, 2, 6, 5}, rng));
  Parameter& filt = reg.add("filter", oracle::random_tensor(Shape{1, 2, 6, 5}, rng));
  const auto m = fourier::build_masks(6, 5, 0.5);
  const Tensor proj = oracle::random_tensor(Shape{2, 2, 6, 5}, rng);
  auto loss = [&] {
    const CVar f = fourier::dft2(use(x));
    const CVar low = fourier::apply_filter(fourier::apply_mask(f, m.low), use(filt),
                                           fourier::FilterMode::per_channel);
    const Var y = fourier::take_real(fourier::idft2(fourier::add(low, fourier::apply_mask(f, m.high))));
    return ops::sum(ops::broadcast_mul(y, Var(proj)));
  };
  const auto report = gradcheck::check("fourier", reg.params(), loss, 1e-6);
  INFO(report.to_text());
  CHECK(report.pass());
}

TEST_CASE("log-magnitude image spans 0..255") {
  const auto img = fourier::log_magnitude_image({0, 1, std::expm1(Real{1}), -std::expm1(Real{4})});
  REQUIRE(img.size() == 4);
  CHECK(img[0] == 0);
  CHECK(img[3] == 255);
  CHECK(img[2] == 64);  // log1p ratio 1/4 of 255, rounded
  CHECK(fourier::log_magnitude_image({0, 0}) == std::vector<std::uint8_t>{0, 0});
}
