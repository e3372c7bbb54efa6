#include <doctest.h>

#include "oracles.hpp"
#include "sfunet/gradcheck.hpp"
#include "sfunet/ops.hpp"

using namespace sfunet;

namespace {

// y = x^2 with a backward rule that is off by a factor of two.
Var broken_square(const Var& x) {
  Tensor y = x.value();
  for (Real& v : y.data()) v *= v;
  return make_result<Real>(std::move(y), x.requires_grad(), [x](const Tensor& g) {
    Tensor* sink = x.grad_sink();
    for (std::size_t i = 0; i < g.numel(); ++i) (*sink)[i] += 4 * x.value()[i] * g[i];
  });
}

}  // namespace

TEST_CASE("every block passes at 4x4") {
  for (const std::string& id : gradcheck::block_ids()) {
    const auto report = gradcheck::run(id, 4, 4, 1e-4, 0);
    INFO(report.to_text());
    CHECK(report.pass());
    CHECK(report.max_error() < 1e-6);
    CHECK_FALSE(report.entries.empty());
  }
}

TEST_CASE("blocks also pass on a non-square grid") {
  for (const std::string id : {"fsa", "mpca", "decoder"}) {
    const auto report = gradcheck::run(id, 6, 4, 1e-4, 3);
    INFO(report.to_text());
    CHECK(report.pass());
  }
}

TEST_CASE("a wrong backward rule is caught") {
  Rng rng(1);
  ParameterRegistry reg;
  Parameter& x = reg.add("x", oracle::random_tensor(Shape{1, 1, 2, 3}, rng));
  const auto report = gradcheck::check("broken", reg.params(),
                                       [&] { return ops::sum(broken_square(use(x))); }, 1e-4);
  CHECK_FALSE(report.pass());
  CHECK(report.max_error() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(report.to_text().find("FAIL") != std::string::npos);
}

TEST_CASE("edge cases") {
  const auto empty = gradcheck::check("none", {}, [] { return Var(Tensor(Shape{1, 1, 1, 1})); }, 1e-4);
  CHECK(empty.pass());
  CHECK(empty.entries.empty());
  CHECK_THROWS_AS(gradcheck::run("encoder"), std::invalid_argument);
  CHECK_THROWS_AS(gradcheck::run("fsa", 5, 4), std::invalid_argument);
}
