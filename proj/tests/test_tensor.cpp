#include <doctest.h>

#include <stdexcept>

#include "sfunet/autograd.hpp"
#include "sfunet/ops.hpp"

using namespace sfunet;

TEST_CASE("shape and indexing") {
  Tensor t(Shape{2, 3, 4, 5});
  CHECK(t.numel() == 120);
  CHECK(t.shape().plane() == 20);
  t(1, 2, 3, 4) = 7;
  CHECK(t[t.numel() - 1] == 7);
  CHECK(t.index(1, 0, 0, 0) == 60);
  auto p = t.plane(1, 2);
  CHECK(p.size() == 20);
  CHECK(p[19] == 7);
  t.fill(2);
  CHECK(t(0, 0, 0, 0) == 2);
  CHECK(to_string(Shape{1, 2, 3, 4}) == "[1,2,3,4]");
}

TEST_CASE("tensor from data checks the element count") {
  CHECK_THROWS_AS(Tensor(Shape{1, 1, 2, 2}, std::vector<Real>(3)), std::invalid_argument);
  Tensor t(Shape{1, 1, 2, 2}, std::vector<Real>{1, 2, 3, 4});
  CHECK(t(0, 0, 1, 0) == 3);
}

TEST_CASE("backward through a small chain") {
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 1, 2}, std::vector<Real>{2, -3}));
  Tape tape;
  {
    TapeScope scope(tape);
    // L = sum(3 * relu(p)) -> dL/dp = [3, 0]
    Var loss = ops::sum(ops::scale(ops::relu(use(p)), 3));
    tape.backward(loss);
    CHECK(loss.value()[0] == doctest::Approx(6));
  }
  CHECK(p.grad[0] == doctest::Approx(3));
  CHECK(p.grad[1] == doctest::Approx(0));
}

TEST_CASE("parameter gradients accumulate until zeroed") {
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 1, 1}, Real{1}));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(ops::sum(ops::scale(use(p), 2)));
  }
  CHECK(p.grad[0] == doctest::Approx(4));
  reg.zero_grad();
  CHECK(p.grad[0] == 0);
}

TEST_CASE("a value used twice receives both contributions") {
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 1, 1}, Real{3}));
  Tape tape;
  TapeScope scope(tape);
  Var v = use(p);
  tape.backward(ops::sum(ops::broadcast_mul(v, v)));  // d(p^2)/dp = 2p
  CHECK(p.grad[0] == doctest::Approx(6));
}

TEST_CASE("backward rejects non-scalar losses and foreign tapes") {
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 2, 2}, Real{1}));
  Tape a;
  Var out;
  {
    TapeScope scope(a);
    out = ops::relu(use(p));
    CHECK_THROWS_AS(a.backward(out), std::invalid_argument);
  }
  Tape b;
  CHECK_THROWS_AS(b.backward(ops::sum(out)), std::logic_error);
}

TEST_CASE("no recording without a tape or inside NoGradScope") {
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 1, 1}, Real{1}));
  Var free_var = ops::relu(use(p));
  CHECK_FALSE(free_var.requires_grad());

  Tape tape;
  TapeScope scope(tape);
  {
    NoGradScope off;
    Var v = ops::relu(use(p));
    CHECK_FALSE(v.requires_grad());
    CHECK(tape.size() == 0);
  }
  Var v = ops::relu(use(p));
  CHECK(v.requires_grad());
  CHECK(tape.size() == 2);
}

TEST_CASE("frozen parameters act as constants") {
  ParameterRegistry reg;
  Parameter& p = reg.add("p", Tensor(Shape{1, 1, 1, 1}, Real{1}), false);
  Tape tape;
  TapeScope scope(tape);
  CHECK_FALSE(use(p).requires_grad());
}

TEST_CASE("registry keeps order, rejects duplicates and counts by prefix") {
  ParameterRegistry reg;
  reg.add("enc.a", Tensor(Shape{1, 1, 2, 2}));
  reg.add("enc.b", Tensor(Shape{1, 1, 1, 3}));
  reg.add("dec.a", Tensor(Shape{1, 1, 1, 1}));
  CHECK_THROWS_AS(reg.add("enc.a", Tensor(Shape{1, 1, 1, 1})), std::invalid_argument);
  CHECK(reg.size() == 3);
  CHECK(reg.params()[1]->name == "enc.b");
  CHECK(reg.count("enc") == 7);
  CHECK(reg.count() == 8);
  CHECK(reg.find("missing") == nullptr);
  CHECK_THROWS(reg.at("missing"));
  CHECK(reg.at("dec.a").value.numel() == 1);
}

TEST_CASE("shape errors carry both shapes") {
  try {
    shape_error("demo", Shape{1, 2, 3, 4}, Shape{5, 6, 7, 8});
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,2,3,4]") != std::string::npos);
    CHECK(msg.find("[5,6,7,8]") != std::string::npos);
  }
}
