#include "sfunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <type_traits>

#include "sfunet/blocks.hpp"
#include "sfunet/losses.hpp"
#include "sfunet/ops.hpp"

namespace sfunet::gradcheck {

namespace {

void require_double() {
  if constexpr (!std::is_same_v<Real, double>) {
    throw std::logic_error("gradcheck requires the double-precision build");
  }
}

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (Real& v : t.data()) v = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

Labels random_labels(std::size_t n, std::size_t h, std::size_t w, std::size_t k, Rng& rng) {
  Labels l(n, h, w);
  for (int& v : l.values) v = static_cast<int>(rng.below(k));
  return l;
}

/// sum(out * r) for a fixed random r, so every output element matters.
Var project(const Var& out, const Tensor& r) {
  return ops::sum(ops::broadcast_mul(out, Var(r)));
}

void randomize(ParameterRegistry& reg, Rng& rng) {
  // Zero biases and an all-ones filter are special points; move off them.
  for (Parameter* p : reg.params()) {
    for (Real& v : p->value.data()) v += static_cast<Real>(rng.uniform(-0.3, 0.3));
  }
}

constexpr std::size_t kBatch = 2;
constexpr std::size_t kChannels = 3;

}  // namespace

bool Report::pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const Entry& e) { return e.pass; });
}

double Report::max_error() const {
  double m = 0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string Report::to_text() const {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3);
  for (const auto& e : entries) {
    os << block << '\t' << e.name << '\t' << e.elements << '\t' << e.max_rel_error << '\t'
       << (e.pass ? "pass" : "FAIL") << '\n';
  }
  os << block << "\tmax_rel_error " << max_error() << " tolerance " << tolerance << '\t'
     << (pass() ? "pass" : "FAIL") << '\n';
  return os.str();
}

Report check(const std::string& block, const std::vector<Parameter*>& params,
             const std::function<Var()>& loss_fn, double tolerance, double eps) {
  require_double();
  Report report{block, tolerance, {}};
  if (params.empty()) return report;

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss_fn());
  }

  NoGradScope no_grad;
  for (Parameter* p : params) {
    Entry e{p->name, 0.0, p->value.numel(), true};
    double max_diff = 0, max_num = 0, max_ana = 0;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const Real saved = p->value[i];
      p->value[i] = saved + static_cast<Real>(eps);
      const double up = loss_fn().value()[0];
      p->value[i] = saved - static_cast<Real>(eps);
      const double down = loss_fn().value()[0];
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[i];
      max_diff = std::max(max_diff, std::abs(numeric - analytic));
      max_num = std::max(max_num, std::abs(numeric));
      max_ana = std::max(max_ana, std::abs(analytic));
    }
    e.max_rel_error = max_diff / std::max({max_num, max_ana, 1e-8});
    e.pass = e.max_rel_error < tolerance;
    report.entries.push_back(e);
  }
  return report;
}

const std::vector<std::string>& block_ids() {
  static const std::vector<std::string> ids{"mpca", "fsa",  "fsa_pc", "sa",        "decoder",
                                            "head", "ce",   "dice",   "total_loss"};
  return ids;
}

Report run(const std::string& block_id, std::size_t h, std::size_t w, double tolerance,
           std::uint64_t seed) {
  require_double();
  if (std::find(block_ids().begin(), block_ids().end(), block_id) == block_ids().end()) {
    throw std::invalid_argument("gradcheck: unknown block '" + block_id + "'");
  }
  if (h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0) {
    throw std::invalid_argument("gradcheck: dims must be even and positive");
  }
  Rng rng(seed);
  ParameterRegistry reg;
  const Shape full{kBatch, kChannels, h, w};
  const Shape half{kBatch, kChannels + 1, h / 2, w / 2};
  std::function<Var()> loss;

  if (block_id == "mpca") {
    auto block = std::make_shared<blocks::MPCABlock>(reg, "mpca", full.c, half.c, rng);
    Var a(random_tensor(full, rng));
    Var b(random_tensor(half, rng));
    Tensor r = random_tensor(full, rng);
    loss = [block, a, b, r] { return project(block->forward(a, b), r); };
  } else if (block_id == "fsa" || block_id == "fsa_pc") {
    const auto mode =
        block_id == "fsa" ? fourier::FilterMode::broadcast : fourier::FilterMode::per_channel;
    auto block = std::make_shared<blocks::FSABlock>(reg, "fsa", full.c, h, w, 0.5, mode, rng);
    Var x(random_tensor(full, rng));
    Tensor r = random_tensor(full, rng);
    loss = [block, x, r] { return project(block->forward(x), r); };
  } else if (block_id == "sa") {
    auto block = std::make_shared<blocks::SpatialAttention>(reg, "sa", rng);
    Var x(random_tensor(full, rng));
    Tensor r = random_tensor(full, rng);
    loss = [block, x, r] { return project(block->forward(x), r); };
  } else if (block_id == "decoder") {
    auto block = std::make_shared<blocks::DecoderBlock>(reg, "dec", full.c, half.c, full.c, rng);
    Var skip(random_tensor(full, rng));
    Var below(random_tensor(half, rng));
    Tensor r = random_tensor(full, rng);
    loss = [block, skip, below, r] { return project(block->forward(skip, below), r); };
  } else if (block_id == "head") {
    auto block = std::make_shared<blocks::PredictionHead>(reg, "head", full.c, 3, rng);
    Var x(random_tensor(full, rng));
    Tensor r = random_tensor(Shape{kBatch, 3, h, w}, rng);
    loss = [block, x, r] { return project(block->forward(x), r); };
  } else {
    Parameter& logits = reg.add("logits", random_tensor(Shape{kBatch, 4, h, w}, rng, -2, 2));
    Labels target = random_labels(kBatch, h, w, 4, rng);
    Parameter* lp = &logits;
    if (block_id == "ce") {
      loss = [lp, target] { return losses::softmax_cross_entropy(use(*lp), target); };
    } else if (block_id == "dice") {
      loss = [lp, target] { return losses::soft_dice(use(*lp), target); };
    } else {
      loss = [lp, target] { return losses::total_loss(use(*lp), target); };
    }
  }
  if (block_id != "ce" && block_id != "dice" && block_id != "total_loss") randomize(reg, rng);
  return check(block_id, reg.params(), loss, tolerance);
}

}  // namespace sfunet::gradcheck
