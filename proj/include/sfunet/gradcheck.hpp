#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sfunet/autograd.hpp"

namespace sfunet::gradcheck {

struct Entry {
  std::string name;
  double max_rel_error = 0;
  std::size_t elements = 0;
  bool pass = true;
};

struct Report {
  std::string block;
  double tolerance = 0;
  std::vector<Entry> entries;

  bool pass() const;
  double max_error() const;
  /// One line per parameter, then a summary line.
  std::string to_text() const;
};

/// Compares tape gradients of `loss_fn` against central differences for
/// every element of `params`. Per tensor the error is
/// max|analytic - numeric| / max(max|numeric|, max|analytic|, 1e-8).
/// Requires the double-precision build.
Report check(const std::string& block, const std::vector<Parameter*>& params,
             const std::function<Var()>& loss_fn, double tolerance, double eps = 1e-4);

/// mpca, fsa, fsa_pc, sa, decoder, head, ce, dice, total_loss.
const std::vector<std::string>& block_ids();

/// Builds a small instance of the named block at h x w with random inputs
/// and checks it against a random linear projection of its output. Throws
/// std::invalid_argument for unknown ids.
Report run(const std::string& block_id, std::size_t h = 4, std::size_t w = 4,
           double tolerance = 1e-4, std::uint64_t seed = 0);

}  // namespace sfunet::gradcheck
