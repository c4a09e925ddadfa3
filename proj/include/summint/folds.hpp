#pragma once

#include <cstdint>
#include <vector>

namespace summint {

// Cross-fitting layout over all n = n_labeled + n_external unit slots.
// Labeled slots carry dataset row indices; external slots carry ids
// 0..n_external-1 into the (anonymous or individualized) external pool.

struct FoldHalf {
  std::vector<int> labeled;
  std::int64_t external_count = 0;
  std::int64_t size() const { return static_cast<std::int64_t>(labeled.size()) + external_count; }
};

struct Fold {
  std::vector<int> labeled;
  std::vector<int> external_ids;
  std::int64_t external_count() const { return static_cast<std::int64_t>(external_ids.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(labeled.size()) + external_count(); }
};

// Everything outside fold k, plus its deterministic split into two halves
// for sample-splitting nuisance fits (propensity on one, regression on the
// other).
struct FoldComplement {
  std::vector<int> labeled;
  std::int64_t external_count = 0;
  FoldHalf alpha;
  FoldHalf beta;
  std::int64_t size() const { return static_cast<std::int64_t>(labeled.size()) + external_count; }
};

struct FoldPlan {
  int K = 0;
  std::int64_t n_labeled = 0;
  std::int64_t n_external = 0;
  std::vector<Fold> folds;
  std::vector<FoldComplement> complements;

  std::int64_t n() const { return n_labeled + n_external; }
  // Labeled fraction within fold k.
  double gamma_hat(int k) const {
    return static_cast<double>(folds[k].labeled.size()) /
           static_cast<double>(folds[k].size());
  }
};

// Seeded uniform permutation of all slots, chopped into K contiguous
// blocks; the first n mod K folds take one extra unit. When split_halves
// is set, complement halves alternate along the permuted order (even
// position -> alpha). Throws if K < 2, K > n, or any fold ends up with no
// labeled unit.
FoldPlan make_folds(std::int64_t n_labeled, std::int64_t n_external, int K,
                    std::uint64_t seed, bool split_halves = true);

}  // namespace summint
