#include "summint/folds.hpp"

#include <stdexcept>
#include <string>

#include "summint/rng.hpp"

namespace summint {

FoldPlan make_folds(std::int64_t n_labeled, std::int64_t n_external, int K,
                    std::uint64_t seed, bool split_halves) {
  if (n_labeled < 1) throw std::invalid_argument("make_folds: need at least one labeled unit");
  if (n_external < 0) throw std::invalid_argument("make_folds: negative external count");
  const std::int64_t n = n_labeled + n_external;
  if (K < 2) throw std::invalid_argument("make_folds: K must be at least 2");
  if (K > n) throw std::invalid_argument("make_folds: K exceeds the number of units");

  std::vector<std::int64_t> slots(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) slots[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, 0xf01d5));
  rng.shuffle(slots);

  FoldPlan plan;
  plan.K = K;
  plan.n_labeled = n_labeled;
  plan.n_external = n_external;
  plan.folds.resize(static_cast<std::size_t>(K));

  const std::int64_t base = n / K;
  const std::int64_t extra = n % K;
  std::vector<std::pair<std::int64_t, std::int64_t>> ranges;  // [begin, end) into slots
  std::int64_t at = 0;
  for (int k = 0; k < K; ++k) {
    std::int64_t len = base + (k < extra ? 1 : 0);
    ranges.emplace_back(at, at + len);
    at += len;
  }

  for (int k = 0; k < K; ++k) {
    Fold& f = plan.folds[static_cast<std::size_t>(k)];
    for (std::int64_t p = ranges[static_cast<std::size_t>(k)].first;
         p < ranges[static_cast<std::size_t>(k)].second; ++p) {
      std::int64_t id = slots[static_cast<std::size_t>(p)];
      if (id < n_labeled)
        f.labeled.push_back(static_cast<int>(id));
      else
        f.external_ids.push_back(static_cast<int>(id - n_labeled));
    }
    if (f.labeled.empty())
      throw std::runtime_error("make_folds: empty labeled fold " + std::to_string(k) +
                               "; too few labeled rows for this K");
  }

  plan.complements.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    FoldComplement& c = plan.complements[static_cast<std::size_t>(k)];
    std::int64_t pos = 0;  // position along the complement's permuted order
    for (int j = 0; j < K; ++j) {
      if (j == k) continue;
      for (std::int64_t p = ranges[static_cast<std::size_t>(j)].first;
           p < ranges[static_cast<std::size_t>(j)].second; ++p, ++pos) {
        std::int64_t id = slots[static_cast<std::size_t>(p)];
        if (id < n_labeled)
          c.labeled.push_back(static_cast<int>(id));
        else
          ++c.external_count;
        if (split_halves) {
          FoldHalf& half = (pos % 2 == 0) ? c.alpha : c.beta;
          if (id < n_labeled)
            half.labeled.push_back(static_cast<int>(id));
          else
            ++half.external_count;
        }
      }
    }
  }
  return plan;
}

}  // namespace summint
