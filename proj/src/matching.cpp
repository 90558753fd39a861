#include "tehtree/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tehtree/error.hpp"
#include "tehtree/rng.hpp"

namespace tehtree {

std::size_t MatchedPairSet::n_groups() const noexcept {
  int top = -1;
  for (int g : group) top = std::max(top, g);
  return static_cast<std::size_t>(top + 1);
}

MatchedPairSet match_pairs(const TrialDataset& data, std::span<const double> scores,
                           std::uint64_t seed, const MatchOptions& options) {
  std::vector<std::size_t> rows(data.n());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return match_pairs(data, scores, rows, seed, options);
}

MatchedPairSet match_pairs(const TrialDataset& data, std::span<const double> scores,
                           std::span<const std::size_t> rows, std::uint64_t seed,
                           const MatchOptions& options) {
  if (scores.size() != data.n()) {
    throw ValidationError("matching: expected one score per subject");
  }
  std::vector<std::size_t> treated;
  std::vector<std::size_t> controls;
  for (std::size_t r : rows) {
    if (r >= data.n()) throw ValidationError("matching: row index out of range");
    (data.z()[r] == 1 ? treated : controls).push_back(r);
  }
  if (treated.empty() || controls.empty()) {
    throw ValidationError("matching: both arms must be nonempty");
  }
  for (std::size_t r : rows) {
    if (!std::isfinite(scores[r])) throw ValidationError("matching: non-finite score");
  }

  // Controls ordered by score, then by index, for the nearest-neighbour search.
  std::sort(controls.begin(), controls.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
  });
  std::vector<double> sorted_scores(controls.size());
  for (std::size_t k = 0; k < controls.size(); ++k) sorted_scores[k] = scores[controls[k]];

  MatchedPairSet out;
  out.pairs.reserve(treated.size());
  std::vector<std::size_t> tied;
  for (std::size_t i : treated) {
    const double s = scores[i];
    const auto pos = static_cast<std::size_t>(
        std::lower_bound(sorted_scores.begin(), sorted_scores.end(), s) - sorted_scores.begin());
    double best = std::numeric_limits<double>::infinity();
    if (pos < controls.size()) best = std::min(best, std::fabs(sorted_scores[pos] - s));
    if (pos > 0) best = std::min(best, std::fabs(sorted_scores[pos - 1] - s));

    tied.clear();
    for (std::size_t k = pos; k < controls.size(); ++k) {
      if (std::fabs(sorted_scores[k] - s) > best + kMatchTieTolerance) break;
      tied.push_back(controls[k]);
    }
    for (std::size_t k = pos; k-- > 0;) {
      if (std::fabs(sorted_scores[k] - s) > best + kMatchTieTolerance) break;
      tied.push_back(controls[k]);
    }
    std::sort(tied.begin(), tied.end());

    std::size_t chosen = tied.front();
    if (tied.size() > 1) {
      Rng rng(derive_seed(seed, {0x3a7c4u, static_cast<std::uint64_t>(i)}));
      chosen = tied[static_cast<std::size_t>(rng.uniform_int(tied.size()))];
    }
    const double dist = std::fabs(scores[chosen] - s);
    if (options.caliper && dist > *options.caliper) {
      ++out.dropped;
      continue;
    }
    out.pairs.push_back({i, chosen});
    out.distance.push_back(dist);
  }

  const std::size_t k = out.pairs.size();
  out.delta.resize(k);
  out.group.resize(k);
  out.x_treated.resize(static_cast<Eigen::Index>(k), data.x().cols());
  std::vector<int> dense(data.n(), -1);
  int next = 0;
  for (std::size_t l = 0; l < k; ++l) {
    const auto [t, c] = out.pairs[l];
    out.delta[l] = data.y()[t] - data.y()[c];
    if (dense[c] < 0) dense[c] = next++;
    out.group[l] = dense[c];
    out.x_treated.row(static_cast<Eigen::Index>(l)) = data.x().row(static_cast<Eigen::Index>(t));
  }
  return out;
}

}  // namespace tehtree
