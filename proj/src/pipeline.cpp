#include "tehtree/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "tehtree/error.hpp"
#include "tehtree/rng.hpp"

namespace tehtree {

void FitConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (min_node < 1) throw ValidationError("min_node must be at least 1");
  if (max_depth < 0) throw ValidationError("max_depth must be nonnegative");
  if (folds < 2) throw ValidationError("folds must be at least 2");
  if (mode == EffectMode::double_sample && !(train_frac > 0.0 && train_frac < 1.0)) {
    throw ValidationError("double mode needs train_frac in (0, 1)");
  }
  if (caliper && !(*caliper >= 0.0)) throw ValidationError("caliper must be nonnegative");
}

double FitConfig::effective_train_frac() const noexcept {
  return mode == EffectMode::single ? 1.0 : train_frac;
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(name) + ": " + e.what());
  } catch (const DegenerateRegressor& e) {
    throw ValidationError(std::string(name) + ": " + e.what());
  }
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

FitResult fit_tehtree(const TrialDataset& data, const FitConfig& config) {
  config.validate();
  FitResult result;

  result.split = stage("split", [&] {
    return split_train_holdout(data, config.effective_train_frac(), derive_seed(config.seed, {0x5b1u}));
  });

  const PrognosticModel model = stage("prognostic", [&] {
    return fit_prognostic(data, result.split.train, config.folds, derive_seed(config.seed, {0x960u}));
  });
  const std::vector<double> scores = stage("prognostic", [&] { return predict_prognostic(model, data.x()); });

  MatchOptions options;
  options.caliper = config.caliper;
  result.pairs = stage("matching", [&] {
    return match_pairs(data, scores, result.split.train, derive_seed(config.seed, {0x3a7u}), options);
  });

  TehTree tree = stage("tree", [&] {
    return build_tree(result.pairs, config.alpha, config.min_node, config.max_depth);
  });
  tree.col_names = data.col_names();

  std::optional<TrialDataset> holdout;
  if (config.mode == EffectMode::double_sample) {
    holdout = stage("effects", [&] { return data.subset(result.split.holdout); });
  }
  result.tree = stage("effects", [&] {
    return estimate_effects(tree, config.mode, result.pairs, holdout ? &*holdout : nullptr);
  });

  if (config.mode == EffectMode::single) {
    double s = 0.0;
    for (double d : result.pairs.delta) s += d;
    result.overall_effect = s / static_cast<double>(result.pairs.size());
  } else {
    double s1 = 0.0, s0 = 0.0;
    std::size_t n1 = 0, n0 = 0;
    for (std::size_t i = 0; i < holdout->n(); ++i) {
      if (holdout->z()[i] == 1) {
        s1 += holdout->y()[i];
        ++n1;
      } else {
        s0 += holdout->y()[i];
        ++n0;
      }
    }
    result.overall_effect = s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0);
  }

  FitDiagnostics& d = result.diagnostics;
  for (const auto& l : model.learners) d.learners.emplace_back(to_string(l->kind()));
  d.cv_risk = model.cv_risk;
  d.weights = model.weights;
  d.ensemble_cv_risk = model.ensemble_cv_risk;
  const double qs[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t k = 0; k < 5; ++k) d.distance_quantiles[k] = quantile(result.pairs.distance, qs[k]);
  d.n_pairs = result.pairs.size();
  d.distinct_controls = result.pairs.n_groups();
  d.reused_controls = d.n_pairs - d.distinct_controls;
  d.dropped_pairs = result.pairs.dropped;
  d.n_train = result.split.train.size();
  d.n_holdout = result.split.holdout.size();
  return result;
}

}  // namespace tehtree
