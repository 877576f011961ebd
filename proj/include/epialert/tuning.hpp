#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "epialert/detectors.hpp"
#include "epialert/evaluation.hpp"

namespace epialert {

/// Threshold candidates (and lambda candidates for EWMA) searched on
/// held-out streams.
struct TuneGrid {
  Model model = Model::C2;
  std::vector<double> thresholds;
  std::vector<double> lambdas;  // only consulted for EWMA; empty keeps base lambda

  void validate() const {
    auto check = [](const std::vector<double>& v, const char* what) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw std::invalid_argument(std::string(what) + " must be finite");
        if (i > 0 && v[i] <= v[i - 1])
          throw std::invalid_argument(std::string(what) + " must be strictly increasing");
      }
    };
    if (thresholds.empty()) throw std::invalid_argument("threshold grid is empty");
    check(thresholds, "threshold candidates");
    check(lambdas, "lambda candidates");
  }

  /// Wide default grid bracketing every stock threshold: 0.1..3.0 step 0.1,
  /// lambdas 0.1..0.9 step 0.1 for EWMA.
  static TuneGrid defaults_for(Model m) {
    TuneGrid grid;
    grid.model = m;
    for (int i = 1; i <= 30; ++i) grid.thresholds.push_back(i / 10.0);
    if (m == Model::Ewma)
      for (int i = 1; i <= 9; ++i) grid.lambdas.push_back(i / 10.0);
    return grid;
  }
};

/// One evaluated grid point, kept for the machine-readable tuning report.
struct TunePoint {
  double threshold = 0.0;
  double lambda = 0.0;
  std::optional<double> f1;
  std::optional<double> timeliness_days;
  double alarm_rate_per_100 = 0.0;
};

struct TuneResult {
  DetectorConfig chosen;
  std::vector<TunePoint> points;  // ordered by (threshold, lambda)
};

/// Exhaustive search maximizing F1, with ties broken by larger timeliness
/// (earlier alerting), then by the larger threshold (fewer alarms), then by
/// the smaller lambda. Candidate order does not affect the outcome: the
/// lists are sorted and deduplicated before the scan.
inline TuneResult grid_search(std::span<const EvalStream> held_out,
                              const TuneGrid& grid,
                              const DetectorConfig& base_cfg) {
  if (held_out.empty())
    throw std::invalid_argument("grid_search: at least one held-out stream required");
  if (grid.thresholds.empty())
    throw std::invalid_argument("grid_search: threshold grid is empty");

  auto normalized = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  const std::vector<double> thresholds = normalized(grid.thresholds);
  std::vector<double> lambdas;
  if (grid.model == Model::Ewma && !grid.lambdas.empty())
    lambdas = normalized(grid.lambdas);
  else
    lambdas.push_back(base_cfg.lambda);

  TuneResult result;
  bool have_best = false;
  double best_f1 = 0.0, best_lead = 0.0;
  for (double threshold : thresholds) {
    for (double lambda : lambdas) {
      DetectorConfig cfg = base_cfg;
      cfg.model = grid.model;
      cfg.threshold = threshold;
      cfg.lambda = lambda;
      const EvalResult eval = evaluate_run(held_out, cfg);
      result.points.push_back(
          {threshold, lambda, eval.f1, eval.timeliness_days, eval.alarm_rate_per_100});
      if (!eval.f1) continue;
      // f1 defined implies tp >= 1, so timeliness is defined too
      const double lead = *eval.timeliness_days;
      const bool better =
          !have_best || *eval.f1 > best_f1 ||
          (*eval.f1 == best_f1 &&
           (lead > best_lead ||
            (lead == best_lead &&
             (threshold > result.chosen.threshold ||
              (threshold == result.chosen.threshold && lambda < result.chosen.lambda)))));
      if (better) {
        have_best = true;
        best_f1 = *eval.f1;
        best_lead = lead;
        result.chosen = cfg;
      }
    }
  }
  if (!have_best)
    throw std::runtime_error("no alertable events in held-out data");
  return result;
}

}  // namespace epialert
