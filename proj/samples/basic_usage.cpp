// Simulate one study, fit the model and compare rejections with Bonferroni.

#include <cstdio>

#include "camt/camt.hpp"

int main() {
  camt::SimulationConfig config;
  config.m = 5000;
  config.seed = 7;
  const auto study = camt::simulate(config);

  camt::PipelineOptions opts;
  const auto fitted = camt::fit_camt(study.table, opts);
  const auto decisions = camt::decide(study.table, fitted.fit, 0.05, opts.eps);

  const auto bonf = camt::bonferroni(study.table.pvalues(), 0.05);
  const auto camt_score = camt::score_replicate(decisions.rejected, study.truth);
  const auto bonf_score = camt::score_replicate(bonf, study.truth);

  std::printf("gamma=%.2f k=%.4f beta=(%.3f, %.3f)\n", fitted.gamma, fitted.fit.params.k,
              fitted.fit.params.beta[0], fitted.fit.params.beta[1]);
  std::printf("camt:       %zu rejections, %zu false\n", camt_score.R, camt_score.V);
  std::printf("bonferroni: %zu rejections, %zu false\n", bonf_score.R, bonf_score.V);
}
