// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qmat/channel.hpp"

namespace qmat {

enum class Scheme { Qmat, Mat, Zf, Tdma };

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

enum class OutputFormat { Csv, Json };

struct ExperimentConfig {
  Scheme scheme = Scheme::Qmat;
  int K = 2;
  int M = 0;  // transmit antennas; 0 means K
  std::vector<double> alphas = {0.5};
  std::vector<double> powers = {1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8};
  int trials = 10;
  int rounds = 6;
  FidelityMode mode = FidelityMode::SinrExponent;
  double backoff = 0.2;
  bool include_final_round = false;
  std::uint64_t seed = 1;
  std::string out;
  OutputFormat format = OutputFormat::Csv;

  int antennas() const { return M > 0 ? M : K; }
  void validate() const;  // throws std::invalid_argument with a description
};

struct ResultRow {
  std::string scheme;
  int K = 0;
  double alpha = 0;
  double P = 0;
  int trial = 0;
  double sum_rate = 0;  // bits per slot, summed over users
};

struct FitRow {
  std::string scheme;
  int K = 0;
  double alpha = 0;
  double dof = 0;  // fitted slope of sum_rate against log2(P)
  double intercept = 0;
  double residual = 0;
};

struct ResultsTable {
  std::vector<ResultRow> rows;
  std::vector<FitRow> fits;
};

struct SlopeFit {
  double slope = 0;
  double intercept = 0;
  double residual = 0;  // rms deviation from the fitted line
};

// Least-squares fit of rate against log2(P); needs >= 3 distinct P values.
SlopeFit estimate_slope(const std::vector<std::pair<double, double>>& points);

// Monte Carlo sweep over (alpha, P, trial); deterministic for a given seed,
// trial-parallel up to QMATSIM_THREADS.
ResultsTable run_experiment(const ExperimentConfig& config);

// Writes rows to `path` ("scheme,K,alpha,P,trial,sum_rate") and the fitted
// slopes to the companion "<stem>.fit.<ext>".
void emit_results(const ResultsTable& table, const std::string& path, OutputFormat format);

// Reads back a JSON results file written by emit_results.
ResultsTable read_results_json(const std::string& path);

// Closed-form DoF curves as figure JSON:
// {"K": K, "curves": [{"label": ..., "alpha": [...], "dof": [...]}]}.
std::string emit_plot_data(int K, const std::vector<double>& alpha_grid);

// Worker cap from QMATSIM_THREADS, defaulting to the hardware concurrency.
int thread_budget();

}  // namespace qmat
