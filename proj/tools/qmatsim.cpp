// SPDX-License-Identifier: Apache-2.0
// Command-line front end: Monte Carlo runs, closed-form DoF tables,
// quantizer statistics, and schedule dumps.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qmat/harness.hpp"
#include "qmat/quantizer.hpp"
#include "qmat/rational.hpp"
#include "qmat/schedule.hpp"

namespace {

std::vector<double> parse_powers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad power value: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty power list");
  return out;
}

// "start:step:stop", inclusive of both endpoints up to rounding.
std::vector<double> parse_alpha_grid(const std::string& text) {
  double start = 0, step = 0, stop = 0;
  char c1 = 0, c2 = 0;
  std::stringstream ss(text);
  if (!(ss >> start >> c1 >> step >> c2 >> stop) || c1 != ':' || c2 != ':' || step <= 0) {
    throw std::invalid_argument("alpha grid must be start:step:stop with step > 0");
  }
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    double a = start + i * step;
    if (a > stop + 1e-12) break;
    grid.push_back(std::min(a, stop));
  }
  if (grid.empty() || std::abs(grid.back() - stop) > 1e-9) grid.push_back(stop);
  return grid;
}

qmat::FidelityMode parse_mode(const std::string& name) {
  if (name == "sinr" || name == "sinr-exponent") return qmat::FidelityMode::SinrExponent;
  if (name == "bit-true" || name == "bits") return qmat::FidelityMode::BitTrue;
  throw std::invalid_argument("mode must be sinr or bit-true, got: " + name);
}

qmat::OutputFormat parse_format(const std::string& name) {
  if (name == "csv") return qmat::OutputFormat::Csv;
  if (name == "json") return qmat::OutputFormat::Json;
  throw std::invalid_argument("format must be csv or json, got: " + name);
}

struct CliState {
  qmat::ExperimentConfig cfg;
  std::string scheme = "qmat";
  std::string mode = "sinr";
  std::string format = "csv";
  std::string powers_text;
  std::string alpha_grid_text;
  double alpha = std::numeric_limits<double>::quiet_NaN();
};

// Config-file defaults; any CLI flag given afterwards overrides its key.
void apply_config_file(CliState& st, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  if (doc.contains("scheme")) st.scheme = doc["scheme"].get<std::string>();
  if (doc.contains("users")) st.cfg.K = doc["users"].get<int>();
  if (doc.contains("antennas")) st.cfg.M = doc["antennas"].get<int>();
  if (doc.contains("alpha")) st.alpha = doc["alpha"].get<double>();
  if (doc.contains("alpha_grid")) st.alpha_grid_text = doc["alpha_grid"].get<std::string>();
  if (doc.contains("powers")) {
    if (doc["powers"].is_string()) {
      st.powers_text = doc["powers"].get<std::string>();
    } else {
      st.cfg.powers = doc["powers"].get<std::vector<double>>();
    }
  }
  if (doc.contains("trials")) st.cfg.trials = doc["trials"].get<int>();
  if (doc.contains("rounds")) st.cfg.rounds = doc["rounds"].get<int>();
  if (doc.contains("mode")) st.mode = doc["mode"].get<std::string>();
  if (doc.contains("backoff")) st.cfg.backoff = doc["backoff"].get<double>();
  if (doc.contains("include_final_round")) {
    st.cfg.include_final_round = doc["include_final_round"].get<bool>();
  }
  if (doc.contains("seed")) st.cfg.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("out")) st.cfg.out = doc["out"].get<std::string>();
  if (doc.contains("format")) st.format = doc["format"].get<std::string>();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

int cmd_run(CliState& st) {
  st.cfg.scheme = qmat::scheme_from_name(st.scheme);
  st.cfg.mode = parse_mode(st.mode);
  st.cfg.format = parse_format(st.format);
  if (!st.powers_text.empty()) st.cfg.powers = parse_powers(st.powers_text);
  if (!st.alpha_grid_text.empty()) {
    st.cfg.alphas = parse_alpha_grid(st.alpha_grid_text);
  } else if (!std::isnan(st.alpha)) {
    st.cfg.alphas = {st.alpha};
  }
  qmat::ResultsTable table = qmat::run_experiment(st.cfg);
  if (st.cfg.out.empty()) {
    std::cout << "scheme,K,alpha,P,trial,sum_rate\n";
    char buf[256];
    for (const auto& r : table.rows) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g,%d,%.17g\n", r.scheme.c_str(), r.K,
                    r.alpha, r.P, r.trial, r.sum_rate);
      std::cout << buf;
    }
    for (const auto& f : table.fits) {
      std::snprintf(buf, sizeof(buf), "# fit %s K=%d alpha=%.17g dof=%.17g residual=%.3g\n",
                    f.scheme.c_str(), f.K, f.alpha, f.dof, f.residual);
      std::cerr << buf;
    }
  } else {
    qmat::emit_results(table, st.cfg.out, st.cfg.format);
  }
  return 0;
}

int cmd_dof(CliState& st) {
  if (!st.alpha_grid_text.empty() || std::isnan(st.alpha)) {
    std::string grid_text = st.alpha_grid_text.empty() ? "0:0.05:1" : st.alpha_grid_text;
    std::vector<double> grid = parse_alpha_grid(grid_text);
    write_text(st.cfg.out, qmat::emit_plot_data(st.cfg.K, grid) + "\n");
    return 0;
  }
  qmat::Rational a = qmat::alpha_to_rational(st.alpha);
  qmat::DofBaselines base = qmat::dof_baselines(st.cfg.K, a);
  std::ostringstream out;
  char buf[128];
  out << "scheme,K,alpha,dof\n";
  auto line = [&](const char* name, const qmat::Rational& d) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g\n", name, st.cfg.K, st.alpha,
                  qmat::to_double(d));
    out << buf;
  };
  line("qmat", qmat::dof_qmat(st.cfg.K, a));
  line("mat", base.mat);
  line("zf", base.zf);
  line("tdma", base.tdma);
  write_text(st.cfg.out, out.str());
  return 0;
}

int cmd_quantizer_test(CliState& st, double beta1, double beta2, int trials) {
  if (!st.powers_text.empty()) st.cfg.powers = parse_powers(st.powers_text);
  std::ostringstream out;
  char buf[256];
  out << "P,levels,rate_bits_per_dim,min_distance,agreement,distortion_bound,gaussian_mse\n";
  for (double P : st.cfg.powers) {
    qmat::Codebook book = qmat::build_codebook(beta1, beta2, P);
    qmat::Rng rng = qmat::make_rng(qmat::derive_seed(st.cfg.seed, 11, std::llround(P)));
    double agree = qmat::agreement_probability(book, beta2, P, trials, rng);
    double bound = 4.0 * std::log2(P) * std::pow(P, beta2);
    std::snprintf(buf, sizeof(buf), "%.17g,%zu,%.6g,%.6g,%.6g,%.6g,%.6g\n", P,
                  book.points.size(), book.rate_bits_per_dim, book.min_distance, agree, bound,
                  book.gaussian_mse(std::pow(P, beta1)));
    out << buf;
  }
  write_text(st.cfg.out, out.str());
  return 0;
}

int cmd_schedule(CliState& st) {
  double a = std::isnan(st.alpha) ? 0.5 : st.alpha;
  qmat::Schedule sched = qmat::build_round_schedule(st.cfg.K, st.cfg.rounds);
  write_text(st.cfg.out, sched.to_json(qmat::alpha_to_rational(a)) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CliState st;
  std::string config_path;
  double beta1 = 1.0, beta2 = 0.5;
  int q_trials = 20000;

  CLI::App app{"Q-MAT broadcast simulator"};
  app.require_subcommand(1);

  // Two-pass config handling: find --config first so later flags override it.
  for (int i = 1; i < argc - 1; ++i) {
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
  }
  try {
    if (!config_path.empty()) apply_config_file(st, config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (flags override it)");
    sub->add_option("--users", st.cfg.K, "number of users K");
    sub->add_option("--antennas", st.cfg.M, "transmit antennas (default: K)");
    sub->add_option("--alpha", st.alpha, "current-CSIT quality exponent in [0,1]");
    sub->add_option("--alpha-grid", st.alpha_grid_text, "alpha sweep start:step:stop");
    sub->add_option("--powers", st.powers_text, "comma list of P values, e.g. 1e2,1e4");
    sub->add_option("--trials", st.cfg.trials, "Monte Carlo trials per point");
    sub->add_option("--rounds", st.cfg.rounds, "transmission rounds");
    sub->add_option("--mode", st.mode, "fidelity: sinr or bit-true");
    sub->add_option("--scheme", st.scheme, "qmat, mat, zf or tdma");
    sub->add_option("--backoff", st.cfg.backoff, "bit-true rate backoff in [0,1)");
    sub->add_flag("--include-final-round", st.cfg.include_final_round,
                  "count the terminal round in rate accounting");
    sub->add_option("--seed", st.cfg.seed, "master RNG seed");
    sub->add_option("--out", st.cfg.out, "output path (default: stdout)");
    sub->add_option("--format", st.format, "csv or json");
  };

  CLI::App* run = app.add_subcommand("run", "Monte Carlo sum-rate sweep");
  add_common(run);
  CLI::App* dof = app.add_subcommand("dof", "closed-form DoF table or figure data");
  add_common(dof);
  CLI::App* qt = app.add_subcommand("quantizer-test", "gap-enforced quantizer statistics");
  add_common(qt);
  qt->add_option("--beta1", beta1, "source power exponent");
  qt->add_option("--beta2", beta2, "noise/gap power exponent");
  qt->add_option("--quantizer-trials", q_trials, "samples per power point");
  CLI::App* sched = app.add_subcommand("schedule", "slot bookkeeping dump as JSON");
  add_common(sched);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(st);
    if (dof->parsed()) return cmd_dof(st);
    if (qt->parsed()) return cmd_quantizer_test(st, beta1, beta2, q_trials);
    if (sched->parsed()) return cmd_schedule(st);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
