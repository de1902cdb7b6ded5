// SPDX-License-Identifier: Apache-2.0
#include "qmat/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "qmat/engine.hpp"
#include "qmat/precoding.hpp"
#include "qmat/rational.hpp"
#include "qmat/schedule.hpp"

namespace qmat {
namespace {

// Shortest-round-trip decimal form so emitted files are byte-stable.
std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fit_path_for(const std::string& path) {
  auto slash = path.find_last_of('/');
  auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path + ".fit";
  }
  return path.substr(0, dot) + ".fit" + path.substr(dot);
}

std::ofstream open_or_throw(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

// One Q-MAT (or MAT) transmission block: run the engine, decode every user,
// and average the recovered bits over the slots that enter the accounting.
double engine_trial(const ExperimentConfig& c, double alpha, double P, std::uint64_t seed) {
  SimParams p;
  p.K = c.K;
  p.M = c.antennas();
  p.P = P;
  p.alpha = c.scheme == Scheme::Mat ? 0.0 : alpha;
  p.rounds = c.rounds;
  p.mode = c.mode;
  p.backoff = c.backoff;
  p.seed = seed;
  Engine::Options opts;
  opts.zf_enabled = c.scheme != Scheme::Mat;
  Engine engine(p, opts);
  const Transcript& t = engine.run();
  double bits = 0;
  for (int k = 1; k <= c.K; ++k) {
    bits += decode_user(t, k).rate_sum(c.include_final_round, c.rounds);
  }
  long rounds_counted = c.include_final_round ? c.rounds : c.rounds - 1;
  long slots = rounds_counted * t.schedule.slots_per_round();
  if (slots <= 0) return 0.0;
  return bits / static_cast<double>(slots);
}

// One-slot ZF baseline: a common layer decoded by everybody on top of K
// zero-forced private streams at power P^alpha each (split across users),
// privates decoded after the common layer is removed.
double zf_trial(const ExperimentConfig& c, double alpha, double P, std::uint64_t seed) {
  SimParams p;
  p.K = c.K;
  p.M = c.antennas();
  p.P = P;
  p.alpha = alpha;
  Rng rng = make_rng(seed);
  ChannelSlotState st = draw_channel(p, rng);

  std::vector<Eigen::VectorXcd> priv(c.K);
  for (int k = 0; k < c.K; ++k) {
    std::vector<Eigen::RowVectorXcd> excluded;
    for (int l = 0; l < c.K; ++l) {
      if (l != k) excluded.push_back(st.H_hat.row(l));
    }
    priv[k] = zf_beamformer(excluded, p.M, rng);
  }
  Eigen::VectorXcd common = random_isotropic_columns(p.M, 1, rng).col(0);

  double p_priv = std::pow(P, alpha) / c.K;
  double p_common = std::max(P - c.K * p_priv, 0.0);

  double common_rate = std::numeric_limits<double>::infinity();
  double private_rate = 0;
  for (int k = 0; k < c.K; ++k) {
    Eigen::RowVectorXcd row = st.H.row(k);
    double own = p_priv * leakage_power(row, priv[k]);
    double cross = 0;
    for (int l = 0; l < c.K; ++l) {
      if (l != k) cross += p_priv * leakage_power(row, priv[l]);
    }
    double n2 = std::norm(st.noise(k));
    double sinr_common = p_common * leakage_power(row, common) / (own + cross + n2);
    common_rate = std::min(common_rate, std::log2(1.0 + sinr_common));
    private_rate += std::log2(1.0 + own / (cross + n2));
  }
  return common_rate + private_rate;
}

// One-slot TDMA baseline: full power to a single user with a matched-filter
// beam from the current estimate; users rotate across trials.
double tdma_trial(const ExperimentConfig& c, double alpha, double P, int trial,
                  std::uint64_t seed) {
  SimParams p;
  p.K = c.K;
  p.M = c.antennas();
  p.P = P;
  p.alpha = alpha;
  Rng rng = make_rng(seed);
  ChannelSlotState st = draw_channel(p, rng);
  int k = trial % c.K;
  Eigen::VectorXcd v = st.H_hat.row(k).adjoint();
  double nv = v.norm();
  if (nv > 0) {
    v /= nv;
  } else {
    v = Eigen::VectorXcd::Zero(p.M);
    v(0) = 1.0;
  }
  double sinr = P * leakage_power(st.H.row(k), v) / std::norm(st.noise(k));
  return std::log2(1.0 + sinr);
}

double run_trial(const ExperimentConfig& c, double alpha, double P, int trial,
                 std::uint64_t seed) {
  switch (c.scheme) {
    case Scheme::Qmat:
    case Scheme::Mat:
      return engine_trial(c, alpha, P, seed);
    case Scheme::Zf:
      return zf_trial(c, alpha, P, seed);
    case Scheme::Tdma:
      return tdma_trial(c, alpha, P, trial, seed);
  }
  throw std::invalid_argument("unknown scheme");
}

nlohmann::json rows_to_json(const ResultsTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"scheme", r.scheme},
                    {"K", r.K},
                    {"alpha", r.alpha},
                    {"P", r.P},
                    {"trial", r.trial},
                    {"sum_rate", r.sum_rate}});
  }
  return rows;
}

}  // namespace

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Qmat:
      return "qmat";
    case Scheme::Mat:
      return "mat";
    case Scheme::Zf:
      return "zf";
    case Scheme::Tdma:
      return "tdma";
  }
  throw std::invalid_argument("unknown scheme");
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "qmat") return Scheme::Qmat;
  if (name == "mat") return Scheme::Mat;
  if (name == "zf") return Scheme::Zf;
  if (name == "tdma") return Scheme::Tdma;
  throw std::invalid_argument("unknown scheme: " + name);
}

void ExperimentConfig::validate() const {
  if (K < 1 || K > 8) throw std::invalid_argument("K must be in [1, 8]");
  if (M != 0 && M < K) throw std::invalid_argument("M must be 0 (meaning K) or >= K");
  if (alphas.empty()) throw std::invalid_argument("alpha grid must be non-empty");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("alpha must be in [0, 1]");
  }
  if (powers.empty()) throw std::invalid_argument("power grid must be non-empty");
  for (std::size_t i = 0; i < powers.size(); ++i) {
    if (!(powers[i] > 2.0)) throw std::invalid_argument("powers must be > 2");
    if (i > 0 && !(powers[i] > powers[i - 1])) {
      throw std::invalid_argument("powers must be strictly increasing");
    }
  }
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (!include_final_round && rounds < 2 &&
      (scheme == Scheme::Qmat || scheme == Scheme::Mat)) {
    throw std::invalid_argument("rounds must be >= 2 unless the final round is included");
  }
  if (!(backoff >= 0.0 && backoff < 1.0)) {
    throw std::invalid_argument("backoff must be in [0, 1)");
  }
}

SlopeFit estimate_slope(const std::vector<std::pair<double, double>>& points) {
  std::set<double> distinct;
  for (const auto& [P, rate] : points) {
    if (!(P > 1.0)) throw std::invalid_argument("slope fit needs powers > 1");
    if (!std::isfinite(rate)) throw std::invalid_argument("slope fit needs finite rates");
    distinct.insert(P);
  }
  if (distinct.size() < 3) {
    throw std::invalid_argument("slope fit needs at least 3 distinct powers");
  }
  double n = static_cast<double>(points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [P, rate] : points) {
    double x = std::log2(P);
    sx += x;
    sy += rate;
    sxx += x * x;
    sxy += x * rate;
  }
  SlopeFit fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss = 0;
  for (const auto& [P, rate] : points) {
    double e = rate - (fit.intercept + fit.slope * std::log2(P));
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

int thread_budget() {
  if (const char* env = std::getenv("QMATSIM_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

ResultsTable run_experiment(const ExperimentConfig& config) {
  config.validate();

  struct Job {
    std::size_t ai, pi;
    int trial;
  };
  std::vector<Job> jobs;
  jobs.reserve(config.alphas.size() * config.powers.size() * config.trials);
  for (std::size_t ai = 0; ai < config.alphas.size(); ++ai) {
    for (std::size_t pi = 0; pi < config.powers.size(); ++pi) {
      for (int trial = 0; trial < config.trials; ++trial) {
        jobs.push_back({ai, pi, trial});
      }
    }
  }

  ResultsTable table;
  table.rows.resize(jobs.size());
  const std::string name = scheme_name(config.scheme);
  auto compute = [&](std::size_t i) {
    const Job& j = jobs[i];
    double alpha = config.alphas[j.ai];
    double P = config.powers[j.pi];
    std::uint64_t seed =
        derive_seed(config.seed, (static_cast<std::uint64_t>(j.ai) << 32) | j.pi,
                    static_cast<std::uint64_t>(j.trial));
    ResultRow row;
    row.scheme = name;
    row.K = config.K;
    row.alpha = alpha;
    row.P = P;
    row.trial = j.trial;
    row.sum_rate = run_trial(config, alpha, P, j.trial, seed);
    table.rows[i] = std::move(row);
  };

  int workers = std::min<std::size_t>(thread_budget(), jobs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) compute(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        try {
          compute(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  // Trial-averaged slope per alpha; skipped when the grid is too short.
  if (config.powers.size() >= 3) {
    for (std::size_t ai = 0; ai < config.alphas.size(); ++ai) {
      std::vector<std::pair<double, double>> points;
      for (std::size_t pi = 0; pi < config.powers.size(); ++pi) {
        double mean = 0;
        for (int trial = 0; trial < config.trials; ++trial) {
          std::size_t idx = (ai * config.powers.size() + pi) * config.trials + trial;
          mean += table.rows[idx].sum_rate;
        }
        points.emplace_back(config.powers[pi], mean / config.trials);
      }
      SlopeFit fit = estimate_slope(points);
      table.fits.push_back(
          {name, config.K, config.alphas[ai], fit.slope, fit.intercept, fit.residual});
    }
  }
  return table;
}

void emit_results(const ResultsTable& table, const std::string& path, OutputFormat format) {
  if (format == OutputFormat::Csv) {
    {
      std::ofstream out = open_or_throw(path);
      out << "scheme,K,alpha,P,trial,sum_rate\n";
      for (const auto& r : table.rows) {
        out << r.scheme << ',' << r.K << ',' << fmt_double(r.alpha) << ',' << fmt_double(r.P)
            << ',' << r.trial << ',' << fmt_double(r.sum_rate) << '\n';
      }
      if (!out) throw std::runtime_error("write failed: " + path);
    }
    std::ofstream fit = open_or_throw(fit_path_for(path));
    fit << "scheme,K,alpha,dof,intercept,residual\n";
    for (const auto& f : table.fits) {
      fit << f.scheme << ',' << f.K << ',' << fmt_double(f.alpha) << ',' << fmt_double(f.dof)
          << ',' << fmt_double(f.intercept) << ',' << fmt_double(f.residual) << '\n';
    }
    if (!fit) throw std::runtime_error("write failed: " + fit_path_for(path));
    return;
  }

  {
    std::ofstream out = open_or_throw(path);
    nlohmann::json doc = {{"rows", rows_to_json(table)}};
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
  }
  std::ofstream fitf = open_or_throw(fit_path_for(path));
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& f : table.fits) {
    fits.push_back({{"scheme", f.scheme},
                    {"K", f.K},
                    {"alpha", f.alpha},
                    {"dof", f.dof},
                    {"intercept", f.intercept},
                    {"residual", f.residual}});
  }
  fitf << nlohmann::json{{"fits", fits}}.dump(2) << '\n';
  if (!fitf) throw std::runtime_error("write failed: " + fit_path_for(path));
}

ResultsTable read_results_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  ResultsTable table;
  for (const auto& r : doc.at("rows")) {
    table.rows.push_back({r.at("scheme").get<std::string>(), r.at("K").get<int>(),
                          r.at("alpha").get<double>(), r.at("P").get<double>(),
                          r.at("trial").get<int>(), r.at("sum_rate").get<double>()});
  }
  return table;
}

std::string emit_plot_data(int K, const std::vector<double>& alpha_grid) {
  if (alpha_grid.empty()) throw std::invalid_argument("alpha grid must be non-empty");
  nlohmann::json curves = nlohmann::json::array();
  auto add_curve = [&](const std::string& label, auto&& dof_at) {
    nlohmann::json alphas = nlohmann::json::array();
    nlohmann::json dofs = nlohmann::json::array();
    for (double a : alpha_grid) {
      alphas.push_back(a);
      dofs.push_back(dof_at(a));
    }
    curves.push_back({{"label", label}, {"alpha", alphas}, {"dof", dofs}});
  };
  add_curve("qmat",
            [&](double a) { return to_double(dof_qmat(K, alpha_to_rational(a))); });
  add_curve("mat",
            [&](double a) { return to_double(dof_baselines(K, alpha_to_rational(a)).mat); });
  add_curve("zf",
            [&](double a) { return to_double(dof_baselines(K, alpha_to_rational(a)).zf); });
  add_curve("tdma",
            [&](double a) { return to_double(dof_baselines(K, alpha_to_rational(a)).tdma); });
  return nlohmann::json{{"K", K}, {"curves", curves}}.dump(2);
}

}  // namespace qmat
