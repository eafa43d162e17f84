// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every selected criterion passes.
//
//   owqe_acceptance [--only 1,2,...] [--work DIR] [--reuse]
//
// Training criteria (4-7) share one results tree under --work; with --reuse,
// run directories that already hold a successful summary.json are loaded
// instead of retrained.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "owqe/agent.hpp"
#include "owqe/ensemble.hpp"
#include "owqe/envs.hpp"
#include "owqe/harness.hpp"
#include "owqe/metrics.hpp"
#include "owqe/nnet.hpp"

using namespace owqe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Verdict& v) {
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << title << ": " << v.detail << std::endl;
}

// --- shared training plan ----------------------------------------------------

// Episode counts for the training criteria; the harness defaults (300/500)
// are kept for user configs.
const std::map<std::string, int> kEpisodes{{"pendulum", 150}, {"cartpole", 200}};
constexpr std::uint64_t kBaseSeed = 1;

struct Plan {
  fs::path root;
  bool reuse = false;
};

ExperimentSpec base_spec(const Plan& plan, std::vector<std::string> envs, std::vector<std::string> groups,
                         std::vector<Strategy> strategies, int runs, int first_run) {
  ExperimentSpec spec;
  spec.environments = std::move(envs);
  for (const auto& g : groups) {
    GroupSpec gs;
    gs.kind = GroupSpec::Kind::Preset;
    gs.name = g;
    spec.groups.push_back(gs);
  }
  spec.strategies = std::move(strategies);
  for (const auto& e : spec.environments) spec.episodes[e] = kEpisodes.at(e);
  spec.runs = runs;
  spec.first_run = first_run;
  spec.seed = kBaseSeed;
  spec.out = plan.root.string();
  spec.mode = TrainingMode::Online;
  return spec;
}

// Key: directory relative to the plan root.
std::map<std::string, RunOutcome> results;

void execute(const Plan& plan, const ExperimentSpec& spec) {
  const auto tasks = expand(spec);
  std::size_t done = 0;
  for (const auto& task : tasks) {
    ++done;
    const std::string key = fs::relative(task.directory, plan.root).string();
    if (results.count(key)) continue;
    if (plan.reuse && fs::exists(task.directory / "summary.json")) {
      try {
        RunOutcome o = load_run(task.directory);
        if (o.ok && static_cast<int>(o.record.episode_rewards.size()) == task.episodes) {
          results[key] = std::move(o);
          continue;
        }
      } catch (const std::exception&) {
      }
    }
    const auto t0 = Clock::now();
    RunOutcome o = execute_run(task, spec);
    write_run_outputs(o, spec);
    std::cerr << "  [" << done << "/" << tasks.size() << "] " << key << ": "
              << (o.ok ? fmt(o.performance) : "FAILED " + o.error) << " (" << fmt(seconds_since(t0), 1) << " s)\n";
    results[key] = std::move(o);
  }
}

const RunOutcome* find(const std::string& env, const std::string& group, Strategy s, int run) {
  const std::string key =
      (fs::path(env) / group / std::string(to_string(s)) / ("run_" + std::to_string(run))).string();
  const auto it = results.find(key);
  return it == results.end() ? nullptr : &it->second;
}

// Final performances of runs [0, runs) of one cell; failed runs are skipped
// and counted.
std::vector<double> performances(const std::string& env, const std::string& group, Strategy s, int runs,
                                 int* failed = nullptr) {
  std::vector<double> out;
  for (int k = 0; k < runs; ++k) {
    const RunOutcome* o = find(env, group, s, k);
    if (o && o->ok) {
      out.push_back(o->performance);
    } else if (failed) {
      ++*failed;
    }
  }
  return out;
}

std::map<std::string, double> random_baselines;

double random_baseline(const std::string& env) {
  if (!random_baselines.count(env)) random_baselines[env] = random_policy_performance(env, 100, kBaseSeed);
  return random_baselines[env];
}

// --- criterion 1 -------------------------------------------------------------

Verdict numeric_core() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  std::uniform_int_distribution<int> width(1, 32);
  std::uniform_int_distribution<int> depth(1, 3);
  std::normal_distribution<double> normal;
  const Activation hiddens[] = {Activation::Relu, Activation::Softmax, Activation::Tanh};
  const Activation outs[] = {Activation::Linear, Activation::Tanh};
  auto random_vector = [&](Eigen::Index n) { return Vector(Vector::NullaryExpr(n, [&] { return normal(rng); })); };

  long coords = 0;
  long bad = 0;
  double worst = 0.0;
  auto compare = [&](double analytic, double numeric) {
    if (std::abs(analytic) <= 1e-8) return;
    const double e = oracle::relative_error(analytic, numeric);
    worst = std::max(worst, e);
    ++coords;
    if (!(e < 1e-4)) ++bad;
  };

  const int nets = 100;
  for (int net = 0; net < nets; ++net) {
    std::vector<int> sizes{width(rng) % 6 + 1};
    const int layers = depth(rng);
    for (int k = 0; k < layers - 1; ++k) sizes.push_back(width(rng));
    sizes.push_back(width(rng) % 4 + 1);
    MlpParams p = make_mlp(sizes, hiddens[net % 3], outs[net % 2], rng);
    Vector x = random_vector(sizes.front());
    const Vector u = random_vector(sizes.back());
    const Backward g = backward(p, x, u);
    auto objective = [&] {
      const auto y = oracle::straight_line_forward<long double>(p, {x.data(), x.data() + x.size()});
      long double acc = 0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += u(static_cast<Eigen::Index>(i)) * y[i];
      return acc;
    };
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      for (Eigen::Index i = 0; i < p.layers[k].weight.size(); ++i) {
        compare(g.params.weight[k](i), oracle::central_difference_ext(objective, p.layers[k].weight(i), 1e-5));
      }
      for (Eigen::Index i = 0; i < p.layers[k].bias.size(); ++i) {
        compare(g.params.bias[k](i), oracle::central_difference_ext(objective, p.layers[k].bias(i), 1e-5));
      }
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      compare(g.input(i), oracle::central_difference_ext(objective, x(i), 1e-5));
    }
  }

  // Actor chain rule: d/dtheta of -mean_j Q(s_j, mu(s_j; theta)).
  const int actors = 100;
  for (int net = 0; net < actors; ++net) {
    HyperParams hp;
    hp.layer_size = 4 + width(rng) % 20;
    hp.activation = hiddens[net % 3] == Activation::Tanh ? Activation::Relu : hiddens[net % 3];
    hp.minibatch_size = 4;
    hp.replay_steps = 4;
    const Eigen::Index ds = 1 + net % 5;
    const Eigen::Index da = 1 + net % 2;
    const Vector bounds = Vector::Constant(da, 0.5 + (net % 4));
    DdpgAgent agent(ds, bounds, hp, rng);
    std::vector<Transition> ts;
    for (int j = 0; j < 3; ++j) ts.push_back({random_vector(ds), random_vector(da), 0.0, random_vector(ds), false});
    const ParamGrads g = agent.actor_gradient(Batch::from(ts));
    MlpParams actor = agent.actor();
    const MlpParams& critic = agent.critic();
    auto objective = [&] {
      long double acc = 0;
      for (const auto& t : ts) {
        std::vector<long double> in(t.state.data(), t.state.data() + ds);
        const auto squashed = oracle::straight_line_forward<long double>(actor, in);
        in.insert(in.end(), squashed.begin(), squashed.end());
        acc += oracle::straight_line_forward<long double>(critic, in)[0];
      }
      return -acc / static_cast<long double>(ts.size());
    };
    for (std::size_t k = 0; k < actor.layers.size(); ++k) {
      for (Eigen::Index i = 0; i < actor.layers[k].weight.size(); ++i) {
        compare(g.weight[k](i), oracle::central_difference_ext(objective, actor.layers[k].weight(i), 1e-5));
      }
      for (Eigen::Index i = 0; i < actor.layers[k].bias.size(); ++i) {
        compare(g.bias[k](i), oracle::central_difference_ext(objective, actor.layers[k].bias(i), 1e-5));
      }
    }
  }

  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = bad == 0 && secs < 60.0;
  v.detail = std::to_string(nets) + " nets + " + std::to_string(actors) + " actor chains, " + std::to_string(coords) +
             " coordinates, " + std::to_string(bad) + " above 1e-4 (worst " + fmt_sci(worst) + "), " + fmt(secs, 1) +
             " s";
  return v;
}

// --- criterion 2 -------------------------------------------------------------

QMatrix random_q(Rng& rng, Eigen::Index n, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  QMatrix m;
  m.values = Matrix::NullaryExpr(n, n, [&] { return normal(rng); });
  for (Eigen::Index j = 0; j < n; ++j) m.actions.push_back(Vector::Constant(1, static_cast<double>(j)));
  return m;
}

Verdict exact_identities() {
  Rng rng(7);
  const AggregationStrategy all[] = {{Strategy::Average}, {Strategy::SoftmaxAverage}, {Strategy::TDError},
                                     {Strategy::SoftmaxTDError}};
  double softmax_err = 0.0;
  double uniform_err = 0.0;
  double boltzmann_err = 0.0;
  int shift_flips = 0;
  int shift_cases = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const Eigen::Index n = 1 + trial % 8;
    const double scale = std::pow(10.0, trial % 4);
    const QMatrix m = random_q(rng, n, scale);
    const QMatrix s = normalize_rows(m);
    for (Eigen::Index i = 0; i < n; ++i) softmax_err = std::max(softmax_err, std::abs(s.values.row(i).sum() - 1.0));

    const EnsembleWeights uniform(static_cast<std::size_t>(n));
    const Vector means = m.values.colwise().mean().transpose();
    uniform_err = std::max(uniform_err, (aggregate(m, uniform, {Strategy::Average}) - means).cwiseAbs().maxCoeff());
    uniform_err = std::max(uniform_err, (aggregate(m, uniform, {Strategy::TDError}) - means).cwiseAbs().maxCoeff());
    const Vector boltzmann = s.values.colwise().mean().transpose();
    boltzmann_err = std::max(
        boltzmann_err, (aggregate(m, uniform, {Strategy::SoftmaxAverage}) - boltzmann).cwiseAbs().maxCoeff());

    EnsembleWeights w(static_cast<std::size_t>(n));
    std::normal_distribution<double> normal;
    w.set_raw(Vector::NullaryExpr(n, [&] { return normal(rng); }));
    QMatrix shifted = m;
    for (Eigen::Index i = 0; i < n; ++i) shifted.values.row(i).array() += 50.0 * normal(rng);
    for (const auto& strat : all) {
      ++shift_cases;
      if (select_action(m, aggregate(m, w, strat)).index != select_action(shifted, aggregate(shifted, w, strat)).index) {
        ++shift_flips;
      }
    }
  }

  // Polyak closed form: with the online nets frozen, target_k = theta + (target_0 - theta)(1 - tau)^k.
  Rng init(11);
  HyperParams hp;
  hp.tau = 0.01;
  DdpgAgent agent(3, Vector::Constant(1, 2.0), hp, init);
  MlpParams start = agent.target_actor();
  for (auto& l : start.layers) {
    l.weight.array() += 1.0;
    l.bias.array() -= 0.5;
  }
  agent.set_target_actor(start);
  const int k = 250;
  for (int i = 0; i < k; ++i) agent.soft_target_update();
  double polyak_err = 0.0;
  const double decay = std::pow(1.0 - hp.tau, k);
  for (std::size_t l = 0; l < start.layers.size(); ++l) {
    const Matrix wk = agent.actor().layers[l].weight + (start.layers[l].weight - agent.actor().layers[l].weight) * decay;
    const Vector bk = agent.actor().layers[l].bias + (start.layers[l].bias - agent.actor().layers[l].bias) * decay;
    polyak_err = std::max(polyak_err, (agent.target_actor().layers[l].weight - wk).cwiseAbs().maxCoeff());
    polyak_err = std::max(polyak_err, (agent.target_actor().layers[l].bias - bk).cwiseAbs().maxCoeff());
  }

  // Ties: identical columns resolve to the lowest index, every time.
  bool ties_ok = true;
  for (Eigen::Index n = 1; n <= 8; ++n) {
    QMatrix m;
    m.values = Matrix::Constant(n, n, 2.5);
    for (Eigen::Index j = 0; j < n; ++j) m.actions.push_back(Vector::Constant(1, static_cast<double>(j)));
    for (const auto& strat : all) {
      for (int rep = 0; rep < 5; ++rep) {
        ties_ok = ties_ok && select_action(m, aggregate(m, EnsembleWeights(static_cast<std::size_t>(n)), strat)).index == 0;
      }
    }
    if (n >= 3) {
      m.values.col(0).array() = 1.0;
      ties_ok = ties_ok && select_action(m, aggregate(m, EnsembleWeights(static_cast<std::size_t>(n)), {Strategy::Average})).index == 1;
    }
  }

  Verdict v;
  v.pass = softmax_err <= 1e-12 && uniform_err <= 1e-12 && boltzmann_err <= 1e-12 && polyak_err <= 1e-12 &&
           shift_flips == 0 && ties_ok;
  v.detail = "softmax row sums " + fmt_sci(softmax_err) + ", uniform vs column means " + fmt_sci(uniform_err) +
             ", Boltzmann " + fmt_sci(boltzmann_err) + ", Polyak " + fmt_sci(polyak_err) + ", shift flips " +
             std::to_string(shift_flips) + "/" + std::to_string(shift_cases) + ", ties " + (ties_ok ? "ok" : "broken");
  return v;
}

// --- criterion 3 -------------------------------------------------------------

Verdict weight_learning() {
  const auto t0 = Clock::now();
  const Vector unequal = (Vector(2) << 1.0, 4.0).finished();
  EnsembleWeights w(2);
  w.update(unequal, 1e-3);
  const bool first_step = w.normalized()(0) > 0.5 && w.normalized()(1) < 0.5;
  int steps = 1;
  while (w.normalized()(0) <= 0.99 && steps < 5000) {
    w.update(unequal, 1e-3);
    ++steps;
  }
  const bool converged = w.normalized()(0) > 0.99;

  EnsembleWeights same(2);
  for (int i = 0; i < 5000; ++i) same.update(Vector::Constant(2, 3.0), 1e-3);
  const double drift = (same.normalized() - Vector::Constant(2, 0.5)).cwiseAbs().maxCoeff();

  Verdict v;
  v.pass = first_step && converged && drift <= 1e-12;
  v.detail = std::string("first step ") + (first_step ? "raises w1" : "does not raise w1") + ", w1 = " +
             fmt(w.normalized()(0), 4) + " after " + std::to_string(steps) + " steps, equal-delta drift " +
             fmt_sci(drift) + ", " + fmt(seconds_since(t0), 2) + " s";
  return v;
}

// --- criterion 4 -------------------------------------------------------------

Verdict single_agent(const Plan& plan) {
  const auto t0 = Clock::now();
  execute(plan, base_spec(plan, {"pendulum"}, {"SingleGood"}, {Strategy::Average}, 10, 0));
  const PresetFile preset = load_preset("pendulum");
  const double best = preset.best_search_performance.value();
  const double random = random_baseline("pendulum");
  const double threshold = random + 0.8 * (best - random);
  int failed = 0;
  const auto perf = performances("pendulum", "SingleGood", Strategy::Average, 10, &failed);
  const auto hits = std::count_if(perf.begin(), perf.end(), [&](double p) { return p >= threshold; });
  Verdict v;
  v.pass = hits >= 8;
  v.detail = std::to_string(hits) + "/10 seeds >= " + fmt(threshold) + " (random " + fmt(random) + ", search best " +
             fmt(best) + "), median " + (perf.empty() ? "n/a" : fmt(median(perf))) +
             (failed ? ", failed runs " + std::to_string(failed) : "") + ", " + fmt(seconds_since(t0) / 60.0, 1) +
             " min";
  return v;
}

// --- criterion 5 -------------------------------------------------------------

Verdict robustness(const Plan& plan) {
  const auto t0 = Clock::now();
  const std::vector<std::string> envs{"pendulum", "cartpole"};
  execute(plan, base_spec(plan, envs, {"SingleGood"}, {Strategy::Average}, 10, 0));
  execute(plan, base_spec(plan, envs, {"OneGoodThreeBad"}, {Strategy::SoftmaxTDError, Strategy::Average}, 10, 0));
  bool pass = true;
  std::string detail;
  for (const auto& env : envs) {
    int failed = 0;
    const auto good = performances(env, "SingleGood", Strategy::Average, 10, &failed);
    const auto ens = performances(env, "OneGoodThreeBad", Strategy::SoftmaxTDError, 10, &failed);
    const auto avg = performances(env, "OneGoodThreeBad", Strategy::Average, 10, &failed);
    if (good.empty() || ens.empty()) {
      pass = false;
      detail += env + ": no completed runs; ";
      continue;
    }
    const double random = random_baseline(env);
    const double good_med = median(good);
    const double gap = good_med - random;
    const double ens_med = median(ens);
    const double band = good_med - 0.15 * gap;
    const bool ok = gap > 0.0 && ens_med >= band;
    pass = pass && ok;
    detail += env + ": SoftmaxTDError median " + fmt(ens_med) + " vs single good " + fmt(good_med) + " (band >= " +
              fmt(band) + ", random " + fmt(random) + ")" + (ok ? "" : " MISS") +
              ", Average median " + (avg.empty() ? "n/a" : fmt(median(avg))) +
              (failed ? ", failed runs " + std::to_string(failed) : "") + "; ";
  }
  Verdict v;
  v.pass = pass;
  v.detail = detail + fmt(seconds_since(t0) / 60.0, 1) + " min";
  return v;
}

// --- criterion 6 -------------------------------------------------------------

Verdict regret_ordering(const Plan& plan) {
  const auto t0 = Clock::now();
  const std::vector<std::string> envs{"pendulum", "cartpole"};
  const std::vector<std::string> groups(std::begin(kPresetGroups), std::end(kPresetGroups));
  const std::vector<Strategy> strategies{Strategy::Average, Strategy::SoftmaxAverage, Strategy::TDError,
                                         Strategy::SoftmaxTDError};
  execute(plan, base_spec(plan, envs, groups, strategies, 5, 0));
  PerfTable table;
  int failed = 0;
  for (const auto& env : envs) {
    for (const auto& g : groups) {
      for (auto s : strategies) {
        const auto perf = performances(env, g, s, 5, &failed);
        if (!perf.empty()) {
          double sum = 0.0;
          for (double p : perf) sum += p;
          table.set(env, g, std::string(to_string(s)), sum / static_cast<double>(perf.size()));
        }
      }
    }
  }
  Verdict v;
  if (!table.missing().empty()) {
    v.detail = "performance table incomplete (" + std::to_string(table.missing().size()) + " cells)";
    return v;
  }
  std::map<std::string, double> regret;
  for (auto s : strategies) regret[std::string(to_string(s))] = average_relative_regret(table, std::string(to_string(s)));
  const auto best = std::min_element(regret.begin(), regret.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  const double mine = regret.at("SoftmaxTDError");
  int strictly_lower = 0;
  for (const auto& [k, r] : regret) strictly_lower += r < mine ? 1 : 0;
  v.pass = strictly_lower == 0;
  std::ostringstream os;
  for (const auto& [k, r] : regret) os << k << " " << fmt(r, 3) << ", ";
  v.detail = os.str() + "lowest " + best->first + (failed ? ", failed runs " + std::to_string(failed) : "") + ", " +
             fmt(seconds_since(t0) / 60.0, 1) + " min";
  return v;
}

// --- criterion 7 -------------------------------------------------------------

Verdict weight_traces(const Plan& plan) {
  const auto t0 = Clock::now();
  const std::vector<std::string> envs{"pendulum", "cartpole"};
  execute(plan, base_spec(plan, envs, {"OneGoodOneBad"}, {Strategy::SoftmaxTDError}, 10, 0));
  bool pass = true;
  std::string detail;
  for (const auto& env : envs) {
    int hits = 0;
    int failed = 0;
    std::vector<double> means;
    for (int k = 0; k < 10; ++k) {
      const RunOutcome* o = find(env, "OneGoodOneBad", Strategy::SoftmaxTDError, k);
      if (!o || !o->ok || o->record.weights.empty()) {
        ++failed;
        continue;
      }
      const auto& w = o->record.weights;
      const std::size_t tail = std::max<std::size_t>(1, w.size() / 5);
      double acc = 0.0;
      for (std::size_t e = w.size() - tail; e < w.size(); ++e) acc += w[e][0];
      const double mean = acc / static_cast<double>(tail);
      means.push_back(mean);
      hits += mean > 0.6 ? 1 : 0;
    }
    const bool ok = hits >= 7;
    pass = pass && ok;
    detail += env + ": " + std::to_string(hits) + "/10 seeds with good-member weight > 0.6 (median " +
              (means.empty() ? "n/a" : fmt(median(means), 3)) + ")" + (failed ? ", failed " + std::to_string(failed) : "") +
              "; ";
  }
  Verdict v;
  v.pass = pass;
  v.detail = detail + fmt(seconds_since(t0) / 60.0, 1) + " min";
  return v;
}

// --- criterion 8 -------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Verdict determinism(const Plan& plan) {
  const fs::path root = plan.root / "determinism";
  fs::remove_all(root);
  nlohmann::json doc{{"env", {"pendulum", "cartpole"}},
                     {"groups", {"OneGoodOneBad"}},
                     {"strategies", {"SoftmaxTDError", "Average"}},
                     {"episodes", 12},
                     {"runs", 2},
                     {"observation_steps", 300},
                     {"seed", 5}};
  int compared = 0;
  int differing = 0;
  auto compare_trees = [&](const fs::path& a, const fs::path& b) {
    const auto da = find_run_directories(a);
    const auto db = find_run_directories(b);
    if (da.size() != db.size() || da.empty()) {
      ++differing;
      return;
    }
    for (std::size_t i = 0; i < da.size(); ++i) {
      for (const char* f : {"curves.csv", "summary.json"}) {
        ++compared;
        if (slurp(da[i] / f) != slurp(db[i] / f)) ++differing;
      }
    }
  };
  doc["out"] = (root / "first").string();
  run_matrix(parse_config(doc), 1);
  doc["out"] = (root / "second").string();
  run_matrix(parse_config(doc), 2);
  compare_trees(root / "first", root / "second");

  // A run directory's own config.json reproduces it.
  const fs::path run = root / "first" / "cartpole" / "OneGoodOneBad" / "SoftmaxTDError" / "run_1";
  ExperimentSpec again = parse_config_file(run / "config.json");
  again.out = (root / "rerun").string();
  run_matrix(again, 1);
  ++compared;
  const fs::path rerun = root / "rerun" / "cartpole" / "OneGoodOneBad" / "SoftmaxTDError" / "run_1";
  if (slurp(run / "curves.csv") != slurp(rerun / "curves.csv") ||
      slurp(run / "summary.json") != slurp(rerun / "summary.json")) {
    ++differing;
  }
  Verdict v;
  v.pass = differing == 0;
  v.detail = std::to_string(compared) + " file pairs compared (two executions, different job counts, rerun from a "
             "run's config.json), " + std::to_string(differing) + " differ";
  return v;
}

// --- criterion 9 -------------------------------------------------------------

Verdict physics() {
  Pendulum::Params p;
  p.damping = 0.0;
  p.episode_length = 100000;
  double worst = 0.0;
  for (double start : {0.3, 1.0, 2.0, 2.9, -1.5}) {
    Pendulum env(p);
    env.set_state(start, 0.0);
    const double e0 = env.energy();
    for (int k = 0; k < 1000; ++k) {
      env.step(Vector::Zero(1));
      worst = std::max(worst, std::abs(env.energy() - e0) / e0);
    }
  }

  bool deterministic = true;
  for (const char* id : {"pendulum", "cartpole"}) {
    auto a = make_environment(id);
    auto b = make_environment(id);
    Rng rng(3);
    std::uniform_real_distribution<double> u(-15.0, 15.0);
    deterministic = deterministic && a->reset() == b->reset();
    for (int k = 0; k < 5000; ++k) {
      const Vector act = Vector::Constant(a->spec().action_dim, u(rng));
      const StepResult x = a->step(act);
      const StepResult y = b->step(act);
      deterministic = deterministic && x.observation == y.observation && x.reward == y.reward &&
                      x.terminal == y.terminal && x.timeout == y.timeout;
      if (x.terminal || x.timeout) deterministic = deterministic && a->reset() == b->reset();
    }
  }
  Verdict v;
  v.pass = worst < 1e-3 && deterministic;
  v.detail = "max relative energy drift " + fmt_sci(worst) + " over 1000 RK4 steps, environments " +
             (deterministic ? "bit-identical over 5000 steps" : "NOT deterministic");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "owqe_acceptance").string();
  bool reuse = false;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--work", work, "Results directory for the training criteria");
  app.add_flag("--reuse", reuse, "Load finished runs from --work instead of retraining");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.count(id); };

  Plan plan{work, reuse};
  if (!reuse) fs::remove_all(plan.root);
  fs::create_directories(plan.root);

  const auto t0 = Clock::now();
  try {
    if (wanted(1)) report(1, "finite-difference gradients", numeric_core());
    if (wanted(2)) report(2, "exact identities", exact_identities());
    if (wanted(3)) report(3, "weight learning", weight_learning());
    if (wanted(9)) report(9, "environment physics", physics());
    if (wanted(8)) report(8, "determinism", determinism(plan));
    if (wanted(4)) report(4, "single good agent on pendulum", single_agent(plan));
    if (wanted(7)) report(7, "weight traces OneGoodOneBad", weight_traces(plan));
    if (wanted(5)) report(5, "OneGoodThreeBad SoftmaxTDError vs single good", robustness(plan));
    if (wanted(6)) report(6, "regret ordering", regret_ordering(plan));
  } catch (const std::exception& e) {
    std::cout << "FAIL  acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << "(" << failures << " failing, "
            << fmt(seconds_since(t0) / 60.0, 1) << " min)" << std::endl;
  return failures ? 1 : 0;
}
