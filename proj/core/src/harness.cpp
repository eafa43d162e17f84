#include "owqe/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "owqe/envs.hpp"
#include "owqe/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace owqe {

const std::vector<int> ParameterDomain::target_update_interval{10, 100};
const std::vector<double> ParameterDomain::learning_rate{0.001, 0.0001};
const std::vector<int> ParameterDomain::replay_steps{64, 128, 256};
const std::vector<int> ParameterDomain::minibatch_size{16, 64, 128};
const std::vector<int> ParameterDomain::layer_size{50, 100, 200, 300, 400};
const std::vector<Activation> ParameterDomain::activation{Activation::Relu, Activation::Softmax};

namespace {

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? ", " : "") << values[i];
  return os.str();
}

template <typename T>
void check_in(const T& value, const std::vector<T>& domain, const std::string& field) {
  if (std::find(domain.begin(), domain.end(), value) == domain.end()) {
    std::ostringstream os;
    os << value;
    throw ValidationError(field, os.str() + " is outside the allowed values {" + join(domain) + "}");
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// --- JSON field helpers -----------------------------------------------------

template <typename T>
T get_as(const json& doc, const std::string& key, const std::string& field) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(field, "missing or has the wrong type");
  }
}

bool is_seed(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

int positive_int(const json& v, const std::string& field, int minimum = 1) {
  if (!v.is_number_integer() || v.get<long long>() < minimum || v.get<long long>() > 1'000'000'000) {
    throw ValidationError(field, "must be an integer >= " + std::to_string(minimum));
  }
  return v.get<int>();
}

HyperParams member_from_json(const json& doc, const std::string& field) {
  HyperParams hp;
  try {
    hp = hyper_params_from_json(doc);
  } catch (const ValidationError& e) {
    throw ValidationError(field + "." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  } catch (const ConfigError& e) {
    throw ValidationError(field, e.what());
  }
  validate_domain(hp, field);
  return hp;
}

std::vector<HyperParams> member_list(const json& doc, const std::string& field) {
  if (!doc.is_array() || doc.empty()) throw ValidationError(field, "must be a non-empty list of members");
  std::vector<HyperParams> out;
  for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(member_from_json(doc[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

bool is_preset_name(const std::string& name) {
  if (name == "SingleGood") return true;
  for (const char* p : kPresetGroups)
    if (name == p) return true;
  return false;
}

GroupSpec group_from_json(const json& doc, const std::string& field, std::size_t index) {
  GroupSpec g;
  if (doc.is_string()) {
    g.kind = GroupSpec::Kind::Preset;
    g.name = doc.get<std::string>();
    if (!is_preset_name(g.name)) {
      throw ValidationError(field, "unknown preset '" + g.name +
                                       "' (expected ThreeGood, OneGoodOneBad, OneGoodThreeBad, "
                                       "OneGoodSevenBad or SingleGood)");
    }
    return g;
  }
  if (doc.is_array()) {
    g.kind = GroupSpec::Kind::Explicit;
    g.name = "group" + std::to_string(index);
    g.members[""] = member_list(doc, field);
    return g;
  }
  if (!doc.is_object()) throw ValidationError(field, "must be a preset name, a member list or an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "name" && key != "members" && key != "count" && key != "seed") {
      throw ValidationError(field + "." + key, "unknown field");
    }
  }
  if (doc.contains("members")) {
    g.kind = GroupSpec::Kind::Explicit;
    g.name = doc.value("name", "group" + std::to_string(index));
    const json& m = doc["members"];
    if (m.is_object()) {
      for (const auto& [env, list] : m.items()) g.members[env] = member_list(list, field + ".members." + env);
      if (g.members.empty()) throw ValidationError(field + ".members", "is empty");
    } else {
      g.members[""] = member_list(m, field + ".members");
    }
    return g;
  }
  if (doc.contains("count")) {
    g.kind = GroupSpec::Kind::Random;
    g.count = positive_int(doc["count"], field + ".count");
    if (!doc.contains("seed") || !is_seed(doc["seed"])) {
      throw ValidationError(field + ".seed", "random groups need a non-negative integer seed");
    }
    g.seed = doc["seed"].get<std::uint64_t>();
    g.name = doc.value("name", "random" + std::to_string(g.count) + "_" + std::to_string(g.seed));
    return g;
  }
  if (doc.contains("name") && doc["name"].is_string()) return group_from_json(doc["name"], field, index);
  throw ValidationError(field, "needs 'members', 'count' or a preset 'name'");
}

void check_name(const std::string& name, const std::string& field) {
  if (name.empty() || name.find_first_of("/\\") != std::string::npos || name == "." || name == "..") {
    throw ValidationError(field, "'" + name + "' cannot be used as a directory name");
  }
}

// --- CSV ----------------------------------------------------------------------

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(where + ": '" + s + "' is not a number");
  }
  return v;
}

std::string curves_csv(const RunRecord& r) {
  std::string out = "episode,cumulative_reward\n";
  for (std::size_t e = 0; e < r.episode_rewards.size(); ++e) {
    out += std::to_string(e + 1) + "," + format_double(r.episode_rewards[e]) + "\n";
  }
  return out;
}

std::string weights_csv(const RunRecord& r, std::size_t n) {
  std::string out = "episode";
  for (std::size_t i = 1; i <= n; ++i) out += ",w_" + std::to_string(i);
  out += "\n";
  for (std::size_t e = 0; e < r.weights.size(); ++e) {
    out += std::to_string(e + 1);
    for (double w : r.weights[e]) out += "," + format_double(w);
    out += "\n";
  }
  return out;
}

std::string actions_csv(const RunRecord& r, std::size_t n) {
  std::string out = "episode";
  for (std::size_t i = 1; i <= n; ++i) out += ",count_" + std::to_string(i);
  out += "\n";
  for (std::size_t e = 0; e < r.action_counts.size(); ++e) {
    out += std::to_string(e + 1);
    for (long c : r.action_counts[e]) out += "," + std::to_string(c);
    out += "\n";
  }
  return out;
}

json interval_json(const std::vector<double>& xs) {
  json j{{"mean", nullptr}, {"halfwidth", nullptr}, {"median", nullptr}, {"n", xs.size()}};
  if (xs.empty()) return j;
  if (xs.size() >= 2) {
    const Interval ci = confidence_interval(xs);
    j["mean"] = ci.mean;
    j["halfwidth"] = ci.halfwidth;
  } else {
    j["mean"] = xs.front();
  }
  j["median"] = median(xs);
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

void validate_domain(const HyperParams& hp, const std::string& field) {
  const std::string prefix = field.empty() ? "" : field + ".";
  if (hp.discount != 0.99) throw ValidationError(prefix + "discount", "is fixed at 0.99");
  if (hp.reward_scale != 0.01) throw ValidationError(prefix + "reward_scale", "is fixed at 0.01");
  if (hp.tau != 0.01) throw ValidationError(prefix + "tau", "is fixed at 0.01");
  check_in(hp.target_update_interval, ParameterDomain::target_update_interval, prefix + "target_update_interval");
  check_in(hp.learning_rate, ParameterDomain::learning_rate, prefix + "learning_rate");
  check_in(hp.replay_steps, ParameterDomain::replay_steps, prefix + "replay_steps");
  check_in(hp.minibatch_size, ParameterDomain::minibatch_size, prefix + "minibatch_size");
  check_in(hp.layer_size, ParameterDomain::layer_size, prefix + "layer_size");
  if (hp.activation != Activation::Relu && hp.activation != Activation::Softmax) {
    throw ValidationError(prefix + "activation", "must be relu or softmax");
  }
  if (hp.replay_steps % hp.minibatch_size != 0) {
    throw ValidationError(prefix + "replay_steps", "must be a multiple of minibatch_size (" +
                                                       std::to_string(hp.minibatch_size) + ")");
  }
}

HyperParams sample_parameterization(Rng& rng) {
  auto pick = [&rng](const auto& domain) {
    std::uniform_int_distribution<std::size_t> d(0, domain.size() - 1);
    return domain[d(rng)];
  };
  HyperParams hp;
  for (;;) {
    hp.target_update_interval = pick(ParameterDomain::target_update_interval);
    hp.learning_rate = pick(ParameterDomain::learning_rate);
    hp.replay_steps = pick(ParameterDomain::replay_steps);
    hp.minibatch_size = pick(ParameterDomain::minibatch_size);
    hp.layer_size = pick(ParameterDomain::layer_size);
    hp.activation = pick(ParameterDomain::activation);
    if (hp.replay_steps % hp.minibatch_size == 0) return hp;
  }
}

// --- presets -------------------------------------------------------------------

std::vector<HyperParams> PresetFile::group(const std::string& name) const {
  auto take = [&](std::size_t good_count, std::size_t bad_count) {
    if (good.size() < good_count || bad.size() < bad_count) {
      throw ConfigError("preset file for '" + environment + "' has too few members for " + name);
    }
    std::vector<HyperParams> out(good.begin(), good.begin() + static_cast<long>(good_count));
    out.insert(out.end(), bad.begin(), bad.begin() + static_cast<long>(bad_count));
    return out;
  };
  if (name == "ThreeGood") return take(3, 0);
  if (name == "OneGoodOneBad") return take(1, 1);
  if (name == "OneGoodThreeBad") return take(1, 3);
  if (name == "OneGoodSevenBad") return take(1, 7);
  if (name == "SingleGood") return take(1, 0);
  throw ConfigError("unknown preset group '" + name + "'");
}

PresetFile preset_from_json(const json& doc) {
  PresetFile p;
  p.environment = get_as<std::string>(doc, "environment", "environment");
  p.good = member_list(doc.value("good", json::array()), "good");
  p.bad = member_list(doc.value("bad", json::array()), "bad");
  if (doc.contains("best_search_performance")) p.best_search_performance = doc["best_search_performance"].get<double>();
  if (doc.contains("random_performance")) p.random_performance = doc["random_performance"].get<double>();
  p.episodes = doc.value("episodes", 0);
  return p;
}

fs::path presets_directory() {
  if (const char* env = std::getenv("OWQE_PRESETS_DIR"); env && *env) return env;
#ifdef OWQE_DEFAULT_PRESETS_DIR
  if (fs::is_directory(OWQE_DEFAULT_PRESETS_DIR)) return OWQE_DEFAULT_PRESETS_DIR;
#endif
#ifdef OWQE_INSTALLED_PRESETS_DIR
  return OWQE_INSTALLED_PRESETS_DIR;
#else
  return "configs/presets";
#endif
}

PresetFile load_preset(const std::string& environment) { return load_preset(environment, presets_directory()); }

PresetFile load_preset(const std::string& environment, const fs::path& dir) {
  const fs::path file = dir / (environment + ".json");
  std::ifstream in(file);
  if (!in) throw ConfigError("no preset file for environment '" + environment + "' (looked for " + file.string() + ")");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  try {
    return preset_from_json(doc);
  } catch (const ValidationError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

// --- configs -------------------------------------------------------------------

int default_episodes(const std::string& environment) {
  if (environment == "cartpole") return 500;
  return 300;
}

ExperimentSpec parse_config(const json& doc) {
  if (!doc.is_object()) throw ValidationError("<root>", "config must be a JSON object");
  static const std::set<std::string> known{"env",          "environment",       "group",
                                           "groups",       "strategies",        "mode",
                                           "episodes",     "runs",              "first_run",
                                           "seed",         "out",               "observation_steps",
                                           "weight_learning_rate", "weight_batch_size"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ValidationError(key, "unknown field");
  }

  ExperimentSpec spec;
  const char* env_key = doc.contains("env") ? "env" : "environment";
  if (!doc.contains(env_key)) throw ValidationError("env", "is required");
  const json& envs = doc[env_key];
  if (envs.is_string()) {
    spec.environments.push_back(envs.get<std::string>());
  } else if (envs.is_array() && !envs.empty()) {
    for (std::size_t i = 0; i < envs.size(); ++i) {
      if (!envs[i].is_string()) throw ValidationError("env[" + std::to_string(i) + "]", "must be a string");
      spec.environments.push_back(envs[i].get<std::string>());
    }
  } else {
    throw ValidationError("env", "must be an environment id or a non-empty list of ids");
  }
  for (const auto& e : spec.environments) {
    if (e != "pendulum" && e != "cartpole" && e.rfind("external:", 0) != 0) {
      throw ValidationError("env", "unknown environment '" + e + "' (expected pendulum, cartpole or external:<command>)");
    }
  }
  if (std::set<std::string>(spec.environments.begin(), spec.environments.end()).size() != spec.environments.size()) {
    throw ValidationError("env", "lists an environment twice");
  }

  if (doc.contains("group") && doc.contains("groups")) throw ValidationError("groups", "give either 'group' or 'groups'");
  if (doc.contains("group")) {
    spec.groups.push_back(group_from_json(doc["group"], "group", 0));
  } else if (doc.contains("groups")) {
    const json& gs = doc["groups"];
    if (!gs.is_array() || gs.empty()) throw ValidationError("groups", "must be a non-empty list");
    // A bare list of member objects is one explicit group.
    if (gs.front().is_object() && !gs.front().contains("members") && !gs.front().contains("count") &&
        !gs.front().contains("name")) {
      spec.groups.push_back(group_from_json(gs, "groups", 0));
    } else {
      for (std::size_t i = 0; i < gs.size(); ++i) {
        spec.groups.push_back(group_from_json(gs[i], "groups[" + std::to_string(i) + "]", i));
      }
    }
  } else {
    throw ValidationError("group", "is required");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < spec.groups.size(); ++i) {
    const auto& g = spec.groups[i];
    check_name(g.name, "groups[" + std::to_string(i) + "].name");
    if (!names.insert(g.name).second) throw ValidationError("groups", "duplicate group name '" + g.name + "'");
    if (g.kind == GroupSpec::Kind::Explicit && !g.members.count("")) {
      for (const auto& e : spec.environments) {
        if (!g.members.count(e)) {
          throw ValidationError("groups[" + std::to_string(i) + "].members", "has no members for environment '" + e + "'");
        }
      }
    }
  }

  if (!doc.contains("strategies")) throw ValidationError("strategies", "is required");
  const json& ss = doc["strategies"];
  if (!ss.is_array() || ss.empty()) throw ValidationError("strategies", "must be a non-empty list");
  for (std::size_t i = 0; i < ss.size(); ++i) {
    const std::string field = "strategies[" + std::to_string(i) + "]";
    if (!ss[i].is_string()) throw ValidationError(field, "must be a string");
    try {
      spec.strategies.push_back(strategy_from_string(ss[i].get<std::string>()));
    } catch (const ConfigError& e) {
      throw ValidationError(field, e.what());
    }
  }
  if (std::set<Strategy>(spec.strategies.begin(), spec.strategies.end()).size() != spec.strategies.size()) {
    throw ValidationError("strategies", "lists a strategy twice");
  }

  if (doc.contains("mode")) {
    if (!doc["mode"].is_string()) throw ValidationError("mode", "must be a string");
    try {
      spec.mode = training_mode_from_string(doc["mode"].get<std::string>());
    } catch (const ConfigError& e) {
      throw ValidationError("mode", e.what());
    }
  }

  for (const auto& e : spec.environments) spec.episodes[e] = default_episodes(e);
  if (doc.contains("episodes")) {
    const json& eps = doc["episodes"];
    if (eps.is_object()) {
      for (const auto& [env, v] : eps.items()) {
        if (!spec.episodes.count(env)) throw ValidationError("episodes." + env, "environment is not part of 'env'");
        spec.episodes[env] = positive_int(v, "episodes." + env, 0);
      }
    } else {
      const int n = positive_int(eps, "episodes", 0);
      for (auto& [_, v] : spec.episodes) v = n;
    }
  }

  if (doc.contains("runs")) spec.runs = positive_int(doc["runs"], "runs");
  if (doc.contains("first_run")) spec.first_run = positive_int(doc["first_run"], "first_run", 0);
  if (doc.contains("seed")) {
    if (!is_seed(doc["seed"])) throw ValidationError("seed", "must be a non-negative integer");
    spec.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("out")) {
    if (!doc["out"].is_string() || doc["out"].get<std::string>().empty()) throw ValidationError("out", "must be a path");
    spec.out = doc["out"].get<std::string>();
  }
  if (doc.contains("observation_steps")) spec.observation_steps = positive_int(doc["observation_steps"], "observation_steps", 0);
  if (doc.contains("weight_learning_rate")) {
    const json& v = doc["weight_learning_rate"];
    if (!v.is_number() || !(v.get<double>() > 0.0)) throw ValidationError("weight_learning_rate", "must be positive");
    spec.weight_learning_rate = v.get<double>();
  }
  if (doc.contains("weight_batch_size")) spec.weight_batch_size = positive_int(doc["weight_batch_size"], "weight_batch_size");
  return spec;
}

ExperimentSpec parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

std::vector<HyperParams> resolve_group(const GroupSpec& group, const std::string& environment) {
  switch (group.kind) {
    case GroupSpec::Kind::Preset: return load_preset(environment).group(group.name);
    case GroupSpec::Kind::Explicit: {
      if (auto it = group.members.find(environment); it != group.members.end()) return it->second;
      if (auto it = group.members.find(""); it != group.members.end()) return it->second;
      throw ConfigError("group '" + group.name + "' has no members for environment '" + environment + "'");
    }
    case GroupSpec::Kind::Random: {
      Rng rng(group.seed);
      std::vector<HyperParams> out;
      for (int i = 0; i < group.count; ++i) out.push_back(sample_parameterization(rng));
      return out;
    }
  }
  return {};
}

json resolved_config(const ExperimentSpec& spec) {
  json groups = json::array();
  for (const auto& g : spec.groups) {
    json members = json::object();
    for (const auto& env : spec.environments) {
      json list = json::array();
      for (const auto& hp : resolve_group(g, env)) list.push_back(to_json(hp));
      members[env] = list;
    }
    groups.push_back({{"name", g.name}, {"members", members}});
  }
  json strategies = json::array();
  for (auto s : spec.strategies) strategies.push_back(std::string(to_string(s)));
  json episodes = json::object();
  for (const auto& [env, n] : spec.episodes) episodes[env] = n;
  return json{{"env", spec.environments},
              {"groups", groups},
              {"strategies", strategies},
              {"mode", std::string(to_string(spec.mode))},
              {"episodes", episodes},
              {"runs", spec.runs},
              {"first_run", spec.first_run},
              {"seed", spec.seed},
              {"out", spec.out},
              {"observation_steps", spec.observation_steps},
              {"weight_learning_rate", spec.weight_learning_rate},
              {"weight_batch_size", spec.weight_batch_size}};
}

// --- runs ------------------------------------------------------------------------

std::uint64_t run_seed(std::uint64_t base, int run_index) {
  Rng r = derive_rng(base, {static_cast<std::uint64_t>(run_index)});
  return r();
}

std::vector<RunTask> expand(const ExperimentSpec& spec) {
  std::vector<RunTask> tasks;
  for (const auto& env : spec.environments) {
    const int episodes = spec.episodes.count(env) ? spec.episodes.at(env) : default_episodes(env);
    for (const auto& g : spec.groups) {
      const auto members = resolve_group(g, env);
      for (auto s : spec.strategies) {
        for (int k = spec.first_run; k < spec.first_run + spec.runs; ++k) {
          RunTask t;
          t.environment = env;
          t.group = g.name;
          t.members = members;
          t.strategy = s;
          t.run_index = k;
          t.episodes = episodes;
          const std::string env_dir = env.rfind("external:", 0) == 0 ? "external" : env;
          t.directory = fs::path(spec.out) / env_dir / g.name / std::string(to_string(s)) / ("run_" + std::to_string(k));
          tasks.push_back(std::move(t));
        }
      }
    }
  }
  return tasks;
}

RunOutcome execute_run(const RunTask& task, const ExperimentSpec& spec) {
  RunOutcome out;
  out.task = task;
  const std::uint64_t seed = run_seed(spec.seed, task.run_index);
  out.record.seed = seed;
  try {
    auto env = make_environment(task.environment);
    const EnvSpec& es = env->spec();
    std::vector<DdpgAgent> agents;
    agents.reserve(task.members.size());
    for (std::size_t i = 0; i < task.members.size(); ++i) {
      Rng init = derive_rng(seed, {1, i});
      agents.emplace_back(es.observation_dim, es.action_bounds, task.members[i], init);
    }
    EnsembleWeights weights(agents.size());
    Rng rng = derive_rng(seed, {2});
    TrainingOptions opt;
    opt.observation_steps = spec.observation_steps;
    opt.weight_learning_rate = spec.weight_learning_rate;
    opt.weight_batch_size = spec.weight_batch_size;
    out.record = run_training(agents, weights, {task.strategy}, *env, spec.mode, task.episodes, rng, opt);
    out.record.seed = seed;
    out.record.config_id = task.environment + "/" + task.group + "/" + std::string(to_string(task.strategy));
    if (out.record.aborted) {
      out.error = out.record.error;
    } else if (out.record.episode_rewards.empty()) {
      out.ok = task.episodes == 0;
      if (!out.ok) out.error = "no episodes recorded";
    } else {
      out.ok = true;
      out.performance = final_performance(out.record).value;
    }
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

void write_run_outputs(const RunOutcome& o, const ExperimentSpec& spec) {
  const RunTask& t = o.task;
  const std::size_t n = t.members.size();
  fs::create_directories(t.directory);

  ExperimentSpec single = spec;
  single.environments = {t.environment};
  single.episodes = {{t.environment, t.episodes}};
  GroupSpec g;
  g.kind = GroupSpec::Kind::Explicit;
  g.name = t.group;
  g.members[t.environment] = t.members;
  single.groups = {g};
  single.strategies = {t.strategy};
  single.runs = 1;
  single.first_run = t.run_index;
  write_text(t.directory / "config.json", dump_json(resolved_config(single)));

  write_text(t.directory / "curves.csv", curves_csv(o.record));
  write_text(t.directory / "weights.csv", weights_csv(o.record, n));
  write_text(t.directory / "actions.csv", actions_csv(o.record, n));

  const auto& rewards = o.record.episode_rewards;
  json summary{{"environment", t.environment},
               {"group", t.group},
               {"strategy", std::string(to_string(t.strategy))},
               {"mode", std::string(to_string(spec.mode))},
               {"run", t.run_index},
               {"seed", o.record.seed},
               {"members", n},
               {"episodes_requested", t.episodes},
               {"episodes_completed", rewards.size()},
               {"ok", o.ok},
               {"aborted", o.record.aborted}};
  if (!o.error.empty()) summary["error"] = o.error;
  if (!rewards.empty()) {
    const FinalPerformance fp = final_performance(rewards);
    summary["final_performance"] = fp.value;
    summary["short_record"] = fp.short_record;
    const std::size_t w = std::min<std::size_t>(20, rewards.size());
    summary["final_window"] = interval_json(std::vector<double>(rewards.end() - static_cast<long>(w), rewards.end()));
    summary["final_weights"] = o.record.weights.back();
    std::vector<long> totals(n, 0);
    for (const auto& row : o.record.action_counts)
      for (std::size_t i = 0; i < n; ++i) totals[i] += row[i];
    summary["action_totals"] = totals;
  }
  write_text(t.directory / "summary.json", dump_json(summary));
}

json matrix_summary(const std::vector<RunOutcome>& runs) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> cells;
  std::map<std::tuple<std::string, std::string, std::string>, int> failed;
  for (const auto& r : runs) {
    const auto key = std::make_tuple(r.task.environment, r.task.group, std::string(to_string(r.task.strategy)));
    if (r.ok && !r.record.episode_rewards.empty()) {
      cells[key].push_back(r.performance);
    } else {
      ++failed[key];
      cells[key];
    }
  }
  json out = json::array();
  PerfTable table;
  for (const auto& [key, perfs] : cells) {
    const auto& [env, group, strategy] = key;
    json cell = interval_json(perfs);
    cell["environment"] = env;
    cell["group"] = group;
    cell["strategy"] = strategy;
    cell["performances"] = perfs;
    cell["failed_runs"] = failed.count(key) ? failed.at(key) : 0;
    out.push_back(cell);
    if (!perfs.empty()) table.set(env, group, strategy, cell["mean"].get<double>());
  }
  json summary{{"cells", out}};
  const json regret = regret_report(table);
  if (!regret.is_null()) summary["regret"] = regret;
  return summary;
}

json regret_report(const PerfTable& table) {
  const auto strategies = table.strategies();
  if (strategies.size() < 2 || !table.missing().empty()) return nullptr;
  json r = json::object();
  for (const auto& k : strategies) r[k] = average_relative_regret(table, k);
  return r;
}

MatrixResult run_matrix(const ExperimentSpec& spec, int jobs, const ProgressFn& progress) {
  const std::vector<RunTask> tasks = expand(spec);
  MatrixResult result;
  result.runs.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      RunOutcome o = execute_run(tasks[i], spec);
      try {
        write_run_outputs(o, spec);
      } catch (const std::exception& e) {
        o.ok = false;
        o.error = e.what();
      }
      std::lock_guard lock(mu);
      result.runs[i] = std::move(o);
      ++done;
      if (progress) progress(result.runs[i], done, tasks.size());
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::string csv = "environment,group,strategy,seed,performance\n";
  for (const auto& r : result.runs) {
    if (!r.ok) {
      ++result.failures;
      continue;
    }
    csv += r.task.environment + "," + r.task.group + "," + std::string(to_string(r.task.strategy)) + "," +
           std::to_string(r.record.seed) + "," + format_double(r.performance) + "\n";
  }
  const fs::path root(spec.out);
  write_text(root / "perf_table.csv", csv);
  const json summary = matrix_summary(result.runs);
  write_text(root / "summary.json", dump_json(summary));
  write_text(root / "config.json", dump_json(resolved_config(spec)));
  result.table = read_perf_table(root / "perf_table.csv");
  if (summary.contains("regret")) write_text(root / "regret.json", dump_json(summary["regret"]));
  return result;
}

PerfTable read_perf_table(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw ConfigError("cannot open " + csv.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_csv(line);
  if (header != std::vector<std::string>{"environment", "group", "strategy", "seed", "performance"}) {
    throw ConfigError(csv.string() + ": unexpected header '" + line + "'");
  }
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, int>> acc;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw ConfigError(csv.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    auto& [sum, count] = acc[{f[0], f[1], f[2]}];
    sum += parse_double(f[4], csv.string() + ":" + std::to_string(lineno));
    ++count;
  }
  PerfTable t;
  for (const auto& [key, v] : acc) t.set(std::get<0>(key), std::get<1>(key), std::get<2>(key), v.first / v.second);
  return t;
}

std::vector<double> read_curve(const fs::path& run_dir) {
  const fs::path file = run_dir / "curves.csv";
  std::ifstream in(file);
  if (!in) throw ConfigError("missing " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "episode,cumulative_reward") throw ConfigError(file.string() + ": unexpected header");
  std::vector<double> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": expected 2 fields");
    out.push_back(parse_double(f[1], file.string() + ":" + std::to_string(lineno)));
  }
  return out;
}

NumericTable read_numeric_csv(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw ConfigError("missing " + csv.string());
  NumericTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(csv.string() + ": empty file");
  t.header = split_csv(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != t.header.size()) {
      throw ConfigError(csv.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields");
    }
    std::vector<double> row;
    for (const auto& x : f) row.push_back(parse_double(x, csv.string() + ":" + std::to_string(lineno)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<fs::path> find_run_directories(const fs::path& root) {
  if (!fs::is_directory(root)) throw ConfigError("no such directory: " + root.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "summary.json" &&
        entry.path().parent_path() != root) {
      out.push_back(entry.path().parent_path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

RunOutcome load_run(const fs::path& run_dir) {
  std::vector<std::string> missing;
  for (const char* f : {"config.json", "summary.json", "curves.csv", "weights.csv", "actions.csv"}) {
    if (!fs::is_regular_file(run_dir / f)) missing.push_back((run_dir / f).string());
  }
  if (!missing.empty()) throw ConfigError("missing run outputs: " + join(missing));

  std::ifstream sf(run_dir / "summary.json");
  const json summary = json::parse(sf);
  const ExperimentSpec spec = parse_config_file(run_dir / "config.json");
  RunOutcome o;
  o.task = expand(spec).front();
  o.task.directory = run_dir;
  o.record.seed = summary.at("seed").get<std::uint64_t>();
  o.record.episode_rewards = read_curve(run_dir);
  for (const auto& row : read_numeric_csv(run_dir / "weights.csv").rows) o.record.weights.emplace_back(row.begin() + 1, row.end());
  for (const auto& row : read_numeric_csv(run_dir / "actions.csv").rows) {
    std::vector<long> counts;
    for (std::size_t i = 1; i < row.size(); ++i) counts.push_back(static_cast<long>(row[i]));
    o.record.action_counts.push_back(std::move(counts));
  }
  o.record.aborted = summary.value("aborted", false);
  o.error = summary.value("error", "");
  o.ok = summary.value("ok", false);
  if (o.ok && !o.record.episode_rewards.empty()) o.performance = final_performance(o.record).value;
  return o;
}

double random_policy_performance(const std::string& environment, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("random baseline needs at least one episode");
  auto env = make_environment(environment);
  const EnvSpec& spec = env->spec();
  Rng rng = derive_rng(seed, {3});
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    env->reset();
    for (;;) {
      Vector a(spec.action_dim);
      for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = spec.action_bounds(k) * unit(rng);
      const StepResult r = env->step(a);
      total += r.reward;
      if (r.terminal || r.timeout) break;
    }
  }
  return total / episodes;
}

}  // namespace owqe
