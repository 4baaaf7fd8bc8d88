#include "nfn/config.hpp"

#include <cctype>
#include <cmath>
#include <set>

#include "json.hpp"
#include "nfn/normalize.hpp"
#include "nfn/serialize.hpp"

namespace nfn {

using nlohmann::json;

namespace {

json parse_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key()))
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("key '") + key + "' has the wrong type");
  }
}

NfnHyperparams parse_nfn(const json& j) {
  check_keys(j,
             {"|U|", "STGE", "τ", "θ", "N", "ε", "+μ", "w_u", "α", "CF", "LN", "η", "terms",
              "range", "trunk", "width_floor"},
             "the nfn section");
  NfnHyperparams hp;
  hp.rule_count = get_or(j, "|U|", hp.rule_count);
  hp.stge = get_or(j, "STGE", hp.stge);
  hp.tau = get_or(j, "τ", hp.tau);
  hp.theta = get_or(j, "θ", hp.theta);
  hp.retain_batches = get_or(j, "N", hp.retain_batches);
  hp.epsilon = get_or(j, "ε", hp.epsilon);
  hp.delay_batches = get_or(j, "+μ", hp.delay_batches);
  if (j.contains("w_u")) {
    std::string mode = j.at("w_u").get<std::string>();
    for (char& c : mode) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    hp.mode = firing_mode_from(mode);
  }
  hp.alpha = get_or(j, "α", hp.alpha);
  norm_kind_from_alpha(hp.alpha);  // validates the menu
  if (j.contains("CF")) {
    const json& cf = j.at("CF");
    if (cf.is_boolean()) {
      hp.certainty = cf.get<bool>() ? CertaintyMode::Renormalized : CertaintyMode::Off;
    } else if (cf.is_string()) {
      hp.certainty = certainty_mode_from(cf.get<std::string>());
    } else {
      throw ConfigError("key 'CF' must be a boolean or a certainty mode name");
    }
  }
  hp.layer_norm = get_or(j, "LN", hp.layer_norm);
  hp.eta = get_or(j, "η", hp.eta);
  hp.width_floor = get_or(j, "width_floor", hp.width_floor);
  hp.initial_terms = get_or(j, "terms", hp.initial_terms);
  if (j.contains("range")) {
    const json& r = j.at("range");
    if (!r.is_array() || r.size() != 2)
      throw ConfigError("key 'range' must be a two-element array [lo, hi]");
    hp.range_lo = r[0].get<double>();
    hp.range_hi = r[1].get<double>();
  }
  hp.trunk = get_or(j, "trunk", hp.trunk);
  if (hp.rule_count < 1) throw ConfigError("'|U|' must be positive");
  if (hp.initial_terms < 1) throw ConfigError("'terms' must be positive");
  if (!(hp.range_hi > hp.range_lo)) throw ConfigError("'range' needs hi > lo");
  if (hp.eta <= 0.0) throw ConfigError("'η' must be positive");
  if (hp.width_floor <= 0.0 || hp.width_floor >= 1.0)
    throw ConfigError("'width_floor' must lie in (0, 1)");
  if (hp.trunk < 0) throw ConfigError("'trunk' must be >= 0");
  return hp;
}

MlpHyperparams parse_mlp(const json& j) {
  check_keys(j, {"|N|", "h_n", "η", "trunk"}, "the mlp section");
  MlpHyperparams hp;
  hp.hidden = get_or(j, "|N|", hp.hidden);
  if (j.contains("h_n")) hp.activation = rl::activation_from_string(j.at("h_n").get<std::string>());
  hp.eta = get_or(j, "η", hp.eta);
  hp.trunk = get_or(j, "trunk", hp.trunk);
  if (hp.hidden < 1) throw ConfigError("'|N|' must be positive");
  if (hp.eta <= 0.0) throw ConfigError("'η' must be positive");
  if (hp.trunk < 0) throw ConfigError("'trunk' must be >= 0");
  return hp;
}

SupervisedJob parse_supervised(const json& j) {
  check_keys(j, {"task", "dataset", "samples", "steps", "|X|", "seed", "nfn"}, "the config");
  SupervisedJob job;
  job.dataset = get_or<std::string>(j, "dataset", job.dataset);
  job.samples = get_or(j, "samples", job.samples);
  job.steps = get_or(j, "steps", job.steps);
  job.batch = get_or(j, "|X|", job.batch);
  job.seed = get_or(j, "seed", job.seed);
  if (j.contains("nfn")) job.nfn = parse_nfn(j.at("nfn"));
  if (job.dataset != "sin" && job.dataset != "constant")
    throw ConfigError("unknown dataset '" + job.dataset + "' (expected sin or constant)");
  if (job.samples < 2 || job.steps < 1 || job.batch < 1)
    throw ConfigError("'samples', 'steps' and '|X|' must be positive");
  return job;
}

RlJob parse_rl(const json& j) {
  check_keys(j,
             {"task", "env", "agent", "seed", "epochs", "steps_per_epoch", "eval_episodes",
              "Frames", "γ", "Mem", "|X|", "target_sync", "warmup", "nfn", "mlp"},
             "the config");
  RlJob job;
  job.env = get_or<std::string>(j, "env", job.env);
  job.agent = get_or<std::string>(j, "agent", job.agent);
  job.seed = get_or(j, "seed", job.seed);
  job.epochs = get_or(j, "epochs", job.epochs);
  job.steps_per_epoch = get_or(j, "steps_per_epoch", job.steps_per_epoch);
  job.eval_episodes = get_or(j, "eval_episodes", job.eval_episodes);
  job.frames = get_or(j, "Frames", job.frames);
  job.gamma = get_or(j, "γ", job.gamma);
  job.memory = get_or(j, "Mem", job.memory);
  job.batch = get_or(j, "|X|", job.batch);
  job.target_sync = get_or(j, "target_sync", job.target_sync);
  job.warmup = get_or(j, "warmup", job.warmup);
  if (j.contains("nfn")) job.nfn = parse_nfn(j.at("nfn"));
  if (j.contains("mlp")) job.mlp = parse_mlp(j.at("mlp"));
  if (job.agent != "nfn" && job.agent != "mlp")
    throw ConfigError("unknown agent '" + job.agent + "' (expected nfn or mlp)");
  if (job.memory < 1 || job.batch < 1) throw ConfigError("'Mem' and '|X|' must be positive");
  if (job.target_sync < 1) throw ConfigError("'target_sync' must be positive");
  return job;
}

}  // namespace

InferenceConfig to_inference_config(const NfnHyperparams& hp) {
  InferenceConfig cfg;
  cfg.mode = hp.mode;
  cfg.norm = norm_kind_from_alpha(hp.alpha);
  cfg.layer_norm = hp.layer_norm;
  cfg.certainty = hp.certainty;
  cfg.estimator = hp.stge ? Estimator::STGE : Estimator::STE;
  cfg.tau = hp.tau;
  cfg.retain_batches = hp.retain_batches;
  cfg.theta = hp.theta;
  return cfg;
}

NeurogenesisConfig to_neurogenesis_config(const NfnHyperparams& hp) {
  NeurogenesisConfig cfg;
  cfg.epsilon = hp.epsilon;
  cfg.delay_batches = hp.delay_batches;
  cfg.width_floor_factor = hp.width_floor;
  return cfg;
}

NfnStack build_stack(const NfnHyperparams& hp, int in_dim, int out_dim, Rng& rng) {
  MembershipLayer layer =
      MembershipLayer::spread(in_dim, hp.initial_terms, hp.range_lo, hp.range_hi);
  std::vector<NfnBlock> blocks;
  blocks.emplace_back(std::move(layer), hp.rule_count, out_dim, to_inference_config(hp), rng);
  return NfnStack(std::move(blocks));
}

Job parse_job(const std::string& text) {
  json j = parse_text(text);
  Job job;
  job.task = get_or<std::string>(j, "task", "");
  if (job.task == "supervised") {
    job.supervised = parse_supervised(j);
  } else if (job.task == "rl") {
    job.rl = parse_rl(j);
  } else {
    throw ConfigError("config key 'task' must be 'supervised' or 'rl'");
  }
  return job;
}

std::string default_supervised_config() {
  json j{{"task", "supervised"},
         {"dataset", "sin"},
         {"samples", 256},
         {"steps", 2000},
         {"|X|", 32},
         {"seed", 7},
         {"nfn",
          {{"|U|", 8},
           {"STGE", true},
           {"τ", 0.6},
           {"θ", 0.0},
           {"N", 64},
           {"ε", 0.4},
           {"+μ", 3},
           {"w_u", "Sum"},
           {"α", 1.0},
           {"CF", false},
           {"LN", false},
           {"η", 1e-2},
           {"terms", 3},
           {"range", {-3.0, 3.0}}}}};
  return j.dump(2);
}

std::string default_rl_config() {
  json j{{"task", "rl"},
         {"env", "track_and_shoot"},
         {"agent", "nfn"},
         {"seed", 2},
         {"epochs", 40},
         {"steps_per_epoch", 500},
         {"eval_episodes", 25},
         {"Frames", 1},
         {"γ", 0.95},
         {"Mem", 10000},
         {"|X|", 32},
         {"target_sync", 1000},
         {"warmup", 500},
         {"nfn",
          {{"|U|", 16},
           {"STGE", false},
           {"τ", 0.6},
           {"θ", 0.0},
           {"N", 64},
           {"ε", 0.4},
           {"+μ", 3},
           {"w_u", "Sum"},
           {"α", 1.0},
           {"CF", false},
           {"LN", false},
           {"η", 1e-3},
           {"width_floor", 0.05},
           {"terms", 3},
           {"range", {-1.0, 1.0}}}},
         {"mlp", {{"|N|", 128}, {"h_n", "relu"}, {"η", 5e-4}}}};
  return j.dump(2);
}

SupervisedConfig to_supervised_config(const SupervisedJob& job) {
  SupervisedConfig cfg;
  cfg.steps = job.steps;
  cfg.batch_size = job.batch;
  cfg.learning_rate = job.nfn.eta;
  cfg.seed = job.seed;
  cfg.neuro = to_neurogenesis_config(job.nfn);
  cfg.neurogenesis = job.nfn.epsilon > 0.0;
  return cfg;
}

rl::RlConfig to_rl_config(const RlJob& job) {
  rl::RlConfig cfg;
  cfg.epochs = job.epochs;
  cfg.steps_per_epoch = job.steps_per_epoch;
  cfg.eval_episodes = job.eval_episodes;
  cfg.batch_size = job.batch;
  cfg.memory = static_cast<size_t>(job.memory);
  cfg.frames = job.frames;
  cfg.gamma = job.gamma;
  cfg.target_sync = job.target_sync;
  cfg.warmup = job.warmup;
  cfg.seed = job.seed;
  return cfg;
}

void make_dataset(const SupervisedJob& job, Matrix* X, Matrix* Y) {
  Rng rng(job.seed ^ 0x5EEDull);
  std::uniform_real_distribution<double> draw(job.nfn.range_lo, job.nfn.range_hi);
  *X = Matrix(job.samples, 1);
  *Y = Matrix(job.samples, 1);
  for (int r = 0; r < job.samples; ++r) {
    const double x = draw(rng);
    (*X)(r, 0) = x;
    (*Y)(r, 0) = job.dataset == "sin" ? std::sin(x) : 0.7;
  }
}

rl::DuelModel build_duel_model(const RlJob& job, int state_dim, int action_count, Rng& rng) {
  if (job.agent == "mlp") {
    const MlpHyperparams& hp = job.mlp;
    if (hp.trunk > 0) {
      rl::Mlp trunk(state_dim, hp.hidden, hp.trunk, hp.activation, rng);
      rl::Mlp value(hp.trunk, hp.hidden, 1, hp.activation, rng);
      rl::Mlp adv(hp.trunk, hp.hidden, action_count, hp.activation, rng);
      return rl::DuelModel(rl::make_mlp_net(std::move(value), hp.eta),
                           rl::make_mlp_net(std::move(adv), hp.eta),
                           rl::make_mlp_net(std::move(trunk), hp.eta));
    }
    rl::Mlp value(state_dim, hp.hidden, 1, hp.activation, rng);
    rl::Mlp adv(state_dim, hp.hidden, action_count, hp.activation, rng);
    return rl::DuelModel(rl::make_mlp_net(std::move(value), hp.eta),
                         rl::make_mlp_net(std::move(adv), hp.eta));
  }
  const NfnHyperparams& hp = job.nfn;
  NeurogenesisConfig neuro = to_neurogenesis_config(hp);
  if (hp.trunk > 0) {
    NfnStack trunk = build_stack(hp, state_dim, hp.trunk, rng);
    NfnStack value = build_stack(hp, hp.trunk, 1, rng);
    NfnStack adv = build_stack(hp, hp.trunk, action_count, rng);
    return rl::DuelModel(rl::make_nfn_net(std::move(value), hp.eta, neuro),
                         rl::make_nfn_net(std::move(adv), hp.eta, neuro),
                         rl::make_nfn_net(std::move(trunk), hp.eta, neuro));
  }
  NfnStack value = build_stack(hp, state_dim, 1, rng);
  NfnStack adv = build_stack(hp, state_dim, action_count, rng);
  return rl::DuelModel(rl::make_nfn_net(std::move(value), hp.eta, neuro),
                       rl::make_nfn_net(std::move(adv), hp.eta, neuro));
}

}  // namespace nfn
