#pragma once

#include <string>

#include "nfn/network.hpp"
#include "nfn/neurogenesis.hpp"
#include "nfn/rl/agent.hpp"
#include "nfn/rl/mlp.hpp"
#include "nfn/training.hpp"

namespace nfn {

// Network hyperparameters, one field per knob of the experiment tables. The
// JSON config file uses the table names verbatim as keys:
//   "|U|" rules, "STGE" estimator switch, "τ" temperature, "θ" constraint
//   percentile, "N" noise retention batches, "ε" completeness level, "+μ"
//   neurogenesis delay, "w_u" Sum|Mean, "α" 1.0|1.5, "CF" false|true|"raw",
//   "LN" layer norm, "η" learning rate;
// plus artifact knobs "terms" (initial sets per attribute), "range" (initial
// membership span, also the supervised data domain) and "trunk" (shared
// feature width for the dueling heads; 0 keeps separate heads).
struct NfnHyperparams {
  int rule_count = 64;
  bool stge = true;
  double tau = 0.6;
  double theta = 0.0;
  int retain_batches = 64;
  double epsilon = 0.4;
  int delay_batches = 3;
  FiringMode mode = FiringMode::Sum;
  double alpha = 1.0;
  CertaintyMode certainty = CertaintyMode::Off;
  bool layer_norm = false;
  double eta = 5e-4;
  double width_floor = 1e-4;  // fraction of attribute scale widths may not drop below
  int initial_terms = 3;
  double range_lo = -1.0;
  double range_hi = 1.0;
  int trunk = 0;
};

InferenceConfig to_inference_config(const NfnHyperparams& hp);
NeurogenesisConfig to_neurogenesis_config(const NfnHyperparams& hp);

// Single-block stack with evenly spread initial sets over the range.
NfnStack build_stack(const NfnHyperparams& hp, int in_dim, int out_dim, Rng& rng);

// Baseline network knobs; keys "|N|" hidden width, "h_n" activation, "η",
// "trunk" as above.
struct MlpHyperparams {
  int hidden = 128;
  rl::Activation activation = rl::Activation::ReLU;
  double eta = 5e-4;
  int trunk = 0;
};

struct SupervisedJob {
  std::string dataset = "sin";  // sin | constant
  int samples = 256;
  int steps = 2000;
  int batch = 32;  // "|X|"
  uint64_t seed = 7;
  NfnHyperparams nfn;
};

struct RlJob {
  std::string env = "track_and_shoot";
  std::string agent = "nfn";  // nfn | mlp
  uint64_t seed = 1;
  int epochs = 40;
  int steps_per_epoch = 500;
  int eval_episodes = 25;
  int frames = 1;       // "Frames"
  double gamma = 0.95;  // "γ"
  int memory = 10000;   // "Mem"
  int batch = 32;       // "|X|"
  int target_sync = 1000;
  int warmup = 500;
  NfnHyperparams nfn;
  MlpHyperparams mlp;
};

// A parsed config file; task selects which job is populated.
struct Job {
  std::string task;  // supervised | rl
  SupervisedJob supervised;
  RlJob rl;
};

// Strict parser: unknown keys, wrong types and out-of-menu values all throw
// ConfigError naming the offender.
Job parse_job(const std::string& text);

std::string default_supervised_config();
std::string default_rl_config();

SupervisedConfig to_supervised_config(const SupervisedJob& job);
rl::RlConfig to_rl_config(const RlJob& job);

// Built-in regression datasets over the job's range.
void make_dataset(const SupervisedJob& job, Matrix* X, Matrix* Y);

// Online + target dueling heads per the job's agent selection.
rl::DuelModel build_duel_model(const RlJob& job, int state_dim, int action_count, Rng& rng);

}  // namespace nfn
