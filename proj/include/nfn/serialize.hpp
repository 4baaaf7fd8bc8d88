#pragma once

#include <string>

#include "nfn/adam.hpp"
#include "nfn/network.hpp"

namespace nfn {

// Enum <-> config-string conversions shared by serialization and config
// parsing. Unknown strings throw ConfigError.
std::string firing_mode_name(FiringMode mode);
FiringMode firing_mode_from(const std::string& name);
std::string norm_kind_name(NormKind kind);
NormKind norm_kind_from(const std::string& name);
std::string certainty_mode_name(CertaintyMode mode);
CertaintyMode certainty_mode_from(const std::string& name);
std::string estimator_name(Estimator estimator);
Estimator estimator_from(const std::string& name);

// JSON snapshots with versioned "format" fields; loaders reject other
// versions. Only active term slots are persisted; loaders rebuild objects
// through the normal constructors and overwrite the live values, so inert
// grid slots come back in their freshly-initialized state. The structure
// noise cache is deliberately not saved: evaluation never needs it and
// training redraws it on the first forward.
std::string save_layer(const MembershipLayer& layer);
MembershipLayer load_layer(const std::string& text);

std::string save_stack(const NfnStack& stack);
NfnStack load_stack(const std::string& text, Rng& rng);

// Model plus optimizer state, enough to resume training.
struct Checkpoint {
  NfnStack stack;
  int64_t step = 0;
  double learning_rate = 0.0;
};

std::string save_checkpoint(const NfnStack& stack, const Adam& adam);
Checkpoint load_checkpoint(const std::string& text, Rng& rng, Adam& adam);

// Human-readable table of each rule's selected fuzzy set per attribute,
// using the banks' current deterministic selection.
std::string structure_table(const NfnStack& stack);

// Small file helpers (throw InputError on IO failure).
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace nfn
