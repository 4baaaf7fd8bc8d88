#include "nfn/neurogenesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nfn {

NeurogenesisState::NeurogenesisState(int attribute_count)
    : moments_(attribute_count), batches_(attribute_count, 0) {
  if (attribute_count < 1) throw ConfigError("neurogenesis needs at least one attribute");
}

void NeurogenesisState::observe(const CompletenessReport& report, const Matrix& X) {
  if (X.rows != report.batch_size)
    throw StructuralError("completeness report does not describe this batch");
  std::vector<uint8_t> touched(moments_.size(), 0);
  for (const auto& [row, attribute] : report.failing) {
    if (attribute < 0 || attribute >= static_cast<int>(moments_.size()) || row < 0 ||
        row >= X.rows)
      throw StructuralError("completeness report indexes out of range");
    moments_[attribute].push(X(row, attribute));
    touched[attribute] = 1;
  }
  for (size_t i = 0; i < moments_.size(); ++i) {
    if (touched[i]) ++batches_[i];
  }
}

std::vector<int> NeurogenesisState::ripe(int delay_batches) const {
  std::vector<int> out;
  for (size_t i = 0; i < batches_.size(); ++i) {
    if (batches_[i] >= delay_batches) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<SproutEvent> NeurogenesisState::sprout(NfnBlock& block, int block_index,
                                                   const NeurogenesisConfig& config,
                                                   int64_t step, Rng& rng) {
  if (config.delay_batches < 1) throw ConfigError("+mu delay must be >= 1 batch");
  std::vector<SproutEvent> events;
  for (int attribute : ripe(config.delay_batches)) {
    RunningMoments& m = moments_[attribute];
    const double floor =
        config.width_floor_factor * block.layer().attribute_scale(attribute);
    GaussianSet set;
    set.center = m.mean();
    set.width = std::max(std::sqrt(m.variance()), floor);
    SproutEvent event;
    event.step = step;
    event.block = block_index;
    event.attribute = attribute;
    event.center = set.center;
    event.width = set.width;
    event.samples = m.count();
    event.batches_waited = batches_[attribute];
    event.growth = block.add_term(attribute, set, rng);
    events.push_back(event);
    m.reset();
    batches_[attribute] = 0;
  }
  return events;
}

CompletenessReport completeness_from_tape(const BlockTape& tape, const MembershipLayer& layer,
                                          double epsilon) {
  if (epsilon <= 0.0 || epsilon >= 1.0) throw ConfigError("epsilon must lie in (0, 1)");
  if (tape.logmu.n1 != layer.attribute_count())
    throw StructuralError("tape does not match the layer");
  for (int i = 0; i < layer.attribute_count(); ++i) {
    if (layer.term_count(i) > tape.logmu.n2)
      throw UsageError("tape is stale: the layer grew after this forward");
  }
  const double log_eps = std::log(epsilon);
  CompletenessReport report;
  report.batch_size = tape.logmu.n0;
  for (int b = 0; b < tape.logmu.n0; ++b) {
    for (int i = 0; i < layer.attribute_count(); ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < layer.term_count(i); ++j)
        best = std::max(best, tape.logmu(b, i, j));
      if (best < log_eps) report.failing.emplace_back(b, i);
    }
  }
  return report;
}

}  // namespace nfn
