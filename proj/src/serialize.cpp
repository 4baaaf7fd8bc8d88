#include "nfn/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace nfn {

using nlohmann::json;

std::string firing_mode_name(FiringMode mode) {
  return mode == FiringMode::Sum ? "sum" : "mean";
}

FiringMode firing_mode_from(const std::string& name) {
  if (name == "sum") return FiringMode::Sum;
  if (name == "mean") return FiringMode::Mean;
  throw ConfigError("unknown firing mode '" + name + "' (expected sum or mean)");
}

std::string norm_kind_name(NormKind kind) {
  return kind == NormKind::Softmax ? "softmax" : "entmax15";
}

NormKind norm_kind_from(const std::string& name) {
  if (name == "softmax") return NormKind::Softmax;
  if (name == "entmax15") return NormKind::Entmax15;
  throw ConfigError("unknown normalization '" + name + "' (expected softmax or entmax15)");
}

std::string certainty_mode_name(CertaintyMode mode) {
  switch (mode) {
    case CertaintyMode::Off: return "off";
    case CertaintyMode::Renormalized: return "renormalized";
    case CertaintyMode::Raw: return "raw";
  }
  throw ConfigError("invalid certainty mode");
}

CertaintyMode certainty_mode_from(const std::string& name) {
  if (name == "off") return CertaintyMode::Off;
  if (name == "renormalized") return CertaintyMode::Renormalized;
  if (name == "raw") return CertaintyMode::Raw;
  throw ConfigError("unknown certainty mode '" + name +
                    "' (expected off, renormalized or raw)");
}

std::string estimator_name(Estimator estimator) {
  return estimator == Estimator::STE ? "ste" : "stge";
}

Estimator estimator_from(const std::string& name) {
  if (name == "ste") return Estimator::STE;
  if (name == "stge") return Estimator::STGE;
  throw ConfigError("unknown estimator '" + name + "' (expected ste or stge)");
}

namespace {

constexpr const char* kLayerFormat = "nfn.layer/1";
constexpr const char* kStackFormat = "nfn.stack/1";
constexpr const char* kCheckpointFormat = "nfn.checkpoint/1";

void check_format(const json& j, const char* expected) {
  if (!j.is_object() || !j.contains("format") || !j.at("format").is_string())
    throw InputError("snapshot is missing its format tag");
  const std::string got = j.at("format").get<std::string>();
  if (got != expected)
    throw InputError("snapshot format '" + got + "' does not match '" + expected + "'");
}

json parse(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw InputError("snapshot is not valid JSON");
  return j;
}

json layer_to_json(const MembershipLayer& layer) {
  json centers = json::array();
  json widths = json::array();
  for (int i = 0; i < layer.attribute_count(); ++i) {
    json c = json::array();
    json w = json::array();
    for (int j = 0; j < layer.term_count(i); ++j) {
      c.push_back(layer.center(i, j));
      w.push_back(layer.width(i, j));
    }
    centers.push_back(std::move(c));
    widths.push_back(std::move(w));
  }
  json scales = json::array();
  for (int i = 0; i < layer.attribute_count(); ++i)
    scales.push_back(layer.attribute_scale(i));
  return json{{"format", kLayerFormat},
              {"attributes", layer.attribute_count()},
              {"max_terms", layer.max_terms()},
              {"attribute_scale", std::move(scales)},
              {"centers", std::move(centers)},
              {"widths", std::move(widths)}};
}

MembershipLayer layer_from_json(const json& j) {
  check_format(j, kLayerFormat);
  const int attributes = j.at("attributes").get<int>();
  const int max_terms = j.at("max_terms").get<int>();
  const json& centers = j.at("centers");
  const json& widths = j.at("widths");
  const json& scales = j.at("attribute_scale");
  if (static_cast<int>(centers.size()) != attributes ||
      static_cast<int>(widths.size()) != attributes ||
      static_cast<int>(scales.size()) != attributes)
    throw InputError("layer snapshot row count disagrees with its attribute count");
  MembershipLayer layer(attributes, max_terms);
  for (int i = 0; i < attributes; ++i) {
    if (centers[i].size() != widths[i].size())
      throw InputError("layer snapshot centers/widths rows disagree");
    layer.set_attribute_scale(i, scales[i].get<double>());
    for (size_t t = 0; t < centers[i].size(); ++t)
      layer.add_term(i, {centers[i][t].get<double>(), widths[i][t].get<double>()});
  }
  return layer;
}

json block_to_json(const NfnBlock& block) {
  const MembershipLayer& layer = block.layer();
  const RuleBank& bank = block.bank();
  const TskHead& head = block.head();
  const InferenceConfig& cfg = block.config();

  json logits = json::array();
  for (int u = 0; u < bank.rule_count(); ++u) {
    json per_attr = json::array();
    for (int i = 0; i < layer.attribute_count(); ++i) {
      json slice = json::array();
      for (int t = 0; t < layer.term_count(i); ++t) slice.push_back(bank.logit(u, i, t));
      per_attr.push_back(std::move(slice));
    }
    logits.push_back(std::move(per_attr));
  }

  json W = json::array();
  json b = json::array();
  for (int u = 0; u < head.rule_count; ++u) {
    json wu = json::array();
    json bu = json::array();
    for (int d = 0; d < head.out_dim; ++d) {
      json row = json::array();
      for (int i = 0; i < head.in_dim; ++i) row.push_back(head.W(u, d, i));
      wu.push_back(std::move(row));
      bu.push_back(head.b(u, d));
    }
    W.push_back(std::move(wu));
    b.push_back(std::move(bu));
  }

  json cardinality = json::array();
  for (int i = 0; i < layer.attribute_count(); ++i) {
    json row = json::array();
    for (int t = 0; t < layer.term_count(i); ++t)
      row.push_back(block.cardinality().values()(i, t));
    cardinality.push_back(std::move(row));
  }

  json out{{"layer", layer_to_json(layer)},
           {"rules", head.rule_count},
           {"out_dim", head.out_dim},
           {"config",
            {{"mode", firing_mode_name(cfg.mode)},
             {"norm", norm_kind_name(cfg.norm)},
             {"layer_norm", cfg.layer_norm},
             {"certainty", certainty_mode_name(cfg.certainty)},
             {"estimator", estimator_name(cfg.estimator)},
             {"tau", cfg.tau},
             {"retain_batches", cfg.retain_batches},
             {"theta", cfg.theta}}},
           {"logits", std::move(logits)},
           {"W", std::move(W)},
           {"b", std::move(b)},
           {"cf", head.cf},
           {"cardinality", std::move(cardinality)}};
  if (cfg.layer_norm) {
    out["ln_gain"] = block.layer_norm().gain;
    out["ln_bias"] = block.layer_norm().bias;
  }
  return out;
}

NfnBlock block_from_json(const json& j, Rng& rng) {
  MembershipLayer layer = layer_from_json(j.at("layer"));
  const int rules = j.at("rules").get<int>();
  const int out_dim = j.at("out_dim").get<int>();
  const json& c = j.at("config");
  InferenceConfig cfg;
  cfg.mode = firing_mode_from(c.at("mode").get<std::string>());
  cfg.norm = norm_kind_from(c.at("norm").get<std::string>());
  cfg.layer_norm = c.at("layer_norm").get<bool>();
  cfg.certainty = certainty_mode_from(c.at("certainty").get<std::string>());
  cfg.estimator = estimator_from(c.at("estimator").get<std::string>());
  cfg.tau = c.at("tau").get<double>();
  cfg.retain_batches = c.at("retain_batches").get<int>();
  cfg.theta = c.at("theta").get<double>();

  NfnBlock block(std::move(layer), rules, out_dim, cfg, rng);
  const MembershipLayer& lay = block.layer();

  const json& logits = j.at("logits");
  if (static_cast<int>(logits.size()) != rules)
    throw InputError("block snapshot logits disagree with the rule count");
  for (int u = 0; u < rules; ++u)
    for (int i = 0; i < lay.attribute_count(); ++i) {
      const json& slice = logits[u].at(i);
      if (static_cast<int>(slice.size()) != lay.term_count(i))
        throw InputError("block snapshot logits disagree with the term counts");
      for (int t = 0; t < lay.term_count(i); ++t)
        block.bank().logit_ref(u, i, t) = slice[t].get<double>();
    }

  TskHead& head = block.head();
  const json& W = j.at("W");
  const json& b = j.at("b");
  const json& cf = j.at("cf");
  if (static_cast<int>(W.size()) != rules || static_cast<int>(b.size()) != rules ||
      static_cast<int>(cf.size()) != rules)
    throw InputError("block snapshot consequents disagree with the rule count");
  for (int u = 0; u < rules; ++u) {
    for (int d = 0; d < out_dim; ++d) {
      const json& row = W[u].at(d);
      if (static_cast<int>(row.size()) != head.in_dim)
        throw InputError("block snapshot W row width disagrees with in_dim");
      for (int i = 0; i < head.in_dim; ++i) head.W(u, d, i) = row[i].get<double>();
      head.b(u, d) = b[u].at(d).get<double>();
    }
    head.cf[u] = cf[u].get<double>();
  }

  if (cfg.layer_norm) {
    block.layer_norm().gain = j.at("ln_gain").get<std::vector<double>>();
    block.layer_norm().bias = j.at("ln_bias").get<std::vector<double>>();
    if (block.layer_norm().size() != rules)
      throw InputError("block snapshot layer-norm vectors disagree with the rule count");
  }

  const json& card = j.at("cardinality");
  block.cardinality().sync_shape(lay);
  for (int i = 0; i < lay.attribute_count(); ++i) {
    const json& row = card.at(i);
    if (static_cast<int>(row.size()) != lay.term_count(i))
      throw InputError("block snapshot cardinality disagrees with the term counts");
    for (int t = 0; t < lay.term_count(i); ++t)
      block.cardinality().values_mut()(i, t) = row[t].get<double>();
  }
  return block;
}

json stack_to_json(const NfnStack& stack) {
  json blocks = json::array();
  for (int k = 0; k < stack.block_count(); ++k) blocks.push_back(block_to_json(stack.block(k)));
  return json{{"format", kStackFormat}, {"blocks", std::move(blocks)}};
}

NfnStack stack_from_json(const json& j, Rng& rng) {
  check_format(j, kStackFormat);
  const json& arr = j.at("blocks");
  if (!arr.is_array() || arr.empty()) throw InputError("stack snapshot holds no blocks");
  std::vector<NfnBlock> blocks;
  blocks.reserve(arr.size());
  for (const json& b : arr) blocks.push_back(block_from_json(b, rng));
  return NfnStack(std::move(blocks));
}

}  // namespace

std::string save_layer(const MembershipLayer& layer) { return layer_to_json(layer).dump(2); }

MembershipLayer load_layer(const std::string& text) { return layer_from_json(parse(text)); }

std::string save_stack(const NfnStack& stack) { return stack_to_json(stack).dump(2); }

NfnStack load_stack(const std::string& text, Rng& rng) {
  return stack_from_json(parse(text), rng);
}

std::string save_checkpoint(const NfnStack& stack, const Adam& adam) {
  json j{{"format", kCheckpointFormat},
         {"stack", stack_to_json(stack)},
         {"adam",
          {{"step", adam.step_count()},
           {"learning_rate", adam.learning_rate()},
           {"m", adam.first_moments()},
           {"v", adam.second_moments()}}}};
  return j.dump(2);
}

Checkpoint load_checkpoint(const std::string& text, Rng& rng, Adam& adam) {
  json j = parse(text);
  check_format(j, kCheckpointFormat);
  Checkpoint out{stack_from_json(j.at("stack"), rng)};
  const json& a = j.at("adam");
  out.step = a.at("step").get<int64_t>();
  out.learning_rate = a.at("learning_rate").get<double>();
  adam.set_learning_rate(out.learning_rate);
  adam.restore(out.step, a.at("m").get<std::map<std::string, std::vector<double>>>(),
               a.at("v").get<std::map<std::string, std::vector<double>>>());
  return out;
}

std::string structure_table(const NfnStack& stack) {
  std::ostringstream out;
  for (int k = 0; k < stack.block_count(); ++k) {
    const NfnBlock& block = stack.block(k);
    const MembershipLayer& layer = block.layer();
    std::vector<int> chosen =
        block.bank().current_selection(layer);
    out << "block " << k << ": " << block.rule_count() << " rules, "
        << layer.attribute_count() << " attributes\n";
    for (int u = 0; u < block.rule_count(); ++u) {
      out << "  rule " << u << ":";
      for (int i = 0; i < layer.attribute_count(); ++i) {
        const int t = chosen[static_cast<size_t>(u) * layer.attribute_count() + i];
        char buf[96];
        std::snprintf(buf, sizeof buf, " x%d~T%d(c=%.4g,s=%.4g)", i, t, layer.center(i, t),
                      layer.width(i, t));
        out << buf;
      }
      out << "\n";
    }
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw InputError("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

}  // namespace nfn
