#include <cmath>
#include <string>

#include "doctest.h"
#include "nfn/config.hpp"
#include "oracles.hpp"

using namespace nfn;

TEST_CASE("the bundled supervised config parses back to its documented values") {
  Job job = parse_job(default_supervised_config());
  CHECK(job.task == "supervised");
  const SupervisedJob& s = job.supervised;
  CHECK(s.dataset == "sin");
  CHECK(s.samples == 256);
  CHECK(s.steps == 2000);
  CHECK(s.batch == 32);
  CHECK(s.seed == 7);
  CHECK(s.nfn.rule_count == 8);
  CHECK(s.nfn.stge);
  CHECK(s.nfn.tau == 0.6);
  CHECK(s.nfn.theta == 0.0);
  CHECK(s.nfn.retain_batches == 64);
  CHECK(s.nfn.epsilon == 0.4);
  CHECK(s.nfn.delay_batches == 3);
  CHECK(s.nfn.mode == FiringMode::Sum);
  CHECK(s.nfn.alpha == 1.0);
  CHECK(s.nfn.certainty == CertaintyMode::Off);
  CHECK_FALSE(s.nfn.layer_norm);
  CHECK(s.nfn.eta == 1e-2);
  CHECK(s.nfn.initial_terms == 3);
  CHECK(s.nfn.range_lo == -3.0);
  CHECK(s.nfn.range_hi == 3.0);
  CHECK(s.nfn.trunk == 0);
}

TEST_CASE("the bundled rl config parses back to its documented values") {
  Job job = parse_job(default_rl_config());
  CHECK(job.task == "rl");
  const RlJob& r = job.rl;
  CHECK(r.env == "track_and_shoot");
  CHECK(r.agent == "nfn");
  CHECK(r.seed == 2);
  CHECK(r.epochs == 40);
  CHECK(r.steps_per_epoch == 500);
  CHECK(r.eval_episodes == 25);
  CHECK(r.frames == 1);
  CHECK(r.gamma == 0.95);
  CHECK(r.memory == 10000);
  CHECK(r.batch == 32);
  CHECK(r.target_sync == 1000);
  CHECK(r.warmup == 500);
  CHECK(r.nfn.rule_count == 16);
  CHECK_FALSE(r.nfn.stge);  // straight-through, no Gumbel noise
  CHECK(r.nfn.eta == 1e-3);
  CHECK(r.nfn.width_floor == 0.05);
  CHECK(r.nfn.initial_terms == 3);
  CHECK(r.nfn.range_lo == -1.0);
  CHECK(r.nfn.range_hi == 1.0);
  CHECK(r.mlp.hidden == 128);
  CHECK(r.mlp.activation == rl::Activation::ReLU);
  CHECK(r.mlp.eta == 5e-4);
  CHECK(r.mlp.trunk == 0);
}

TEST_CASE("the parser is strict about keys, types and menus") {
  CHECK_THROWS_AS(parse_job("{nope"), ConfigError);
  CHECK_THROWS_AS(parse_job("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse_job("{}"), ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"task": "interpretive_dance"})"), ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"task": "supervised", "menu": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"task": "supervised", "samples": "many"})"), ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"task": "supervised", "dataset": "cube"})"), ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"task": "supervised", "samples": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"task": "supervised", "steps": 0})"), ConfigError);
  CHECK_THROWS_AS(parse_job(R"({"task": "supervised", "|X|": 0})"), ConfigError);

  auto nfn_cfg = [](const std::string& body) {
    return std::string(R"({"task": "supervised", "nfn": {)") + body + "}}";
  };
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("municipality": 3)")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("w_u": "max")")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("α": 1.25)")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("CF": 3.5)")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("CF": "bogus")")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("range": [1.0])")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("range": [2.0, -2.0])")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("range": 7)")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("|U|": 0)")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("terms": 0)")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("η": 0.0)")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("width_floor": 0.0)")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("width_floor": 1.0)")), ConfigError);
  CHECK_THROWS_AS(parse_job(nfn_cfg(R"("trunk": -1)")), ConfigError);

  auto rl_cfg = [](const std::string& body) {
    return std::string(R"({"task": "rl", )") + body + "}";
  };
  CHECK_THROWS_AS(parse_job(rl_cfg(R"("agent": "table")")), ConfigError);
  CHECK_THROWS_AS(parse_job(rl_cfg(R"("Mem": 0)")), ConfigError);
  CHECK_THROWS_AS(parse_job(rl_cfg(R"("|X|": 0)")), ConfigError);
  CHECK_THROWS_AS(parse_job(rl_cfg(R"("target_sync": 0)")), ConfigError);
  CHECK_THROWS_AS(parse_job(rl_cfg(R"("mlp": {"|N|": 0})")), ConfigError);
  CHECK_THROWS_AS(parse_job(rl_cfg(R"("mlp": {"η": -1.0})")), ConfigError);
  CHECK_THROWS_AS(parse_job(rl_cfg(R"("mlp": {"optimizer": "sgd"})")), ConfigError);
  CHECK_THROWS_AS(parse_job(rl_cfg(R"("mlp": {"h_n": "quantum"})")), ConfigError);

  SUBCASE("menus that should parse") {
    Job j1 = parse_job(nfn_cfg(R"("w_u": "MEAN", "α": 1.5, "CF": "raw", "LN": true)"));
    CHECK(j1.supervised.nfn.mode == FiringMode::Mean);
    CHECK(j1.supervised.nfn.alpha == 1.5);
    CHECK(j1.supervised.nfn.certainty == CertaintyMode::Raw);
    CHECK(j1.supervised.nfn.layer_norm);
    Job j2 = parse_job(nfn_cfg(R"("CF": true)"));
    CHECK(j2.supervised.nfn.certainty == CertaintyMode::Renormalized);
    Job j3 = parse_job(nfn_cfg(R"("CF": false)"));
    CHECK(j3.supervised.nfn.certainty == CertaintyMode::Off);
  }
}

TEST_CASE("hyperparameters map onto the runtime configs field by field") {
  NfnHyperparams hp;
  hp.stge = false;
  hp.tau = 0.8;
  hp.theta = 25.0;
  hp.retain_batches = 9;
  hp.epsilon = 0.3;
  hp.delay_batches = 5;
  hp.mode = FiringMode::Mean;
  hp.alpha = 1.5;
  hp.certainty = CertaintyMode::Raw;
  hp.layer_norm = true;
  hp.width_floor = 0.07;

  InferenceConfig inf = to_inference_config(hp);
  CHECK(inf.mode == FiringMode::Mean);
  CHECK(inf.norm == NormKind::Entmax15);
  CHECK(inf.layer_norm);
  CHECK(inf.certainty == CertaintyMode::Raw);
  CHECK(inf.estimator == Estimator::STE);
  CHECK(inf.tau == 0.8);
  CHECK(inf.retain_batches == 9);
  CHECK(inf.theta == 25.0);

  hp.stge = true;
  hp.alpha = 1.0;
  inf = to_inference_config(hp);
  CHECK(inf.estimator == Estimator::STGE);
  CHECK(inf.norm == NormKind::Softmax);

  NeurogenesisConfig neuro = to_neurogenesis_config(hp);
  CHECK(neuro.epsilon == 0.3);
  CHECK(neuro.delay_batches == 5);
  CHECK(neuro.width_floor_factor == 0.07);

  SupervisedJob sj;
  sj.steps = 123;
  sj.batch = 11;
  sj.seed = 99;
  sj.nfn = hp;
  sj.nfn.eta = 2e-3;
  SupervisedConfig sup = to_supervised_config(sj);
  CHECK(sup.steps == 123);
  CHECK(sup.batch_size == 11);
  CHECK(sup.learning_rate == 2e-3);
  CHECK(sup.seed == 99);
  CHECK(sup.neuro.epsilon == 0.3);
  CHECK(sup.neuro.width_floor_factor == 0.07);
  CHECK(sup.neurogenesis);
  sj.nfn.epsilon = 0.0;
  CHECK_FALSE(to_supervised_config(sj).neurogenesis);

  RlJob rj;
  rj.epochs = 3;
  rj.steps_per_epoch = 77;
  rj.eval_episodes = 4;
  rj.batch = 16;
  rj.memory = 512;
  rj.frames = 2;
  rj.gamma = 0.9;
  rj.target_sync = 55;
  rj.warmup = 44;
  rj.seed = 21;
  rl::RlConfig rc = to_rl_config(rj);
  CHECK(rc.epochs == 3);
  CHECK(rc.steps_per_epoch == 77);
  CHECK(rc.eval_episodes == 4);
  CHECK(rc.batch_size == 16);
  CHECK(rc.memory == 512);
  CHECK(rc.frames == 2);
  CHECK(rc.gamma == 0.9);
  CHECK(rc.target_sync == 55);
  CHECK(rc.warmup == 44);
  CHECK(rc.seed == 21);
}

TEST_CASE("built-in datasets are deterministic and on-target") {
  SupervisedJob job;
  job.samples = 64;
  job.seed = 5;
  job.nfn.range_lo = -2.0;
  job.nfn.range_hi = 2.0;

  Matrix X, Y, X2, Y2;
  make_dataset(job, &X, &Y);
  make_dataset(job, &X2, &Y2);
  REQUIRE(X.rows == 64);
  REQUIRE(X.cols == 1);
  CHECK(X.data == X2.data);
  CHECK(Y.data == Y2.data);
  for (int r = 0; r < X.rows; ++r) {
    CHECK(X(r, 0) >= -2.0);
    CHECK(X(r, 0) <= 2.0);
    CHECK(Y(r, 0) == std::sin(X(r, 0)));
  }

  job.dataset = "constant";
  make_dataset(job, &X, &Y);
  for (int r = 0; r < X.rows; ++r) CHECK(Y(r, 0) == 0.7);

  job.seed = 6;
  Matrix X3, Y3;
  job.dataset = "sin";
  make_dataset(job, &X3, &Y3);
  CHECK(X3.data != X.data);
}

TEST_CASE("build_stack lays out one block with evenly spread sets") {
  NfnHyperparams hp;
  hp.rule_count = 10;
  hp.initial_terms = 4;
  hp.range_lo = -2.0;
  hp.range_hi = 6.0;
  hp.stge = false;
  hp.alpha = 1.5;
  Rng rng(31);
  NfnStack stack = build_stack(hp, 3, 2, rng);
  REQUIRE(stack.block_count() == 1);
  const NfnBlock& b = stack.block(0);
  CHECK(b.in_dim() == 3);
  CHECK(b.out_dim() == 2);
  CHECK(b.rule_count() == 10);
  CHECK(b.config().estimator == Estimator::STE);
  CHECK(b.config().norm == NormKind::Entmax15);
  const MembershipLayer& layer = b.layer();
  CHECK(layer.attribute_count() == 3);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(layer.term_count(i) == 4);
    CHECK(layer.centers()(i, 0) == -2.0);
    CHECK(layer.centers()(i, 3) == 6.0);
    CHECK(layer.centers()(i, 1) == doctest::Approx(-2.0 + 8.0 / 3.0));
    for (int j = 0; j < 4; ++j) CHECK(layer.widths()(i, j) == doctest::Approx(8.0 / 3.0));
    CHECK(layer.attribute_scale(i) == 8.0);
  }
}

TEST_CASE("build_duel_model wires the requested agent family") {
  RlJob job;
  Rng rng(17);

  SUBCASE("fuzzy heads without a trunk") {
    job.agent = "nfn";
    rl::DuelModel m = build_duel_model(job, 4, 3, rng);
    CHECK(m.state_dim() == 4);
    CHECK(m.action_count() == 3);
    CHECK(m.trunk_net() == nullptr);
    REQUIRE(m.value_net().nfn_stack() != nullptr);
    REQUIRE(m.advantage_net().nfn_stack() != nullptr);
    CHECK(m.value_net().nfn_stack()->out_dim() == 1);
    CHECK(m.advantage_net().nfn_stack()->out_dim() == 3);
    CHECK(m.value_net().nfn_stack()->block(0).rule_count() == job.nfn.rule_count);
  }

  SUBCASE("fuzzy heads behind a fuzzy trunk") {
    job.agent = "nfn";
    job.nfn.trunk = 6;
    rl::DuelModel m = build_duel_model(job, 4, 3, rng);
    REQUIRE(m.trunk_net() != nullptr);
    CHECK(m.trunk_net()->in_dim() == 4);
    CHECK(m.trunk_net()->out_dim() == 6);
    CHECK(m.value_net().in_dim() == 6);
    CHECK(m.advantage_net().in_dim() == 6);
    CHECK(m.state_dim() == 4);
  }

  SUBCASE("mlp heads") {
    job.agent = "mlp";
    rl::DuelModel m = build_duel_model(job, 5, 3, rng);
    CHECK(m.state_dim() == 5);
    CHECK(m.action_count() == 3);
    CHECK(m.trunk_net() == nullptr);
    CHECK(m.value_net().nfn_stack() == nullptr);
    CHECK(m.value_net().out_dim() == 1);
    CHECK(m.advantage_net().out_dim() == 3);
  }

  SUBCASE("mlp heads behind a trunk") {
    job.agent = "mlp";
    job.mlp.trunk = 7;
    rl::DuelModel m = build_duel_model(job, 5, 3, rng);
    REQUIRE(m.trunk_net() != nullptr);
    CHECK(m.trunk_net()->out_dim() == 7);
    CHECK(m.value_net().in_dim() == 7);
  }

  SUBCASE("different seeds give different networks") {
    Rng a(1), b(2);
    rl::DuelModel ma = build_duel_model(job, 4, 3, a);
    rl::DuelModel mb = build_duel_model(job, 4, 3, b);
    CHECK(ma.fingerprint() != mb.fingerprint());
  }
}
