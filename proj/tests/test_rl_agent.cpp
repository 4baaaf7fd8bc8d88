#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "nfn/rl/agent.hpp"
#include "oracles.hpp"

using namespace nfn;
using namespace nfn::rl;

namespace {

Matrix random_batch(int rows, int cols, unsigned seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix X(rows, cols);
  for (double& v : X.data) v = u(rng);
  return X;
}

DuelModel mlp_duel(int state_dim, int actions, int hidden, unsigned seed, double lr,
                   bool with_trunk = false) {
  Rng rng(seed);
  if (with_trunk) {
    Mlp trunk(state_dim, hidden, hidden, Activation::Tanh, rng);
    Mlp value(hidden, hidden, 1, Activation::Tanh, rng);
    Mlp advantage(hidden, hidden, actions, Activation::Tanh, rng);
    return DuelModel(make_mlp_net(std::move(value), lr), make_mlp_net(std::move(advantage), lr),
                     make_mlp_net(std::move(trunk), lr));
  }
  Mlp value(state_dim, hidden, 1, Activation::Tanh, rng);
  Mlp advantage(state_dim, hidden, actions, Activation::Tanh, rng);
  return DuelModel(make_mlp_net(std::move(value), lr), make_mlp_net(std::move(advantage), lr));
}

NfnStack small_stack(int in_dim, int out_dim, int rules, unsigned seed) {
  Rng rng(seed);
  std::vector<NfnBlock> blocks;
  blocks.emplace_back(MembershipLayer::spread(in_dim, 3, -1.0, 1.0), rules, out_dim,
                      InferenceConfig{}, rng);
  return NfnStack(std::move(blocks));
}

DuelModel nfn_duel(int state_dim, int actions, unsigned seed, double lr) {
  NeurogenesisConfig neuro;
  neuro.width_floor_factor = 0.05;
  return DuelModel(make_nfn_net(small_stack(state_dim, 1, 8, seed), lr, neuro),
                   make_nfn_net(small_stack(state_dim, actions, 8, seed + 1), lr, neuro));
}

}  // namespace

TEST_CASE("activation names round-trip and gradients match finite differences") {
  for (const std::string& name : activation_names()) {
    const Activation a = activation_from_string(name);
    CHECK(to_string(a) == name);
    for (double x : {-1.37, -0.52, 0.41, 1.93}) {  // clear of every kink
      double slot = x;
      auto f = [&]() { return activate(a, slot); };
      const double fd = oracle::central_difference(f, &slot, 1e-6);
      CHECK(oracle::rel_err(activate_grad(a, x), fd) < 1e-4);
    }
  }
  CHECK_THROWS_AS(activation_from_string("quantum"), ConfigError);

  // a few closed-form anchors
  CHECK(activate(Activation::ReLU, -2.0) == 0.0);
  CHECK(activate(Activation::ReLU, 3.0) == 3.0);
  CHECK(activate(Activation::Sigmoid, 0.0) == doctest::Approx(0.5));
  CHECK(activate(Activation::Tanh, 0.7) == doctest::Approx(std::tanh(0.7)));
  CHECK(activate(Activation::Softplus, 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(activate(Activation::Identity, -0.9) == -0.9);
}

TEST_CASE("mlp backward matches finite differences for every parameter") {
  Rng rng(3);
  Mlp mlp(3, 6, 2, Activation::Tanh, rng);
  Matrix X = random_batch(4, 3, 7);

  Matrix y = mlp.forward_train(X);
  Matrix d_y(y.rows, y.cols);
  for (size_t k = 0; k < y.data.size(); ++k) d_y.data[k] = 2.0 * y.data[k];
  Matrix d_x = mlp.backward(d_y);

  auto loss = [&]() {
    Matrix p = mlp.forward(X);
    double s = 0.0;
    for (double v : p.data) s += v * v;
    return s;
  };

  int checked = 0;
  for (ParamBinding& p : mlp.bindings("m.")) {
    for (size_t idx = 0; idx < p.size(); ++idx) {
      const double fd = oracle::central_difference(loss, &p.value[idx], 1e-6);
      CHECK(oracle::rel_err(p.grad[idx], fd) < 1e-4);
      ++checked;
    }
  }
  CHECK(checked == (3 * 6 + 6) + (6 * 6 + 6) + (6 * 2 + 2));

  Matrix X_var = X;
  auto loss_x = [&]() {
    Matrix p = mlp.forward(X_var);
    double s = 0.0;
    for (double v : p.data) s += v * v;
    return s;
  };
  for (int b = 0; b < X.rows; ++b)
    for (int c = 0; c < X.cols; ++c) {
      const double fd = oracle::central_difference(loss_x, &X_var(b, c), 1e-6);
      CHECK(oracle::rel_err(d_x(b, c), fd) < 1e-4);
    }

  SUBCASE("guards") {
    Rng r2(5);
    CHECK_THROWS_AS(Mlp(0, 4, 2, Activation::Tanh, r2), ConfigError);
    Mlp fresh(2, 4, 2, Activation::Tanh, r2);
    Matrix up(1, 2);
    CHECK_THROWS_AS(fresh.backward(up), UsageError);
    CHECK_THROWS_AS(fresh.bindings("x."), UsageError);
  }

  SUBCASE("copying parameters copies behavior") {
    Rng r3(9);
    Mlp twin(3, 6, 2, Activation::Tanh, r3);
    twin.copy_parameters_from(mlp);
    CHECK(twin.forward(X).data == mlp.forward(X).data);
    Mlp odd(3, 5, 2, Activation::Tanh, r3);
    CHECK_THROWS_AS(odd.copy_parameters_from(mlp), StructuralError);
  }
}

TEST_CASE("dueling aggregation subtracts the mean advantage") {
  Matrix S = random_batch(6, 3, 11);

  SUBCASE("heads on the raw state") {
    DuelModel model = mlp_duel(3, 4, 8, 13, 1e-3);
    Matrix q = model.q_values(S);
    Matrix v = model.value_net().infer(S);
    Matrix a = model.advantage_net().infer(S);
    for (int b = 0; b < 6; ++b) {
      double mean = 0.0;
      for (int k = 0; k < 4; ++k) mean += a(b, k);
      mean /= 4.0;
      for (int k = 0; k < 4; ++k)
        CHECK(q(b, k) == doctest::Approx(v(b, 0) + a(b, k) - mean).epsilon(1e-12));
    }
    // the dueling identity: Q averages to V exactly
    for (int b = 0; b < 6; ++b) {
      double qbar = 0.0;
      for (int k = 0; k < 4; ++k) qbar += q(b, k);
      CHECK(qbar / 4.0 == doctest::Approx(v(b, 0)).epsilon(1e-12));
    }
  }

  SUBCASE("heads on a shared trunk") {
    DuelModel model = mlp_duel(3, 4, 8, 17, 1e-3, true);
    CHECK(model.state_dim() == 3);
    Matrix q = model.q_values(S);
    REQUIRE(model.trunk_net() != nullptr);
    Matrix h = model.trunk_net()->infer(S);
    Matrix v = model.value_net().infer(h);
    Matrix a = model.advantage_net().infer(h);
    for (int b = 0; b < 6; ++b) {
      double mean = 0.0;
      for (int k = 0; k < 4; ++k) mean += a(b, k);
      mean /= 4.0;
      for (int k = 0; k < 4; ++k)
        CHECK(q(b, k) == doctest::Approx(v(b, 0) + a(b, k) - mean).epsilon(1e-12));
    }
  }

  SUBCASE("construction rejects inconsistent heads") {
    Rng rng(19);
    auto value2 = make_mlp_net(Mlp(3, 4, 2, Activation::Tanh, rng), 1e-3);
    auto adv = make_mlp_net(Mlp(3, 4, 4, Activation::Tanh, rng), 1e-3);
    CHECK_THROWS_AS(DuelModel(std::move(value2), std::move(adv)), StructuralError);

    auto value = make_mlp_net(Mlp(3, 4, 1, Activation::Tanh, rng), 1e-3);
    auto adv1 = make_mlp_net(Mlp(3, 4, 1, Activation::Tanh, rng), 1e-3);
    CHECK_THROWS_AS(DuelModel(std::move(value), std::move(adv1)), StructuralError);

    auto v3 = make_mlp_net(Mlp(5, 4, 1, Activation::Tanh, rng), 1e-3);
    auto a3 = make_mlp_net(Mlp(3, 4, 4, Activation::Tanh, rng), 1e-3);
    CHECK_THROWS_AS(DuelModel(std::move(v3), std::move(a3)), StructuralError);

    CHECK_THROWS_AS(DuelModel(nullptr, make_mlp_net(Mlp(3, 4, 4, Activation::Tanh, rng), 1e-3)),
                    ConfigError);
  }
}

TEST_CASE("double-DQL targets bootstrap through the online argmax") {
  Matrix q_online(2, 3);
  q_online(0, 0) = 0.1;
  q_online(0, 1) = 0.9;  // online picks action 1
  q_online(0, 2) = 0.5;
  q_online(1, 0) = 2.0;  // online picks action 0
  q_online(1, 1) = -1.0;
  q_online(1, 2) = 0.0;
  Matrix q_target(2, 3);
  q_target(0, 0) = 5.0;
  q_target(0, 1) = -3.0;  // ...but the target net scores it -3
  q_target(0, 2) = 7.0;
  q_target(1, 0) = 0.25;
  q_target(1, 1) = 9.0;
  q_target(1, 2) = 9.0;

  std::vector<double> rewards = {1.0, -0.5};
  std::vector<uint8_t> terminals = {0, 0};
  std::vector<double> y = ddql_targets(q_online, q_target, rewards, terminals, 0.9);
  CHECK(y[0] == doctest::Approx(1.0 + 0.9 * -3.0));
  CHECK(y[1] == doctest::Approx(-0.5 + 0.9 * 0.25));

  terminals = {1, 0};
  y = ddql_targets(q_online, q_target, rewards, terminals, 0.9);
  CHECK(y[0] == 1.0);  // terminal transitions do not bootstrap

  CHECK_THROWS_AS(ddql_targets(q_online, q_target, rewards, terminals, 1.0), ConfigError);
  CHECK_THROWS_AS(ddql_targets(q_online, q_target, {1.0}, terminals, 0.9), StructuralError);
  Matrix skew(2, 2);
  CHECK_THROWS_AS(ddql_targets(q_online, skew, rewards, terminals, 0.9), StructuralError);
}

TEST_CASE("epsilon-greedy policy") {
  DuelModel model = mlp_duel(2, 3, 6, 23, 1e-3);
  const std::vector<double> obs = {0.3, -0.4};

  SUBCASE("greedy consumes no randomness and returns the argmax") {
    Rng a(5), b(5);
    const int action = act_epsilon_greedy(model, obs, 0.0, a);
    CHECK(a() == b());  // untouched stream
    Matrix s(1, 2);
    s(0, 0) = obs[0];
    s(0, 1) = obs[1];
    Matrix q = model.q_values(s);
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (q(0, k) > q(0, best)) best = k;
    CHECK(action == best);
  }

  SUBCASE("fully random is uniform over actions") {
    Rng rng(29);
    std::vector<long long> counts(3, 0);
    for (int k = 0; k < 30000; ++k) ++counts[act_epsilon_greedy(model, obs, 1.0, rng)];
    CHECK(oracle::total_variation(counts, {1.0 / 3, 1.0 / 3, 1.0 / 3}) < 0.02);
  }

  SUBCASE("rate domain") {
    Rng rng(1);
    CHECK_THROWS_AS(act_epsilon_greedy(model, obs, -0.1, rng), ConfigError);
    CHECK_THROWS_AS(act_epsilon_greedy(model, obs, 1.5, rng), ConfigError);
  }
}

TEST_CASE("evaluation leaves the model untouched; sync copies behavior") {
  DuelModel online = nfn_duel(3, 3, 31, 1e-3);
  DuelModel target(online);
  Matrix S = random_batch(5, 3, 37);

  const uint64_t before = online.fingerprint();
  online.q_values(S);
  Rng rng(2);
  act_epsilon_greedy(online, {0.1, 0.2, -0.3}, 0.0, rng);
  auto env = make_environment("gather");
  run_episode_greedy(online, *env, 11);
  CHECK(online.fingerprint() == before);  // purity across every eval entry point

  // training changes it
  Rng train_rng(3);
  std::vector<int> actions = {0, 1, 2, 0, 1};
  std::vector<double> targets = {0.2, -0.1, 0.4, 0.0, 0.3};
  online.train_step(S, actions, targets, train_rng);
  CHECK(online.fingerprint() != before);

  // hard sync restores behavioral equality with the online net
  Matrix q_before_sync = target.q_values(S);
  target.sync_from(online);
  Matrix q_after_sync = target.q_values(S);
  CHECK(q_after_sync.data == online.q_values(S).data);
  CHECK(q_before_sync.data != q_after_sync.data);
}

TEST_CASE("train_step regresses the taken action's Q toward its target") {
  DuelModel model = mlp_duel(2, 3, 16, 41, 5e-3);
  Matrix S = random_batch(12, 2, 43);
  std::vector<int> actions(12);
  std::vector<double> targets(12);
  Rng rng(47);
  for (int b = 0; b < 12; ++b) {
    actions[b] = static_cast<int>(rng() % 3);
    targets[b] = (b % 2 == 0) ? 0.5 : -0.25;
  }
  Rng train_rng(53);
  const double first = model.train_step(S, actions, targets, train_rng);
  double last = first;
  for (int k = 0; k < 250; ++k) last = model.train_step(S, actions, targets, train_rng);
  CHECK(last < 0.05 * first);

  SUBCASE("batch array mismatches are rejected") {
    std::vector<int> short_actions = {0, 1};
    CHECK_THROWS_AS(model.train_step(S, short_actions, targets, train_rng), StructuralError);
    std::vector<int> bad_actions(12, 7);
    CHECK_THROWS_AS(model.train_step(S, bad_actions, targets, train_rng), InputError);
  }
}

TEST_CASE("fuzzy duel agent also fits fixed targets") {
  DuelModel model = nfn_duel(2, 3, 59, 5e-3);
  Matrix S = random_batch(16, 2, 61);
  std::vector<int> actions(16);
  std::vector<double> targets(16);
  Rng rng(67);
  for (int b = 0; b < 16; ++b) {
    actions[b] = static_cast<int>(rng() % 3);
    targets[b] = 0.3 * S(b, 0) - 0.2;
  }
  Rng train_rng(71);
  const double first = model.train_step(S, actions, targets, train_rng);
  double last = first;
  for (int k = 0; k < 300; ++k) last = model.train_step(S, actions, targets, train_rng);
  CHECK(last < 0.1 * first);
}

TEST_CASE("double-DQL learning recovers the optimal Q of a tiny MDP") {
  // Two states on a line; advancing from the right state pays out and ends
  // the episode. gamma = 0.9 gives Q* = [[0.81, 0.9], [0.9, 1.0]].
  oracle::TinyMdp mdp;
  mdp.states = 2;
  mdp.actions = 2;
  mdp.next = {{0, 1}, {1, -1}};
  mdp.reward = {{0.0, 0.0}, {0.0, 1.0}};
  std::vector<std::vector<double>> q_star = oracle::value_iteration(mdp, 0.9);
  CHECK(q_star[0][0] == doctest::Approx(0.81).epsilon(1e-9));
  CHECK(q_star[0][1] == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(q_star[1][0] == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(q_star[1][1] == doctest::Approx(1.0).epsilon(1e-9));

  const double obs_of_state[2] = {-1.0, 1.0};
  ReplayBuffer buffer(8);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      Transition t;
      t.state = {obs_of_state[s]};
      t.action = a;
      t.reward = mdp.reward[s][a];
      t.terminal = mdp.next[s][a] < 0;
      t.next_state = {t.terminal ? 0.0 : obs_of_state[mdp.next[s][a]]};
      buffer.push(std::move(t));
    }

  DuelModel online = mlp_duel(1, 2, 24, 73, 5e-3);
  DuelModel target(online);
  Rng rng(79);
  for (int update = 1; update <= 4000; ++update) {
    std::vector<const Transition*> batch = buffer.sample(16, rng);
    ddql_update(online, target, batch, 0.9, rng);
    if (update % 100 == 0) target.sync_from(online);
  }

  Matrix probe(2, 1);
  probe(0, 0) = obs_of_state[0];
  probe(1, 0) = obs_of_state[1];
  Matrix q = online.q_values(probe);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) CHECK(std::abs(q(s, a) - q_star[s][a]) < 0.05);

  SUBCASE("empty batches are rejected") {
    Rng r(1);
    std::vector<const Transition*> none;
    CHECK_THROWS_AS(ddql_update(online, target, none, 0.9, r), InputError);
  }
}

TEST_CASE("the training harness runs, logs and anneals exploration") {
  DuelModel online = mlp_duel(3, 3, 24, 83, 1e-3);
  DuelModel target(online);
  auto env = make_environment("gather");

  RlConfig config;
  config.epochs = 2;
  config.steps_per_epoch = 300;
  config.eval_episodes = 4;
  config.warmup = 100;
  config.target_sync = 50;
  config.seed = 9;
  config.metrics_path = "rl_metrics_test.jsonl";

  RlResult result = train_rl(online, target, *env, config);
  REQUIRE(result.epochs.size() == 2);
  CHECK(result.env_steps == 600);
  CHECK(result.updates == 600 - 100 + 1);
  CHECK(result.best_mean >= result.final_mean);
  CHECK(result.epochs[1].exploration < result.epochs[0].exploration);
  CHECK(result.epochs[0].exploration <= 1.0);
  CHECK(result.epochs[1].exploration >= 0.1);
  CHECK(result.epochs[1].env_steps == 600);

  std::ifstream in("rl_metrics_test.jsonl");
  REQUIRE(in.good());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json row = nlohmann::json::parse(line);
    CHECK(row.at("epoch").get<int>() == rows);
    CHECK(row.at("mean").get<double>() == doctest::Approx(result.epochs[rows].mean));
    CHECK(row.contains("sd"));
    CHECK(row.contains("slope"));
    CHECK(row.contains("exploration"));
    CHECK(row.contains("env_steps"));
    ++rows;
  }
  CHECK(rows == 2);
  in.close();
  std::remove("rl_metrics_test.jsonl");

  SUBCASE("config validation") {
    RlConfig bad = config;
    bad.metrics_path.clear();
    bad.epochs = 0;
    CHECK_THROWS_AS(train_rl(online, target, *env, bad), ConfigError);
    bad.epochs = 1;
    bad.frames = 0;
    CHECK_THROWS_AS(train_rl(online, target, *env, bad), ConfigError);
  }
}
