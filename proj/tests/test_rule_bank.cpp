#include <cmath>
#include <vector>

#include "doctest.h"
#include "nfn/rule_bank.hpp"
#include "oracles.hpp"

using namespace nfn;

namespace {

MembershipLayer four_term_layer() {
  MembershipLayer layer(1, 4);
  layer.add_term(0, {-1.5, 0.8});
  layer.add_term(0, {-0.5, 0.8});
  layer.add_term(0, {0.5, 0.8});
  layer.add_term(0, {1.5, 0.8});
  return layer;
}

}  // namespace

TEST_CASE("STE sampling is the logits argmax and consumes no randomness") {
  MembershipLayer layer = four_term_layer();
  Rng rng(1);
  RuleBank bank(3, layer, rng);
  bank.logit_ref(0, 0, 2) = 5.0;
  bank.logit_ref(1, 0, 0) = 4.0;
  bank.logit_ref(2, 0, 3) = 3.0;

  Rng sample_rng(99);
  Rng witness(99);
  StructureSample s = bank.sample(layer, Estimator::STE, 0.6, 64, sample_rng);
  CHECK(s.chosen_at(0, 0) == 2);
  CHECK(s.chosen_at(1, 0) == 0);
  CHECK(s.chosen_at(2, 0) == 3);
  CHECK(sample_rng() == witness());  // rng untouched by STE

  // soft slice is softmax(logits): renormalized, peaked at the argmax
  double sum = 0.0;
  for (int j = 0; j < 4; ++j) sum += s.soft(0, 0, j);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.soft(0, 0, 2) > 0.9);
}

TEST_CASE("STGE hard samples follow the categorical law softmax(logits)") {
  MembershipLayer layer = four_term_layer();
  Rng rng(2);
  RuleBank bank(1, layer, rng);

  SUBCASE("uniform logits") {
    for (int j = 0; j < 4; ++j) bank.logit_ref(0, 0, j) = 0.0;
    std::vector<long long> counts(4, 0);
    Rng draw(7);
    for (int k = 0; k < 100000; ++k) {
      StructureSample s = bank.sample(layer, Estimator::STGE, 0.6, 1, draw);
      ++counts[s.chosen_at(0, 0)];
    }
    CHECK(oracle::total_variation(counts, {0.25, 0.25, 0.25, 0.25}) < 0.01);
  }

  SUBCASE("skewed logits, tau only shapes the soft weights, not the law") {
    const std::vector<double> logits = {1.2, -0.3, 0.4, -1.0};
    double norm = 0.0;
    std::vector<double> p(4);
    for (int j = 0; j < 4; ++j) norm += std::exp(logits[j]);
    for (int j = 0; j < 4; ++j) p[j] = std::exp(logits[j]) / norm;

    for (double tau : {0.25, 1.0, 3.0}) {
      for (int j = 0; j < 4; ++j) bank.logit_ref(0, 0, j) = logits[j];
      std::vector<long long> counts(4, 0);
      Rng draw(13);
      for (int k = 0; k < 100000; ++k) {
        StructureSample s = bank.sample(layer, Estimator::STGE, tau, 1, draw);
        ++counts[s.chosen_at(0, 0)];
      }
      CHECK(oracle::total_variation(counts, p) < 0.01);
    }
  }
}

TEST_CASE("noise retention freezes selections for the window") {
  MembershipLayer layer = four_term_layer();
  Rng rng(3);
  RuleBank bank(8, layer, rng);
  Rng draw(21);

  StructureSample first = bank.sample(layer, Estimator::STGE, 0.6, 3, draw);
  CHECK(bank.noise_age() == 0);
  StructureSample second = bank.sample(layer, Estimator::STGE, 0.6, 3, draw);
  CHECK(bank.noise_age() == 1);
  StructureSample third = bank.sample(layer, Estimator::STGE, 0.6, 3, draw);
  CHECK(bank.noise_age() == 2);
  CHECK(second.chosen == first.chosen);
  CHECK(third.chosen == first.chosen);

  // call 4 redraws: age resets; with 8x4 slices a repeat of every choice is
  // astronomically unlikely, but the contract only promises the reset
  bank.sample(layer, Estimator::STGE, 0.6, 3, draw);
  CHECK(bank.noise_age() == 0);
}

TEST_CASE("sample validates its configuration") {
  MembershipLayer layer = four_term_layer();
  Rng rng(4);
  RuleBank bank(2, layer, rng);
  Rng draw(1);
  CHECK_THROWS_AS(bank.sample(layer, Estimator::STGE, 0.0, 4, draw), ConfigError);
  CHECK_THROWS_AS(bank.sample(layer, Estimator::STGE, -1.0, 4, draw), ConfigError);
  CHECK_THROWS_AS(bank.sample(layer, Estimator::STGE, 0.5, 0, draw), ConfigError);
}

TEST_CASE("soft slices renormalize over existing terms only") {
  MembershipLayer layer(2, 3);
  layer.add_term(0, {0.0, 1.0});
  layer.add_term(0, {1.0, 1.0});
  layer.add_term(1, {0.0, 1.0});  // attribute 1 has a single term
  Rng rng(5);
  RuleBank bank(4, layer, rng);
  Rng draw(2);
  StructureSample s = bank.sample(layer, Estimator::STGE, 0.6, 1, draw);
  for (int u = 0; u < 4; ++u) {
    CHECK(s.soft(u, 0, 2) == 0.0);  // inactive slot stays exactly zero
    CHECK(s.soft(u, 1, 0) == doctest::Approx(1.0));
    CHECK(s.chosen_at(u, 1) == 0);
    double sum = 0.0;
    for (int j = 0; j < 3; ++j) sum += s.soft(u, 0, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("current_selection is the raw-logits argmax and never mutates") {
  MembershipLayer layer = four_term_layer();
  Rng rng(6);
  RuleBank bank(2, layer, rng);
  bank.logit_ref(0, 0, 1) = 9.0;
  bank.logit_ref(1, 0, 3) = 9.0;

  Rng draw(3);
  bank.sample(layer, Estimator::STGE, 0.6, 100, draw);  // prime a noise cache
  const int age_before = bank.noise_age();

  std::vector<int> chosen = bank.current_selection(layer);
  CHECK(chosen[0] == 1);
  CHECK(chosen[1] == 3);
  CHECK(bank.noise_age() == age_before);

  // evaluation selection is independent of the sampled noise:
  // repeated calls agree regardless of the cache state
  CHECK(bank.current_selection(layer) == chosen);
}

TEST_CASE("structure_gradient") {
  MembershipLayer layer = four_term_layer();
  Rng rng(7);
  RuleBank bank(1, layer, rng);

  SUBCASE("zero upstream gives zero gradient") {
    Rng draw(4);
    StructureSample s = bank.sample(layer, Estimator::STGE, 0.5, 1, draw);
    Tensor3 upstream(1, 1, 4);
    Tensor3 d = bank.structure_gradient(s, upstream);
    for (double v : d.data) CHECK(v == 0.0);
  }

  SUBCASE("two-term slice closed form") {
    MembershipLayer two(1, 2);
    two.add_term(0, {0.0, 1.0});
    two.add_term(0, {1.0, 1.0});
    Rng r2(8);
    RuleBank b2(1, two, r2);
    b2.logit_ref(0, 0, 0) = 0.7;
    b2.logit_ref(0, 0, 1) = -0.2;

    for (Estimator est : {Estimator::STE, Estimator::STGE}) {
      const double tau = 0.8;
      Rng draw(5);
      StructureSample s = b2.sample(two, est, tau, 1000000, draw);
      const double p = s.soft(0, 0, 0);
      Tensor3 upstream(1, 1, 2);
      const double a = 1.3, b = -0.4;
      upstream(0, 0, 0) = a;
      upstream(0, 0, 1) = b;
      Tensor3 d = b2.structure_gradient(s, upstream);
      const double scale = est == Estimator::STGE ? 1.0 / tau : 1.0;
      CHECK(d(0, 0, 0) == doctest::Approx(p * (1 - p) * (a - b) * scale));
      CHECK(d(0, 0, 1) == doctest::Approx(-p * (1 - p) * (a - b) * scale));
    }
  }

  SUBCASE("matches finite differences of an independently recomputed soft path") {
    Rng draw(6);
    StructureSample s = bank.sample(layer, Estimator::STGE, 0.7, 1000000, draw);

    // reconstruct the perturbed z = (logits + g) / tau from the frozen sample:
    // z_j = log(soft_j) + const, so g_j = tau * log(soft_j) - logit_j + const.
    // The constant cancels inside the softmax, so we can set it to zero.
    std::vector<double> gumbel(4);
    for (int j = 0; j < 4; ++j)
      gumbel[j] = 0.7 * std::log(s.soft(0, 0, j)) - bank.logit(0, 0, j);

    std::vector<double> upstream = {0.9, -1.1, 0.3, 0.5};
    std::vector<double> logits(4);
    for (int j = 0; j < 4; ++j) logits[j] = bank.logit(0, 0, j);

    auto loss = [&]() {
      double mx = -1e300;
      std::vector<double> z(4);
      for (int j = 0; j < 4; ++j) {
        z[j] = (logits[j] + gumbel[j]) / 0.7;
        mx = std::max(mx, z[j]);
      }
      double sum = 0.0;
      for (int j = 0; j < 4; ++j) sum += std::exp(z[j] - mx);
      double l = 0.0;
      for (int j = 0; j < 4; ++j) l += std::exp(z[j] - mx) / sum * upstream[j];
      return l;
    };

    Tensor3 up(1, 1, 4);
    for (int j = 0; j < 4; ++j) up(0, 0, j) = upstream[j];
    Tensor3 d = bank.structure_gradient(s, up);
    for (int j = 0; j < 4; ++j) {
      const double fd = oracle::central_difference(loss, &logits[j], 1e-6);
      CHECK(oracle::rel_err(d(0, 0, j), fd) < 1e-4);
    }
  }
}

TEST_CASE("percentile matches the sorted-rank oracle") {
  CHECK(percentile({5.0}, 50.0) == 5.0);
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 0.0) == 1.0);
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 100.0) == 4.0);
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 50.0) == doctest::Approx(2.5));

  Rng rng(9);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> vals(1 + static_cast<int>(rng() % 12));
    for (double& v : vals) v = u(rng);
    const double theta = (rng() % 101);
    CHECK(percentile(vals, theta) ==
          doctest::Approx(oracle::percentile_sorted(vals, theta)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(percentile({}, 10.0), InputError);
  CHECK_THROWS_AS(percentile({1.0}, -1.0), ConfigError);
  CHECK_THROWS_AS(percentile({1.0}, 101.0), ConfigError);
}

TEST_CASE("scalar cardinality decays and accumulates over active slots") {
  MembershipLayer layer(1, 3);
  layer.add_term(0, {0.0, 1.0});
  layer.add_term(0, {2.0, 1.0});

  ScalarCardinality card;
  Matrix X(2, 1);
  X(0, 0) = 0.0;
  X(1, 0) = 2.0;
  Tensor3 mu = layer.membership_matrix(X);
  card.accumulate(mu, layer);

  const double m01 = gaussian_membership(0.0, {2.0, 1.0});
  CHECK(card.value(0, 0) == doctest::Approx(1.0 + m01));
  CHECK(card.value(0, 1) == doctest::Approx(1.0 + m01));
  CHECK(card.value(0, 2) == 0.0);

  card.accumulate(mu, layer);
  CHECK(card.value(0, 0) == doctest::Approx(0.99 * (1.0 + m01) + (1.0 + m01)));
}

TEST_CASE("constrained sampling excludes starved terms") {
  MembershipLayer layer = four_term_layer();
  Rng rng(10);
  RuleBank bank(1, layer, rng);
  ScalarCardinality card;
  card.sync_shape(layer);

  SUBCASE("theta 0 returns the existence mask") {
    std::vector<uint8_t> mask = constrain_structure(layer, card, 0.0);
    REQUIRE(mask.size() == 4);
    for (uint8_t m : mask) CHECK(m == 1);
  }

  SUBCASE("a zero-cardinality term among active peers is excluded") {
    card.values_mut()(0, 0) = 4.0;
    card.values_mut()(0, 1) = 5.0;
    card.values_mut()(0, 2) = 0.0;
    card.values_mut()(0, 3) = 3.0;
    std::vector<uint8_t> mask = constrain_structure(layer, card, 10.0);
    CHECK(mask[0] == 1);
    CHECK(mask[1] == 1);
    CHECK(mask[2] == 0);
    CHECK(mask[3] == 1);

    // sampling respects the mask: term 2 never chosen, soft there exactly 0
    Rng draw(11);
    for (int k = 0; k < 200; ++k) {
      StructureSample s = bank.sample(layer, Estimator::STGE, 0.6, 1, draw, &mask);
      CHECK(s.chosen_at(0, 0) != 2);
      CHECK(s.soft(0, 0, 2) == 0.0);
    }
  }

  SUBCASE("equal cardinalities exclude nothing") {
    for (int j = 0; j < 4; ++j) card.values_mut()(0, j) = 2.5;
    std::vector<uint8_t> mask = constrain_structure(layer, card, 10.0);
    for (uint8_t m : mask) CHECK(m == 1);
  }

  SUBCASE("the best-supported term always survives") {
    card.values_mut()(0, 0) = 1.0;
    card.values_mut()(0, 1) = 0.0;
    card.values_mut()(0, 2) = 0.0;
    card.values_mut()(0, 3) = 0.0;
    std::vector<uint8_t> mask = constrain_structure(layer, card, 100.0);
    CHECK(mask[0] == 1);
    CHECK(mask[1] == 0);
    CHECK(mask[2] == 0);
    CHECK(mask[3] == 0);
  }
}

TEST_CASE("rule bank construction validates its inputs") {
  MembershipLayer layer = four_term_layer();
  Rng rng(20);
  CHECK_THROWS_AS(RuleBank(0, layer, rng), ConfigError);

  MembershipLayer empty(2, 3);
  empty.add_term(0, {0.0, 1.0});  // attribute 1 has no terms
  CHECK_THROWS_AS(RuleBank(4, empty, rng), ConfigError);
}

TEST_CASE("expand_terms absorbs new layer slots") {
  MembershipLayer layer(1, 2);
  layer.add_term(0, {0.0, 1.0});
  layer.add_term(0, {1.0, 1.0});
  Rng rng(12);
  RuleBank bank(3, layer, rng);
  Rng draw(13);
  bank.sample(layer, Estimator::STGE, 0.6, 1000, draw);  // live noise cache

  int grown_from = 0;
  layer.add_term(0, {2.0, 0.5}, &grown_from);
  CHECK(grown_from == 2);
  bank.expand_terms(layer, 0, draw);
  CHECK(bank.max_terms() == layer.max_terms());

  // new slot logit = mean of the slice's previous logits (neutral prior)
  for (int u = 0; u < 3; ++u) {
    const double mean = 0.5 * (bank.logit(u, 0, 0) + bank.logit(u, 0, 1));
    CHECK(bank.logit(u, 0, 2) == doctest::Approx(mean));
  }

  // the new term is selectable with nonzero probability for every rule
  StructureSample s = bank.sample(layer, Estimator::STGE, 0.6, 1000, draw);
  for (int u = 0; u < 3; ++u) {
    CHECK(s.soft(u, 0, 2) > 0.0);
    double sum = 0.0;
    for (int j = 0; j < 3; ++j) sum += s.soft(u, 0, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  // double-absorb with no new term is a usage error
  CHECK_THROWS_AS(bank.expand_terms(layer, 0, draw), UsageError);

  // sampling against a stale layer (term added, not absorbed) is structural
  layer.add_term(0, {3.0, 0.5});
  CHECK_THROWS_AS(bank.sample(layer, Estimator::STE, 1.0, 1, draw), StructuralError);
}
