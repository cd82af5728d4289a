#include <catch2/catch_amalgamated.hpp>

#include "advpol/introspect.hpp"

using namespace advpol;

namespace {

PolicyNet make_target(Rng& rng, int obs_dim = 12, int actions = 5, int hidden = 64) {
  PolicyConfig cfg;
  cfg.obs_dim = obs_dim;
  cfg.action_dim = actions;
  cfg.head = ActionHeadKind::Categorical;
  cfg.hidden = hidden;
  return make_policy(cfg, rng);
}

Vec random_obs(Rng& rng, int n) {
  Vec obs(n);
  for (double& v : obs) v = rng.uniform(-1.0, 1.0);
  return obs;
}

}  // namespace

TEST_CASE("black-box mode yields an empty vector and identity composition") {
  Rng rng(1);
  PolicyNet target = make_target(rng);
  Rng trng(2);
  const Vec obs = random_obs(rng, 12);
  Extraction e = extract_m(target, obs, IntrospectionMode::BlackBox, trng);
  CHECK(e.m.payload.empty());
  CHECK(e.m.layout.total() == 0);
  const Vec base{1.0, 2.0, 3.0};
  CHECK(compose_obs(base, e.m.payload) == base);
}

TEST_CASE("action-value mode on a zero-headed target") {
  Rng rng(3);
  PolicyNet target = make_target(rng);
  for (auto& l : target.action_head.layers) {
    for (double& w : l.weights.data) w = 0.0;
    for (double& b : l.biases) b = 0.0;
  }
  for (auto& l : target.value_head.layers) {
    for (double& w : l.weights.data) w = 0.0;
    for (double& b : l.biases) b = 0.0;
  }
  Rng trng(4);
  Extraction e = extract_m(target, random_obs(rng, 12), IntrospectionMode::ActionValue, trng);
  REQUIRE(e.m.payload.size() == 6);  // 1 + |A|
  CHECK(e.m.payload[0] == 0.0);
  for (int i = 1; i <= 5; ++i) CHECK(e.m.payload[i] == Catch::Approx(0.2));
}

TEST_CASE("full mode layout: value, action, latent segments in order") {
  Rng rng(5);
  PolicyNet target = make_target(rng);
  Rng trng(6);
  Extraction e = extract_m(target, random_obs(rng, 12), IntrospectionMode::Full, trng);
  CHECK(e.m.layout.value_len == 1);
  CHECK(e.m.layout.action_len == 5);
  CHECK(e.m.layout.latent_len == 64);
  CHECK(e.m.layout.total() == 70);
  REQUIRE(e.m.payload.size() == 70);
  // segment boundaries at 1, 6, 70
  CHECK(e.m.payload[0] == e.record.value);
  for (int i = 0; i < 5; ++i) CHECK(e.m.payload[1 + i] == e.record.probs[i]);
  for (int i = 0; i < 64; ++i) CHECK(e.m.payload[6 + i] == e.record.latents[i]);
}

TEST_CASE("layout totality across all modes") {
  Rng rng(7);
  PolicyNet target = make_target(rng);
  for (auto mode : {IntrospectionMode::BlackBox, IntrospectionMode::ActionValue,
                    IntrospectionMode::Latent, IntrospectionMode::Full}) {
    Rng trng(8);
    Extraction e = extract_m(target, random_obs(rng, 12), mode, trng);
    CHECK(static_cast<int>(e.m.payload.size()) == e.m.layout.total());
  }
}

TEST_CASE("mode monotonicity: smaller payloads are coordinate subsets of Full") {
  Rng rng(9);
  PolicyNet target = make_target(rng);
  const Vec obs = random_obs(rng, 12);
  Rng t1(10), t2(10), t3(10);
  Extraction full = extract_m(target, obs, IntrospectionMode::Full, t1);
  Extraction av = extract_m(target, obs, IntrospectionMode::ActionValue, t2);
  Extraction lat = extract_m(target, obs, IntrospectionMode::Latent, t3);
  for (size_t i = 0; i < av.m.payload.size(); ++i) {
    CHECK(av.m.payload[i] == full.m.payload[i]);
  }
  for (size_t i = 0; i < lat.m.payload.size(); ++i) {
    CHECK(lat.m.payload[i] == full.m.payload[6 + i]);
  }
}

TEST_CASE("extraction is read-only and shares the action forward pass") {
  Rng rng(11);
  PolicyNet target = make_target(rng);
  const Vec obs = random_obs(rng, 12);
  const std::uint64_t fp_before = param_fingerprint(target);

  Rng plain(77);
  ForwardRecord direct = policy_forward(target, obs, plain);
  Rng extracted(77);
  Extraction e = extract_m(target, obs, IntrospectionMode::Full, extracted);

  CHECK(param_fingerprint(target) == fp_before);
  // same rng consumption and same sampled action: one forward pass per step
  CHECK(plain.state() == extracted.state());
  CHECK(direct.action_index == e.record.action_index);
  CHECK(direct.probs == e.record.probs);
}

TEST_CASE("compose_obs arithmetic") {
  Rng rng(13);
  PolicyNet target = make_target(rng);
  Rng trng(14);
  const Vec base = random_obs(rng, 12);
  Extraction e = extract_m(target, base, IntrospectionMode::Full, trng);
  CHECK(compose_obs(base, e.m.payload).size() == 82);
  // disabled normalization is a raw concatenation
  Vec composed = compose_obs(base, e.m.payload);
  for (size_t i = 0; i < base.size(); ++i) CHECK(composed[i] == base[i]);
  for (size_t i = 0; i < e.m.payload.size(); ++i) {
    CHECK(composed[12 + i] == e.m.payload[i]);
  }
}

TEST_CASE("running moments normalization") {
  SECTION("fresh stats are the identity map") {
    RunningMoments stats;
    const Vec m{3.0, -1.0};
    CHECK(normalize_m(m, stats) == m);
  }

  SECTION("constant history maps that coordinate to zero") {
    RunningMoments stats;
    for (int i = 0; i < 10; ++i) stats.update({4.0});
    CHECK(normalize_m({4.0}, stats) == Vec{0.0});
  }

  SECTION("mean 1, std 2, input 5 gives 2.0") {
    RunningMoments stats;
    stats.update({-1.0});
    stats.update({3.0});  // mean 1, population std 2
    CHECK(normalize_m({5.0}, stats) == Vec{2.0});
  }

  SECTION("outliers clip to [-10, 10]") {
    RunningMoments stats;
    stats.update({0.0});
    stats.update({2.0});
    CHECK(normalize_m({1e9}, stats)[0] == 10.0);
    CHECK(normalize_m({-1e9}, stats)[0] == -10.0);
  }
}

TEST_CASE("gaussian targets expose the mean as the action segment") {
  Rng rng(15);
  PolicyConfig cfg;
  cfg.obs_dim = 2;
  cfg.action_dim = 1;
  cfg.head = ActionHeadKind::Gaussian;
  cfg.hidden = 32;
  PolicyNet target = make_policy(cfg, rng);
  Rng trng(16);
  SegmentMask action_latent{false, true, true};
  Extraction e = extract_m(target, {0.1, 0.5}, action_latent, trng);
  CHECK(e.m.layout.value_len == 0);
  CHECK(e.m.layout.action_len == 1);
  CHECK(e.m.layout.latent_len == 32);
  CHECK(e.m.payload[0] == e.record.mean[0]);
}
