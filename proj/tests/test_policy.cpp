#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "advpol/policy.hpp"

using namespace advpol;

namespace {

PolicyNet small_categorical(Rng& rng, int obs_dim = 4, int actions = 5, int hidden = 8) {
  PolicyConfig cfg;
  cfg.obs_dim = obs_dim;
  cfg.action_dim = actions;
  cfg.head = ActionHeadKind::Categorical;
  cfg.hidden = hidden;
  return make_policy(cfg, rng);
}

void zero_heads(PolicyNet& net) {
  for (auto& l : net.action_head.layers) {
    for (double& w : l.weights.data) w = 0.0;
    for (double& b : l.biases) b = 0.0;
  }
  for (auto& l : net.value_head.layers) {
    for (double& w : l.weights.data) w = 0.0;
    for (double& b : l.biases) b = 0.0;
  }
}

}  // namespace

TEST_CASE("zero-initialized heads give a uniform distribution and zero value") {
  Rng rng(3);
  PolicyNet net = small_categorical(rng);
  zero_heads(net);
  Rng sample(17);
  ForwardRecord rec = policy_forward(net, {0.1, -0.5, 0.7, 0.0}, sample);
  REQUIRE(rec.probs.size() == 5);
  for (double p : rec.probs) CHECK(p == Catch::Approx(0.2));
  CHECK(rec.value == 0.0);
}

TEST_CASE("policy_forward is deterministic given net, obs and rng seed") {
  Rng rng(9);
  PolicyNet net = small_categorical(rng);
  const Vec obs{0.3, 0.1, -0.2, 0.9};
  Rng s1(123), s2(123);
  ForwardRecord r1 = policy_forward(net, obs, s1);
  ForwardRecord r2 = policy_forward(net, obs, s2);
  CHECK(r1.action_index == r2.action_index);
  CHECK(r1.probs == r2.probs);
  CHECK(r1.value == r2.value);
  CHECK(r1.latents == r2.latents);
  CHECK(r1.logp == r2.logp);
  CHECK(r1.entropy == r2.entropy);
}

TEST_CASE("record entropy equals direct recomputation from the returned dist") {
  Rng rng(21);
  PolicyNet net = small_categorical(rng);
  Rng sample(5);
  ForwardRecord rec = policy_forward(net, {1.0, 0.0, -1.0, 0.5}, sample);
  double h = 0.0;
  for (double p : rec.probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  CHECK(rec.entropy == h);
  CHECK(rec.logp == std::log(rec.probs[rec.action_index]));
}

TEST_CASE("gaussian record agrees with gaussian_logprob_entropy exactly") {
  Rng rng(33);
  PolicyConfig cfg;
  cfg.obs_dim = 3;
  cfg.action_dim = 2;
  cfg.head = ActionHeadKind::Gaussian;
  cfg.hidden = 8;
  PolicyNet net = make_policy(cfg, rng);
  Rng sample(7);
  ForwardRecord rec = policy_forward(net, {0.2, -0.4, 0.6}, sample);
  auto ge = gaussian_logprob_entropy(rec.mean, rec.log_std, rec.action);
  CHECK(rec.logp == ge.logp);
  CHECK(rec.entropy == ge.entropy);
}

TEST_CASE("deterministic_action rules") {
  Rng rng(4);
  PolicyNet net = small_categorical(rng, 4, 3);

  SECTION("uniform distribution ties break to action 0") {
    zero_heads(net);
    ForwardRecord rec = deterministic_forward(net, {0.0, 0.0, 0.0, 0.0});
    CHECK(rec.action_index == 0);
  }

  SECTION("mode of the distribution wins") {
    zero_heads(net);
    // logits log(0.1), log(0.7), log(0.2) via biases
    net.action_head.layers[0].biases = {std::log(0.1), std::log(0.7), std::log(0.2)};
    ForwardRecord rec = deterministic_forward(net, {0.0, 0.0, 0.0, 0.0});
    CHECK(rec.action_index == 1);
    CHECK(rec.probs[1] == Catch::Approx(0.7));
  }

  SECTION("gaussian deterministic action is the mean") {
    PolicyConfig cfg;
    cfg.obs_dim = 2;
    cfg.action_dim = 2;
    cfg.head = ActionHeadKind::Gaussian;
    PolicyNet gnet = make_policy(cfg, rng);
    zero_heads(gnet);
    gnet.action_head.layers[0].biases = {0.3, -0.2};
    ForwardRecord rec = deterministic_forward(gnet, {0.1, 0.4});
    CHECK(rec.action == Vec{0.3, -0.2});
  }
}

TEST_CASE("argmax is invariant to positive scaling of the logits") {
  Rng rng(8);
  PolicyNet net = small_categorical(rng);
  const Vec obs{0.5, -0.1, 0.3, 0.8};
  const int base_action = deterministic_forward(net, obs).action_index;
  for (double c : {0.2, 3.0, 17.0}) {
    PolicyNet scaled = net;
    for (auto& l : scaled.action_head.layers) {
      for (double& w : l.weights.data) w *= c;
      for (double& b : l.biases) b *= c;
    }
    CHECK(deterministic_forward(scaled, obs).action_index == base_action);
  }
}

TEST_CASE("latents are invariant to head parameters") {
  Rng rng(12);
  PolicyNet net = small_categorical(rng);
  const Vec obs{0.2, 0.2, -0.6, 0.1};
  Rng s1(1);
  const Vec latents_before = policy_forward(net, obs, s1).latents;
  for (auto& l : net.action_head.layers) {
    for (double& w : l.weights.data) w += 3.0;
  }
  for (auto& l : net.value_head.layers) {
    for (double& w : l.weights.data) w -= 2.0;
  }
  Rng s2(1);
  const Vec latents_after = policy_forward(net, obs, s2).latents;
  CHECK(latents_before == latents_after);
  CHECK(latents_before.size() == static_cast<size_t>(net.hidden_dim()));
}

TEST_CASE("observation width mismatch is a hard error") {
  Rng rng(2);
  PolicyNet net = small_categorical(rng);
  Rng sample(1);
  CHECK_THROWS(policy_forward(net, {1.0, 2.0}, sample));
}

TEST_CASE("checkpoint round trip is bit-exact") {
  Rng rng(99);
  PolicyConfig cfg;
  cfg.obs_dim = 6;
  cfg.action_dim = 3;
  cfg.head = ActionHeadKind::Gaussian;
  cfg.hidden = 16;
  PolicyNet net = make_policy(cfg, rng);

  const std::string bytes = serialize_policy(net);
  PolicyNet back = deserialize_policy(bytes);
  CHECK(flatten_params(back) == flatten_params(net));
  CHECK(back.head == net.head);
  CHECK(back.latent_layer == net.latent_layer);
  CHECK(param_fingerprint(back) == param_fingerprint(net));
  CHECK(serialize_policy(back) == bytes);

  SECTION("file round trip") {
    const std::string path = "/tmp/advpol_test_ckpt.bin";
    save_policy(net, path);
    PolicyNet loaded = load_policy(path);
    CHECK(flatten_params(loaded) == flatten_params(net));
  }

  SECTION("corrupted magic is rejected") {
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS(deserialize_policy(bad));
  }

  SECTION("truncation is rejected") {
    std::string bad = bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS(deserialize_policy(bad));
  }
}

TEST_CASE("flat parameter round trip") {
  Rng rng(5);
  PolicyNet net = small_categorical(rng);
  Vec flat = flatten_params(net);
  REQUIRE(flat.size() == net.param_count());
  PolicyNet other = net;
  for (double& v : flat) v += 0.5;
  set_params(other, flat);
  CHECK(flatten_params(other) == flat);
}
