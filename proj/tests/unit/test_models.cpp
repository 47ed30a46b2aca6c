#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ilmfuse/aed_model.hpp"
#include "ilmfuse/container.hpp"
#include "ilmfuse/error.hpp"
#include "ilmfuse/neural_lm.hpp"
#include "ilmfuse/rnnt_model.hpp"
#include "toy_models.hpp"

using namespace ilmfuse;
using namespace ilmfuse::testing;

namespace {

const std::filesystem::path kGoldens = ILMFUSE_GOLDEN_DIR;

nlohmann::json goldens() {
  std::ifstream in(kGoldens / "goldens.json");
  return nlohmann::json::parse(in);
}

Tensor golden_features(const std::string& name) {
  return load_container(kGoldens / name).tensor("features");
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_SUITE("goldens") {
  TEST_CASE("rnnt forward pass") {
    const auto g = goldens()["rnnt"];
    const RnntModel model(load_container(kGoldens / "rnnt.cont"));
    const auto feats = golden_features("rnnt_features.cont");
    const auto encoded = model.encode(feats);
    const auto want = g["encoded"].get<std::vector<std::vector<double>>>();
    REQUIRE(encoded.size() == want.size());
    for (std::size_t t = 0; t < want.size(); ++t) {
      for (std::size_t k = 0; k < want[t].size(); ++k) {
        CHECK(encoded[t][k] == doctest::Approx(want[t][k]).epsilon(1e-5));
      }
    }
    const auto labels = g["labels"].get<std::vector<TokenId>>();
    auto state = model.initial_state();
    for (int u = 0; u < 2; ++u) state = model.prediction_step(labels[u], state).second;
    const auto z = model.joint_step(encoded[1], state.h_pred);
    const auto zwant = g["joint_logits_t1_u2"].get<std::vector<double>>();
    REQUIRE(z.size() == zwant.size());
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == doctest::Approx(zwant[i]).epsilon(1e-5));

    CHECK(model.sequence_logprob(feats, labels) ==
          doctest::Approx(g["sequence_logprob"].get<double>()).epsilon(1e-5));
    CHECK(rnnt_alignment_count(4, 3) == g["path_count"].get<std::uint64_t>());
    CHECK(model.ilm_sequence_logprob(labels) ==
          doctest::Approx(g["ilm_sequence_logprob"].get<double>()).epsilon(1e-5));
    const auto ilm = model.ilm_step(model.initial_state());
    const auto ilm_want = g["ilm_log_probs_after_sos"].get<std::vector<double>>();
    REQUIRE(ilm.size() == ilm_want.size());
    for (std::size_t i = 0; i < ilm.size(); ++i) {
      CHECK(std::log(ilm[i]) == doctest::Approx(ilm_want[i]).epsilon(1e-5));
    }
  }

  TEST_CASE("aed forward pass") {
    const auto g = goldens()["aed"];
    const AedModel model(load_container(kGoldens / "aed.cont"));
    const auto feats = golden_features("aed_features.cont");
    const auto encoded = model.encode(feats);
    const auto want = g["encoded"].get<std::vector<std::vector<double>>>();
    REQUIRE(encoded.size() == want.size());
    for (std::size_t t = 0; t < want.size(); ++t) {
      for (std::size_t k = 0; k < want[t].size(); ++k) {
        CHECK(encoded[t][k] == doctest::Approx(want[t][k]).epsilon(1e-5));
      }
    }
    const auto memory = model.prepare(encoded);
    const auto step = model.decoder_step(model.initial_state(memory), memory);
    const auto att = g["attention_after_step0"].get<std::vector<double>>();
    for (std::size_t t = 0; t < att.size(); ++t) {
      CHECK(step.state.attention.weights[t] == doctest::Approx(att[t]).epsilon(1e-5));
    }
    const auto labels = g["labels"].get<std::vector<TokenId>>();
    CHECK(model.sequence_logprob(feats, labels) ==
          doctest::Approx(g["sequence_logprob"].get<double>()).epsilon(1e-5));
    CHECK(model.ilm_sequence_logprob(labels) ==
          doctest::Approx(g["ilm_sequence_logprob"].get<double>()).epsilon(1e-5));
  }

  TEST_CASE("lm forward pass, untied and tied") {
    for (const std::string name : {"lm", "lm_tied"}) {
      const auto g = goldens()[name];
      const NeuralLm lm(load_container(kGoldens / (name + ".cont")));
      const auto labels = g["labels"].get<std::vector<TokenId>>();
      CHECK(lm.sequence_logprob(labels, true) ==
            doctest::Approx(g["sequence_logprob_eos"].get<double>()).epsilon(1e-5));
      CHECK(lm.sequence_logprob(labels, false) ==
            doctest::Approx(g["sequence_logprob_no_eos"].get<double>()).epsilon(1e-5));
      auto state = lm.initial_state();
      for (int u = 0; u < 2; ++u) {
        state = lm.step(state).state;
        state.last_token = labels[u];
      }
      const auto lp = lm.step(state).log_probs;
      const auto want = g["log_probs_after_2_3"].get<std::vector<double>>();
      for (std::size_t i = 0; i < lp.size(); ++i) CHECK(lp[i] == doctest::Approx(want[i]).epsilon(1e-5));
    }
  }

  TEST_CASE("math constants") {
    const auto g = goldens()["math"];
    const auto p = kernels::softmax(std::vector<float>{1.0f, 2.0f});
    CHECK(p[0] == doctest::Approx(g["softmax_1_2"][0].get<double>()).epsilon(1e-12));
    CHECK(kernels::log_sum_exp(std::vector<double>{-1, -2, -3}) ==
          doctest::Approx(g["log_sum_exp_m1_m2_m3"].get<double>()).epsilon(1e-12));
  }
}

TEST_SUITE("rnnt") {
  TEST_CASE("alignment counts") {
    CHECK(rnnt_alignment_count(1, 0) == 1);
    CHECK(rnnt_alignment_count(1, 1) == 1);
    CHECK(rnnt_alignment_count(3, 2) == 6);
    CHECK(rnnt_alignment_count(4, 3) == 20);
  }

  TEST_CASE("lattice sum equals brute force") {
    RnntShape s;
    s.layer_norm = true;
    s.pred_out_dim = 3;
    s.scale = 1.5f;
    const RnntModel model(random_rnnt(s, 21));
    const auto feats = random_features(3, s.feature_dim, 22);
    const std::vector<TokenId> y{2, 4, 3};
    for (std::size_t u = 0; u <= y.size(); ++u) {
      const std::span<const TokenId> prefix(y.data(), u);
      CHECK(model.sequence_logprob(feats, prefix) ==
            doctest::Approx(model.bruteforce_logprob(feats, prefix)).epsilon(1e-9));
    }
  }

  TEST_CASE("single frame, single label is one path") {
    const RnntModel model(random_rnnt({}, 23));
    const auto feats = random_features(1, 3, 24);
    const auto enc = model.encode(feats);
    const std::vector<TokenId> y{3};
    auto st = model.initial_state();
    const auto p0 = model.step_distribution(enc[0], st.h_pred);
    st = model.prediction_step(3, st).second;
    const auto p1 = model.step_distribution(enc[0], st.h_pred);
    CHECK(model.sequence_logprob(feats, y) ==
          doctest::Approx(std::log(p0[3]) + std::log(p1[model.blank_id()])));
  }

  TEST_CASE("encoder is causal") {
    const RnntModel model(random_rnnt({}, 25));
    auto a = random_features(4, 3, 26);
    auto b = a;
    for (auto& v : b.row(3)) v += 1.0f;
    const auto ea = model.encode(a);
    const auto eb = model.encode(b);
    for (int t = 0; t < 3; ++t) CHECK(ea[t] == eb[t]);
    CHECK(ea[3] != eb[3]);
  }

  TEST_CASE("step distribution is normalized over V + blank") {
    const RnntModel model(random_rnnt({}, 27));
    const auto enc = model.encode(random_features(2, 3, 28));
    const auto p = model.step_distribution(enc[1], model.initial_state().h_pred);
    CHECK(p.size() == 6);
    CHECK(sum(p) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("internal LM ignores the acoustic branch and drops blank") {
    const auto c = random_rnnt({}, 29);
    const RnntModel model(c);
    auto st = model.initial_state();
    st = model.prediction_step(2, st).second;
    const auto p = model.ilm_step(st);
    CHECK(p.size() == 5);
    CHECK(sum(p) == doctest::Approx(1.0).epsilon(1e-12));
    // scaling the acoustic projection changes nothing
    auto c2 = c;
    for (auto& v : c2.tensors["joint.W_e"].data()) v *= 3.0f;
    for (auto& v : c2.tensors["joint.b_e"].data()) v += 1.0f;
    CHECK(RnntModel(c2).ilm_step(st) == p);
  }

  TEST_CASE("contract errors") {
    const RnntModel model(random_rnnt({}, 30));
    CHECK_THROWS_AS(model.prediction_step(model.blank_id(), model.initial_state()), ContractError);
    CHECK_THROWS_AS(model.ilm_step(model.zero_state()), ContractError);
    const auto f = random_features(1, 3, 31);
    const std::vector<TokenId> too_long(9, 2);
    CHECK_THROWS_AS(model.sequence_logprob(f, too_long), ContractError);
    const std::vector<TokenId> bad{7};
    CHECK_THROWS_AS(model.sequence_logprob(f, bad), ContractError);
    CHECK_THROWS_AS(model.encode(random_features(2, 4, 1)), DimensionError);
    CHECK_THROWS_AS(model.bruteforce_logprob(random_features(8, 3, 1), std::vector<TokenId>(7, 2)),
                    ContractError);
    CHECK_THROWS_AS(RnntModel(random_lm({}, 1)), ContractError);
  }

  TEST_CASE("relu joint") {
    RnntShape s;
    s.activation = "relu";
    const RnntModel model(random_rnnt(s, 32));
    const auto f = random_features(2, 3, 33);
    const std::vector<TokenId> y{2};
    CHECK(model.sequence_logprob(f, y) == doctest::Approx(model.bruteforce_logprob(f, y)));
  }
}

TEST_SUITE("aed") {
  TEST_CASE("attention weights are a distribution") {
    const AedModel model(random_aed({}, 40));
    const auto mem = model.prepare(model.encode(random_features(5, 3, 41)));
    auto st = model.initial_state(mem);
    CHECK(st.attention.weights == std::vector<float>(5, 0.2f));
    CHECK(st.attention.context == std::vector<float>(4, 0.0f));
    const auto r = model.decoder_step(st, mem);
    double total = 0;
    for (float w : r.state.attention.weights) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.logits.size() == 4);
  }

  TEST_CASE("sequence score is the sum of step scores including eos") {
    const AedModel model(random_aed({}, 42));
    const auto f = random_features(3, 3, 43);
    const auto mem = model.prepare(model.encode(f));
    const std::vector<TokenId> y{2, 3};
    double total = 0;
    auto st = model.initial_state(mem);
    for (TokenId tok : {2, 3, 1}) {
      auto r = model.decoder_step(st, mem);
      total += kernels::log_softmax(r.logits)[tok];
      st = r.state;
      st.last_token = tok;
    }
    CHECK(model.sequence_logprob(f, y) == total);
  }

  TEST_CASE("sequence probabilities sum to at most one") {
    const AedModel model(random_aed({}, 44));
    const auto f = random_features(3, 3, 45);
    // all sequences over {2,3} up to length 6
    double mass = 0;
    std::vector<std::vector<TokenId>> frontier{{}};
    for (int len = 0; len <= 6; ++len) {
      std::vector<std::vector<TokenId>> next;
      for (const auto& y : frontier) {
        mass += std::exp(model.sequence_logprob(f, y));
        for (TokenId v : {2, 3}) {
          auto z = y;
          z.push_back(v);
          next.push_back(z);
        }
      }
      frontier = std::move(next);
    }
    CHECK(mass <= 1.0 + 1e-9);
    CHECK(mass > 0.0);
  }

  TEST_CASE("internal LM does not depend on features") {
    const AedModel model(random_aed({}, 46));
    auto st = model.ilm_initial_state();
    const auto a = model.ilm_step(st);
    double total = 0;
    for (double lp : a.log_probs) total += std::exp(lp);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    double chain = 0;
    for (TokenId tok : {3, 2, 1}) {
      auto r = model.ilm_step(st);
      chain += r.log_probs[tok];
      st = r.state;
      st.last_token = tok;
    }
    CHECK(model.ilm_sequence_logprob(std::vector<TokenId>{3, 2}) == chain);
    CHECK_THROWS_AS(model.sequence_logprob(random_features(2, 3, 1), std::vector<TokenId>{9}),
                    ContractError);
  }
}

TEST_SUITE("lm") {
  TEST_CASE("step log probs normalize and the chain matches sequence_logprob") {
    const NeuralLm lm(random_lm({}, 50));
    const std::vector<TokenId> y{2, 4, 3};
    double total = 0;
    auto st = lm.initial_state();
    for (TokenId tok : {2, 4, 3, 1}) {
      auto r = lm.step(st);
      double mass = 0;
      for (double lp : r.log_probs) mass += std::exp(lp);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
      total += r.log_probs[tok];
      st = r.state;
      st.last_token = tok;
    }
    CHECK(lm.sequence_logprob(y, true) == total);
  }

  TEST_CASE("perplexity") {
    const std::vector<std::vector<TokenId>> corpus{{2, 3}, {4}};
    const auto r = perplexity(corpus, UniformScorer(7, true));
    CHECK(r.token_count == 5);
    CHECK(r.ppl == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(perplexity(corpus, UniformScorer(7, false)).token_count == 3);
    CHECK_THROWS_AS(perplexity({}, UniformScorer(7, true)), ContractError);
    CHECK_THROWS_AS(perplexity({{}}, UniformScorer(7, false)), ContractError);
    CHECK(perplexity({{}}, UniformScorer(7, true)).token_count == 1);
  }

  TEST_CASE("zero-weight LM is exactly uniform") {
    const NeuralLm lm(uniform_lm(9));
    const auto r = perplexity({{2, 3, 4}, {5}}, LmScorer(lm, true));
    CHECK(r.ppl == doctest::Approx(9.0).epsilon(1e-12));
  }

  TEST_CASE("internal LM scorers") {
    const RnntModel rnnt(random_rnnt({}, 51));
    const AedModel aed(random_aed({}, 52));
    const std::vector<std::vector<TokenId>> corpus{{2, 3}, {3}};
    CHECK(perplexity(corpus, RnntIlmScorer(rnnt)).token_count == 3);
    CHECK(perplexity(corpus, AedIlmScorer(aed)).token_count == 5);
  }
}
