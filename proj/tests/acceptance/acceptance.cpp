// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failing criteria (capped at 1).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cli.hpp"
#include "ilmfuse/beam_search.hpp"
#include "ilmfuse/container.hpp"
#include "ilmfuse/kernels.hpp"
#include "ilmfuse/metrics.hpp"
#include "ilmfuse/neural_lm.hpp"
#include "toy_models.hpp"

using namespace ilmfuse;
using namespace ilmfuse::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (limit_seconds > 0 && secs > limit_seconds) {
    o.pass = false;
    o.detail += " | over time limit";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-34s %6.2fs  %s\n", o.pass ? "PASS" : "FAIL", name, secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

RnntShape varied_rnnt(std::mt19937_64& rng, int vocab) {
  RnntShape s;
  s.vocab = vocab;
  s.enc_layers = 1 + static_cast<int>(rng() % 2);
  s.layer_norm = rng() % 2;
  s.pred_out_dim = static_cast<int>(rng() % 3);
  s.activation = rng() % 3 == 0 ? "relu" : "tanh";
  s.scale = 0.5f + static_cast<float>(rng() % 100) / 50.0f;
  return s;
}

AedShape varied_aed(std::mt19937_64& rng, int vocab) {
  AedShape s;
  s.vocab = vocab;
  s.enc_layers = 1 + static_cast<int>(rng() % 2);
  s.layer_norm = rng() % 2;
  s.scale = 0.5f + static_cast<float>(rng() % 100) / 50.0f;
  return s;
}

LmShape small_lm(int vocab, float scale) {
  LmShape s;
  s.vocab = vocab;
  s.scale = scale;
  return s;
}

FusionConfig random_config(std::mt19937_64& rng, int i) {
  std::uniform_real_distribution<double> w(0.0, 0.6);
  const FusionMethod methods[] = {FusionMethod::kBaseline, FusionMethod::kShallowFusion,
                                  FusionMethod::kDensityRatio, FusionMethod::kIlme};
  return {methods[i % 4], w(rng), w(rng)};
}

// ------------------------------------------------------------------------

Outcome lattice_oracle() {
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  int checks = 0;
  for (int draw = 0; draw < 50; ++draw) {
    const RnntModel model(random_rnnt(varied_rnnt(rng, 5), rng()));
    for (int T = 1; T <= 4; ++T) {
      const auto f = random_features(T, 3, rng());
      for (int U = 0; U <= 3; ++U) {
        std::vector<TokenId> y(U);
        for (auto& v : y) v = 2 + static_cast<TokenId>(rng() % 3);
        const double a = model.sequence_logprob(f, y);
        const double b = model.bruteforce_logprob(f, y);
        worst = std::max(worst, std::abs(a - b));
        ++checks;
      }
    }
  }
  return {worst < 1e-6, std::to_string(checks) + " cases, max |diff| " + fmt("%.3g", worst)};
}

Outcome beam_vs_exhaustive() {
  std::mt19937_64 rng(1002);
  constexpr int kVocab = 4;
  int ok_rnnt = 0, ok_aed = 0;
  double worst_gap = 0.0;
  std::string first_bad;
  for (int i = 0; i < 20; ++i) {
    const RnntModel rnnt(random_rnnt(varied_rnnt(rng, kVocab), rng()));
    const NeuralLm target(random_lm(small_lm(kVocab, 1.5f), rng()));
    const NeuralLm source(random_lm(small_lm(kVocab, 1.5f), rng()));
    const DecodeModels m{&rnnt, nullptr, &target, &source};
    const auto cfg = random_config(rng, i);
    const int T = 1 + i % 3;
    const auto f = random_features(T, 3, rng());
    SearchOptions opt;
    opt.beam = 4096;
    opt.max_symbols_per_frame = 3;
    const auto beam = beam_search_rnnt(f, m, cfg, opt).nbest.front();
    const auto best = exhaustive_search_rnnt(f, m, cfg, 3);
    worst_gap = std::max(worst_gap, best.fused - beam.fused);
    if (beam.fused >= best.fused - 1e-9) {
      ++ok_rnnt;
    } else if (first_bad.empty()) {
      first_bad = "rnnt instance " + std::to_string(i);
    }
  }
  for (int i = 0; i < 20; ++i) {
    const AedModel aed(random_aed(varied_aed(rng, kVocab), rng()));
    const NeuralLm target(random_lm(small_lm(kVocab, 1.5f), rng()));
    const NeuralLm source(random_lm(small_lm(kVocab, 1.5f), rng()));
    const DecodeModels m{nullptr, &aed, &target, &source};
    const auto cfg = random_config(rng, i);
    const auto f = random_features(2 + i % 3, 3, rng());
    SearchOptions opt;
    opt.beam = 4096;
    opt.max_len = 3;
    const auto beam = beam_search_aed(f, m, cfg, opt).nbest.front();
    const auto best = exhaustive_search_aed(f, m, cfg, 3);
    if (beam.fused == best.fused && beam.tokens == best.tokens) {
      ++ok_aed;
    } else if (first_bad.empty()) {
      first_bad = "aed instance " + std::to_string(i) + " beam " + fmt("%.17g", beam.fused) +
                  " exhaustive " + fmt("%.17g", best.fused);
    }
  }
  std::string detail = "rnnt " + std::to_string(ok_rnnt) + "/20 (max shortfall " +
                       fmt("%.3g", worst_gap) + "), aed exact " + std::to_string(ok_aed) + "/20";
  if (!first_bad.empty()) detail += "; first failure: " + first_bad;
  return {ok_rnnt == 20 && ok_aed == 20, detail};
}

Outcome fusion_lattice() {
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<double> lp(-30.0, 0.0);
  std::uniform_real_distribution<double> w(0.0, 2.0);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const StepScores s{lp(rng), lp(rng), lp(rng)};
    const double lam = w(rng);
    const double mu = w(rng);
    auto fuse = [&](FusionMethod m, double l, double u) { return fuse_step(s, {m, l, u}, false); };
    const double sf = fuse(FusionMethod::kShallowFusion, lam, mu);
    // baseline ignores both weights
    bad += fuse(FusionMethod::kBaseline, lam, mu) != s.e2e_logp;
    // shallow fusion at zero LM weight is the baseline
    bad += fuse(FusionMethod::kShallowFusion, 0.0, mu) != fuse(FusionMethod::kBaseline, lam, mu);
    // density ratio without subtraction is shallow fusion
    bad += fuse(FusionMethod::kDensityRatio, lam, 0.0) != sf;
    // internal-LM estimation without subtraction is shallow fusion
    bad += fuse(FusionMethod::kIlme, lam, 0.0) != sf;
    // both weights zero collapses every method to the baseline
    bad += fuse(FusionMethod::kDensityRatio, 0.0, 0.0) != s.e2e_logp;
    bad += fuse(FusionMethod::kIlme, 0.0, 0.0) != s.e2e_logp;
  }
  return {bad == 0, "10000 triples, " + std::to_string(bad) + " mismatches"};
}

Outcome ilm_invariance() {
  std::mt19937_64 rng(1004);
  int mismatches = 0;
  int compared = 0;
  double worst_norm = 0.0;
  bool blank_free = true;
  for (int i = 0; i < 10; ++i) {
    const RnntModel rnnt(random_rnnt(varied_rnnt(rng, 6), rng()));
    const AedModel aed(random_aed(varied_aed(rng, 6), rng()));
    const NeuralLm lm(random_lm(small_lm(6, 1.0f), rng()));
    const auto fa = random_features(4, 3, rng());
    const auto fb = random_features(6, 3, rng());

    // Direct: run each model's acoustic path on one matrix, then the ILM.
    const std::vector<TokenId> prefix{2, 5, 3};
    auto ilm_after = [&](const Tensor& f) {
      (void)rnnt.encode(f);
      auto st = rnnt.initial_state();
      std::vector<std::vector<double>> out{rnnt.ilm_step(st)};
      for (auto y : prefix) {
        st = rnnt.prediction_step(y, st).second;
        out.push_back(rnnt.ilm_step(st));
      }
      return out;
    };
    auto aed_ilm_after = [&](const Tensor& f) {
      (void)aed.prepare(aed.encode(f));
      auto st = aed.ilm_initial_state();
      std::vector<std::vector<double>> out;
      for (TokenId y : {2, 5, 3, 1}) {
        auto r = aed.ilm_step(st);
        out.push_back(r.log_probs);
        st = r.state;
        st.last_token = y;
      }
      return out;
    };
    const auto ra = ilm_after(fa), rb = ilm_after(fb);
    const auto aa = aed_ilm_after(fa), ab = aed_ilm_after(fb);
    mismatches += ra != rb;
    mismatches += aa != ab;
    compared += 2;
    for (const auto& p : ra) {
      blank_free = blank_free && p.size() == static_cast<std::size_t>(rnnt.vocabulary().size());
      double s = 0;
      for (double v : p) s += v;
      worst_norm = std::max(worst_norm, std::abs(s - 1.0));
    }
    for (const auto& lp : aa) {
      double s = 0;
      for (double v : lp) s += std::exp(v);
      worst_norm = std::max(worst_norm, std::abs(s - 1.0));
    }

    // In-search: the subtracted scores logged while decoding two different
    // matrices agree wherever the same prefix and token were scored.
    const FusionConfig cfg{FusionMethod::kIlme, 0.3, 0.3};
    for (int arch = 0; arch < 2; ++arch) {
      std::map<std::pair<std::vector<TokenId>, TokenId>, double> seen;
      for (const auto* f : {&fa, &fb}) {
        std::vector<StepRecord> trace;
        SearchOptions opt;
        opt.beam = 6;
        opt.trace = &trace;
        if (arch == 0) {
          beam_search_rnnt(*f, {&rnnt, nullptr, &lm, nullptr}, cfg, opt);
        } else {
          beam_search_aed(*f, {nullptr, &aed, &lm, nullptr}, cfg, opt);
        }
        for (const auto& r : trace) {
          if (r.is_blank) continue;
          auto [it, fresh] = seen.emplace(std::make_pair(r.prefix, r.token), r.scores.sub_lm_logp);
          if (!fresh) {
            ++compared;
            mismatches += it->second != r.scores.sub_lm_logp;
          }
        }
      }
    }
  }
  const bool pass = mismatches == 0 && worst_norm <= 1e-6 && blank_free;
  return {pass, std::to_string(compared) + " comparisons, " + std::to_string(mismatches) +
                    " differ; max |sum-1| " + fmt("%.3g", worst_norm) +
                    (blank_free ? "; rnnt ILM has |V| outputs" : "; rnnt ILM has wrong size")};
}

Outcome blank_exclusion() {
  std::mt19937_64 rng(1005);
  int blank_steps = 0, paired = 0, bad = 0;
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const RnntModel rnnt(random_rnnt(varied_rnnt(rng, 6), rng()));
    const NeuralLm lm(random_lm(small_lm(6, 1.5f), rng()));
    const DecodeModels m{&rnnt, nullptr, &lm, nullptr};
    const auto f = random_features(3 + i % 4, 3, rng());
    std::vector<StepRecord> base_trace, ilme_trace;
    SearchOptions opt;
    opt.beam = 8;
    opt.trace = &base_trace;
    beam_search_rnnt(f, m, {FusionMethod::kBaseline, 0, 0}, opt);
    opt.trace = &ilme_trace;
    beam_search_rnnt(f, m, {FusionMethod::kIlme, 0.4, 0.3}, opt);

    std::map<std::pair<int, std::vector<TokenId>>, double> base_blank;
    for (const auto& r : base_trace) {
      if (r.is_blank) base_blank[{r.position, r.prefix}] = r.scores.e2e_logp;
    }
    for (const auto& r : ilme_trace) {
      if (!r.is_blank) continue;
      ++blank_steps;
      // the blank step moves the fused score by exactly its E2E log prob
      const double delta = r.fused_after - r.fused_before;
      const double err = std::abs(delta - r.scores.e2e_logp);
      worst = std::max(worst, err);
      bad += err > 1e-9 || r.scores.ext_lm_logp != 0.0 || r.scores.sub_lm_logp != 0.0;
      auto it = base_blank.find({r.position, r.prefix});
      if (it != base_blank.end()) {
        ++paired;
        const double d = std::abs(it->second - r.scores.e2e_logp);
        worst = std::max(worst, d);
        bad += d > 1e-9;
      }
    }
  }
  return {bad == 0 && paired > 0,
          std::to_string(blank_steps) + " ilme blank steps, " + std::to_string(paired) +
              " paired with baseline, max deviation " + fmt("%.3g", worst)};
}

template <typename F>
void each_sequence(const std::vector<TokenId>& alphabet, int max_len, F&& f) {
  std::vector<std::vector<TokenId>> level{{}};
  for (int len = 0; len <= max_len; ++len) {
    std::vector<std::vector<TokenId>> next;
    for (const auto& y : level) {
      f(y);
      if (len == max_len) continue;
      for (auto v : alphabet) {
        auto z = y;
        z.push_back(v);
        next.push_back(std::move(z));
      }
    }
    level = std::move(next);
  }
}

Outcome normalization() {
  std::mt19937_64 rng(1006);
  double worst_step = 0.0;
  double max_mass_rnnt = 0.0, max_mass_aed = 0.0;
  long steps = 0;
  auto note = [&](const std::vector<double>& p, bool logs) {
    double s = 0;
    for (double v : p) s += logs ? std::exp(v) : v;
    worst_step = std::max(worst_step, std::abs(s - 1.0));
    ++steps;
  };
  for (int i = 0; i < 10; ++i) {
    const RnntModel rnnt(random_rnnt(varied_rnnt(rng, 4), rng()));
    const AedModel aed(random_aed(varied_aed(rng, 4), rng()));
    const NeuralLm lm(random_lm(small_lm(4, 2.0f), rng()));
    const auto f = random_features(2, 3, rng());
    std::vector<TokenId> all;
    for (TokenId v = 0; v < 4; ++v) all.push_back(v);
    std::vector<TokenId> no_eos{0, 2, 3};

    const auto enc = rnnt.encode(f);
    const auto mem = aed.prepare(aed.encode(f));
    double mass_rnnt = 0, mass_aed = 0;
    each_sequence(all, 5, [&](const std::vector<TokenId>& y) {
      mass_rnnt += std::exp(rnnt.sequence_logprob_encoded(enc, y));
      auto st = rnnt.initial_state();
      for (std::size_t u = 0; u <= y.size(); ++u) {
        for (const auto& h : enc) note(rnnt.step_distribution(h, st.h_pred), false);
        note(rnnt.ilm_step(st), false);
        if (u < y.size()) st = rnnt.prediction_step(y[u], st).second;
      }
    });
    each_sequence(no_eos, 5, [&](const std::vector<TokenId>& y) {
      mass_aed += std::exp(aed.sequence_logprob_memory(mem, y));
      auto st = aed.initial_state(mem);
      auto ist = aed.ilm_initial_state();
      auto lst = lm.initial_state();
      for (std::size_t u = 0; u <= y.size(); ++u) {
        auto r = aed.decoder_step(st, mem);
        note(kernels::softmax(r.logits), false);
        auto ir = aed.ilm_step(ist);
        note(ir.log_probs, true);
        auto lr = lm.step(lst);
        note(lr.log_probs, true);
        if (u < y.size()) {
          st = r.state;
          st.last_token = y[u];
          ist = ir.state;
          ist.last_token = y[u];
          lst = lr.state;
          lst.last_token = y[u];
        }
      }
    });
    max_mass_rnnt = std::max(max_mass_rnnt, mass_rnnt);
    max_mass_aed = std::max(max_mass_aed, mass_aed);
  }
  const bool pass = worst_step <= 1e-6 && max_mass_rnnt <= 1 + 1e-6 && max_mass_aed <= 1 + 1e-6;
  return {pass, std::to_string(steps) + " distributions, max |sum-1| " + fmt("%.3g", worst_step) +
                    "; max enumerated mass rnnt " + fmt("%.6f", max_mass_rnnt) + ", aed " +
                    fmt("%.6f", max_mass_aed)};
}

Outcome wer_identities() {
  auto one_decimal = [](double v) { return std::round(v * 10.0) / 10.0; };
  const double a = relative_werr(8.97, 6.36);
  const double b = relative_werr(20.23, 17.01);
  return {one_decimal(a) == 29.1 && one_decimal(b) == 15.9,
          "werr(8.97,6.36)=" + fmt("%.4f", a) + " werr(20.23,17.01)=" + fmt("%.4f", b)};
}

Outcome uniform_perplexity() {
  std::mt19937_64 rng(1008);
  std::string detail;
  bool pass = true;
  for (int V : {5, 64, 4000}) {
    std::vector<std::vector<TokenId>> corpus(40);
    for (auto& s : corpus) {
      s.resize(1 + rng() % 12);
      for (auto& v : s) v = 2 + static_cast<TokenId>(rng() % (V - 2));
    }
    const double analytic = perplexity(corpus, UniformScorer(V, true)).ppl;
    const NeuralLm lm(uniform_lm(V));
    const double container = perplexity(corpus, LmScorer(lm, true)).ppl;
    const bool ok = analytic == V && container == V;
    pass = pass && ok;
    const double ulp = std::nextafter(static_cast<double>(V), 1e300) - V;
    detail += "|V|=" + std::to_string(V) + ": " + fmt("%.17g", analytic) + " / " +
              fmt("%.17g", container) + " (" + fmt("%.0f", std::abs(analytic - V) / ulp) + "/" +
              fmt("%.0f", std::abs(container - V) / ulp) + " ulp)  ";
  }
  detail += "uniform scorer / zero-weight LM container";
  if (!pass) {
    const double l = std::log(4000.0);
    detail += "; exp(log(4000)) itself rounds to " + fmt("%.17g", std::exp(l)) + " in double";
  }
  return {pass, detail};
}

Outcome determinism() {
  TempDir dir;
  RnntShape rs;
  rs.vocab = 12;
  rs.enc_hidden = 16;
  rs.joint_dim = 16;
  AedShape as;
  as.vocab = 12;
  as.enc_hidden = 8;
  as.dec_hidden = 16;
  LmShape ls;
  ls.vocab = 12;
  save_container(random_rnnt(rs, 2001), dir / "rnnt.cont");
  save_container(random_aed(as, 2002), dir / "aed.cont");
  save_container(random_lm(ls, 2003), dir / "lm.cont");
  save_utterance_set(synthetic_set(24, toy_vocabulary(12), 3, 2004, 6, 12), dir / "test.jsonl");

  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::string detail;
  bool pass = true;
  for (const std::string arch : {"rnnt", "aed"}) {
    std::string outputs[2];
    int k = 0;
    for (const std::string jobs : {"1", "8"}) {
      const auto out = (dir / (arch + "." + jobs + ".jsonl")).string();
      std::ostringstream o, e;
      const int code = cli::run({"decode", "--e2e", (dir / (arch + ".cont")).string(), "--method",
                                 "ilme", "--lm", (dir / "lm.cont").string(), "--lm-weight", "0.3",
                                 "--sub-weight", "0.2", "--beam", "8", "--input",
                                 (dir / "test.jsonl").string(), "--output", out, "--jobs", jobs},
                                o, e);
      if (code != 0) return {false, arch + " decode failed: " + e.str()};
      outputs[k++] = slurp(out);
    }
    const bool same = outputs[0] == outputs[1] && !outputs[0].empty();
    pass = pass && same;
    detail += arch + (same ? " identical (" : " DIFFERENT (") + std::to_string(outputs[0].size()) +
              " bytes)  ";
  }
  return {pass, detail + "24 utterances, --jobs 1 vs --jobs 8"};
}

}  // namespace

int main() {
  criterion("lattice oracle", 30, lattice_oracle);
  criterion("beam/exhaustive equivalence", 60, beam_vs_exhaustive);
  criterion("fusion reduction lattice", 0, fusion_lattice);
  criterion("ILM structural invariance", 0, ilm_invariance);
  criterion("blank exclusion", 0, blank_exclusion);
  criterion("normalization/sub-distribution", 0, normalization);
  criterion("WER identities", 0, wer_identities);
  criterion("perplexity analytic", 0, uniform_perplexity);
  criterion("determinism", 0, determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
