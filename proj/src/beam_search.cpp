#include "ilmfuse/beam_search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <string>

#include "ilmfuse/error.hpp"
#include "ilmfuse/kernels.hpp"

namespace ilmfuse {
namespace {

using Clock = std::chrono::steady_clock;

double fused_of(double e2e, double ext, double sub, const FusionConfig& config) {
  return fuse_step({e2e, ext, sub}, config, false);
}

void check_search_inputs(const DecodeModels& models, const FusionConfig& config,
                         const SearchOptions& options) {
  if (options.beam < 1) throw ContractError("beam must be at least 1");
  validate_config(config, models.roles());
}

template <typename H>
bool ranks_before(const H& a, const H& b) {
  if (a.fused != b.fused) return a.fused > b.fused;
  return a.tokens < b.tokens;
}

template <typename H>
void keep_best(std::vector<H>& hyps, int beam) {
  std::sort(hyps.begin(), hyps.end(), [](const H& a, const H& b) { return ranks_before(a, b); });
  if (hyps.size() > static_cast<std::size_t>(beam)) hyps.resize(static_cast<std::size_t>(beam));
}

void finalize_nbest(std::vector<Hypothesis>& nbest, const SearchOptions& options) {
  if (!options.length_normalize) {
    std::sort(nbest.begin(), nbest.end(), hypothesis_before);
    return;
  }
  auto norm = [](const Hypothesis& h) {
    return h.fused / static_cast<double>(std::max<std::size_t>(1, h.tokens.size()));
  };
  std::sort(nbest.begin(), nbest.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    if (norm(a) != norm(b)) return norm(a) > norm(b);
    return a.tokens < b.tokens;
  });
}

// ---------------------------------------------------------------- RNN-T --

struct RnntHyp {
  std::vector<TokenId> tokens;
  double e2e = 0.0;
  double ext = 0.0;
  double sub = 0.0;
  double fused = 0.0;
  int frame_emits = 0;

  // Until `pred_ready`, `pred` is the parent's state and tokens.back() is
  // still to be consumed.
  PredictionState pred;
  bool pred_ready = false;
  Vector language;

  // LM states are lazy by construction: `last_token` is consumed by step().
  LmState ext_state;
  LmState src_state;
  bool lm_ready = false;
  std::vector<double> ext_next;
  std::vector<double> sub_next;
  LmState ext_after;
  LmState src_after;
};

class RnntSearch {
 public:
  RnntSearch(const DecodeModels& models, const FusionConfig& config, const SearchOptions& options)
      : m_(models), model_(*models.rnnt), config_(config), options_(options),
        candidates_(rnnt_candidates(model_.vocabulary())) {}

  std::vector<Hypothesis> run(const Sequence& encoded) {
    const auto acoustic = model_.acoustic_terms(encoded);
    std::vector<RnntHyp> beam;
    beam.push_back(initial());
    for (std::size_t t = 0; t < acoustic.size(); ++t) {
      beam = advance_frame(static_cast<int>(t), acoustic[t], std::move(beam));
    }
    std::vector<Hypothesis> out;
    out.reserve(beam.size());
    for (auto& h : beam) out.push_back({std::move(h.tokens), h.fused, h.e2e, h.ext, h.sub});
    return out;
  }

 private:
  RnntHyp initial() const {
    RnntHyp h;
    h.pred = model_.initial_state();
    h.pred_ready = true;
    h.language = model_.language_term(h.pred.h_pred);
    if (m_.target_lm) h.ext_state = m_.target_lm->initial_state();
    if (m_.source_lm) h.src_state = m_.source_lm->initial_state();
    h.fused = fused_of(0.0, 0.0, 0.0, config_);
    return h;
  }

  void materialize(RnntHyp& h) const {
    if (h.pred_ready) return;
    h.pred = model_.prediction_step(h.tokens.back(), h.pred).second;
    h.language = model_.language_term(h.pred.h_pred);
    h.pred_ready = true;
  }

  void ensure_lm(RnntHyp& h) const {
    if (h.lm_ready) return;
    if (config_.uses_target_lm()) {
      auto r = m_.target_lm->step(h.ext_state);
      h.ext_next = std::move(r.log_probs);
      h.ext_after = std::move(r.state);
    }
    if (config_.method == FusionMethod::kDensityRatio) {
      auto r = m_.source_lm->step(h.src_state);
      h.sub_next = std::move(r.log_probs);
      h.src_after = std::move(r.state);
    } else if (config_.method == FusionMethod::kIlme) {
      h.sub_next = model_.ilm_log_probs(h.language);
    }
    h.lm_ready = true;
  }

  void record(int t, const RnntHyp& h, TokenId token, bool blank, StepScores s,
              double fused_after) const {
    if (!options_.trace) return;
    options_.trace->push_back({t, h.tokens, token, blank, s, h.fused, fused_after});
  }

  std::vector<RnntHyp> advance_frame(int t, const Vector& acoustic, std::vector<RnntHyp> start) {
    const TokenId blank = model_.blank_id();
    std::map<std::size_t, std::map<std::vector<TokenId>, RnntHyp>> pending;
    for (auto& h : start) {
      h.frame_emits = 0;
      auto key = h.tokens;
      pending[key.size()].emplace(std::move(key), std::move(h));
    }

    std::vector<RnntHyp> finished_frame;
    while (!pending.empty()) {
      auto level_node = pending.extract(pending.begin());
      const std::size_t length = level_node.key();
      std::vector<RnntHyp> level;
      level.reserve(level_node.mapped().size());
      for (auto& [key, h] : level_node.mapped()) level.push_back(std::move(h));
      keep_best(level, options_.beam);

      for (auto& h : level) {
        materialize(h);
        const auto lp = kernels::log_softmax(model_.joint_from_terms(acoustic, h.language));

        if (h.frame_emits < options_.max_symbols_per_frame) {
          ensure_lm(h);
          auto& next_level = pending[length + 1];
          for (TokenId v : candidates_) {
            const StepScores s{lp[v], h.ext_next.empty() ? 0.0 : h.ext_next[v],
                               h.sub_next.empty() ? 0.0 : h.sub_next[v]};
            const double e2e = h.e2e + s.e2e_logp;
            const double ext = h.ext + s.ext_lm_logp;
            const double sub = h.sub + s.sub_lm_logp;
            const double fused = fused_of(e2e, ext, sub, config_);
            record(t, h, v, false, s, fused);

            auto tokens = h.tokens;
            tokens.push_back(v);
            auto it = next_level.find(tokens);
            if (it != next_level.end()) {
              RnntHyp& existing = it->second;
              existing.e2e = kernels::log_add(existing.e2e, e2e);
              existing.fused = fused_of(existing.e2e, existing.ext, existing.sub, config_);
              existing.frame_emits = std::min(existing.frame_emits, h.frame_emits + 1);
              continue;
            }
            RnntHyp child;
            child.tokens = tokens;
            child.e2e = e2e;
            child.ext = ext;
            child.sub = sub;
            child.fused = fused;
            child.frame_emits = h.frame_emits + 1;
            child.pred = h.pred;
            child.pred_ready = false;
            if (config_.uses_target_lm()) child.ext_state = {h.ext_after.layers, v};
            if (config_.method == FusionMethod::kDensityRatio) {
              child.src_state = {h.src_after.layers, v};
            }
            next_level.emplace(std::move(tokens), std::move(child));
          }
        }

        const StepScores s{lp[blank], 0.0, 0.0};
        const double e2e = h.e2e + s.e2e_logp;
        h.e2e = e2e;
        const double fused = fused_of(h.e2e, h.ext, h.sub, config_);
        record(t, h, blank, true, s, fused);
        h.fused = fused;
        finished_frame.push_back(std::move(h));
      }
    }
    keep_best(finished_frame, options_.beam);
    return finished_frame;
  }

  const DecodeModels& m_;
  const RnntModel& model_;
  const FusionConfig& config_;
  const SearchOptions& options_;
  std::vector<TokenId> candidates_;
};

// ------------------------------------------------------------------ AED --

struct AedHyp {
  std::vector<TokenId> tokens;
  double e2e = 0.0;
  double ext = 0.0;
  double sub = 0.0;
  double fused = 0.0;
  bool finished = false;
  DecoderState dec;
  LmState ext_state;
  LmState src_state;
  AedIlmState ilm_state;
};

bool aed_ranks_before(const AedHyp& a, const AedHyp& b) {
  if (a.fused != b.fused) return a.fused > b.fused;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return a.finished && !b.finished;
}

}  // namespace

bool hypothesis_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.fused != b.fused) return a.fused > b.fused;
  return a.tokens < b.tokens;
}

std::vector<TokenId> rnnt_candidates(const Vocabulary& vocab) {
  std::vector<TokenId> out;
  for (TokenId v = 0; v < vocab.size(); ++v) {
    if (v != vocab.sos_id() && v != vocab.eos_id()) out.push_back(v);
  }
  return out;
}

std::vector<TokenId> aed_candidates(const Vocabulary& vocab) {
  std::vector<TokenId> out;
  for (TokenId v = 0; v < vocab.size(); ++v) {
    if (v != vocab.sos_id()) out.push_back(v);
  }
  return out;
}

DecodeResult beam_search_rnnt(const Tensor& features, const DecodeModels& models,
                              const FusionConfig& config, const SearchOptions& options) {
  if (!models.rnnt) throw ContractError("RNN-T search needs an RNN-T model");
  check_search_inputs(models, config, options);
  if (options.max_symbols_per_frame < 0) throw ContractError("max_symbols_per_frame < 0");
  if (features.rank() != 2 || features.rows() < 1) {
    throw ContractError("cannot decode an empty feature matrix");
  }
  const auto start = Clock::now();
  RnntSearch search(models, config, options);
  DecodeResult result;
  result.nbest = search.run(models.rnnt->encode(features));
  finalize_nbest(result.nbest, options);
  result.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

DecodeResult beam_search_aed(const Tensor& features, const DecodeModels& models,
                             const FusionConfig& config, const SearchOptions& options) {
  if (!models.aed) throw ContractError("AED search needs an AED model");
  check_search_inputs(models, config, options);
  if (features.rank() != 2 || features.rows() < 1) {
    throw ContractError("cannot decode an empty feature matrix");
  }
  const auto start = Clock::now();
  const AedModel& aed = *models.aed;
  const TokenId eos = aed.vocabulary().eos_id();
  const auto candidates = aed_candidates(aed.vocabulary());
  const auto memory = aed.prepare(aed.encode(features));
  const int max_len = options.max_len > 0 ? options.max_len : static_cast<int>(features.rows());

  AedHyp init;
  init.dec = aed.initial_state(memory);
  if (models.target_lm) init.ext_state = models.target_lm->initial_state();
  if (models.source_lm) init.src_state = models.source_lm->initial_state();
  init.ilm_state = aed.ilm_initial_state();
  init.fused = fused_of(0.0, 0.0, 0.0, config);

  std::vector<AedHyp> active{init};
  std::vector<AedHyp> finished;
  // Future steps can only lower the fused score when nothing is subtracted.
  const bool monotone = config.effective_sub_weight() == 0.0;

  for (int step = 0; step <= max_len && !active.empty(); ++step) {
    std::vector<AedHyp> pool = std::move(finished);
    for (const auto& h : active) {
      auto d = aed.decoder_step(h.dec, memory);
      const auto lp = kernels::log_softmax(d.logits);
      LmStepResult ext_r;
      LmStepResult src_r;
      AedIlmStepResult ilm_r;
      if (config.uses_target_lm()) ext_r = models.target_lm->step(h.ext_state);
      if (config.method == FusionMethod::kDensityRatio) src_r = models.source_lm->step(h.src_state);
      if (config.method == FusionMethod::kIlme) ilm_r = aed.ilm_step(h.ilm_state);
      const auto& sub_lp =
          config.method == FusionMethod::kDensityRatio ? src_r.log_probs : ilm_r.log_probs;

      for (TokenId v : candidates) {
        if (step == max_len && v != eos) continue;
        const StepScores s{lp[v], ext_r.log_probs.empty() ? 0.0 : ext_r.log_probs[v],
                           sub_lp.empty() ? 0.0 : sub_lp[v]};
        AedHyp child;
        child.tokens = h.tokens;
        child.e2e = h.e2e + s.e2e_logp;
        child.ext = h.ext + s.ext_lm_logp;
        child.sub = h.sub + s.sub_lm_logp;
        child.fused = fused_of(child.e2e, child.ext, child.sub, config);
        if (options.trace) {
          options.trace->push_back({step, h.tokens, v, false, s, h.fused, child.fused});
        }
        if (v == eos) {
          child.finished = true;
        } else {
          child.tokens.push_back(v);
          child.dec = d.state;
          child.dec.last_token = v;
          if (config.uses_target_lm()) child.ext_state = {ext_r.state.layers, v};
          if (config.method == FusionMethod::kDensityRatio) child.src_state = {src_r.state.layers, v};
          if (config.method == FusionMethod::kIlme) child.ilm_state = {ilm_r.state.layers, v};
        }
        pool.push_back(std::move(child));
      }
    }
    std::sort(pool.begin(), pool.end(), aed_ranks_before);
    if (pool.size() > static_cast<std::size_t>(options.beam)) {
      pool.resize(static_cast<std::size_t>(options.beam));
    }
    active.clear();
    finished.clear();
    for (auto& h : pool) (h.finished ? finished : active).push_back(std::move(h));
    if (monotone && !finished.empty() && !active.empty() &&
        finished.front().fused >= active.front().fused) {
      break;
    }
  }

  DecodeResult result;
  for (auto& h : finished) result.nbest.push_back({std::move(h.tokens), h.fused, h.e2e, h.ext, h.sub});
  finalize_nbest(result.nbest, options);
  result.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

Hypothesis rescore_rnnt(const Sequence& encoded, const std::vector<TokenId>& labels,
                        const DecodeModels& models, const FusionConfig& config) {
  Hypothesis h;
  h.tokens = labels;
  h.e2e = models.rnnt->sequence_logprob_encoded(encoded, labels);
  if (config.uses_target_lm()) h.ext_lm = models.target_lm->sequence_logprob(labels, false);
  if (config.method == FusionMethod::kDensityRatio) {
    h.sub_lm = models.source_lm->sequence_logprob(labels, false);
  } else if (config.method == FusionMethod::kIlme) {
    h.sub_lm = models.rnnt->ilm_sequence_logprob(labels);
  }
  h.fused = fused_of(h.e2e, h.ext_lm, h.sub_lm, config);
  return h;
}

Hypothesis rescore_aed(const EncoderMemory& memory, const std::vector<TokenId>& labels,
                       const DecodeModels& models, const FusionConfig& config) {
  Hypothesis h;
  h.tokens = labels;
  h.e2e = models.aed->sequence_logprob_memory(memory, labels);
  if (config.uses_target_lm()) h.ext_lm = models.target_lm->sequence_logprob(labels, true);
  if (config.method == FusionMethod::kDensityRatio) {
    h.sub_lm = models.source_lm->sequence_logprob(labels, true);
  } else if (config.method == FusionMethod::kIlme) {
    h.sub_lm = models.aed->ilm_sequence_logprob(labels);
  }
  h.fused = fused_of(h.e2e, h.ext_lm, h.sub_lm, config);
  return h;
}

namespace {

constexpr double kExhaustiveBudget = 1e6;

// Calls `visit` for every sequence over `alphabet` with length <= cap, in
// length-then-lexicographic order.
template <typename F>
void enumerate_sequences(const std::vector<TokenId>& alphabet, int cap, F&& visit) {
  std::vector<TokenId> seq;
  for (int len = 0; len <= cap; ++len) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(len), 0);
    while (true) {
      seq.resize(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i) seq[i] = alphabet[idx[i]];
      visit(seq);
      int pos = len - 1;
      while (pos >= 0 && ++idx[pos] == alphabet.size()) idx[pos--] = 0;
      if (pos < 0) break;
    }
  }
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

void keep_if_better(Hypothesis& best, bool& have, Hypothesis candidate) {
  if (!have || hypothesis_before(candidate, best)) {
    best = std::move(candidate);
    have = true;
  }
}

}  // namespace

Hypothesis exhaustive_search_rnnt(const Tensor& features, const DecodeModels& models,
                                  const FusionConfig& config, int u_cap) {
  if (!models.rnnt) throw ContractError("exhaustive RNN-T search needs an RNN-T model");
  validate_config(config, models.roles());
  if (u_cap < 0) throw ContractError("u_cap must be non-negative");
  const auto alphabet = rnnt_candidates(models.rnnt->vocabulary());
  const int frames = static_cast<int>(features.rank() == 2 ? features.rows() : 0);
  if (frames < 1) throw ContractError("cannot search an empty feature matrix");
  const double cost = std::pow(static_cast<double>(alphabet.size()), u_cap) *
                      binomial(frames + u_cap, u_cap);
  if (cost > kExhaustiveBudget) {
    throw ContractError("exhaustive search budget exceeded (" + std::to_string(cost) + " > 1e6)");
  }
  const auto encoded = models.rnnt->encode(features);
  Hypothesis best;
  bool have = false;
  enumerate_sequences(alphabet, u_cap, [&](const std::vector<TokenId>& y) {
    keep_if_better(best, have, rescore_rnnt(encoded, y, models, config));
  });
  return best;
}

Hypothesis exhaustive_search_aed(const Tensor& features, const DecodeModels& models,
                                 const FusionConfig& config, int max_len) {
  if (!models.aed) throw ContractError("exhaustive AED search needs an AED model");
  validate_config(config, models.roles());
  if (max_len < 0) throw ContractError("max_len must be non-negative");
  std::vector<TokenId> alphabet;
  for (auto v : aed_candidates(models.aed->vocabulary())) {
    if (v != models.aed->vocabulary().eos_id()) alphabet.push_back(v);
  }
  const double cost = std::pow(static_cast<double>(alphabet.size()), max_len) * (max_len + 1);
  if (cost > kExhaustiveBudget) {
    throw ContractError("exhaustive search budget exceeded (" + std::to_string(cost) + " > 1e6)");
  }
  if (features.rank() != 2 || features.rows() < 1) {
    throw ContractError("cannot search an empty feature matrix");
  }
  const auto memory = models.aed->prepare(models.aed->encode(features));
  Hypothesis best;
  bool have = false;
  enumerate_sequences(alphabet, max_len, [&](const std::vector<TokenId>& y) {
    keep_if_better(best, have, rescore_aed(memory, y, models, config));
  });
  return best;
}

}  // namespace ilmfuse
