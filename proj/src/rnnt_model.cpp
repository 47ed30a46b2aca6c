#include "ilmfuse/rnnt_model.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "ilmfuse/error.hpp"

namespace ilmfuse {

LstmCellParams load_cell(const ModelContainer& c, const std::string& prefix) {
  LstmCellParams p{c.tensor(prefix + ".W_ih"), c.tensor(prefix + ".W_hh"),
                   c.tensor(prefix + ".b_ih"), c.tensor(prefix + ".b_hh")};
  p.validate();
  return p;
}

Sequence feature_rows(const Tensor& features, std::int64_t dim) {
  if (features.rank() != 2) throw DimensionError("features must be a [T, dim] matrix");
  if (features.cols() != dim) {
    throw DimensionError("feature dimension " + std::to_string(features.cols()) +
                         " does not match model feature_dim " + std::to_string(dim));
  }
  if (features.rows() < 1) throw ContractError("feature matrix has no frames");
  Sequence rows;
  rows.reserve(static_cast<std::size_t>(features.rows()));
  for (std::int64_t t = 0; t < features.rows(); ++t) {
    auto r = features.row(t);
    rows.emplace_back(r.begin(), r.end());
  }
  return rows;
}

std::uint64_t rnnt_alignment_count(int frames, int labels) {
  // C(frames - 1 + labels, labels); the final blank is fixed.
  std::uint64_t n = 1;
  for (int k = 1; k <= labels; ++k) n = n * static_cast<std::uint64_t>(frames - 1 + k) / k;
  return n;
}

namespace {

OutputTransform optional_transform(const ModelContainer& c, const std::string& prefix,
                                   bool present) {
  OutputTransform out;
  if (!present) return out;
  if (c.has(prefix + ".ln.gamma")) {
    out.ln_gamma = c.tensor(prefix + ".ln.gamma");
    out.ln_beta = c.tensor(prefix + ".ln.beta");
  }
  out.proj_w = c.tensor(prefix + ".proj.W");
  out.proj_b = c.tensor(prefix + ".proj.b");
  return out;
}

// Layer norm precedes the projection on the encoder and prediction outputs,
// the reverse of OutputTransform::apply.
Vector norm_then_project(const OutputTransform& t, std::span<const float> x) {
  Vector y(x.begin(), x.end());
  if (t.ln_gamma) y = kernels::layer_norm(y, t.ln_gamma->data(), t.ln_beta->data());
  if (t.proj_w) y = kernels::affine(y, *t.proj_w, t.proj_b->data());
  return y;
}

}  // namespace

RnntModel::RnntModel(const ModelContainer& c) {
  if (c.kind != ModelKind::kRnnt) {
    throw ContractError("expected an rnnt container, got " + model_kind_name(c.kind));
  }
  validate_container(c);
  vocab_ = c.vocabulary;
  feature_dim_ = c.hp_int("feature_dim");
  activation_ = kernels::parse_activation(c.hp_string("activation"));
  for (std::int64_t k = 0; k < c.hp_int("enc_layers"); ++k) {
    encoder_.push_back({load_cell(c, "enc.l" + std::to_string(k)), std::nullopt, {}});
  }
  encoder_out_ = optional_transform(c, "enc", c.hp_int("enc_out_dim") > 0);
  embedding_ = c.tensor("pred.embed");
  for (std::int64_t k = 0; k < c.hp_int("pred_layers"); ++k) {
    prediction_.push_back({load_cell(c, "pred.l" + std::to_string(k)), std::nullopt, {}});
  }
  prediction_out_ = optional_transform(c, "pred", c.hp_int("pred_out_dim") > 0);
  w_e_ = c.tensor("joint.W_e");
  b_e_ = c.tensor("joint.b_e");
  w_p_ = c.tensor("joint.W_p");
  b_p_ = c.tensor("joint.b_p");
  w_j_ = c.tensor("joint.W_j");
  b_j_ = c.tensor("joint.b_j");
}

Sequence RnntModel::encode(const Tensor& features) const {
  Sequence h = lstm_stack_forward(feature_rows(features, feature_dim_), encoder_, false);
  if (!encoder_out_.empty()) {
    for (auto& v : h) v = norm_then_project(encoder_out_, v);
  }
  return h;
}

Sequence RnntModel::acoustic_terms(const Sequence& encoded) const {
  Sequence f;
  f.reserve(encoded.size());
  for (const auto& h : encoded) f.push_back(kernels::affine(h, w_e_, b_e_.data()));
  return f;
}

Vector RnntModel::language_term(std::span<const float> h_pred) const {
  return kernels::affine(h_pred, w_p_, b_p_.data());
}

PredictionState RnntModel::zero_state() const {
  return {zero_states(prediction_), vocab_.sos_id(), {}};
}

PredictionState RnntModel::initial_state() const {
  return prediction_step(vocab_.sos_id(), zero_state()).second;
}

std::pair<Vector, PredictionState> RnntModel::prediction_step(TokenId prev_token,
                                                             const PredictionState& state) const {
  if (prev_token == blank_id()) {
    throw ContractError("prediction network cannot consume the blank token");
  }
  if (!vocab_.is_regular(prev_token)) {
    throw ContractError("token id " + std::to_string(prev_token) + " out of range");
  }
  PredictionState next;
  next.layers = state.layers;
  next.last_token = prev_token;
  Vector top = lstm_stack_step(embedding_.row(prev_token), prediction_, next.layers);
  next.h_pred = prediction_out_.empty() ? std::move(top) : norm_then_project(prediction_out_, top);
  Vector out = next.h_pred;
  return {std::move(out), std::move(next)};
}

Vector RnntModel::joint_hidden_to_logits(Vector hidden) const {
  kernels::apply_activation(hidden, activation_);
  auto z = kernels::affine(hidden, w_j_, b_j_.data());
  require_finite(z, "joint logits");
  return z;
}

Vector RnntModel::joint_from_terms(std::span<const float> acoustic,
                                   std::span<const float> language) const {
  return joint_hidden_to_logits(kernels::add(acoustic, language));
}

Vector RnntModel::joint_step(std::span<const float> h_enc, std::span<const float> h_pred) const {
  const auto f = kernels::affine(h_enc, w_e_, b_e_.data());
  const auto g = kernels::affine(h_pred, w_p_, b_p_.data());
  return joint_from_terms(f, g);
}

std::vector<double> RnntModel::step_distribution(std::span<const float> h_enc,
                                                 std::span<const float> h_pred) const {
  return kernels::softmax(joint_step(h_enc, h_pred));
}

void RnntModel::check_labels(std::span<const TokenId> labels) const {
  for (auto y : labels) {
    if (!vocab_.is_regular(y)) {
      throw ContractError("label " + std::to_string(y) + " is not a regular token");
    }
  }
}

double RnntModel::sequence_logprob(const Tensor& features, std::span<const TokenId> labels) const {
  return sequence_logprob_encoded(encode(features), labels);
}

double RnntModel::sequence_logprob_encoded(const Sequence& encoded,
                                           std::span<const TokenId> labels) const {
  check_labels(labels);
  const auto T = encoded.size();
  const auto U = labels.size();
  if (T == 0) throw ContractError("sequence_logprob needs at least one frame");
  if (U > static_cast<std::size_t>(kMaxLabelsPerFrame) * T) {
    throw ContractError("label sequence of length " + std::to_string(U) +
                        " exceeds the per-frame cap for " + std::to_string(T) + " frames");
  }

  const auto f = acoustic_terms(encoded);
  std::vector<Vector> g;
  g.reserve(U + 1);
  PredictionState state = initial_state();
  g.push_back(language_term(state.h_pred));
  for (std::size_t u = 0; u < U; ++u) {
    state = prediction_step(labels[u], state).second;
    g.push_back(language_term(state.h_pred));
  }

  // blank[t][u] and emit[t][u] = log P(y_{u+1} | t, u).
  const TokenId blank = blank_id();
  std::vector<std::vector<double>> lp_blank(T, std::vector<double>(U + 1));
  std::vector<std::vector<double>> lp_emit(T, std::vector<double>(U + 1));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      const auto lp = kernels::log_softmax(joint_from_terms(f[t], g[u]));
      lp_blank[t][u] = lp[blank];
      if (u < U) lp_emit[t][u] = lp[labels[u]];
    }
  }

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> alpha(T, std::vector<double>(U + 1, kNegInf));
  alpha[0][0] = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      const double from_left = t > 0 ? alpha[t - 1][u] + lp_blank[t - 1][u] : kNegInf;
      const double from_below = u > 0 ? alpha[t][u - 1] + lp_emit[t][u - 1] : kNegInf;
      alpha[t][u] = kernels::log_add(from_left, from_below);
    }
  }
  return alpha[T - 1][U] + lp_blank[T - 1][U];
}

double RnntModel::bruteforce_logprob(const Tensor& features,
                                     std::span<const TokenId> labels) const {
  check_labels(labels);
  const auto encoded = encode(features);
  const int T = static_cast<int>(encoded.size());
  const int U = static_cast<int>(labels.size());
  if (T + U > kBruteForceCap) {
    throw ContractError("brute-force enumeration limited to T + U <= " +
                        std::to_string(kBruteForceCap));
  }

  std::vector<Vector> h_pred;
  PredictionState state = initial_state();
  h_pred.push_back(state.h_pred);
  for (int u = 0; u < U; ++u) {
    state = prediction_step(labels[u], state).second;
    h_pred.push_back(state.h_pred);
  }

  // Each path interleaves T-1 blanks with U labels, then ends with the
  // blank that leaves frame T. Bit i of `mask` set means step i emits.
  const int steps = T - 1 + U;
  std::vector<double> path_scores;
  for (std::uint32_t mask = 0; mask < (1u << steps); ++mask) {
    if (std::popcount(mask) != U) continue;
    int t = 0;
    int u = 0;
    double score = 0.0;
    for (int i = 0; i < steps; ++i) {
      const auto p = step_distribution(encoded[t], h_pred[u]);
      if (mask & (1u << i)) {
        score += std::log(p[labels[u]]);
        ++u;
      } else {
        score += std::log(p[blank_id()]);
        ++t;
      }
    }
    score += std::log(step_distribution(encoded[t], h_pred[u])[blank_id()]);
    path_scores.push_back(score);
  }
  return kernels::log_sum_exp(path_scores);
}

std::vector<double> RnntModel::ilm_log_probs(std::span<const float> language_term) const {
  Vector hidden(language_term.begin(), language_term.end());
  Vector z = joint_hidden_to_logits(std::move(hidden));
  z.pop_back();  // blank row
  return kernels::log_softmax(z);
}

std::vector<double> RnntModel::ilm_step(const PredictionState& state) const {
  if (state.h_pred.empty()) throw ContractError("prediction state has not consumed <sos>");
  Vector hidden = language_term(state.h_pred);
  Vector z = joint_hidden_to_logits(std::move(hidden));
  z.pop_back();
  return kernels::softmax(z);
}

double RnntModel::ilm_sequence_logprob(std::span<const TokenId> labels) const {
  check_labels(labels);
  double total = 0.0;
  PredictionState state = initial_state();
  for (auto y : labels) {
    total += ilm_log_probs(language_term(state.h_pred))[y];
    state = prediction_step(y, state).second;
  }
  return total;
}

}  // namespace ilmfuse
