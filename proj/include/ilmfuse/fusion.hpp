#pragma once

#include <string>
#include <string_view>

namespace ilmfuse {

enum class FusionMethod { kBaseline, kShallowFusion, kDensityRatio, kIlme };

/// Accepts "baseline", "shallow_fusion", "density_ratio", "ilme" and the
/// hyphenated spellings. Throws ConfigError otherwise.
FusionMethod parse_fusion_method(std::string_view name);
std::string fusion_method_name(FusionMethod method);

/// `lm_weight` scales the target-domain LM. `sub_weight` scales the
/// subtracted LM: the source-domain LM for density_ratio, the internal-LM
/// estimate for ilme. Baseline uses neither weight; shallow_fusion ignores
/// `sub_weight`.
struct FusionConfig {
  FusionMethod method = FusionMethod::kBaseline;
  double lm_weight = 0.0;
  double sub_weight = 0.0;

  /// Weights as they enter the score after the method's forced zeros.
  double effective_lm_weight() const;
  double effective_sub_weight() const;
  bool uses_target_lm() const { return method != FusionMethod::kBaseline; }
  bool uses_sub_lm() const {
    return method == FusionMethod::kDensityRatio || method == FusionMethod::kIlme;
  }
};

/// Log scores for one candidate (or, summed, for one hypothesis).
struct StepScores {
  double e2e_logp = 0.0;
  double ext_lm_logp = 0.0;
  double sub_lm_logp = 0.0;
};

/// Throws ConfigError on negative or non-finite weights.
void validate_weights(const FusionConfig& config);

/// e2e + lm_weight * ext - sub_weight * sub, with the method's forced
/// zeros. Blank candidates return e2e untouched for every method.
double fuse_step(const StepScores& scores, const FusionConfig& config, bool is_blank);

/// Which LM roles are loaded for a run.
struct LoadedRoles {
  bool target_lm = false;
  bool source_lm = false;
};

/// Throws ConfigError("target LM required") / ("source LM required") when
/// the method needs a model that is not loaded.
void validate_config(const FusionConfig& config, const LoadedRoles& roles);

}  // namespace ilmfuse
