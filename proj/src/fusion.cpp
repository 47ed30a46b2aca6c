#include "ilmfuse/fusion.hpp"

#include <cmath>

#include "ilmfuse/error.hpp"

namespace ilmfuse {

FusionMethod parse_fusion_method(std::string_view name) {
  if (name == "baseline") return FusionMethod::kBaseline;
  if (name == "shallow_fusion" || name == "shallow-fusion") return FusionMethod::kShallowFusion;
  if (name == "density_ratio" || name == "density-ratio") return FusionMethod::kDensityRatio;
  if (name == "ilme") return FusionMethod::kIlme;
  throw ConfigError("unknown fusion method \"" + std::string(name) + "\"");
}

std::string fusion_method_name(FusionMethod method) {
  switch (method) {
    case FusionMethod::kBaseline: return "baseline";
    case FusionMethod::kShallowFusion: return "shallow_fusion";
    case FusionMethod::kDensityRatio: return "density_ratio";
    case FusionMethod::kIlme: return "ilme";
  }
  return "?";
}

double FusionConfig::effective_lm_weight() const {
  return method == FusionMethod::kBaseline ? 0.0 : lm_weight;
}

double FusionConfig::effective_sub_weight() const { return uses_sub_lm() ? sub_weight : 0.0; }

void validate_weights(const FusionConfig& config) {
  if (!std::isfinite(config.lm_weight) || config.lm_weight < 0.0) {
    throw ConfigError("LM weight must be a finite non-negative number");
  }
  if (!std::isfinite(config.sub_weight) || config.sub_weight < 0.0) {
    throw ConfigError("subtraction weight must be a finite non-negative number");
  }
}

double fuse_step(const StepScores& scores, const FusionConfig& config, bool is_blank) {
  validate_weights(config);
  if (is_blank || config.method == FusionMethod::kBaseline) return scores.e2e_logp;
  return scores.e2e_logp + config.effective_lm_weight() * scores.ext_lm_logp -
         config.effective_sub_weight() * scores.sub_lm_logp;
}

void validate_config(const FusionConfig& config, const LoadedRoles& roles) {
  validate_weights(config);
  if (config.uses_target_lm() && !roles.target_lm) throw ConfigError("target LM required");
  if (config.method == FusionMethod::kDensityRatio && !roles.source_lm) {
    throw ConfigError("source LM required");
  }
}

}  // namespace ilmfuse
