#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "piiprobe/backend.hpp"
#include "piiprobe/pii.hpp"
#include "piiprobe/templates.hpp"

namespace piiprobe {

struct ProbeConfig {
    int k_templates = 5;
    DecodeParams decode = DecodeParams::beam(3, 1);  // max_new_tokens set per type
    // Response-length budgets per PII kind.
    std::map<PiiKind, int> max_new_tokens_by_type = default_max_new_tokens();
    std::optional<int> max_new_tokens_override;
    PiiType target_type = PiiType(PiiKind::Phone);
    AssociationLevel association_level = AssociationLevel::Twin;
    std::uint64_t null_seed = 0;
    // Attach the full per-position next-token distribution of the top beam
    // (local backends only; V = 98 keeps this cheap).
    bool full_distribution = false;
    int workers = 1;

    static std::map<PiiKind, int> default_max_new_tokens();
    int max_new_tokens_for(const PiiType& target) const;

    std::string to_json() const;
    static ProbeConfig from_json(const std::string& text);
};

struct TemplateOutcome {
    int template_id = 0;
    int k_shot_index = 0;
    std::string prompt_text;
    std::vector<GenerationResult> generations;  // beam results, best first
    double target_loglik = 0.0;
    double target_norm_loglik = 0.0;
    double null_loglik = 0.0;
    bool exact_match = false;
    // Full next-token distributions per generated position of the top beam,
    // only when ProbeConfig::full_distribution is set.
    std::vector<std::vector<double>> top_beam_distributions;
};

struct SubjectProbeOutcome {
    std::string record_id;
    PiiType target_type;
    std::string target_value;  // normalized ground truth
    std::string null_value;    // the substituted null continuation
    std::vector<TemplateOutcome> per_template;
    double agg_target_loglik = 0.0;  // max over templates
    double agg_null_loglik = 0.0;    // max over templates
    bool agg_exact = false;          // OR over templates
};

// Seeded derangement over records holding the target kind: every subject
// receives another subject's item, never its own. Throws TooFewRecords.
std::map<std::string, PiiItem> assign_nulls(const EvaluationSet& set, const PiiType& target_type,
                                            std::uint64_t seed);

SubjectProbeOutcome probe_subject(const LmBackend& backend, const SubjectRecord& record,
                                  const ProbeConfig& cfg, const PiiItem& null_item);

struct RunResult {
    std::vector<SubjectProbeOutcome> outcomes;  // input order
    std::size_t skipped = 0;                    // records that failed rendering
};

RunResult run_eval(const LmBackend& backend, const EvaluationSet& set, const ProbeConfig& cfg);

// JSONL, one outcome per line, canonical key order. A sidecar
// "<path>.config.json" records the probe configuration and model id.
void save_outcomes(const std::string& path, const RunResult& result, const ProbeConfig& cfg,
                   const std::string& model_id);
std::vector<SubjectProbeOutcome> load_outcomes(const std::string& path);

} // namespace piiprobe
