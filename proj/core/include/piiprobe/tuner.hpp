#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "piiprobe/neural.hpp"
#include "piiprobe/pii.hpp"
#include "piiprobe/soft_prompt.hpp"
#include "piiprobe/templates.hpp"

namespace piiprobe {

struct TuneConfig {
    int soft_tokens = 20;
    int epochs = 700;
    AdamWConfig adamw{0.005, 0.9, 0.999, 1e-8, 0.01};
    int subset_size = 0;  // 0 = the whole tuning set; otherwise its first n records
    int template_id = 1;
    AssociationLevel level = AssociationLevel::Triplet;
    PiiType target_type = PiiType(PiiKind::Phone);
    InitScheme init = InitScheme::PiiTypeWord;
    std::uint64_t seed = 0;
    int max_new_tokens = 0;  // 0 = per-type default (phone 12, email 20, address 30, ...)

    int resolve_max_new_tokens(const PiiType& target) const;
};

// The tuner's training subjects (D-tilde); record ids must be disjoint from
// the evaluation set the prompt is later judged on.
struct TuningSet {
    std::vector<SubjectRecord> records;

    static TuningSet from_eval_set(const EvaluationSet& set, int subset_size = 0);
    void check_disjoint(const EvaluationSet& eval) const;
};

struct EpochStats {
    int epoch = 0;          // 0 is the initialization snapshot
    double mean_nll = 0.0;  // per-sequence NLL summed over tokens, mean over records
    int exact_count = 0;    // greedy exact matches on the tuning set
};

struct TuneResult {
    SoftPrompt best;
    int best_epoch = 0;
    std::vector<EpochStats> trace;
};

// Full-batch AdamW on the soft prompt against the frozen model. The epoch
// gradient is the mean of grad_wrt_soft over the tuning records in fixed
// order; after every update the snapshot is scored by greedy decoding, and
// the returned prompt is the snapshot with the highest exact-match count
// (ties: lower mean NLL, then earlier epoch; the initialization counts as
// epoch 0).
TuneResult tune(const TinyNeuralLm& model, const TuningSet& dtilde, const TuneConfig& cfg);

// CSV sidecar: epoch,nll,exact_count.
void save_trace_csv(const std::string& path, const std::vector<EpochStats>& trace);
std::vector<EpochStats> load_trace_csv(const std::string& path);

struct SoftEvalRow {
    std::string record_id;
    bool exact = false;
    double target_loglik = 0.0;
    std::string generated;
};

struct SoftEvalResult {
    std::vector<SoftEvalRow> rows;
    std::size_t exact_count = 0;
    double mean_target_loglik = 0.0;
    double mean_nll = 0.0;  // -mean_target_loglik, kept for symmetry with tune traces
    std::size_t skipped = 0;
};

// Greedy decoding with the soft prompt prepended to the single configured
// template, plus teacher-forced target log-likelihoods.
SoftEvalResult eval_soft(const TinyNeuralLm& model, const SoftPrompt& soft,
                         const EvaluationSet& set, const TuneConfig& cfg);

// Backend-typed entry point: throws Error unless the backend wraps an
// embedding-space model (soft prompts are meaningless for the n-gram).
SoftEvalResult eval_soft(const LmBackend& backend, const SoftPrompt& soft,
                         const EvaluationSet& set, const TuneConfig& cfg);

// Black-box counterpart used for the handcrafted-vs-tuned comparison: greedy
// template-`template_id` probing without any prefix.
SoftEvalResult eval_handcrafted(const LmBackend& backend, const EvaluationSet& set,
                                const TuneConfig& cfg);

struct TransferRow {
    std::string model_id;
    std::string prefix;
    double mean_plain_loglik = 0.0;
    double mean_prefixed_loglik = 0.0;
    // log-likelihood shift; exp of it is the paper-style amplification factor
    double log_amplification = 0.0;
};

// Scores every renderable record's target with and without the projected
// hard-token prefix concatenated ahead of the raw prompt.
TransferRow transfer_row(const LmBackend& backend, const EvaluationSet& set,
                         const TuneConfig& cfg, const std::string& prefix);

} // namespace piiprobe
