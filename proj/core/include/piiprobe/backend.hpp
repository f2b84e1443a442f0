#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "piiprobe/tokenizer.hpp"

namespace piiprobe {

enum class FinishReason { Stop, MaxTokens };

std::string to_string(FinishReason reason);

struct GenerationResult {
    std::string text;
    std::vector<TokenId> token_ids;        // emitted text tokens, EOS excluded
    std::vector<double> token_logprobs;    // natural log, one per emitted token
    FinishReason finish_reason = FinishReason::MaxTokens;

    // Sum of the emitted tokens' logprobs. For beams that stopped at EOS the
    // internal ranking score additionally paid the EOS logprob; this reported
    // total matches score(prompt, text) by construction.
    double total_logprob() const;
};

struct DecodeParams {
    enum class Strategy { Greedy, Beam };
    Strategy strategy = Strategy::Greedy;
    int beam_size = 1;
    int max_new_tokens = 16;

    static DecodeParams greedy(int max_new_tokens);
    static DecodeParams beam(int beam_size, int max_new_tokens);

    int effective_beam() const {
        return strategy == Strategy::Greedy ? 1 : beam_size;
    }
    void validate() const;  // beam_size >= 1, max_new_tokens >= 1
};

// A local next-token model over the fixed character vocabulary. Both
// embedded reference models implement this; the decode/score machinery below
// is shared so they behave identically behind the backend contract.
class ConditionalLm {
public:
    virtual ~ConditionalLm() = default;
    virtual std::string model_id() const = 0;
    // Natural-log conditional distribution over all 98 tokens.
    virtual std::vector<double> next_logprobs(std::span<const TokenId> context) const = 0;
};

// Teacher-forced per-token logprobs of `continuation` after `prompt`.
std::vector<double> score_tokens(const ConditionalLm& lm, const std::string& prompt,
                                 const std::string& continuation);

// Beam search (greedy is beam 1). Expansion keeps the top beam_size
// candidates by total logprob, ties broken by lower token id then lower
// parent beam index; a beam halts on EOS or max_new_tokens. Results are
// ordered by internal score descending, then token ids lexicographically.
std::vector<GenerationResult> decode(const ConditionalLm& lm, const std::string& prompt,
                                     const DecodeParams& params);

// The scoring/generation contract shared by embedded models and the HTTP
// client, so probing code runs unchanged against either.
class LmBackend {
public:
    virtual ~LmBackend() = default;
    virtual std::string model_id() const = 0;
    virtual std::vector<double> score(const std::string& prompt,
                                      const std::string& continuation) const = 0;
    virtual std::vector<GenerationResult> generate(const std::string& prompt,
                                                   const DecodeParams& params) const = 0;
};

class LocalBackend : public LmBackend {
public:
    explicit LocalBackend(std::shared_ptr<const ConditionalLm> lm) : lm_(std::move(lm)) {}

    std::string model_id() const override { return lm_->model_id(); }
    std::vector<double> score(const std::string& prompt,
                              const std::string& continuation) const override {
        return score_tokens(*lm_, prompt, continuation);
    }
    std::vector<GenerationResult> generate(const std::string& prompt,
                                           const DecodeParams& params) const override {
        return decode(*lm_, prompt, params);
    }
    const ConditionalLm& model() const { return *lm_; }

private:
    std::shared_ptr<const ConditionalLm> lm_;
};

} // namespace piiprobe
