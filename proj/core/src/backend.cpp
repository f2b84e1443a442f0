#include "piiprobe/backend.hpp"

#include <algorithm>
#include <numeric>

#include "piiprobe/errors.hpp"

namespace piiprobe {

std::string to_string(FinishReason reason) {
    return reason == FinishReason::Stop ? "stop" : "length";
}

double GenerationResult::total_logprob() const {
    return std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0);
}

DecodeParams DecodeParams::greedy(int max_new_tokens) {
    DecodeParams p;
    p.strategy = Strategy::Greedy;
    p.beam_size = 1;
    p.max_new_tokens = max_new_tokens;
    return p;
}

DecodeParams DecodeParams::beam(int beam_size, int max_new_tokens) {
    DecodeParams p;
    p.strategy = Strategy::Beam;
    p.beam_size = beam_size;
    p.max_new_tokens = max_new_tokens;
    return p;
}

void DecodeParams::validate() const {
    if (beam_size < 1) throw Error("beam_size must be >= 1");
    if (max_new_tokens < 1) throw Error("max_new_tokens must be >= 1");
}

std::vector<double> score_tokens(const ConditionalLm& lm, const std::string& prompt,
                                 const std::string& continuation) {
    if (continuation.empty()) throw EmptyContinuation("cannot score an empty continuation");
    std::vector<TokenId> ids = Tokenizer::encode(prompt);
    std::vector<TokenId> cont = Tokenizer::encode_raw(continuation);
    std::vector<double> out;
    out.reserve(cont.size());
    for (TokenId t : cont) {
        std::vector<double> lp = lm.next_logprobs(ids);
        out.push_back(lp[static_cast<std::size_t>(t)]);
        ids.push_back(t);
    }
    return out;
}

namespace {

struct Beam {
    std::vector<TokenId> generated;      // text tokens, EOS never stored
    std::vector<double> logprobs;        // aligned with generated
    double score = 0.0;                  // includes the EOS step when stopped
    bool finished = false;
    FinishReason reason = FinishReason::MaxTokens;
};

struct Candidate {
    double score;
    TokenId token;    // -1 marks a finished beam carried over
    std::size_t parent;
    double token_logprob;
};

bool candidate_less(const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.token != b.token) return a.token < b.token;
    return a.parent < b.parent;
}

} // namespace

std::vector<GenerationResult> decode(const ConditionalLm& lm, const std::string& prompt,
                                     const DecodeParams& params) {
    params.validate();
    const std::size_t width = static_cast<std::size_t>(params.effective_beam());
    const std::vector<TokenId> prompt_ids = Tokenizer::encode(prompt);

    std::vector<Beam> beams(1);
    for (int step = 0; step < params.max_new_tokens; ++step) {
        bool all_done = std::all_of(beams.begin(), beams.end(),
                                    [](const Beam& b) { return b.finished; });
        if (all_done) break;

        std::vector<Candidate> candidates;
        candidates.reserve(beams.size() * static_cast<std::size_t>(Tokenizer::kVocabSize));
        std::vector<TokenId> context;
        for (std::size_t bi = 0; bi < beams.size(); ++bi) {
            const Beam& b = beams[bi];
            if (b.finished) {
                candidates.push_back(Candidate{b.score, -1, bi, 0.0});
                continue;
            }
            context.assign(prompt_ids.begin(), prompt_ids.end());
            context.insert(context.end(), b.generated.begin(), b.generated.end());
            std::vector<double> lp = lm.next_logprobs(context);
            for (TokenId t = 0; t < Tokenizer::kVocabSize; ++t) {
                candidates.push_back(
                    Candidate{b.score + lp[static_cast<std::size_t>(t)], t, bi,
                              lp[static_cast<std::size_t>(t)]});
            }
        }
        std::size_t keep = std::min(width, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                          candidates.end(), candidate_less);

        std::vector<Beam> next;
        next.reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) {
            const Candidate& c = candidates[i];
            Beam b = beams[c.parent];
            if (c.token == -1) {
                next.push_back(std::move(b));
                continue;
            }
            b.score = c.score;
            if (c.token == Tokenizer::kEos) {
                b.finished = true;
                b.reason = FinishReason::Stop;
            } else {
                b.generated.push_back(c.token);
                b.logprobs.push_back(c.token_logprob);
            }
            next.push_back(std::move(b));
        }
        beams = std::move(next);
    }

    std::sort(beams.begin(), beams.end(), [](const Beam& a, const Beam& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.generated < b.generated;
    });

    std::vector<GenerationResult> results;
    results.reserve(beams.size());
    for (auto& b : beams) {
        GenerationResult r;
        r.text = Tokenizer::decode(b.generated);
        r.token_ids = std::move(b.generated);
        r.token_logprobs = std::move(b.logprobs);
        r.finish_reason = b.finished && b.reason == FinishReason::Stop ? FinishReason::Stop
                                                                       : FinishReason::MaxTokens;
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace piiprobe
