#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "piiprobe/backend.hpp"
#include "piiprobe/corpus.hpp"

namespace piiprobe {

// Add-alpha smoothed character n-gram. Counts come from every length-n
// window of the BOS-prefixed, EOS-suffixed token sequence of each document;
// the conditional is (c(ctx,t) + alpha) / (c(ctx) + alpha*V). No backoff:
// an unseen context scores every token at exactly 1/V.
class NgramLm : public ConditionalLm {
public:
    NgramLm(int order, double alpha);

    static NgramLm fit(const std::vector<Document>& corpus, int order, double alpha);

    int order() const { return order_; }
    double alpha() const { return alpha_; }
    std::size_t context_count() const { return table_.size(); }

    double cond_logprob(std::span<const TokenId> context, TokenId next) const;
    std::vector<double> next_logprobs(std::span<const TokenId> context) const override;
    std::string model_id() const override { return model_id_; }

    void save(const std::string& path) const;
    static NgramLm load(const std::string& path);

private:
    struct ContextCounts {
        std::uint64_t total = 0;
        std::vector<std::pair<TokenId, std::uint32_t>> counts;  // sorted by token id
    };

    std::string context_key(std::span<const TokenId> context) const;
    const ContextCounts* lookup(std::span<const TokenId> context) const;

    int order_;
    double alpha_;
    std::string model_id_;
    std::unordered_map<std::string, ContextCounts> table_;
};

} // namespace piiprobe
