#include "piiprobe/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "piiprobe/errors.hpp"

namespace piiprobe {

using nlohmann::json;

NgramLm::NgramLm(int order, double alpha) : order_(order), alpha_(alpha) {
    if (order < 1) throw Error("n-gram order must be >= 1");
    if (!(alpha > 0.0)) throw Error("smoothing alpha must be > 0");
    model_id_ = "ngram-o" + std::to_string(order);
}

std::string NgramLm::context_key(std::span<const TokenId> context) const {
    std::size_t ctx_len = static_cast<std::size_t>(order_ - 1);
    std::size_t take = std::min(ctx_len, context.size());
    std::string key;
    key.reserve(take);
    for (std::size_t i = context.size() - take; i < context.size(); ++i) {
        key.push_back(static_cast<char>(static_cast<unsigned char>(context[i])));
    }
    return key;
}

NgramLm NgramLm::fit(const std::vector<Document>& corpus, int order, double alpha) {
    if (corpus.empty()) throw EmptyCorpus("n-gram fit needs at least one document");
    NgramLm lm(order, alpha);

    std::unordered_map<std::string, std::map<TokenId, std::uint32_t>> acc;
    for (const auto& doc : corpus) {
        std::vector<TokenId> seq = Tokenizer::encode(doc.text);
        seq.push_back(Tokenizer::kEos);
        if (seq.size() < static_cast<std::size_t>(order)) continue;
        for (std::size_t i = 0; i + static_cast<std::size_t>(order) <= seq.size(); ++i) {
            std::string key;
            key.reserve(static_cast<std::size_t>(order - 1));
            for (int j = 0; j < order - 1; ++j) {
                key.push_back(static_cast<char>(
                    static_cast<unsigned char>(seq[i + static_cast<std::size_t>(j)])));
            }
            TokenId target = seq[i + static_cast<std::size_t>(order - 1)];
            acc[key][target] += 1;
        }
    }

    for (auto& [key, counts] : acc) {
        ContextCounts cc;
        cc.counts.reserve(counts.size());
        for (const auto& [t, c] : counts) {
            cc.counts.emplace_back(t, c);
            cc.total += c;
        }
        lm.table_.emplace(key, std::move(cc));
    }
    return lm;
}

const NgramLm::ContextCounts* NgramLm::lookup(std::span<const TokenId> context) const {
    auto it = table_.find(context_key(context));
    return it == table_.end() ? nullptr : &it->second;
}

double NgramLm::cond_logprob(std::span<const TokenId> context, TokenId next) const {
    const double denom_smooth = alpha_ * Tokenizer::kVocabSize;
    const ContextCounts* cc = lookup(context);
    if (!cc) return std::log(1.0 / Tokenizer::kVocabSize);
    std::uint32_t c = 0;
    auto it = std::lower_bound(cc->counts.begin(), cc->counts.end(), next,
                               [](const auto& p, TokenId t) { return p.first < t; });
    if (it != cc->counts.end() && it->first == next) c = it->second;
    return std::log((c + alpha_) / (static_cast<double>(cc->total) + denom_smooth));
}

std::vector<double> NgramLm::next_logprobs(std::span<const TokenId> context) const {
    std::vector<double> out(Tokenizer::kVocabSize);
    const ContextCounts* cc = lookup(context);
    if (!cc) {
        double lp = std::log(1.0 / Tokenizer::kVocabSize);
        std::fill(out.begin(), out.end(), lp);
        return out;
    }
    const double denom = static_cast<double>(cc->total) + alpha_ * Tokenizer::kVocabSize;
    const double base = std::log(alpha_ / denom);
    std::fill(out.begin(), out.end(), base);
    for (const auto& [t, c] : cc->counts) {
        out[static_cast<std::size_t>(t)] = std::log((c + alpha_) / denom);
    }
    return out;
}

void NgramLm::save(const std::string& path) const {
    // Contexts are sorted so the container is byte-reproducible for a fit.
    std::vector<const std::pair<const std::string, ContextCounts>*> entries;
    entries.reserve(table_.size());
    for (const auto& e : table_) entries.push_back(&e);
    std::sort(entries.begin(), entries.end(),
              [](const auto* a, const auto* b) { return a->first < b->first; });

    json doc;
    doc["schema_version"] = 1;
    doc["type"] = "ngram";
    doc["order"] = order_;
    doc["alpha"] = alpha_;
    doc["model_id"] = model_id_;
    json contexts = json::array();
    for (const auto* e : entries) {
        json jc;
        json ctx = json::array();
        for (unsigned char ch : e->first) ctx.push_back(static_cast<int>(ch));
        jc["ctx"] = std::move(ctx);
        json counts = json::array();
        for (const auto& [t, c] : e->second.counts) counts.push_back({t, c});
        jc["counts"] = std::move(counts);
        contexts.push_back(std::move(jc));
    }
    doc["contexts"] = std::move(contexts);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + path);
    out << doc.dump() << "\n";
}

NgramLm NgramLm::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open model: " + path);
    json doc = json::parse(in);
    if (doc.value("type", "") != "ngram") throw SchemaMismatch("not an n-gram model file");

    NgramLm lm(doc.at("order").get<int>(), doc.at("alpha").get<double>());
    lm.model_id_ = doc.value("model_id", lm.model_id_);
    for (const auto& jc : doc.at("contexts")) {
        std::string key;
        for (const auto& ch : jc.at("ctx")) {
            key.push_back(static_cast<char>(static_cast<unsigned char>(ch.get<int>())));
        }
        if (key.size() != static_cast<std::size_t>(lm.order_ - 1)) {
            throw SchemaMismatch("context length does not match order");
        }
        ContextCounts cc;
        TokenId prev = -1;
        for (const auto& pair : jc.at("counts")) {
            TokenId t = pair.at(0).get<TokenId>();
            auto c = pair.at(1).get<std::uint32_t>();
            if (t < 0 || t >= Tokenizer::kVocabSize || t <= prev || c == 0) {
                throw SchemaMismatch("invalid count entry in model file");
            }
            prev = t;
            cc.counts.emplace_back(t, c);
            cc.total += c;
        }
        lm.table_.emplace(std::move(key), std::move(cc));
    }
    return lm;
}

} // namespace piiprobe
