#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "piiprobe/errors.hpp"
#include "piiprobe/ngram.hpp"
#include "piiprobe/rng.hpp"

using namespace piiprobe;

TEST_CASE("bigram counts on 'ababab' match the hand count") {
    NgramLm lm = NgramLm::fit({Document{"d", "ababab"}}, 2, 0.01);
    // c(a -> b) = 3, c(a) = 3: (3 + 0.01) / (3 + 0.98)
    auto ids = Tokenizer::encode("a");
    double expected = std::log(3.01 / 3.98);
    CHECK(lm.cond_logprob(ids, Tokenizer::char_to_id('b')) ==
          doctest::Approx(expected).epsilon(1e-12));

    auto lp = score_tokens(lm, "a", "b");
    REQUIRE(lp.size() == 1);
    CHECK(lp[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("unseen contexts fall back to exactly 1/V") {
    NgramLm lm = NgramLm::fit({Document{"d", "ababab"}}, 3, 0.5);
    auto ids = Tokenizer::encode("zq");
    for (TokenId t : {0, 50, 97}) {
        CHECK(std::exp(lm.cond_logprob(ids, t)) ==
              doctest::Approx(1.0 / Tokenizer::kVocabSize).epsilon(1e-12));
    }
}

TEST_CASE("conditional distributions sum to one") {
    NgramLm lm = NgramLm::fit({Document{"d", "the quick brown fox jumps over the lazy dog"}},
                              4, 0.01);
    for (const std::string ctx : {"the", "qui", "zzz", " th"}) {
        auto ids = Tokenizer::encode(ctx);
        auto lp = lm.next_logprobs(ids);
        double sum = 0.0;
        for (double v : lp) sum += std::exp(v);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("fit rejects an empty corpus, constructor rejects bad params") {
    CHECK_THROWS_AS(NgramLm::fit({}, 2, 0.01), EmptyCorpus);
    CHECK_THROWS_AS(NgramLm(0, 0.01), Error);
    CHECK_THROWS_AS(NgramLm(2, 0.0), Error);
}

TEST_CASE("independent window-count oracle agrees on a 3-document corpus") {
    std::vector<Document> corpus = {
        {"a", "banana band"}, {"b", "ban the bans"}, {"c", "nanananana"}};
    const int order = 3;
    const double alpha = 0.01;
    NgramLm lm = NgramLm::fit(corpus, order, alpha);

    // Oracle: count length-3 windows over BOS-prefixed, EOS-suffixed ids by
    // scanning strings directly.
    std::map<std::string, std::map<TokenId, int>> counts;
    for (const auto& doc : corpus) {
        std::vector<TokenId> seq = Tokenizer::encode(doc.text);
        seq.push_back(Tokenizer::kEos);
        for (std::size_t i = 0; i + order <= seq.size(); ++i) {
            std::string key;
            for (int j = 0; j < order - 1; ++j) {
                key.push_back(static_cast<char>(seq[i + static_cast<std::size_t>(j)]));
            }
            counts[key][seq[i + order - 1]]++;
        }
    }
    Rng rng(3);
    for (const auto& [key, next] : counts) {
        int total = 0;
        for (const auto& [t, c] : next) total += c;
        std::vector<TokenId> ctx;
        ctx.push_back(Tokenizer::kBos);  // padding on the left never enters the key
        for (char c : key) ctx.push_back(static_cast<TokenId>(c));
        for (const auto& [t, c] : next) {
            double expected = std::log((c + alpha) / (total + alpha * Tokenizer::kVocabSize));
            CHECK(lm.cond_logprob(ctx, t) == doctest::Approx(expected).epsilon(1e-12));
        }
        TokenId unseen = static_cast<TokenId>(rng.below(90));
        if (!next.count(unseen)) {
            double expected = std::log(alpha / (total + alpha * Tokenizer::kVocabSize));
            CHECK(lm.cond_logprob(ctx, unseen) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("memorization: unique contexts reproduce the planted string greedily") {
    std::string planted = "Please contact Hotel Staubbach by 033-855-5454 or email address "
                          "hotel@staubbach.com or to reserve";
    std::vector<Document> corpus = {{"plant", planted},
                                    {"noise", "general text with no overlap at all"}};
    NgramLm lm = NgramLm::fit(corpus, 8, 0.01);

    std::string prompt = planted.substr(0, planted.find("email address ") + 14);
    auto results = decode(lm, prompt, DecodeParams::beam(3, 20));
    CHECK(results.front().text.substr(0, 19) == "hotel@staubbach.com");

    // The memorization property proper: greedy from the first n-1 chars.
    auto greedy = decode(lm, planted.substr(0, 7), DecodeParams::greedy(
                             static_cast<int>(planted.size())));
    CHECK(planted.substr(7) == greedy.front().text.substr(0, planted.size() - 7));
}

TEST_CASE("score/generate consistency on the n-gram") {
    NgramLm lm = NgramLm::fit({Document{"d", "the cat sat on the mat"}}, 4, 0.01);
    for (int beam : {1, 3}) {
        auto results = decode(lm, "the c", DecodeParams::beam(beam, 8));
        for (const auto& r : results) {
            if (r.text.empty()) continue;
            auto lp = score_tokens(lm, "the c", r.text);
            double total = 0;
            for (double v : lp) total += v;
            CHECK(r.total_logprob() == doctest::Approx(total).epsilon(1e-9));
        }
    }
}

TEST_CASE("model files round-trip byte-identically") {
    namespace fs = std::filesystem;
    NgramLm lm = NgramLm::fit({Document{"d", "some text to count 123-456-7890"}}, 5, 0.01);
    auto p1 = fs::temp_directory_path() / "piiprobe_ngram1.json";
    auto p2 = fs::temp_directory_path() / "piiprobe_ngram2.json";
    lm.save(p1.string());
    NgramLm loaded = NgramLm::load(p1.string());
    loaded.save(p2.string());

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    CHECK(slurp(p1) == slurp(p2));
    CHECK(loaded.context_count() == lm.context_count());

    auto ids = Tokenizer::encode("some");
    CHECK(loaded.cond_logprob(ids, Tokenizer::char_to_id(' ')) ==
          lm.cond_logprob(ids, Tokenizer::char_to_id(' ')));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("loading rejects corrupted containers") {
    namespace fs = std::filesystem;
    auto path = fs::temp_directory_path() / "piiprobe_ngram_bad.json";
    {
        std::ofstream out(path);
        out << R"({"type": "ngram", "order": 3, "alpha": 0.01,
                   "contexts": [{"ctx": [1], "counts": [[5, 1]]}]})";
    }
    CHECK_THROWS_AS(NgramLm::load(path.string()), SchemaMismatch);  // ctx length != order-1
    fs::remove(path);
}
