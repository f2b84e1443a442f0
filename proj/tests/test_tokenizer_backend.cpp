#include <doctest.h>

#include <cmath>
#include <map>

#include "piiprobe/backend.hpp"
#include "piiprobe/errors.hpp"
#include "piiprobe/rng.hpp"
#include "piiprobe/tokenizer.hpp"

using namespace piiprobe;

TEST_CASE("tokenizer round-trips printable ASCII and prepends BOS once") {
    std::string text = "Please contact John Doe by 123-456-7890 ";
    auto ids = Tokenizer::encode(text);
    CHECK(ids.size() == text.size() + 1);
    CHECK(ids.front() == Tokenizer::kBos);
    CHECK(Tokenizer::decode(ids) == text);

    std::string all;
    for (int c = 0x20; c <= 0x7e; ++c) all.push_back(static_cast<char>(c));
    CHECK(Tokenizer::decode(Tokenizer::encode(all)) == all);
}

TEST_CASE("tokenizer maps unknown bytes to UNK") {
    std::string text = "a\xc3\xa9z";  // 'é' is two non-printable bytes here
    auto ids = Tokenizer::encode_raw(text);
    REQUIRE(ids.size() == 4);
    CHECK(ids[1] == Tokenizer::kUnk);
    CHECK(ids[2] == Tokenizer::kUnk);
    CHECK(Tokenizer::id_to_char(Tokenizer::kUnk) == '?');
}

namespace {

// Context-dependent 3-token toy model over {a, b, c}: probabilities depend on
// the previous token, remaining mass parks on 'z', EOS and friends get none
// of it.
class TableLm : public ConditionalLm {
public:
    std::string model_id() const override { return "table-toy"; }

    std::vector<double> next_logprobs(std::span<const TokenId> context) const override {
        const TokenId a = Tokenizer::char_to_id('a');
        const TokenId b = Tokenizer::char_to_id('b');
        const TokenId c = Tokenizer::char_to_id('c');
        const TokenId z = Tokenizer::char_to_id('z');
        TokenId prev = context.empty() ? Tokenizer::kBos : context.back();

        std::map<TokenId, double> p;
        if (prev == a) {
            p = {{a, 0.10}, {b, 0.70}, {c, 0.10}};
        } else if (prev == b) {
            p = {{a, 0.60}, {b, 0.10}, {c, 0.20}};
        } else if (prev == c) {
            p = {{a, 0.40}, {b, 0.35}, {c, 0.10}};
        } else {
            p = {{a, 0.50}, {b, 0.30}, {c, 0.15}};
        }
        double used = 0.0;
        for (auto& [t, v] : p) used += v;
        p[z] = 1.0 - used;

        std::vector<double> lp(Tokenizer::kVocabSize, std::log(1e-300));
        for (auto& [t, v] : p) lp[static_cast<std::size_t>(t)] = std::log(v);
        return lp;
    }
};

// All decode outcomes of length <= max (a path ends early only at EOS, which
// this model never prefers), ranked like the decoder ranks beams.
struct Enumerated {
    std::vector<TokenId> seq;
    double total;
};

void enumerate_paths(const TableLm& lm, std::vector<TokenId> prefix, double total, int remaining,
                     std::vector<Enumerated>& out) {
    if (remaining == 0) {
        out.push_back(Enumerated{prefix, total});
        return;
    }
    auto lp = lm.next_logprobs(prefix);
    for (TokenId t : {Tokenizer::char_to_id('a'), Tokenizer::char_to_id('b'),
                      Tokenizer::char_to_id('c'), Tokenizer::char_to_id('z')}) {
        auto next = prefix;
        next.push_back(t);
        enumerate_paths(lm, next, total + lp[static_cast<std::size_t>(t)], remaining - 1, out);
    }
}

} // namespace

TEST_CASE("beam search matches exhaustive enumeration on the toy model") {
    TableLm lm;
    for (int max_len : {1, 2, 3}) {
        for (int beam : {1, 2, 3}) {
            std::vector<Enumerated> all;
            enumerate_paths(lm, Tokenizer::encode(""), 0.0, max_len, all);
            std::sort(all.begin(), all.end(), [](const Enumerated& x, const Enumerated& y) {
                if (x.total != y.total) return x.total > y.total;
                return x.seq < y.seq;
            });

            auto results = decode(lm, "", DecodeParams::beam(beam, max_len));
            REQUIRE(static_cast<int>(results.size()) == beam);
            for (int i = 0; i < beam; ++i) {
                // Enumerated sequences still carry the BOS prefix.
                std::vector<TokenId> expected(all[static_cast<std::size_t>(i)].seq.begin() + 1,
                                              all[static_cast<std::size_t>(i)].seq.end());
                CHECK(results[static_cast<std::size_t>(i)].token_ids == expected);
                CHECK(results[static_cast<std::size_t>(i)].total_logprob() ==
                      doctest::Approx(all[static_cast<std::size_t>(i)].total).epsilon(1e-12));
            }
        }
    }
}

namespace {

// prob 1 on a single token per context: argmax chain == every beam.
class DeterministicLm : public ConditionalLm {
public:
    std::string model_id() const override { return "deterministic-toy"; }
    std::vector<double> next_logprobs(std::span<const TokenId> context) const override {
        std::vector<double> lp(Tokenizer::kVocabSize, std::log(1e-300));
        TokenId next = static_cast<TokenId>((context.size() * 7) % 90);
        lp[static_cast<std::size_t>(next)] = 0.0;
        return lp;
    }
};

} // namespace

TEST_CASE("greedy equals the top beam for any beam size on a deterministic model") {
    DeterministicLm lm;
    auto greedy = decode(lm, "xy", DecodeParams::greedy(8));
    for (int beam : {2, 3, 5}) {
        auto beams = decode(lm, "xy", DecodeParams::beam(beam, 8));
        CHECK(beams.front().token_ids == greedy.front().token_ids);
        CHECK(beams.front().total_logprob() ==
              doctest::Approx(greedy.front().total_logprob()).epsilon(1e-12));
    }
}

TEST_CASE("score is teacher-forced and satisfies the chain property") {
    TableLm lm;
    auto lp = score_tokens(lm, "a", "b");
    REQUIRE(lp.size() == 1);
    CHECK(lp[0] == doctest::Approx(std::log(0.70)).epsilon(1e-12));

    Rng rng(5);
    const std::string alphabet = "abcz";
    for (int trial = 0; trial < 50; ++trial) {
        std::string c1, c2;
        for (int i = 0; i < 1 + static_cast<int>(rng.below(5)); ++i) {
            c1.push_back(alphabet[rng.below(4)]);
        }
        for (int i = 0; i < 1 + static_cast<int>(rng.below(5)); ++i) {
            c2.push_back(alphabet[rng.below(4)]);
        }
        auto whole = score_tokens(lm, "a", c1 + c2);
        auto first = score_tokens(lm, "a", c1);
        auto second = score_tokens(lm, "a" + c1, c2);
        double lhs = 0, rhs = 0;
        for (double v : whole) lhs += v;
        for (double v : first) rhs += v;
        for (double v : second) rhs += v;
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("empty continuation is rejected") {
    TableLm lm;
    CHECK_THROWS_AS(score_tokens(lm, "a", ""), EmptyContinuation);
}

TEST_CASE("decode parameter validation") {
    TableLm lm;
    CHECK_THROWS_AS(decode(lm, "a", DecodeParams::beam(0, 4)), Error);
    CHECK_THROWS_AS(decode(lm, "a", DecodeParams::beam(2, 0)), Error);
}

namespace {

// EOS is the certain continuation after one 'a'.
class StopLm : public ConditionalLm {
public:
    std::string model_id() const override { return "stop-toy"; }
    std::vector<double> next_logprobs(std::span<const TokenId> context) const override {
        std::vector<double> lp(Tokenizer::kVocabSize, std::log(1e-300));
        if (context.back() == Tokenizer::char_to_id('a')) {
            lp[Tokenizer::kEos] = std::log(0.9);
            lp[static_cast<std::size_t>(Tokenizer::char_to_id('b'))] = std::log(0.1);
        } else {
            lp[static_cast<std::size_t>(Tokenizer::char_to_id('a'))] = 0.0;
        }
        return lp;
    }
};

} // namespace

TEST_CASE("beams halt on EOS and report stop, with EOS excluded from the text tokens") {
    StopLm lm;
    auto results = decode(lm, "", DecodeParams::greedy(10));
    REQUIRE(results.size() == 1);
    CHECK(results[0].finish_reason == FinishReason::Stop);
    CHECK(results[0].text == "a");
    CHECK(results[0].token_ids.size() == 1);
    CHECK(results[0].token_logprobs.size() == 1);
    // Reported total covers the emitted text only.
    CHECK(results[0].total_logprob() == doctest::Approx(0.0).epsilon(1e-12));
}
