#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace piiprobe {

using TokenId = int;

// Character-level tokenizer over printable ASCII. Ids 0..94 cover bytes
// 0x20..0x7e, then BOS, EOS, UNK. Vocabulary size is fixed at 98 so PII
// strings (digits, '@', '.') tokenize one char per token.
class Tokenizer {
public:
    static constexpr int kVocabSize = 98;
    static constexpr TokenId kBos = 95;
    static constexpr TokenId kEos = 96;
    static constexpr TokenId kUnk = 97;

    // BOS-prefixed encoding for a whole sequence.
    static std::vector<TokenId> encode(const std::string& text);

    // Raw encoding (no BOS), used for continuations in teacher forcing.
    static std::vector<TokenId> encode_raw(const std::string& text);

    static std::string decode(const std::vector<TokenId>& ids);

    static TokenId char_to_id(char c);

    // '\0' for BOS/EOS, '?' for UNK.
    static char id_to_char(TokenId id);
};

} // namespace piiprobe
