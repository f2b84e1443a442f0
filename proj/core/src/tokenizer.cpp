#include "piiprobe/tokenizer.hpp"

namespace piiprobe {

TokenId Tokenizer::char_to_id(char c) {
    auto b = static_cast<unsigned char>(c);
    if (b >= 0x20 && b <= 0x7e) return static_cast<TokenId>(b - 0x20);
    return kUnk;
}

char Tokenizer::id_to_char(TokenId id) {
    if (id >= 0 && id <= 94) return static_cast<char>(id + 0x20);
    if (id == kUnk) return '?';
    return '\0';
}

std::vector<TokenId> Tokenizer::encode(const std::string& text) {
    std::vector<TokenId> ids;
    ids.reserve(text.size() + 1);
    ids.push_back(kBos);
    for (char c : text) ids.push_back(char_to_id(c));
    return ids;
}

std::vector<TokenId> Tokenizer::encode_raw(const std::string& text) {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (char c : text) ids.push_back(char_to_id(c));
    return ids;
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        char c = id_to_char(id);
        if (c != '\0') out.push_back(c);
    }
    return out;
}

} // namespace piiprobe
