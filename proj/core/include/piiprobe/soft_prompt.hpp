#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "piiprobe/neural.hpp"
#include "piiprobe/pii.hpp"

namespace piiprobe {

enum class InitScheme { PiiTypeWord, Uniform, VocabMean };

std::string to_string(InitScheme scheme);
InitScheme init_scheme_from_string(const std::string& s);

struct SoftPrompt {
    Matrix vectors;  // L_s x d learnable prompt embeddings
    InitScheme init_scheme = InitScheme::PiiTypeWord;
    std::string source_model_id;
    PiiType target_type = PiiType(PiiKind::Phone);
    int trained_epochs = 0;

    int soft_tokens() const { return static_cast<int>(vectors.rows()); }
    int dim() const { return static_cast<int>(vectors.cols()); }

    // JSON container with vectors as full-precision decimal strings so the
    // file round-trips bit-exactly.
    void save(const std::string& path) const;
    static SoftPrompt load(const std::string& path);
};

// The single word standing in for a PII type in PiiTypeWord initialization.
std::string pii_type_word(const PiiType& type);

// PiiTypeWord cycles the type word's token embeddings over the L_s rows;
// Uniform draws i.i.d. U(-1,1) from the seed; VocabMean repeats the mean
// vocabulary embedding.
SoftPrompt init_soft(InitScheme scheme, int soft_tokens, const TinyNeuralLm& model,
                     const PiiType& target_type, std::uint64_t seed);

// Each row maps to the vocabulary token with the nearest embedding in
// Euclidean distance (ties to the lower token id); the decoded string is
// usable as a raw prompt prefix on any backend.
std::pair<std::vector<TokenId>, std::string> project_to_hard(const SoftPrompt& soft,
                                                             const TinyNeuralLm& model);

} // namespace piiprobe
