#include "piiprobe/soft_prompt.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "piiprobe/errors.hpp"
#include "piiprobe/rng.hpp"

namespace piiprobe {

using nlohmann::json;

std::string to_string(InitScheme scheme) {
    switch (scheme) {
        case InitScheme::PiiTypeWord: return "pii_type_word";
        case InitScheme::Uniform: return "uniform";
        case InitScheme::VocabMean: return "vocab_mean";
    }
    return "";
}

InitScheme init_scheme_from_string(const std::string& s) {
    if (s == "pii_type_word") return InitScheme::PiiTypeWord;
    if (s == "uniform") return InitScheme::Uniform;
    if (s == "vocab_mean") return InitScheme::VocabMean;
    throw SchemaMismatch("unknown init scheme: " + s);
}

std::string pii_type_word(const PiiType& type) {
    switch (type.kind) {
        case PiiKind::Phone: return "phone";
        case PiiKind::Email: return "email";
        case PiiKind::Address: return "address";
        case PiiKind::Affiliation: return "university";
        case PiiKind::Relationship: return type.relation.empty() ? "relationship" : type.relation;
        case PiiKind::Name: return "name";
    }
    return "";
}

SoftPrompt init_soft(InitScheme scheme, int soft_tokens, const TinyNeuralLm& model,
                     const PiiType& target_type, std::uint64_t seed) {
    if (soft_tokens < 1) throw Error("soft prompt needs at least one token");
    const int d = model.embed_dim();

    SoftPrompt soft;
    soft.init_scheme = scheme;
    soft.source_model_id = model.model_id();
    soft.target_type = target_type;
    soft.vectors = Matrix(soft_tokens, d);

    switch (scheme) {
        case InitScheme::PiiTypeWord: {
            std::vector<TokenId> ids = Tokenizer::encode_raw(pii_type_word(target_type));
            for (int r = 0; r < soft_tokens; ++r) {
                soft.vectors.row(r) = model.E.row(ids[static_cast<std::size_t>(r) % ids.size()]);
            }
            break;
        }
        case InitScheme::Uniform: {
            Rng rng(seed);
            for (int r = 0; r < soft_tokens; ++r) {
                for (int c = 0; c < d; ++c) soft.vectors(r, c) = rng.uniform(-1.0, 1.0);
            }
            break;
        }
        case InitScheme::VocabMean: {
            Vector mean = model.E.colwise().mean();
            for (int r = 0; r < soft_tokens; ++r) soft.vectors.row(r) = mean.transpose();
            break;
        }
    }
    return soft;
}

std::pair<std::vector<TokenId>, std::string> project_to_hard(const SoftPrompt& soft,
                                                             const TinyNeuralLm& model) {
    if (soft.dim() != model.embed_dim()) {
        throw DimensionMismatch("soft prompt dim does not match model embed_dim");
    }
    std::vector<TokenId> ids;
    ids.reserve(static_cast<std::size_t>(soft.soft_tokens()));
    for (Eigen::Index r = 0; r < soft.vectors.rows(); ++r) {
        TokenId best = 0;
        double best_dist = (model.E.row(0) - soft.vectors.row(r)).squaredNorm();
        for (TokenId t = 1; t < Tokenizer::kVocabSize; ++t) {
            double dist = (model.E.row(t) - soft.vectors.row(r)).squaredNorm();
            if (dist < best_dist) {
                best = t;
                best_dist = dist;
            }
        }
        ids.push_back(best);
    }
    return {ids, Tokenizer::decode(ids)};
}

namespace {

std::string double_to_decimal(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void SoftPrompt::save(const std::string& path) const {
    json doc;
    doc["schema_version"] = 1;
    doc["source_model_id"] = source_model_id;
    doc["target_type"] = target_type.key();
    doc["init_scheme"] = to_string(init_scheme);
    doc["soft_tokens"] = soft_tokens();
    doc["dim"] = dim();
    doc["trained_epochs"] = trained_epochs;
    json rows = json::array();
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
        for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
            rows.push_back(double_to_decimal(vectors(r, c)));
        }
    }
    doc["vectors"] = std::move(rows);  // row-major decimal strings

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + path);
    out << doc.dump(2) << "\n";
}

SoftPrompt SoftPrompt::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open soft prompt: " + path);
    json doc = json::parse(in);

    SoftPrompt soft;
    soft.source_model_id = doc.at("source_model_id").get<std::string>();
    soft.target_type = PiiType::from_key(doc.at("target_type").get<std::string>());
    soft.init_scheme = init_scheme_from_string(doc.at("init_scheme").get<std::string>());
    soft.trained_epochs = doc.at("trained_epochs").get<int>();
    int rows = doc.at("soft_tokens").get<int>();
    int cols = doc.at("dim").get<int>();
    const auto& flat = doc.at("vectors");
    if (static_cast<int>(flat.size()) != rows * cols) {
        throw SchemaMismatch("soft prompt vector count does not match dims");
    }
    soft.vectors = Matrix(rows, cols);
    std::size_t i = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            soft.vectors(r, c) = std::strtod(flat.at(i++).get<std::string>().c_str(), nullptr);
        }
    }
    if (!soft.vectors.allFinite()) throw SchemaMismatch("non-finite soft prompt entries");
    return soft;
}

} // namespace piiprobe
