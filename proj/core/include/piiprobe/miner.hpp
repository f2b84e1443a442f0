#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "piiprobe/corpus.hpp"
#include "piiprobe/pii.hpp"

namespace piiprobe {

struct MinerConfig {
    std::vector<std::string> relation_vocabulary = piiprobe::relation_vocabulary();
    std::vector<std::string> university_gazetteer;
    // Exact name matcher used when non-empty; otherwise the capitalized
    // token-pair heuristic runs. The heuristic is best-effort.
    std::vector<std::string> name_gazetteer;
    std::size_t max_link_distance_chars = 500;
    int workers = 1;
    std::uint64_t seed = 0;  // recorded on emitted evaluation sets
};

struct ScanHit {
    PiiType type;
    std::string raw;
    std::size_t offset;  // byte position of the match start
};

struct NameHit {
    std::string raw;
    std::size_t offset;
    std::size_t length() const { return raw.size(); }
};

// Every phone / email / address match in the document, ascending offset.
std::vector<ScanHit> scan_structured(const Document& doc);

std::vector<NameHit> detect_names(const std::string& text, const MinerConfig& cfg);

std::vector<SubjectRecord> extract_quadruplets(const Document& doc, const MinerConfig& cfg);
std::vector<SubjectRecord> extract_relationships(const Document& doc, const MinerConfig& cfg);
std::vector<SubjectRecord> extract_affiliations(const Document& doc, const MinerConfig& cfg);

struct MineResult {
    EvaluationSet quadruplets;
    EvaluationSet relationships;
    EvaluationSet affiliations;
    std::size_t skipped_lines = 0;
    std::size_t documents = 0;
    std::map<std::string, std::size_t> scan_tallies;  // "phone"/"email"/"address" hit counts

    const EvaluationSet& set(SetKind kind) const;
    std::string summary_json() const;
};

// Streams the JSONL corpus, runs the three extractors per document, merges
// in (doc order, offset) order, deduplicates by (normalized name, normalized
// target items) and assigns record ids "doc_id#i". Output is a pure function
// of (file bytes, config); worker count never changes it.
MineResult mine_corpus(const std::string& path, const MinerConfig& cfg);

} // namespace piiprobe
