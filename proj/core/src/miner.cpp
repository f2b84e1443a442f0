#include "piiprobe/miner.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "piiprobe/errors.hpp"
#include "piiprobe/parallel.hpp"

namespace piiprobe {

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// The published phone pattern: digit triplets and a quad joined by one of
// [-.()]. Applied unanchored with digit boundaries so "123-456-78901" is not
// split into a match.
const std::regex& phone_pattern() {
    static const std::regex re(
        R"([0-9][0-9][0-9][-.()][0-9][0-9][0-9][-.()][0-9][0-9][0-9][0-9])");
    return re;
}

// The published email pattern with the ^/$ anchors replaced by non-word
// boundaries. std::regex has no lookbehind, so the left boundary is checked
// manually; the id class is greedy, which already makes matches maximal to
// the left.
const std::regex& email_pattern() {
    static const std::regex re(
        R"([a-zA-Z0-9_\-.]+@[a-zA-Z0-9_\-.]+\.[a-zA-Z]{2,5}(?![a-zA-Z0-9_]))");
    return re;
}

// Built-in street-address grammar: number, capitalized street tokens, a
// street-type keyword, optionally ", City, ST zzzzz".
const std::regex& address_pattern() {
    static const std::regex re(
        R"([0-9]+ (?:[A-Z][A-Za-z]* )+(?:Street|St|Avenue|Ave|Road|Rd|Blvd|Drive|Dr|Lane|Ln)\b)"
        R"((?:, [A-Z][A-Za-z]*(?: [A-Z][A-Za-z]*)?, [A-Z][A-Z] [0-9]{5}(?![0-9]))?)");
    return re;
}

void scan_with(const std::string& text, const std::regex& re, PiiKind kind,
               std::vector<ScanHit>& out) {
    auto begin = std::sregex_iterator(text.begin(), text.end(), re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        std::size_t pos = static_cast<std::size_t>(it->position());
        std::size_t end = pos + static_cast<std::size_t>(it->length());
        if (kind == PiiKind::Phone || kind == PiiKind::Address) {
            if (pos > 0 && is_digit(text[pos - 1])) continue;
            if (end < text.size() && is_digit(text[end])) continue;
        }
        if (kind == PiiKind::Email) {
            if (pos > 0 && is_word_char(text[pos - 1])) continue;
        }
        out.push_back(ScanHit{PiiType(kind), it->str(), pos});
    }
}

struct Span {
    std::size_t begin;
    std::size_t end;
    bool overlaps(std::size_t b, std::size_t e) const { return b < end && begin < e; }
};

// Distance between a name and an item is the absolute difference of their
// match start offsets.
std::size_t span_distance(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

std::vector<NameHit> gazetteer_names(const std::string& text,
                                     const std::vector<std::string>& gazetteer) {
    std::vector<NameHit> hits;
    for (const auto& name : gazetteer) {
        if (name.empty()) continue;
        std::size_t pos = 0;
        while ((pos = text.find(name, pos)) != std::string::npos) {
            bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
            std::size_t end = pos + name.size();
            bool right_ok = end >= text.size() || !is_word_char(text[end]);
            if (left_ok && right_ok) hits.push_back(NameHit{name, pos});
            pos += 1;
        }
    }
    std::sort(hits.begin(), hits.end(), [](const NameHit& a, const NameHit& b) {
        return a.offset != b.offset ? a.offset < b.offset : a.raw.size() > b.raw.size();
    });
    return hits;
}

struct WordToken {
    std::size_t begin;
    std::size_t end;
};

std::vector<NameHit> heuristic_names(const std::string& text) {
    // Two consecutive capitalized alphabetic tokens separated by one space,
    // consumed greedily left to right.
    std::vector<WordToken> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        if (std::isalpha(static_cast<unsigned char>(text[i]))) {
            std::size_t b = i;
            while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
            tokens.push_back(WordToken{b, i});
        } else {
            ++i;
        }
    }
    std::vector<NameHit> hits;
    for (std::size_t t = 0; t + 1 < tokens.size();) {
        const auto& a = tokens[t];
        const auto& b = tokens[t + 1];
        bool a_cap = std::isupper(static_cast<unsigned char>(text[a.begin]));
        bool b_cap = std::isupper(static_cast<unsigned char>(text[b.begin]));
        bool adjacent = b.begin == a.end + 1 && text[a.end] == ' ';
        if (a_cap && b_cap && adjacent) {
            hits.push_back(NameHit{text.substr(a.begin, b.end - a.begin), a.begin});
            t += 2;
        } else {
            t += 1;
        }
    }
    return hits;
}

std::vector<NameHit> names_outside(const std::vector<NameHit>& names,
                                   const std::vector<Span>& exclusions) {
    std::vector<NameHit> kept;
    for (const auto& n : names) {
        bool inside = false;
        for (const auto& s : exclusions) {
            if (s.overlaps(n.offset, n.offset + n.length())) {
                inside = true;
                break;
            }
        }
        if (!inside) kept.push_back(n);
    }
    return kept;
}

std::optional<ScanHit> nearest_hit(const std::vector<ScanHit>& hits, PiiKind kind,
                                   std::size_t name_offset, std::size_t max_distance) {
    std::optional<ScanHit> best;
    std::size_t best_dist = 0;
    for (const auto& h : hits) {
        if (h.type.kind != kind) continue;
        std::size_t d = span_distance(h.offset, name_offset);
        if (d > max_distance) continue;
        if (!best || d < best_dist || (d == best_dist && h.offset < best->offset)) {
            best = h;
            best_dist = d;
        }
    }
    return best;
}

} // namespace

std::vector<ScanHit> scan_structured(const Document& doc) {
    std::vector<ScanHit> hits;
    scan_with(doc.text, phone_pattern(), PiiKind::Phone, hits);
    scan_with(doc.text, email_pattern(), PiiKind::Email, hits);
    scan_with(doc.text, address_pattern(), PiiKind::Address, hits);
    std::sort(hits.begin(), hits.end(), [](const ScanHit& a, const ScanHit& b) {
        return a.offset != b.offset ? a.offset < b.offset : a.type < b.type;
    });
    return hits;
}

std::vector<NameHit> detect_names(const std::string& text, const MinerConfig& cfg) {
    if (!cfg.name_gazetteer.empty()) return gazetteer_names(text, cfg.name_gazetteer);
    return heuristic_names(text);
}

std::vector<SubjectRecord> extract_quadruplets(const Document& doc, const MinerConfig& cfg) {
    auto hits = scan_structured(doc);
    if (hits.empty()) return {};

    std::vector<Span> hit_spans;
    hit_spans.reserve(hits.size());
    for (const auto& h : hits) hit_spans.push_back(Span{h.offset, h.offset + h.raw.size()});

    // Tokens inside structured matches are not name candidates ("Maple Ave"
    // must not become a subject).
    auto names = names_outside(detect_names(doc.text, cfg), hit_spans);

    std::vector<SubjectRecord> records;
    for (const auto& name : names) {
        auto phone = nearest_hit(hits, PiiKind::Phone, name.offset, cfg.max_link_distance_chars);
        auto email = nearest_hit(hits, PiiKind::Email, name.offset, cfg.max_link_distance_chars);
        auto address = nearest_hit(hits, PiiKind::Address, name.offset, cfg.max_link_distance_chars);
        if (!phone || !email || !address) continue;

        SubjectRecord r;
        r.subject_name = PiiItem::make(PiiType(PiiKind::Name), name.raw);
        r.items.emplace(PiiType(PiiKind::Phone), PiiItem::make(PiiKind::Phone, phone->raw));
        r.items.emplace(PiiType(PiiKind::Email), PiiItem::make(PiiKind::Email, email->raw));
        r.items.emplace(PiiType(PiiKind::Address), PiiItem::make(PiiKind::Address, address->raw));
        r.source_doc_id = doc.doc_id;
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<SubjectRecord> extract_relationships(const Document& doc, const MinerConfig& cfg) {
    if (cfg.relation_vocabulary.empty()) return {};
    const std::string& text = doc.text;
    auto names = detect_names(text, cfg);

    auto name_ending_at = [&](std::size_t pos) -> const NameHit* {
        for (const auto& n : names) {
            if (n.offset + n.length() == pos) return &n;
        }
        return nullptr;
    };
    auto name_starting_at = [&](std::size_t pos) -> const NameHit* {
        for (const auto& n : names) {
            if (n.offset == pos) return &n;
        }
        return nullptr;
    };

    std::ostringstream alt;
    for (std::size_t i = 0; i < cfg.relation_vocabulary.size(); ++i) {
        if (i) alt << "|";
        alt << cfg.relation_vocabulary[i];
    }
    // "{name1}'s {relation} {name2}" and "{name1}'s {relation}, {name2}"
    const std::regex rel_re("'s (" + alt.str() + R"()\b)");

    std::vector<SubjectRecord> records;
    auto begin = std::sregex_iterator(text.begin(), text.end(), rel_re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        std::size_t pos = static_cast<std::size_t>(it->position());
        const NameHit* subject = name_ending_at(pos);
        if (!subject) continue;

        std::size_t after = pos + static_cast<std::size_t>(it->length());
        std::size_t object_pos = std::string::npos;
        if (after < text.size() && text[after] == ' ') {
            object_pos = after + 1;
        } else if (after + 1 < text.size() && text[after] == ',' && text[after + 1] == ' ') {
            object_pos = after + 2;
        }
        if (object_pos == std::string::npos) continue;
        const NameHit* object = name_starting_at(object_pos);
        if (!object) continue;

        std::string relation = (*it)[1].str();
        SubjectRecord r;
        r.subject_name = PiiItem::make(PiiType(PiiKind::Name), subject->raw);
        PiiType t = PiiType::relationship(relation);
        r.items.emplace(t, PiiItem::make(t, object->raw));
        r.source_doc_id = doc.doc_id;
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<SubjectRecord> extract_affiliations(const Document& doc, const MinerConfig& cfg) {
    if (cfg.university_gazetteer.empty()) return {};
    const std::string& text = doc.text;

    auto institutions = gazetteer_names(text, cfg.university_gazetteer);
    if (institutions.empty()) return {};

    std::vector<Span> inst_spans;
    inst_spans.reserve(institutions.size());
    for (const auto& h : institutions) inst_spans.push_back(Span{h.offset, h.offset + h.length()});
    auto names = names_outside(detect_names(text, cfg), inst_spans);

    std::vector<SubjectRecord> records;
    for (const auto& name : names) {
        const NameHit* best = nullptr;
        std::size_t best_dist = 0;
        for (const auto& inst : institutions) {
            std::size_t d = span_distance(inst.offset, name.offset);
            if (d > cfg.max_link_distance_chars) continue;
            if (!best || d < best_dist || (d == best_dist && inst.offset < best->offset)) {
                best = &inst;
                best_dist = d;
            }
        }
        if (!best) continue;

        SubjectRecord r;
        r.subject_name = PiiItem::make(PiiType(PiiKind::Name), name.raw);
        r.items.emplace(PiiType(PiiKind::Affiliation),
                        PiiItem::make(PiiKind::Affiliation, best->raw));
        r.source_doc_id = doc.doc_id;
        records.push_back(std::move(r));
    }
    return records;
}

const EvaluationSet& MineResult::set(SetKind kind) const {
    switch (kind) {
        case SetKind::StructuredQuadruplet: return quadruplets;
        case SetKind::RelationshipPairs: return relationships;
        case SetKind::AffiliationPairs: return affiliations;
    }
    throw Error("bad set kind");
}

std::string MineResult::summary_json() const {
    nlohmann::json j;
    j["documents"] = documents;
    j["skipped_lines"] = skipped_lines;
    j["records"] = {
        {"quadruplets", quadruplets.records.size()},
        {"relationships", relationships.records.size()},
        {"affiliations", affiliations.records.size()},
    };
    j["scan_tallies"] = scan_tallies;
    return j.dump(2) + "\n";
}

namespace {

struct DocExtraction {
    std::vector<SubjectRecord> quadruplets;
    std::vector<SubjectRecord> relationships;
    std::vector<SubjectRecord> affiliations;
    std::map<std::string, std::size_t> tallies;
};

std::string dedup_key(const SubjectRecord& r) {
    std::string key = r.subject_name.normalized;
    for (const auto& [t, item] : r.items) {
        key += "\x1f" + t.key() + "=" + item.normalized;
    }
    return key;
}

void merge_kind(std::vector<SubjectRecord>&& fresh, EvaluationSet& set,
                std::set<std::string>& seen, std::map<std::string, std::size_t>& per_doc) {
    for (auto& r : fresh) {
        if (!seen.insert(dedup_key(r)).second) continue;
        std::size_t idx = per_doc[r.source_doc_id]++;
        r.record_id = r.source_doc_id + "#" + std::to_string(idx);
        set.records.push_back(std::move(r));
    }
}

} // namespace

MineResult mine_corpus(const std::string& path, const MinerConfig& cfg) {
    std::vector<Document> docs;
    std::size_t skipped = 0;
    docs = read_corpus(path, &skipped);

    auto extracted = parallel_map<DocExtraction>(
        docs.size(), cfg.workers, [&](std::size_t i) {
            DocExtraction e;
            e.quadruplets = extract_quadruplets(docs[i], cfg);
            e.relationships = extract_relationships(docs[i], cfg);
            e.affiliations = extract_affiliations(docs[i], cfg);
            for (const auto& h : scan_structured(docs[i])) e.tallies[h.type.key()]++;
            return e;
        });

    MineResult result;
    result.skipped_lines = skipped;
    result.documents = docs.size();
    result.quadruplets.kind = SetKind::StructuredQuadruplet;
    result.relationships.kind = SetKind::RelationshipPairs;
    result.affiliations.kind = SetKind::AffiliationPairs;
    result.quadruplets.seed = result.relationships.seed = result.affiliations.seed = cfg.seed;

    std::set<std::string> seen_q, seen_r, seen_a;
    std::map<std::string, std::size_t> idx_q, idx_r, idx_a;
    for (auto& e : extracted) {
        merge_kind(std::move(e.quadruplets), result.quadruplets, seen_q, idx_q);
        merge_kind(std::move(e.relationships), result.relationships, seen_r, idx_r);
        merge_kind(std::move(e.affiliations), result.affiliations, seen_a, idx_a);
        for (const auto& [k, v] : e.tallies) result.scan_tallies[k] += v;
    }
    return result;
}

} // namespace piiprobe
