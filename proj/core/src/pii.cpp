#include "piiprobe/pii.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "piiprobe/errors.hpp"

namespace piiprobe {

using nlohmann::json;

const std::vector<std::string>& relation_vocabulary() {
    static const std::vector<std::string> kRelations = {
        "father", "mother", "grandmother", "grandfather",
        "aunt",   "uncle",  "wife",        "husband",
    };
    return kRelations;
}

PiiType PiiType::relationship(const std::string& label) {
    const auto& vocab = relation_vocabulary();
    if (std::find(vocab.begin(), vocab.end(), label) == vocab.end()) {
        throw Error("unknown relation label: " + label);
    }
    PiiType t;
    t.kind = PiiKind::Relationship;
    t.relation = label;
    return t;
}

std::string PiiType::display_name() const {
    switch (kind) {
        case PiiKind::Name: return "name";
        case PiiKind::Phone: return "phone number";
        case PiiKind::Email: return "email address";
        case PiiKind::Address: return "address";
        case PiiKind::Relationship: return relation;
        case PiiKind::Affiliation: return "university";
    }
    return "";
}

std::string PiiType::key() const {
    switch (kind) {
        case PiiKind::Name: return "name";
        case PiiKind::Phone: return "phone";
        case PiiKind::Email: return "email";
        case PiiKind::Address: return "address";
        case PiiKind::Relationship: return "relationship:" + relation;
        case PiiKind::Affiliation: return "affiliation";
    }
    return "";
}

PiiType PiiType::from_key(const std::string& key) {
    if (key == "name") return PiiType(PiiKind::Name);
    if (key == "phone") return PiiType(PiiKind::Phone);
    if (key == "email") return PiiType(PiiKind::Email);
    if (key == "address") return PiiType(PiiKind::Address);
    if (key == "affiliation") return PiiType(PiiKind::Affiliation);
    if (key.rfind("relationship:", 0) == 0) {
        return PiiType::relationship(key.substr(std::string("relationship:").size()));
    }
    throw SchemaMismatch("unknown PII type key: " + key);
}

namespace {

std::string collapse_whitespace(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    return out;
}

std::string digits_of(const std::string& s) {
    std::string d;
    for (char c : s) {
        if (c >= '0' && c <= '9') d.push_back(c);
    }
    return d;
}

} // namespace

PiiItem normalize_phone(const std::string& raw) {
    std::string d = digits_of(raw);
    if (d.size() != 10) {
        throw NotAPhone("expected 10 digits, got " + std::to_string(d.size()) + " in '" + raw + "'");
    }
    std::string normalized = d.substr(0, 3) + "-" + d.substr(3, 3) + "-" + d.substr(6, 4);
    return PiiItem(PiiType(PiiKind::Phone), raw, normalized);
}

std::string normalize_text(PiiKind kind, const std::string& raw) {
    switch (kind) {
        case PiiKind::Phone:
            return normalize_phone(raw).normalized;
        case PiiKind::Email:
            return collapse_whitespace(raw);  // emails carry no internal whitespace
        default:
            return collapse_whitespace(raw);
    }
}

PiiItem PiiItem::make(const PiiType& type, const std::string& raw) {
    return PiiItem(type, raw, normalize_text(type.kind, raw));
}

bool validate_pii(const PiiItem& item) {
    // Patterns follow the published search expressions: the phone pattern is
    // digit triplets/quad with [-.()] separators, the email pattern is
    // id@domain.tld with a 2-5 letter tld, both anchored here.
    static const std::regex kPhone(R"(^[0-9][0-9][0-9][-.()][0-9][0-9][0-9][-.()][0-9][0-9][0-9][0-9]$)");
    static const std::regex kEmail(R"(^([a-zA-Z0-9_\-.]+)@([a-zA-Z0-9_\-.]+)\.([a-zA-Z]{2,5})$)");

    const std::string& s = item.normalized;
    switch (item.type.kind) {
        case PiiKind::Phone: return std::regex_match(s, kPhone);
        case PiiKind::Email: return std::regex_match(s, kEmail);
        default: return !s.empty();
    }
}

std::pair<std::string, std::string> split_email(const PiiItem& email) {
    const std::string& s = email.normalized;
    auto at = s.find('@');
    if (at == std::string::npos) throw MalformedEmail("no '@' in '" + s + "'");
    std::string id = s.substr(0, at);
    std::string domain = s.substr(at + 1);
    if (id.empty() || domain.empty()) throw MalformedEmail("empty id or domain in '" + s + "'");
    return {id, domain};
}

const PiiItem* SubjectRecord::find_kind(PiiKind kind) const {
    for (const auto& [t, item] : items) {
        if (t.kind == kind) return &item;
    }
    return nullptr;
}

std::string to_string(SetKind kind) {
    switch (kind) {
        case SetKind::StructuredQuadruplet: return "structured_quadruplet";
        case SetKind::RelationshipPairs: return "relationship_pairs";
        case SetKind::AffiliationPairs: return "affiliation_pairs";
    }
    return "";
}

SetKind set_kind_from_string(const std::string& s) {
    if (s == "structured_quadruplet") return SetKind::StructuredQuadruplet;
    if (s == "relationship_pairs") return SetKind::RelationshipPairs;
    if (s == "affiliation_pairs") return SetKind::AffiliationPairs;
    throw SchemaMismatch("unknown evaluation set kind: " + s);
}

std::string EvaluationSet::to_json() const {
    json doc;
    doc["kind"] = to_string(kind);
    doc["seed"] = seed;
    json recs = json::array();
    for (const auto& r : records) {
        json jr;
        jr["record_id"] = r.record_id;
        jr["source_doc_id"] = r.source_doc_id;
        jr["name"] = r.subject_name.normalized;
        json items = json::object();
        for (const auto& [t, item] : r.items) items[t.key()] = item.normalized;
        jr["items"] = items;
        recs.push_back(std::move(jr));
    }
    doc["records"] = std::move(recs);
    return doc.dump(2) + "\n";
}

EvaluationSet EvaluationSet::from_json(const std::string& text) {
    json doc = json::parse(text);
    EvaluationSet set;
    set.kind = set_kind_from_string(doc.at("kind").get<std::string>());
    set.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& jr : doc.at("records")) {
        SubjectRecord r;
        r.record_id = jr.at("record_id").get<std::string>();
        r.source_doc_id = jr.at("source_doc_id").get<std::string>();
        std::string name = jr.at("name").get<std::string>();
        r.subject_name = PiiItem(PiiType(PiiKind::Name), name, name);
        for (const auto& [key, value] : jr.at("items").items()) {
            PiiType t = PiiType::from_key(key);
            if (t.kind == PiiKind::Name) throw SchemaMismatch("record items may not hold a name");
            std::string v = value.get<std::string>();
            r.items.emplace(t, PiiItem(t, v, v));
        }
        set.records.push_back(std::move(r));
    }
    set.check_invariants();
    return set;
}

void EvaluationSet::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + path);
    out << to_json();
}

EvaluationSet EvaluationSet::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void EvaluationSet::check_invariants() const {
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (!ids.insert(r.record_id).second) {
            throw Error("duplicate record_id: " + r.record_id);
        }
        if (kind == SetKind::StructuredQuadruplet) {
            if (!r.has(PiiType(PiiKind::Phone)) || !r.has(PiiType(PiiKind::Email)) ||
                !r.has(PiiType(PiiKind::Address))) {
                throw Error("quadruplet record missing a structured item: " + r.record_id);
            }
        }
    }
}

} // namespace piiprobe
