#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace piiprobe {

enum class PiiKind {
    Name,
    Phone,
    Email,
    Address,
    Relationship,
    Affiliation,
};

// The eight supported family-relation labels.
const std::vector<std::string>& relation_vocabulary();

// A PII type; Relationship carries its relation label, every other kind
// leaves it empty.
struct PiiType {
    PiiKind kind = PiiKind::Name;
    std::string relation;

    PiiType() = default;
    PiiType(PiiKind k) : kind(k) {}  // NOLINT(google-explicit-constructor)
    static PiiType relationship(const std::string& label);

    // Phone/Email/Address follow a regular textual pattern; Relationship and
    // Affiliation do not. Name is the linking key, neither bucket.
    bool structured() const {
        return kind == PiiKind::Phone || kind == PiiKind::Email || kind == PiiKind::Address;
    }

    // Human-readable name used when filling {target_pii_type} and friends:
    // "phone number", "email address", "address", ...
    std::string display_name() const;

    // Stable key used in serialized item maps: "phone", "email", "address",
    // "affiliation", "relationship:father", "name".
    std::string key() const;
    static PiiType from_key(const std::string& key);

    auto operator<=>(const PiiType&) const = default;
};

struct PiiItem {
    PiiType type;
    std::string raw;         // text as found in the corpus
    std::string normalized;  // canonical form, used for all comparisons

    PiiItem() = default;
    PiiItem(PiiType t, std::string r, std::string n)
        : type(std::move(t)), raw(std::move(r)), normalized(std::move(n)) {}

    // Builds an item by normalizing `raw` for its kind.
    static PiiItem make(const PiiType& type, const std::string& raw);
};

// One data subject's linked PII items, all mined from the same document.
struct SubjectRecord {
    PiiItem subject_name;                // kind Name
    std::map<PiiType, PiiItem> items;    // never contains a Name entry
    std::string source_doc_id;
    std::string record_id;

    bool has(const PiiType& t) const { return items.count(t) != 0; }
    const PiiItem& at(const PiiType& t) const { return items.at(t); }

    // The single item of the given kind, regardless of relation label;
    // nullptr when absent.
    const PiiItem* find_kind(PiiKind kind) const;
};

enum class SetKind {
    StructuredQuadruplet,
    RelationshipPairs,
    AffiliationPairs,
};

std::string to_string(SetKind kind);
SetKind set_kind_from_string(const std::string& s);

struct EvaluationSet {
    std::vector<SubjectRecord> records;
    SetKind kind = SetKind::StructuredQuadruplet;
    std::uint64_t seed = 0;

    // Canonical JSON document, sorted keys, byte-reproducible.
    std::string to_json() const;
    static EvaluationSet from_json(const std::string& text);

    void save(const std::string& path) const;
    static EvaluationSet load(const std::string& path);

    // Throws Error on duplicate record_ids or records violating the kind's
    // shape (quadruplets must hold Phone, Email and Address).
    void check_invariants() const;
};

// Strips non-digits; exactly 10 digits reformat to ddd-ddd-dddd, anything
// else throws NotAPhone.
PiiItem normalize_phone(const std::string& raw);

// Kind-dispatching normalization. Idempotent for every kind: whitespace
// collapse + trim for free text, the 10-digit reformat for phones, lowercase
// domain preserved as-is for emails (emails are only trimmed).
std::string normalize_text(PiiKind kind, const std::string& raw);

// Anchored validation per type: phones against ^\d{3}-\d{3}-\d{4}$ on the
// normalized form, emails against the anchored id/domain/tld pattern with a
// 2-5 letter tld, everything else non-empty after normalization.
bool validate_pii(const PiiItem& item);

// Splits at the first '@'. Throws MalformedEmail when there is none or a
// side is empty.
std::pair<std::string, std::string> split_email(const PiiItem& email);

} // namespace piiprobe
