#include <doctest.h>

#include <filesystem>

#include "piiprobe/errors.hpp"
#include "piiprobe/pii.hpp"
#include "piiprobe/rng.hpp"

using namespace piiprobe;

TEST_CASE("normalize_phone strips separators and reformats") {
    CHECK(normalize_phone("(033) 855-5454").normalized == "033-855-5454");
    CHECK(normalize_phone("033-855-5454").normalized == "033-855-5454");
    CHECK(normalize_phone("033.855.5454").normalized == "033-855-5454");
    CHECK(normalize_phone(" 0 3 3 8 5 5 5 4 5 4 ").normalized == "033-855-5454");
    PiiItem item = normalize_phone("(033) 855-5454");
    CHECK(item.raw == "(033) 855-5454");
    CHECK(item.type.kind == PiiKind::Phone);
}

TEST_CASE("normalize_phone rejects wrong digit counts") {
    CHECK_THROWS_AS(normalize_phone("12-345"), NotAPhone);
    CHECK_THROWS_AS(normalize_phone(""), NotAPhone);
    CHECK_THROWS_AS(normalize_phone("12345678901"), NotAPhone);  // 11 digits
}

TEST_CASE("validate_pii anchored patterns") {
    CHECK(validate_pii(normalize_phone("033-855-5454")));
    CHECK(validate_pii(PiiItem::make(PiiKind::Email, "hotel@staubbach.com")));
    CHECK_FALSE(validate_pii(PiiItem::make(PiiKind::Email, "no-at-sign.com")));
    CHECK_FALSE(validate_pii(PiiItem::make(PiiKind::Email, "a@b.c")));          // 1-letter tld
    CHECK_FALSE(validate_pii(PiiItem::make(PiiKind::Email, "a@b.toolong")));    // 7-letter tld
    CHECK(validate_pii(PiiItem::make(PiiKind::Email, "a@b.co")));
    CHECK_FALSE(validate_pii(PiiItem(PiiType(PiiKind::Phone), "033-855-545", "033-855-545")));
    CHECK(validate_pii(PiiItem::make(PiiKind::Address, "1 Main St, Springfield, IL 62704")));
    CHECK_FALSE(validate_pii(PiiItem::make(PiiKind::Name, "   ")));
}

TEST_CASE("split_email at the first @") {
    auto [id, domain] = split_email(PiiItem::make(PiiKind::Email, "hotel@staubbach.com"));
    CHECK(id == "hotel");
    CHECK(domain == "staubbach.com");
    CHECK(split_email(PiiItem::make(PiiKind::Email, "a@b.co")) ==
          std::make_pair(std::string("a"), std::string("b.co")));
    CHECK(split_email(PiiItem::make(PiiKind::Email, "x@y@z.com")) ==
          std::make_pair(std::string("x"), std::string("y@z.com")));
    CHECK_THROWS_AS(split_email(PiiItem::make(PiiKind::Email, "nothing")), MalformedEmail);
}

TEST_CASE("normalization is idempotent across kinds") {
    Rng rng(99);
    const std::string charset = " \t aAbB09.@-_()";
    for (int trial = 0; trial < 200; ++trial) {
        std::string raw;
        for (int i = 0; i < 12; ++i) raw.push_back(charset[rng.below(charset.size())]);
        for (PiiKind kind : {PiiKind::Name, PiiKind::Email, PiiKind::Address,
                             PiiKind::Affiliation}) {
            std::string once = normalize_text(kind, raw);
            CHECK(normalize_text(kind, once) == once);
        }
    }
    // Phone idempotence on normalizable inputs.
    std::string once = normalize_phone("(212) 555-0142").normalized;
    CHECK(normalize_phone(once).normalized == once);
}

TEST_CASE("validate_pii always accepts normalize_phone output") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        std::string raw;
        for (int i = 0; i < 10; ++i) {
            raw.push_back(static_cast<char>('0' + rng.below(10)));
            if (rng.below(3) == 0) raw.push_back(' ');
        }
        CHECK(validate_pii(normalize_phone(raw)));
    }
}

TEST_CASE("split_email round-trips id/domain joins") {
    Rng rng(13);
    const std::string idset = "abcXYZ019._-";
    for (int trial = 0; trial < 100; ++trial) {
        std::string id, domain;
        for (int i = 0; i < 1 + static_cast<int>(rng.below(8)); ++i) {
            id.push_back(idset[rng.below(idset.size())]);
        }
        for (int i = 0; i < 1 + static_cast<int>(rng.below(8)); ++i) {
            domain.push_back(idset[rng.below(idset.size())]);
        }
        PiiItem email(PiiType(PiiKind::Email), id + "@" + domain, id + "@" + domain);
        CHECK(split_email(email) == std::make_pair(id, domain));
    }
}

TEST_CASE("relationship types carry their label") {
    PiiType father = PiiType::relationship("father");
    CHECK(father.display_name() == "father");
    CHECK(father.key() == "relationship:father");
    CHECK(PiiType::from_key("relationship:aunt") == PiiType::relationship("aunt"));
    CHECK_THROWS_AS(PiiType::relationship("cousin"), Error);
    CHECK(relation_vocabulary().size() == 8);
}

namespace {

SubjectRecord sample_record(const std::string& id) {
    SubjectRecord r;
    r.record_id = id;
    r.source_doc_id = "doc-1";
    r.subject_name = PiiItem::make(PiiKind::Name, "John Doe");
    r.items.emplace(PiiType(PiiKind::Phone), PiiItem::make(PiiKind::Phone, "123-456-7890"));
    r.items.emplace(PiiType(PiiKind::Email), PiiItem::make(PiiKind::Email, "jdoe@abc.com"));
    r.items.emplace(PiiType(PiiKind::Address),
                    PiiItem::make(PiiKind::Address, "1 Main St, Springfield, IL 62704"));
    return r;
}

} // namespace

TEST_CASE("evaluation set serialization is canonical and round-trips") {
    EvaluationSet set;
    set.kind = SetKind::StructuredQuadruplet;
    set.seed = 42;
    set.records.push_back(sample_record("doc-1#0"));
    set.records.push_back(sample_record("doc-1#1"));

    std::string json1 = set.to_json();
    EvaluationSet back = EvaluationSet::from_json(json1);
    CHECK(back.records.size() == 2);
    CHECK(back.seed == 42);
    CHECK(back.records[0].subject_name.normalized == "John Doe");
    CHECK(back.records[0].at(PiiType(PiiKind::Phone)).normalized == "123-456-7890");
    CHECK(back.to_json() == json1);  // byte-reproducible

    auto path = std::filesystem::temp_directory_path() / "piiprobe_test_set.json";
    set.save(path.string());
    CHECK(EvaluationSet::load(path.string()).to_json() == json1);
    std::filesystem::remove(path);
}

TEST_CASE("evaluation set invariants reject duplicates and broken quadruplets") {
    EvaluationSet set;
    set.kind = SetKind::StructuredQuadruplet;
    set.records.push_back(sample_record("dup"));
    set.records.push_back(sample_record("dup"));
    CHECK_THROWS_AS(set.check_invariants(), Error);

    EvaluationSet incomplete;
    incomplete.kind = SetKind::StructuredQuadruplet;
    SubjectRecord r = sample_record("x");
    r.items.erase(PiiType(PiiKind::Address));
    incomplete.records.push_back(r);
    CHECK_THROWS_AS(incomplete.check_invariants(), Error);
}
