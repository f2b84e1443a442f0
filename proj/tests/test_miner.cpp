#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "piiprobe/errors.hpp"
#include "piiprobe/miner.hpp"
#include "piiprobe/pii.hpp"

using namespace piiprobe;

namespace {

MinerConfig gazetteer_cfg(std::vector<std::string> names) {
    MinerConfig cfg;
    cfg.name_gazetteer = std::move(names);
    return cfg;
}

} // namespace

TEST_CASE("scan_structured finds phones, emails and addresses with offsets") {
    Document doc{"d", "call 123-456-7890 now"};
    auto hits = scan_structured(doc);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].type.kind == PiiKind::Phone);
    CHECK(hits[0].raw == "123-456-7890");
    CHECK(hits[0].offset == 5);

    Document email_doc{"d", "write hotel@staubbach.com please"};
    hits = scan_structured(email_doc);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].type.kind == PiiKind::Email);
    CHECK(hits[0].raw == "hotel@staubbach.com");
    CHECK(hits[0].offset == 6);

    CHECK(scan_structured(Document{"d", "no pii here"}).empty());

    Document addr_doc{"d", "ship to 1 Main St, Springfield, IL 62704 today"};
    hits = scan_structured(addr_doc);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].type.kind == PiiKind::Address);
    CHECK(hits[0].raw == "1 Main St, Springfield, IL 62704");
}

TEST_CASE("offset soundness: reported text starts at the reported offset") {
    Document doc{"d", "a 212-555-0142 b jdoe@abc.com c 44 Oak Ave, Salem, OR 97301 d"};
    auto hits = scan_structured(doc);
    REQUIRE(hits.size() == 3);
    std::size_t prev = 0;
    for (const auto& h : hits) {
        CHECK(doc.text.compare(h.offset, h.raw.size(), h.raw) == 0);
        CHECK(h.offset >= prev);  // ascending order
        prev = h.offset;
    }
}

TEST_CASE("scan boundaries: no matches inside longer digit runs or words") {
    CHECK(scan_structured(Document{"d", "9123-456-78901"}).empty());
    auto hits = scan_structured(Document{"d", "xhotel@staubbach.com"});
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].raw == "xhotel@staubbach.com");  // id extends left
    // tld longer than 5 letters backs off to nothing
    CHECK(scan_structured(Document{"d", "a@b.commerce"}).empty());
}

TEST_CASE("heuristic name detection pairs capitalized tokens") {
    MinerConfig cfg;  // empty gazetteer -> heuristic
    auto names = detect_names("Please contact John Doe by phone", cfg);
    REQUIRE(names.size() == 1);
    CHECK(names[0].raw == "John Doe");
    CHECK(names[0].offset == 15);

    CHECK(detect_names("the cat's mother", cfg).empty());
    // Comma breaks adjacency.
    CHECK(detect_names("Springfield, IL", cfg).empty());
}

TEST_CASE("extract_quadruplets links nearest items per name") {
    std::string text =
        "John Doe lives at 1 Main St, Springfield, IL 62704. Call 123-456-7890 or write "
        "jdoe@abc.com.";
    auto records = extract_quadruplets(Document{"doc-1", text}, gazetteer_cfg({"John Doe"}));
    REQUIRE(records.size() == 1);
    CHECK(records[0].subject_name.normalized == "John Doe");
    CHECK(records[0].at(PiiType(PiiKind::Phone)).normalized == "123-456-7890");
    CHECK(records[0].at(PiiType(PiiKind::Email)).normalized == "jdoe@abc.com");
    CHECK(records[0].at(PiiType(PiiKind::Address)).normalized ==
          "1 Main St, Springfield, IL 62704");
    for (const auto& [t, item] : records[0].items) CHECK(validate_pii(item));
}

TEST_CASE("extract_quadruplets needs all four types in the document") {
    std::string text = "John Doe: 123-456-7890, jdoe@abc.com";  // no address
    CHECK(extract_quadruplets(Document{"d", text}, gazetteer_cfg({"John Doe"})).empty());
}

TEST_CASE("two subjects get disjoint nearest assignments (brute-force oracle)") {
    std::string a = "John Doe 111-222-3333 jdoe@abc.com 1 Oak St, Salem, OR 97301.";
    std::string pad(120, 'x');
    std::string b = "Jane Roe 444-555-6666 jroe@xyz.org 2 Elm Ave, Salem, OR 97301.";
    Document doc{"d", a + " " + pad + " " + b};
    auto cfg = gazetteer_cfg({"John Doe", "Jane Roe"});
    auto records = extract_quadruplets(doc, cfg);
    REQUIRE(records.size() == 2);

    // Independent oracle: for every (name, kind) take the argmin |offset
    // difference| over all scanned hits, ties to the earlier offset.
    auto hits = scan_structured(doc);
    auto names = detect_names(doc.text, cfg);
    REQUIRE(names.size() == 2);
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (PiiKind kind : {PiiKind::Phone, PiiKind::Email, PiiKind::Address}) {
            const ScanHit* best = nullptr;
            std::size_t best_d = 0;
            for (const auto& h : hits) {
                if (h.type.kind != kind) continue;
                std::size_t d = h.offset > names[i].offset ? h.offset - names[i].offset
                                                           : names[i].offset - h.offset;
                if (!best || d < best_d || (d == best_d && h.offset < best->offset)) {
                    best = &h;
                    best_d = d;
                }
            }
            REQUIRE(best != nullptr);
            CHECK(records[i].find_kind(kind)->raw == best->raw);
        }
    }
    CHECK(records[0].at(PiiType(PiiKind::Phone)).normalized !=
          records[1].at(PiiType(PiiKind::Phone)).normalized);
}

TEST_CASE("extract_relationships handles both surface forms") {
    auto cfg = gazetteer_cfg({"Alice Smith", "Bob Smith", "Carol Lee", "Dana Lee"});

    auto recs = extract_relationships(
        Document{"d", "Alice Smith's father Bob Smith attended"}, cfg);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].subject_name.normalized == "Alice Smith");
    CHECK(recs[0].at(PiiType::relationship("father")).normalized == "Bob Smith");

    recs = extract_relationships(Document{"d", "Carol Lee's aunt, Dana Lee, said"}, cfg);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].subject_name.normalized == "Carol Lee");
    CHECK(recs[0].at(PiiType::relationship("aunt")).normalized == "Dana Lee");

    CHECK(extract_relationships(Document{"d", "the cat's mother"}, cfg).empty());
    // Unknown relation word is not in the vocabulary.
    CHECK(extract_relationships(Document{"d", "Alice Smith's cousin Bob Smith"}, cfg).empty());
}

TEST_CASE("extract_relationships against a hand-labeled fixture") {
    // 20 sentences; expected[i] empty means no record expected.
    struct Row {
        const char* text;
        const char* subject;
        const char* relation;
        const char* object;
    };
    const Row rows[] = {
        {"Alice Smith's father Bob Smith attended", "Alice Smith", "father", "Bob Smith"},
        {"Carol Lee's aunt, Dana Lee, said hello", "Carol Lee", "aunt", "Dana Lee"},
        {"We met Alice Smith's mother Dana Lee today", "Alice Smith", "mother", "Dana Lee"},
        {"Bob Smith's uncle Carol Lee paid a visit", "Bob Smith", "uncle", "Carol Lee"},
        {"Alice Smith's wife, Carol Lee, arrived", "Alice Smith", "wife", "Carol Lee"},
        {"Dana Lee's husband Bob Smith left early", "Dana Lee", "husband", "Bob Smith"},
        {"Carol Lee's grandmother Alice Smith waved", "Carol Lee", "grandmother", "Alice Smith"},
        {"Bob Smith's grandfather, Dana Lee, spoke", "Bob Smith", "grandfather", "Dana Lee"},
        {"the dog's father barked", "", "", ""},
        {"Alice Smith's cousin Bob Smith laughed", "", "", ""},          // not in vocabulary
        {"Alice Smith's father from town", "", "", ""},                  // object not a name
        {"nobody's mother Dana Lee knows", "", "", ""},                  // subject not a name
        {"Alice Smith father Bob Smith", "", "", ""},                    // no possessive
        {"Carol Lee's aunt  Dana Lee doubled space", "", "", ""},        // malformed separator
        {"Dana Lee's mother, Bob Smith, nodded", "Dana Lee", "mother", "Bob Smith"},
        {"It was Bob Smith's wife Alice Smith", "Bob Smith", "wife", "Alice Smith"},
        {"Carol Lee's father's desk", "", "", ""},                       // possessive object
        {"Alice Smith's uncle, Bob Smith, and others", "Alice Smith", "uncle", "Bob Smith"},
        {"Greeting Dana Lee's aunt Carol Lee warmly", "Dana Lee", "aunt", "Carol Lee"},
        {"his mother said no", "", "", ""},
    };
    auto cfg = gazetteer_cfg({"Alice Smith", "Bob Smith", "Carol Lee", "Dana Lee"});
    int idx = 0;
    for (const auto& row : rows) {
        CAPTURE(idx);
        CAPTURE(row.text);
        auto recs = extract_relationships(Document{"d", row.text}, cfg);
        if (row.subject[0] == '\0') {
            CHECK(recs.empty());
        } else {
            REQUIRE(recs.size() == 1);
            CHECK(recs[0].subject_name.normalized == row.subject);
            CHECK(recs[0].at(PiiType::relationship(row.relation)).normalized == row.object);
        }
        ++idx;
    }
}

TEST_CASE("extract_affiliations picks the nearest institution") {
    MinerConfig cfg = gazetteer_cfg({"Eve Park"});
    cfg.university_gazetteer = {"Example State University", "Far Away College"};

    auto recs = extract_affiliations(
        Document{"d", "Eve Park studies at Example State University"}, cfg);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].at(PiiType(PiiKind::Affiliation)).normalized == "Example State University");

    CHECK(extract_affiliations(Document{"d", "Example State University is large"}, cfg).empty());

    // Nearer institution wins; verified against a brute-force distance scan.
    std::string pad(80, 'y');
    std::string text = "Far Away College " + pad + " Eve Park sits near Example State University";
    recs = extract_affiliations(Document{"d", text}, cfg);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].at(PiiType(PiiKind::Affiliation)).normalized == "Example State University");
}

TEST_CASE("mine_corpus streams, dedups and assigns stable ids") {
    namespace fs = std::filesystem;
    auto path = fs::temp_directory_path() / "piiprobe_miner_corpus.jsonl";
    {
        std::ofstream out(path);
        out << R"({"doc_id": "a", "text": "John Doe 111-222-3333 jdoe@abc.com 1 Oak St, Salem, OR 97301"})"
            << "\n";
        out << "this line is not json\n";
        // duplicate content in another doc collapses
        out << R"({"doc_id": "b", "text": "John Doe 111-222-3333 jdoe@abc.com 1 Oak St, Salem, OR 97301"})"
            << "\n";
        out << R"({"doc_id": "c", "text": "Jane Roe 444-555-6666 jroe@xyz.org 2 Elm Ave, Salem, OR 97301"})"
            << "\n";
    }
    MinerConfig cfg = gazetteer_cfg({"John Doe", "Jane Roe"});
    MineResult result = mine_corpus(path.string(), cfg);
    CHECK(result.skipped_lines == 1);
    REQUIRE(result.quadruplets.records.size() == 2);
    CHECK(result.quadruplets.records[0].record_id == "a#0");
    CHECK(result.quadruplets.records[1].record_id == "c#0");

    // Determinism across worker counts.
    cfg.workers = 4;
    MineResult parallel = mine_corpus(path.string(), cfg);
    CHECK(parallel.quadruplets.to_json() == result.quadruplets.to_json());

    fs::remove(path);
}

TEST_CASE("mine_corpus of an empty file yields empty sets") {
    namespace fs = std::filesystem;
    auto path = fs::temp_directory_path() / "piiprobe_empty.jsonl";
    std::ofstream(path).close();
    MineResult result = mine_corpus(path.string(), MinerConfig{});
    CHECK(result.quadruplets.records.empty());
    CHECK(result.relationships.records.empty());
    CHECK(result.affiliations.records.empty());
    fs::remove(path);
}

TEST_CASE("mine_corpus throws on unreadable files") {
    CHECK_THROWS_AS(mine_corpus("/nonexistent/piiprobe.jsonl", MinerConfig{}), CorpusIoError);
}
