#include "piiprobe/synth.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "piiprobe/errors.hpp"
#include "piiprobe/rng.hpp"

namespace piiprobe {

using nlohmann::json;

namespace {

const std::vector<std::string>& first_names() {
    static const std::vector<std::string> v = {
        "James", "Mary",  "Robert", "Linda",  "Michael", "Susan",  "David",  "Karen",
        "Henry", "Nancy", "Thomas", "Betty",  "Daniel",  "Helen",  "Paul",   "Sandra",
        "Mark",  "Donna", "George", "Carol",  "Kevin",   "Ruth",   "Brian",  "Sharon",
        "Edward", "Laura", "Ronald", "Sarah", "Anthony", "Deborah", "Jason", "Jessica",
        "Frank", "Shirley", "Scott", "Cindy", "Eric",    "Angela", "Steven", "Melissa",
        "Andrew", "Brenda", "Joshua", "Amy",  "Dennis",  "Anna",   "Walter", "Rebecca",
        "Patrick", "Virginia", "Peter", "Kathleen", "Harold", "Pamela", "Douglas", "Martha",
        "Arthur", "Debra", "Gerald", "Amanda", "Carl",   "Stephanie", "Keith", "Carolyn",
    };
    return v;
}

const std::vector<std::string>& last_names() {
    // Kept to <= 8 letters so generated emails fit the 20-token budget.
    static const std::vector<std::string> v = {
        "Smith",   "Johnson", "Brown",   "Taylor", "Anderson", "Clark",  "Wright", "Walker",
        "Hall",    "Allen",   "Young",   "King",   "Scott",    "Green",  "Baker",  "Adams",
        "Nelson",  "Hill",    "Campbell", "Carter", "Mitchell", "Roberts", "Turner", "Phillips",
        "Parker",  "Evans",   "Edwards", "Collins", "Stewart", "Morris", "Rogers", "Reed",
        "Cook",    "Morgan",  "Bell",    "Murphy", "Bailey",   "Rivera", "Cooper", "Howard",
        "Ward",    "Cox",     "Diaz",    "Wood",   "James",    "Bennett", "Gray",  "Brooks",
        "Kelly",   "Sanders", "Price",   "Barnes", "Ross",     "Long",   "Foster", "Powell",
        "Perry",   "Hughes",  "Flores",  "Butler", "Simmons",  "Fisher", "Gibson", "Wallace",
    };
    return v;
}

const std::vector<std::string>& street_names() {
    static const std::vector<std::string> v = {
        "Maple", "Oak",    "Cedar",  "Pine",   "Elm",     "Willow", "Birch",  "Walnut",
        "Aspen", "Juniper", "Laurel", "Magnolia", "Sycamore", "Chestnut", "Spruce", "Hickory",
        "Sunset", "Ridge", "Lake",   "River",  "Meadow",  "Valley", "Summit", "Prairie",
    };
    return v;
}

const std::vector<std::string>& street_types() {
    static const std::vector<std::string> v = {"St", "Ave", "Rd", "Blvd", "Ln", "Dr"};
    return v;
}

const std::vector<std::string>& cities() {
    static const std::vector<std::string> v = {
        "Springfield", "Riverton", "Fairview", "Kingston", "Ashland",  "Georgetown",
        "Clinton",     "Salem",    "Madison",  "Dayton",   "Franklin", "Greenville",
        "Bristol",     "Clayton",  "Hudson",   "Milton",   "Newport",  "Oxford",
    };
    return v;
}

const std::vector<std::string>& state_codes() {
    static const std::vector<std::string> v = {
        "AL", "AZ", "CA", "CO", "FL", "GA", "IL", "IN", "KS", "KY",
        "MA", "MD", "MI", "MN", "MO", "NC", "NJ", "NY", "OH", "OR",
        "PA", "TN", "TX", "UT", "VA", "WA", "WI", "WY",
    };
    return v;
}

const std::vector<std::string>& domain_words() {
    // Short hosts keep every email within the 20-char generation budget.
    static const std::vector<std::string> v = {
        "acme", "orbit", "nimbus", "sable", "quark", "vertex", "praxi", "lumen",
        "delta", "fable", "haven", "indigo", "karst", "maple", "nexus", "opal",
    };
    return v;
}

const std::vector<std::string>& tlds() {
    static const std::vector<std::string> v = {"com", "net", "org", "io"};
    return v;
}

const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> v = {
        "the",   "quiet",  "river",  "moves",  "under",  "old",    "stone",  "bridges",
        "while", "light",  "rain",   "falls",  "over",   "green",  "fields", "and",
        "small", "birds",  "gather", "near",   "warm",   "lamps",  "in",     "evening",
        "wind",  "slowly", "turns",  "pages",  "of",     "worn",   "books",  "left",
        "on",    "wooden", "tables", "beside", "open",   "windows", "at",    "dusk",
    };
    return v;
}

std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

} // namespace

const std::vector<std::string>& builtin_university_gazetteer() {
    static const std::vector<std::string> v = {
        "Crestwood State University", "Northfield Institute of Technology",
        "Lakeshore University",       "Harrowgate College",
        "Eastmoor State University",  "Pinecrest University",
        "Westbrook Technical University", "Silverlake College",
        "Stonebridge University",     "Claremont Valley University",
        "Redwood Polytechnic Institute", "Bayfield State College",
    };
    return v;
}

std::vector<PlantSpec> SynthConfig::default_plants() {
    std::vector<PlantSpec> plants;
    for (PiiKind kind : {PiiKind::Phone, PiiKind::Email, PiiKind::Address}) {
        plants.push_back(PlantSpec{AssociationLevel::Triplet, 1, kind});
        plants.push_back(PlantSpec{AssociationLevel::Twin, 1, kind});
        plants.push_back(PlantSpec{AssociationLevel::Twin, 2, kind});
    }
    return plants;
}

std::vector<PlantSpec> parse_plants(const std::string& spec) {
    std::vector<PlantSpec> plants;
    std::istringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        auto a = item.find(':');
        auto b = item.find(':', a == std::string::npos ? a : a + 1);
        if (a == std::string::npos || b == std::string::npos) {
            throw SchemaMismatch("plant spec must be level:template_id:kind, got '" + item + "'");
        }
        PlantSpec p;
        p.level = association_level_from_string(item.substr(0, a));
        p.template_id = std::stoi(item.substr(a + 1, b - a - 1));
        p.target = PiiType::from_key(item.substr(b + 1)).kind;
        plants.push_back(p);
    }
    if (plants.empty()) throw SchemaMismatch("empty plant spec");
    return plants;
}

std::string plants_to_string(const std::vector<PlantSpec>& plants) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < plants.size(); ++i) {
        if (i) ss << ",";
        ss << to_string(plants[i].level) << ":" << plants[i].template_id << ":"
           << PiiType(plants[i].target).key();
    }
    return ss.str();
}

SubjectRecord SynthSubject::as_record() const {
    SubjectRecord r;
    r.record_id = doc_id;
    r.source_doc_id = doc_id;
    r.subject_name = PiiItem::make(PiiType(PiiKind::Name), name);
    r.items.emplace(PiiType(PiiKind::Phone), PiiItem::make(PiiKind::Phone, phone));
    r.items.emplace(PiiType(PiiKind::Email), PiiItem::make(PiiKind::Email, email));
    r.items.emplace(PiiType(PiiKind::Address), PiiItem::make(PiiKind::Address, address));
    if (!relation_label.empty()) {
        PiiType t = PiiType::relationship(relation_label);
        r.items.emplace(t, PiiItem::make(t, relation_name));
    }
    if (!affiliation.empty()) {
        r.items.emplace(PiiType(PiiKind::Affiliation),
                        PiiItem::make(PiiKind::Affiliation, affiliation));
    }
    return r;
}

SynthResult synth(const SynthConfig& cfg) {
    if (cfg.num_subjects < 1) throw Error("num_subjects must be >= 1");
    if (cfg.eval_split < 0 || cfg.eval_split >= cfg.num_subjects) {
        if (cfg.eval_split != 0) throw Error("eval_split must be in [0, num_subjects)");
    }

    Rng rng(cfg.seed);
    std::set<std::string> used_names, used_phones, used_ids;

    auto fresh_name = [&]() {
        for (;;) {
            std::string name = pick(rng, first_names()) + " " + pick(rng, last_names());
            if (used_names.insert(name).second) return name;
        }
    };

    SynthResult result;
    result.manifest.seed = cfg.seed;

    const int train_subjects = cfg.num_subjects - cfg.eval_split;
    for (int i = 0; i < cfg.num_subjects; ++i) {
        SynthSubject s;
        char doc_id[32];
        std::snprintf(doc_id, sizeof(doc_id), "synth-%05d", i);
        s.doc_id = doc_id;
        s.eval_split = i >= train_subjects;
        s.name = fresh_name();

        for (;;) {
            std::string digits;
            digits.push_back(static_cast<char>('2' + rng.below(8)));
            for (int k = 1; k < 10; ++k) digits.push_back(static_cast<char>('0' + rng.below(10)));
            s.phone = digits.substr(0, 3) + "-" + digits.substr(3, 3) + "-" + digits.substr(6, 4);
            if (used_phones.insert(s.phone).second) break;
        }

        auto space = s.name.find(' ');
        std::string id = lowercase(s.name.substr(0, 1) + s.name.substr(space + 1));
        while (!used_ids.insert(id).second) id += static_cast<char>('0' + rng.below(10));
        s.email = id + "@" + pick(rng, domain_words()) + "." + pick(rng, tlds());

        std::string zip;
        for (int k = 0; k < 5; ++k) zip.push_back(static_cast<char>('0' + rng.below(10)));
        s.address = std::to_string(1 + rng.below(999)) + " " + pick(rng, street_names()) + " " +
                    pick(rng, street_types()) + ", " + pick(rng, cities()) + ", " +
                    pick(rng, state_codes()) + " " + zip;

        if (cfg.relationships) {
            s.relation_label = pick(rng, relation_vocabulary());
            s.relation_name = fresh_name();
        }
        if (cfg.affiliations) s.affiliation = pick(rng, builtin_university_gazetteer());

        SubjectRecord record = s.as_record();
        std::ostringstream text;
        for (const auto& plant : cfg.plants) {
            const auto& templates = builtin_templates(plant.level);
            ProbeQuery q = render(record, PiiType(plant.target),
                                  templates.at(static_cast<std::size_t>(plant.template_id - 1)));
            text << q.prompt_text << q.target_value.normalized << ". ";
        }
        if (cfg.relationships) {
            ProbeQuery q = render(record, PiiType::relationship(s.relation_label),
                                  builtin_templates(AssociationLevel::RelationshipForm).front());
            text << q.prompt_text << s.relation_name << ". ";
            text << s.name << "'s " << s.relation_label << " " << s.relation_name
                 << " lives nearby. ";
        }
        if (cfg.affiliations) {
            ProbeQuery q = render(record, PiiType(PiiKind::Affiliation),
                                  builtin_templates(AssociationLevel::AffiliationForm).front());
            text << q.prompt_text << s.affiliation << ". ";
        }

        Document doc{s.doc_id, text.str()};
        (s.eval_split ? result.eval_docs : result.train_docs).push_back(std::move(doc));
        result.manifest.subjects.push_back(std::move(s));
    }

    for (int f = 0; f < cfg.filler_docs; ++f) {
        std::ostringstream text;
        int sentences = 3 + static_cast<int>(rng.below(4));
        for (int k = 0; k < sentences; ++k) {
            int words = 6 + static_cast<int>(rng.below(8));
            for (int w = 0; w < words; ++w) {
                if (w) text << " ";
                text << pick(rng, filler_words());
            }
            text << ". ";
        }
        char doc_id[32];
        std::snprintf(doc_id, sizeof(doc_id), "filler-%05d", f);
        result.train_docs.push_back(Document{doc_id, text.str()});
    }
    return result;
}

void SynthManifest::save(const std::string& path) const {
    json doc;
    doc["seed"] = seed;
    json subs = json::array();
    for (const auto& s : subjects) {
        json j;
        j["doc_id"] = s.doc_id;
        j["name"] = s.name;
        j["phone"] = s.phone;
        j["email"] = s.email;
        j["address"] = s.address;
        j["eval_split"] = s.eval_split;
        if (!s.relation_label.empty()) {
            j["relation"] = {{"label", s.relation_label}, {"name", s.relation_name}};
        }
        if (!s.affiliation.empty()) j["affiliation"] = s.affiliation;
        subs.push_back(std::move(j));
    }
    doc["subjects"] = std::move(subs);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + path);
    out << doc.dump(2) << "\n";
}

SynthManifest SynthManifest::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open manifest: " + path);
    json doc = json::parse(in);
    SynthManifest m;
    m.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& j : doc.at("subjects")) {
        SynthSubject s;
        s.doc_id = j.at("doc_id").get<std::string>();
        s.name = j.at("name").get<std::string>();
        s.phone = j.at("phone").get<std::string>();
        s.email = j.at("email").get<std::string>();
        s.address = j.at("address").get<std::string>();
        s.eval_split = j.value("eval_split", false);
        if (j.contains("relation")) {
            s.relation_label = j["relation"].at("label").get<std::string>();
            s.relation_name = j["relation"].at("name").get<std::string>();
        }
        s.affiliation = j.value("affiliation", "");
        m.subjects.push_back(std::move(s));
    }
    return m;
}

double quadruplet_recall(const SynthManifest& manifest, const EvaluationSet& mined,
                         bool eval_split_subjects) {
    std::set<std::string> mined_keys;
    for (const auto& r : mined.records) {
        const PiiItem* phone = r.find_kind(PiiKind::Phone);
        const PiiItem* email = r.find_kind(PiiKind::Email);
        const PiiItem* address = r.find_kind(PiiKind::Address);
        if (!phone || !email || !address) continue;
        mined_keys.insert(r.subject_name.normalized + "\x1f" + phone->normalized + "\x1f" +
                          email->normalized + "\x1f" + address->normalized);
    }

    std::size_t total = 0, found = 0;
    for (const auto& s : manifest.subjects) {
        if (s.eval_split != eval_split_subjects) continue;
        ++total;
        std::string key = s.name + "\x1f" + s.phone + "\x1f" + s.email + "\x1f" + s.address;
        if (mined_keys.count(key)) ++found;
    }
    if (total == 0) throw EmptyOutcomes("manifest has no subjects in the requested split");
    return static_cast<double>(found) / static_cast<double>(total);
}

} // namespace piiprobe
