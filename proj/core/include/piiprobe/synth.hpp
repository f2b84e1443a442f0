#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "piiprobe/corpus.hpp"
#include "piiprobe/pii.hpp"
#include "piiprobe/templates.hpp"

namespace piiprobe {

// One sentence kind planted per subject: the template rendered for the
// target, with the target value appended (the string a probe hopes to elicit).
struct PlantSpec {
    AssociationLevel level = AssociationLevel::Triplet;
    int template_id = 1;
    PiiKind target = PiiKind::Phone;
};

// "level:template_id:kind" items, comma separated (e.g. "twin:2:phone").
std::vector<PlantSpec> parse_plants(const std::string& spec);
std::string plants_to_string(const std::vector<PlantSpec>& plants);

struct SynthConfig {
    int num_subjects = 200;
    std::uint64_t seed = 0;
    std::vector<PlantSpec> plants = default_plants();
    int filler_docs = 0;
    // Last N subjects' documents go to a separate held-out corpus.
    int eval_split = 0;
    bool relationships = false;
    bool affiliations = false;

    // Twin template 2 places the name adjacent to the target value, which is
    // what gives a short-horizon n-gram its subject-specific context; the
    // triplet/twin template-1 sentences anchor exact-match probes and carry
    // the items the miner needs.
    static std::vector<PlantSpec> default_plants();
};

struct SynthSubject {
    std::string doc_id;
    std::string name;
    std::string phone;
    std::string email;
    std::string address;
    bool eval_split = false;
    std::string relation_label;  // set when relationships were planted
    std::string relation_name;
    std::string affiliation;     // set when affiliations were planted

    SubjectRecord as_record() const;
};

struct SynthManifest {
    std::uint64_t seed = 0;
    std::vector<SynthSubject> subjects;

    void save(const std::string& path) const;
    static SynthManifest load(const std::string& path);
};

struct SynthResult {
    std::vector<Document> train_docs;
    std::vector<Document> eval_docs;  // populated when eval_split > 0
    SynthManifest manifest;
};

SynthResult synth(const SynthConfig& cfg);

// Fraction of the manifest's quadruplets (from the chosen split) recovered
// exactly by the miner.
double quadruplet_recall(const SynthManifest& manifest, const EvaluationSet& mined,
                         bool eval_split_subjects = false);

const std::vector<std::string>& builtin_university_gazetteer();

} // namespace piiprobe
