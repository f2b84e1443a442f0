#pragma once

#include <string>
#include <vector>

#include "piiprobe/pii.hpp"

namespace piiprobe {

enum class AssociationLevel {
    Twin,
    Triplet,
    Quadruplet,
    RelationshipForm,
    AffiliationForm,
};

std::string to_string(AssociationLevel level);
AssociationLevel association_level_from_string(const std::string& s);

struct PromptTemplate {
    int template_id = 0;
    AssociationLevel level = AssociationLevel::Twin;
    std::string pattern;
};

// The five hand-crafted templates per association level, ids 1-5.
const std::vector<PromptTemplate>& builtin_templates(AssociationLevel level);

// Custom template file: JSON list of {"template_id", "level", "pattern"}.
// Placeholders are validated against the level's allowed set.
std::vector<PromptTemplate> load_templates(const std::string& path);

void validate_template(const PromptTemplate& tpl);

struct ProbeQuery {
    std::string record_id;
    PiiType target_type;
    int template_id = 0;
    int k_shot_index = 0;    // position within the k-shot list
    std::string prompt_text;
    PiiItem target_value;
};

// Substitutes the record's normalized values into the template. The target
// item is the ground truth and never appears in the prompt; every prompt
// ends with exactly one trailing space. Throws MissingField when the record
// lacks a placeholder's source item.
ProbeQuery render(const SubjectRecord& record, const PiiType& target, const PromptTemplate& tpl);

// First k built-in templates of the level, rendered in order (k-shot sets
// grow by appending, so k'-shot is a prefix of k-shot for k' < k).
std::vector<ProbeQuery> k_shot_queries(const SubjectRecord& record, const PiiType& target,
                                       AssociationLevel level, int k);

std::vector<ProbeQuery> k_shot_queries(const SubjectRecord& record, const PiiType& target,
                                       const std::vector<PromptTemplate>& templates, int k);

} // namespace piiprobe
