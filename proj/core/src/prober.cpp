#include "piiprobe/prober.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "piiprobe/errors.hpp"
#include "piiprobe/metrics.hpp"
#include "piiprobe/parallel.hpp"
#include "piiprobe/rng.hpp"

namespace piiprobe {

using nlohmann::json;

std::map<PiiKind, int> ProbeConfig::default_max_new_tokens() {
    return {
        {PiiKind::Phone, 12},        {PiiKind::Email, 20},    {PiiKind::Relationship, 20},
        {PiiKind::Affiliation, 10},  {PiiKind::Address, 30},  {PiiKind::Name, 20},
    };
}

int ProbeConfig::max_new_tokens_for(const PiiType& target) const {
    if (max_new_tokens_override) return *max_new_tokens_override;
    auto it = max_new_tokens_by_type.find(target.kind);
    return it != max_new_tokens_by_type.end() ? it->second : 20;
}

std::string ProbeConfig::to_json() const {
    json j;
    j["k_templates"] = k_templates;
    j["decode"] = {
        {"strategy", decode.strategy == DecodeParams::Strategy::Greedy ? "greedy" : "beam"},
        {"beam_size", decode.beam_size},
    };
    json mnt;
    for (const auto& [kind, n] : max_new_tokens_by_type) mnt[PiiType(kind).key()] = n;
    j["max_new_tokens_by_type"] = std::move(mnt);
    if (max_new_tokens_override) j["max_new_tokens"] = *max_new_tokens_override;
    j["target_type"] = target_type.key();
    j["association_level"] = to_string(association_level);
    j["null_seed"] = null_seed;
    j["full_distribution"] = full_distribution;
    j["workers"] = workers;
    return j.dump(2) + "\n";
}

ProbeConfig ProbeConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ProbeConfig cfg;
    cfg.k_templates = j.value("k_templates", cfg.k_templates);
    if (j.contains("decode")) {
        const auto& d = j["decode"];
        std::string strategy = d.value("strategy", "beam");
        int beam = d.value("beam_size", 3);
        cfg.decode = strategy == "greedy" ? DecodeParams::greedy(1) : DecodeParams::beam(beam, 1);
    }
    if (j.contains("max_new_tokens_by_type")) {
        for (const auto& [key, v] : j["max_new_tokens_by_type"].items()) {
            cfg.max_new_tokens_by_type[PiiType::from_key(key).kind] = v.get<int>();
        }
    }
    if (j.contains("max_new_tokens")) cfg.max_new_tokens_override = j["max_new_tokens"].get<int>();
    if (j.contains("target_type")) cfg.target_type = PiiType::from_key(j["target_type"]);
    if (j.contains("association_level")) {
        cfg.association_level = association_level_from_string(j["association_level"]);
    }
    cfg.null_seed = j.value("null_seed", cfg.null_seed);
    cfg.full_distribution = j.value("full_distribution", cfg.full_distribution);
    cfg.workers = j.value("workers", cfg.workers);
    return cfg;
}

std::map<std::string, PiiItem> assign_nulls(const EvaluationSet& set, const PiiType& target_type,
                                            std::uint64_t seed) {
    // Null matching is by kind: any other subject's same-kind item is a
    // valid baseline continuation.
    std::vector<std::size_t> holders;
    for (std::size_t i = 0; i < set.records.size(); ++i) {
        if (set.records[i].find_kind(target_type.kind)) holders.push_back(i);
    }
    if (holders.size() < 2) {
        throw TooFewRecords("need >= 2 records with a " + PiiType(target_type.kind).key() +
                            " item, got " + std::to_string(holders.size()));
    }

    // Sattolo's algorithm yields a uniformly random n-cycle, which has no
    // fixed points by construction.
    std::vector<std::size_t> perm(holders.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    for (std::size_t i = perm.size() - 1; i >= 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(perm[i], perm[j]);
    }

    std::map<std::string, PiiItem> nulls;
    for (std::size_t i = 0; i < holders.size(); ++i) {
        const SubjectRecord& receiver = set.records[holders[i]];
        const SubjectRecord& donor = set.records[holders[perm[i]]];
        nulls.emplace(receiver.record_id, *donor.find_kind(target_type.kind));
    }
    return nulls;
}

SubjectProbeOutcome probe_subject(const LmBackend& backend, const SubjectRecord& record,
                                  const ProbeConfig& cfg, const PiiItem& null_item) {
    auto queries =
        k_shot_queries(record, cfg.target_type, cfg.association_level, cfg.k_templates);

    const ConditionalLm* local = nullptr;
    if (cfg.full_distribution) {
        if (const auto* lb = dynamic_cast<const LocalBackend*>(&backend)) local = &lb->model();
    }

    SubjectProbeOutcome outcome;
    outcome.record_id = record.record_id;
    outcome.target_type = queries.front().target_type;
    outcome.target_value = queries.front().target_value.normalized;
    outcome.null_value = null_item.normalized;

    for (const auto& q : queries) {
        DecodeParams decode = cfg.decode;
        decode.max_new_tokens = cfg.max_new_tokens_for(q.target_type);

        TemplateOutcome t;
        t.template_id = q.template_id;
        t.k_shot_index = q.k_shot_index;
        t.prompt_text = q.prompt_text;
        t.generations = backend.generate(q.prompt_text, decode);
        for (const auto& gen : t.generations) {
            if (generation_contains(gen.text, q.target_value.normalized)) {
                t.exact_match = true;
                break;
            }
        }
        auto target_lp = backend.score(q.prompt_text, q.target_value.normalized);
        auto [t_sum, t_norm] = likelihood_from_logprobs(target_lp);
        t.target_loglik = t_sum;
        t.target_norm_loglik = t_norm;
        auto null_lp = backend.score(q.prompt_text, null_item.normalized);
        t.null_loglik = likelihood_from_logprobs(null_lp).first;

        if (local && !t.generations.empty()) {
            std::vector<TokenId> ids = Tokenizer::encode(q.prompt_text);
            for (TokenId tok : t.generations.front().token_ids) {
                t.top_beam_distributions.push_back(local->next_logprobs(ids));
                ids.push_back(tok);
            }
        }
        outcome.per_template.push_back(std::move(t));
    }

    outcome.agg_target_loglik = outcome.per_template.front().target_loglik;
    outcome.agg_null_loglik = outcome.per_template.front().null_loglik;
    for (const auto& t : outcome.per_template) {
        outcome.agg_target_loglik = std::max(outcome.agg_target_loglik, t.target_loglik);
        outcome.agg_null_loglik = std::max(outcome.agg_null_loglik, t.null_loglik);
        outcome.agg_exact = outcome.agg_exact || t.exact_match;
    }
    return outcome;
}

RunResult run_eval(const LmBackend& backend, const EvaluationSet& set, const ProbeConfig& cfg) {
    if (set.records.empty()) return {};
    auto nulls = assign_nulls(set, cfg.target_type, cfg.null_seed);

    struct Slot {
        bool ok = false;
        bool skipped = false;
        SubjectProbeOutcome outcome;
    };
    auto slots = parallel_map<Slot>(set.records.size(), cfg.workers, [&](std::size_t i) {
        Slot slot;
        const SubjectRecord& record = set.records[i];
        auto it = nulls.find(record.record_id);
        if (it == nulls.end()) {
            slot.skipped = true;
            return slot;
        }
        try {
            slot.outcome = probe_subject(backend, record, cfg, it->second);
            slot.ok = true;
        } catch (const MissingField&) {
            slot.skipped = true;
        }
        return slot;
    });

    RunResult result;
    for (auto& slot : slots) {
        if (slot.ok) {
            result.outcomes.push_back(std::move(slot.outcome));
        } else if (slot.skipped) {
            ++result.skipped;
        }
    }
    return result;
}

namespace {

json generation_to_json(const GenerationResult& gen) {
    json j;
    j["text"] = gen.text;
    j["token_ids"] = gen.token_ids;
    j["token_logprobs"] = gen.token_logprobs;
    j["total_logprob"] = gen.total_logprob();
    j["finish_reason"] = to_string(gen.finish_reason);
    return j;
}

GenerationResult generation_from_json(const json& j) {
    GenerationResult gen;
    gen.text = j.at("text").get<std::string>();
    gen.token_ids = j.at("token_ids").get<std::vector<TokenId>>();
    gen.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
    gen.finish_reason =
        j.at("finish_reason").get<std::string>() == "stop" ? FinishReason::Stop
                                                           : FinishReason::MaxTokens;
    return gen;
}

} // namespace

void save_outcomes(const std::string& path, const RunResult& result, const ProbeConfig& cfg,
                   const std::string& model_id) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + path);
    for (const auto& o : result.outcomes) {
        json j;
        j["record_id"] = o.record_id;
        j["target_type"] = o.target_type.key();
        j["target_value"] = o.target_value;
        j["null_value"] = o.null_value;
        j["agg_target_loglik"] = o.agg_target_loglik;
        j["agg_null_loglik"] = o.agg_null_loglik;
        j["agg_exact"] = o.agg_exact;
        json per = json::array();
        for (const auto& t : o.per_template) {
            json jt;
            jt["template_id"] = t.template_id;
            jt["k_shot_index"] = t.k_shot_index;
            jt["prompt_text"] = t.prompt_text;
            jt["target_loglik"] = t.target_loglik;
            jt["target_norm_loglik"] = t.target_norm_loglik;
            jt["null_loglik"] = t.null_loglik;
            jt["exact_match"] = t.exact_match;
            json gens = json::array();
            for (const auto& g : t.generations) gens.push_back(generation_to_json(g));
            jt["generations"] = std::move(gens);
            if (!t.top_beam_distributions.empty()) {
                jt["top_beam_distributions"] = t.top_beam_distributions;
            }
            per.push_back(std::move(jt));
        }
        j["per_template"] = std::move(per);
        out << j.dump() << "\n";
    }

    json meta;
    meta["model_id"] = model_id;
    meta["skipped"] = result.skipped;
    meta["config"] = json::parse(cfg.to_json());
    std::ofstream mout(path + ".config.json", std::ios::binary);
    if (!mout) throw CorpusIoError("cannot open for writing: " + path + ".config.json");
    mout << meta.dump(2) << "\n";
}

std::vector<SubjectProbeOutcome> load_outcomes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open outcomes: " + path);
    std::vector<SubjectProbeOutcome> outcomes;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        SubjectProbeOutcome o;
        o.record_id = j.at("record_id").get<std::string>();
        o.target_type = PiiType::from_key(j.at("target_type").get<std::string>());
        o.target_value = j.at("target_value").get<std::string>();
        o.null_value = j.value("null_value", "");
        o.agg_target_loglik = j.at("agg_target_loglik").get<double>();
        o.agg_null_loglik = j.at("agg_null_loglik").get<double>();
        o.agg_exact = j.at("agg_exact").get<bool>();
        for (const auto& jt : j.at("per_template")) {
            TemplateOutcome t;
            t.template_id = jt.at("template_id").get<int>();
            t.k_shot_index = jt.at("k_shot_index").get<int>();
            t.prompt_text = jt.at("prompt_text").get<std::string>();
            t.target_loglik = jt.at("target_loglik").get<double>();
            t.target_norm_loglik = jt.at("target_norm_loglik").get<double>();
            t.null_loglik = jt.at("null_loglik").get<double>();
            t.exact_match = jt.at("exact_match").get<bool>();
            for (const auto& jg : jt.at("generations")) {
                t.generations.push_back(generation_from_json(jg));
            }
            if (jt.contains("top_beam_distributions")) {
                t.top_beam_distributions =
                    jt["top_beam_distributions"].get<std::vector<std::vector<double>>>();
            }
            o.per_template.push_back(std::move(t));
        }
        outcomes.push_back(std::move(o));
    }
    return outcomes;
}

} // namespace piiprobe
