#include "piiprobe/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "piiprobe/errors.hpp"
#include "piiprobe/metrics.hpp"
#include "piiprobe/prober.hpp"

namespace piiprobe {

int TuneConfig::resolve_max_new_tokens(const PiiType& target) const {
    if (max_new_tokens > 0) return max_new_tokens;
    auto defaults = ProbeConfig::default_max_new_tokens();
    auto it = defaults.find(target.kind);
    return it != defaults.end() ? it->second : 20;
}

TuningSet TuningSet::from_eval_set(const EvaluationSet& set, int subset_size) {
    TuningSet t;
    t.records = set.records;
    if (subset_size > 0 && static_cast<std::size_t>(subset_size) < t.records.size()) {
        t.records.resize(static_cast<std::size_t>(subset_size));
    }
    return t;
}

void TuningSet::check_disjoint(const EvaluationSet& eval) const {
    std::set<std::string> eval_ids;
    for (const auto& r : eval.records) eval_ids.insert(r.record_id);
    for (const auto& r : records) {
        if (eval_ids.count(r.record_id)) {
            throw Error("tuning set overlaps evaluation set at record " + r.record_id);
        }
    }
}

namespace {

struct TuneExample {
    std::string prompt;
    std::string target;
};

std::vector<TuneExample> build_examples(const TinyNeuralLm& model, const TuningSet& dtilde,
                                        const TuneConfig& cfg) {
    const auto& templates = builtin_templates(cfg.level);
    if (cfg.template_id < 1 || static_cast<std::size_t>(cfg.template_id) > templates.size()) {
        throw KOutOfRange("template_id out of range");
    }
    const PromptTemplate& tpl = templates[static_cast<std::size_t>(cfg.template_id - 1)];

    std::vector<TuneExample> examples;
    examples.reserve(dtilde.records.size());
    for (const auto& record : dtilde.records) {
        ProbeQuery q = render(record, cfg.target_type, tpl);
        std::size_t total = static_cast<std::size_t>(cfg.soft_tokens) +
                            Tokenizer::encode(q.prompt_text).size() +
                            q.target_value.normalized.size();
        if (total > static_cast<std::size_t>(model.context_window())) {
            throw ContextOverflow("record " + record.record_id + " needs " +
                                  std::to_string(total) + " positions, window is " +
                                  std::to_string(model.context_window()));
        }
        examples.push_back(TuneExample{q.prompt_text, q.target_value.normalized});
    }
    return examples;
}

EpochStats snapshot_stats(const TinyNeuralLm& model, const Matrix& soft,
                          const std::vector<TuneExample>& examples, int epoch,
                          int max_new_tokens) {
    EpochStats stats;
    stats.epoch = epoch;
    double nll_sum = 0.0;
    for (const auto& ex : examples) {
        nll_sum += soft_nll(model, soft, ex.prompt, ex.target);
        GenerationResult gen = soft_greedy_decode(model, soft, ex.prompt, max_new_tokens);
        if (generation_contains(gen.text, ex.target)) ++stats.exact_count;
    }
    stats.mean_nll = nll_sum / static_cast<double>(examples.size());
    return stats;
}

bool better_snapshot(const EpochStats& a, const EpochStats& b) {
    // Highest exact count, then lowest NLL, then earliest epoch.
    if (a.exact_count != b.exact_count) return a.exact_count > b.exact_count;
    if (a.mean_nll != b.mean_nll) return a.mean_nll < b.mean_nll;
    return a.epoch < b.epoch;
}

} // namespace

TuneResult tune(const TinyNeuralLm& model, const TuningSet& dtilde, const TuneConfig& cfg) {
    TuningSet working = dtilde;
    if (cfg.subset_size > 0 && static_cast<std::size_t>(cfg.subset_size) < working.records.size()) {
        working.records.resize(static_cast<std::size_t>(cfg.subset_size));
    }
    if (working.records.empty()) throw Error("tuning set is empty");

    auto examples = build_examples(model, working, cfg);
    const int max_new = cfg.resolve_max_new_tokens(cfg.target_type);
    const std::uint64_t before = model.parameter_checksum();

    SoftPrompt soft = init_soft(cfg.init, cfg.soft_tokens, model, cfg.target_type, cfg.seed);

    TuneResult result;
    result.best = soft;
    EpochStats best_stats = snapshot_stats(model, soft.vectors, examples, 0, max_new);
    result.trace.push_back(best_stats);
    result.best_epoch = 0;

    AdamW opt(cfg.adamw);
    Matrix m = Matrix::Zero(soft.vectors.rows(), soft.vectors.cols());
    Matrix v = m;

    const double inv_n = 1.0 / static_cast<double>(examples.size());
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Matrix grad = Matrix::Zero(soft.vectors.rows(), soft.vectors.cols());
        double nll_sum = 0.0;
        for (const auto& ex : examples) {
            SoftGradResult g = grad_wrt_soft(model, soft.vectors, ex.prompt, ex.target);
            grad += g.grad;
            nll_sum += g.nll;
        }
        grad *= inv_n;
        if (!std::isfinite(nll_sum)) {
            throw NonFiniteLoss("soft-prompt NLL diverged at epoch " + std::to_string(epoch));
        }
        opt.begin_step();
        opt.update(soft.vectors, grad, m, v);

        EpochStats stats = snapshot_stats(model, soft.vectors, examples, epoch, max_new);
        result.trace.push_back(stats);
        if (better_snapshot(stats, best_stats)) {
            best_stats = stats;
            result.best.vectors = soft.vectors;
            result.best_epoch = epoch;
        }
    }

    if (model.parameter_checksum() != before) {
        throw Error("model parameters changed during tuning");
    }
    result.best.trained_epochs = result.best_epoch;
    result.best.init_scheme = cfg.init;
    result.best.source_model_id = model.model_id();
    result.best.target_type = cfg.target_type;
    return result;
}

void save_trace_csv(const std::string& path, const std::vector<EpochStats>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + path);
    out << "epoch,nll,exact_count\n";
    char buf[64];
    for (const auto& row : trace) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.mean_nll);
        out << row.epoch << "," << buf << "," << row.exact_count << "\n";
    }
}

std::vector<EpochStats> load_trace_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open trace: " + path);
    std::vector<EpochStats> trace;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        EpochStats row;
        std::getline(ss, field, ',');
        row.epoch = std::stoi(field);
        std::getline(ss, field, ',');
        row.mean_nll = std::stod(field);
        std::getline(ss, field, ',');
        row.exact_count = std::stoi(field);
        trace.push_back(row);
    }
    return trace;
}

SoftEvalResult eval_soft(const TinyNeuralLm& model, const SoftPrompt& soft,
                         const EvaluationSet& set, const TuneConfig& cfg) {
    const auto& templates = builtin_templates(cfg.level);
    const PromptTemplate& tpl = templates.at(static_cast<std::size_t>(cfg.template_id - 1));
    const int max_new = cfg.resolve_max_new_tokens(cfg.target_type);

    SoftEvalResult result;
    double ll_sum = 0.0;
    for (const auto& record : set.records) {
        ProbeQuery q;
        try {
            q = render(record, cfg.target_type, tpl);
        } catch (const MissingField&) {
            ++result.skipped;
            continue;
        }
        SoftEvalRow row;
        row.record_id = record.record_id;
        GenerationResult gen = soft_greedy_decode(model, soft.vectors, q.prompt_text, max_new);
        row.generated = gen.text;
        row.exact = generation_contains(gen.text, q.target_value.normalized);
        auto lp = soft_score_tokens(model, soft.vectors, q.prompt_text, q.target_value.normalized);
        row.target_loglik = likelihood_from_logprobs(lp).first;
        ll_sum += row.target_loglik;
        if (row.exact) ++result.exact_count;
        result.rows.push_back(std::move(row));
    }
    if (!result.rows.empty()) {
        result.mean_target_loglik = ll_sum / static_cast<double>(result.rows.size());
        result.mean_nll = -result.mean_target_loglik;
    }
    return result;
}

SoftEvalResult eval_soft(const LmBackend& backend, const SoftPrompt& soft,
                         const EvaluationSet& set, const TuneConfig& cfg) {
    const auto* local = dynamic_cast<const LocalBackend*>(&backend);
    const TinyNeuralLm* neural =
        local ? dynamic_cast<const TinyNeuralLm*>(&local->model()) : nullptr;
    if (!neural) {
        throw Error("soft prompts require an embedding-space model; backend '" +
                    backend.model_id() + "' does not expose one");
    }
    return eval_soft(*neural, soft, set, cfg);
}

SoftEvalResult eval_handcrafted(const LmBackend& backend, const EvaluationSet& set,
                                const TuneConfig& cfg) {
    const auto& templates = builtin_templates(cfg.level);
    const PromptTemplate& tpl = templates.at(static_cast<std::size_t>(cfg.template_id - 1));
    const int max_new = cfg.resolve_max_new_tokens(cfg.target_type);

    SoftEvalResult result;
    double ll_sum = 0.0;
    for (const auto& record : set.records) {
        ProbeQuery q;
        try {
            q = render(record, cfg.target_type, tpl);
        } catch (const MissingField&) {
            ++result.skipped;
            continue;
        }
        SoftEvalRow row;
        row.record_id = record.record_id;
        auto gens = backend.generate(q.prompt_text, DecodeParams::greedy(max_new));
        row.generated = gens.front().text;
        row.exact = generation_contains(row.generated, q.target_value.normalized);
        auto lp = backend.score(q.prompt_text, q.target_value.normalized);
        row.target_loglik = likelihood_from_logprobs(lp).first;
        ll_sum += row.target_loglik;
        if (row.exact) ++result.exact_count;
        result.rows.push_back(std::move(row));
    }
    if (!result.rows.empty()) {
        result.mean_target_loglik = ll_sum / static_cast<double>(result.rows.size());
        result.mean_nll = -result.mean_target_loglik;
    }
    return result;
}

TransferRow transfer_row(const LmBackend& backend, const EvaluationSet& set,
                         const TuneConfig& cfg, const std::string& prefix) {
    const auto& templates = builtin_templates(cfg.level);
    const PromptTemplate& tpl = templates.at(static_cast<std::size_t>(cfg.template_id - 1));

    TransferRow row;
    row.model_id = backend.model_id();
    row.prefix = prefix;
    double plain_sum = 0.0, prefixed_sum = 0.0;
    std::size_t n = 0;
    for (const auto& record : set.records) {
        ProbeQuery q;
        try {
            q = render(record, cfg.target_type, tpl);
        } catch (const MissingField&) {
            continue;
        }
        auto plain = backend.score(q.prompt_text, q.target_value.normalized);
        auto prefixed = backend.score(prefix + q.prompt_text, q.target_value.normalized);
        plain_sum += likelihood_from_logprobs(plain).first;
        prefixed_sum += likelihood_from_logprobs(prefixed).first;
        ++n;
    }
    if (n == 0) throw EmptyOutcomes("no renderable records for transfer scoring");
    row.mean_plain_loglik = plain_sum / static_cast<double>(n);
    row.mean_prefixed_loglik = prefixed_sum / static_cast<double>(n);
    row.log_amplification = row.mean_prefixed_loglik - row.mean_plain_loglik;
    return row;
}

} // namespace piiprobe
