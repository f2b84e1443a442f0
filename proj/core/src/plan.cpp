#include "piiprobe/plan.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "piiprobe/corpus.hpp"
#include "piiprobe/errors.hpp"
#include "piiprobe/http_backend.hpp"
#include "piiprobe/metrics.hpp"
#include "piiprobe/miner.hpp"
#include "piiprobe/neural.hpp"
#include "piiprobe/ngram.hpp"
#include "piiprobe/prober.hpp"
#include "piiprobe/report.hpp"
#include "piiprobe/rng.hpp"
#include "piiprobe/soft_prompt.hpp"
#include "piiprobe/synth.hpp"
#include "piiprobe/tuner.hpp"

namespace piiprobe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Args {
public:
    explicit Args(const CommandArgs& args) : args_(args) {}

    std::string require(const std::string& key) const {
        auto it = args_.find(key);
        if (it == args_.end()) throw Error("missing required argument --" + key);
        return it->second;
    }
    std::string get(const std::string& key, const std::string& fallback = "") const {
        auto it = args_.find(key);
        return it == args_.end() ? fallback : it->second;
    }
    bool has(const std::string& key) const { return args_.count(key) != 0; }
    int get_int(const std::string& key, int fallback) const {
        auto it = args_.find(key);
        return it == args_.end() ? fallback : std::stoi(it->second);
    }
    double get_double(const std::string& key, double fallback) const {
        auto it = args_.find(key);
        return it == args_.end() ? fallback : std::stod(it->second);
    }
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = args_.find(key);
        return it == args_.end() ? fallback : std::stoull(it->second);
    }
    bool get_bool(const std::string& key, bool fallback = false) const {
        auto it = args_.find(key);
        if (it == args_.end()) return fallback;
        return it->second == "true" || it->second == "1" || it->second == "yes";
    }

private:
    const CommandArgs& args_;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::string cmd_synth(const Args& a) {
    SynthConfig cfg;
    cfg.num_subjects = a.get_int("subjects", 200);
    cfg.seed = a.get_u64("seed", 0);
    cfg.filler_docs = a.get_int("filler-docs", 0);
    cfg.eval_split = a.get_int("eval-split", 0);
    cfg.relationships = a.get_bool("relationships");
    cfg.affiliations = a.get_bool("affiliations");
    if (a.has("plants")) cfg.plants = parse_plants(a.get("plants"));

    SynthResult result = synth(cfg);
    write_corpus(a.require("corpus"), result.train_docs);
    result.manifest.save(a.require("manifest"));
    if (cfg.eval_split > 0) write_corpus(a.require("eval-corpus"), result.eval_docs);
    return "synth: " + std::to_string(result.train_docs.size()) + " train docs, " +
           std::to_string(result.eval_docs.size()) + " eval docs";
}

std::string cmd_mine(const Args& a) {
    MinerConfig cfg;
    cfg.max_link_distance_chars =
        static_cast<std::size_t>(a.get_int("max-link-distance", 500));
    cfg.workers = a.get_int("workers", 1);
    cfg.seed = a.get_u64("seed", 0);
    if (a.has("names-file")) cfg.name_gazetteer = read_lines(a.get("names-file"));
    if (a.has("universities-file")) {
        cfg.university_gazetteer = read_lines(a.get("universities-file"));
    } else if (a.get_bool("builtin-universities")) {
        cfg.university_gazetteer = builtin_university_gazetteer();
    }

    MineResult result = mine_corpus(a.require("corpus"), cfg);
    if (a.has("out-quadruplets")) result.quadruplets.save(a.get("out-quadruplets"));
    if (a.has("out-relationships")) result.relationships.save(a.get("out-relationships"));
    if (a.has("out-affiliations")) result.affiliations.save(a.get("out-affiliations"));
    if (a.has("summary")) {
        std::ofstream out(a.get("summary"), std::ios::binary);
        if (!out) throw CorpusIoError("cannot open for writing: " + a.get("summary"));
        out << result.summary_json();
    }
    return "mine: " + std::to_string(result.quadruplets.records.size()) + " quadruplets, " +
           std::to_string(result.relationships.records.size()) + " relationships, " +
           std::to_string(result.affiliations.records.size()) + " affiliations (" +
           std::to_string(result.skipped_lines) + " lines skipped)";
}

std::string cmd_fit_ngram(const Args& a) {
    auto docs = read_corpus(a.require("corpus"));
    NgramLm lm = NgramLm::fit(docs, a.get_int("order", 8), a.get_double("alpha", 0.01));
    lm.save(a.require("out"));
    return "fit-ngram: order " + std::to_string(lm.order()) + ", " +
           std::to_string(lm.context_count()) + " contexts";
}

std::string cmd_train_neural(const Args& a) {
    TinyNeuralLm model = [&] {
        if (a.has("init-from")) return TinyNeuralLm::load(a.get("init-from"));
        NeuralConfig cfg;
        cfg.context_window = a.get_int("context-window", 96);
        cfg.embed_dim = a.get_int("embed-dim", 32);
        cfg.hidden_dim = a.get_int("hidden-dim", 64);
        cfg.seed = a.get_u64("seed", 0);
        return TinyNeuralLm::init(cfg);
    }();

    TrainConfig cfg;
    cfg.epochs = a.get_int("epochs", 50);
    cfg.batch_size = a.get_int("batch-size", 64);
    cfg.adamw.lr = a.get_double("lr", 1e-3);

    auto docs = read_corpus(a.require("corpus"));
    TrainTrace trace;
    model = neural_train(std::move(model), docs, cfg, &trace);
    model.save(a.require("out"));
    std::ostringstream ss;
    ss << "train-neural: " << cfg.epochs << " epochs, final loss "
       << (trace.epoch_loss.empty() ? 0.0 : trace.epoch_loss.back());
    return ss.str();
}

ProbeConfig probe_config_from(const Args& a) {
    ProbeConfig cfg;
    cfg.k_templates = a.get_int("k-templates", 5);
    int beam = a.get_int("beam", 3);
    cfg.decode = a.get_bool("greedy") ? DecodeParams::greedy(1) : DecodeParams::beam(beam, 1);
    cfg.target_type = PiiType::from_key(a.get("target", "phone"));
    cfg.association_level = association_level_from_string(a.get("level", "twin"));
    cfg.null_seed = a.get_u64("null-seed", 0);
    cfg.full_distribution = a.get_bool("full-distribution");
    cfg.workers = a.get_int("workers", 1);
    if (a.has("max-new-tokens")) cfg.max_new_tokens_override = a.get_int("max-new-tokens", 0);
    return cfg;
}

std::string cmd_probe(const Args& a) {
    auto backend = open_backend(a.require("backend"));
    EvaluationSet set = EvaluationSet::load(a.require("eval-set"));
    ProbeConfig cfg = probe_config_from(a);
    RunResult result = run_eval(*backend, set, cfg);
    save_outcomes(a.require("out"), result, cfg, backend->model_id());
    std::size_t exact = 0;
    for (const auto& o : result.outcomes) exact += o.agg_exact ? 1 : 0;
    return "probe: " + std::to_string(result.outcomes.size()) + " subjects, " +
           std::to_string(exact) + " exact, " + std::to_string(result.skipped) + " skipped";
}

TuneConfig tune_config_from(const Args& a) {
    TuneConfig cfg;
    cfg.soft_tokens = a.get_int("soft-tokens", 20);
    cfg.epochs = a.get_int("epochs", 700);
    cfg.adamw.lr = a.get_double("lr", 0.005);
    cfg.subset_size = a.get_int("subset-size", 0);
    cfg.template_id = a.get_int("template-id", 1);
    cfg.level = association_level_from_string(a.get("level", "triplet"));
    cfg.target_type = PiiType::from_key(a.get("target", "phone"));
    cfg.init = init_scheme_from_string(a.get("init", "pii_type_word"));
    cfg.seed = a.get_u64("seed", 0);
    cfg.max_new_tokens = a.get_int("max-new-tokens", 0);
    return cfg;
}

std::string cmd_tune(const Args& a) {
    TinyNeuralLm model = TinyNeuralLm::load(a.require("model"));
    EvaluationSet tuning_source = EvaluationSet::load(a.require("tuning-set"));
    TuneConfig cfg = tune_config_from(a);

    TuningSet dtilde = TuningSet::from_eval_set(tuning_source, cfg.subset_size);
    if (a.has("eval-set")) dtilde.check_disjoint(EvaluationSet::load(a.get("eval-set")));

    TuneResult result = tune(model, dtilde, cfg);
    result.best.save(a.require("out"));
    if (a.has("trace")) save_trace_csv(a.get("trace"), result.trace);
    return "tune: best epoch " + std::to_string(result.best_epoch) + " with " +
           std::to_string(result.trace[static_cast<std::size_t>(result.best_epoch)].exact_count) +
           "/" + std::to_string(dtilde.records.size()) + " exact";
}

std::string cmd_eval_soft(const Args& a) {
    TinyNeuralLm model = TinyNeuralLm::load(a.require("model"));
    SoftPrompt soft = SoftPrompt::load(a.require("soft"));
    EvaluationSet set = EvaluationSet::load(a.require("eval-set"));
    TuneConfig cfg = tune_config_from(a);
    cfg.target_type = soft.target_type;

    SoftEvalResult result = eval_soft(model, soft, set, cfg);
    json j;
    j["exact_count"] = result.exact_count;
    j["n"] = result.rows.size();
    j["mean_target_loglik"] = result.mean_target_loglik;
    j["skipped"] = result.skipped;
    json rows = json::array();
    for (const auto& r : result.rows) {
        rows.push_back({{"record_id", r.record_id},
                        {"exact", r.exact},
                        {"target_loglik", r.target_loglik},
                        {"generated", r.generated}});
    }
    j["rows"] = std::move(rows);
    std::ofstream out(a.require("out"), std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + a.get("out"));
    out << j.dump(2) << "\n";
    return "eval-soft: " + std::to_string(result.exact_count) + "/" +
           std::to_string(result.rows.size()) + " exact";
}

std::string cmd_project(const Args& a) {
    SoftPrompt soft = SoftPrompt::load(a.require("soft"));
    TinyNeuralLm model = TinyNeuralLm::load(a.require("model"));
    auto [ids, text] = project_to_hard(soft, model);
    json j;
    j["token_ids"] = ids;
    j["text"] = text;
    std::ofstream out(a.require("out"), std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + a.get("out"));
    out << j.dump(2) << "\n";
    return "project: \"" + text + "\"";
}

std::string cmd_transfer(const Args& a) {
    SoftPrompt soft = SoftPrompt::load(a.require("soft"));
    TinyNeuralLm source = TinyNeuralLm::load(a.require("source-model"));
    auto [ids, prefix] = project_to_hard(soft, source);

    EvaluationSet set = EvaluationSet::load(a.require("eval-set"));
    TuneConfig cfg = tune_config_from(a);
    cfg.target_type = soft.target_type;

    std::vector<TransferRow> rows;
    for (const auto& spec : split_list(a.require("backends"))) {
        auto backend = open_backend(spec);
        rows.push_back(transfer_row(*backend, set, cfg, prefix));
    }
    write_transfer_csv(a.require("out"), rows);
    return "transfer: " + std::to_string(rows.size()) + " backends, prefix \"" + prefix + "\"";
}

std::string cmd_report(const Args& a) {
    std::vector<double> ks = default_gamma_ks();
    if (a.has("ks")) {
        ks.clear();
        for (const auto& s : split_list(a.get("ks"))) ks.push_back(std::stod(s));
    }
    auto files = split_list(a.require("outcomes"));
    emit_report(files, a.require("out-dir"), ks);
    return "report: " + std::to_string(files.size()) + " outcome set(s) -> " + a.get("out-dir");
}

} // namespace

std::string run_command(const std::string& command, const CommandArgs& args) {
    Args a(args);
    if (command == "synth") return cmd_synth(a);
    if (command == "mine") return cmd_mine(a);
    if (command == "fit-ngram") return cmd_fit_ngram(a);
    if (command == "train-neural") return cmd_train_neural(a);
    if (command == "probe") return cmd_probe(a);
    if (command == "tune") return cmd_tune(a);
    if (command == "eval-soft") return cmd_eval_soft(a);
    if (command == "project") return cmd_project(a);
    if (command == "transfer") return cmd_transfer(a);
    if (command == "report") return cmd_report(a);
    throw Error("unknown command: " + command);
}

Plan Plan::from_json_text(const std::string& text) {
    json doc = json::parse(text);
    Plan plan;
    plan.out_dir = doc.at("out_dir").get<std::string>();
    plan.workers = doc.value("workers", 1);
    for (const auto& js : doc.at("steps")) {
        PlanStep step;
        step.command = js.at("command").get<std::string>();
        step.name = js.value("name", step.command);
        if (js.contains("args")) {
            for (const auto& [key, value] : js["args"].items()) {
                step.args[key] = value.is_string() ? value.get<std::string>() : value.dump();
            }
        }
        plan.steps.push_back(std::move(step));
    }
    return plan;
}

Plan Plan::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open plan: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

namespace {

std::string expand_out(const std::string& value, const std::string& out_dir) {
    std::string out = value;
    std::size_t pos;
    while ((pos = out.find("{out}")) != std::string::npos) {
        out.replace(pos, 5, out_dir);
    }
    return out;
}

// Commands whose output is worker-order-independent by contract.
bool accepts_workers(const std::string& command) {
    return command == "mine" || command == "probe";
}

} // namespace

PlanRunResult run_plan(const Plan& plan) {
    if (plan.out_dir.empty()) throw Error("plan needs an out_dir");
    fs::create_directories(plan.out_dir);

    for (const auto& step : plan.steps) {
        CommandArgs args;
        for (const auto& [key, value] : step.args) args[key] = expand_out(value, plan.out_dir);
        if (accepts_workers(step.command) && !args.count("workers")) {
            args["workers"] = std::to_string(plan.workers);
        }
        try {
            run_command(step.command, args);
        } catch (const std::exception& e) {
            throw StepFailed(step.name, e.what());
        }
    }

    PlanRunResult result;
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(plan.out_dir)) {
        if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
            files.push_back(fs::relative(entry.path(), plan.out_dir));
        }
    }
    std::sort(files.begin(), files.end());

    json manifest;
    manifest["files"] = json::object();
    for (const auto& rel : files) {
        std::ifstream in(fs::path(plan.out_dir) / rel, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        char hex[24];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(ss.str())));
        manifest["files"][rel.generic_string()] = std::string("fnv1a64:") + hex;
        result.artifacts.push_back(rel.generic_string());
    }

    result.manifest_path = (fs::path(plan.out_dir) / "manifest.json").string();
    std::ofstream out(result.manifest_path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + result.manifest_path);
    out << manifest.dump(2) << "\n";
    return result;
}

const char* desk_blackbox_plan_json() {
    return R"PLAN({
  "out_dir": "desk_blackbox_out",
  "workers": 1,
  "steps": [
    {
      "name": "synth",
      "command": "synth",
      "args": {
        "subjects": "200",
        "seed": "41",
        "filler-docs": "20",
        "corpus": "{out}/corpus.jsonl",
        "manifest": "{out}/truth_manifest.json"
      }
    },
    {
      "name": "mine",
      "command": "mine",
      "args": {
        "corpus": "{out}/corpus.jsonl",
        "out-quadruplets": "{out}/quadruplets.json",
        "summary": "{out}/mine_summary.json"
      }
    },
    {
      "name": "fit-ngram",
      "command": "fit-ngram",
      "args": {
        "corpus": "{out}/corpus.jsonl",
        "order": "8",
        "alpha": "0.01",
        "out": "{out}/ngram.json"
      }
    },
    {
      "name": "probe",
      "command": "probe",
      "args": {
        "backend": "ngram:{out}/ngram.json",
        "eval-set": "{out}/quadruplets.json",
        "target": "phone",
        "level": "twin",
        "k-templates": "5",
        "beam": "3",
        "null-seed": "17",
        "out": "{out}/outcomes_phone.jsonl"
      }
    },
    {
      "name": "report",
      "command": "report",
      "args": {
        "outcomes": "{out}/outcomes_phone.jsonl",
        "out-dir": "{out}/report"
      }
    }
  ]
})PLAN";
}

} // namespace piiprobe
