// piiprobe command line: synthetic corpora, mining, model fitting, probing,
// soft-prompt tuning and report emission. Every command is a pure function
// of its inputs and seeds; logs go to stderr as line-delimited JSON events.

#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "piiprobe/errors.hpp"
#include "piiprobe/plan.hpp"
#include "piiprobe/server.hpp"

using piiprobe::CommandArgs;

namespace {

void log_event(const nlohmann::json& event) { std::cerr << event.dump() << "\n"; }

// Collects CLI11 flag values into the string-typed args the command layer
// takes; only flags the user actually passed are forwarded, so command
// defaults live in one place.
class ArgCollector {
public:
    explicit ArgCollector(CLI::App* cmd) : cmd_(cmd) {}

    void option(const std::string& flag, const std::string& key, const std::string& help,
                bool required = false) {
        auto value = std::make_shared<std::string>();
        auto* opt = cmd_->add_option(flag, *value, help);
        if (required) opt->required();
        values_.emplace_back(key, value, opt);
    }

    void flag(const std::string& flag, const std::string& key, const std::string& help) {
        auto value = std::make_shared<bool>(false);
        auto* opt = cmd_->add_flag(flag, *value, help);
        flags_.emplace_back(key, value, opt);
    }

    CommandArgs collect() const {
        CommandArgs args;
        for (const auto& [key, value, opt] : values_) {
            if (opt->count() > 0) args[key] = *value;
        }
        for (const auto& [key, value, opt] : flags_) {
            if (opt->count() > 0 && *value) args[key] = "true";
        }
        return args;
    }

private:
    CLI::App* cmd_;
    std::vector<std::tuple<std::string, std::shared_ptr<std::string>, CLI::Option*>> values_;
    std::vector<std::tuple<std::string, std::shared_ptr<bool>, CLI::Option*>> flags_;
};

int run_collected(const std::string& command, const ArgCollector& collector) {
    log_event({{"event", "command_start"}, {"command", command}});
    try {
        std::string summary = piiprobe::run_command(command, collector.collect());
        log_event({{"event", "command_done"}, {"command", command}, {"summary", summary}});
        std::cout << summary << "\n";
        return 0;
    } catch (const std::exception& e) {
        log_event({{"event", "error"}, {"command", command}, {"message", e.what()}});
        return 2;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PII leakage probing toolkit"};
    app.require_subcommand(1);

    int exit_code = 0;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic PII corpus plus truth manifest");
    ArgCollector synth_args(synth);
    synth_args.option("--subjects", "subjects", "number of data subjects");
    synth_args.option("--seed", "seed", "generator seed");
    synth_args.option("--filler-docs", "filler-docs", "PII-free filler documents");
    synth_args.option("--eval-split", "eval-split", "subjects held out into a second corpus");
    synth_args.option("--plants", "plants", "planted sentences, level:template:kind list");
    synth_args.option("--corpus", "corpus", "output corpus JSONL", true);
    synth_args.option("--manifest", "manifest", "output truth manifest JSON", true);
    synth_args.option("--eval-corpus", "eval-corpus", "held-out corpus JSONL");
    synth_args.flag("--relationships", "relationships", "plant relationship sentences");
    synth_args.flag("--affiliations", "affiliations", "plant affiliation sentences");
    synth->callback([&] { exit_code = run_collected("synth", synth_args); });

    // mine
    auto* mine = app.add_subcommand("mine", "Extract PII records from a JSONL corpus");
    ArgCollector mine_args(mine);
    mine_args.option("--corpus", "corpus", "input corpus JSONL", true);
    mine_args.option("--out-quadruplets", "out-quadruplets", "quadruplet evaluation set");
    mine_args.option("--out-relationships", "out-relationships", "relationship evaluation set");
    mine_args.option("--out-affiliations", "out-affiliations", "affiliation evaluation set");
    mine_args.option("--summary", "summary", "machine-readable mining summary JSON");
    mine_args.option("--max-link-distance", "max-link-distance", "linking window in chars");
    mine_args.option("--names-file", "names-file", "name gazetteer, one per line");
    mine_args.option("--universities-file", "universities-file", "university gazetteer");
    mine_args.option("--workers", "workers", "parallel workers");
    mine_args.option("--seed", "seed", "seed recorded on the evaluation sets");
    mine_args.flag("--builtin-universities", "builtin-universities", "use the built-in gazetteer");
    mine->callback([&] { exit_code = run_collected("mine", mine_args); });

    // fit-ngram
    auto* fit = app.add_subcommand("fit-ngram", "Fit the smoothed character n-gram");
    ArgCollector fit_args(fit);
    fit_args.option("--corpus", "corpus", "training corpus JSONL", true);
    fit_args.option("--order", "order", "n-gram order (default 8)");
    fit_args.option("--alpha", "alpha", "smoothing constant (default 0.01)");
    fit_args.option("--out", "out", "output model file", true);
    fit->callback([&] { exit_code = run_collected("fit-ngram", fit_args); });

    // train-neural
    auto* train = app.add_subcommand("train-neural", "Train the tiny neural reference model");
    ArgCollector train_args(train);
    train_args.option("--corpus", "corpus", "training corpus JSONL", true);
    train_args.option("--out", "out", "output model file", true);
    train_args.option("--context-window", "context-window", "context window C (default 96)");
    train_args.option("--embed-dim", "embed-dim", "embedding dim d (default 32)");
    train_args.option("--hidden-dim", "hidden-dim", "hidden dim H (default 64)");
    train_args.option("--seed", "seed", "init seed");
    train_args.option("--epochs", "epochs", "training epochs (default 50)");
    train_args.option("--lr", "lr", "learning rate (default 1e-3)");
    train_args.option("--batch-size", "batch-size", "minibatch size (default 64)");
    train_args.option("--init-from", "init-from", "continue from an existing model file");
    train->callback([&] { exit_code = run_collected("train-neural", train_args); });

    // probe
    auto* probe = app.add_subcommand("probe", "Run black-box probing over an evaluation set");
    ArgCollector probe_args(probe);
    probe_args.option("--backend", "backend", "ngram:FILE | neural:FILE | http:URL", true);
    probe_args.option("--eval-set", "eval-set", "evaluation set JSON", true);
    probe_args.option("--out", "out", "outcome JSONL", true);
    probe_args.option("--target", "target", "target PII type (default phone)");
    probe_args.option("--level", "level", "association level (default twin)");
    probe_args.option("--k-templates", "k-templates", "templates per query, 1-5 (default 5)");
    probe_args.option("--beam", "beam", "beam size (default 3)");
    probe_args.option("--max-new-tokens", "max-new-tokens", "override per-type budget");
    probe_args.option("--null-seed", "null-seed", "null assignment seed");
    probe_args.option("--workers", "workers", "parallel workers");
    probe_args.flag("--greedy", "greedy", "greedy decoding instead of beam");
    probe_args.flag("--full-distribution", "full-distribution",
                    "record full next-token distributions (local backends)");
    probe->callback([&] { exit_code = run_collected("probe", probe_args); });

    // tune
    auto* tune = app.add_subcommand("tune", "Soft-prompt tuning against the neural model");
    ArgCollector tune_args(tune);
    tune_args.option("--model", "model", "neural model file", true);
    tune_args.option("--tuning-set", "tuning-set", "tuning records (evaluation set JSON)", true);
    tune_args.option("--eval-set", "eval-set", "evaluation set for the disjointness check");
    tune_args.option("--out", "out", "output soft prompt JSON", true);
    tune_args.option("--trace", "trace", "per-epoch trace CSV");
    tune_args.option("--soft-tokens", "soft-tokens", "soft prompt length (default 20)");
    tune_args.option("--epochs", "epochs", "tuning epochs (default 700)");
    tune_args.option("--lr", "lr", "learning rate (default 0.005)");
    tune_args.option("--subset-size", "subset-size", "use only the first n tuning records");
    tune_args.option("--template-id", "template-id", "template to tune against (default 1)");
    tune_args.option("--level", "level", "association level (default triplet)");
    tune_args.option("--target", "target", "target PII type (default phone)");
    tune_args.option("--init", "init", "pii_type_word | uniform | vocab_mean");
    tune_args.option("--seed", "seed", "init seed");
    tune_args.option("--max-new-tokens", "max-new-tokens", "override per-type budget");
    tune->callback([&] { exit_code = run_collected("tune", tune_args); });

    // eval-soft
    auto* esoft = app.add_subcommand("eval-soft", "Evaluate a soft prompt on held-out subjects");
    ArgCollector esoft_args(esoft);
    esoft_args.option("--model", "model", "neural model file", true);
    esoft_args.option("--soft", "soft", "soft prompt JSON", true);
    esoft_args.option("--eval-set", "eval-set", "evaluation set JSON", true);
    esoft_args.option("--out", "out", "per-subject results JSON", true);
    esoft_args.option("--template-id", "template-id", "template (default 1)");
    esoft_args.option("--level", "level", "association level (default triplet)");
    esoft_args.option("--max-new-tokens", "max-new-tokens", "override per-type budget");
    esoft->callback([&] { exit_code = run_collected("eval-soft", esoft_args); });

    // project
    auto* project = app.add_subcommand("project", "Project a soft prompt to hard tokens");
    ArgCollector project_args(project);
    project_args.option("--soft", "soft", "soft prompt JSON", true);
    project_args.option("--model", "model", "source neural model file", true);
    project_args.option("--out", "out", "output JSON {token_ids, text}", true);
    project->callback([&] { exit_code = run_collected("project", project_args); });

    // transfer
    auto* transfer = app.add_subcommand("transfer", "Project a soft prompt and score its prefix "
                                        "across backends");
    ArgCollector transfer_args(transfer);
    transfer_args.option("--soft", "soft", "soft prompt JSON", true);
    transfer_args.option("--source-model", "source-model", "model the prompt was tuned on", true);
    transfer_args.option("--backends", "backends", "comma-separated backend specs", true);
    transfer_args.option("--eval-set", "eval-set", "evaluation set JSON", true);
    transfer_args.option("--out", "out", "likelihood-ratio table CSV", true);
    transfer_args.option("--template-id", "template-id", "template (default 1)");
    transfer_args.option("--level", "level", "association level (default triplet)");
    transfer->callback([&] { exit_code = run_collected("transfer", transfer_args); });

    // report
    auto* report = app.add_subcommand("report", "Aggregate outcome files into report CSV/JSON");
    ArgCollector report_args(report);
    report_args.option("--outcomes", "outcomes", "comma-separated outcome JSONL files", true);
    report_args.option("--out-dir", "out-dir", "report directory", true);
    report_args.option("--ks", "ks", "gamma thresholds, comma separated");
    report->callback([&] { exit_code = run_collected("report", report_args); });

    // serve
    auto* serve = app.add_subcommand("serve", "Serve a model over the HTTP probe protocol");
    std::string serve_model, serve_host = "127.0.0.1";
    int serve_port = 8080;
    serve->add_option("--model", serve_model, "model file")->required();
    serve->add_option("--host", serve_host, "bind address (default 127.0.0.1)");
    serve->add_option("--port", serve_port, "port (default 8080)");
    serve->callback([&] {
        try {
            piiprobe::ProbeService service;
            service.set_model(piiprobe::load_model_file(serve_model));
            log_event({{"event", "serving"}, {"host", serve_host}, {"port", serve_port}});
            if (!service.listen(serve_host, serve_port)) {
                log_event({{"event", "error"}, {"message", "failed to bind"}});
                exit_code = 2;
            }
        } catch (const std::exception& e) {
            log_event({{"event", "error"}, {"message", e.what()}});
            exit_code = 2;
        }
    });

    // plan
    auto* plan = app.add_subcommand("plan", "Run an experiment plan file");
    std::string plan_path, plan_out;
    int plan_workers = 0;
    bool plan_bundled = false;
    plan->add_option("--file", plan_path, "plan JSON file");
    plan->add_flag("--bundled-desk-blackbox", plan_bundled, "run the bundled desk_blackbox plan");
    plan->add_option("--out-dir", plan_out, "override the plan's out_dir");
    plan->add_option("--workers", plan_workers, "override the plan's worker count");
    plan->callback([&] {
        try {
            piiprobe::Plan p = plan_bundled
                                   ? piiprobe::Plan::from_json_text(
                                         piiprobe::desk_blackbox_plan_json())
                                   : piiprobe::Plan::load(plan_path);
            if (!plan_out.empty()) p.out_dir = plan_out;
            if (plan_workers > 0) p.workers = plan_workers;
            log_event({{"event", "plan_start"}, {"out_dir", p.out_dir}});
            auto result = piiprobe::run_plan(p);
            log_event({{"event", "plan_done"},
                       {"artifacts", result.artifacts.size()},
                       {"manifest", result.manifest_path}});
            std::cout << "plan: " << result.artifacts.size() << " artifacts, manifest at "
                      << result.manifest_path << "\n";
        } catch (const piiprobe::StepFailed& e) {
            log_event({{"event", "step_failed"}, {"step", e.step()}, {"message", e.what()}});
            exit_code = 2;
        } catch (const std::exception& e) {
            log_event({{"event", "error"}, {"message", e.what()}});
            exit_code = 2;
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1
    }
    return exit_code;
}
