#pragma once

#include <map>
#include <string>
#include <vector>

namespace piiprobe {

// Subcommands take string-typed arguments, exactly the CLI flag surface, so
// plan steps and the command line share one execution path.
using CommandArgs = std::map<std::string, std::string>;

// Runs one of: synth, mine, fit-ngram, train-neural, probe, tune, eval-soft,
// project, transfer, report. Returns a one-line result summary. Unknown
// commands or bad arguments throw.
std::string run_command(const std::string& command, const CommandArgs& args);

struct PlanStep {
    std::string name;
    std::string command;
    CommandArgs args;
};

struct Plan {
    std::string out_dir;
    int workers = 1;
    std::vector<PlanStep> steps;

    static Plan load(const std::string& path);
    static Plan from_json_text(const std::string& text);
};

struct PlanRunResult {
    std::vector<std::string> artifacts;   // relative paths under out_dir
    std::string manifest_path;
};

// Executes steps in order. "{out}" in argument values expands to the plan's
// out_dir; steps accepting a "workers" argument inherit the plan's setting
// unless they pin their own. Afterwards every file under out_dir is hashed
// into manifest.json (fnv1a64). Failures raise StepFailed naming the step.
PlanRunResult run_plan(const Plan& plan);

// The bundled end-to-end black-box plan: synth 200 subjects, mine, fit an
// order-8 n-gram, probe phones at k=5 beam 3, report.
const char* desk_blackbox_plan_json();

} // namespace piiprobe
