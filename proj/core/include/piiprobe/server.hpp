#pragma once

#include <memory>
#include <string>

#include "piiprobe/backend.hpp"

namespace piiprobe {

// Loads an "ngram" or "neural" JSON model container behind the shared
// next-token interface, dispatching on the file's "type" field.
std::shared_ptr<const ConditionalLm> load_model_file(const std::string& path);

// HTTP completion endpoint over an embedded model:
//   POST /v1/completions  - text completion with logprobs/echo/beam_size
//   POST /v1/score        - teacher-forced {"prompt","continuation"} scoring
//   GET  /health          - {"status":"ok","model":...}
// Requests hitting the service before set_model() answer 503; malformed
// bodies or invariant violations answer 400 with {"error":{...}}.
class ProbeService {
public:
    ProbeService();
    ~ProbeService();
    ProbeService(const ProbeService&) = delete;
    ProbeService& operator=(const ProbeService&) = delete;

    void set_model(std::shared_ptr<const ConditionalLm> model);
    bool ready() const;

    // Binds (an ephemeral port when port == 0) and serves on a background
    // thread; returns the bound port or -1 on bind failure.
    int start(const std::string& host, int port = 0);
    void stop();

    // Blocking variant for the CLI.
    bool listen(const std::string& host, int port);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace piiprobe
