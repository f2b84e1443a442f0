#pragma once

#include <memory>
#include <string>

#include "piiprobe/backend.hpp"

namespace piiprobe {

struct HttpBackendConfig {
    std::string base_url;   // e.g. "http://127.0.0.1:8080"
    int max_in_flight = 8;
    int max_retries = 3;
    int backoff_ms = 100;   // doubles per retry
    int timeout_sec = 10;
};

// Client side of the probe wire protocol. score() talks to /v1/score,
// generate() to /v1/completions with the beam_size extension. Transport
// failures retry with exponential backoff (the requests are idempotent) and
// surface as TransportError; HTTP error statuses and schema violations
// surface as ProtocolError without retry.
class HttpBackend : public LmBackend {
public:
    explicit HttpBackend(HttpBackendConfig cfg);
    ~HttpBackend() override;

    std::string model_id() const override;  // fetched from /health, cached
    std::vector<double> score(const std::string& prompt,
                              const std::string& continuation) const override;
    std::vector<GenerationResult> generate(const std::string& prompt,
                                           const DecodeParams& params) const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// "ngram:FILE", "neural:FILE" or "http:URL" behind the backend contract.
std::unique_ptr<LmBackend> open_backend(const std::string& spec);

} // namespace piiprobe
