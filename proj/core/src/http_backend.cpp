#include "piiprobe/http_backend.hpp"

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

// Eigen before httplib: resolv.h's _res macro breaks Eigen's parsing.
#include "piiprobe/neural.hpp"
#include "piiprobe/ngram.hpp"
#include "piiprobe/server.hpp"

#include <httplib.h>
#include <json.hpp>

#include "piiprobe/errors.hpp"

namespace piiprobe {

using nlohmann::json;

namespace {

class Gate {
public:
    explicit Gate(int slots) : slots_(slots) {}
    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return slots_ > 0; });
        --slots_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            ++slots_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int slots_;
};

struct GateGuard {
    explicit GateGuard(Gate& g) : gate(g) { gate.acquire(); }
    ~GateGuard() { gate.release(); }
    Gate& gate;
};

} // namespace

struct HttpBackend::Impl {
    HttpBackendConfig cfg;
    mutable Gate gate;
    mutable std::mutex id_mu;
    mutable std::string cached_id;

    explicit Impl(HttpBackendConfig c) : cfg(std::move(c)), gate(cfg.max_in_flight) {}

    json request(const std::string& method, const std::string& path, const json* body) const {
        GateGuard guard(gate);
        std::string last_error;
        for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(cfg.backoff_ms << (attempt - 1)));
            }
            httplib::Client cli(cfg.base_url);
            cli.set_connection_timeout(cfg.timeout_sec, 0);
            cli.set_read_timeout(cfg.timeout_sec, 0);

            httplib::Result res = method == "GET"
                                      ? cli.Get(path)
                                      : cli.Post(path, body->dump(), "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;  // transport failure, retry
            }
            json parsed = json::parse(res->body, nullptr, /*allow_exceptions=*/false);
            if (res->status != 200) {
                std::string message = "HTTP " + std::to_string(res->status);
                if (!parsed.is_discarded() && parsed.contains("error")) {
                    message = parsed["error"].value("message", message);
                }
                throw ProtocolError(res->status, message);
            }
            if (parsed.is_discarded()) {
                throw ProtocolError(200, "response body is not valid JSON");
            }
            return parsed;
        }
        throw TransportError("request to " + cfg.base_url + path + " failed after " +
                             std::to_string(cfg.max_retries + 1) + " attempts: " + last_error);
    }
};

HttpBackend::HttpBackend(HttpBackendConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::model_id() const {
    std::lock_guard lock(impl_->id_mu);
    if (impl_->cached_id.empty()) {
        json health = impl_->request("GET", "/health", nullptr);
        if (!health.contains("model") || !health["model"].is_string()) {
            throw ProtocolError(200, "/health response lacks a model id");
        }
        impl_->cached_id = health["model"].get<std::string>();
    }
    return impl_->cached_id;
}

std::vector<double> HttpBackend::score(const std::string& prompt,
                                       const std::string& continuation) const {
    json body{{"prompt", prompt}, {"continuation", continuation}};
    json res = impl_->request("POST", "/v1/score", &body);
    if (!res.contains("token_logprobs") || !res["token_logprobs"].is_array()) {
        throw ProtocolError(200, "/v1/score response lacks token_logprobs");
    }
    auto lp = res["token_logprobs"].get<std::vector<double>>();
    for (double v : lp) {
        if (v > 0.0) throw ProtocolError(200, "token_logprobs contains a positive value");
    }
    return lp;
}

std::vector<GenerationResult> HttpBackend::generate(const std::string& prompt,
                                                    const DecodeParams& params) const {
    params.validate();
    const int beams = params.effective_beam();
    json body{
        {"prompt", prompt},         {"max_tokens", params.max_new_tokens},
        {"beam_size", beams},       {"n", beams},
        {"logprobs", 0},
    };
    json res = impl_->request("POST", "/v1/completions", &body);
    if (!res.contains("choices") || !res["choices"].is_array() ||
        res["choices"].size() != static_cast<std::size_t>(beams)) {
        throw ProtocolError(200, "completion response has the wrong number of choices");
    }

    std::vector<GenerationResult> results;
    results.reserve(static_cast<std::size_t>(beams));
    for (const auto& choice : res["choices"]) {
        GenerationResult gen;
        gen.text = choice.value("text", "");
        gen.finish_reason =
            choice.value("finish_reason", "length") == "stop" ? FinishReason::Stop
                                                              : FinishReason::MaxTokens;
        if (!choice.contains("logprobs") || choice["logprobs"].is_null() ||
            !choice["logprobs"].contains("token_logprobs")) {
            throw ProtocolError(200, "completion response lacks requested logprobs");
        }
        const auto& lp = choice["logprobs"];
        for (const auto& t : lp.at("tokens")) {
            std::string s = t.get<std::string>();
            gen.token_ids.push_back(s.empty() ? Tokenizer::kUnk : Tokenizer::char_to_id(s[0]));
        }
        for (const auto& v : lp.at("token_logprobs")) {
            if (v.is_null()) throw ProtocolError(200, "unexpected null token logprob");
            gen.token_logprobs.push_back(v.get<double>());
        }
        if (gen.token_ids.size() != gen.token_logprobs.size()) {
            throw ProtocolError(200, "tokens and token_logprobs lengths differ");
        }
        results.push_back(std::move(gen));
    }
    return results;
}

std::unique_ptr<LmBackend> open_backend(const std::string& spec) {
    auto colon = spec.find(':');
    if (colon == std::string::npos) {
        throw Error("backend spec must be ngram:FILE, neural:FILE or http:URL, got '" + spec + "'");
    }
    std::string kind = spec.substr(0, colon);
    std::string rest = spec.substr(colon + 1);
    if (kind == "ngram" || kind == "neural") {
        auto model = load_model_file(rest);
        bool is_ngram = dynamic_cast<const NgramLm*>(model.get()) != nullptr;
        if (is_ngram != (kind == "ngram")) {
            throw SchemaMismatch("model file " + rest + " is not a " + kind + " model");
        }
        return std::make_unique<LocalBackend>(std::move(model));
    }
    if (kind == "http") {
        HttpBackendConfig cfg;
        cfg.base_url = rest;
        return std::make_unique<HttpBackend>(std::move(cfg));
    }
    throw Error("unknown backend kind '" + kind + "'");
}

} // namespace piiprobe
