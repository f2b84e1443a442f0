#include "piiprobe/server.hpp"

#include <atomic>
#include <optional>
#include <thread>

// Eigen (via neural.hpp) must be parsed before httplib pulls in resolv.h,
// whose _res macro mangles Eigen's kernel signatures.
#include "piiprobe/neural.hpp"
#include "piiprobe/ngram.hpp"

#include <httplib.h>
#include <json.hpp>

#include "piiprobe/errors.hpp"

namespace piiprobe {

using nlohmann::json;

std::shared_ptr<const ConditionalLm> load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open model: " + path);
    json probe = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (probe.is_discarded()) throw SchemaMismatch("model file is not JSON: " + path);
    std::string type = probe.value("type", "");
    if (type == "ngram") return std::make_shared<NgramLm>(NgramLm::load(path));
    if (type == "neural") return std::make_shared<TinyNeuralLm>(TinyNeuralLm::load(path));
    throw SchemaMismatch("unknown model type '" + type + "' in " + path);
}

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply_json(res, status, json{{"error", {{"message", message}, {"code", status}}}});
}

std::string token_text(TokenId id) {
    char c = Tokenizer::id_to_char(id);
    return c == '\0' ? std::string() : std::string(1, c);
}

// Top-k token map at one position, largest logprob first decides membership;
// ties resolve to lower token ids.
json top_logprobs_at(const std::vector<double>& dist, int k) {
    std::vector<TokenId> ids(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i) ids[i] = static_cast<TokenId>(i);
    std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](TokenId a, TokenId b) {
        if (dist[static_cast<std::size_t>(a)] != dist[static_cast<std::size_t>(b)]) {
            return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
        }
        return a < b;
    });
    json obj = json::object();
    for (int i = 0; i < k; ++i) {
        obj[token_text(ids[static_cast<std::size_t>(i)])] =
            dist[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])];
    }
    return obj;
}

} // namespace

struct ProbeService::Impl {
    httplib::Server svr;
    std::shared_ptr<const ConditionalLm> model;
    std::atomic<std::uint64_t> next_id{1};
    std::thread worker;

    const ConditionalLm* lm() const { return model.get(); }

    void setup_routes() {
        svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) {
                res.set_content(
                    json{{"error", {{"message", "not found"}, {"code", res.status}}}}.dump() + "\n",
                    "application/json");
            }
            return httplib::Server::HandlerResponse::Handled;
        });

        svr.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            if (!lm()) {
                reply_error(res, 503, "model is loading");
                return;
            }
            reply_json(res, 200, json{{"status", "ok"}, {"model", lm()->model_id()}});
        });

        svr.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
            if (!lm()) {
                reply_error(res, 503, "model is loading");
                return;
            }
            json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object()) {
                reply_error(res, 400, "request body is not valid JSON");
                return;
            }
            if (!body.contains("prompt") || !body["prompt"].is_string() ||
                !body.contains("continuation") || !body["continuation"].is_string()) {
                reply_error(res, 400, "expected string fields 'prompt' and 'continuation'");
                return;
            }
            try {
                auto lp = score_tokens(*lm(), body["prompt"].get<std::string>(),
                                       body["continuation"].get<std::string>());
                double total = 0.0;
                for (double v : lp) total += v;
                reply_json(res, 200, json{{"token_logprobs", lp}, {"total_logprob", total}});
            } catch (const EmptyContinuation& e) {
                reply_error(res, 400, e.what());
            }
        });

        svr.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
            handle_completions(req, res);
        });
    }

    void handle_completions(const httplib::Request& req, httplib::Response& res) {
        if (!lm()) {
            reply_error(res, 503, "model is loading");
            return;
        }
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            reply_error(res, 400, "request body is not valid JSON");
            return;
        }
        if (!body.contains("prompt") || !body["prompt"].is_string()) {
            reply_error(res, 400, "'prompt' is required and must be a string");
            return;
        }
        const std::string prompt = body["prompt"].get<std::string>();

        if (body.contains("model") && body["model"].is_string() &&
            body["model"].get<std::string>() != lm()->model_id()) {
            reply_error(res, 400, "unknown model '" + body["model"].get<std::string>() + "'");
            return;
        }

        int max_tokens = 16;
        if (body.contains("max_tokens")) {
            if (!body["max_tokens"].is_number_integer()) {
                reply_error(res, 400, "'max_tokens' must be an integer");
                return;
            }
            max_tokens = body["max_tokens"].get<int>();
        }
        if (max_tokens < 1) {
            reply_error(res, 400, "'max_tokens' must be >= 1");
            return;
        }

        std::optional<int> logprobs;
        if (body.contains("logprobs") && !body["logprobs"].is_null()) {
            if (!body["logprobs"].is_number_integer() || body["logprobs"].get<int>() < 0) {
                reply_error(res, 400, "'logprobs' must be a non-negative integer");
                return;
            }
            logprobs = body["logprobs"].get<int>();
        }
        const bool echo = body.value("echo", false);
        const int beam_size = body.value("beam_size", 1);
        if (beam_size < 1) {
            reply_error(res, 400, "'beam_size' must be >= 1");
            return;
        }
        const int n = body.value("n", 1);
        if (n < 1 || n > beam_size) {
            reply_error(res, 400, "'n' must be in [1, beam_size]");
            return;
        }

        auto results = decode(*lm(), prompt, DecodeParams::beam(beam_size, max_tokens));

        json choices = json::array();
        for (int i = 0; i < n; ++i) {
            const GenerationResult& gen = results[static_cast<std::size_t>(i)];
            json choice;
            choice["index"] = i;
            choice["text"] = gen.text;
            choice["finish_reason"] =
                gen.finish_reason == FinishReason::Stop ? "stop" : "length";

            if (logprobs) {
                int k = std::min(*logprobs, Tokenizer::kVocabSize);
                json tokens = json::array();
                json token_logprobs = json::array();
                json top = json::array();

                std::vector<TokenId> prefix;  // conditioning context, BOS first
                prefix.push_back(Tokenizer::kBos);
                if (echo) {
                    std::vector<TokenId> prompt_ids = Tokenizer::encode_raw(prompt);
                    for (std::size_t p = 0; p < prompt_ids.size(); ++p) {
                        tokens.push_back(token_text(prompt_ids[p]));
                        if (p == 0) {
                            // No usable context precedes the first token.
                            token_logprobs.push_back(nullptr);
                            if (k > 0) top.push_back(nullptr);
                        } else {
                            auto dist = lm()->next_logprobs(prefix);
                            token_logprobs.push_back(dist[static_cast<std::size_t>(prompt_ids[p])]);
                            if (k > 0) top.push_back(top_logprobs_at(dist, k));
                        }
                        prefix.push_back(prompt_ids[p]);
                    }
                } else {
                    std::vector<TokenId> prompt_ids = Tokenizer::encode_raw(prompt);
                    prefix.insert(prefix.end(), prompt_ids.begin(), prompt_ids.end());
                }

                for (std::size_t g = 0; g < gen.token_ids.size(); ++g) {
                    tokens.push_back(token_text(gen.token_ids[g]));
                    token_logprobs.push_back(gen.token_logprobs[g]);
                    if (k > 0) {
                        auto dist = lm()->next_logprobs(prefix);
                        top.push_back(top_logprobs_at(dist, k));
                    }
                    prefix.push_back(gen.token_ids[g]);
                }

                choice["logprobs"] = {
                    {"tokens", std::move(tokens)},
                    {"token_logprobs", std::move(token_logprobs)},
                    {"top_logprobs", k > 0 ? json(std::move(top)) : json(nullptr)},
                };
            } else {
                choice["logprobs"] = nullptr;
            }
            choices.push_back(std::move(choice));
        }

        json out;
        out["id"] = "cmpl-" + std::to_string(next_id.fetch_add(1));
        out["object"] = "text_completion";
        out["model"] = lm()->model_id();
        out["choices"] = std::move(choices);
        reply_json(res, 200, out);
    }
};

ProbeService::ProbeService() : impl_(std::make_unique<Impl>()) { impl_->setup_routes(); }

ProbeService::~ProbeService() { stop(); }

void ProbeService::set_model(std::shared_ptr<const ConditionalLm> model) {
    impl_->model = std::move(model);
}

bool ProbeService::ready() const { return impl_->model != nullptr; }

int ProbeService::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->svr.bind_to_any_port(host);
        if (bound < 0) return -1;
    } else if (!impl_->svr.bind_to_port(host, port)) {
        return -1;
    }
    impl_->worker = std::thread([this]() { impl_->svr.listen_after_bind(); });
    impl_->svr.wait_until_ready();
    return bound;
}

void ProbeService::stop() {
    if (impl_->svr.is_running()) impl_->svr.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

bool ProbeService::listen(const std::string& host, int port) {
    return impl_->svr.listen(host, port);
}

} // namespace piiprobe
