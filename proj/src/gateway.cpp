#include "pairgen/gateway.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace pairgen {

namespace {

using nlohmann::json;

constexpr std::size_t kErrorExcerptBytes = 300;

struct ParsedUrl {
    std::string scheme_host_port;
    std::string path_prefix;
};

ParsedUrl split_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw GatewayError(GatewayError::Kind::InvalidRequest, "base_url needs an http:// or https:// scheme");
    }
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw GatewayError(GatewayError::Kind::InvalidRequest, "unsupported base_url scheme '" + scheme + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, ""};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string redact(std::string text, const std::string& secret) {
    if (secret.empty()) {
        return text;
    }
    for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
        text.replace(pos, secret.size(), "[redacted]");
    }
    return text;
}

std::optional<int> parse_retry_after(const std::string& value) {
    if (value.empty()) {
        return std::nullopt;
    }
    char* end = nullptr;
    const long v = std::strtol(value.c_str(), &end, 10);
    if (end == value.c_str() || v < 0) {
        return std::nullopt;
    }
    return static_cast<int>(v);
}

}  // namespace

void EngineConfig::normalize() {
    while (!base_url.empty() && base_url.back() == '/') {
        base_url.pop_back();
    }
}

const char* to_string(GatewayError::Kind kind) {
    switch (kind) {
    case GatewayError::Kind::InvalidRequest: return "InvalidRequest";
    case GatewayError::Kind::MissingCredentials: return "MissingCredentials";
    case GatewayError::Kind::AuthFailed: return "AuthFailed";
    case GatewayError::Kind::RateLimited: return "RateLimited";
    case GatewayError::Kind::ProviderError: return "ProviderError";
    case GatewayError::Kind::Timeout: return "Timeout";
    case GatewayError::Kind::MalformedStream: return "MalformedStream";
    case GatewayError::Kind::Cancelled: return "Cancelled";
    }
    return "GatewayError";
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) {
            return std::string(v);
        }
        return std::nullopt;
    };
}

EnvLookup env_from_map(std::map<std::string, std::string> values) {
    return [values = std::move(values)](const std::string& name) -> std::optional<std::string> {
        auto it = values.find(name);
        if (it == values.end()) {
            return std::nullopt;
        }
        return it->second;
    };
}

std::string resolve_credentials(const EngineConfig& config, const EnvLookup& env) {
    if (config.api_key && !config.api_key->empty()) {
        return *config.api_key;
    }
    if (config.api_key_env && !config.api_key_env->empty()) {
        if (auto v = env(*config.api_key_env); v && !v->empty()) {
            return *v;
        }
        throw GatewayError(GatewayError::Kind::MissingCredentials,
                           "no API key: environment variable " + *config.api_key_env + " is not set");
    }
    throw GatewayError(GatewayError::Kind::MissingCredentials, "no API key configured (api_key or api_key_env)");
}

const char* to_string(Role role) {
    switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "user";
}

void validate_request(const ChatRequest& request) {
    const auto& m = request.messages;
    if (m.size() < 2 || m[0].role != Role::System) {
        throw GatewayError(GatewayError::Kind::InvalidRequest,
                           "chat request must start with a system message followed by a user message");
    }
    if (std::count_if(m.begin(), m.end(), [](const auto& x) { return x.role == Role::System; }) != 1 ||
        std::none_of(m.begin() + 1, m.end(), [](const auto& x) { return x.role == Role::User; })) {
        throw GatewayError(GatewayError::Kind::InvalidRequest,
                           "chat request needs exactly one system message and at least one user message");
    }
    for (const auto& msg : m) {
        if (msg.role != Role::Assistant && msg.content.empty()) {
            throw GatewayError(GatewayError::Kind::InvalidRequest,
                               std::string(to_string(msg.role)) + " message content is empty");
        }
    }
    if (request.model.empty()) {
        throw GatewayError(GatewayError::Kind::InvalidRequest, "model is empty");
    }
    if (!request.stream) {
        throw GatewayError(GatewayError::Kind::InvalidRequest, "only streaming requests are supported");
    }
}

std::string serialize_request(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    return json{{"model", request.model},
                {"messages", std::move(messages)},
                {"temperature", request.temperature},
                {"max_tokens", request.max_tokens},
                {"stream", true}}
        .dump();
}

void SseDecoder::feed(std::string_view bytes) {
    pending_.append(bytes);
    std::size_t start = 0;
    for (auto nl = pending_.find('\n', start); nl != std::string::npos; nl = pending_.find('\n', start)) {
        handle_line(std::string_view(pending_).substr(start, nl - start));
        start = nl + 1;
    }
    pending_.erase(0, start);
}

void SseDecoder::finish() {
    if (!pending_.empty()) {
        std::string last = std::move(pending_);
        pending_.clear();
        handle_line(last);
    }
}

void SseDecoder::handle_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    if (line.substr(0, 5) != "data:") {
        return;
    }
    line.remove_prefix(5);
    if (!line.empty() && line.front() == ' ') {
        line.remove_prefix(1);
    }
    on_data_(line);
}

RetryDecision retry_policy(GatewayError::Kind error, int attempt) {
    const bool retryable = error == GatewayError::Kind::RateLimited || error == GatewayError::Kind::Timeout;
    if (!retryable || attempt < 1 || attempt > kMaxRetryAttempts) {
        return {};
    }
    const long long delay = std::min<long long>(1LL << std::min(attempt, 30), 30);
    return {true, std::chrono::seconds(delay)};
}

struct LlmGateway::Call {
    std::string id;
    std::recursive_mutex mutex;
    std::condition_variable_any wake;
    bool cancelled = false;
    httplib::Client* client = nullptr;
};

LlmGateway::LlmGateway() : LlmGateway(process_env()) {}

LlmGateway::LlmGateway(EnvLookup env) : env_(std::move(env)) {}

LlmGateway::~LlmGateway() = default;

std::string LlmGateway::open_request() {
    std::lock_guard lock(mutex_);
    std::string id = "req-" + std::to_string(next_id_++);
    auto call = std::make_shared<Call>();
    call->id = id;
    calls_.emplace(id, std::move(call));
    return id;
}

void LlmGateway::close_request(const std::string& request_id) {
    std::lock_guard lock(mutex_);
    calls_.erase(request_id);
}

std::shared_ptr<LlmGateway::Call> LlmGateway::lookup(const std::string& request_id) const {
    std::lock_guard lock(mutex_);
    auto it = calls_.find(request_id);
    return it == calls_.end() ? nullptr : it->second;
}

bool LlmGateway::cancel(const std::string& request_id) {
    auto call = lookup(request_id);
    if (!call) {
        return false;
    }
    std::lock_guard lock(call->mutex);
    call->cancelled = true;
    if (call->client) {
        call->client->stop();
    }
    call->wake.notify_all();
    return true;
}

std::size_t LlmGateway::in_flight() const {
    std::lock_guard lock(mutex_);
    return calls_.size();
}

std::string LlmGateway::complete_streaming(const EngineConfig& config, const ChatRequest& request,
                                           const ChunkConsumer& on_chunk, const std::string& request_id) {
    const bool owns_id = request_id.empty();
    const std::string id = owns_id ? open_request() : request_id;
    auto call = lookup(id);
    if (!call) {
        throw GatewayError(GatewayError::Kind::InvalidRequest, "unknown request id " + id);
    }
    bool delivered = false;
    try {
        auto text = stream_once(config, request, on_chunk, *call, delivered);
        if (owns_id) close_request(id);
        return text;
    } catch (...) {
        if (owns_id) close_request(id);
        throw;
    }
}

std::string LlmGateway::complete_with_retry(const EngineConfig& config, const ChatRequest& request,
                                            const ChunkConsumer& on_chunk, const std::string& request_id) {
    const bool owns_id = request_id.empty();
    const std::string id = owns_id ? open_request() : request_id;
    auto call = lookup(id);
    if (!call) {
        throw GatewayError(GatewayError::Kind::InvalidRequest, "unknown request id " + id);
    }
    auto release = [&] {
        if (owns_id) close_request(id);
    };
    for (int attempt = 1;; ++attempt) {
        bool delivered = false;
        try {
            auto text = stream_once(config, request, on_chunk, *call, delivered);
            release();
            return text;
        } catch (const GatewayError& e) {
            const auto decision = retry_policy(e.kind(), attempt);
            if (delivered || !decision.retry) {
                release();
                throw;
            }
            if (sleeper_) {
                sleeper_(decision.delay);
            } else {
                std::unique_lock lock(call->mutex);
                call->wake.wait_for(lock, decision.delay, [&] { return call->cancelled; });
            }
        } catch (...) {
            release();
            throw;
        }
    }
}

std::string LlmGateway::stream_once(const EngineConfig& config, const ChatRequest& request,
                                    const ChunkConsumer& on_chunk, Call& call, bool& delivered) {
    validate_request(request);
    const std::string key = resolve_credentials(config, env_);
    EngineConfig cfg = config;
    cfg.normalize();
    const ParsedUrl url = split_base_url(cfg.base_url);

    const std::string& request_id = call.id;

    httplib::Client client(url.scheme_host_port);
    client.set_keep_alive(false);
    client.set_connection_timeout(std::chrono::seconds(cfg.timeout_seconds));
    client.set_read_timeout(std::chrono::seconds(cfg.timeout_seconds));
    client.set_write_timeout(std::chrono::seconds(cfg.timeout_seconds));
    {
        std::lock_guard lock(call.mutex);
        if (call.cancelled) {
            throw GatewayError(GatewayError::Kind::Cancelled, "request cancelled");
        }
        call.client = &client;
    }
    struct Detach {
        Call& call;
        ~Detach() {
            std::lock_guard lock(call.mutex);
            call.client = nullptr;
        }
    } detach{call};

    int status = 0;
    std::optional<int> retry_after;
    std::string error_body;
    std::string assembled;
    bool done = false;
    std::optional<std::string> malformed;
    std::optional<std::string> provider_stream_error;
    std::exception_ptr consumer_error;

    SseDecoder decoder([&](std::string_view payload) {
        if (done || malformed || provider_stream_error || consumer_error) {
            return;
        }
        if (payload == "[DONE]") {
            done = true;
            return;
        }
        json j = json::parse(payload, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            malformed = "event payload is not a JSON object";
            return;
        }
        if (j.contains("error")) {
            provider_stream_error = j["error"].is_object() ? j["error"].value("message", j["error"].dump())
                                                          : j["error"].dump();
            return;
        }
        const auto choices = j.find("choices");
        if (choices == j.end() || !choices->is_array() || choices->empty()) {
            return;
        }
        const auto& first = (*choices)[0];
        if (!first.is_object() || !first.contains("delta") || !first["delta"].is_object()) {
            return;
        }
        const auto& delta = first["delta"];
        const auto content = delta.find("content");
        if (content == delta.end() || content->is_null()) {
            return;
        }
        if (!content->is_string()) {
            malformed = "delta content is not a string";
            return;
        }
        auto text = content->get<std::string>();
        if (text.empty()) {
            return;
        }
        std::lock_guard lock(call.mutex);
        if (call.cancelled) {
            return;
        }
        assembled += text;
        delivered = true;
        if (on_chunk) {
            try {
                on_chunk(ChatChunk{request_id, std::move(text), false});
            } catch (...) {
                consumer_error = std::current_exception();
            }
        }
    });

    httplib::Request req;
    req.method = "POST";
    req.path = url.path_prefix + "/chat/completions";
    req.headers = {{"Authorization", "Bearer " + key}, {"Content-Type", "application/json"}};
    req.body = serialize_request(request);
    req.response_handler = [&](const httplib::Response& res) {
        status = res.status;
        retry_after = parse_retry_after(res.get_header_value("Retry-After"));
        return true;
    };
    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
        if (status != 200) {
            if (error_body.size() < kErrorExcerptBytes) {
                error_body.append(data, std::min(len, kErrorExcerptBytes - error_body.size()));
            }
            return true;
        }
        decoder.feed(std::string_view(data, len));
        std::lock_guard lock(call.mutex);
        return !call.cancelled && !malformed && !provider_stream_error && !consumer_error;
    };

    auto result = client.send(req);

    {
        std::lock_guard lock(call.mutex);
        if (call.cancelled) {
            throw GatewayError(GatewayError::Kind::Cancelled, "request cancelled");
        }
    }
    if (consumer_error) {
        std::rethrow_exception(consumer_error);
    }
    if (malformed) {
        throw GatewayError(GatewayError::Kind::MalformedStream, "malformed stream: " + *malformed, status);
    }
    if (provider_stream_error) {
        throw GatewayError(GatewayError::Kind::ProviderError,
                           "provider error in stream: " + redact(*provider_stream_error, key), status);
    }
    if (!result) {
        const auto err = result.error();
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
            throw GatewayError(GatewayError::Kind::Timeout,
                               "no response from provider within " + std::to_string(cfg.timeout_seconds) + " s");
        }
        throw GatewayError(GatewayError::Kind::ProviderError,
                           "cannot reach provider at " + url.scheme_host_port + ": " + httplib::to_string(err));
    }
    if (status == 401 || status == 403) {
        throw GatewayError(GatewayError::Kind::AuthFailed,
                           "provider rejected the API key (HTTP " + std::to_string(status) + ")", status);
    }
    if (status == 429) {
        throw GatewayError(GatewayError::Kind::RateLimited, "provider rate limit (HTTP 429)", status, retry_after);
    }
    if (status != 200) {
        throw GatewayError(GatewayError::Kind::ProviderError,
                           "provider returned HTTP " + std::to_string(status) + ": " + redact(error_body, key),
                           status);
    }
    decoder.finish();
    if (malformed) {
        throw GatewayError(GatewayError::Kind::MalformedStream, "malformed stream: " + *malformed, status);
    }
    if (!done) {
        throw GatewayError(GatewayError::Kind::MalformedStream, "stream ended without [DONE]", status);
    }

    std::lock_guard lock(call.mutex);
    if (call.cancelled) {
        throw GatewayError(GatewayError::Kind::Cancelled, "request cancelled");
    }
    if (on_chunk) {
        on_chunk(ChatChunk{request_id, {}, true});
    }
    return assembled;
}

}  // namespace pairgen
