#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pairgen {

struct EngineConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::optional<std::string> api_key;
    std::optional<std::string> api_key_env = std::string("OPENAI_API_KEY");
    std::string model = "gpt-3.5-turbo";
    int timeout_seconds = 60;
    std::size_t context_budget_tokens = 3000;

    // Strips trailing slashes from base_url.
    void normalize();
};

class GatewayError : public std::runtime_error {
public:
    enum class Kind {
        InvalidRequest,
        MissingCredentials,
        AuthFailed,
        RateLimited,
        ProviderError,
        Timeout,
        MalformedStream,
        Cancelled,
    };

    GatewayError(Kind kind, const std::string& message, int http_status = 0,
                 std::optional<int> retry_after_seconds = std::nullopt)
        : std::runtime_error(message), kind_(kind), http_status_(http_status), retry_after_(retry_after_seconds) {}

    Kind kind() const noexcept { return kind_; }
    int http_status() const noexcept { return http_status_; }
    std::optional<int> retry_after_seconds() const noexcept { return retry_after_; }

private:
    Kind kind_;
    int http_status_;
    std::optional<int> retry_after_;
};

const char* to_string(GatewayError::Kind kind);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

EnvLookup process_env();
EnvLookup env_from_map(std::map<std::string, std::string> values);

// api_key if set, else the variable named by api_key_env.
std::string resolve_credentials(const EngineConfig& config, const EnvLookup& env);

enum class Role { System, User, Assistant };
const char* to_string(Role role);

struct ChatMessage {
    Role role = Role::User;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.2;
    int max_tokens = 1024;
    bool stream = true;
};

// Exactly one leading system message, then at least one user message.
void validate_request(const ChatRequest& request);
// Wire body: model, messages[{role, content}], temperature, max_tokens, stream.
std::string serialize_request(const ChatRequest& request);

struct ChatChunk {
    std::string request_id;
    std::string delta;
    bool done = false;
};

using ChunkConsumer = std::function<void(const ChatChunk&)>;

/// Incremental decoder for a text/event-stream body. Emits the payload of
/// every `data:` line; other fields and comments are ignored.
class SseDecoder {
public:
    using DataHandler = std::function<void(std::string_view payload)>;

    explicit SseDecoder(DataHandler on_data) : on_data_(std::move(on_data)) {}

    void feed(std::string_view bytes);
    // Flushes a final line that had no terminating newline.
    void finish();

private:
    void handle_line(std::string_view line);

    DataHandler on_data_;
    std::string pending_;
};

struct RetryDecision {
    bool retry = false;
    std::chrono::seconds delay{0};

    bool operator==(const RetryDecision&) const = default;
};

inline constexpr int kMaxRetryAttempts = 3;

// RateLimited and Timeout back off min(2^attempt, 30) s for attempts 1..3.
RetryDecision retry_policy(GatewayError::Kind error, int attempt);

/// Client for OpenAI-compatible chat-completion endpoints. Streaming only.
/// Every in-flight call has an id that cancel() accepts from any thread.
class LlmGateway {
public:
    using Sleeper = std::function<void(std::chrono::seconds)>;

    LlmGateway();
    explicit LlmGateway(EnvLookup env);
    ~LlmGateway();

    LlmGateway(const LlmGateway&) = delete;
    LlmGateway& operator=(const LlmGateway&) = delete;

    // Registers a request id ahead of the call so it can be cancelled
    // before the connection exists. Release with close_request().
    std::string open_request();
    void close_request(const std::string& request_id);

    // Single attempt. Returns the concatenated deltas. When request_id is
    // empty a fresh id is used for the duration of the call.
    std::string complete_streaming(const EngineConfig& config, const ChatRequest& request,
                                   const ChunkConsumer& on_chunk, const std::string& request_id = {});

    // Applies retry_policy between attempts, but never after a delta has
    // reached the consumer.
    std::string complete_with_retry(const EngineConfig& config, const ChatRequest& request,
                                    const ChunkConsumer& on_chunk, const std::string& request_id = {});

    // Aborts the call. Returns false for unknown or finished ids (no-op).
    // After it returns the consumer sees no further chunks for the id.
    bool cancel(const std::string& request_id);

    std::size_t in_flight() const;

    // Replaces the backoff wait (tests). Default waits on the request's
    // cancellation signal.
    void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

private:
    struct Call;

    std::shared_ptr<Call> lookup(const std::string& request_id) const;
    std::string stream_once(const EngineConfig& config, const ChatRequest& request,
                            const ChunkConsumer& on_chunk, Call& call, bool& delivered);

    EnvLookup env_;
    Sleeper sleeper_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Call>> calls_;
    std::uint64_t next_id_ = 1;
};

}  // namespace pairgen
