#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace pairgen {

struct MockRule {
    std::string match;  // substring of the last user message
    std::string response;
    std::size_t chunk_size = 8;  // characters per delta
    int pause_ms_between_chunks = 0;
    std::optional<int> status_override;
    bool omit_done = false;  // end the stream without [DONE]
};

/// Ordered rules; the first match wins and an echo rule applies when
/// nothing matches.
struct MockScript {
    std::vector<MockRule> rules;

    static MockScript from_json(std::string_view json_text);
    static MockScript load(const std::filesystem::path& path);
};

inline constexpr std::string_view kEchoPrefix = "ECHO:";
inline constexpr std::size_t kEchoChars = 64;
inline constexpr std::size_t kEchoChunkSize = 8;

// "ECHO:" + the first 64 characters of the message.
std::string echo_response(std::string_view last_user_message);

// Splits text into deltas of chunk_size code points.
std::vector<std::string> split_chunks(std::string_view text, std::size_t chunk_size);

class MockError : public std::runtime_error {
public:
    enum class Kind { PortUnavailable, InvalidScript };

    MockError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Local OpenAI-compatible chat-completions server for offline tests.
/// Serves POST {base_url}/chat/completions as an SSE stream and records
/// every request body.
class MockProvider {
public:
    // port 0 picks a free port.
    explicit MockProvider(MockScript script = {}, int port = 0, std::string host = "127.0.0.1");
    ~MockProvider();

    MockProvider(const MockProvider&) = delete;
    MockProvider& operator=(const MockProvider&) = delete;

    const std::string& base_url() const noexcept { return base_url_; }
    int port() const noexcept { return port_; }

    // Raw bodies in arrival order.
    std::vector<std::string> recorded_requests() const;

    void stop();
    // Blocks until stop() is called from elsewhere.
    void wait();

private:
    const MockRule* select_rule(std::string_view last_user_message) const;

    MockScript script_;
    std::unique_ptr<httplib::Server> server_;
    std::thread listener_;
    std::string base_url_;
    int port_ = 0;
    mutable std::mutex record_mutex_;
    std::vector<std::string> recorded_;
};

}  // namespace pairgen
