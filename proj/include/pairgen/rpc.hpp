#pragma once

#include <atomic>
#include <future>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairgen/config.hpp"
#include "pairgen/orchestrator.hpp"

namespace pairgen {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::string_view kServerName = "pairgen";
inline constexpr std::string_view kServerVersion = "0.1.0";

namespace rpc_error {
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
inline constexpr int kEngineError = -32000;
}  // namespace rpc_error

// "Content-Length: N\r\n\r\n" + payload, N in bytes.
std::string encode_frame(std::string_view payload);

/// Reads Content-Length framed messages. Header names are matched
/// case-insensitively; headers other than Content-Length are ignored.
class FrameReader {
public:
    explicit FrameReader(std::istream& in) : in_(in) {}

    // nullopt at end of input. A header block without a usable
    // Content-Length yields an empty payload so the caller can answer
    // with a parse error and keep reading.
    std::optional<std::string> next();

private:
    std::istream& in_;
};

/// Serializes frames onto one stream; safe to call from many threads.
class FrameWriter {
public:
    explicit FrameWriter(std::ostream& out) : out_(out) {}

    void write(const nlohmann::json& message);

private:
    std::mutex mutex_;
    std::ostream& out_;
};

// JSON <-> engine types, shared with tests and the CLI.
ActionRequest action_request_from_json(const nlohmann::json& params);
nlohmann::json prompt_entry_to_json(const PromptEntry& entry);

/// JSON-RPC 2.0 engine endpoint for editor clients.
class RpcServer {
public:
    RpcServer(Orchestrator& engine, AppConfig config, std::ostream& out);
    ~RpcServer();

    // Runs until end of input or a `shutdown` request.
    void serve(std::istream& in);

    // Handles one decoded frame; responses and notifications go to the
    // writer. Returns false once shutdown has been processed.
    bool handle_frame(std::string_view payload);

private:
    struct RunThread {
        std::thread thread;
        std::shared_ptr<std::atomic<bool>> finished;
    };

    nlohmann::json dispatch(const std::string& method, const nlohmann::json& params);
    nlohmann::json start_run(const nlohmann::json& params);
    void cancel_all_runs();
    void reap_finished_runs();
    void release_pending_starts();

    Orchestrator& engine_;
    AppConfig config_;
    FrameWriter writer_;
    std::mutex runs_mutex_;
    std::map<std::string, RunThread> runs_;
    // Runs whose thread may start once the action/run response is out.
    std::vector<std::shared_ptr<std::promise<void>>> pending_starts_;
};

}  // namespace pairgen
