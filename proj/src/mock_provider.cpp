#include "pairgen/mock_provider.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace pairgen {

namespace {

using nlohmann::json;

bool continuation_byte(char c) {
    return (static_cast<unsigned char>(c) & 0xC0) == 0x80;
}

std::string sse_delta_event(std::string_view delta) {
    json event = {{"id", "chatcmpl-mock"},
                  {"object", "chat.completion.chunk"},
                  {"choices", json::array({{{"index", 0}, {"delta", {{"content", std::string(delta)}}}}})}};
    return "data: " + event.dump() + "\n\n";
}

}  // namespace

std::string echo_response(std::string_view last_user_message) {
    std::size_t bytes = 0;
    std::size_t chars = 0;
    while (bytes < last_user_message.size() && chars < kEchoChars) {
        ++bytes;
        while (bytes < last_user_message.size() && continuation_byte(last_user_message[bytes])) {
            ++bytes;
        }
        ++chars;
    }
    return std::string(kEchoPrefix) + std::string(last_user_message.substr(0, bytes));
}

std::vector<std::string> split_chunks(std::string_view text, std::size_t chunk_size) {
    if (chunk_size == 0) {
        throw std::invalid_argument("chunk_size must be positive");
    }
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t start = i;
        for (std::size_t n = 0; n < chunk_size && i < text.size(); ++n) {
            ++i;
            while (i < text.size() && continuation_byte(text[i])) {
                ++i;
            }
        }
        out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

MockScript MockScript::from_json(std::string_view json_text) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) {
        throw MockError(MockError::Kind::InvalidScript, "mock script is not valid JSON");
    }
    const json& rules = doc.is_array() ? doc : doc.value("rules", json::array());
    MockScript script;
    try {
        for (const auto& r : rules) {
            MockRule rule;
            rule.match = r.value("match", std::string{});
            rule.response = r.at("response").get<std::string>();
            rule.chunk_size = r.value("chunk_size", std::size_t{8});
            rule.pause_ms_between_chunks = r.value("pause_ms_between_chunks", 0);
            if (r.contains("status_override") && !r["status_override"].is_null()) {
                rule.status_override = r["status_override"].get<int>();
            }
            rule.omit_done = r.value("omit_done", false);
            if (rule.chunk_size == 0 || rule.pause_ms_between_chunks < 0) {
                throw std::invalid_argument("chunk_size must be > 0 and pause_ms_between_chunks >= 0");
            }
            script.rules.push_back(std::move(rule));
        }
    } catch (const std::exception& e) {
        throw MockError(MockError::Kind::InvalidScript, std::string("mock script: ") + e.what());
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MockError(MockError::Kind::InvalidScript, "cannot read mock script " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

MockProvider::MockProvider(MockScript script, int port, std::string host)
    : script_(std::move(script)), server_(std::make_unique<httplib::Server>()) {
    server_->Post(R"(.*/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
        {
            std::lock_guard lock(record_mutex_);
            recorded_.push_back(req.body);
        }
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("messages") || !body["messages"].is_array()) {
            res.status = 400;
            res.set_content(R"({"error":{"message":"request body must be a chat completion request"}})",
                            "application/json");
            return;
        }
        std::string last_user;
        for (const auto& m : body["messages"]) {
            if (m.value("role", std::string{}) == "user") {
                last_user = m.value("content", std::string{});
            }
        }

        MockRule rule;
        if (const MockRule* matched = select_rule(last_user)) {
            rule = *matched;
        } else {
            rule.response = echo_response(last_user);
            rule.chunk_size = kEchoChunkSize;
        }

        if (rule.status_override && *rule.status_override != 200) {
            res.status = *rule.status_override;
            res.set_content(json{{"error", {{"message", rule.response}, {"code", *rule.status_override}}}}.dump(),
                            "application/json");
            return;
        }

        auto chunks = std::make_shared<std::vector<std::string>>(split_chunks(rule.response, rule.chunk_size));
        res.status = 200;
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [chunks, pause = rule.pause_ms_between_chunks, omit_done = rule.omit_done](std::size_t,
                                                                                        httplib::DataSink& sink) {
                for (std::size_t i = 0; i < chunks->size(); ++i) {
                    if (i > 0 && pause > 0) {
                        std::this_thread::sleep_for(std::chrono::milliseconds(pause));
                    }
                    const std::string event = sse_delta_event((*chunks)[i]);
                    if (!sink.is_writable() || !sink.write(event.data(), event.size())) {
                        return false;
                    }
                }
                if (!omit_done) {
                    static constexpr std::string_view kDone = "data: [DONE]\n\n";
                    if (!sink.write(kDone.data(), kDone.size())) {
                        return false;
                    }
                }
                sink.done();
                return true;
            });
    });

    // httplib's default sets SO_REUSEPORT, which would let two mocks share a port.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });

    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
        if (port_ < 0) {
            throw MockError(MockError::Kind::PortUnavailable, "cannot bind a free port on " + host);
        }
    } else {
        if (!server_->bind_to_port(host, port)) {
            throw MockError(MockError::Kind::PortUnavailable,
                            "port " + std::to_string(port) + " on " + host + " is unavailable");
        }
        port_ = port;
    }
    base_url_ = "http://" + host + ":" + std::to_string(port_);
    listener_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

MockProvider::~MockProvider() {
    stop();
}

void MockProvider::stop() {
    if (server_) {
        server_->stop();
    }
    if (listener_.joinable()) {
        listener_.join();
    }
}

void MockProvider::wait() {
    if (listener_.joinable()) {
        listener_.join();
    }
}

std::vector<std::string> MockProvider::recorded_requests() const {
    std::lock_guard lock(record_mutex_);
    return recorded_;
}

const MockRule* MockProvider::select_rule(std::string_view last_user_message) const {
    for (const auto& rule : script_.rules) {
        if (last_user_message.find(rule.match) != std::string_view::npos) {
            return &rule;
        }
    }
    return nullptr;
}

}  // namespace pairgen
