#include "pairgen/rpc.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <istream>
#include <ostream>

#include "pairgen/context.hpp"

namespace pairgen {

using nlohmann::json;

namespace {

class InvalidParams : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MethodNotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

const json& require(const json& params, const char* key) {
    if (!params.is_object() || !params.contains(key)) {
        throw InvalidParams(std::string("missing parameter '") + key + "'");
    }
    return params.at(key);
}

template <typename T>
T require_as(const json& params, const char* key) {
    try {
        return require(params, key).get<T>();
    } catch (const json::exception&) {
        throw InvalidParams(std::string("parameter '") + key + "' has the wrong type");
    }
}

template <typename T>
T optional_as(const json& params, const char* key, T fallback) {
    if (!params.is_object() || !params.contains(key) || params[key].is_null()) {
        return fallback;
    }
    try {
        return params[key].get<T>();
    } catch (const json::exception&) {
        throw InvalidParams(std::string("parameter '") + key + "' has the wrong type");
    }
}

ActionKind action_param(const json& params) {
    auto name = require_as<std::string>(params, "action");
    auto action = parse_action(name);
    if (!action) {
        throw InvalidParams("unknown action '" + name + "'");
    }
    return *action;
}

json error_object(int code, const std::string& message, json data = nullptr) {
    json err = {{"code", code}, {"message", message}};
    if (!data.is_null()) {
        err["data"] = std::move(data);
    }
    return err;
}

json engine_error(const ActionError& e) {
    json data = {{"stage", to_string(e.stage())}, {"kind", e.kind()}};
    if (e.byte_offset()) {
        data["byte_offset"] = *e.byte_offset();
    }
    return error_object(rpc_error::kEngineError, e.what(), std::move(data));
}

json engine_error(const char* stage, const std::string& kind, const std::string& message) {
    return error_object(rpc_error::kEngineError, std::string(stage) + ": " + message,
                        {{"stage", stage}, {"kind", kind}});
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

std::string encode_frame(std::string_view payload) {
    std::string out = "Content-Length: " + std::to_string(payload.size()) + "\r\n\r\n";
    out.append(payload);
    return out;
}

std::optional<std::string> FrameReader::next() {
    std::size_t length = 0;
    bool has_length = false;
    bool saw_header = false;
    std::string line;
    while (std::getline(in_, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            if (!saw_header) {
                continue;  // tolerate stray blank lines between frames
            }
            break;
        }
        saw_header = true;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            continue;
        }
        if (lowercase(line.substr(0, colon)) == "content-length") {
            try {
                std::size_t used = 0;
                std::string value = line.substr(colon + 1);
                value.erase(0, value.find_first_not_of(' '));
                const auto n = std::stoull(value, &used);
                has_length = used == value.size();
                length = static_cast<std::size_t>(n);
            } catch (const std::exception&) {
                has_length = false;
            }
        }
    }
    if (!saw_header) {
        return std::nullopt;
    }
    if (!has_length) {
        return std::string{};
    }
    std::string payload(length, '\0');
    in_.read(payload.data(), static_cast<std::streamsize>(length));
    if (static_cast<std::size_t>(in_.gcount()) != length) {
        return std::nullopt;
    }
    return payload;
}

void FrameWriter::write(const json& message) {
    const std::string frame = encode_frame(message.dump());
    std::lock_guard lock(mutex_);
    out_.write(frame.data(), static_cast<std::streamsize>(frame.size()));
    out_.flush();
}

ActionRequest action_request_from_json(const json& params) {
    if (!params.is_object()) {
        throw InvalidParams("params must be an object");
    }
    ActionRequest r;
    r.action = action_param(params);
    r.document_text = require_as<std::string>(params, "document_text");
    r.language_id = require_as<std::string>(params, "language_id");
    if (params.contains("selection")) {
        const json& sel = params["selection"];
        r.selection.start_byte = require_as<std::size_t>(sel, "start_byte");
        r.selection.end_byte = require_as<std::size_t>(sel, "end_byte");
    } else {
        r.selection = {0, r.document_text.size()};
    }
    r.cursor = optional_as<std::size_t>(params, "cursor", r.selection.start_byte);
    r.instruction = optional_as<std::string>(params, "instruction", "");
    r.output_language = optional_as<std::string>(params, "output_language", "English");
    if (params.contains("override_template") && !params["override_template"].is_null()) {
        r.override_template = require_as<std::string>(params, "override_template");
    }
    if (params.contains("definition_name") && !params["definition_name"].is_null()) {
        r.definition_name = require_as<std::string>(params, "definition_name");
    }
    return r;
}

json prompt_entry_to_json(const PromptEntry& e) {
    return json{{"action", to_string(e.action)},
                {"language_id", e.language_id},
                {"system", e.system_source},
                {"template", e.template_source},
                {"temperature", e.params.temperature},
                {"max_output_tokens", e.params.max_output_tokens}};
}

RpcServer::RpcServer(Orchestrator& engine, AppConfig config, std::ostream& out)
    : engine_(engine), config_(std::move(config)), writer_(out) {}

RpcServer::~RpcServer() {
    cancel_all_runs();
}

void RpcServer::serve(std::istream& in) {
    FrameReader reader(in);
    while (auto payload = reader.next()) {
        if (!handle_frame(*payload)) {
            return;
        }
    }
    cancel_all_runs();
}

bool RpcServer::handle_frame(std::string_view payload) {
    json msg = json::parse(payload, nullptr, false);
    if (msg.is_discarded()) {
        writer_.write({{"jsonrpc", "2.0"}, {"id", nullptr}, {"error", error_object(rpc_error::kParseError, "parse error")}});
        return true;
    }
    const bool has_id = msg.is_object() && msg.contains("id") && !msg["id"].is_null();
    const json id = has_id ? msg["id"] : json(nullptr);
    auto reply_error = [&](json err) {
        if (has_id) {
            writer_.write({{"jsonrpc", "2.0"}, {"id", id}, {"error", std::move(err)}});
        }
    };
    if (!msg.is_object() || !msg.contains("method") || !msg["method"].is_string()) {
        writer_.write({{"jsonrpc", "2.0"}, {"id", id},
                       {"error", error_object(rpc_error::kInvalidRequest, "invalid request")}});
        return true;
    }
    const std::string method = msg["method"].get<std::string>();
    const json params = msg.value("params", json::object());

    try {
        json result = dispatch(method, params);
        if (has_id) {
            writer_.write({{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}});
        }
        release_pending_starts();
        if (method == "shutdown") {
            return false;
        }
    } catch (const InvalidParams& e) {
        reply_error(error_object(rpc_error::kInvalidParams, e.what()));
    } catch (const MethodNotFound& e) {
        reply_error(error_object(rpc_error::kMethodNotFound, e.what()));
    } catch (const ActionError& e) {
        reply_error(engine_error(e));
    } catch (const StoreError& e) {
        reply_error(engine_error(e.kind() == StoreError::Kind::StorageIo ? "storage" : "template", to_string(e.kind()),
                                 e.what()));
    } catch (const ConfigError& e) {
        reply_error(engine_error("config", "ConfigError", e.what()));
    } catch (const std::exception& e) {
        reply_error(engine_error("engine", "Internal", e.what()));
    }
    return true;
}

json RpcServer::dispatch(const std::string& method, const json& params) {
    if (method == "initialize") {
        return {{"server", kServerName}, {"version", kServerVersion}, {"protocol", kProtocolVersion}};
    }
    if (method == "shutdown") {
        cancel_all_runs();
        return nullptr;
    }
    if (method == "action/run") {
        return start_run(params);
    }
    if (method == "action/cancel") {
        const auto run_id = require_as<std::string>(params, "run_id");
        engine_.cancel_run(run_id);
        return {{"run_id", run_id}, {"acknowledged", true}};
    }
    if (method == "prompt/get") {
        const auto lang = require_as<std::string>(params, "language_id");
        return prompt_entry_to_json(engine_.prompts()->get(action_param(params), lang));
    }
    if (method == "prompt/save") {
        if (params.contains("request")) {
            return prompt_entry_to_json(engine_.promote_override(action_request_from_json(params["request"])));
        }
        const ActionKind action = action_param(params);
        const auto lang = require_as<std::string>(params, "language_id");
        const PromptEntry current = engine_.prompts()->get(action, lang);
        PromptEntry entry;
        entry.action = action;
        entry.language_id = lang;
        entry.template_source = require_as<std::string>(params, "template");
        entry.system_source = optional_as<std::string>(params, "system", current.system_source);
        entry.params.temperature = optional_as<double>(params, "temperature", current.params.temperature);
        entry.params.max_output_tokens = optional_as<int>(params, "max_output_tokens", current.params.max_output_tokens);
        PromptEntry saved;
        engine_.update_prompts([&](PromptStore& store) { saved = store.save(entry); });
        return prompt_entry_to_json(saved);
    }
    if (method == "prompt/delete") {
        const ActionKind action = action_param(params);
        const auto lang = require_as<std::string>(params, "language_id");
        bool removed = false;
        engine_.update_prompts([&](PromptStore& store) { removed = store.remove(action, lang); });
        return {{"deleted", removed}};
    }
    if (method == "prompt/preview") {
        const auto rendered = engine_.preview_prompt(action_request_from_json(params));
        return {{"system", rendered.system}, {"prompt", rendered.prompt}};
    }
    if (method == "prompt/import") {
        const auto path = require_as<std::string>(params, "path");
        const auto mode_name = optional_as<std::string>(params, "mode", "merge");
        if (mode_name != "merge" && mode_name != "replace") {
            throw InvalidParams("mode must be \"merge\" or \"replace\"");
        }
        const ImportMode mode = mode_name == "replace" ? ImportMode::Replace : ImportMode::Merge;
        std::size_t count = 0;
        engine_.update_prompts([&](PromptStore& store) {
            store.import_from(path, mode);
            count = store.user().size();
        });
        return {{"user_entries", count}};
    }
    if (method == "prompt/export") {
        const auto path = require_as<std::string>(params, "path");
        auto store = engine_.prompts();
        store->export_to(path);
        return {{"path", path}, {"entries", store->user().size()}};
    }
    if (method == "config/get") {
        return config_to_json(config_, true);
    }
    if (method == "config/set") {
        AppConfig next = config_;
        apply_config_json(next, params);
        if (next.prompts_path != config_.prompts_path) {
            auto reopened = PromptStore::open(next.prompts_path);
            engine_.update_prompts([&](PromptStore& store) { store = std::move(reopened); });
        }
        engine_.set_config(next.engine);
        config_ = std::move(next);
        return config_to_json(config_, true);
    }
    if (method == "languages/list") {
        return list_supported_languages();
    }
    throw MethodNotFound("method not found: " + method);
}

json RpcServer::start_run(const json& params) {
    const ActionRequest request = action_request_from_json(params);
    const RenderedPrompt preview = engine_.preview_prompt(request);
    const std::string run_id = engine_.open_run();

    reap_finished_runs();
    auto finished = std::make_shared<std::atomic<bool>>(false);
    // The thread waits on `start` so the action/run response is written
    // before any notification for this run.
    auto start = std::make_shared<std::promise<void>>();
    std::shared_future<void> started = start->get_future().share();

    std::thread worker([this, request, run_id, finished, started] {
        started.wait();
        json done = {{"run_id", run_id}};
        try {
            ActionRun run = engine_.run_action(request, [this](const std::string& id, std::string_view delta) {
                writer_.write({{"jsonrpc", "2.0"},
                               {"method", "action/chunk"},
                               {"params", {{"run_id", id}, {"delta", std::string(delta)}}}});
            }, run_id);
            done["status"] = to_string(run.status);
            done["output"] = run.output_so_far;
            if (run.status == RunStatus::Failed) {
                done["error"] = {{"stage", run.error_stage ? to_string(*run.error_stage) : "provider"},
                                 {"kind", run.error_kind},
                                 {"message", run.error_message}};
            }
        } catch (const ActionError& e) {
            done["status"] = to_string(RunStatus::Failed);
            done["output"] = "";
            done["error"] = {{"stage", to_string(e.stage())}, {"kind", e.kind()}, {"message", e.what()}};
        } catch (const std::exception& e) {
            done["status"] = to_string(RunStatus::Failed);
            done["output"] = "";
            done["error"] = {{"stage", "engine"}, {"kind", "Internal"}, {"message", e.what()}};
        }
        writer_.write({{"jsonrpc", "2.0"}, {"method", "action/done"}, {"params", std::move(done)}});
        finished->store(true);
    });
    {
        std::lock_guard lock(runs_mutex_);
        runs_.emplace(run_id, RunThread{std::move(worker), finished});
    }
    pending_starts_.push_back(std::move(start));
    return {{"run_id", run_id}, {"system", preview.system}, {"prompt", preview.prompt}};
}

void RpcServer::cancel_all_runs() {
    release_pending_starts();
    std::map<std::string, RunThread> runs;
    {
        std::lock_guard lock(runs_mutex_);
        runs.swap(runs_);
    }
    for (auto& [id, run] : runs) {
        engine_.cancel_run(id);
    }
    for (auto& [id, run] : runs) {
        if (run.thread.joinable()) {
            run.thread.join();
        }
    }
}

void RpcServer::release_pending_starts() {
    for (auto& start : pending_starts_) {
        start->set_value();
    }
    pending_starts_.clear();
}

void RpcServer::reap_finished_runs() {
    std::lock_guard lock(runs_mutex_);
    for (auto it = runs_.begin(); it != runs_.end();) {
        if (it->second.finished->load()) {
            it->second.thread.join();
            it = runs_.erase(it);
        } else {
            ++it;
        }
    }
}

}  // namespace pairgen
