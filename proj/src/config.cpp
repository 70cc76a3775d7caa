#include "pairgen/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace pairgen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const char* where) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) {
            throw ConfigError(std::string("unknown config key '") + where + key + "'");
        }
    }
}

std::optional<std::string> optional_string(const json& v) {
    if (v.is_null()) return std::nullopt;
    return v.get<std::string>();
}

}  // namespace

fs::path default_config_dir() {
    if (const char* xdg = std::getenv("XDG_CONFIG_HOME"); xdg && *xdg) {
        return fs::path(xdg) / "pairgen";
    }
    if (const char* home = std::getenv("HOME"); home && *home) {
        return fs::path(home) / ".config" / "pairgen";
    }
    return fs::current_path() / ".pairgen";
}

fs::path default_config_path() {
    return default_config_dir() / "config.json";
}

AppConfig default_app_config() {
    AppConfig c;
    c.prompts_path = default_config_dir() / "prompts.json";
    return c;
}

void apply_config_json(AppConfig& config, const json& patch) {
    if (!patch.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    AppConfig next = config;
    try {
        check_keys(patch, {"api", "context", "prompts_path"}, "");
        if (patch.contains("api")) {
            const json& api = patch["api"];
            if (!api.is_object()) throw ConfigError("config 'api' must be an object");
            // api_key_set is the redacted form emitted by config_to_json; accepted and ignored.
            check_keys(api, {"base_url", "api_key", "api_key_set", "api_key_env", "model", "timeout_seconds"}, "api.");
            if (api.contains("base_url")) next.engine.base_url = api["base_url"].get<std::string>();
            if (api.contains("api_key")) next.engine.api_key = optional_string(api["api_key"]);
            if (api.contains("api_key_env")) next.engine.api_key_env = optional_string(api["api_key_env"]);
            if (api.contains("model")) next.engine.model = api["model"].get<std::string>();
            if (api.contains("timeout_seconds")) next.engine.timeout_seconds = api["timeout_seconds"].get<int>();
        }
        if (patch.contains("context")) {
            const json& ctx = patch["context"];
            if (!ctx.is_object()) throw ConfigError("config 'context' must be an object");
            check_keys(ctx, {"token_budget_tokens"}, "context.");
            if (ctx.contains("token_budget_tokens")) {
                const auto budget = ctx["token_budget_tokens"].get<long long>();
                if (budget <= 0) throw ConfigError("context.token_budget_tokens must be positive");
                next.engine.context_budget_tokens = static_cast<std::size_t>(budget);
            }
        }
        if (patch.contains("prompts_path")) {
            next.prompts_path = patch["prompts_path"].get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }
    if (next.engine.timeout_seconds <= 0) {
        throw ConfigError("api.timeout_seconds must be positive");
    }
    if (next.engine.base_url.empty()) {
        throw ConfigError("api.base_url must not be empty");
    }
    if (next.engine.model.empty()) {
        throw ConfigError("api.model must not be empty");
    }
    next.engine.normalize();
    config = std::move(next);
}

AppConfig load_app_config(const fs::path& path) {
    AppConfig config = default_app_config();
    if (!fs::exists(path)) {
        return config;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    json doc = json::parse(ss.str(), nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError("config file " + path.string() + " is not valid JSON");
    }
    apply_config_json(config, doc);
    return config;
}

json config_to_json(const AppConfig& config, bool redact_secrets) {
    const auto& e = config.engine;
    json api = {{"base_url", e.base_url},
                {"api_key_env", e.api_key_env ? json(*e.api_key_env) : json(nullptr)},
                {"model", e.model},
                {"timeout_seconds", e.timeout_seconds}};
    if (redact_secrets) {
        api["api_key_set"] = e.api_key.has_value() && !e.api_key->empty();
    } else {
        api["api_key"] = e.api_key ? json(*e.api_key) : json(nullptr);
    }
    return json{{"api", std::move(api)},
                {"context", {{"token_budget_tokens", e.context_budget_tokens}}},
                {"prompts_path", config.prompts_path.string()}};
}

}  // namespace pairgen
