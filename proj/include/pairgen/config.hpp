#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "pairgen/gateway.hpp"

namespace pairgen {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Contents of the engine config file:
/// {"api": {"base_url", "api_key", "api_key_env", "model", "timeout_seconds"},
///  "context": {"token_budget_tokens"}, "prompts_path": "..."}
struct AppConfig {
    EngineConfig engine;
    std::filesystem::path prompts_path;
};

// $XDG_CONFIG_HOME/pairgen, else ~/.config/pairgen.
std::filesystem::path default_config_dir();
std::filesystem::path default_config_path();

AppConfig default_app_config();

// Missing keys keep their current value; unknown keys are rejected.
void apply_config_json(AppConfig& config, const nlohmann::json& patch);

// A missing file yields the defaults. Throws ConfigError.
AppConfig load_app_config(const std::filesystem::path& path);

// With redact_secrets the api_key is replaced by "api_key_set": bool.
nlohmann::json config_to_json(const AppConfig& config, bool redact_secrets);

}  // namespace pairgen
