#include "pairgen/prompt_library.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

namespace pairgen {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string normalize_language(std::string_view id) {
    std::string out(id);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool same_key(const PromptEntry& e, ActionKind action, std::string_view language_id) {
    return e.action == action && e.language_id == language_id;
}

const PromptEntry* find_in(const std::vector<PromptEntry>& layer, ActionKind action, std::string_view lang) {
    auto it = std::find_if(layer.begin(), layer.end(), [&](const auto& e) { return same_key(e, action, lang); });
    return it == layer.end() ? nullptr : &*it;
}

void upsert(std::vector<PromptEntry>& layer, PromptEntry entry) {
    auto it = std::find_if(layer.begin(), layer.end(),
                           [&](const auto& e) { return same_key(e, entry.action, entry.language_id); });
    if (it != layer.end()) {
        *it = std::move(entry);
    } else {
        layer.push_back(std::move(entry));
    }
}

void check_template(std::string_view source, const char* field, ActionKind action, const std::string& lang) {
    try {
        parse_template(source);
    } catch (const TemplateError& e) {
        throw StoreError(StoreError::Kind::TemplateInvalid,
                         std::string(field) + " of " + to_string(action) + "/" + lang + ": " + e.what(), e);
    }
}

json entry_to_json(const PromptEntry& e) {
    return json{{"action", to_string(e.action)},
                {"language_id", e.language_id},
                {"system", e.system_source},
                {"template", e.template_source},
                {"temperature", e.params.temperature},
                {"max_output_tokens", e.params.max_output_tokens}};
}

PromptEntry entry_from_json(const json& j) {
    PromptEntry e;
    const auto action_name = j.at("action").get<std::string>();
    auto action = parse_action(action_name);
    if (!action) {
        throw std::invalid_argument("unknown action '" + action_name + "'");
    }
    e.action = *action;
    e.language_id = normalize_language(j.at("language_id").get<std::string>());
    e.system_source = j.value("system", std::string{});
    e.template_source = j.at("template").get<std::string>();
    e.params.temperature = j.value("temperature", e.action == ActionKind::Edit ? 0.7 : 0.2);
    e.params.max_output_tokens = j.value("max_output_tokens", 1024);
    return e;
}

}  // namespace

const char* to_string(ActionKind action) {
    switch (action) {
    case ActionKind::Explain: return "explain";
    case ActionKind::Comment: return "comment";
    case ActionKind::Review: return "review";
    case ActionKind::Edit: return "edit";
    }
    return "explain";
}

std::optional<ActionKind> parse_action(std::string_view name) {
    for (ActionKind a : kAllActions) {
        if (name == to_string(a)) {
            return a;
        }
    }
    return std::nullopt;
}

const char* to_string(StoreError::Kind kind) {
    switch (kind) {
    case StoreError::Kind::TemplateInvalid: return "TemplateInvalid";
    case StoreError::Kind::InvalidEntry: return "InvalidEntry";
    case StoreError::Kind::StorageIo: return "StorageIo";
    case StoreError::Kind::ImportInvalid: return "ImportInvalid";
    }
    return "StoreError";
}

void validate_entry(const PromptEntry& entry) {
    if (entry.language_id.empty()) {
        throw StoreError(StoreError::Kind::InvalidEntry, "prompt entry needs a language_id or \"*\"");
    }
    if (!(entry.params.temperature >= 0.0 && entry.params.temperature <= 2.0)) {
        throw StoreError(StoreError::Kind::InvalidEntry, "temperature must be within [0, 2]");
    }
    if (entry.params.max_output_tokens <= 0) {
        throw StoreError(StoreError::Kind::InvalidEntry, "max_output_tokens must be positive");
    }
    check_template(entry.system_source, "system", entry.action, entry.language_id);
    check_template(entry.template_source, "template", entry.action, entry.language_id);
    if (entry.action == ActionKind::Edit) {
        auto names = list_placeholders(parse_template(entry.template_source));
        if (std::find(names.begin(), names.end(), "instruction") == names.end()) {
            throw StoreError(StoreError::Kind::InvalidEntry, "edit templates must reference {instruction}");
        }
    }
}

std::string dump_prompt_pack(const std::vector<PromptEntry>& entries) {
    json arr = json::array();
    for (const auto& e : entries) {
        arr.push_back(entry_to_json(e));
    }
    return json{{"version", 1}, {"entries", std::move(arr)}}.dump(2) + "\n";
}

std::vector<PromptEntry> parse_prompt_pack(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw StoreError(StoreError::Kind::ImportInvalid, std::string("prompt pack is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("version", 0) != 1 || !doc.contains("entries") || !doc["entries"].is_array()) {
        throw StoreError(StoreError::Kind::ImportInvalid, "prompt pack must be {\"version\": 1, \"entries\": [...]}");
    }
    std::vector<PromptEntry> out;
    std::size_t index = 0;
    for (const auto& j : doc["entries"]) {
        try {
            out.push_back(entry_from_json(j));
        } catch (const std::exception& e) {
            throw StoreError(StoreError::Kind::ImportInvalid,
                             "entry " + std::to_string(index) + ": " + e.what());
        }
        ++index;
    }
    return out;
}

const std::vector<PromptEntry>& builtin_prompts() {
    static const std::vector<PromptEntry> pack = parse_prompt_pack(builtin_prompt_data());
    return pack;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw StoreError(StoreError::Kind::StorageIo, "cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw StoreError(StoreError::Kind::StorageIo, "cannot write " + tmp.string());
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            throw StoreError(StoreError::Kind::StorageIo, "short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw StoreError(StoreError::Kind::StorageIo, "cannot replace " + path.string());
    }
}

PromptStore::PromptStore(fs::path storage_path)
    : builtin_(&builtin_prompts()), storage_path_(std::move(storage_path)) {}

PromptStore PromptStore::open(fs::path storage_path) {
    PromptStore store(std::move(storage_path));
    if (!store.storage_path_.empty() && fs::exists(store.storage_path_)) {
        auto entries = parse_prompt_pack(read_file(store.storage_path_));
        for (auto& e : entries) {
            upsert(store.user_, std::move(e));
        }
    }
    return store;
}

const PromptEntry& PromptStore::get(ActionKind action, std::string_view language_id) const {
    const std::string lang = normalize_language(language_id);
    if (const auto* e = find_in(user_, action, lang)) return *e;
    if (const auto* e = find_in(user_, action, kWildcardLanguage)) return *e;
    if (const auto* e = find_in(*builtin_, action, lang)) return *e;
    if (const auto* e = find_in(*builtin_, action, kWildcardLanguage)) return *e;
    throw std::logic_error("builtin prompt pack lacks a wildcard entry");
}

const PromptEntry& PromptStore::save(PromptEntry entry) {
    entry.language_id = normalize_language(entry.language_id);
    validate_entry(entry);
    const ActionKind action = entry.action;
    const std::string lang = entry.language_id;
    auto next = user_;
    upsert(next, std::move(entry));
    commit(std::move(next));
    return *find_in(user_, action, lang);
}

bool PromptStore::remove(ActionKind action, std::string_view language_id) {
    const std::string lang = normalize_language(language_id);
    auto next = user_;
    auto it = std::find_if(next.begin(), next.end(), [&](const auto& e) { return same_key(e, action, lang); });
    if (it == next.end()) {
        return false;
    }
    next.erase(it);
    commit(std::move(next));
    return true;
}

void PromptStore::export_to(const fs::path& path) const {
    write_file_atomic(path, dump_prompt_pack(user_));
}

void PromptStore::import_from(const fs::path& path, ImportMode mode) {
    auto incoming = parse_prompt_pack(read_file(path));
    for (std::size_t i = 0; i < incoming.size(); ++i) {
        try {
            validate_entry(incoming[i]);
        } catch (const StoreError& e) {
            throw StoreError(StoreError::Kind::ImportInvalid,
                             "entry " + std::to_string(i) + " (" + to_string(incoming[i].action) + "/" +
                                 incoming[i].language_id + "): " + e.what(),
                             e.template_error());
        }
    }
    std::vector<PromptEntry> next = mode == ImportMode::Replace ? std::vector<PromptEntry>{} : user_;
    for (auto& e : incoming) {
        upsert(next, std::move(e));
    }
    commit(std::move(next));
}

void PromptStore::commit(std::vector<PromptEntry> next) {
    if (!storage_path_.empty()) {
        write_file_atomic(storage_path_, dump_prompt_pack(next));
    }
    user_ = std::move(next);
}

}  // namespace pairgen
