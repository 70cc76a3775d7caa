#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pairgen/template.hpp"

namespace pairgen {

enum class ActionKind { Explain, Comment, Review, Edit };

inline constexpr ActionKind kAllActions[] = {ActionKind::Explain, ActionKind::Comment, ActionKind::Review,
                                             ActionKind::Edit};

const char* to_string(ActionKind action);
std::optional<ActionKind> parse_action(std::string_view name);

inline constexpr std::string_view kWildcardLanguage = "*";

struct ModelParams {
    double temperature = 0.2;
    int max_output_tokens = 1024;

    bool operator==(const ModelParams&) const = default;
};

struct PromptEntry {
    ActionKind action = ActionKind::Explain;
    std::string language_id;  // or "*"
    std::string template_source;
    std::string system_source;
    ModelParams params;

    bool operator==(const PromptEntry&) const = default;
};

class StoreError : public std::runtime_error {
public:
    enum class Kind { TemplateInvalid, InvalidEntry, StorageIo, ImportInvalid };

    StoreError(Kind kind, const std::string& message, std::optional<TemplateError> cause = std::nullopt)
        : std::runtime_error(message), kind_(kind), cause_(std::move(cause)) {}

    Kind kind() const noexcept { return kind_; }
    // The parse failure behind TemplateInvalid (and ImportInvalid when a
    // template was the problem).
    const std::optional<TemplateError>& template_error() const noexcept { return cause_; }

private:
    Kind kind_;
    std::optional<TemplateError> cause_;
};

const char* to_string(StoreError::Kind kind);

// Throws StoreError{TemplateInvalid} or StoreError{InvalidEntry}.
void validate_entry(const PromptEntry& entry);

// Prompt-pack JSON: {"version": 1, "entries": [...]}.
std::string dump_prompt_pack(const std::vector<PromptEntry>& entries);
// Structural parse only; entries are not validated. Throws StoreError{ImportInvalid}.
std::vector<PromptEntry> parse_prompt_pack(std::string_view json_text);

std::string_view builtin_prompt_data();
const std::vector<PromptEntry>& builtin_prompts();

enum class ImportMode { Merge, Replace };

/// Builtin prompts with a user layer on top. The user layer is persisted to
/// storage_path (when set) on every mutation via write-temp-then-rename.
class PromptStore {
public:
    // Empty path keeps the store in memory only.
    explicit PromptStore(std::filesystem::path storage_path = {});

    // Loads the user layer from storage_path if the file exists.
    static PromptStore open(std::filesystem::path storage_path);

    // user(action, lang) > user(action, *) > builtin(action, lang) > builtin(action, *)
    const PromptEntry& get(ActionKind action, std::string_view language_id) const;

    const PromptEntry& save(PromptEntry entry);
    // Removes a user entry; returns false when there was none.
    bool remove(ActionKind action, std::string_view language_id);

    void export_to(const std::filesystem::path& path) const;
    void import_from(const std::filesystem::path& path, ImportMode mode);

    const std::vector<PromptEntry>& builtin() const noexcept { return *builtin_; }
    const std::vector<PromptEntry>& user() const noexcept { return user_; }
    const std::filesystem::path& storage_path() const noexcept { return storage_path_; }

private:
    void commit(std::vector<PromptEntry> next);

    const std::vector<PromptEntry>* builtin_;
    std::vector<PromptEntry> user_;
    std::filesystem::path storage_path_;
};

// Writes `contents` to `path` through a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace pairgen
