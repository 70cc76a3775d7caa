#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "pairgen/context.hpp"
#include "pairgen/gateway.hpp"
#include "pairgen/prompt_library.hpp"

namespace pairgen {

enum class Stage { Validation, Template, Extraction, Config, Storage, Provider };

const char* to_string(Stage stage);

/// Engine failure labeled with the pipeline stage it came from.
class ActionError : public std::runtime_error {
public:
    ActionError(Stage stage, std::string kind, const std::string& message,
                std::optional<std::size_t> byte_offset = std::nullopt);

    Stage stage() const noexcept { return stage_; }
    // Name of the underlying error kind, e.g. "UnknownPlaceholder".
    const std::string& kind() const noexcept { return kind_; }
    // Offset into the offending template, for template errors.
    std::optional<std::size_t> byte_offset() const noexcept { return byte_offset_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    Stage stage_;
    std::string kind_;
    std::string detail_;
    std::optional<std::size_t> byte_offset_;
};

struct ByteRange {
    std::size_t start_byte = 0;
    std::size_t end_byte = 0;
};

struct ActionRequest {
    ActionKind action = ActionKind::Explain;
    std::string document_text;
    std::string language_id;
    ByteRange selection;
    std::size_t cursor = 0;
    std::string instruction;
    std::string output_language = "English";
    std::optional<std::string> override_template;
    // When set, {definition} binds to this named definition instead of
    // the one enclosing the cursor.
    std::optional<std::string> definition_name;
};

struct RenderedPrompt {
    std::string system;
    std::string prompt;

    bool operator==(const RenderedPrompt&) const = default;
};

enum class RunStatus { Running, Done, Cancelled, Failed };

const char* to_string(RunStatus status);

struct ActionRun {
    std::string run_id;
    std::string rendered_system;
    std::string rendered_prompt;
    std::string output_so_far;
    RunStatus status = RunStatus::Running;
    // Set when status == Failed.
    std::optional<Stage> error_stage;
    std::string error_kind;
    std::string error_message;
};

using RunChunkConsumer = std::function<void(const std::string& run_id, std::string_view delta)>;

/// Runs actions end to end: prompt resolution, context packing, rendering,
/// and the streamed completion. Safe to use from several threads; each run
/// reads an immutable snapshot of the prompt store.
class Orchestrator {
public:
    Orchestrator(EngineConfig config, PromptStore store, std::shared_ptr<LlmGateway> gateway = nullptr);

    // Everything run_action would send, without touching the network.
    RenderedPrompt preview_prompt(const ActionRequest& request) const;

    // Allocates a cancellable run id for a later run_action call.
    std::string open_run();
    // Throws ActionError for failures before the network call; provider
    // failures come back as a Failed run.
    ActionRun run_action(const ActionRequest& request, const RunChunkConsumer& on_chunk,
                         const std::string& run_id = {});
    bool cancel_run(const std::string& run_id);

    PromptEntry promote_override(const ActionRequest& request);

    std::shared_ptr<const PromptStore> prompts() const;
    // Applies a mutation to a copy of the store and publishes it on success.
    void update_prompts(const std::function<void(PromptStore&)>& mutate);

    EngineConfig config() const;
    void set_config(EngineConfig config);

    LlmGateway& gateway() noexcept { return *gateway_; }

private:
    struct Prepared {
        RenderedPrompt rendered;
        ModelParams params;
    };

    Prepared prepare(const ActionRequest& request, const PromptStore& store, const EngineConfig& config) const;

    mutable std::mutex mutex_;
    EngineConfig config_;
    std::shared_ptr<const PromptStore> store_;
    std::mutex store_write_mutex_;
    std::shared_ptr<LlmGateway> gateway_;
};

}  // namespace pairgen
