#include "pairgen/orchestrator.hpp"

#include "pairgen/template.hpp"

namespace pairgen {

namespace {

ActionError from_template_error(const TemplateError& e) {
    return ActionError(Stage::Template, to_string(e.kind()), e.what(), e.byte_offset());
}

ActionError from_store_error(const StoreError& e) {
    if (e.kind() == StoreError::Kind::StorageIo) {
        return ActionError(Stage::Storage, to_string(e.kind()), e.what());
    }
    std::optional<std::size_t> offset;
    if (e.template_error()) {
        offset = e.template_error()->byte_offset();
    }
    return ActionError(Stage::Template, to_string(e.kind()), e.what(), offset);
}

Template parse_or_throw(std::string_view source) {
    try {
        return parse_template(source);
    } catch (const TemplateError& e) {
        throw from_template_error(e);
    }
}

std::string render_or_throw(const Template& tmpl, const Bindings& bindings) {
    try {
        return render(tmpl, bindings);
    } catch (const TemplateError& e) {
        throw from_template_error(e);
    }
}

}  // namespace

const char* to_string(Stage stage) {
    switch (stage) {
    case Stage::Validation: return "validation";
    case Stage::Template: return "template";
    case Stage::Extraction: return "extraction";
    case Stage::Config: return "config";
    case Stage::Storage: return "storage";
    case Stage::Provider: return "provider";
    }
    return "engine";
}

const char* to_string(RunStatus status) {
    switch (status) {
    case RunStatus::Running: return "running";
    case RunStatus::Done: return "done";
    case RunStatus::Cancelled: return "cancelled";
    case RunStatus::Failed: return "failed";
    }
    return "failed";
}

ActionError::ActionError(Stage stage, std::string kind, const std::string& message,
                         std::optional<std::size_t> byte_offset)
    : std::runtime_error(std::string(to_string(stage)) + ": " + message),
      stage_(stage),
      kind_(std::move(kind)),
      detail_(message),
      byte_offset_(byte_offset) {}

Orchestrator::Orchestrator(EngineConfig config, PromptStore store, std::shared_ptr<LlmGateway> gateway)
    : config_(std::move(config)),
      store_(std::make_shared<const PromptStore>(std::move(store))),
      gateway_(gateway ? std::move(gateway) : std::make_shared<LlmGateway>()) {
    config_.normalize();
}

std::shared_ptr<const PromptStore> Orchestrator::prompts() const {
    std::lock_guard lock(mutex_);
    return store_;
}

void Orchestrator::update_prompts(const std::function<void(PromptStore&)>& mutate) {
    std::lock_guard writer(store_write_mutex_);
    auto next = std::make_shared<PromptStore>(*prompts());
    mutate(*next);
    std::lock_guard lock(mutex_);
    store_ = std::move(next);
}

EngineConfig Orchestrator::config() const {
    std::lock_guard lock(mutex_);
    return config_;
}

void Orchestrator::set_config(EngineConfig config) {
    config.normalize();
    std::lock_guard lock(mutex_);
    config_ = std::move(config);
}

Orchestrator::Prepared Orchestrator::prepare(const ActionRequest& request, const PromptStore& store,
                                             const EngineConfig& config) const {
    if (request.language_id.empty()) {
        throw ActionError(Stage::Validation, "InvalidRequest", "language_id must not be empty");
    }
    if (request.action == ActionKind::Edit && request.instruction.empty()) {
        throw ActionError(Stage::Validation, "InvalidRequest", "the edit action needs a non-empty instruction");
    }

    const PromptEntry& entry = store.get(request.action, request.language_id);
    const Template user_template = parse_or_throw(request.override_template.value_or(entry.template_source));
    const Template system_template = parse_or_throw(entry.system_source);

    PackedContext packed;
    try {
        const Document doc = load_document(request.document_text, request.language_id);
        const Span selection = doc.make_span(request.selection.start_byte, request.selection.end_byte);
        std::optional<Span> definition;
        if (request.definition_name && !request.definition_name->empty()) {
            definition = resolve_named_definition(doc, *request.definition_name);
        } else {
            definition = find_enclosing_definition(doc, request.cursor);
        }
        packed = pack_context(doc, selection, definition, config.context_budget_tokens);
    } catch (const ExtractionError& e) {
        throw ActionError(Stage::Extraction, to_string(e.kind()), e.what());
    }

    const Bindings bindings = {
        {"selected_code", packed.selected_code},
        {"language_id", request.language_id},
        {"whole_file", packed.whole_file_excerpt},
        {"definition", packed.definition},
        {"instruction", request.instruction},
        {"output_language", request.output_language.empty() ? std::string("English") : request.output_language},
    };

    Prepared out;
    out.rendered.system = render_or_throw(system_template, bindings);
    out.rendered.prompt = render_or_throw(user_template, bindings);
    out.params = entry.params;
    return out;
}

RenderedPrompt Orchestrator::preview_prompt(const ActionRequest& request) const {
    return prepare(request, *prompts(), config()).rendered;
}

std::string Orchestrator::open_run() {
    return gateway_->open_request();
}

bool Orchestrator::cancel_run(const std::string& run_id) {
    return gateway_->cancel(run_id);
}

ActionRun Orchestrator::run_action(const ActionRequest& request, const RunChunkConsumer& on_chunk,
                                   const std::string& run_id) {
    const bool owns_id = run_id.empty();
    ActionRun run;
    run.run_id = owns_id ? open_run() : run_id;
    struct Release {
        Orchestrator& self;
        const std::string& id;
        ~Release() { self.gateway_->close_request(id); }
    } release{*this, run.run_id};

    const auto store = prompts();
    const EngineConfig cfg = config();
    Prepared prepared = prepare(request, *store, cfg);
    run.rendered_system = prepared.rendered.system;
    run.rendered_prompt = prepared.rendered.prompt;

    ChatRequest chat;
    chat.model = cfg.model;
    chat.messages = {{Role::System, run.rendered_system}, {Role::User, run.rendered_prompt}};
    chat.temperature = prepared.params.temperature;
    chat.max_tokens = prepared.params.max_output_tokens;

    try {
        gateway_->complete_with_retry(
            cfg, chat,
            [&](const ChatChunk& chunk) {
                if (chunk.done || chunk.delta.empty()) {
                    return;
                }
                run.output_so_far += chunk.delta;
                if (on_chunk) {
                    on_chunk(run.run_id, chunk.delta);
                }
            },
            run.run_id);
        run.status = RunStatus::Done;
    } catch (const GatewayError& e) {
        switch (e.kind()) {
        case GatewayError::Kind::MissingCredentials:
            throw ActionError(Stage::Config, to_string(e.kind()), e.what());
        case GatewayError::Kind::InvalidRequest:
            throw ActionError(Stage::Validation, to_string(e.kind()), e.what());
        case GatewayError::Kind::Cancelled:
            run.status = RunStatus::Cancelled;
            break;
        default:
            run.status = RunStatus::Failed;
            run.error_stage = Stage::Provider;
            run.error_kind = to_string(e.kind());
            run.error_message = e.what();
            break;
        }
    }
    return run;
}

PromptEntry Orchestrator::promote_override(const ActionRequest& request) {
    if (!request.override_template) {
        throw ActionError(Stage::Validation, "InvalidRequest", "no override template to save");
    }
    PromptEntry saved;
    try {
        update_prompts([&](PromptStore& store) {
            PromptEntry entry = store.get(request.action, request.language_id);
            entry.language_id = request.language_id;
            entry.template_source = *request.override_template;
            saved = store.save(std::move(entry));
        });
    } catch (const StoreError& e) {
        throw from_store_error(e);
    }
    return saved;
}

}  // namespace pairgen
