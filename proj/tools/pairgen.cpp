#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pairgen/config.hpp"
#include "pairgen/context.hpp"
#include "pairgen/mock_provider.hpp"
#include "pairgen/orchestrator.hpp"
#include "pairgen/prompt_library.hpp"
#include "pairgen/rpc.hpp"

namespace fs = std::filesystem;
using namespace pairgen;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3, kProvider = 4, kExtraction = 5 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ActionOptions {
    std::string file;
    std::string lines;
    std::string instruction;
    std::string language;
    std::string output_language = "English";
    std::string definition_name;
};

void add_action_options(CLI::App* cmd, ActionOptions& opts) {
    cmd->add_option("file", opts.file, "Source file")->required();
    cmd->add_option("--line", opts.lines, "Selected lines A:B (1-based, inclusive); default whole file");
    cmd->add_option("--instruction", opts.instruction, "Instruction for the edit action");
    cmd->add_option("--language", opts.language, "Language id; default from the file extension");
    cmd->add_option("--output-language", opts.output_language, "Human language for the answer");
    cmd->add_option("--definition", opts.definition_name, "Bind {definition} to this named definition");
}

std::string read_source(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot read " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string detect_language(const ActionOptions& opts) {
    if (!opts.language.empty()) {
        return opts.language;
    }
    const auto ext = fs::path(opts.file).extension().string();
    if (const auto* profile = LanguageRegistry::builtin().find_by_extension(ext)) {
        return profile->language_id;
    }
    return "plaintext";
}

ActionRequest build_request(ActionKind action, const ActionOptions& opts) {
    ActionRequest req;
    req.action = action;
    req.document_text = read_source(opts.file);
    req.language_id = detect_language(opts);
    req.instruction = opts.instruction;
    req.output_language = opts.output_language;
    if (!opts.definition_name.empty()) {
        req.definition_name = opts.definition_name;
    }
    req.selection = {0, req.document_text.size()};
    if (!opts.lines.empty()) {
        const auto colon = opts.lines.find(':');
        std::size_t first = 0;
        std::size_t last = 0;
        try {
            first = std::stoul(opts.lines.substr(0, colon));
            last = colon == std::string::npos ? first : std::stoul(opts.lines.substr(colon + 1));
        } catch (const std::exception&) {
            throw UsageError("--line expects A:B, got '" + opts.lines + "'");
        }
        const Document doc = load_document(req.document_text, req.language_id);
        if (first < 1 || last < first || last > doc.line_count()) {
            throw UsageError("--line " + opts.lines + " is outside " + opts.file + " (" +
                             std::to_string(doc.line_count()) + " lines)");
        }
        const std::size_t end =
            last < doc.line_count() ? doc.line_start(last) : req.document_text.size();
        req.selection = {doc.line_start(first - 1), end};
    }
    req.cursor = req.selection.start_byte;
    return req;
}

int exit_code_for(Stage stage) {
    switch (stage) {
    case Stage::Validation: return kUsage;
    case Stage::Config:
    case Stage::Storage: return kConfig;
    case Stage::Provider: return kProvider;
    case Stage::Template:
    case Stage::Extraction: return kExtraction;
    }
    return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pairgen: prompt-transparent AI pair-programming engine"};
    app.require_subcommand(0, 1);

    std::string config_path;
    std::string base_url;
    std::string model;
    app.add_option("--config", config_path, "Config file (JSON)");
    app.add_option("--base-url", base_url, "OpenAI-compatible endpoint, e.g. https://api.openai.com/v1");
    app.add_option("--model", model, "Model name");

    auto* serve = app.add_subcommand("serve", "Serve JSON-RPC on stdio (default)");

    ActionOptions action_opts;
    std::optional<ActionKind> chosen_action;
    for (ActionKind a : kAllActions) {
        auto* cmd = app.add_subcommand(to_string(a), std::string("Run the ") + to_string(a) + " action and print the answer");
        add_action_options(cmd, action_opts);
        cmd->callback([a, &chosen_action] { chosen_action = a; });
    }

    std::string preview_action;
    auto* preview = app.add_subcommand("preview", "Print the rendered prompt without calling the model");
    preview->add_option("action", preview_action, "explain | comment | review | edit")->required();
    add_action_options(preview, action_opts);

    auto* prompts = app.add_subcommand("prompts", "Share user prompts as a prompt pack");
    prompts->require_subcommand(1);
    std::string pack_path;
    bool replace = false;
    auto* prompts_export = prompts->add_subcommand("export", "Write the user prompts to a file");
    prompts_export->add_option("path", pack_path)->required();
    auto* prompts_import = prompts->add_subcommand("import", "Load prompts from a file");
    prompts_import->add_option("path", pack_path)->required();
    prompts_import->add_flag("--replace", replace, "Replace the user prompts instead of merging");

    bool dump_registry = false;
    auto* languages = app.add_subcommand("languages", "List supported language ids");
    languages->add_flag("--dump", dump_registry, "Print the full registry data file");

    std::string script_path;
    int mock_port = 0;
    auto* mock = app.add_subcommand("mock", "Run the deterministic mock provider");
    mock->add_option("--script", script_path, "Mock script (JSON)");
    mock->add_option("--port", mock_port, "Port; 0 picks a free one");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    if (languages->parsed()) {
        if (dump_registry) {
            std::cout << builtin_language_data();
        } else {
            for (const auto& id : list_supported_languages()) {
                std::cout << id << '\n';
            }
        }
        return kOk;
    }

    if (mock->parsed()) {
        try {
            MockScript script = script_path.empty() ? MockScript{} : MockScript::load(script_path);
            MockProvider provider(std::move(script), mock_port);
            std::cout << provider.base_url() << std::endl;
            provider.wait();
        } catch (const MockError& e) {
            std::cerr << "pairgen mock: " << e.what() << '\n';
            return e.kind() == MockError::Kind::PortUnavailable ? kFailure : kUsage;
        }
        return kOk;
    }

    AppConfig config;
    try {
        config = load_app_config(config_path.empty() ? default_config_path() : fs::path(config_path));
        nlohmann::json overrides = {{"api", nlohmann::json::object()}};
        if (!base_url.empty()) overrides["api"]["base_url"] = base_url;
        if (!model.empty()) overrides["api"]["model"] = model;
        apply_config_json(config, overrides);
    } catch (const ConfigError& e) {
        std::cerr << "pairgen: " << e.what() << '\n';
        return kConfig;
    }

    std::optional<PromptStore> store;
    try {
        store = PromptStore::open(config.prompts_path);
    } catch (const StoreError& e) {
        std::cerr << "pairgen: prompt store " << config.prompts_path << ": " << e.what() << '\n';
        return kConfig;
    }

    if (prompts->parsed()) {
        try {
            if (prompts_export->parsed()) {
                store->export_to(pack_path);
                std::cout << "exported " << store->user().size() << " prompt(s) to " << pack_path << '\n';
            } else {
                store->import_from(pack_path, replace ? ImportMode::Replace : ImportMode::Merge);
                std::cout << "imported; " << store->user().size() << " user prompt(s) now in "
                          << config.prompts_path.string() << '\n';
            }
        } catch (const StoreError& e) {
            std::cerr << "pairgen prompts: " << e.what() << '\n';
            return e.kind() == StoreError::Kind::StorageIo ? kUsage : kExtraction;
        }
        return kOk;
    }

    Orchestrator engine(config.engine, std::move(*store));

    if (preview->parsed() || chosen_action) {
        try {
            ActionKind action;
            if (preview->parsed()) {
                auto parsed = parse_action(preview_action);
                if (!parsed) {
                    throw UsageError("unknown action '" + preview_action + "'");
                }
                action = *parsed;
            } else {
                action = *chosen_action;
            }
            const ActionRequest request = build_request(action, action_opts);
            if (preview->parsed()) {
                const auto rendered = engine.preview_prompt(request);
                std::cout << rendered.prompt;
                if (rendered.prompt.empty() || rendered.prompt.back() != '\n') {
                    std::cout << '\n';
                }
                return kOk;
            }
            const ActionRun run = engine.run_action(request, [](const std::string&, std::string_view delta) {
                std::cout << delta << std::flush;
            });
            if (run.status == RunStatus::Done) {
                std::cout << '\n';
                return kOk;
            }
            std::cout << std::flush;
            std::cerr << "\npairgen: " << (run.status == RunStatus::Cancelled ? "cancelled" : run.error_message)
                      << '\n';
            return kProvider;
        } catch (const UsageError& e) {
            std::cerr << "pairgen: " << e.what() << '\n';
            return kUsage;
        } catch (const ActionError& e) {
            std::cerr << "pairgen: " << e.what() << '\n';
            return exit_code_for(e.stage());
        } catch (const ExtractionError& e) {
            std::cerr << "pairgen: " << e.what() << '\n';
            return kExtraction;
        }
    }

    (void)serve;
    RpcServer server(engine, config, std::cout);
    server.serve(std::cin);
    return kOk;
}
