#include <gtest/gtest.h>

#include <future>

#include <nlohmann/json.hpp>

#include "pairgen/mock_provider.hpp"
#include "pairgen/orchestrator.hpp"
#include "test_support.hpp"

using namespace pairgen;
using pairgen::testing::kMintSnippet;
using nlohmann::json;

namespace {

// Straight substitution over the raw template text, used as an oracle for
// the rendered prompt.
std::string substitute(const std::string& source, const std::map<std::string, std::string>& values) {
    std::string out;
    for (std::size_t i = 0; i < source.size();) {
        if (source.compare(i, 2, "{{") == 0 || source.compare(i, 2, "}}") == 0) {
            out += source[i];
            i += 2;
        } else if (source[i] == '{') {
            const auto close = source.find('}', i);
            out += values.at(source.substr(i + 1, close - i - 1));
            i = close + 1;
        } else {
            out += source[i++];
        }
    }
    return out;
}

ActionRequest mint_request(ActionKind action = ActionKind::Explain) {
    ActionRequest r;
    r.action = action;
    r.document_text = std::string(kMintSnippet);
    r.language_id = "move";
    r.selection = {0, r.document_text.size()};
    r.cursor = 0;
    return r;
}

EngineConfig mock_config(const MockProvider& mock) {
    EngineConfig c;
    c.base_url = mock.base_url();
    c.api_key = "sk-test";
    c.timeout_seconds = 5;
    return c;
}

}  // namespace

TEST(Preview, MintMatchesHandComposition) {
    Orchestrator engine(EngineConfig{}, PromptStore{});
    const auto rendered = engine.preview_prompt(mint_request());

    const auto& entry = PromptStore{}.get(ActionKind::Explain, "move");
    const std::string text(kMintSnippet);
    // The definition spans the whole snippet except its final newline.
    const std::map<std::string, std::string> values = {
        {"selected_code", text},          {"language_id", "move"}, {"whole_file", text},
        {"definition", text.substr(0, text.size() - 1)}, {"instruction", ""},
        {"output_language", "English"},
    };
    EXPECT_EQ(rendered.prompt, substitute(entry.template_source, values));
    EXPECT_EQ(rendered.system, substitute(entry.system_source, values));
    EXPECT_NE(rendered.prompt.find(text), std::string::npos);
    EXPECT_NE(rendered.prompt.find("closely resembles Rust"), std::string::npos);
}

TEST(Preview, OverrideTemplate) {
    Orchestrator engine(EngineConfig{}, PromptStore{});
    auto req = mint_request();
    req.override_template = "Say hi";
    EXPECT_EQ(engine.preview_prompt(req).prompt, "Say hi");

    req.override_template = "Explain {bogus}";
    try {
        engine.preview_prompt(req);
        FAIL();
    } catch (const ActionError& e) {
        EXPECT_EQ(e.stage(), Stage::Template);
        EXPECT_EQ(e.kind(), "UnknownPlaceholder");
        EXPECT_EQ(e.byte_offset(), 8u);
    }
}

TEST(Preview, OutputLanguageAndInstruction) {
    Orchestrator engine(EngineConfig{}, PromptStore{});
    auto req = mint_request(ActionKind::Edit);
    req.instruction = "use amount";
    req.output_language = "Deutsch";
    req.override_template = "{instruction}|{output_language}|{language_id}";
    EXPECT_EQ(engine.preview_prompt(req).prompt, "use amount|Deutsch|move");
}

TEST(Preview, SelectionOverBudgetIsExtractionError) {
    EngineConfig cfg;
    cfg.context_budget_tokens = 10;
    Orchestrator engine(cfg, PromptStore{});
    try {
        engine.preview_prompt(mint_request());
        FAIL();
    } catch (const ActionError& e) {
        EXPECT_EQ(e.stage(), Stage::Extraction);
        EXPECT_EQ(e.kind(), "SelectionExceedsBudget");
    }
}

TEST(Preview, NamedDefinitionBinding) {
    Orchestrator engine(EngineConfig{}, PromptStore{});
    ActionRequest req;
    req.document_text = "def f():\n    g()\ndef g():\n    return 1\n";
    req.language_id = "python";
    req.selection = {9, 16};
    req.cursor = 9;
    req.override_template = "[{definition}]";
    EXPECT_EQ(engine.preview_prompt(req).prompt, "[def f():\n    g()]");
    req.definition_name = "g";
    EXPECT_EQ(engine.preview_prompt(req).prompt, "[def g():\n    return 1]");
}

TEST(RunAction, EchoAgainstMock) {
    MockProvider mock;
    Orchestrator engine(mock_config(mock), PromptStore{});
    std::string streamed;
    const auto run = engine.run_action(mint_request(), [&](const std::string&, std::string_view d) { streamed += d; });
    EXPECT_EQ(run.status, RunStatus::Done);
    EXPECT_EQ(run.output_so_far, "ECHO:" + run.rendered_prompt.substr(0, 64));
    EXPECT_EQ(streamed, run.output_so_far);

    const auto preview = engine.preview_prompt(mint_request());
    EXPECT_EQ(run.rendered_prompt, preview.prompt);
    EXPECT_EQ(run.rendered_system, preview.system);

    const auto body = json::parse(mock.recorded_requests().at(0));
    EXPECT_EQ(body["messages"][0]["content"], preview.system);
    EXPECT_EQ(body["messages"][1]["content"], preview.prompt);
    EXPECT_EQ(body["temperature"], 0.2);
    EXPECT_EQ(body["max_tokens"], 1024);
}

TEST(RunAction, CancelKeepsPrefix) {
    const std::string payload = "0123456789abcdefghij";
    MockProvider mock(MockScript{{MockRule{"", payload, 2, 60}}});
    Orchestrator engine(mock_config(mock), PromptStore{});
    const auto id = engine.open_run();
    std::promise<void> started;
    int chunks = 0;
    auto fut = std::async(std::launch::async, [&] {
        return engine.run_action(
            mint_request(),
            [&](const std::string&, std::string_view) {
                if (++chunks == 2) started.set_value();
            },
            id);
    });
    started.get_future().wait();
    EXPECT_TRUE(engine.cancel_run(id));
    const auto run = fut.get();
    EXPECT_EQ(run.status, RunStatus::Cancelled);
    EXPECT_GE(run.output_so_far.size(), 4u);
    EXPECT_LT(run.output_so_far.size(), payload.size());
    EXPECT_EQ(payload.compare(0, run.output_so_far.size(), run.output_so_far), 0);
}

TEST(RunAction, EditWithoutInstructionNeverCallsProvider) {
    MockProvider mock;
    Orchestrator engine(mock_config(mock), PromptStore{});
    try {
        engine.run_action(mint_request(ActionKind::Edit), nullptr);
        FAIL();
    } catch (const ActionError& e) {
        EXPECT_EQ(e.stage(), Stage::Validation);
    }
    EXPECT_TRUE(mock.recorded_requests().empty());
}

TEST(RunAction, MissingCredentialsIsConfigStage) {
    MockProvider mock;
    auto cfg = mock_config(mock);
    cfg.api_key.reset();
    cfg.api_key_env = "PAIRGEN_TEST_UNSET_KEY";
    Orchestrator engine(cfg, PromptStore{}, std::make_shared<LlmGateway>(env_from_map({})));
    try {
        engine.run_action(mint_request(), nullptr);
        FAIL();
    } catch (const ActionError& e) {
        EXPECT_EQ(e.stage(), Stage::Config);
        EXPECT_EQ(e.kind(), "MissingCredentials");
    }
    EXPECT_TRUE(mock.recorded_requests().empty());
}

TEST(RunAction, ProviderFailureIsFailedRun) {
    MockRule rule{"", "nope", 8};
    rule.status_override = 500;
    MockProvider mock(MockScript{{rule}});
    Orchestrator engine(mock_config(mock), PromptStore{});
    const auto run = engine.run_action(mint_request(), nullptr);
    EXPECT_EQ(run.status, RunStatus::Failed);
    EXPECT_EQ(run.error_stage, Stage::Provider);
    EXPECT_EQ(run.error_kind, "ProviderError");
}

TEST(Promote, ReadYourWritesAndScoping) {
    pairgen::testing::TempDir dir;
    Orchestrator engine(EngineConfig{}, PromptStore::open(dir / "prompts.json"));

    ActionRequest rust;
    rust.document_text = "fn a() {}\n";
    rust.language_id = "rust";
    rust.selection = {0, 9};
    const auto rust_before = engine.preview_prompt(rust);

    auto req = mint_request();
    req.override_template = "Explain briefly:\n{selected_code}";
    const auto overridden = engine.preview_prompt(req);
    const auto saved = engine.promote_override(req);
    EXPECT_EQ(saved.template_source, *req.override_template);

    req.override_template.reset();
    EXPECT_EQ(engine.preview_prompt(req), overridden);
    EXPECT_EQ(engine.preview_prompt(rust), rust_before);
    EXPECT_EQ(PromptStore::open(dir / "prompts.json").get(ActionKind::Explain, "move").template_source,
              "Explain briefly:\n{selected_code}");
}

TEST(Promote, InvalidLeavesStoreUnchanged) {
    pairgen::testing::TempDir dir;
    Orchestrator engine(EngineConfig{}, PromptStore::open(dir / "prompts.json"));
    const auto snapshot = engine.prompts();
    auto req = mint_request();
    req.override_template = "Explain {bogus}";
    try {
        engine.promote_override(req);
        FAIL();
    } catch (const ActionError& e) {
        EXPECT_EQ(e.stage(), Stage::Template);
        EXPECT_EQ(e.kind(), "TemplateInvalid");
        EXPECT_EQ(e.byte_offset(), 8u);
    }
    EXPECT_EQ(engine.prompts(), snapshot);
    EXPECT_FALSE(std::filesystem::exists(dir / "prompts.json"));
}

TEST(Snapshot, RunsReadTheStoreTheyStartedWith) {
    Orchestrator engine(EngineConfig{}, PromptStore{});
    const auto before = engine.prompts();
    engine.update_prompts([](PromptStore& s) {
        PromptEntry e = s.get(ActionKind::Review, "*");
        e.language_id = "go";
        e.template_source = "go review";
        s.save(e);
    });
    EXPECT_EQ(before->get(ActionKind::Review, "go").language_id, "*");
    EXPECT_EQ(engine.prompts()->get(ActionKind::Review, "go").template_source, "go review");
}
