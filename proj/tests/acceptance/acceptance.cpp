// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairgen/context.hpp"
#include "pairgen/gateway.hpp"
#include "pairgen/mock_provider.hpp"
#include "pairgen/orchestrator.hpp"
#include "pairgen/prompt_library.hpp"
#include "pairgen/rpc.hpp"
#include "pairgen/template.hpp"
#include "test_support.hpp"

using namespace pairgen;
using namespace pairgen::testing;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool ok = true;
    std::vector<std::string> notes;

    void check(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            if (notes.size() < 5) notes.push_back(what);
        }
    }
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fixed(double v, int digits = 2) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

// Independent renderer: walks the raw source, honoring `{{`/`}}` escapes.
std::string substitute(std::string_view source, const std::map<std::string, std::string>& values) {
    std::string out;
    for (std::size_t i = 0; i < source.size();) {
        if (source.substr(i, 2) == "{{" || source.substr(i, 2) == "}}") {
            out += source[i];
            i += 2;
        } else if (source[i] == '{') {
            const auto close = source.find('}', i);
            out += values.at(std::string(source.substr(i + 1, close - i - 1)));
            i = close + 1;
        } else {
            out += source[i++];
        }
    }
    return out;
}

std::vector<std::string> placeholder_names(std::string_view source) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < source.size();) {
        if (source.substr(i, 2) == "{{" || source.substr(i, 2) == "}}") {
            i += 2;
        } else if (source[i] == '{') {
            const auto close = source.find('}', i);
            std::string name(source.substr(i + 1, close - i - 1));
            if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
            i = close + 1;
        } else {
            ++i;
        }
    }
    return names;
}

Outcome template_round_trip(std::string& detail) {
    Outcome o;
    const auto start = Clock::now();
    TemplateSourceGenerator gen(2024);
    for (int i = 0; i < 1000; ++i) {
        const std::string src = gen.next();
        const Template t = parse_template(src);
        o.check(serialize(t) == src, "round-trip differs for: " + src);
        const auto names = placeholder_names(src);
        o.check(list_placeholders(t) == names, "placeholder list differs for: " + src);
        std::map<std::string, std::string> values;
        Bindings bindings;
        for (const auto& n : names) {
            values[n] = "{" + n + "}}{{";
            bindings[n] = values[n];
        }
        o.check(render(t, bindings) == substitute(src, values), "render differs for: " + src);
    }
    const double secs = seconds_since(start);
    o.check(secs < 5.0, "took " + fixed(secs) + " s");
    detail = "1000 sources, " + fixed(secs, 3) + " s";
    return o;
}

Outcome extraction_corpus(std::string& detail) {
    Outcome o;
    const auto start = Clock::now();
    const json corpus = json::parse(slurp(data_dir() / "extraction_corpus.json"));
    std::set<std::string> languages;
    std::size_t matched = 0;
    std::size_t total = 0;
    bool has_fig3 = false;
    bool has_brace = false;
    bool has_indent = false;
    std::vector<std::string> misses;
    for (const auto& c : corpus["cases"]) {
        ++total;
        const std::string source = c["source"];
        const std::string lang = c["language"];
        languages.insert(lang);
        has_fig3 = has_fig3 || source.find(kMintSnippet) != std::string::npos;
        const Document doc = load_document(source, lang);
        has_brace = has_brace || doc.profile().block_style == BlockStyle::Brace;
        has_indent = has_indent || doc.profile().block_style == BlockStyle::Indent;

        std::optional<Span> expected;
        if (!c["expected"].is_null()) {
            const std::string text = c["expected"];
            const auto at = source.find(text);
            if (at == std::string::npos || source.find(text, at + 1) != std::string::npos) {
                o.check(false, c["id"].get<std::string>() + ": label is not a unique substring");
                continue;
            }
            Span s;
            s.start_byte = at;
            s.end_byte = at + text.size();
            s.start_line = static_cast<std::size_t>(std::count(source.begin(), source.begin() + at, '\n'));
            s.end_line = s.start_line + static_cast<std::size_t>(std::count(text.begin(), text.end() - 1, '\n'));
            expected = s;
        }
        std::optional<Span> actual;
        if (c.contains("name")) {
            actual = resolve_named_definition(doc, c["name"].get<std::string>());
        } else {
            actual = find_enclosing_definition(doc, source.find(c["cursor_at"].get<std::string>()));
        }
        if (actual == expected) {
            ++matched;
        } else {
            misses.push_back(c["id"]);
        }
    }
    const double secs = seconds_since(start);
    o.check(total >= 20, "only " + std::to_string(total) + " cases");
    o.check(languages.size() >= 5, "only " + std::to_string(languages.size()) + " languages");
    o.check(has_fig3 && has_brace && has_indent, "corpus lacks the mint snippet, a brace or an indent language");
    o.check(matched * 20 >= total * 19, "matched " + std::to_string(matched) + "/" + std::to_string(total));
    o.check(secs < 5.0, "took " + fixed(secs) + " s");
    detail = std::to_string(matched) + "/" + std::to_string(total) + " exact across " +
             std::to_string(languages.size()) + " languages";
    if (!misses.empty()) {
        detail += "; misses:";
        for (const auto& m : misses) detail += " " + m;
    }
    return o;
}

Outcome language_registry(std::string& detail) {
    Outcome o;
    const auto ids = list_supported_languages();
    o.check(ids.size() >= 50, "only " + std::to_string(ids.size()) + " languages");
    o.check(std::find(ids.begin(), ids.end(), "move") != ids.end(), "move missing");
    const auto& registry = LanguageRegistry::builtin();
    for (const auto& id : ids) {
        const auto* p = registry.find(id);
        o.check(p != nullptr, id + " has no profile");
        if (!p) continue;
        o.check(!p->definition_keywords.empty() && !p->comment_prefix.empty() && !p->extensions.empty(),
                id + " profile is incomplete");
    }
    o.check(std::is_sorted(ids.begin(), ids.end()), "ids not sorted");
    try {
        LanguageRegistry::from_json(builtin_language_data());
    } catch (const std::exception& e) {
        o.check(false, std::string("registry data does not validate: ") + e.what());
    }
    detail = std::to_string(ids.size()) + " languages";
    return o;
}

EngineConfig engine_for(const MockProvider& mock) {
    EngineConfig c;
    c.base_url = mock.base_url();
    c.api_key = "sk-acceptance";
    c.timeout_seconds = 10;
    return c;
}

ActionRequest random_request(std::mt19937& rng, TemplateSourceGenerator& gen) {
    static const std::vector<std::pair<std::string, std::string>> docs = {
        {"move", std::string(kMintSnippet)},
        {"rust", "use std::io;\n\nfn main() {\n    let x = \"{}\";\n    println!(\"{}\", x);\n}\n"},
        {"python", "class A:\n    def f(self):\n        return '{x}'\n\nprint(A().f())\n"},
        {"c", "int add(int a, int b) {\n    return a + b;\n}\n"},
        {"go", "func main() {\n\tfmt.Println(\"héllo → {}\")\n}\n"},
        {"plaintext", "just some notes\n{selected_code}\n"},
    };
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    const auto& [lang, text] = docs[pick(docs.size())];
    ActionRequest r;
    r.action = kAllActions[pick(std::size(kAllActions))];
    r.document_text = text;
    r.language_id = lang;
    // Line-aligned selection so every offset is a character boundary.
    std::vector<std::size_t> starts = {0};
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\n') starts.push_back(i + 1);
    }
    std::size_t a = starts[pick(starts.size())];
    std::size_t b = starts[pick(starts.size())];
    if (a > b) std::swap(a, b);
    r.selection = {a, b};
    r.cursor = starts[pick(starts.size())];
    static const std::vector<std::string> instructions = {"", "use the amount argument", "add {braces}", "日本語で"};
    r.instruction = instructions[pick(instructions.size())];
    if (r.action == ActionKind::Edit && r.instruction.empty()) r.instruction = "tidy up";
    static const std::vector<std::string> humans = {"English", "Deutsch", "中文", "Español"};
    r.output_language = humans[pick(humans.size())];
    if (pick(3) == 0) r.override_template = gen.next() + "{selected_code}";
    return r;
}

Outcome transparency(std::string& detail) {
    Outcome o;
    const auto start = Clock::now();
    MockProvider mock;
    Orchestrator engine(engine_for(mock), PromptStore{});
    std::mt19937 rng(77);
    TemplateSourceGenerator gen(78);
    for (int i = 0; i < 50; ++i) {
        const ActionRequest req = random_request(rng, gen);
        const RenderedPrompt preview = engine.preview_prompt(req);
        const ActionRun run = engine.run_action(req, nullptr);
        o.check(run.status == RunStatus::Done, "run " + std::to_string(i) + " did not finish");
        const auto bodies = mock.recorded_requests();
        if (bodies.size() != static_cast<std::size_t>(i + 1)) {
            o.check(false, "mock saw " + std::to_string(bodies.size()) + " requests");
            break;
        }
        const json body = json::parse(bodies.back());
        o.check(body["messages"][1]["content"] == preview.prompt, "user message differs from preview, run " +
                                                                      std::to_string(i));
        o.check(body["messages"][0]["content"] == preview.system, "system message differs, run " + std::to_string(i));
        o.check(run.rendered_prompt == preview.prompt && run.rendered_system == preview.system,
                "run record differs from preview");
    }
    const double secs = seconds_since(start);
    o.check(secs < 30.0, "took " + fixed(secs) + " s");
    detail = "50 requests, " + fixed(secs, 3) + " s";
    return o;
}

std::string random_payload(std::mt19937& rng) {
    static const std::vector<std::string> pieces = {"a", "Z", " ", "\n", "\"", "\\", "é", "→", "🙂", "data: ",
                                                    "[DONE]", "\r\n", "{", "}", "\t", "\n\n", ":"};
    const int n = std::uniform_int_distribution<int>(0, 120)(rng);
    std::string out;
    for (int i = 0; i < n; ++i) out += pieces[std::uniform_int_distribution<std::size_t>(0, pieces.size() - 1)(rng)];
    return out;
}

Outcome streaming(std::string& detail) {
    Outcome o;
    std::mt19937 rng(99);
    MockScript script;
    std::vector<std::string> payloads;
    for (int i = 0; i < 100; ++i) {
        payloads.push_back(random_payload(rng));
        const std::size_t chunk = std::uniform_int_distribution<std::size_t>(1, 24)(rng);
        script.rules.push_back(MockRule{"<case-" + std::to_string(i) + ">", payloads.back(), chunk});
    }
    MockProvider mock(script);
    LlmGateway gateway(env_from_map({}));
    const EngineConfig cfg = engine_for(mock);
    for (int i = 0; i < 100; ++i) {
        ChatRequest req;
        req.model = cfg.model;
        req.messages = {{Role::System, "s"}, {Role::User, "<case-" + std::to_string(i) + ">"}};
        std::string streamed;
        const std::string final_text =
            gateway.complete_streaming(cfg, req, [&](const ChatChunk& c) { streamed += c.delta; });
        o.check(final_text == payloads[i] && streamed == payloads[i], "payload " + std::to_string(i) + " differs");
    }

    // Cancellation through the orchestrator against a paused stream.
    const std::string long_payload = "The selected Move code is a function called mint.";
    MockProvider slow(MockScript{{MockRule{"", long_payload, 3, 40}}});
    Orchestrator engine(engine_for(slow), PromptStore{});
    ActionRequest req;
    req.document_text = std::string(kMintSnippet);
    req.language_id = "move";
    req.selection = {0, req.document_text.size()};
    const std::string run_id = engine.open_run();
    std::promise<void> two_chunks;
    int seen = 0;
    auto fut = std::async(std::launch::async, [&] {
        return engine.run_action(
            req, [&](const std::string&, std::string_view) { if (++seen == 2) two_chunks.set_value(); }, run_id);
    });
    two_chunks.get_future().wait();
    engine.cancel_run(run_id);
    const ActionRun run = fut.get();
    o.check(run.status == RunStatus::Cancelled, std::string("status is ") + to_string(run.status));
    o.check(!run.output_so_far.empty() && run.output_so_far.size() < long_payload.size() &&
                long_payload.compare(0, run.output_so_far.size(), run.output_so_far) == 0,
            "cancelled output is not a strict prefix: \"" + run.output_so_far + "\"");
    detail = "100 payloads exact; cancelled after " + std::to_string(run.output_so_far.size()) + "/" +
             std::to_string(long_payload.size()) + " bytes";
    return o;
}

Outcome prompt_store(std::string& detail) {
    Outcome o;
    TempDir dir;
    const auto path = dir / "prompts.json";

    // Builtin pack.
    std::set<ActionKind> wildcard;
    for (const auto& e : builtin_prompts()) {
        try {
            validate_entry(e);
        } catch (const std::exception& ex) {
            o.check(false, std::string("builtin entry invalid: ") + ex.what());
        }
        if (e.language_id == kWildcardLanguage) wildcard.insert(e.action);
    }
    o.check(wildcard.size() == std::size(kAllActions), "builtin pack lacks a wildcard entry for some action");

    PromptEntry a{ActionKind::Explain, "move", "Erklär {selected_code} → {output_language}", "System {language_id}",
                  {0.5, 256}};
    PromptEntry b{ActionKind::Edit, "*", "Do: {instruction}\n{selected_code}", "sys", {1.0, 64}};
    {
        PromptStore store = PromptStore::open(path);
        store.save(a);
        store.save(b);
        o.check(store.get(ActionKind::Explain, "move") == a, "get after save differs");
    }
    {
        PromptStore reopened = PromptStore::open(path);
        o.check(reopened.get(ActionKind::Explain, "move") == a, "entry lost on reopen");
        o.check(reopened.get(ActionKind::Edit, "rust") == b, "user wildcard not used on reopen");
    }

    // Restart across processes: the CLI reads what this process wrote.
    spit(dir / "config.json", json{{"prompts_path", path.string()}}.dump());
    spit(dir / "a.move", kMintSnippet);
    const auto cli = [&](const std::string& args) {
        return run_command(shell_quote(PAIRGEN_CLI_PATH) + " --config " + shell_quote((dir / "config.json").string()) +
                           " " + args);
    };
    const auto shown = cli("preview explain " + shell_quote((dir / "a.move").string()) + " --line 1:1");
    o.check(shown.exit_code == 0 && shown.out == "Erklär public entry fun mint(\n → English\n",
            "CLI did not see the saved prompt: " + shown.out + shown.err);

    // Export, delete, import.
    PromptStore store = PromptStore::open(path);
    store.export_to(dir / "pack.json");
    o.check(store.remove(ActionKind::Explain, "move"), "remove reported nothing");
    o.check(PromptStore::open(path).get(ActionKind::Explain, "move").language_id == "move" &&
                PromptStore::open(path).get(ActionKind::Explain, "move").template_source !=
                    a.template_source,
            "delete did not fall back to the builtin entry");
    store.import_from(dir / "pack.json", ImportMode::Replace);
    o.check(PromptStore::open(path).user() == std::vector<PromptEntry>{a, b} ||
                PromptStore::open(path).user() == std::vector<PromptEntry>{b, a},
            "import did not restore the exported entries");

    // A second process imports a pack; this process sees it after reopening.
    const PromptEntry c{ActionKind::Review, "go", "Review {selected_code}", "s", {0.2, 1024}};
    spit(dir / "pack2.json", dump_prompt_pack({c}));
    const auto imported = cli("prompts import " + shell_quote((dir / "pack2.json").string()));
    o.check(imported.exit_code == 0, "CLI import failed: " + imported.err);
    o.check(PromptStore::open(path).get(ActionKind::Review, "go") == c, "CLI import not visible after reopen");

    // Failed imports leave the file byte-identical.
    const std::string before = slurp(path);
    const std::vector<std::string> bad_packs = {
        "{not json",
        R"({"version":2,"entries":[]})",
        R"({"version":1,"entries":[{"action":"explain","language_id":"go","system":"s","template":"{nope}"}]})",
        R"({"version":1,"entries":[{"action":"edit","language_id":"go","system":"s","template":"no instruction"}]})",
        R"({"version":1,"entries":[{"action":"dance","language_id":"go","system":"s","template":"x"}]})",
    };
    PromptStore current = PromptStore::open(path);
    const auto user_before = current.user();
    for (std::size_t i = 0; i < bad_packs.size(); ++i) {
        spit(dir / "bad.json", bad_packs[i]);
        bool threw = false;
        try {
            current.import_from(dir / "bad.json", ImportMode::Replace);
        } catch (const StoreError&) {
            threw = true;
        }
        o.check(threw, "bad pack " + std::to_string(i) + " was accepted");
        o.check(slurp(path) == before, "store file changed after bad pack " + std::to_string(i));
        o.check(current.user() == user_before, "in-memory store changed after bad pack " + std::to_string(i));
    }
    detail = "builtin covers " + std::to_string(wildcard.size()) + " actions; " + std::to_string(bad_packs.size()) +
             " bad imports rejected";
    return o;
}

Outcome wire(std::string& detail) {
    Outcome o;
    o.check(encode_frame(R"({"a":"é"})") == "Content-Length: 10\r\n\r\n{\"a\":\"é\"}", "frame header wrong");

    SyncStream out;
    Orchestrator engine(EngineConfig{}, PromptStore{});
    RpcServer server(engine, AppConfig{}, out);
    std::istringstream in(encode_frame(R"({"jsonrpc":"2.0","id":1,"method":"initialize"})") +
                          encode_frame("{\"jsonrpc\":") +
                          encode_frame(R"({"jsonrpc":"2.0","id":2,"method":"no/such/method"})") +
                          encode_frame(R"({"jsonrpc":"2.0","id":3,"method":"prompt/get","params":{"action":7}})"));
    server.serve(in);
    const std::string expected =
        encode_frame(R"({"id":1,"jsonrpc":"2.0","result":{"protocol":1,"server":"pairgen","version":"0.1.0"}})") +
        encode_frame(R"({"error":{"code":-32700,"message":"parse error"},"id":null,"jsonrpc":"2.0"})");
    const std::string wire_out = out.contents();
    o.check(wire_out.compare(0, expected.size(), expected) == 0, "initialize/parse-error frames differ");

    std::istringstream replies(wire_out);
    FrameReader reader(replies);
    std::vector<json> msgs;
    while (auto f = reader.next()) {
        const std::string header = "Content-Length: " + std::to_string(f->size()) + "\r\n\r\n";
        o.check(wire_out.find(header + *f) != std::string::npos, "frame length mismatch");
        msgs.push_back(json::parse(*f));
    }
    o.check(msgs.size() == 4, "expected 4 replies, got " + std::to_string(msgs.size()));
    if (msgs.size() == 4) {
        o.check(msgs[1]["error"]["code"] == -32700, "malformed JSON not -32700");
        o.check(msgs[2]["error"]["code"] == -32601 && msgs[2]["id"] == 2, "unknown method not -32601");
        o.check(msgs[3]["error"]["code"] == -32602 && msgs[3]["id"] == 3, "bad params not -32602");
    }

    // Provider request body.
    MockProvider mock;
    LlmGateway gateway(env_from_map({}));
    ChatRequest req;
    req.model = "gpt-4";
    req.messages = {{Role::System, "sys"}, {Role::User, "user"}};
    req.temperature = 0.7;
    req.max_tokens = 42;
    gateway.complete_streaming(engine_for(mock), req, nullptr);
    const json body = json::parse(mock.recorded_requests().at(0));
    std::set<std::string> keys;
    for (const auto& [k, v] : body.items()) keys.insert(k);
    o.check(keys == std::set<std::string>{"model", "messages", "temperature", "max_tokens", "stream"},
            "body fields: " + body.dump());
    o.check(body["model"] == "gpt-4" && body["temperature"] == 0.7 && body["max_tokens"] == 42 &&
                body["stream"] == true,
            "body values: " + body.dump());
    o.check(body["messages"] == json::array({{{"role", "system"}, {"content", "sys"}},
                                             {{"role", "user"}, {"content", "user"}}}),
            "messages: " + body["messages"].dump());
    detail = "frames, 3 error codes, 5 body fields";
    return o;
}

Outcome end_to_end_cli(std::string& detail, Clock::time_point suite_start) {
    Outcome o;
    TempDir dir;
    const auto sample = dir / "sample.move";
    spit(sample, kMintSnippet);
    MockProvider mock;
    spit(dir / "config.json",
         json{{"api", {{"base_url", mock.base_url()}, {"api_key", "sk-e2e"}}}, {"prompts_path", (dir / "p.json").string()}}
             .dump());
    const std::string base =
        shell_quote(PAIRGEN_CLI_PATH) + " --config " + shell_quote((dir / "config.json").string()) + " ";

    const auto preview = run_command(base + "preview explain " + shell_quote(sample.string()));
    o.check(preview.exit_code == 0, "preview exit " + std::to_string(preview.exit_code) + ": " + preview.err);
    o.check(preview.out.find(kMintSnippet) != std::string::npos, "preview lacks the snippet");
    o.check(preview.out.find("closely resembles Rust") != std::string::npos, "preview lacks the Rust preamble");

    const auto explain = run_command(base + "explain " + shell_quote(sample.string()));
    o.check(explain.exit_code == 0, "explain exit " + std::to_string(explain.exit_code) + ": " + explain.err);
    std::string prompt;
    if (!mock.recorded_requests().empty()) {
        prompt = json::parse(mock.recorded_requests().back())["messages"][1]["content"];
    }
    o.check(!prompt.empty() && explain.out == "ECHO:" + prompt.substr(0, 64) + "\n", "explain printed: " + explain.out);
    o.check(preview.out == prompt || preview.out == prompt + "\n", "preview differs from the prompt sent");

    // The rest of the suite: unit tests plus everything above.
    const auto unit_start = Clock::now();
    const auto unit = run_command(shell_quote(PAIRGEN_UNIT_TESTS_PATH) + " --gtest_brief=1");
    const double unit_secs = seconds_since(unit_start);
    o.check(unit.exit_code == 0, "unit tests failed (exit " + std::to_string(unit.exit_code) + "): " +
                                     unit.out.substr(unit.out.size() > 600 ? unit.out.size() - 600 : 0));
    const double total = seconds_since(suite_start);
    o.check(total < 60.0, "suite took " + fixed(total) + " s");
    detail = "unit tests " + fixed(unit_secs) + " s, suite total " + fixed(total) + " s";
    return o;
}

}  // namespace

int main() {
    const auto suite_start = Clock::now();
    const std::vector<std::pair<std::string, std::function<Outcome(std::string&)>>> criteria = {
        {"template-round-trip", template_round_trip},
        {"extraction-corpus", extraction_corpus},
        {"language-registry", language_registry},
        {"transparency", transparency},
        {"streaming-assembly", streaming},
        {"prompt-store", prompt_store},
        {"wire-framing", wire},
        {"end-to-end-cli", [&](std::string& d) { return end_to_end_cli(d, suite_start); }},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        std::string detail;
        Outcome outcome;
        try {
            outcome = run(detail);
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.notes.push_back(std::string("exception: ") + e.what());
        }
        std::cout << (outcome.ok ? "PASS " : "FAIL ") << name;
        if (!detail.empty()) std::cout << " (" << detail << ")";
        for (const auto& note : outcome.notes) std::cout << "\n    " << note;
        std::cout << std::endl;
        failed += outcome.ok ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
