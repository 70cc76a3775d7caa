#include "pairgen/context.hpp"

#include <algorithm>
#include <cctype>

namespace pairgen {

namespace {

bool is_blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

std::size_t indentation(std::string_view line) {
    std::size_t n = 0;
    while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) {
        ++n;
    }
    return n;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

bool is_comment_line(std::string_view line, const LanguageProfile& profile) {
    return starts_with(line.substr(indentation(line)), profile.comment_prefix);
}

bool is_word_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '@';
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '@';
}

// Words on a line before the first `(`, `=`, `;`, `{`, quote, single `:`
// or comment. Angle-bracket groups (generics) are dropped.
std::vector<std::string_view> leading_words(std::string_view line, const LanguageProfile& profile) {
    std::vector<std::string_view> words;
    int angle_depth = 0;
    std::size_t i = indentation(line);
    while (i < line.size()) {
        const char c = line[i];
        if (starts_with(line.substr(i), profile.comment_prefix)) {
            break;
        }
        if (c == '(' || c == '=' || c == ';' || c == '{' || c == '"' || c == '\'') {
            break;
        }
        if (c == ':') {
            if (i + 1 < line.size() && line[i + 1] == ':') {
                i += 2;
                continue;
            }
            break;
        }
        if (c == '<') {
            ++angle_depth;
        } else if (c == '>' && angle_depth > 0) {
            --angle_depth;
        } else if (is_word_start(c)) {
            std::size_t j = i + 1;
            while (j < line.size() && is_word_char(line[j])) {
                ++j;
            }
            if (angle_depth == 0) {
                words.push_back(line.substr(i, j - i));
            }
            i = j;
            continue;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            while (i < line.size() && is_word_char(line[i])) {
                ++i;
            }
            continue;
        }
        ++i;
    }
    return words;
}

bool is_keyword(std::string_view word, const LanguageProfile& profile) {
    return std::find(profile.definition_keywords.begin(), profile.definition_keywords.end(), word) !=
           profile.definition_keywords.end();
}

bool has_definition_keyword(std::string_view line, const LanguageProfile& profile) {
    if (is_comment_line(line, profile)) {
        return false;
    }
    auto words = leading_words(line, profile);
    return std::any_of(words.begin(), words.end(), [&](std::string_view w) { return is_keyword(w, profile); });
}

// Name following the first definition keyword, skipping further keywords.
std::string_view defined_name(std::string_view line, const LanguageProfile& profile) {
    auto words = leading_words(line, profile);
    auto kw = std::find_if(words.begin(), words.end(), [&](std::string_view w) { return is_keyword(w, profile); });
    if (kw == words.end()) {
        return {};
    }
    for (auto it = kw + 1; it != words.end(); ++it) {
        if (!is_keyword(*it, profile)) {
            return *it;
        }
    }
    return {};
}

// Offset just past a quoted literal starting at `open`, or npos when the
// quote is not closed on the same line.
std::size_t skip_quoted(std::string_view text, std::size_t open) {
    const char quote = text[open];
    for (std::size_t i = open + 1; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            return std::string_view::npos;
        }
        if (c == '\\') {
            ++i;
            continue;
        }
        if (c == quote) {
            return i + 1;
        }
    }
    return std::string_view::npos;
}

std::optional<std::size_t> brace_block_end(const Document& doc, std::size_t def_line) {
    std::string_view text = doc.text();
    const std::string& comment = doc.profile().comment_prefix;
    int depth = 0;
    bool opened = false;
    bool line_has_content = true;
    std::size_t i = doc.line_start(def_line);
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') {
            if (!opened && !line_has_content && i > doc.line_start(def_line)) {
                return std::nullopt;  // blank line before the body opened
            }
            line_has_content = false;
            ++i;
            continue;
        }
        if (c != ' ' && c != '\t' && c != '\r') {
            line_has_content = true;
        }
        if (starts_with(text.substr(i), comment)) {
            const std::size_t nl = text.find('\n', i);
            i = nl == std::string_view::npos ? text.size() : nl;
            continue;
        }
        if (c == '"' || c == '\'') {
            const std::size_t past = skip_quoted(text, i);
            i = past == std::string_view::npos ? i + 1 : past;
            continue;
        }
        if (c == '{') {
            ++depth;
            opened = true;
        } else if (c == '}') {
            if (depth == 0) {
                return std::nullopt;
            }
            if (--depth == 0) {
                return i + 1;
            }
        } else if (c == ';' && !opened) {
            return std::nullopt;
        }
        ++i;
    }
    if (opened) {
        return text.size();  // unbalanced: run to end of document
    }
    return std::nullopt;
}

std::size_t indent_block_end(const Document& doc, std::size_t def_line) {
    const auto& profile = doc.profile();
    const std::size_t def_indent = indentation(doc.line_text(def_line));
    std::size_t last = def_line;
    for (std::size_t line = def_line + 1; line < doc.line_count(); ++line) {
        std::string_view lt = doc.line_text(line);
        if (is_blank(lt)) {
            continue;
        }
        const std::size_t ind = indentation(lt);
        if (is_comment_line(lt, profile)) {
            if (ind > def_indent) {
                last = line;
            }
            continue;
        }
        if (ind <= def_indent) {
            break;
        }
        last = line;
    }
    return doc.line_end(last);
}

}  // namespace

const char* to_string(ExtractionError::Kind kind) {
    switch (kind) {
    case ExtractionError::Kind::InvalidEncoding: return "InvalidEncoding";
    case ExtractionError::Kind::PositionOutOfRange: return "PositionOutOfRange";
    case ExtractionError::Kind::InvalidSpan: return "InvalidSpan";
    case ExtractionError::Kind::SelectionExceedsBudget: return "SelectionExceedsBudget";
    }
    return "ExtractionError";
}

bool is_valid_utf8(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        std::size_t len = 0;
        unsigned min_cp = 0;
        unsigned cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2, min_cp = 0x80, cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3, min_cp = 0x800, cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4, min_cp = 0x10000, cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > text.size()) {
            return false;
        }
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(text[i + k]);
            if ((cc & 0xC0) != 0x80) {
                return false;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        i += len;
    }
    return true;
}

std::size_t utf8_length(std::string_view text) {
    return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    }));
}

static bool is_char_boundary(std::string_view text, std::size_t offset) {
    return offset == text.size() || (static_cast<unsigned char>(text[offset]) & 0xC0) != 0x80;
}

std::size_t Document::line_of(std::size_t byte_offset) const {
    auto it = std::upper_bound(line_index_.begin(), line_index_.end(), byte_offset);
    return static_cast<std::size_t>(it - line_index_.begin()) - 1;
}

std::size_t Document::line_end(std::size_t line) const {
    if (line + 1 < line_index_.size()) {
        return line_index_[line + 1] - 1;
    }
    return text_.size();
}

std::string_view Document::line_text(std::size_t line) const {
    const std::size_t start = line_start(line);
    return std::string_view(text_).substr(start, line_end(line) - start);
}

Span Document::make_span(std::size_t start_byte, std::size_t end_byte) const {
    if (start_byte > end_byte || end_byte > text_.size() || !is_char_boundary(text_, start_byte) ||
        !is_char_boundary(text_, end_byte)) {
        throw ExtractionError(ExtractionError::Kind::InvalidSpan,
                              "span [" + std::to_string(start_byte) + ", " + std::to_string(end_byte) +
                                  ") is not valid for a " + std::to_string(text_.size()) + "-byte document");
    }
    Span s;
    s.start_byte = start_byte;
    s.end_byte = end_byte;
    s.start_line = line_of(start_byte);
    s.end_line = end_byte > start_byte ? line_of(end_byte - 1) : s.start_line;
    return s;
}

std::string_view Document::slice(const Span& span) const {
    return std::string_view(text_).substr(span.start_byte, span.end_byte - span.start_byte);
}

Document load_document(std::string text, std::string_view language_id, const LanguageRegistry& registry) {
    if (!is_valid_utf8(text)) {
        throw ExtractionError(ExtractionError::Kind::InvalidEncoding, "document is not valid UTF-8");
    }
    if (language_id.empty()) {
        throw std::invalid_argument("language_id must not be empty");
    }
    Document doc;
    doc.text_ = std::move(text);
    doc.language_id_.assign(language_id);
    std::transform(doc.language_id_.begin(), doc.language_id_.end(), doc.language_id_.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    doc.profile_ = registry.profile_for(doc.language_id_);
    doc.line_index_.push_back(0);
    for (std::size_t i = 0; i < doc.text_.size(); ++i) {
        if (doc.text_[i] == '\n') {
            doc.line_index_.push_back(i + 1);
        }
    }
    return doc;
}

std::optional<Span> HeuristicExtractor::definition_at_line(const Document& doc, std::size_t line) const {
    if (!has_definition_keyword(doc.line_text(line), doc.profile())) {
        return std::nullopt;
    }
    const std::size_t start = doc.line_start(line);
    if (doc.profile().block_style == BlockStyle::Brace) {
        auto end = brace_block_end(doc, line);
        if (!end) {
            return std::nullopt;
        }
        return doc.make_span(start, *end);
    }
    return doc.make_span(start, indent_block_end(doc, line));
}

std::optional<Span> HeuristicExtractor::find_enclosing(const Document& doc, std::size_t position) const {
    if (position > doc.text().size()) {
        throw ExtractionError(ExtractionError::Kind::PositionOutOfRange,
                              "position " + std::to_string(position) + " is past the end of the document");
    }
    std::optional<Span> best;
    const std::size_t last_line = doc.line_of(position);
    for (std::size_t line = 0; line <= last_line; ++line) {
        auto span = definition_at_line(doc, line);
        if (!span || position < span->start_byte || position >= span->end_byte) {
            continue;
        }
        if (!best || span->end_byte - span->start_byte <= best->end_byte - best->start_byte) {
            best = span;
        }
    }
    return best;
}

std::optional<Span> HeuristicExtractor::resolve_named(const Document& doc, std::string_view name) const {
    if (name.empty()) {
        return std::nullopt;
    }
    for (std::size_t line = 0; line < doc.line_count(); ++line) {
        std::string_view lt = doc.line_text(line);
        if (is_comment_line(lt, doc.profile()) || defined_name(lt, doc.profile()) != name) {
            continue;
        }
        if (auto span = definition_at_line(doc, line)) {
            return span;
        }
    }
    return std::nullopt;
}

std::optional<Span> find_enclosing_definition(const Document& doc, std::size_t position) {
    return HeuristicExtractor{}.find_enclosing(doc, position);
}

std::optional<Span> resolve_named_definition(const Document& doc, std::string_view name) {
    return HeuristicExtractor{}.resolve_named(doc, name);
}

std::size_t estimate_tokens(std::string_view text) {
    return (utf8_length(text) + 3) / 4;
}

namespace {

// Byte length of the first `count` code points.
std::size_t prefix_bytes(std::string_view text, std::size_t count) {
    std::size_t i = 0;
    while (i < text.size() && count > 0) {
        ++i;
        while (i < text.size() && !is_char_boundary(text, i)) {
            ++i;
        }
        --count;
    }
    return i;
}

// Byte offset where the last `count` code points begin.
std::size_t suffix_start(std::string_view text, std::size_t count) {
    std::size_t i = text.size();
    while (i > 0 && count > 0) {
        --i;
        while (i > 0 && !is_char_boundary(text, i)) {
            --i;
        }
        --count;
    }
    return i;
}

std::string head_tail_excerpt(std::string_view text, std::size_t budget_tokens) {
    if (estimate_tokens(text) <= budget_tokens) {
        return std::string(text);
    }
    const std::size_t max_chars = budget_tokens * 4;
    const std::size_t overhead = kSnipMarker.size() + 2;  // marker plus its two newlines
    if (max_chars <= overhead) {
        return {};
    }
    const std::size_t half = (max_chars - overhead) / 2;

    std::string_view head = text.substr(0, prefix_bytes(text, half));
    if (const auto nl = head.rfind('\n'); nl != std::string_view::npos) {
        head = head.substr(0, nl + 1);
    }
    std::string_view tail = text.substr(suffix_start(text, half));
    if (const auto nl = tail.find('\n'); nl != std::string_view::npos && nl + 1 < tail.size()) {
        tail = tail.substr(nl + 1);
    }

    std::string out(head);
    if (!out.empty() && out.back() != '\n') {
        out += '\n';
    }
    out += kSnipMarker;
    out += '\n';
    out += tail;
    return out;
}

}  // namespace

PackedContext pack_context(const Document& doc, const Span& selection, const std::optional<Span>& definition,
                           std::size_t budget_tokens) {
    if (budget_tokens == 0) {
        throw std::invalid_argument("token budget must be positive");
    }
    const Span sel = doc.make_span(selection.start_byte, selection.end_byte);

    PackedContext out;
    out.language_id = doc.language_id();
    out.selected_code = std::string(doc.slice(sel));
    const std::size_t sel_tokens = estimate_tokens(out.selected_code);
    if (sel_tokens >= budget_tokens) {
        throw ExtractionError(ExtractionError::Kind::SelectionExceedsBudget,
                              "selection needs " + std::to_string(sel_tokens) + " tokens, budget is " +
                                  std::to_string(budget_tokens));
    }
    std::size_t remaining = budget_tokens - sel_tokens;

    if (definition) {
        const Span def = doc.make_span(definition->start_byte, definition->end_byte);
        std::string_view def_text = doc.slice(def);
        const std::size_t def_tokens = estimate_tokens(def_text);
        if (def_tokens <= remaining) {
            out.definition = std::string(def_text);
            remaining -= def_tokens;
        }
    }

    out.whole_file_excerpt = head_tail_excerpt(doc.text(), remaining);
    out.estimated_tokens = sel_tokens + estimate_tokens(out.definition) + estimate_tokens(out.whole_file_excerpt);
    return out;
}

}  // namespace pairgen
