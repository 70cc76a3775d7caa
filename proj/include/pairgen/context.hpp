#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pairgen {

class ExtractionError : public std::runtime_error {
public:
    enum class Kind { InvalidEncoding, PositionOutOfRange, InvalidSpan, SelectionExceedsBudget };

    ExtractionError(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

const char* to_string(ExtractionError::Kind kind);

enum class BlockStyle { Brace, Indent };

struct LanguageProfile {
    std::string language_id;
    BlockStyle block_style = BlockStyle::Brace;
    std::vector<std::string> definition_keywords;
    std::string comment_prefix;
    std::vector<std::string> extensions;
};

/// Immutable table of language profiles, loaded once from the embedded
/// data file. Safe to share across threads.
class LanguageRegistry {
public:
    static const LanguageRegistry& builtin();

    // Throws std::invalid_argument on malformed data or duplicate ids.
    static LanguageRegistry from_json(std::string_view json_text);

    const LanguageProfile* find(std::string_view language_id) const;
    // Exact profile for the id, or the generic brace profile.
    const LanguageProfile& profile_for(std::string_view language_id) const;
    const LanguageProfile* find_by_extension(std::string_view extension) const;

    std::vector<std::string> ids() const;
    const std::vector<LanguageProfile>& profiles() const noexcept { return profiles_; }

    // Empty when valid; otherwise one message per problem.
    std::vector<std::string> validate() const;

private:
    std::vector<LanguageProfile> profiles_;  // sorted by id
    LanguageProfile generic_;
};

// Raw embedded registry data, as shipped.
std::string_view builtin_language_data();

std::vector<std::string> list_supported_languages();

bool is_valid_utf8(std::string_view text);
std::size_t utf8_length(std::string_view text);

struct Span {
    std::size_t start_byte = 0;
    std::size_t end_byte = 0;  // exclusive
    std::size_t start_line = 0;
    std::size_t end_line = 0;  // line holding the last byte of the span

    bool operator==(const Span&) const = default;
};

class Document {
public:
    const std::string& text() const noexcept { return text_; }
    const std::string& language_id() const noexcept { return language_id_; }
    const LanguageProfile& profile() const noexcept { return profile_; }
    const std::vector<std::size_t>& line_index() const noexcept { return line_index_; }

    std::size_t line_count() const noexcept { return line_index_.size(); }
    std::size_t line_of(std::size_t byte_offset) const;
    // Byte range [start, end) of a line, end excluding the newline.
    std::size_t line_start(std::size_t line) const { return line_index_.at(line); }
    std::size_t line_end(std::size_t line) const;
    std::string_view line_text(std::size_t line) const;

    // Builds a span with line numbers; throws InvalidSpan if the range is
    // outside the text or splits a UTF-8 sequence.
    Span make_span(std::size_t start_byte, std::size_t end_byte) const;
    std::string_view slice(const Span& span) const;

private:
    friend Document load_document(std::string text, std::string_view language_id,
                                  const LanguageRegistry& registry);

    std::string text_;
    std::string language_id_;
    LanguageProfile profile_;
    std::vector<std::size_t> line_index_;
};

// Unknown ids fall back to a generic brace profile.
Document load_document(std::string text, std::string_view language_id,
                       const LanguageRegistry& registry = LanguageRegistry::builtin());

/// Finds definition spans in a document. The heuristic extractor is the
/// only implementation today; grammar-backed extractors can slot in per
/// language behind the same interface.
class DefinitionExtractor {
public:
    virtual ~DefinitionExtractor() = default;

    virtual std::optional<Span> find_enclosing(const Document& doc, std::size_t position) const = 0;
    virtual std::optional<Span> resolve_named(const Document& doc, std::string_view name) const = 0;
};

class HeuristicExtractor final : public DefinitionExtractor {
public:
    std::optional<Span> find_enclosing(const Document& doc, std::size_t position) const override;
    std::optional<Span> resolve_named(const Document& doc, std::string_view name) const override;

    // Span of the definition starting at `line`, if that line is a definition.
    std::optional<Span> definition_at_line(const Document& doc, std::size_t line) const;
};

std::optional<Span> find_enclosing_definition(const Document& doc, std::size_t position);
std::optional<Span> resolve_named_definition(const Document& doc, std::string_view name);

// ceil(code points / 4)
std::size_t estimate_tokens(std::string_view text);

inline constexpr std::string_view kSnipMarker = "/* ...snip... */";

struct PackedContext {
    std::string selected_code;
    std::string definition;
    std::string whole_file_excerpt;
    std::string language_id;
    std::size_t estimated_tokens = 0;

    bool operator==(const PackedContext&) const = default;
};

/// Fills the context in priority order: the selection whole, then the
/// definition if it fits what is left, then a head/tail excerpt of the
/// file around a snip marker.
PackedContext pack_context(const Document& doc, const Span& selection,
                           const std::optional<Span>& definition, std::size_t budget_tokens);

}  // namespace pairgen
