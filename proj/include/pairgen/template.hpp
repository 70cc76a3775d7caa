#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pairgen {

/// Placeholder names a prompt template may reference. Anything else is
/// rejected when the template is parsed.
inline constexpr std::string_view kPlaceholderVocabulary[] = {
    "selected_code", "language_id", "whole_file",
    "definition",    "instruction", "output_language",
};

bool is_registered_placeholder(std::string_view name);

class TemplateError : public std::runtime_error {
public:
    enum class Kind { UnbalancedBrace, InvalidPlaceholderName, UnknownPlaceholder, MissingVariable };

    TemplateError(Kind kind, std::string name, std::size_t byte_offset);

    Kind kind() const noexcept { return kind_; }
    // Placeholder name for the name-related kinds, empty otherwise.
    const std::string& name() const noexcept { return name_; }
    // Offending byte in the template source (UnbalancedBrace, name errors).
    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    Kind kind_;
    std::string name_;
    std::size_t byte_offset_;
};

const char* to_string(TemplateError::Kind kind);

struct TemplateSegment {
    enum class Kind { Literal, Placeholder };

    Kind kind;
    std::string text;

    bool operator==(const TemplateSegment&) const = default;
};

/// A parsed prompt template. Grammar: `{name}` is a placeholder, `{{` and
/// `}}` are literal braces, any other brace is an error.
class Template {
public:
    const std::string& source() const noexcept { return source_; }
    std::span<const TemplateSegment> segments() const noexcept { return segments_; }

private:
    friend Template parse_template(std::string_view source);

    std::string source_;
    std::vector<TemplateSegment> segments_;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

Template parse_template(std::string_view source);

// Re-escapes literal braces; serialize(parse_template(s)) == s.
std::string serialize(const Template& tmpl);

// Values are inserted verbatim and never re-parsed.
std::string render(const Template& tmpl, const Bindings& bindings);

// Distinct placeholder names in first-occurrence order.
std::vector<std::string> list_placeholders(const Template& tmpl);

}  // namespace pairgen
