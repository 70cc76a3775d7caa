#include "pairgen/template.hpp"

#include <algorithm>

namespace pairgen {

namespace {

bool valid_placeholder_name(std::string_view name) {
    if (name.empty() || name[0] < 'a' || name[0] > 'z') {
        return false;
    }
    return std::all_of(name.begin() + 1, name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

std::string describe(TemplateError::Kind kind, const std::string& name, std::size_t offset) {
    switch (kind) {
    case TemplateError::Kind::UnbalancedBrace:
        return "unbalanced brace at byte " + std::to_string(offset);
    case TemplateError::Kind::InvalidPlaceholderName:
        return "invalid placeholder name '" + name + "' at byte " + std::to_string(offset);
    case TemplateError::Kind::UnknownPlaceholder:
        return "unknown placeholder '" + name + "' at byte " + std::to_string(offset);
    case TemplateError::Kind::MissingVariable:
        return "missing value for placeholder '" + name + "'";
    }
    return "template error";
}

}  // namespace

bool is_registered_placeholder(std::string_view name) {
    return std::find(std::begin(kPlaceholderVocabulary), std::end(kPlaceholderVocabulary), name) !=
           std::end(kPlaceholderVocabulary);
}

TemplateError::TemplateError(Kind kind, std::string name, std::size_t byte_offset)
    : std::runtime_error(describe(kind, name, byte_offset)),
      kind_(kind),
      name_(std::move(name)),
      byte_offset_(byte_offset) {}

const char* to_string(TemplateError::Kind kind) {
    switch (kind) {
    case TemplateError::Kind::UnbalancedBrace: return "UnbalancedBrace";
    case TemplateError::Kind::InvalidPlaceholderName: return "InvalidPlaceholderName";
    case TemplateError::Kind::UnknownPlaceholder: return "UnknownPlaceholder";
    case TemplateError::Kind::MissingVariable: return "MissingVariable";
    }
    return "TemplateError";
}

Template parse_template(std::string_view source) {
    Template out;
    out.source_.assign(source);

    std::string literal;
    auto flush_literal = [&] {
        if (!literal.empty()) {
            out.segments_.push_back({TemplateSegment::Kind::Literal, std::move(literal)});
            literal.clear();
        }
    };

    std::size_t i = 0;
    while (i < source.size()) {
        const char c = source[i];
        if (c == '{') {
            if (i + 1 < source.size() && source[i + 1] == '{') {
                literal.push_back('{');
                i += 2;
                continue;
            }
            const std::size_t close = source.find_first_of("{}", i + 1);
            if (close == std::string_view::npos || source[close] != '}') {
                throw TemplateError(TemplateError::Kind::UnbalancedBrace, {}, i);
            }
            std::string name(source.substr(i + 1, close - i - 1));
            if (!valid_placeholder_name(name)) {
                throw TemplateError(TemplateError::Kind::InvalidPlaceholderName, std::move(name), i);
            }
            if (!is_registered_placeholder(name)) {
                throw TemplateError(TemplateError::Kind::UnknownPlaceholder, std::move(name), i);
            }
            flush_literal();
            out.segments_.push_back({TemplateSegment::Kind::Placeholder, std::move(name)});
            i = close + 1;
        } else if (c == '}') {
            if (i + 1 < source.size() && source[i + 1] == '}') {
                literal.push_back('}');
                i += 2;
                continue;
            }
            throw TemplateError(TemplateError::Kind::UnbalancedBrace, {}, i);
        } else {
            literal.push_back(c);
            ++i;
        }
    }
    flush_literal();
    return out;
}

std::string serialize(const Template& tmpl) {
    std::string out;
    out.reserve(tmpl.source().size());
    for (const auto& seg : tmpl.segments()) {
        if (seg.kind == TemplateSegment::Kind::Placeholder) {
            out += '{';
            out += seg.text;
            out += '}';
            continue;
        }
        for (char c : seg.text) {
            out += c;
            if (c == '{' || c == '}') {
                out += c;
            }
        }
    }
    return out;
}

std::string render(const Template& tmpl, const Bindings& bindings) {
    std::string out;
    for (const auto& seg : tmpl.segments()) {
        if (seg.kind == TemplateSegment::Kind::Literal) {
            out += seg.text;
            continue;
        }
        auto it = bindings.find(seg.text);
        if (it == bindings.end()) {
            throw TemplateError(TemplateError::Kind::MissingVariable, seg.text, 0);
        }
        out += it->second;
    }
    return out;
}

std::vector<std::string> list_placeholders(const Template& tmpl) {
    std::vector<std::string> names;
    for (const auto& seg : tmpl.segments()) {
        if (seg.kind == TemplateSegment::Kind::Placeholder &&
            std::find(names.begin(), names.end(), seg.text) == names.end()) {
            names.push_back(seg.text);
        }
    }
    return names;
}

}  // namespace pairgen
