#include "pairgen/context.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <nlohmann/json.hpp>

namespace pairgen {

namespace {

using nlohmann::json;

BlockStyle parse_block_style(const std::string& s) {
    if (s == "brace") return BlockStyle::Brace;
    if (s == "indent") return BlockStyle::Indent;
    throw std::invalid_argument("unknown block_style '" + s + "'");
}

}  // namespace

LanguageRegistry LanguageRegistry::from_json(std::string_view json_text) {
    LanguageRegistry reg;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("language registry: ") + e.what());
    }
    try {
        for (const auto& rec : doc.at("languages")) {
            LanguageProfile p;
            p.language_id = rec.at("id").get<std::string>();
            p.block_style = parse_block_style(rec.at("block_style").get<std::string>());
            p.definition_keywords = rec.at("keywords").get<std::vector<std::string>>();
            p.comment_prefix = rec.at("comment_prefix").get<std::string>();
            if (rec.contains("extensions")) {
                p.extensions = rec.at("extensions").get<std::vector<std::string>>();
            }
            reg.profiles_.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("language registry: ") + e.what());
    }
    std::sort(reg.profiles_.begin(), reg.profiles_.end(),
              [](const auto& a, const auto& b) { return a.language_id < b.language_id; });
    auto dup = std::adjacent_find(reg.profiles_.begin(), reg.profiles_.end(),
                                  [](const auto& a, const auto& b) { return a.language_id == b.language_id; });
    if (dup != reg.profiles_.end()) {
        throw std::invalid_argument("language registry: duplicate id '" + dup->language_id + "'");
    }

    reg.generic_.language_id = "generic";
    reg.generic_.block_style = BlockStyle::Brace;
    reg.generic_.definition_keywords = {"fn", "fun", "func", "function", "def", "class", "struct", "sub", "proc"};
    reg.generic_.comment_prefix = "//";
    return reg;
}

const LanguageRegistry& LanguageRegistry::builtin() {
    static const LanguageRegistry reg = from_json(builtin_language_data());
    return reg;
}

const LanguageProfile* LanguageRegistry::find(std::string_view language_id) const {
    auto it = std::lower_bound(profiles_.begin(), profiles_.end(), language_id,
                               [](const LanguageProfile& p, std::string_view id) { return p.language_id < id; });
    if (it != profiles_.end() && it->language_id == language_id) {
        return &*it;
    }
    return nullptr;
}

const LanguageProfile& LanguageRegistry::profile_for(std::string_view language_id) const {
    const auto* p = find(language_id);
    return p ? *p : generic_;
}

const LanguageProfile* LanguageRegistry::find_by_extension(std::string_view extension) const {
    for (const auto& p : profiles_) {
        if (std::find(p.extensions.begin(), p.extensions.end(), extension) != p.extensions.end()) {
            return &p;
        }
    }
    return nullptr;
}

std::vector<std::string> LanguageRegistry::ids() const {
    std::vector<std::string> out;
    out.reserve(profiles_.size());
    for (const auto& p : profiles_) {
        out.push_back(p.language_id);
    }
    return out;
}

std::vector<std::string> LanguageRegistry::validate() const {
    std::vector<std::string> problems;
    std::set<std::string> seen;
    for (const auto& p : profiles_) {
        const std::string& id = p.language_id;
        if (id.empty() || !std::all_of(id.begin(), id.end(), [](char c) {
                return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
            })) {
            problems.push_back("invalid language id '" + id + "'");
        }
        if (!seen.insert(id).second) {
            problems.push_back("duplicate language id '" + id + "'");
        }
        if (p.definition_keywords.empty()) {
            problems.push_back(id + ": no definition keywords");
        }
        for (const auto& kw : p.definition_keywords) {
            if (kw.empty() || std::any_of(kw.begin(), kw.end(), [](char c) {
                    return !(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '@');
                })) {
                problems.push_back(id + ": keyword '" + kw + "' is not a word token");
            }
        }
        if (p.comment_prefix.empty()) {
            problems.push_back(id + ": empty comment prefix");
        }
        if (p.block_style != BlockStyle::Brace && p.block_style != BlockStyle::Indent) {
            problems.push_back(id + ": unknown block style");
        }
    }
    return problems;
}

std::vector<std::string> list_supported_languages() {
    return LanguageRegistry::builtin().ids();
}

}  // namespace pairgen
