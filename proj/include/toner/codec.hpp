#pragma once
// Bidirectional codec for the generative output grammar:
//   [(type, surface), (type, surface)]       mention list
//   Entity: [...]\nExplanation: ...          explanation-augmented variant
// Serializers are byte-exact (part of the backend wire contract); parsers
// are total functions that never throw on content and report diagnostics.

#include <optional>
#include <string>
#include <vector>

#include "toner/core.hpp"

namespace toner {

struct ParseOutcome {
    std::vector<EntityMention> mentions;
    std::optional<std::string> explanation;
    std::vector<std::string> warnings;
    bool malformed = false;
};

// "[(name, surface), (name, surface)]" with display names; empty list -> "[]".
inline std::string serialize_mentions(const std::vector<EntityMention>& mentions,
                                      const TypeSchema& schema) {
    std::string out = "[";
    for (size_t i = 0; i < mentions.size(); ++i) {
        size_t idx = schema.index_of(mentions[i].type_tag);
        if (i) out += ", ";
        out += "(" + schema.at(idx).display_name + ", " + mentions[i].surface + ")";
    }
    out += "]";
    return out;
}

namespace detail {

// Splits bracket-stripped item content on the top-level separator "), ("
// (also tolerating "),("). Items keep their inner parentheses.
inline std::vector<std::string> split_items(const std::string& body) {
    std::vector<std::string> items;
    size_t start = 0;
    size_t i = 0;
    while (i < body.size()) {
        if (body[i] == ')') {
            size_t j = i + 1;
            while (j < body.size() && body[j] == ' ') ++j;
            if (j < body.size() && body[j] == ',') {
                ++j;
                while (j < body.size() && body[j] == ' ') ++j;
                if (j < body.size() && body[j] == '(') {
                    items.push_back(body.substr(start, i - start));
                    start = j + 1;
                    i = j + 1;
                    continue;
                }
            }
        }
        ++i;
    }
    items.push_back(body.substr(start));
    return items;
}

} // namespace detail

// Tolerant parse of the mention-list grammar. Never throws on content:
// unknown type names and empty surfaces drop the item with a warning;
// structurally unusable text yields malformed=true with no mentions.
inline ParseOutcome parse_mentions(const std::string& text, const TypeSchema& schema) {
    ParseOutcome out;
    std::string s = detail::trim(text);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') {
        out.malformed = true;
        out.warnings.push_back("output is not a bracketed list");
        return out;
    }
    std::string body = s.substr(1, s.size() - 2);
    if (detail::trim(body).empty()) return out; // "[]"

    // Strip the outermost item parentheses; inner parens belong to surfaces.
    std::string inner = detail::trim(body);
    bool open_ok = !inner.empty() && inner.front() == '(';
    bool close_ok = !inner.empty() && inner.back() == ')';
    if (!open_ok || !close_ok) {
        out.malformed = true;
        out.warnings.push_back("list items are not parenthesized");
        return out;
    }
    inner = inner.substr(1, inner.size() - 2);

    for (const std::string& item : detail::split_items(inner)) {
        size_t comma = item.find(',');
        if (comma == std::string::npos) {
            out.warnings.push_back("dropped item without type/surface separator: (" + item + ")");
            continue;
        }
        std::string name = detail::trim(item.substr(0, comma));
        std::string surface = detail::trim(item.substr(comma + 1));
        auto idx = schema.find_display_name(name);
        if (!idx) {
            out.warnings.push_back("dropped item with unknown type name: " + name);
            continue;
        }
        if (surface.empty()) {
            out.warnings.push_back("dropped item with empty surface (type " + name + ")");
            continue;
        }
        out.mentions.push_back(EntityMention{schema.at(*idx).tag, surface});
    }
    return out;
}

// "Entity: [...]\nExplanation: ..." two-line explanation-augmented form.
inline std::string serialize_exp(const std::vector<EntityMention>& mentions,
                                 const std::string& explanation, const TypeSchema& schema) {
    if (detail::trim(explanation).empty())
        throw config_error("explanation text must be nonempty");
    return "Entity: " + serialize_mentions(mentions, schema) + "\nExplanation: " + explanation;
}

// Locates the first "Entity:" line and the first "Explanation:" marker.
// Missing markers fall back to parse_mentions over the whole text.
inline ParseOutcome parse_exp(const std::string& text, const TypeSchema& schema) {
    static const std::string kEntity = "Entity:";
    static const std::string kExplanation = "Explanation:";

    std::string entity_part;
    bool found_entity = false;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        std::string trimmed = detail::trim(line);
        if (trimmed.rfind(kEntity, 0) == 0) {
            entity_part = trimmed.substr(kEntity.size());
            found_entity = true;
            break;
        }
        if (eol == std::string::npos) break;
        pos = eol + 1;
    }

    ParseOutcome out;
    if (found_entity) {
        out = parse_mentions(entity_part, schema);
    } else {
        out = parse_mentions(text, schema);
        out.warnings.push_back("missing Entity: marker; parsed whole text as mention list");
    }

    size_t exp_pos = text.find(kExplanation);
    if (exp_pos != std::string::npos) {
        out.explanation = detail::trim(text.substr(exp_pos + kExplanation.size()));
    } else if (found_entity) {
        out.warnings.push_back("missing Explanation: marker");
    }
    return out;
}

} // namespace toner
