#pragma once
// Byte-deterministic construction of the four instruction prompts and the
// fine-tuning sample record. The exact templates are normative: they are
// the wire contract between dataset construction and the generator backend.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toner/core.hpp"

namespace toner {

enum class TaskKind { NER, NER_FILTERED, TYPE_RECOGNITION, NER_EXP };

inline std::string task_name(TaskKind k) {
    switch (k) {
        case TaskKind::NER: return "NER";
        case TaskKind::NER_FILTERED: return "NER_FILTERED";
        case TaskKind::TYPE_RECOGNITION: return "TYPE_RECOGNITION";
        case TaskKind::NER_EXP: return "NER_EXP";
    }
    throw config_error("unknown task kind");
}

inline TaskKind parse_task_name(const std::string& s) {
    if (s == "NER") return TaskKind::NER;
    if (s == "NER_FILTERED") return TaskKind::NER_FILTERED;
    if (s == "TYPE_RECOGNITION") return TaskKind::TYPE_RECOGNITION;
    if (s == "NER_EXP") return TaskKind::NER_EXP;
    throw config_error("unknown task name: " + s);
}

// One (instruction, input, target) fine-tuning record.
struct PromptSample {
    std::string id;
    TaskKind task = TaskKind::NER;
    std::string prompt;
    std::string target;
    std::map<std::string, std::string> meta;
};

// "[a, b, c]"; empty -> "[]".
inline std::string render_type_list(const std::vector<std::string>& names) {
    std::string out = "[";
    for (size_t i = 0; i < names.size(); ++i) {
        if (i) out += ", ";
        out += names[i];
    }
    out += "]";
    return out;
}

inline std::string build_ner_prompt(const TypeSchema& schema, const std::string& sentence) {
    return "List all named entities of type " + render_type_list(schema.display_names()) +
           "\nText: " + sentence;
}

namespace detail {

// Retained tags -> display names, preserving the FilteredSchema ordering
// (score-descending). Mismatched tags are a configuration error.
inline std::vector<std::string> retained_display_names(const TypeSchema& schema,
                                                       const FilteredSchema& filtered) {
    std::vector<std::string> names;
    names.reserve(filtered.retained.size());
    for (const auto& tag : filtered.retained) {
        auto idx = schema.find_tag(tag);
        if (!idx) throw config_error("filtered schema tag not in schema: " + tag);
        names.push_back(schema.at(*idx).display_name);
    }
    return names;
}

inline std::string filtered_hint_line(const TypeSchema& schema, const FilteredSchema& filtered) {
    return "Entities of type " + render_type_list(retained_display_names(schema, filtered)) +
           " may exist in text.";
}

} // namespace detail

// The full schema stays in line 1; the hint line carries only T'.
inline std::string build_filtered_prompt(const TypeSchema& schema, const std::string& sentence,
                                         const FilteredSchema& filtered) {
    return build_ner_prompt(schema, sentence) + "\n" + detail::filtered_hint_line(schema, filtered);
}

inline std::string build_type_recognition_prompt(const TypeSchema& schema,
                                                 const std::string& sentence) {
    return "List all entity types in the text from type " +
           render_type_list(schema.display_names()) + "\nText: " + sentence;
}

// Explanation-task prompt; the hint line is emitted only when a filtered
// schema is supplied.
inline std::string build_exp_prompt(const TypeSchema& schema, const std::string& sentence,
                                    const std::optional<FilteredSchema>& filtered = std::nullopt) {
    std::string out = "List all named entities of type " +
                      render_type_list(schema.display_names()) + " and give explanations." +
                      "\nText: " + sentence;
    if (filtered) out += "\n" + detail::filtered_hint_line(schema, *filtered);
    return out;
}

} // namespace toner
