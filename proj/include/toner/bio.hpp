#pragma once
// BIO corpus ingest and fine-tuning sample construction: the main NER
// samples, the auxiliary type-recognition samples, and the
// explanation-augmented samples.

#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "toner/codec.hpp"
#include "toner/core.hpp"
#include "toner/matching.hpp"
#include "toner/prompts.hpp"

namespace toner {

struct CorpusSplit {
    std::string name; // train/dev/test
    std::vector<AnnotatedExample> examples;
    TypeSchema schema;
};

struct ExplanationRecord {
    std::string example_id;
    std::string explanation;
};

// Sentinel in explanation records selecting the default no-entity text.
inline constexpr const char* kDefaultExplanationSentinel = "@default";
inline constexpr const char* kDefaultNoEntityExplanation =
    "No entity in the text belongs to any pre-defined entity type.";

namespace detail {

struct BioRun {
    std::string tag;
    std::vector<std::string> tokens;
};

} // namespace detail

// Decodes one sentence of BIO tags into mentions. A maximal run
// B-X (I-X)* yields one mention whose surface joins the run's tokens with
// single spaces. Lenient mode lets an orphan I-X start a new mention;
// strict mode rejects it.
inline std::vector<EntityMention> decode_bio(const std::vector<std::string>& tokens,
                                             const std::vector<std::string>& tags,
                                             const TypeSchema& schema, bool strict = false) {
    if (tokens.size() != tags.size())
        throw parse_error("token/tag count mismatch in BIO sentence");
    std::vector<EntityMention> mentions;
    std::optional<detail::BioRun> run;
    auto flush = [&] {
        if (!run) return;
        std::string surface;
        for (size_t i = 0; i < run->tokens.size(); ++i) {
            if (i) surface += ' ';
            surface += run->tokens[i];
        }
        mentions.push_back(EntityMention{run->tag, surface});
        run.reset();
    };
    for (size_t i = 0; i < tokens.size(); ++i) {
        const std::string& tag = tags[i];
        if (tag == "O") {
            flush();
            continue;
        }
        if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-')
            throw parse_error("malformed BIO tag: " + tag);
        std::string type = tag.substr(2);
        if (!schema.has_tag(type))
            throw schema_error("BIO tag type not in schema: " + type);
        if (tag[0] == 'B') {
            flush();
            run = detail::BioRun{type, {tokens[i]}};
        } else { // I-
            if (run && run->tag == type) {
                run->tokens.push_back(tokens[i]);
            } else {
                if (strict)
                    throw parse_error("orphan I-" + type + " without preceding B-" + type);
                flush();
                run = detail::BioRun{type, {tokens[i]}};
            }
        }
    }
    flush();
    return mentions;
}

// Reads a BIO column file: whitespace-separated columns, token in column 0,
// tag in column_index; blank lines separate sentences; lines whose first
// token is "-DOCSTART-" are skipped.
inline CorpusSplit read_bio_corpus(const std::string& path, const TypeSchema& schema,
                                   size_t column_index = 1, bool strict = false,
                                   const std::string& split_name = "train") {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open corpus file: " + path);

    CorpusSplit split{split_name, {}, schema};
    std::vector<std::string> tokens, tags;
    size_t line_no = 0;
    size_t sentence_start_line = 0;

    auto flush_sentence = [&] {
        if (tokens.empty()) return;
        std::string sentence;
        for (size_t i = 0; i < tokens.size(); ++i) {
            if (i) sentence += ' ';
            sentence += tokens[i];
        }
        std::vector<EntityMention> mentions;
        try {
            mentions = decode_bio(tokens, tags, schema, strict);
        } catch (const schema_error& e) {
            throw schema_error(std::string(e.what()) + " (sentence starting at line " +
                               std::to_string(sentence_start_line) + ")");
        } catch (const parse_error& e) {
            throw parse_error(std::string(e.what()) + " (sentence starting at line " +
                              std::to_string(sentence_start_line) + ")");
        }
        std::string id = split_name + "-" + std::to_string(split.examples.size());
        split.examples.push_back(make_example(id, sentence, std::move(mentions), schema));
        tokens.clear();
        tags.clear();
    };

    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) {
            flush_sentence();
            continue;
        }
        std::istringstream cols(line);
        std::vector<std::string> fields;
        std::string field;
        while (cols >> field) fields.push_back(field);
        if (fields[0] == "-DOCSTART-") {
            flush_sentence();
            continue;
        }
        if (fields.size() <= column_index)
            throw parse_error("line " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " columns, need tag column " +
                              std::to_string(column_index));
        if (tokens.empty()) sentence_start_line = line_no;
        tokens.push_back(fields[0]);
        tags.push_back(fields[column_index]);
    }
    flush_sentence();
    return split;
}

// One NER sample per example; with a filter map the prompt gains the
// per-example hint line and the task becomes NER_FILTERED.
inline std::vector<PromptSample> build_ner_samples(
    const CorpusSplit& split,
    const std::map<std::string, FilteredSchema>* filtered = nullptr) {
    std::vector<PromptSample> samples;
    samples.reserve(split.examples.size());
    for (const auto& ex : split.examples) {
        PromptSample s;
        s.id = ex.id;
        s.target = serialize_mentions(ex.mentions, split.schema);
        if (filtered) {
            auto it = filtered->find(ex.id);
            if (it == filtered->end())
                throw config_error("no filtered schema entry for example: " + ex.id);
            s.task = TaskKind::NER_FILTERED;
            s.prompt = build_filtered_prompt(split.schema, ex.sentence, it->second);
            std::string retained;
            for (size_t i = 0; i < it->second.retained.size(); ++i) {
                if (i) retained += ',';
                retained += it->second.retained[i];
            }
            s.meta["retained"] = retained;
            s.meta["delta"] = std::to_string(it->second.threshold);
        } else {
            s.task = TaskKind::NER;
            s.prompt = build_ner_prompt(split.schema, ex.sentence);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

// Selects ceil(fraction * n) examples uniformly without replacement under
// the seed (Fisher-Yates over the index vector, split order preserved in
// the output) and builds one TYPE_RECOGNITION sample per selection.
inline std::vector<PromptSample> build_auxiliary_samples(const CorpusSplit& split, double fraction,
                                                         uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw config_error("auxiliary fraction must lie in (0, 1]");
    if (split.examples.empty()) throw config_error("cannot sample from an empty split");

    size_t n = split.examples.size();
    auto m = static_cast<size_t>(std::ceil(fraction * static_cast<double>(n)));

    std::vector<size_t> indices(n);
    for (size_t i = 0; i < n; ++i) indices[i] = i;
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < m; ++i) {
        size_t j = i + static_cast<size_t>(rng() % (n - i));
        std::swap(indices[i], indices[j]);
    }
    indices.resize(m);
    std::sort(indices.begin(), indices.end());

    std::vector<PromptSample> samples;
    samples.reserve(m);
    for (size_t idx : indices) {
        const auto& ex = split.examples[idx];
        std::vector<std::string> names;
        for (const auto& t : split.schema.types())
            if (ex.positive_types.count(t.tag)) names.push_back(t.display_name);
        PromptSample s;
        s.id = ex.id;
        s.task = TaskKind::TYPE_RECOGNITION;
        s.prompt = build_type_recognition_prompt(split.schema, ex.sentence);
        s.target = render_type_list(names);
        samples.push_back(std::move(s));
    }
    return samples;
}

// One NER_EXP sample per matched explanation record; unmatched examples are
// omitted. The sentinel "@default" selects the canonical no-entity text.
inline std::vector<PromptSample> merge_explanations(
    const CorpusSplit& split, const std::vector<ExplanationRecord>& records,
    const std::map<std::string, FilteredSchema>* filtered = nullptr) {
    std::map<std::string, const AnnotatedExample*> by_id;
    for (const auto& ex : split.examples) by_id[ex.id] = &ex;

    std::vector<PromptSample> samples;
    for (const auto& rec : records) {
        if (detail::trim(rec.explanation).empty())
            throw config_error("empty explanation for example: " + rec.example_id);
        auto it = by_id.find(rec.example_id);
        if (it == by_id.end())
            throw config_error("explanation references unknown example: " + rec.example_id);
        const auto& ex = *it->second;
        std::string text = rec.explanation == kDefaultExplanationSentinel
                               ? kDefaultNoEntityExplanation
                               : rec.explanation;
        std::optional<FilteredSchema> fs;
        if (filtered) {
            auto fit = filtered->find(ex.id);
            if (fit == filtered->end())
                throw config_error("no filtered schema entry for example: " + ex.id);
            fs = fit->second;
        }
        PromptSample s;
        s.id = ex.id;
        s.task = TaskKind::NER_EXP;
        s.prompt = build_exp_prompt(split.schema, ex.sentence, fs);
        s.target = serialize_exp(ex.mentions, text, split.schema);
        samples.push_back(std::move(s));
    }
    return samples;
}

// Full type partitions for matching-loss training and calibration.
inline std::vector<MatchingPair> build_matching_pairs(const CorpusSplit& split) {
    std::vector<MatchingPair> pairs;
    pairs.reserve(split.examples.size());
    for (const auto& ex : split.examples)
        pairs.push_back(MatchingPair{ex.sentence, ex.positive_types, ex.negative_types});
    return pairs;
}

} // namespace toner
