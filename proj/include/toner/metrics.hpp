#pragma once
// Entity-level micro precision/recall/F1, per-type breakdown, threshold
// sweeps and ablation-style report assembly.

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "toner/backends.hpp"
#include "toner/bio.hpp"
#include "toner/codec.hpp"
#include "toner/core.hpp"
#include "toner/matching.hpp"

namespace toner {

struct TypeCounts {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
};

struct MatchCounts {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    std::map<std::string, TypeCounts> per_type;
    long long parse_failures = 0;

    MatchCounts& operator+=(const MatchCounts& other) {
        tp += other.tp;
        fp += other.fp;
        fn += other.fn;
        parse_failures += other.parse_failures;
        for (const auto& [tag, c] : other.per_type) {
            auto& mine = per_type[tag];
            mine.tp += c.tp;
            mine.fp += c.fp;
            mine.fn += c.fn;
        }
        return *this;
    }
};

// Trim and collapse internal whitespace runs to single spaces. Comparison
// stays case-sensitive: surface casing is signal.
inline std::string normalize_surface(const std::string& s) {
    std::string out;
    bool in_ws = true; // swallow leading whitespace
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            in_ws = true;
        } else {
            if (in_ws && !out.empty()) out += ' ';
            in_ws = false;
            out += c;
        }
    }
    return out;
}

// Multiset matching over (type, normalized surface) pairs:
// tp = |gold multiset intersect pred multiset|, fp/fn the leftovers.
inline MatchCounts match_counts(const std::vector<EntityMention>& gold,
                                const std::vector<EntityMention>& pred) {
    std::map<std::pair<std::string, std::string>, long long> remaining;
    for (const auto& g : gold)
        ++remaining[{g.type_tag, normalize_surface(g.surface)}];

    MatchCounts counts;
    for (const auto& p : pred) {
        auto key = std::make_pair(p.type_tag, normalize_surface(p.surface));
        auto it = remaining.find(key);
        if (it != remaining.end() && it->second > 0) {
            --it->second;
            ++counts.tp;
            ++counts.per_type[p.type_tag].tp;
        } else {
            ++counts.fp;
            ++counts.per_type[p.type_tag].fp;
        }
    }
    for (const auto& [key, n] : remaining) {
        counts.fn += n;
        counts.per_type[key.first].fn += n;
    }
    return counts;
}

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline Prf micro_prf(const MatchCounts& counts) {
    Prf out;
    out.precision = counts.tp + counts.fp > 0
                        ? static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fp)
                        : 0.0;
    out.recall = counts.tp + counts.fn > 0
                     ? static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fn)
                     : 0.0;
    out.f1 = out.precision + out.recall > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

enum class DedupePolicy { multiset, set };

inline DedupePolicy parse_dedupe_policy(const std::string& s) {
    if (s == "multiset") return DedupePolicy::multiset;
    if (s == "set") return DedupePolicy::set;
    throw config_error("unknown dedupe policy: " + s);
}

struct EvalReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    MatchCounts counts;
    size_t n_examples = 0;
    std::string config_fingerprint;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<EntityMention> dedupe_mentions(const std::vector<EntityMention>& mentions) {
    std::vector<EntityMention> out;
    for (const auto& m : mentions) {
        EntityMention norm{m.type_tag, normalize_surface(m.surface)};
        bool seen = false;
        for (const auto& have : out)
            if (have == norm) {
                seen = true;
                break;
            }
        if (!seen) out.push_back(std::move(norm));
    }
    return out;
}

inline std::string eval_fingerprint(const TypeSchema& schema, DedupePolicy policy) {
    std::string desc = policy == DedupePolicy::set ? "set" : "multiset";
    for (const auto& t : schema.types()) desc += "|" + t.tag;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(desc)));
    return buf;
}

} // namespace detail

// Parses raw generation output: explanation-style when an Entity: marker
// is present, plain mention list otherwise.
inline ParseOutcome parse_exp_or_mentions(const std::string& text, const TypeSchema& schema) {
    if (text.find("Entity:") != std::string::npos) return parse_exp(text, schema);
    return parse_mentions(text, schema);
}

// Scores raw model outputs against a gold split. Malformed outputs and
// missing predictions count as empty mention lists; nothing is fatal.
inline EvalReport evaluate_dataset(const CorpusSplit& split,
                                   const std::map<std::string, std::string>& predictions,
                                   DedupePolicy policy = DedupePolicy::multiset) {
    EvalReport report;
    report.n_examples = split.examples.size();
    report.config_fingerprint = detail::eval_fingerprint(split.schema, policy);

    for (const auto& ex : split.examples) {
        std::vector<EntityMention> pred;
        auto it = predictions.find(ex.id);
        if (it == predictions.end()) {
            report.warnings.push_back("missing prediction for example " + ex.id +
                                      "; scored as empty");
        } else {
            ParseOutcome parsed = parse_exp_or_mentions(it->second, split.schema);
            if (parsed.malformed) ++report.counts.parse_failures;
            pred = std::move(parsed.mentions);
        }
        std::vector<EntityMention> gold = ex.mentions;
        if (policy == DedupePolicy::set) {
            gold = detail::dedupe_mentions(gold);
            pred = detail::dedupe_mentions(pred);
        }
        report.counts += match_counts(gold, pred);
    }
    Prf prf = micro_prf(report.counts);
    report.precision = prf.precision;
    report.recall = prf.recall;
    report.f1 = prf.f1;
    return report;
}

struct SweepRow {
    double delta = 0.0;
    EvalReport report;
    double retained_mean = 0.0; // mean |T'| across examples
};

// For each delta: score, filter, build filtered prompts, generate, evaluate.
inline std::vector<SweepRow> threshold_sweep(const CorpusSplit& split,
                                             const EncoderBackend& encoder,
                                             const GeneratorBackend& generator,
                                             const std::vector<double>& grid,
                                             size_t max_length = 512,
                                             DedupePolicy policy = DedupePolicy::multiset) {
    DescriptionCache cache;
    std::vector<std::vector<MatchScore>> all_scores;
    all_scores.reserve(split.examples.size());
    for (const auto& ex : split.examples)
        all_scores.push_back(score_types(encoder, ex.sentence, split.schema, &cache));

    std::vector<SweepRow> rows;
    for (double delta : grid) {
        SweepRow row;
        row.delta = delta;
        std::map<std::string, std::string> predictions;
        double retained_total = 0.0;
        for (size_t i = 0; i < split.examples.size(); ++i) {
            const auto& ex = split.examples[i];
            FilteredSchema filtered = filter_schema(all_scores[i], delta, split.schema);
            retained_total += static_cast<double>(filtered.retained.size());
            std::string prompt = build_filtered_prompt(split.schema, ex.sentence, filtered);
            predictions[ex.id] = generator.generate(prompt, max_length);
        }
        row.report = evaluate_dataset(split, predictions, policy);
        row.retained_mean = split.examples.empty()
                                ? 0.0
                                : retained_total / static_cast<double>(split.examples.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

struct AblationRow {
    std::string name;
    double f1 = 0.0;
    double delta_points = 0.0;       // percentage-point difference vs previous row
    double delta_relative_pct = 0.0; // relative change vs previous row, in percent
};

// Rows in presentation order; each row carries both delta styles relative
// to the previous row (the first row has none).
inline std::vector<AblationRow> ablation_report(
    const std::vector<std::pair<std::string, EvalReport>>& variants) {
    if (variants.size() < 2)
        throw config_error("ablation report needs at least two variants");
    std::vector<AblationRow> rows;
    for (size_t i = 0; i < variants.size(); ++i) {
        AblationRow row;
        row.name = variants[i].first;
        row.f1 = variants[i].second.f1;
        if (i > 0) {
            double prev = variants[i - 1].second.f1;
            row.delta_points = row.f1 - prev;
            row.delta_relative_pct = prev != 0.0 ? (row.f1 / prev - 1.0) * 100.0 : 0.0;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "variant                          F1      d(points)  d(relative%)\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        char line[160];
        if (i == 0)
            std::snprintf(line, sizeof(line), "%-32s %-8.4f -          -\n", rows[i].name.c_str(),
                          rows[i].f1);
        else
            std::snprintf(line, sizeof(line), "%-32s %-8.4f %+-10.4f %+-10.4f\n",
                          rows[i].name.c_str(), rows[i].f1, rows[i].delta_points,
                          rows[i].delta_relative_pct);
        out << line;
    }
    return out.str();
}

} // namespace toner
