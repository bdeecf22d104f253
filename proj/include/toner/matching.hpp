#pragma once
// Entity-type matching: pooled embeddings, cosine scoring, the contrastive
// matching loss, schema filtering at threshold delta, and delta calibration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "toner/backends.hpp"
#include "toner/core.hpp"

namespace toner {

struct PooledEmbedding {
    std::vector<double> vec;
    std::string source_text;
};

// Arithmetic mean over unmasked token vectors.
inline PooledEmbedding pool_embedding(const std::vector<std::vector<double>>& token_states,
                                      const std::vector<bool>& mask,
                                      const std::string& source_text = "") {
    if (token_states.size() != mask.size())
        throw config_error("pooling mask length does not match token count");
    size_t n = 0;
    std::vector<double> sum;
    for (size_t t = 0; t < token_states.size(); ++t) {
        if (!mask[t]) continue;
        if (sum.empty())
            sum.assign(token_states[t].size(), 0.0);
        else if (token_states[t].size() != sum.size())
            throw config_error("inconsistent token state dimensions while pooling");
        for (size_t i = 0; i < sum.size(); ++i) sum[i] += token_states[t][i];
        ++n;
    }
    if (n == 0) throw config_error("cannot pool an all-masked token sequence");
    for (double& x : sum) x /= static_cast<double>(n);
    return PooledEmbedding{std::move(sum), source_text};
}

inline PooledEmbedding pool_encoding(const Encoding& enc, const std::string& source_text = "") {
    return pool_embedding(enc.states, enc.mask, source_text);
}

// Cosine similarity. Zero-norm inputs are rejected: an encoder emitting
// them is faulty and cosine is undefined there.
inline double match_score(const PooledEmbedding& a, const PooledEmbedding& b) {
    if (a.vec.size() != b.vec.size())
        throw config_error("embedding dimension mismatch in match_score");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.vec.size(); ++i) {
        dot += a.vec[i] * b.vec[i];
        na += a.vec[i] * a.vec[i];
        nb += b.vec[i] * b.vec[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw config_error("zero-norm pooled embedding in match_score");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Per-schema cache of description embeddings, keyed by description text.
// Must be invalidated after any encoder update.
struct DescriptionCache {
    std::map<std::string, PooledEmbedding> by_description;

    const PooledEmbedding& get(const EncoderBackend& encoder, const std::string& description) {
        auto it = by_description.find(description);
        if (it == by_description.end()) {
            it = by_description
                     .emplace(description, pool_encoding(encoder.encode(description), description))
                     .first;
        }
        return it->second;
    }

    void clear() { by_description.clear(); }
};

// One score per type, in schema order.
inline std::vector<MatchScore> score_types(const EncoderBackend& encoder,
                                           const std::string& sentence, const TypeSchema& schema,
                                           DescriptionCache* cache = nullptr) {
    PooledEmbedding sent = pool_encoding(encoder.encode(sentence), sentence);
    std::vector<MatchScore> out;
    out.reserve(schema.size());
    DescriptionCache local;
    DescriptionCache& c = cache ? *cache : local;
    for (const auto& t : schema.types())
        out.push_back(MatchScore{t.tag, match_score(sent, c.get(encoder, t.description))});
    return out;
}

// Contrastive matching loss: for each positive type, cross-entropy of the
// temperature-scaled softmax over P_x union N_x. Stabilized by max-score
// subtraction; an empty P_x contributes zero.
inline double matching_loss(const std::map<std::string, double>& scores, const TagSet& positives,
                            const TagSet& negatives, double tau) {
    if (tau <= 0.0) throw config_error("temperature must be positive");
    if (positives.empty()) return 0.0;

    std::vector<double> scaled;
    double max_scaled = -std::numeric_limits<double>::infinity();
    auto lookup = [&](const std::string& tag) {
        auto it = scores.find(tag);
        if (it == scores.end()) throw config_error("missing match score for type: " + tag);
        return it->second / tau;
    };
    for (const auto& tag : positives) {
        scaled.push_back(lookup(tag));
        max_scaled = std::max(max_scaled, scaled.back());
    }
    for (const auto& tag : negatives) {
        scaled.push_back(lookup(tag));
        max_scaled = std::max(max_scaled, scaled.back());
    }

    double denom = 0.0;
    for (double v : scaled) denom += std::exp(v - max_scaled);
    double log_denom = max_scaled + std::log(denom);

    double loss = 0.0;
    size_t i = 0;
    for (auto it = positives.begin(); it != positives.end(); ++it, ++i)
        loss += log_denom - scaled[i];
    return loss;
}

// Retains tags with score strictly greater than delta, ordered by
// descending score with ties broken by schema index.
inline FilteredSchema filter_schema(const std::vector<MatchScore>& scores, double delta,
                                    const TypeSchema& schema) {
    if (delta < -1.0 || delta > 1.0)
        throw config_error("threshold must lie in [-1, 1]");
    std::vector<std::pair<double, size_t>> order; // (-score, schema index)
    for (const auto& s : scores) {
        size_t idx = schema.index_of(s.type_tag);
        if (s.score > delta) order.emplace_back(-s.score, idx);
    }
    std::sort(order.begin(), order.end());
    FilteredSchema out;
    out.threshold = delta;
    out.scores = scores;
    for (const auto& [neg_score, idx] : order) out.retained.push_back(schema.at(idx).tag);
    return out;
}

// One training tuple: a sentence with its full type partition. Sentences
// with empty positives are kept but contribute zero matching loss.
struct MatchingPair {
    std::string sentence;
    TagSet positives;
    TagSet negatives;
};

struct CalibrationEntry {
    double delta = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct CalibrationReport {
    std::vector<double> grid;
    std::vector<CalibrationEntry> entries;
    double chosen = 0.0;
    // Histogram of pair scores over [-1, 1], split by pair polarity.
    std::vector<double> bin_edges;       // 51 edges for 50 uniform bins
    std::vector<long long> positive_counts; // 50 bins
    std::vector<long long> negative_counts; // 50 bins
};

namespace detail {

inline std::map<std::string, double> score_map(const std::vector<MatchScore>& scores) {
    std::map<std::string, double> out;
    for (const auto& s : scores) out[s.type_tag] = s.score;
    return out;
}

} // namespace detail

// Grid search for the filtering threshold on dev pairs: retained types are
// predicted positives, P_x is gold. The chosen delta maximizes micro filter
// F1 with ties resolved toward the smaller delta (favoring recall).
inline CalibrationReport calibrate_threshold(const std::vector<MatchingPair>& dev_pairs,
                                             const EncoderBackend& encoder,
                                             const TypeSchema& schema,
                                             const std::vector<double>& grid) {
    if (grid.empty()) throw config_error("calibration grid must be nonempty");
    if (dev_pairs.empty()) throw config_error("calibration needs at least one dev pair");

    constexpr size_t kBins = 50;
    CalibrationReport report;
    report.grid = grid;
    report.bin_edges.resize(kBins + 1);
    for (size_t i = 0; i <= kBins; ++i)
        report.bin_edges[i] = -1.0 + 2.0 * static_cast<double>(i) / kBins;
    report.positive_counts.assign(kBins, 0);
    report.negative_counts.assign(kBins, 0);

    DescriptionCache cache;
    std::vector<std::vector<MatchScore>> all_scores;
    all_scores.reserve(dev_pairs.size());
    for (const auto& pair : dev_pairs) {
        auto scores = score_types(encoder, pair.sentence, schema, &cache);
        for (const auto& s : scores) {
            double clamped = std::clamp(s.score, -1.0, 1.0);
            auto bin = static_cast<size_t>((clamped + 1.0) / 2.0 * kBins);
            if (bin >= kBins) bin = kBins - 1;
            if (pair.positives.count(s.type_tag))
                ++report.positive_counts[bin];
            else
                ++report.negative_counts[bin];
        }
        all_scores.push_back(std::move(scores));
    }

    double best_f1 = -1.0;
    for (double delta : grid) {
        long long tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < dev_pairs.size(); ++i) {
            auto filtered = filter_schema(all_scores[i], delta, schema);
            std::set<std::string> retained(filtered.retained.begin(), filtered.retained.end());
            for (const auto& t : schema.types()) {
                bool predicted = retained.count(t.tag) > 0;
                bool gold = dev_pairs[i].positives.count(t.tag) > 0;
                if (predicted && gold) ++tp;
                else if (predicted) ++fp;
                else if (gold) ++fn;
            }
        }
        CalibrationEntry entry;
        entry.delta = delta;
        entry.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        entry.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        entry.f1 = entry.precision + entry.recall > 0.0
                       ? 2.0 * entry.precision * entry.recall / (entry.precision + entry.recall)
                       : 0.0;
        report.entries.push_back(entry);
        if (entry.f1 > best_f1 || (entry.f1 == best_f1 && delta < report.chosen)) {
            best_f1 = entry.f1;
            report.chosen = delta;
        }
    }
    return report;
}

struct MatcherTrace {
    std::vector<double> epoch_mean_loss;
};

// Training loop for the matching encoder: batches of pairs, one backend
// update per batch against the mean batch matching loss. The description
// cache is rebuilt after every update.
inline MatcherTrace train_matcher(EncoderBackend& encoder, const std::vector<MatchingPair>& pairs,
                                  const TypeSchema& schema, double tau, size_t epochs,
                                  size_t batch_size = 8) {
    if (tau <= 0.0) throw config_error("temperature must be positive");
    if (batch_size == 0) throw config_error("batch size must be positive");

    auto batch_loss = [&](size_t begin, size_t end) {
        DescriptionCache cache;
        double total = 0.0;
        size_t counted = 0;
        for (size_t i = begin; i < end; ++i) {
            if (pairs[i].positives.empty()) continue; // zero loss, no gradient signal
            auto scores = detail::score_map(score_types(encoder, pairs[i].sentence, schema, &cache));
            total += matching_loss(scores, pairs[i].positives, pairs[i].negatives, tau);
            ++counted;
        }
        return counted ? total / static_cast<double>(counted) : 0.0;
    };

    MatcherTrace trace;
    for (size_t epoch = 0; epoch < epochs; ++epoch) {
        double epoch_total = 0.0;
        size_t epoch_batches = 0;
        for (size_t begin = 0; begin < pairs.size(); begin += batch_size) {
            size_t end = std::min(begin + batch_size, pairs.size());
            epoch_total += batch_loss(begin, end);
            ++epoch_batches;
            if (encoder.trainable())
                encoder.apply_update([&] { return batch_loss(begin, end); });
        }
        trace.epoch_mean_loss.push_back(epoch_batches ? epoch_total / epoch_batches : 0.0);
    }
    return trace;
}

} // namespace toner
