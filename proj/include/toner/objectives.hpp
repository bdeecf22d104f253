#pragma once
// Pure-math training objectives: the generation loss, the multi-label type
// classification loss, and their weighted combination.

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "toner/core.hpp"

namespace toner {

// Negative sum of per-token log-probabilities (a per-sequence sum, not a
// mean; batch reduction is a training-harness choice).
inline double generation_loss(const TokenLogProbs& logprobs) {
    logprobs.validate();
    double total = 0.0;
    for (double v : logprobs.values) total += v;
    return -total;
}

namespace detail {

// log(1 + sum_i e^{q_i}) with shift-by-max stabilization; empty -> 0.
inline double log1p_sum_exp(const std::vector<double>& q) {
    if (q.empty()) return 0.0;
    double m = 0.0; // the implicit 1 = e^0 term participates in the max
    for (double v : q) m = std::max(m, v);
    double s = std::exp(0.0 - m);
    for (double v : q) s += std::exp(v - m);
    return m + std::log(s);
}

} // namespace detail

// Multi-label classification loss over type-presence logits. The default
// exponent convention is e^{p_i} for positives and e^{-p_i} for negatives;
// standard_sign flips both, giving the conventional multi-label form.
inline double classification_loss(const ClassifierLogits& logits, const TagSet& positives,
                                  const TagSet& negatives, const TypeSchema& schema,
                                  bool standard_sign = false) {
    logits.validate(schema);
    for (const auto& t : schema.types()) {
        bool pos = positives.count(t.tag) > 0;
        bool neg = negatives.count(t.tag) > 0;
        if (pos == neg)
            throw config_error("type sets must partition the schema (tag " + t.tag + ")");
    }
    double pos_sign = standard_sign ? -1.0 : 1.0;
    std::vector<double> pos_terms, neg_terms;
    for (size_t i = 0; i < schema.size(); ++i) {
        if (positives.count(schema.at(i).tag))
            pos_terms.push_back(pos_sign * logits.values[i]);
        else
            neg_terms.push_back(-pos_sign * logits.values[i]);
    }
    return detail::log1p_sum_exp(pos_terms) + detail::log1p_sum_exp(neg_terms);
}

struct LossBreakdown {
    double generation = 0.0;
    double classification = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

inline LossBreakdown combined_loss(double generation, double classification, double lambda) {
    if (lambda < 0.0) throw config_error("lambda must be non-negative");
    if (!std::isfinite(generation) || !std::isfinite(classification))
        throw config_error("loss components must be finite");
    LossBreakdown out;
    out.generation = generation;
    out.classification = classification;
    out.lambda = lambda;
    out.total = generation + lambda * classification;
    if (!std::isfinite(out.total)) throw config_error("combined loss is not finite");
    return out;
}

} // namespace toner
