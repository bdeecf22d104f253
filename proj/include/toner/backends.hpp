#pragma once
// Backend contracts isolating all learned computation (matching encoder,
// generator, classifier head), plus fully deterministic mock implementations
// used by the test suite and the reference pipeline.
//
// Update contract: apply_update(batch_loss) performs one optimization step
// that reduces the re-evaluable batch loss in expectation. The mocks use
// central finite differences over their small parameter vectors, which is
// deterministic and guarantees descent on smooth toy objectives.

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "toner/codec.hpp"
#include "toner/core.hpp"
#include "toner/prompts.hpp"

namespace toner {

struct Encoding {
    std::vector<std::vector<double>> states; // one d-vector per token
    std::vector<bool> mask;                  // true = attend
};

class EncoderBackend {
  public:
    virtual ~EncoderBackend() = default;
    virtual size_t dim() const = 0;
    virtual bool trainable() const { return false; }
    // Deterministic between updates: same text -> same states.
    virtual Encoding encode(const std::string& text) const = 0;
    virtual void apply_update(const std::function<double()>& /*batch_loss*/) {
        throw config_error("encoder backend is not trainable");
    }
};

enum class PoolScope { full_prompt, sentence_only };

inline PoolScope parse_pool_scope(const std::string& s) {
    if (s == "full_prompt") return PoolScope::full_prompt;
    if (s == "sentence_only") return PoolScope::sentence_only;
    throw config_error("unknown pooling scope: " + s);
}

class GeneratorBackend {
  public:
    virtual ~GeneratorBackend() = default;
    virtual std::string generate(const std::string& prompt, size_t max_length) const = 0;
    virtual TokenLogProbs teacher_forced_logprobs(const std::string& prompt,
                                                  const std::string& target) const = 0;
    virtual std::vector<double> pooled_rep(const std::string& prompt, PoolScope scope) const = 0;
    virtual ClassifierLogits type_logits(const std::string& prompt, PoolScope scope) const = 0;
    virtual bool trainable() const { return false; }
    virtual void apply_update(const std::function<double()>& /*batch_loss*/) {
        throw config_error("generator backend is not trainable");
    }
};

namespace detail {

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Deterministic unit vector derived from a seeded hash of the token.
inline std::vector<double> hashed_unit_vector(const std::string& token, uint64_t seed, size_t d) {
    std::mt19937_64 rng(seed ^ fnv1a(token));
    std::vector<double> v(d);
    double norm_sq = 0.0;
    // Inline Box-Muller-free draw: map 64-bit integers into [-1,1].
    for (size_t i = 0; i < d; ++i) {
        uint64_t r = rng();
        v[i] = static_cast<double>(r) / static_cast<double>(UINT64_MAX) * 2.0 - 1.0;
        norm_sq += v[i] * v[i];
    }
    if (norm_sq == 0.0) { v[0] = 1.0; norm_sq = 1.0; }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
    return v;
}

// Extracts the sentence from a prompt's "Text: " line; whole text if absent.
inline std::string prompt_sentence(const std::string& prompt) {
    static const std::string kMarker = "Text: ";
    size_t pos = 0;
    while (pos <= prompt.size()) {
        size_t eol = prompt.find('\n', pos);
        std::string line =
            prompt.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        if (line.rfind(kMarker, 0) == 0) return line.substr(kMarker.size());
        if (eol == std::string::npos) break;
        pos = eol + 1;
    }
    return prompt;
}

// Display names inside the "Entities of type [...]" hint line, if present.
inline std::optional<std::vector<std::string>> prompt_hint_types(const std::string& prompt) {
    static const std::string kMarker = "Entities of type [";
    size_t pos = prompt.find(kMarker);
    if (pos == std::string::npos) return std::nullopt;
    size_t start = pos + kMarker.size();
    size_t end = prompt.find(']', start);
    if (end == std::string::npos) return std::nullopt;
    std::vector<std::string> names;
    std::string body = prompt.substr(start, end - start);
    size_t item_start = 0;
    while (item_start <= body.size()) {
        size_t comma = body.find(',', item_start);
        std::string name = detail::trim(
            body.substr(item_start, comma == std::string::npos ? std::string::npos
                                                               : comma - item_start));
        if (!name.empty()) names.push_back(name);
        if (comma == std::string::npos) break;
        item_start = comma + 1;
    }
    return names;
}

} // namespace detail

// Deterministic hash-embedding encoder: one unit vector per whitespace
// token, all tokens unmasked.
class MockEncoder : public EncoderBackend {
  public:
    explicit MockEncoder(uint64_t seed = 0, size_t d = 16) : seed_(seed), d_(d) {}

    size_t dim() const override { return d_; }

    Encoding encode(const std::string& text) const override {
        Encoding enc;
        for (const auto& tok : detail::whitespace_tokens(text))
            enc.states.push_back(detail::hashed_unit_vector(tok, seed_, d_));
        if (enc.states.empty())
            enc.states.push_back(detail::hashed_unit_vector("", seed_, d_));
        enc.mask.assign(enc.states.size(), true);
        return enc;
    }

  private:
    uint64_t seed_;
    size_t d_;
};

// Encoder with an explicit text -> embedding table; used to script exact
// similarity structures in tests. Unregistered text falls back to hashing.
class TableEncoder : public EncoderBackend {
  public:
    explicit TableEncoder(size_t d, uint64_t seed = 0) : seed_(seed), d_(d) {}

    void set(const std::string& text, std::vector<double> vec) {
        if (vec.size() != d_) throw config_error("table encoder vector has wrong dimension");
        table_[text] = std::move(vec);
    }

    size_t dim() const override { return d_; }

    Encoding encode(const std::string& text) const override {
        Encoding enc;
        auto it = table_.find(text);
        if (it != table_.end())
            enc.states.push_back(it->second);
        else
            enc.states.push_back(detail::hashed_unit_vector(text, seed_, d_));
        enc.mask.assign(1, true);
        return enc;
    }

  private:
    uint64_t seed_;
    size_t d_;
    std::map<std::string, std::vector<double>> table_;
};

// Trainable wrapper over the mock encoder: a per-type bias vector is added
// to the type-description embeddings. apply_update moves the biases along a
// central finite-difference descent direction of the supplied batch loss.
class TrainableMockEncoder : public EncoderBackend {
  public:
    TrainableMockEncoder(const TypeSchema& schema, uint64_t seed = 0, size_t d = 16,
                         double learning_rate = 0.05, double fd_epsilon = 1e-4)
        : base_(seed, d), d_(d), lr_(learning_rate), eps_(fd_epsilon) {
        for (const auto& t : schema.types()) {
            description_of_[t.description] = t.tag;
            biases_[t.tag] = std::vector<double>(d, 0.0);
        }
    }

    size_t dim() const override { return d_; }
    bool trainable() const override { return true; }

    Encoding encode(const std::string& text) const override {
        Encoding enc = base_.encode(text);
        auto it = description_of_.find(text);
        if (it != description_of_.end()) {
            const auto& bias = biases_.at(it->second);
            for (auto& state : enc.states)
                for (size_t i = 0; i < d_; ++i) state[i] += bias[i];
        }
        return enc;
    }

    void apply_update(const std::function<double()>& batch_loss) override {
        std::map<std::string, std::vector<double>> grads;
        for (auto& [tag, bias] : biases_) {
            std::vector<double> g(d_, 0.0);
            for (size_t i = 0; i < d_; ++i) {
                double saved = bias[i];
                bias[i] = saved + eps_;
                double up = batch_loss();
                bias[i] = saved - eps_;
                double down = batch_loss();
                bias[i] = saved;
                g[i] = (up - down) / (2.0 * eps_);
            }
            grads[tag] = std::move(g);
        }
        for (auto& [tag, bias] : biases_) {
            const auto& g = grads[tag];
            for (size_t i = 0; i < d_; ++i) bias[i] -= lr_ * g[i];
        }
    }

    const std::map<std::string, std::vector<double>>& biases() const { return biases_; }
    void set_biases(std::map<std::string, std::vector<double>> b) { biases_ = std::move(b); }

  private:
    MockEncoder base_;
    size_t d_;
    double lr_;
    double eps_;
    std::map<std::string, std::string> description_of_; // description text -> tag
    std::map<std::string, std::vector<double>> biases_; // tag -> bias
};

enum class MockGeneratorMode { echo, fallback, type_aware };

// Deterministic generator double. echo: returns the stored target for the
// prompt's sentence. fallback: always "[]". type_aware: returns gold
// mentions restricted to the types named in the prompt's hint line.
class MockGenerator : public GeneratorBackend {
  public:
    MockGenerator(const TypeSchema& schema, MockGeneratorMode mode, uint64_t seed = 0,
                  size_t d = 16, bool strict = false, double learning_rate = 0.05,
                  double fd_epsilon = 1e-4)
        : schema_(schema), mode_(mode), strict_(strict), encoder_(seed, d), d_(d),
          lr_(learning_rate), eps_(fd_epsilon), token_param_(0.0),
          logit_params_(schema.size(), 0.0) {}

    void set_target(const std::string& sentence, const std::string& target) {
        targets_[sentence] = target;
    }
    void set_gold(const std::string& sentence, std::vector<EntityMention> mentions) {
        gold_[sentence] = std::move(mentions);
    }

    std::string generate(const std::string& prompt, size_t max_length) const override {
        return enforce_length(generate_raw(prompt), max_length);
    }

    TokenLogProbs teacher_forced_logprobs(const std::string& /*prompt*/,
                                          const std::string& target) const override {
        size_t n = detail::whitespace_tokens(target).size();
        if (n == 0) n = 1;
        double lp = -std::log1p(std::exp(token_param_)); // -softplus, always <= 0
        return TokenLogProbs{std::vector<double>(n, lp)};
    }

    std::vector<double> pooled_rep(const std::string& prompt, PoolScope scope) const override {
        std::string text =
            scope == PoolScope::sentence_only ? detail::prompt_sentence(prompt) : prompt;
        Encoding enc = encoder_.encode(text);
        std::vector<double> mean(d_, 0.0);
        for (const auto& s : enc.states)
            for (size_t i = 0; i < d_; ++i) mean[i] += s[i];
        for (double& x : mean) x /= static_cast<double>(enc.states.size());
        return mean;
    }

    ClassifierLogits type_logits(const std::string& prompt, PoolScope scope) const override {
        std::vector<double> h = pooled_rep(prompt, scope);
        ClassifierLogits out;
        out.values.resize(schema_.size());
        for (size_t i = 0; i < schema_.size(); ++i) {
            auto dir = detail::hashed_unit_vector(schema_.at(i).tag, 0x7e57, d_);
            double proj = 0.0;
            for (size_t j = 0; j < d_; ++j) proj += h[j] * dir[j];
            out.values[i] = logit_params_[i] + proj;
        }
        return out;
    }

    bool trainable() const override { return true; }

    void apply_update(const std::function<double()>& batch_loss) override {
        std::vector<double*> params;
        params.push_back(&token_param_);
        for (double& p : logit_params_) params.push_back(&p);
        std::vector<double> grads(params.size(), 0.0);
        for (size_t i = 0; i < params.size(); ++i) {
            double saved = *params[i];
            *params[i] = saved + eps_;
            double up = batch_loss();
            *params[i] = saved - eps_;
            double down = batch_loss();
            *params[i] = saved;
            grads[i] = (up - down) / (2.0 * eps_);
        }
        for (size_t i = 0; i < params.size(); ++i) *params[i] -= lr_ * grads[i];
    }

    double token_param() const { return token_param_; }
    const std::vector<double>& logit_params() const { return logit_params_; }
    void set_params(double token_param, std::vector<double> logit_params) {
        if (logit_params.size() != schema_.size())
            throw config_error("generator state logit count does not match schema");
        token_param_ = token_param;
        logit_params_ = std::move(logit_params);
    }

  private:
    std::string generate_raw(const std::string& prompt) const {
        std::string sentence = detail::prompt_sentence(prompt);
        switch (mode_) {
            case MockGeneratorMode::fallback:
                return "[]";
            case MockGeneratorMode::echo: {
                auto it = targets_.find(sentence);
                if (it != targets_.end()) return it->second;
                if (strict_) throw config_error("echo generator has no target for: " + sentence);
                return "[]";
            }
            case MockGeneratorMode::type_aware: {
                auto it = gold_.find(sentence);
                if (it == gold_.end()) {
                    if (strict_) throw config_error("type-aware generator has no gold for: " + sentence);
                    return "[]";
                }
                auto hint = detail::prompt_hint_types(prompt);
                std::vector<EntityMention> kept;
                for (const auto& m : it->second) {
                    if (!hint) {
                        kept.push_back(m);
                        continue;
                    }
                    const std::string& name =
                        schema_.at(schema_.index_of(m.type_tag)).display_name;
                    for (const auto& h : *hint)
                        if (detail::to_lower(h) == detail::to_lower(name)) {
                            kept.push_back(m);
                            break;
                        }
                }
                return serialize_mentions(kept, schema_);
            }
        }
        throw config_error("unknown mock generator mode");
    }

    static std::string enforce_length(const std::string& text, size_t max_length) {
        auto tokens = detail::whitespace_tokens(text);
        if (tokens.size() <= max_length) return text;
        std::string out;
        for (size_t i = 0; i < max_length; ++i) {
            if (i) out += ' ';
            out += tokens[i];
        }
        return out;
    }

    TypeSchema schema_;
    MockGeneratorMode mode_;
    bool strict_;
    MockEncoder encoder_;
    size_t d_;
    double lr_;
    double eps_;
    double token_param_;
    std::vector<double> logit_params_;
    std::map<std::string, std::string> targets_;            // sentence -> target
    std::map<std::string, std::vector<EntityMention>> gold_; // sentence -> gold
};

} // namespace toner
