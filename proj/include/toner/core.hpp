#pragma once
// Shared domain types for the type-oriented NER toolkit.
// Value objects only: no I/O, no model calls.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace toner {

// Error taxonomy. schema_error: a tag/type does not resolve against the
// active schema. parse_error: malformed external input (BIO lines, config).
// config_error: inconsistent run configuration or misuse of an interface.
struct schema_error : std::runtime_error {
    explicit schema_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct parse_error : std::runtime_error {
    explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline bool contains_any(const std::string& s, const char* chars) {
    return s.find_first_of(chars) != std::string::npos;
}

} // namespace detail

// One candidate entity type: canonical tag ("LOC"), the lowercase natural
// name used in prompts ("location"), and the description text used for
// embedding-based matching.
struct EntityType {
    std::string tag;
    std::string display_name;
    std::string description;

    void validate() const {
        if (detail::trim(tag).empty())
            throw config_error("entity type tag must be nonempty");
        if (detail::trim(display_name).empty())
            throw config_error("entity type display name must be nonempty (tag " + tag + ")");
        if (detail::contains_any(tag, "[],\n") || detail::contains_any(display_name, "[],\n"))
            throw config_error("entity type tag/display name must not contain brackets, commas or newlines (tag " + tag + ")");
        if (description.empty())
            throw config_error("entity type description must be nonempty (tag " + tag + ")");
    }
};

// The ordered candidate type list T. Index i is stable for the lifetime of
// a run and defines the logit index in ClassifierLogits.
class TypeSchema {
  public:
    explicit TypeSchema(std::vector<EntityType> types) : types_(std::move(types)) {
        if (types_.empty())
            throw config_error("schema must contain at least one entity type");
        std::set<std::string> tags, names;
        for (const auto& t : types_) {
            t.validate();
            if (!tags.insert(t.tag).second)
                throw config_error("duplicate tag in schema: " + t.tag);
            if (!names.insert(detail::to_lower(t.display_name)).second)
                throw config_error("duplicate display name in schema: " + t.display_name);
        }
    }

    size_t size() const { return types_.size(); }
    const std::vector<EntityType>& types() const { return types_; }
    const EntityType& at(size_t i) const { return types_.at(i); }

    bool has_tag(const std::string& tag) const {
        return find_tag(tag).has_value();
    }

    std::optional<size_t> find_tag(const std::string& tag) const {
        for (size_t i = 0; i < types_.size(); ++i)
            if (types_[i].tag == tag) return i;
        return std::nullopt;
    }

    size_t index_of(const std::string& tag) const {
        if (auto i = find_tag(tag)) return *i;
        throw schema_error("unknown entity type tag: " + tag);
    }

    // Case-insensitive display-name lookup (model outputs vary casing).
    std::optional<size_t> find_display_name(const std::string& name) const {
        std::string wanted = detail::to_lower(detail::trim(name));
        for (size_t i = 0; i < types_.size(); ++i)
            if (detail::to_lower(types_[i].display_name) == wanted) return i;
        return std::nullopt;
    }

    std::vector<std::string> display_names() const {
        std::vector<std::string> out;
        out.reserve(types_.size());
        for (const auto& t : types_) out.push_back(t.display_name);
        return out;
    }

    std::vector<std::string> tags() const {
        std::vector<std::string> out;
        out.reserve(types_.size());
        for (const auto& t : types_) out.push_back(t.tag);
        return out;
    }

  private:
    std::vector<EntityType> types_;
};

// A gold or predicted entity occurrence: (type, surface form). Surfaces are
// stored as strings; the generative output format carries no offsets.
struct EntityMention {
    std::string type_tag;
    std::string surface;

    friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

using TagSet = std::set<std::string>;

// P_x = tags occurring in the mentions, N_x = remaining schema tags.
inline std::pair<TagSet, TagSet> derive_type_sets(const std::vector<EntityMention>& mentions,
                                                  const TypeSchema& schema) {
    TagSet positives;
    for (const auto& m : mentions) {
        if (!schema.has_tag(m.type_tag))
            throw schema_error("mention tag not in schema: " + m.type_tag);
        positives.insert(m.type_tag);
    }
    TagSet negatives;
    for (const auto& t : schema.types())
        if (!positives.count(t.tag)) negatives.insert(t.tag);
    return {std::move(positives), std::move(negatives)};
}

// One sentence with its gold mentions and the derived type partition.
// Duplicate mentions (same tag + surface) are kept with multiplicity;
// deduplication is an evaluation-layer policy.
struct AnnotatedExample {
    std::string id;
    std::string sentence;
    std::vector<EntityMention> mentions;
    TagSet positive_types;
    TagSet negative_types;
    std::optional<std::string> explanation;
};

inline AnnotatedExample make_example(std::string id, std::string sentence,
                                     std::vector<EntityMention> mentions,
                                     const TypeSchema& schema) {
    if (detail::trim(sentence).empty())
        throw config_error("example sentence must be nonempty (id " + id + ")");
    for (const auto& m : mentions)
        if (detail::trim(m.surface).empty())
            throw config_error("mention surface must be nonempty (id " + id + ")");
    auto [pos, neg] = derive_type_sets(mentions, schema);
    return AnnotatedExample{std::move(id), std::move(sentence), std::move(mentions),
                            std::move(pos), std::move(neg), std::nullopt};
}

// Sentence-type similarity, cosine-valued.
struct MatchScore {
    std::string type_tag;
    double score = 0.0;
};

// The filtered schema T': tags whose score exceeded the threshold, ordered
// by descending score (ties broken by schema index).
struct FilteredSchema {
    std::vector<std::string> retained;
    double threshold = 0.0;
    std::vector<MatchScore> scores;
};

// Index-aligned with TypeSchema ordering: values[i] is the logit for t_i.
struct ClassifierLogits {
    std::vector<double> values;

    void validate(const TypeSchema& schema) const {
        if (values.size() != schema.size())
            throw config_error("classifier logits length does not match schema size");
        for (double v : values)
            if (!std::isfinite(v)) throw config_error("classifier logit is not finite");
    }
};

// Per-target-token log-probabilities under teacher forcing.
struct TokenLogProbs {
    std::vector<double> values;

    void validate() const {
        if (values.empty())
            throw config_error("token log-prob sequence must be nonempty");
        for (double v : values) {
            if (!std::isfinite(v)) throw config_error("token log-prob is not finite");
            if (v > 0.0) throw config_error("token log-prob must be <= 0");
        }
    }
};

} // namespace toner
