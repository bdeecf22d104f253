#pragma once
// Shared test helpers: the CoNLL-style toy schema, fixture paths, and
// random-input generators used by the property tests.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "toner/core.hpp"

#ifndef TONER_FIXTURE_DIR
#define TONER_FIXTURE_DIR "tests/fixtures"
#endif

namespace toner_test {

inline std::string fixture(const std::string& name) {
    return (std::filesystem::path(TONER_FIXTURE_DIR) / name).string();
}

inline toner::TypeSchema conll_schema() {
    return toner::TypeSchema({
        {"LOC", "location", "location: Names that are locations."},
        {"PER", "person", "person: Names of people."},
        {"ORG", "organization", "organization: Companies, agencies, institutions, etc."},
        {"MISC", "miscellaneous",
         "miscellaneous: Names of miscellaneous entities that do not belong to person, "
         "organization and location."},
    });
}

inline toner::TypeSchema wide_schema(size_t k) {
    std::vector<toner::EntityType> types;
    for (size_t i = 0; i < k; ++i) {
        std::string n = std::to_string(i);
        types.push_back({"T" + n, "type" + n, "type" + n + ": synthetic type " + n + "."});
    }
    return toner::TypeSchema(std::move(types));
}

// Random surface strings: ASCII words, commas, parens, some unicode. The
// exact top-level separator token is excluded because the grammar cannot
// represent it inside a surface.
inline std::string random_surface(std::mt19937_64& rng) {
    static const std::vector<std::string> pieces = {
        "China",  "New",   "York",  "a,b",  "x(y",   "z)",   "Müller", "東京",
        "O'Neil", "12.5",  "Côte",  "d'Or", "alpha", "beta", "-",      "№7",
    };
    for (;;) {
        size_t n = 1 + rng() % 4;
        std::string s;
        for (size_t i = 0; i < n; ++i) {
            if (i) s += (rng() % 4 == 0) ? ", " : " ";
            s += pieces[rng() % pieces.size()];
        }
        bool bad = false;
        // Reject surfaces containing ")" then "," then "(" with only spaces
        // between: that collides with the item separator.
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i] != ')') continue;
            size_t j = i + 1;
            while (j < s.size() && s[j] == ' ') ++j;
            if (j < s.size() && s[j] == ',') {
                ++j;
                while (j < s.size() && s[j] == ' ') ++j;
                if (j < s.size() && s[j] == '(') bad = true;
            }
        }
        if (!bad) return s;
    }
}

inline std::vector<toner::EntityMention> random_mentions(std::mt19937_64& rng,
                                                         const toner::TypeSchema& schema,
                                                         size_t max_count = 6) {
    size_t n = rng() % (max_count + 1);
    std::vector<toner::EntityMention> out;
    for (size_t i = 0; i < n; ++i) {
        const auto& t = schema.at(rng() % schema.size());
        out.push_back({t.tag, random_surface(rng)});
    }
    return out;
}

} // namespace toner_test
