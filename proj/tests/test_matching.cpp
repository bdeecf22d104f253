#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "toner/backends.hpp"
#include "toner/bio.hpp"
#include "toner/matching.hpp"

using namespace toner;
using toner_test::conll_schema;

namespace {

long double oracle_matching_loss(const std::map<std::string, double>& scores,
                                 const TagSet& positives, const TagSet& negatives, double tau) {
    // Sum over positives of the cross-entropy of the tau-scaled softmax.
    long double loss = 0.0L;
    for (const auto& pos : positives) {
        long double denom = 0.0L;
        for (const auto& [tag, s] : scores)
            if (positives.count(tag) || negatives.count(tag)) denom += std::exp((long double)s / tau);
        loss += -std::log(std::exp((long double)scores.at(pos) / tau) / denom);
    }
    return loss;
}

} // namespace

TEST_CASE("pool_embedding is the masked mean") {
    auto single = pool_embedding({{1.0, 2.0}}, {true});
    CHECK(single.vec == std::vector<double>{1.0, 2.0});

    auto opposed = pool_embedding({{1.0, -1.0}, {-1.0, 1.0}}, {true, true});
    CHECK(opposed.vec == std::vector<double>{0.0, 0.0});

    CHECK_THROWS_AS(pool_embedding({{1.0}}, {false}), config_error);
    CHECK_THROWS_AS(pool_embedding({{1.0}, {2.0}}, {true}), config_error);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        size_t n = 1 + rng() % 8, d = 1 + rng() % 6;
        std::vector<std::vector<double>> states(n, std::vector<double>(d));
        std::vector<bool> mask(n);
        size_t kept = 0;
        for (size_t t = 0; t < n; ++t) {
            mask[t] = rng() % 3 != 0;
            if (mask[t]) ++kept;
            for (auto& x : states[t]) x = dist(rng);
        }
        if (kept == 0) {
            mask[0] = true;
            kept = 1;
        }
        auto pooled = pool_embedding(states, mask);
        for (size_t i = 0; i < d; ++i) {
            double sum = 0.0;
            for (size_t t = 0; t < n; ++t)
                if (mask[t]) sum += states[t][i];
            CHECK(pooled.vec[i] == Catch::Approx(sum / kept).margin(1e-12));
        }
    }
}

TEST_CASE("match_score is cosine similarity") {
    PooledEmbedding e{{0.3, -0.4, 1.2}, "x"};
    CHECK(match_score(e, e) == Catch::Approx(1.0).margin(1e-12));
    CHECK(match_score({{1, 0}, ""}, {{0, 1}, ""}) == Catch::Approx(0.0).margin(1e-12));
    CHECK_THROWS_AS(match_score({{1, 0}, ""}, {{1, 0, 0}, ""}), config_error);
    CHECK_THROWS_AS(match_score({{0, 0}, ""}, {{1, 0}, ""}), config_error);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        size_t d = 1 + rng() % 10;
        PooledEmbedding a{{}, ""}, b{{}, ""};
        long double dot = 0.0L, na = 0.0L, nb = 0.0L;
        for (size_t i = 0; i < d; ++i) {
            a.vec.push_back(dist(rng));
            b.vec.push_back(dist(rng));
            dot += (long double)a.vec[i] * b.vec[i];
            na += (long double)a.vec[i] * a.vec[i];
            nb += (long double)b.vec[i] * b.vec[i];
        }
        if (na == 0.0L || nb == 0.0L) continue;
        double want = static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
        double got = match_score(a, b);
        CHECK(std::abs(got - want) < 1e-9);
        CHECK(got <= 1.0 + 1e-6);
        CHECK(got >= -1.0 - 1e-6);
    }
}

TEST_CASE("score_types per-type cosine with caching") {
    TypeSchema schema = conll_schema();
    TableEncoder encoder(3);
    // Sentence embedding identical to the LOC description embedding.
    encoder.set("some sentence", {1.0, 0.0, 0.0});
    encoder.set(schema.at(0).description, {1.0, 0.0, 0.0});

    auto scores = score_types(encoder, "some sentence", schema);
    REQUIRE(scores.size() == schema.size());
    CHECK(scores[0].type_tag == "LOC");
    CHECK(scores[0].score == Catch::Approx(1.0).margin(1e-9));
    for (size_t i = 0; i < scores.size(); ++i) CHECK(scores[i].type_tag == schema.at(i).tag);

    DescriptionCache cache;
    auto cached1 = score_types(encoder, "some sentence", schema, &cache);
    auto cached2 = score_types(encoder, "some sentence", schema, &cache);
    for (size_t i = 0; i < scores.size(); ++i) {
        CHECK(cached1[i].score == scores[i].score);
        CHECK(cached2[i].score == cached1[i].score);
    }
}

TEST_CASE("matching_loss closed forms") {
    // Softmax over a singleton: zero loss.
    CHECK(matching_loss({{"a", 0.37}}, {"a"}, {}, 0.05) == Catch::Approx(0.0).margin(1e-12));

    // Uniform scores over 4 types, two positives: 2 ln 4.
    std::map<std::string, double> uniform{{"a", 0.5}, {"b", 0.5}, {"c", 0.5}, {"d", 0.5}};
    CHECK(matching_loss(uniform, {"a", "b"}, {"c", "d"}, 0.05) ==
          Catch::Approx(2.0 * std::log(4.0)).margin(1e-9));

    // Separable two-type case at the reference temperature.
    double loss = matching_loss({{"a", 0.9}, {"b", 0.1}}, {"a"}, {"b"}, 0.05);
    CHECK(loss == Catch::Approx(std::log1p(std::exp(-16.0))).margin(1e-12));

    CHECK(matching_loss({{"a", 1.0}}, {}, {"a"}, 0.05) == 0.0); // empty positives
    CHECK_THROWS_AS(matching_loss({{"a", 1.0}}, {"a"}, {}, 0.0), config_error);
    CHECK_THROWS_AS(matching_loss({{"a", 1.0}}, {"a", "b"}, {}, 0.05), config_error);
}

TEST_CASE("matching_loss equals the cross-entropy oracle") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int trial = 0; trial < 400; ++trial) {
        size_t k = 1 + rng() % 7;
        std::map<std::string, double> scores;
        TagSet pos, neg;
        for (size_t i = 0; i < k; ++i) {
            std::string tag = "t" + std::to_string(i);
            scores[tag] = dist(rng);
            if (rng() % 2) pos.insert(tag);
            else neg.insert(tag);
        }
        if (pos.empty() && neg.empty()) continue;
        double got = matching_loss(scores, pos, neg, 0.05);
        CHECK(got >= -1e-12);
        double want = static_cast<double>(oracle_matching_loss(scores, pos, neg, 0.05));
        CHECK(std::abs(got - want) < 1e-9);
    }
}

TEST_CASE("matching_loss shift invariance") {
    std::mt19937_64 rng(88);
    std::uniform_real_distribution<double> score_dist(-1.0, 1.0);
    std::uniform_real_distribution<double> shift_dist(-10.0, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::map<std::string, double> scores;
        TagSet pos, neg;
        for (size_t i = 0; i < 5; ++i) {
            std::string tag = "t" + std::to_string(i);
            scores[tag] = score_dist(rng);
            if (i < 2) pos.insert(tag);
            else neg.insert(tag);
        }
        double c = shift_dist(rng);
        auto shifted = scores;
        for (auto& [tag, s] : shifted) s += c;
        CHECK(std::abs(matching_loss(scores, pos, neg, 0.05) -
                       matching_loss(shifted, pos, neg, 0.05)) < 1e-9);
    }
}

TEST_CASE("filter_schema threshold semantics") {
    TypeSchema schema = conll_schema();
    std::vector<MatchScore> scores{
        {"LOC", 0.85}, {"PER", 0.75}, {"ORG", 0.40}, {"MISC", 0.10}};

    auto at08 = filter_schema(scores, 0.8, schema);
    CHECK(at08.retained == std::vector<std::string>{"LOC"});

    auto all = filter_schema(scores, -1.0, schema);
    CHECK(all.retained == std::vector<std::string>{"LOC", "PER", "ORG", "MISC"});

    CHECK(filter_schema(scores, 1.0, schema).retained.empty());

    // Strict ">": an exact tie at the threshold is dropped.
    auto tie = filter_schema(scores, 0.75, schema);
    CHECK(tie.retained == std::vector<std::string>{"LOC"});

    // Tie in score: schema index breaks it.
    std::vector<MatchScore> tied{{"MISC", 0.5}, {"LOC", 0.5}, {"PER", 0.9}, {"ORG", 0.1}};
    auto ordered = filter_schema(tied, 0.0, schema);
    CHECK(ordered.retained == std::vector<std::string>{"PER", "LOC", "MISC", "ORG"});

    CHECK_THROWS_AS(filter_schema(scores, 1.5, schema), config_error);
}

TEST_CASE("filter monotonicity in the threshold") {
    TypeSchema schema = toner_test::wide_schema(6);
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<MatchScore> scores;
        for (size_t i = 0; i < 6; ++i) scores.push_back({schema.at(i).tag, dist(rng)});
        std::vector<double> grid;
        for (int g = 0; g < 8; ++g) grid.push_back(dist(rng));
        std::sort(grid.begin(), grid.end());

        size_t prev_size = schema.size() + 1;
        std::set<std::string> prev_set;
        bool first = true;
        for (double delta : grid) {
            auto filtered = filter_schema(scores, delta, schema);
            std::set<std::string> cur(filtered.retained.begin(), filtered.retained.end());
            CHECK(filtered.retained.size() <= prev_size);
            if (!first)
                for (const auto& tag : cur) CHECK(prev_set.count(tag) == 1);
            prev_set = cur;
            prev_size = filtered.retained.size();
            first = false;
        }
    }
}

TEST_CASE("calibrate_threshold on separable scores") {
    TypeSchema schema = conll_schema();
    // Orthonormal axes per description plus one slack axis: cosine against
    // description t is exactly the coefficient on its axis.
    TableEncoder encoder(5);
    for (size_t i = 0; i < 4; ++i) {
        std::vector<double> v(5, 0.0);
        v[i] = 1.0;
        encoder.set(schema.at(i).description, v);
    }
    std::vector<MatchingPair> pairs;
    for (int s = 0; s < 6; ++s) {
        size_t pos_idx = s % 4;
        // Unit-norm sentence vector: cosine against the positive description
        // is exactly 0.9, against each negative exactly 0.1.
        std::vector<double> v(5, 0.1);
        v[pos_idx] = 0.9;
        double head = 0.0;
        for (size_t i = 0; i < 4; ++i) head += v[i] * v[i];
        v[4] = std::sqrt(1.0 - head);
        std::string sentence = "sentence " + std::to_string(s);
        encoder.set(sentence, v);
        MatchingPair pair;
        pair.sentence = sentence;
        pair.positives = {schema.at(pos_idx).tag};
        for (size_t i = 0; i < 4; ++i)
            if (i != pos_idx) pair.negatives.insert(schema.at(i).tag);
        pairs.push_back(pair);
    }

    auto single = calibrate_threshold(pairs, encoder, schema, {0.5});
    CHECK(single.chosen == 0.5);
    CHECK(single.entries.size() == 1);

    auto report = calibrate_threshold(pairs, encoder, schema, {0.1, 0.3, 0.5, 0.7, 0.95});
    // Every delta in [0.1, 0.9) separates perfectly; ties resolve downward.
    CHECK(report.chosen == 0.1);
    for (size_t gi = 0; gi + 1 < report.entries.size(); ++gi)
        CHECK(report.entries[gi].f1 == Catch::Approx(1.0).margin(1e-12));
    CHECK(report.entries.back().f1 < 1.0);

    long long histogram_total = 0;
    for (size_t b = 0; b < report.positive_counts.size(); ++b)
        histogram_total += report.positive_counts[b] + report.negative_counts[b];
    CHECK(histogram_total == static_cast<long long>(pairs.size() * schema.size()));

    CHECK_THROWS_AS(calibrate_threshold(pairs, encoder, schema, {}), config_error);
    CHECK_THROWS_AS(calibrate_threshold({}, encoder, schema, {0.5}), config_error);
}

TEST_CASE("calibrate_threshold per-delta counts match a brute-force sweep") {
    TypeSchema schema = conll_schema();
    MockEncoder encoder(1234, 12);
    std::vector<MatchingPair> pairs;
    std::mt19937_64 rng(61);
    for (int s = 0; s < 12; ++s) {
        MatchingPair pair;
        pair.sentence = "random sentence number " + std::to_string(s) + " about things";
        for (size_t i = 0; i < schema.size(); ++i) {
            if (rng() % 2) pair.positives.insert(schema.at(i).tag);
            else pair.negatives.insert(schema.at(i).tag);
        }
        pairs.push_back(pair);
    }
    std::vector<double> grid{-0.5, -0.1, 0.0, 0.1, 0.5};
    auto report = calibrate_threshold(pairs, encoder, schema, grid);

    DescriptionCache cache;
    for (size_t gi = 0; gi < grid.size(); ++gi) {
        long long tp = 0, fp = 0, fn = 0;
        for (const auto& pair : pairs) {
            auto scores = score_types(encoder, pair.sentence, schema, &cache);
            for (const auto& sc : scores) {
                bool predicted = sc.score > grid[gi];
                bool gold = pair.positives.count(sc.type_tag) > 0;
                if (predicted && gold) ++tp;
                else if (predicted) ++fp;
                else if (gold) ++fn;
            }
        }
        double p = tp + fp ? double(tp) / (tp + fp) : 0.0;
        double r = tp + fn ? double(tp) / (tp + fn) : 0.0;
        CHECK(report.entries[gi].precision == Catch::Approx(p).margin(1e-12));
        CHECK(report.entries[gi].recall == Catch::Approx(r).margin(1e-12));
    }
}

TEST_CASE("train_matcher mechanics") {
    TypeSchema schema = conll_schema();
    std::vector<MatchingPair> pairs;
    for (int s = 0; s < 8; ++s) {
        MatchingPair pair;
        pair.sentence = "training sentence " + std::to_string(s);
        pair.positives = {schema.at(s % 4).tag};
        for (size_t i = 0; i < 4; ++i)
            if (i != static_cast<size_t>(s % 4)) pair.negatives.insert(schema.at(i).tag);
        pairs.push_back(pair);
    }

    SECTION("zero epochs leaves the encoder unchanged") {
        TrainableMockEncoder encoder(schema, 1);
        auto before = encoder.biases();
        auto trace = train_matcher(encoder, pairs, schema, 0.05, 0);
        CHECK(trace.epoch_mean_loss.empty());
        CHECK(encoder.biases() == before);
    }

    SECTION("descent on a toy corpus") {
        TrainableMockEncoder encoder(schema, 1, 8, 0.02);
        auto trace = train_matcher(encoder, pairs, schema, 0.5, 6, pairs.size());
        REQUIRE(trace.epoch_mean_loss.size() == 6);
        CHECK(trace.epoch_mean_loss.back() < trace.epoch_mean_loss.front());
    }

    SECTION("batch size 1 vs full batch on one example") {
        std::vector<MatchingPair> one(pairs.begin(), pairs.begin() + 1);
        TrainableMockEncoder a(schema, 1), b(schema, 1);
        auto t1 = train_matcher(a, one, schema, 0.05, 1, 1);
        auto t2 = train_matcher(b, one, schema, 0.05, 1, 64);
        CHECK(t1.epoch_mean_loss == t2.epoch_mean_loss);
    }

    SECTION("fixed seed gives a bitwise-identical trace") {
        TrainableMockEncoder a(schema, 9), b(schema, 9);
        auto t1 = train_matcher(a, pairs, schema, 0.5, 3, 4);
        auto t2 = train_matcher(b, pairs, schema, 0.5, 3, 4);
        CHECK(t1.epoch_mean_loss == t2.epoch_mean_loss);
        CHECK(a.biases() == b.biases());
    }
}
