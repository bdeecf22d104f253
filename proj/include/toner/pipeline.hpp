#pragma once
// Workflow orchestration: file formats (schema JSON, JSON-lines samples,
// predictions, reports, CSV traces) and the pipeline commands. All outputs
// are written atomically (temp file + rename); inputs are never mutated.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "toner/backends.hpp"
#include "toner/bio.hpp"
#include "toner/codec.hpp"
#include "toner/config.hpp"
#include "toner/core.hpp"
#include "toner/matching.hpp"
#include "toner/metrics.hpp"
#include "toner/objectives.hpp"
#include "toner/prompts.hpp"

namespace toner {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// File formats

inline TypeSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open schema file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw parse_error("bad schema JSON in " + path + ": " + e.what());
    }
    if (!doc.is_array()) throw parse_error("schema file must hold a JSON array: " + path);
    std::vector<EntityType> types;
    for (const auto& item : doc) {
        EntityType t;
        t.tag = item.at("tag").get<std::string>();
        t.display_name = item.at("name").get<std::string>();
        t.description = item.at("description").get<std::string>();
        types.push_back(std::move(t));
    }
    return TypeSchema(std::move(types));
}

inline std::vector<ExplanationRecord> read_explanations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open explanations file: " + path);
    std::vector<ExplanationRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        try {
            json doc = json::parse(line);
            records.push_back(ExplanationRecord{doc.at("example_id").get<std::string>(),
                                                doc.at("explanation").get<std::string>()});
        } catch (const json::exception& e) {
            throw parse_error("bad explanation record at " + path + ":" +
                              std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

inline void atomic_write(const std::string& path, const std::string& content) {
    std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw io_error("cannot write file: " + tmp);
        out << content;
        if (!out) throw io_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::string samples_to_jsonl(const std::vector<PromptSample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        json doc;
        doc["id"] = s.id;
        doc["task"] = task_name(s.task);
        doc["prompt"] = s.prompt;
        doc["target"] = s.target;
        out += doc.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<PromptSample> read_samples_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open samples file: " + path);
    std::vector<PromptSample> samples;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        try {
            json doc = json::parse(line);
            PromptSample s;
            s.id = doc.at("id").get<std::string>();
            s.task = parse_task_name(doc.at("task").get<std::string>());
            s.prompt = doc.at("prompt").get<std::string>();
            s.target = doc.at("target").get<std::string>();
            samples.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw parse_error("bad sample record at " + path + ":" + std::to_string(line_no) +
                              ": " + e.what());
        }
    }
    return samples;
}

inline std::string predictions_to_jsonl(const std::map<std::string, std::string>& predictions) {
    std::string out;
    for (const auto& [id, output] : predictions) {
        json doc;
        doc["id"] = id;
        doc["output"] = output;
        out += doc.dump();
        out += '\n';
    }
    return out;
}

inline std::map<std::string, std::string> read_predictions_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open predictions file: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        try {
            json doc = json::parse(line);
            out[doc.at("id").get<std::string>()] = doc.at("output").get<std::string>();
        } catch (const json::exception& e) {
            throw parse_error("bad prediction record at " + path + ":" +
                              std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline json calibration_to_json(const CalibrationReport& report) {
    json doc;
    doc["grid"] = report.grid;
    json entries = json::array();
    for (const auto& e : report.entries) {
        json row;
        row["delta"] = e.delta;
        row["precision"] = e.precision;
        row["recall"] = e.recall;
        row["f1"] = e.f1;
        entries.push_back(row);
    }
    doc["entries"] = entries;
    doc["chosen"] = report.chosen;
    doc["histogram"]["bin_edges"] = report.bin_edges;
    doc["histogram"]["positive_counts"] = report.positive_counts;
    doc["histogram"]["negative_counts"] = report.negative_counts;
    return doc;
}

inline json report_to_json(const EvalReport& report) {
    json doc;
    doc["precision"] = report.precision;
    doc["recall"] = report.recall;
    doc["f1"] = report.f1;
    doc["n_examples"] = report.n_examples;
    doc["counts"]["tp"] = report.counts.tp;
    doc["counts"]["fp"] = report.counts.fp;
    doc["counts"]["fn"] = report.counts.fn;
    doc["counts"]["parse_failures"] = report.counts.parse_failures;
    json per_type = json::object();
    for (const auto& [tag, c] : report.counts.per_type) {
        per_type[tag] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
    }
    doc["counts"]["per_type"] = per_type;
    doc["config_fingerprint"] = report.config_fingerprint;
    doc["warnings"] = report.warnings;
    return doc;
}

inline std::string report_to_text(const EvalReport& report) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof(line),
                  "examples: %zu  tp: %lld  fp: %lld  fn: %lld  parse_failures: %lld\n",
                  report.n_examples, report.counts.tp, report.counts.fp, report.counts.fn,
                  report.counts.parse_failures);
    out += line;
    std::snprintf(line, sizeof(line), "precision: %.4f  recall: %.4f  f1: %.4f\n",
                  report.precision, report.recall, report.f1);
    out += line;
    out += "type        tp      fp      fn\n";
    for (const auto& [tag, c] : report.counts.per_type) {
        std::snprintf(line, sizeof(line), "%-10s %-7lld %-7lld %-7lld\n", tag.c_str(), c.tp,
                      c.fp, c.fn);
        out += line;
    }
    return out;
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Backend construction

inline std::unique_ptr<EncoderBackend> make_encoder(const RunConfig& cfg, const TypeSchema& schema,
                                                    const std::string& state_path = "") {
    if (cfg.encoder_backend == "mock")
        return std::make_unique<MockEncoder>(cfg.seed, cfg.embed_dim);
    if (cfg.encoder_backend == "mock_trainable") {
        auto enc = std::make_unique<TrainableMockEncoder>(schema, cfg.seed, cfg.embed_dim,
                                                          cfg.matcher_lr);
        std::string path = state_path.empty()
                               ? (std::filesystem::path(cfg.out_dir) / "matcher_state.json").string()
                               : state_path;
        if (std::filesystem::exists(path)) {
            std::ifstream in(path);
            json doc;
            in >> doc;
            std::map<std::string, std::vector<double>> biases;
            for (auto it = doc.begin(); it != doc.end(); ++it)
                biases[it.key()] = it.value().get<std::vector<double>>();
            enc->set_biases(std::move(biases));
        }
        return enc;
    }
    throw config_error("unknown encoder backend: " + cfg.encoder_backend);
}

inline std::unique_ptr<MockGenerator> make_generator(const RunConfig& cfg,
                                                     const TypeSchema& schema,
                                                     const std::vector<const CorpusSplit*>& splits) {
    std::string name = cfg.generator_backend;
    if (const char* env = std::getenv("TONER_BACKEND"); env && *env) name = env;

    MockGeneratorMode mode;
    if (name == "mock_echo") mode = MockGeneratorMode::echo;
    else if (name == "mock_fallback") mode = MockGeneratorMode::fallback;
    else if (name == "mock_type_aware") mode = MockGeneratorMode::type_aware;
    else throw config_error("unknown generator backend: " + name);

    auto gen = std::make_unique<MockGenerator>(schema, mode, cfg.seed, cfg.embed_dim);
    for (const CorpusSplit* split : splits) {
        if (!split) continue;
        for (const auto& ex : split->examples) {
            gen->set_target(ex.sentence, serialize_mentions(ex.mentions, split->schema));
            gen->set_gold(ex.sentence, ex.mentions);
        }
    }
    return gen;
}

// ---------------------------------------------------------------------------
// Split loading

inline CorpusSplit load_split(const RunConfig& cfg, const TypeSchema& schema,
                              const std::string& name) {
    std::string path;
    if (name == "train") path = cfg.train_path;
    else if (name == "dev") path = cfg.dev_path;
    else if (name == "test") path = cfg.test_path;
    else throw config_error("unknown split name: " + name);
    if (path.empty()) throw config_error("no corpus path configured for split: " + name);
    return read_bio_corpus(path, schema, cfg.tag_column, cfg.strict_bio, name);
}

// ---------------------------------------------------------------------------
// Commands

struct IngestStats {
    std::map<std::string, size_t> examples_per_split;
    std::map<std::string, size_t> mentions_per_type;
    size_t empty_positive_examples = 0;
};

// Reads all configured splits, writes one JSON-lines NER sample file per
// split plus a statistics report. Everything is built in memory first so a
// failing split leaves no partial outputs.
inline IngestStats cmd_ingest(const RunConfig& cfg) {
    TypeSchema schema = load_schema(cfg.schema_path);
    IngestStats stats;
    std::vector<std::pair<std::string, std::string>> outputs; // path -> content

    for (const std::string& name : {"train", "dev", "test"}) {
        std::string path = name == std::string("train") ? cfg.train_path
                           : name == std::string("dev") ? cfg.dev_path
                                                        : cfg.test_path;
        if (path.empty()) continue;
        CorpusSplit split = load_split(cfg, schema, name);
        stats.examples_per_split[name] = split.examples.size();
        for (const auto& ex : split.examples) {
            if (ex.positive_types.empty()) ++stats.empty_positive_examples;
            for (const auto& m : ex.mentions) ++stats.mentions_per_type[m.type_tag];
        }
        auto samples = build_ner_samples(split);
        outputs.emplace_back(
            (std::filesystem::path(cfg.out_dir) / (std::string(name) + ".samples.jsonl")).string(),
            samples_to_jsonl(samples));
    }

    json stats_doc;
    stats_doc["examples_per_split"] = stats.examples_per_split;
    stats_doc["mentions_per_type"] = stats.mentions_per_type;
    stats_doc["empty_positive_examples"] = stats.empty_positive_examples;
    outputs.emplace_back((std::filesystem::path(cfg.out_dir) / "stats.json").string(),
                         stats_doc.dump(2) + "\n");

    for (const auto& [path, content] : outputs) atomic_write(path, content);
    return stats;
}

// Trains the matching encoder on the train split and writes the loss trace
// (CSV: epoch, mean_loss) and the matcher state.
inline MatcherTrace cmd_train_matcher(const RunConfig& cfg) {
    TypeSchema schema = load_schema(cfg.schema_path);
    CorpusSplit train = load_split(cfg, schema, "train");
    auto pairs = build_matching_pairs(train);

    auto encoder = make_encoder(cfg, schema);
    MatcherTrace trace =
        train_matcher(*encoder, pairs, schema, cfg.tau, cfg.matcher_epochs, cfg.batch_size);

    std::string csv = "epoch,mean_loss\n";
    for (size_t i = 0; i < trace.epoch_mean_loss.size(); ++i)
        csv += std::to_string(i) + "," + detail::fmt_double(trace.epoch_mean_loss[i]) + "\n";
    atomic_write((std::filesystem::path(cfg.out_dir) / "matcher_trace.csv").string(), csv);

    if (auto* trainable = dynamic_cast<TrainableMockEncoder*>(encoder.get())) {
        json state = json::object();
        for (const auto& [tag, bias] : trainable->biases()) state[tag] = bias;
        atomic_write((std::filesystem::path(cfg.out_dir) / "matcher_state.json").string(),
                     state.dump(2) + "\n");
    }
    return trace;
}

// Grid-searches the filtering threshold on the dev split and writes the
// calibration report.
inline CalibrationReport cmd_calibrate(const RunConfig& cfg) {
    TypeSchema schema = load_schema(cfg.schema_path);
    CorpusSplit dev = load_split(cfg, schema, "dev");
    auto pairs = build_matching_pairs(dev);
    auto encoder = make_encoder(cfg, schema);

    std::vector<double> grid = cfg.grid;
    if (grid.empty())
        for (int i = -9; i <= 9; ++i) grid.push_back(i / 10.0);

    CalibrationReport report = calibrate_threshold(pairs, *encoder, schema, grid);
    atomic_write((std::filesystem::path(cfg.out_dir) / "calibration.json").string(),
                 calibration_to_json(report).dump(2) + "\n");
    return report;
}

struct DatasetManifest {
    std::map<std::string, size_t> per_task;
    size_t total = 0;
};

namespace detail {

// The combined fine-tuning sample population, deterministically shuffled.
// Shared by cmd_build_dataset and cmd_train so both see the same data.
inline std::vector<PromptSample> build_training_samples(const RunConfig& cfg,
                                                        const TypeSchema& schema,
                                                        const CorpusSplit& train) {
    std::map<std::string, FilteredSchema> filtered;
    const std::map<std::string, FilteredSchema>* filter_ptr = nullptr;
    if (cfg.use_filter) {
        auto encoder = make_encoder(cfg, schema);
        DescriptionCache cache;
        for (const auto& ex : train.examples) {
            auto scores = score_types(*encoder, ex.sentence, schema, &cache);
            filtered[ex.id] = filter_schema(scores, cfg.delta, schema);
        }
        filter_ptr = &filtered;
    }

    std::vector<PromptSample> samples = build_ner_samples(train, filter_ptr);
    auto aux = build_auxiliary_samples(train, cfg.aux_fraction, cfg.seed);
    samples.insert(samples.end(), aux.begin(), aux.end());
    if (!cfg.explanations_path.empty()) {
        auto records = read_explanations(cfg.explanations_path);
        auto exp = merge_explanations(train, records, filter_ptr);
        samples.insert(samples.end(), exp.begin(), exp.end());
    }

    std::mt19937_64 rng(cfg.seed);
    for (size_t i = samples.size(); i > 1; --i)
        std::swap(samples[i - 1], samples[rng() % i]);
    return samples;
}

} // namespace detail

// Writes the combined fine-tuning JSONL plus a per-task count manifest.
inline DatasetManifest cmd_build_dataset(const RunConfig& cfg) {
    TypeSchema schema = load_schema(cfg.schema_path);
    CorpusSplit train = load_split(cfg, schema, "train");
    auto samples = detail::build_training_samples(cfg, schema, train);

    DatasetManifest manifest;
    manifest.total = samples.size();
    for (const auto& s : samples) ++manifest.per_task[task_name(s.task)];

    json doc;
    doc["per_task"] = manifest.per_task;
    doc["total"] = manifest.total;
    atomic_write((std::filesystem::path(cfg.out_dir) / "dataset.jsonl").string(),
                 samples_to_jsonl(samples));
    atomic_write((std::filesystem::path(cfg.out_dir) / "manifest.json").string(),
                 doc.dump(2) + "\n");
    return manifest;
}

struct TrainStep {
    size_t step = 0;
    double generation = 0.0;
    double classification = 0.0;
    double total = 0.0;
};

struct TrainResult {
    std::vector<TrainStep> steps;
};

// Joint fine-tuning loop over the combined dataset: per batch, the mean
// generation loss plus lambda times the mean classification loss (NER-family
// samples only unless aux_in_classification), one backend update per batch.
inline TrainResult cmd_train(const RunConfig& cfg) {
    TypeSchema schema = load_schema(cfg.schema_path);
    CorpusSplit train = load_split(cfg, schema, "train");
    auto samples = detail::build_training_samples(cfg, schema, train);

    if (cfg.homogeneous_batches)
        std::stable_sort(samples.begin(), samples.end(),
                         [](const PromptSample& a, const PromptSample& b) {
                             return static_cast<int>(a.task) < static_cast<int>(b.task);
                         });

    std::map<std::string, const AnnotatedExample*> by_id;
    for (const auto& ex : train.examples) by_id[ex.id] = &ex;

    auto generator = make_generator(cfg, schema, {&train});
    PoolScope scope = parse_pool_scope(cfg.pool_scope);

    auto contributes_cls = [&](const PromptSample& s) {
        if (s.task == TaskKind::TYPE_RECOGNITION) return cfg.aux_in_classification;
        return true;
    };

    auto batch_losses = [&](size_t begin, size_t end) {
        double gen_total = 0.0, cls_total = 0.0;
        size_t n = end - begin;
        for (size_t i = begin; i < end; ++i) {
            const auto& s = samples[i];
            gen_total += generation_loss(generator->teacher_forced_logprobs(s.prompt, s.target));
            if (contributes_cls(s)) {
                const AnnotatedExample* ex = by_id.at(s.id);
                ClassifierLogits logits = generator->type_logits(s.prompt, scope);
                cls_total += classification_loss(logits, ex->positive_types, ex->negative_types,
                                                 schema, cfg.standard_sign);
            }
        }
        double gen_mean = n ? gen_total / static_cast<double>(n) : 0.0;
        double cls_mean = n ? cls_total / static_cast<double>(n) : 0.0;
        return std::pair<double, double>(gen_mean, cls_mean);
    };

    TrainResult result;
    size_t step = 0;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t begin = 0; begin < samples.size(); begin += cfg.batch_size) {
            size_t end = std::min(begin + cfg.batch_size, samples.size());
            auto [gen_mean, cls_mean] = batch_losses(begin, end);
            LossBreakdown breakdown = combined_loss(gen_mean, cls_mean, cfg.lambda);
            result.steps.push_back(
                TrainStep{step, breakdown.generation, breakdown.classification, breakdown.total});
            generator->apply_update([&] {
                auto [g, c] = batch_losses(begin, end);
                return combined_loss(g, c, cfg.lambda).total;
            });
            ++step;
        }
    }

    std::string csv = "step,generation,classification,total\n";
    for (const auto& row : result.steps)
        csv += std::to_string(row.step) + "," + detail::fmt_double(row.generation) + "," +
               detail::fmt_double(row.classification) + "," + detail::fmt_double(row.total) + "\n";
    atomic_write((std::filesystem::path(cfg.out_dir) / "train_trace.csv").string(), csv);

    json state;
    state["token_param"] = generator->token_param();
    state["logit_params"] = generator->logit_params();
    atomic_write((std::filesystem::path(cfg.out_dir) / "generator_state.json").string(),
                 state.dump(2) + "\n");
    return result;
}

// Builds prompts (filtered when configured), generates, and writes the raw
// predictions as JSON-lines {id, output}.
inline std::map<std::string, std::string> cmd_predict(const RunConfig& cfg,
                                                      const std::string& split_name) {
    TypeSchema schema = load_schema(cfg.schema_path);
    CorpusSplit split = load_split(cfg, schema, split_name);
    auto generator = make_generator(cfg, schema, {&split});

    std::unique_ptr<EncoderBackend> encoder;
    DescriptionCache cache;
    if (cfg.use_filter) encoder = make_encoder(cfg, schema);

    std::map<std::string, std::string> predictions;
    for (const auto& ex : split.examples) {
        std::string prompt;
        if (encoder) {
            auto scores = score_types(*encoder, ex.sentence, schema, &cache);
            prompt = build_filtered_prompt(schema, ex.sentence,
                                           filter_schema(scores, cfg.delta, schema));
        } else {
            prompt = build_ner_prompt(schema, ex.sentence);
        }
        predictions[ex.id] = generator->generate(prompt, cfg.max_length);
    }
    atomic_write(
        (std::filesystem::path(cfg.out_dir) / (split_name + ".predictions.jsonl")).string(),
        predictions_to_jsonl(predictions));
    return predictions;
}

// Scores a predictions file against a gold split; writes JSON and text
// reports.
inline EvalReport cmd_eval(const RunConfig& cfg, const std::string& predictions_path,
                           const std::string& split_name) {
    TypeSchema schema = load_schema(cfg.schema_path);
    CorpusSplit split = load_split(cfg, schema, split_name);
    auto predictions = read_predictions_jsonl(predictions_path);
    EvalReport report = evaluate_dataset(split, predictions, parse_dedupe_policy(cfg.dedupe));
    atomic_write((std::filesystem::path(cfg.out_dir) / (split_name + ".report.json")).string(),
                 report_to_json(report).dump(2) + "\n");
    atomic_write((std::filesystem::path(cfg.out_dir) / (split_name + ".report.txt")).string(),
                 report_to_text(report));
    return report;
}

// Threshold sweep over a split; writes CSV rows delta, P, R, F1,
// retained_mean.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::vector<double>& grid,
                                       const std::string& split_name) {
    if (grid.empty()) throw config_error("sweep grid must be nonempty");
    TypeSchema schema = load_schema(cfg.schema_path);
    CorpusSplit split = load_split(cfg, schema, split_name);
    auto encoder = make_encoder(cfg, schema);
    auto generator = make_generator(cfg, schema, {&split});

    auto rows = threshold_sweep(split, *encoder, *generator, grid, cfg.max_length,
                                parse_dedupe_policy(cfg.dedupe));

    std::string csv = "delta,precision,recall,f1,retained_mean\n";
    for (const auto& row : rows)
        csv += detail::fmt_double(row.delta) + "," + detail::fmt_double(row.report.precision) +
               "," + detail::fmt_double(row.report.recall) + "," +
               detail::fmt_double(row.report.f1) + "," + detail::fmt_double(row.retained_mean) +
               "\n";
    atomic_write((std::filesystem::path(cfg.out_dir) / "sweep.csv").string(), csv);
    return rows;
}

} // namespace toner
