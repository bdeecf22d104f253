// toner: command-line driver for the type-oriented NER pipeline.
//
//   toner <command> --config <path> [--split ...] [--grid ...] [--out ...]
//
// Exit status: 0 success, 1 evaluation/validation failure, 2 I/O or config
// error.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "toner/pipeline.hpp"

namespace {

toner::RunConfig load(const std::string& config_path, const std::string& out_override) {
    toner::RunConfig cfg = toner::load_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"type-oriented generative NER pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string split = "test";
    std::string predictions_path;
    std::vector<double> grid;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file")->required();
        cmd->add_option("--out", out_override, "override the configured output directory");
    };

    CLI::App* ingest = app.add_subcommand("ingest", "read corpora, write NER samples and stats");
    add_common(ingest);

    CLI::App* train_matcher =
        app.add_subcommand("train-matcher", "train the type matching encoder");
    add_common(train_matcher);

    CLI::App* calibrate =
        app.add_subcommand("calibrate", "grid-search the filtering threshold on dev");
    add_common(calibrate);

    CLI::App* build_dataset =
        app.add_subcommand("build-dataset", "build the combined fine-tuning dataset");
    add_common(build_dataset);

    CLI::App* train = app.add_subcommand("train", "run the joint fine-tuning loop");
    add_common(train);

    CLI::App* predict = app.add_subcommand("predict", "generate predictions for a split");
    add_common(predict);
    predict->add_option("--split", split, "corpus split (train/dev/test)");

    CLI::App* eval = app.add_subcommand("eval", "score a predictions file against gold");
    add_common(eval);
    eval->add_option("--split", split, "corpus split (train/dev/test)");
    eval->add_option("--predictions", predictions_path, "predictions JSONL path")->required();

    CLI::App* sweep = app.add_subcommand("sweep", "evaluate across a threshold grid");
    add_common(sweep);
    sweep->add_option("--split", split, "corpus split (train/dev/test)");
    sweep->add_option("--grid", grid, "threshold grid values")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        toner::RunConfig cfg = load(config_path, out_override);
        if (ingest->parsed()) {
            auto stats = toner::cmd_ingest(cfg);
            for (const auto& [name, n] : stats.examples_per_split)
                std::printf("%s: %zu examples\n", name.c_str(), n);
            std::printf("empty-positive examples: %zu\n", stats.empty_positive_examples);
        } else if (train_matcher->parsed()) {
            auto trace = toner::cmd_train_matcher(cfg);
            if (!trace.epoch_mean_loss.empty())
                std::printf("final epoch mean loss: %.6f\n", trace.epoch_mean_loss.back());
        } else if (calibrate->parsed()) {
            auto report = toner::cmd_calibrate(cfg);
            std::printf("chosen delta: %g\n", report.chosen);
        } else if (build_dataset->parsed()) {
            auto manifest = toner::cmd_build_dataset(cfg);
            for (const auto& [task, n] : manifest.per_task)
                std::printf("%s: %zu samples\n", task.c_str(), n);
            std::printf("total: %zu samples\n", manifest.total);
        } else if (train->parsed()) {
            auto result = toner::cmd_train(cfg);
            if (!result.steps.empty())
                std::printf("steps: %zu  final total loss: %.6f\n", result.steps.size(),
                            result.steps.back().total);
        } else if (predict->parsed()) {
            auto predictions = toner::cmd_predict(cfg, split);
            std::printf("%s: %zu predictions\n", split.c_str(), predictions.size());
        } else if (eval->parsed()) {
            auto report = toner::cmd_eval(cfg, predictions_path, split);
            std::printf("precision: %.4f  recall: %.4f  f1: %.4f  parse_failures: %lld\n",
                        report.precision, report.recall, report.f1,
                        report.counts.parse_failures);
        } else if (sweep->parsed()) {
            auto rows = toner::cmd_sweep(cfg, grid, split);
            for (const auto& row : rows)
                std::printf("delta %.3f  f1 %.4f  retained_mean %.2f\n", row.delta,
                            row.report.f1, row.retained_mean);
        }
    } catch (const toner::io_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const toner::config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
