#pragma once
// Run configuration: a flat key = value file with typed parsing and
// unknown-key rejection. Relative paths are resolved against the config
// file's directory.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "toner/core.hpp"

namespace toner {

struct RunConfig {
    // Data
    std::string schema_path;
    std::string train_path;
    std::string dev_path;
    std::string test_path;
    std::string explanations_path;
    size_t tag_column = 1;
    bool strict_bio = false;

    // Hyperparameters
    double lambda = 0.1;
    double tau = 0.05;
    double delta = 0.8;
    size_t max_length = 512;
    double aux_fraction = 0.2;
    uint64_t seed = 42;

    // Training
    size_t epochs = 1;
    size_t batch_size = 8;
    size_t matcher_epochs = 1;
    double matcher_lr = 0.05;
    bool homogeneous_batches = false;
    bool aux_in_classification = false;

    // Backends
    std::string generator_backend = "mock_echo"; // mock_echo | mock_fallback | mock_type_aware
    std::string encoder_backend = "mock";        // mock | mock_trainable
    size_t embed_dim = 16;
    std::string pool_scope = "full_prompt";

    // Evaluation / filtering
    std::string dedupe = "multiset";
    bool standard_sign = false;
    bool use_filter = true;
    std::vector<double> grid;

    // Output
    std::string out_dir = "out";

    void validate() const {
        if (lambda < 0.0) throw config_error("lambda must be >= 0");
        if (tau <= 0.0) throw config_error("tau must be > 0");
        if (delta < -1.0 || delta > 1.0) throw config_error("delta must lie in [-1, 1]");
        if (max_length < 1) throw config_error("max_length must be >= 1");
        if (!(aux_fraction > 0.0 && aux_fraction <= 1.0))
            throw config_error("aux_fraction must lie in (0, 1]");
        if (batch_size == 0) throw config_error("batch_size must be >= 1");
        if (schema_path.empty()) throw config_error("schema path is required");
    }
};

namespace detail {

inline std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t comma = text.find(',', pos);
        std::string item = trim(
            text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (!item.empty()) {
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw config_error("bad grid value: " + item);
            }
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw config_error("bad boolean for " + key + ": " + value);
}

} // namespace detail

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    std::filesystem::path base = std::filesystem::path(path).parent_path();

    auto resolve = [&](const std::string& p) -> std::string {
        if (p.empty()) return p;
        std::filesystem::path fp(p);
        if (fp.is_absolute()) return p;
        return (base / fp).string();
    };

    RunConfig cfg;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(line_no) + " is not key = value");
        std::string key = detail::trim(s.substr(0, eq));
        std::string value = detail::trim(s.substr(eq + 1));

        auto as_double = [&] {
            try {
                return std::stod(value);
            } catch (const std::exception&) {
                throw config_error("bad number for " + key + ": " + value);
            }
        };
        auto as_size = [&] {
            try {
                long long v = std::stoll(value);
                if (v < 0) throw std::out_of_range("negative");
                return static_cast<size_t>(v);
            } catch (const std::exception&) {
                throw config_error("bad non-negative integer for " + key + ": " + value);
            }
        };

        if (key == "schema") cfg.schema_path = resolve(value);
        else if (key == "train") cfg.train_path = resolve(value);
        else if (key == "dev") cfg.dev_path = resolve(value);
        else if (key == "test") cfg.test_path = resolve(value);
        else if (key == "explanations") cfg.explanations_path = resolve(value);
        else if (key == "tag_column") cfg.tag_column = as_size();
        else if (key == "strict_bio") cfg.strict_bio = detail::parse_bool(key, value);
        else if (key == "lambda") cfg.lambda = as_double();
        else if (key == "tau") cfg.tau = as_double();
        else if (key == "delta") cfg.delta = as_double();
        else if (key == "max_length") cfg.max_length = as_size();
        else if (key == "aux_fraction") cfg.aux_fraction = as_double();
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(as_size());
        else if (key == "epochs") cfg.epochs = as_size();
        else if (key == "batch_size") cfg.batch_size = as_size();
        else if (key == "matcher_epochs") cfg.matcher_epochs = as_size();
        else if (key == "matcher_lr") cfg.matcher_lr = as_double();
        else if (key == "homogeneous_batches") cfg.homogeneous_batches = detail::parse_bool(key, value);
        else if (key == "aux_in_classification") cfg.aux_in_classification = detail::parse_bool(key, value);
        else if (key == "generator_backend") cfg.generator_backend = value;
        else if (key == "encoder_backend") cfg.encoder_backend = value;
        else if (key == "embed_dim") cfg.embed_dim = as_size();
        else if (key == "pool_scope") cfg.pool_scope = value;
        else if (key == "dedupe") cfg.dedupe = value;
        else if (key == "standard_sign") cfg.standard_sign = detail::parse_bool(key, value);
        else if (key == "use_filter") cfg.use_filter = detail::parse_bool(key, value);
        else if (key == "grid") cfg.grid = detail::parse_grid(value);
        else if (key == "out_dir") cfg.out_dir = resolve(value);
        else
            throw config_error("unknown config key at line " + std::to_string(line_no) + ": " + key);
    }
    cfg.validate();
    return cfg;
}

} // namespace toner
