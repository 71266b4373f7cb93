#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedwcm/errors.hpp"
#include "fedwcm/federation.hpp"
#include "fedwcm/partition.hpp"

namespace fedwcm {

struct ExperimentConfig {
    int num_classes = 10;
    std::size_t per_class = 200;   // head-class sample budget before the tail schedule
    std::size_t dim = 16;
    double imbalance = 1.0;
    std::size_t test_per_class = 100;
    PartitionSpec partition{.num_clients = 20, .beta = 0.1,
                            .mode = PartitionMode::kEqualQuantity, .seed = 0};
    RunConfig run;
    std::vector<Algorithm> algorithms{Algorithm::kFedWCM};
    std::size_t trials = 3;
    std::uint64_t seed = 1;
    std::string out_dir = "runs";

    void validate() const {
        std::vector<std::string> bad;
        if (num_classes < 2) bad.push_back("data.classes must be at least 2");
        if (per_class == 0) bad.push_back("data.per_class must be positive");
        if (dim < 2) bad.push_back("data.dim must be at least 2");
        if (!(imbalance > 0.0) || imbalance > 1.0) {
            bad.push_back("data.imbalance must be in (0, 1]");
        }
        if (test_per_class == 0) bad.push_back("data.test_per_class must be positive");
        if (partition.num_clients == 0) bad.push_back("partition.clients must be positive");
        if (!(partition.beta > 0.0)) bad.push_back("partition.beta must be positive");
        if (algorithms.empty()) bad.push_back("run.algorithms must name at least one algorithm");
        if (trials == 0) bad.push_back("trials must be positive");
        if (out_dir.empty()) bad.push_back("out must be a nonempty path");
        if (!(run.eta_l > 0.0)) bad.push_back("run.eta_l must be positive");
        if (!(run.eta_g >= 0.0)) bad.push_back("run.eta_g must be nonnegative");
        if (run.rounds == 0) bad.push_back("run.rounds must be positive");
        if (run.local_epochs == 0) bad.push_back("run.local_epochs must be positive");
        if (run.batch_size == 0) bad.push_back("run.batch_size must be positive");
        if (!(run.sample_rate > 0.0) || run.sample_rate > 1.0) {
            bad.push_back("run.sample_rate must be in (0, 1]");
        }
        if (!(run.fixed_alpha > 0.0) || run.fixed_alpha > 1.0) {
            bad.push_back("run.fixed_alpha must be in (0, 1]");
        }
        if (!(run.t0 > 0.0)) bad.push_back("run.t0 must be positive");
        if (run.standard_batches < 0) bad.push_back("run.standard_batches must be nonnegative");
        if (!bad.empty()) throw ConfigError(bad);
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

struct ConfigParser {
    std::vector<std::string> violations;

    bool parse_ll(const std::string& key, const std::string& value, long long& out) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            out = v;
            return true;
        } catch (const std::exception&) {
            violations.push_back(key + ": expected an integer, got '" + value + "'");
            return false;
        }
    }

    bool parse_f64(const std::string& key, const std::string& value, double& out) {
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            out = v;
            return true;
        } catch (const std::exception&) {
            violations.push_back(key + ": expected a number, got '" + value + "'");
            return false;
        }
    }
};

}  // namespace detail

// Strict flat key=value format: '#' starts a comment, unknown keys are fatal,
// and every violation in the file is reported at once.
inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    detail::ConfigParser p;

    std::istringstream stream(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(stream, line)) {
        line_no++;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            p.violations.push_back("line " + std::to_string(line_no) +
                                   ": expected key = value, got '" + line + "'");
            continue;
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        long long ll = 0;
        double f = 0.0;

        if (key == "data.classes") {
            if (p.parse_ll(key, value, ll)) cfg.num_classes = static_cast<int>(ll);
        } else if (key == "data.per_class") {
            if (p.parse_ll(key, value, ll)) cfg.per_class = static_cast<std::size_t>(ll);
        } else if (key == "data.dim") {
            if (p.parse_ll(key, value, ll)) cfg.dim = static_cast<std::size_t>(ll);
        } else if (key == "data.imbalance") {
            if (p.parse_f64(key, value, f)) cfg.imbalance = f;
        } else if (key == "data.test_per_class") {
            if (p.parse_ll(key, value, ll)) cfg.test_per_class = static_cast<std::size_t>(ll);
        } else if (key == "partition.clients") {
            if (p.parse_ll(key, value, ll)) cfg.partition.num_clients = static_cast<std::size_t>(ll);
        } else if (key == "partition.beta") {
            if (p.parse_f64(key, value, f)) cfg.partition.beta = f;
        } else if (key == "partition.mode") {
            if (value == "equal") {
                cfg.partition.mode = PartitionMode::kEqualQuantity;
            } else if (value == "skew") {
                cfg.partition.mode = PartitionMode::kQuantitySkew;
            } else {
                p.violations.push_back("partition.mode: expected equal or skew, got '" +
                                       value + "'");
            }
        } else if (key == "run.algorithms") {
            cfg.algorithms.clear();
            std::istringstream items(value);
            std::string item;
            while (std::getline(items, item, ',')) {
                item = detail::trim(item);
                if (item.empty()) continue;
                try {
                    cfg.algorithms.push_back(algorithm_from_name(item));
                } catch (const InputError& e) {
                    p.violations.push_back(std::string("run.algorithms: ") + e.what());
                }
            }
        } else if (key == "run.eta_l") {
            if (p.parse_f64(key, value, f)) cfg.run.eta_l = f;
        } else if (key == "run.eta_g") {
            if (p.parse_f64(key, value, f)) cfg.run.eta_g = f;
        } else if (key == "run.rounds") {
            if (p.parse_ll(key, value, ll)) cfg.run.rounds = static_cast<std::size_t>(ll);
        } else if (key == "run.local_epochs") {
            if (p.parse_ll(key, value, ll)) cfg.run.local_epochs = static_cast<std::size_t>(ll);
        } else if (key == "run.batch_size") {
            if (p.parse_ll(key, value, ll)) cfg.run.batch_size = static_cast<std::size_t>(ll);
        } else if (key == "run.sample_rate") {
            if (p.parse_f64(key, value, f)) cfg.run.sample_rate = f;
        } else if (key == "run.fixed_alpha") {
            if (p.parse_f64(key, value, f)) cfg.run.fixed_alpha = f;
        } else if (key == "run.t0") {
            if (p.parse_f64(key, value, f)) cfg.run.t0 = f;
        } else if (key == "run.standard_batches") {
            if (p.parse_ll(key, value, ll)) cfg.run.standard_batches = ll;
        } else if (key == "trials") {
            if (p.parse_ll(key, value, ll)) cfg.trials = static_cast<std::size_t>(ll);
        } else if (key == "seed") {
            if (p.parse_ll(key, value, ll)) cfg.seed = static_cast<std::uint64_t>(ll);
        } else if (key == "out") {
            cfg.out_dir = value;
        } else {
            p.violations.push_back("unknown key '" + key + "'");
        }
    }
    if (!p.violations.empty()) throw ConfigError(p.violations);
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_config: cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

// Write-back of the fully resolved config. Parsing the echo reproduces the
// same configuration.
inline std::string echo_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "data.classes = " << cfg.num_classes << '\n';
    out << "data.per_class = " << cfg.per_class << '\n';
    out << "data.dim = " << cfg.dim << '\n';
    out << "data.imbalance = " << cfg.imbalance << '\n';
    out << "data.test_per_class = " << cfg.test_per_class << '\n';
    out << "partition.clients = " << cfg.partition.num_clients << '\n';
    out << "partition.beta = " << cfg.partition.beta << '\n';
    out << "partition.mode = "
        << (cfg.partition.mode == PartitionMode::kEqualQuantity ? "equal" : "skew") << '\n';
    out << "run.algorithms = ";
    for (std::size_t i = 0; i < cfg.algorithms.size(); ++i) {
        if (i) out << ',';
        out << algorithm_name(cfg.algorithms[i]);
    }
    out << '\n';
    out << "run.eta_l = " << cfg.run.eta_l << '\n';
    out << "run.eta_g = " << cfg.run.eta_g << '\n';
    out << "run.rounds = " << cfg.run.rounds << '\n';
    out << "run.local_epochs = " << cfg.run.local_epochs << '\n';
    out << "run.batch_size = " << cfg.run.batch_size << '\n';
    out << "run.sample_rate = " << cfg.run.sample_rate << '\n';
    out << "run.fixed_alpha = " << cfg.run.fixed_alpha << '\n';
    out << "run.t0 = " << cfg.run.t0 << '\n';
    out << "run.standard_batches = " << cfg.run.standard_batches << '\n';
    out << "trials = " << cfg.trials << '\n';
    out << "seed = " << cfg.seed << '\n';
    out << "out = " << cfg.out_dir << '\n';
    return out.str();
}

}  // namespace fedwcm
