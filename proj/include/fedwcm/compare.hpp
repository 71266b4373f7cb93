#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedwcm/config.hpp"
#include "fedwcm/errors.hpp"
#include "fedwcm/experiment.hpp"

namespace fedwcm {

struct ComparisonCell {
    std::string algorithm;
    double mean = 0.0;
    double std_dev = 0.0;
    std::size_t trials = 0;
    std::size_t failed = 0;
    bool collapsed = false;
};

struct ComparisonRow {
    std::filesystem::path dir;
    double imbalance = 1.0;
    double beta = 0.0;
    std::vector<ComparisonCell> cells;  // aligned with ComparisonTable::algorithms
};

struct ComparisonTable {
    std::vector<std::string> algorithms;
    std::vector<ComparisonRow> rows;
    int num_classes = 0;
};

// Builds a (imbalance, beta) x algorithm table from run directories written by
// run_experiment. All directories must describe the same dataset shape and
// client layout; imbalance and beta are the axes being compared.
inline ComparisonTable compare_dirs(std::span<const std::filesystem::path> dirs) {
    if (dirs.size() < 2) throw InputError("compare: need at least two run directories");

    ComparisonTable table;
    std::vector<ExperimentConfig> configs;
    for (const auto& dir : dirs) {
        configs.push_back(load_config(dir / "config.txt"));
    }
    const ExperimentConfig& ref = configs.front();
    for (std::size_t i = 1; i < configs.size(); ++i) {
        const ExperimentConfig& c = configs[i];
        if (c.num_classes != ref.num_classes || c.per_class != ref.per_class ||
            c.dim != ref.dim || c.test_per_class != ref.test_per_class ||
            c.partition.num_clients != ref.partition.num_clients ||
            c.partition.mode != ref.partition.mode) {
            throw InputError("compare: " + dirs[i].string() + " and " + dirs[0].string() +
                             " describe different datasets or client layouts");
        }
    }
    table.num_classes = ref.num_classes;

    for (const auto& cfg : configs) {
        for (Algorithm a : cfg.algorithms) {
            const std::string name = algorithm_name(a);
            if (std::find(table.algorithms.begin(), table.algorithms.end(), name) ==
                table.algorithms.end()) {
                table.algorithms.push_back(name);
            }
        }
    }

    const double threshold = collapse_threshold(ref.num_classes);
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        std::ifstream in(dirs[i] / "summary.json");
        if (!in) throw IoError("compare: cannot open " + (dirs[i] / "summary.json").string());
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("compare: bad summary.json in " + dirs[i].string() + ": " + e.what());
        }
        ComparisonRow row;
        row.dir = dirs[i];
        row.imbalance = configs[i].imbalance;
        row.beta = configs[i].partition.beta;
        row.cells.resize(table.algorithms.size());
        for (const auto& alg : doc.at("algorithms")) {
            const std::string name = alg.at("name").get<std::string>();
            const auto at = std::find(table.algorithms.begin(), table.algorithms.end(), name) -
                            table.algorithms.begin();
            ComparisonCell& cell = row.cells[static_cast<std::size_t>(at)];
            cell.algorithm = name;
            cell.mean = alg.at("mean_final_accuracy").get<double>();
            cell.std_dev = alg.at("std_final_accuracy").get<double>();
            cell.failed = alg.at("failed_trials").get<std::size_t>();
            cell.trials = alg.at("trials").size();
            cell.collapsed = cell.trials > cell.failed && cell.mean < threshold;
        }
        table.rows.push_back(std::move(row));
    }

    std::sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) {
        if (a.imbalance != b.imbalance) return a.imbalance > b.imbalance;
        if (a.beta != b.beta) return a.beta < b.beta;
        return a.dir.string() < b.dir.string();
    });
    return table;
}

namespace detail {

inline std::string cell_text(const ComparisonCell& cell) {
    if (cell.algorithm.empty()) return "-";
    if (cell.trials > 0 && cell.failed == cell.trials) return "failed";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f+-%.2f", 100.0 * cell.mean, 100.0 * cell.std_dev);
    // Collapsed cells are underlined, matching the usual table convention for
    // non-converged runs.
    return cell.collapsed ? "_" + std::string(buf) + "_" : std::string(buf);
}

}  // namespace detail

inline std::string format_comparison_text(const ComparisonTable& table) {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> head{"IF", "beta"};
    head.insert(head.end(), table.algorithms.begin(), table.algorithms.end());
    grid.push_back(head);
    for (const auto& row : table.rows) {
        char num[32];
        std::vector<std::string> line;
        std::snprintf(num, sizeof(num), "%g", row.imbalance);
        line.emplace_back(num);
        std::snprintf(num, sizeof(num), "%g", row.beta);
        line.emplace_back(num);
        for (const auto& cell : row.cells) line.push_back(detail::cell_text(cell));
        grid.push_back(std::move(line));
    }
    std::vector<std::size_t> width(grid.front().size(), 0);
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            width[c] = std::max(width[c], line[c].size());
        }
    }
    std::string out;
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            out += line[c];
            if (c + 1 < line.size()) out += std::string(width[c] - line[c].size() + 2, ' ');
        }
        out += '\n';
    }
    return out;
}

inline std::string format_comparison_csv(const ComparisonTable& table) {
    std::string out = "imbalance,beta,algorithm,mean_final_accuracy,std_final_accuracy,"
                      "trials,failed,collapsed\n";
    for (const auto& row : table.rows) {
        for (const auto& cell : row.cells) {
            if (cell.algorithm.empty()) continue;
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%s,%.17g,%.17g,%zu,%zu,%d\n",
                          row.imbalance, row.beta, cell.algorithm.c_str(), cell.mean,
                          cell.std_dev, cell.trials, cell.failed, cell.collapsed ? 1 : 0);
            out += buf;
        }
    }
    return out;
}

}  // namespace fedwcm
