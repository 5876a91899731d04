#ifndef CONVACT_EVAL_HPP
#define CONVACT_EVAL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "convact/corpus.hpp"
#include "convact/model.hpp"
#include "convact/pipeline.hpp"

namespace convact {

struct WilcoxonResult {
    double statistic = 0.0;   // min of the positive/negative rank sums
    double p_value = 1.0;     // two-sided
    std::size_t n_effective = 0;  // pairs with non-zero difference
    bool all_zero = false;
    bool exact = false;       // exact null distribution vs normal approximation
};

// Paired signed-rank test. Zero differences dropped, tied ranks averaged.
// Exact two-sided p by enumeration of the null distribution when
// n_effective <= 25, normal approximation with continuity correction (and
// tie-corrected variance) above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x,
                                    const std::vector<double>& y);

struct ConfusionCell {
    int gold = 0;
    int predicted = 0;
    std::size_t count = 0;
};

struct ConfusionReport {
    std::vector<std::vector<std::size_t>> matrix;  // gold x predicted
    std::vector<ConfusionCell> top_confusions;     // off-diagonal, desc by count
    double accuracy() const;
};

ConfusionReport confusion(const std::vector<int>& gold, const std::vector<int>& predicted,
                          int n_labels);

enum class Task { Speech, Search };
std::string task_name(Task t);

struct AblationRow {
    std::vector<Channel> channels;
    std::string combo_name;           // e.g. "meta+linguistic+bert"
    std::vector<double> accuracies;   // one per seed
    double maximum = 0.0;
    double median = 0.0;
};

struct AblationReport {
    Task task = Task::Speech;
    std::vector<AblationRow> rows;
    std::vector<std::uint64_t> seeds;
    // significance[i][j]: Wilcoxon p for rows i vs j (1.0 on the diagonal)
    std::vector<std::vector<double>> significance;
    std::size_t best_by_median = 0;
    std::size_t best_by_max = 0;
    std::string config_json;  // snapshot of the AdnnConfig used
};

std::string combo_name(const std::vector<Channel>& channels);

// All seven non-empty channel subsets in table order.
std::vector<std::vector<Channel>> full_ablation_combos();

struct AblationOptions {
    std::vector<std::vector<Channel>> combos;
    std::vector<std::uint64_t> seeds;
    double split_ratio = 0.8;
    AdnnConfig config;     // channels field is overridden per combo
    int jobs = 1;
};

// Split -> train -> test accuracy for every (combo, seed) cell. Cells are
// independent and run on up to `jobs` threads; results are deterministic.
AblationReport ablate(const std::vector<SpeechInstance>& instances, Task task,
                      const FeatureSchema& schema_template, const Providers& providers,
                      const AblationOptions& options);
AblationReport ablate_search(const std::vector<SearchInstance>& instances,
                             const FeatureSchema& schema_template, const Providers& providers,
                             const AblationOptions& options);

// TSV + Markdown tables and SVG/PNG bar charts.
void render_ablation_report(const AblationReport& report, const std::string& out_dir);
void render_stats_report(const CorpusStats& stats, const std::string& out_dir);

}  // namespace convact

#endif
