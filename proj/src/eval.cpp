#include "convact/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "convact/errors.hpp"
#include "convact/plot.hpp"

namespace convact {

namespace fs = std::filesystem;

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x,
                                    const std::vector<double>& y) {
    if (x.size() != y.size()) throw InvalidArgument("paired vectors differ in length");
    if (x.empty()) throw InvalidArgument("empty input to signed-rank test");

    std::vector<double> diffs;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        if (d != 0.0) diffs.push_back(d);
    }
    WilcoxonResult res;
    res.n_effective = diffs.size();
    if (diffs.empty()) {
        res.all_zero = true;
        res.exact = true;
        res.p_value = 1.0;
        return res;
    }

    const std::size_t n = diffs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&diffs](std::size_t a, std::size_t b) {
        return std::fabs(diffs[a]) < std::fabs(diffs[b]);
    });

    // Doubled ranks keep tie-averaged ranks integral.
    std::vector<long> rank2(n, 0);
    std::vector<std::size_t> tie_sizes;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n &&
               std::fabs(diffs[order[j + 1]]) == std::fabs(diffs[order[i]]))
            ++j;
        long avg2 = static_cast<long>(i + j + 2);  // 2 * mean of ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = avg2;
        tie_sizes.push_back(j - i + 1);
        i = j + 1;
    }

    long w_plus2 = 0, total2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
        total2 += rank2[k];
        if (diffs[k] > 0.0) w_plus2 += rank2[k];
    }
    long w_minus2 = total2 - w_plus2;
    long w_min2 = std::min(w_plus2, w_minus2);
    res.statistic = static_cast<double>(w_min2) / 2.0;

    if (n <= 25) {
        // Null distribution of the doubled positive-rank sum by convolution.
        res.exact = true;
        std::vector<double> dp(static_cast<std::size_t>(total2) + 1, 0.0);
        dp[0] = 1.0;
        long reach = 0;
        for (std::size_t k = 0; k < n; ++k) {
            long r = rank2[k];
            for (long s = reach; s >= 0; --s)
                if (dp[static_cast<std::size_t>(s)] > 0.0)
                    dp[static_cast<std::size_t>(s + r)] += dp[static_cast<std::size_t>(s)];
            reach += r;
        }
        const double denom = std::pow(2.0, static_cast<double>(n));
        double lower = 0.0, upper = 0.0;
        for (long s = 0; s <= w_min2; ++s) lower += dp[static_cast<std::size_t>(s)];
        for (long s = total2 - w_min2; s <= total2; ++s)
            upper += dp[static_cast<std::size_t>(s)];
        res.p_value = std::min(1.0, (lower + upper) / denom);
    } else {
        const double nd = static_cast<double>(n);
        const double mean = nd * (nd + 1.0) / 4.0;
        double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0;
        for (std::size_t t : tie_sizes) {
            double td = static_cast<double>(t);
            var -= (td * td * td - td) / 48.0;
        }
        const double w = static_cast<double>(w_plus2) / 2.0;
        double z = 0.0;
        if (var > 0.0) {
            double cc = (w > mean) ? -0.5 : (w < mean ? 0.5 : 0.0);
            z = (w - mean + cc) / std::sqrt(var);
        }
        res.p_value = std::min(1.0, std::erfc(std::fabs(z) / std::sqrt(2.0)));
    }
    return res;
}

double ConfusionReport::accuracy() const {
    std::size_t diag = 0, total = 0;
    for (std::size_t g = 0; g < matrix.size(); ++g)
        for (std::size_t p = 0; p < matrix[g].size(); ++p) {
            total += matrix[g][p];
            if (g == p) diag += matrix[g][p];
        }
    return total ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
}

ConfusionReport confusion(const std::vector<int>& gold, const std::vector<int>& predicted,
                          int n_labels) {
    if (gold.size() != predicted.size())
        throw InvalidArgument("gold and predicted differ in length");
    ConfusionReport rep;
    rep.matrix.assign(static_cast<std::size_t>(n_labels),
                      std::vector<std::size_t>(static_cast<std::size_t>(n_labels), 0));
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0 || gold[i] >= n_labels || predicted[i] < 0 || predicted[i] >= n_labels)
            throw InvalidArgument("label out of range in confusion input");
        ++rep.matrix[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
    }
    for (int g = 0; g < n_labels; ++g)
        for (int p = 0; p < n_labels; ++p)
            if (g != p && rep.matrix[g][p] > 0)
                rep.top_confusions.push_back({g, p, rep.matrix[g][p]});
    std::sort(rep.top_confusions.begin(), rep.top_confusions.end(),
              [](const ConfusionCell& a, const ConfusionCell& b) {
                  if (a.count != b.count) return a.count > b.count;
                  if (a.gold != b.gold) return a.gold < b.gold;
                  return a.predicted < b.predicted;
              });
    return rep;
}

std::string task_name(Task t) { return t == Task::Speech ? "speech" : "search"; }

std::string combo_name(const std::vector<Channel>& channels) {
    std::string out;
    for (Channel c : canonical_channels(channels)) {
        if (!out.empty()) out += '+';
        out += channel_name(c);
    }
    return out;
}

std::vector<std::vector<Channel>> full_ablation_combos() {
    using C = Channel;
    return {{C::Embedding},
            {C::Linguistic},
            {C::Meta},
            {C::Linguistic, C::Embedding},
            {C::Meta, C::Embedding},
            {C::Meta, C::Linguistic},
            {C::Meta, C::Linguistic, C::Embedding}};
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n == 0) return 0.0;
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

struct RawInstance {
    Locator locator;
    std::string text;
    MetadataInputs meta;
    int label = 0;
};

AblationReport run_ablation(const std::vector<RawInstance>& raw, Task task, int n_classes,
                            const FeatureSchema& schema_template, const Providers& providers,
                            const AblationOptions& options) {
    if (options.combos.empty() || options.seeds.empty())
        throw InvalidArgument("ablation needs combos and seeds");
    if (raw.size() < 4) throw InvalidArgument("too few instances for ablation");

    std::vector<Channel> needed;
    for (const auto& combo : options.combos)
        for (Channel c : combo)
            if (std::find(needed.begin(), needed.end(), c) == needed.end()) needed.push_back(c);

    // Seed-independent channels are encoded once, up front (this also keeps
    // stateful providers out of the worker threads).
    std::vector<LinguisticMatrix> ling(raw.size());
    std::vector<Eigen::MatrixXd> emb(raw.size());
    const bool want_ling =
        std::find(needed.begin(), needed.end(), Channel::Linguistic) != needed.end();
    const bool want_emb =
        std::find(needed.begin(), needed.end(), Channel::Embedding) != needed.end();
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (want_ling) {
            if (!providers.annotator) throw InvalidArgument("linguistic combo needs an annotator");
            if (const auto* pre = dynamic_cast<const PrecomputedAnnotator*>(providers.annotator))
                pre->set_key(raw[i].locator.session_id, raw[i].locator.event_index);
            ling[i] = encode_linguistic(providers.annotator->annotate(raw[i].text),
                                        schema_template.linguistic);
        }
        if (want_emb) {
            if (!providers.encoder) throw InvalidArgument("bert combo needs an encoder");
            emb[i] = providers.encoder->encode(raw[i].text);
        }
    }

    std::vector<int> labels;
    std::vector<MetadataInputs> metas;
    for (const auto& r : raw) {
        labels.push_back(r.label);
        metas.push_back(r.meta);
    }

    AblationReport report;
    report.task = task;
    report.seeds = options.seeds;
    report.config_json = options.config.to_json();
    report.rows.resize(options.combos.size());
    for (std::size_t ci = 0; ci < options.combos.size(); ++ci) {
        report.rows[ci].channels = canonical_channels(options.combos[ci]);
        report.rows[ci].combo_name = combo_name(options.combos[ci]);
        report.rows[ci].accuracies.assign(options.seeds.size(), 0.0);
    }

    std::atomic<std::size_t> next_seed{0};
    auto worker = [&]() {
        while (true) {
            std::size_t si = next_seed.fetch_add(1);
            if (si >= options.seeds.size()) break;
            std::uint64_t seed = options.seeds[si];
            Split split = stratified_split(labels, seed, options.split_ratio);

            FeatureSchema schema = schema_template;
            fit_standardizer(schema, metas, split.train);

            std::vector<MetadataVector> meta_enc(raw.size());
            bool want_meta =
                std::find(needed.begin(), needed.end(), Channel::Meta) != needed.end();
            if (want_meta)
                for (std::size_t i = 0; i < raw.size(); ++i)
                    meta_enc[i] = encode_metadata(metas[i], schema.metadata);

            for (std::size_t ci = 0; ci < options.combos.size(); ++ci) {
                const auto combo = canonical_channels(options.combos[ci]);
                std::vector<ChannelSet> instances(raw.size());
                for (std::size_t i = 0; i < raw.size(); ++i) {
                    instances[i].label = raw[i].label;
                    for (Channel c : combo) {
                        if (c == Channel::Meta) instances[i].meta = meta_enc[i];
                        if (c == Channel::Linguistic) instances[i].linguistic = ling[i];
                        if (c == Channel::Embedding) instances[i].embedding = emb[i];
                    }
                }
                AdnnConfig cfg = options.config;
                cfg.channels = combo;
                cfg.n_classes = n_classes;
                cfg.seed = seed;
                std::vector<ChannelSet> train_set;
                for (std::size_t i : split.train) train_set.push_back(instances[i]);
                AdnnModel model = AdnnModel::train(train_set, cfg, schema);
                std::size_t correct = 0;
                for (std::size_t i : split.test)
                    if (model.predict(instances[i]).label == raw[i].label) ++correct;
                report.rows[ci].accuracies[si] =
                    static_cast<double>(correct) / static_cast<double>(split.test.size());
            }
        }
    };
    int jobs = std::max(1, options.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    for (auto& row : report.rows) {
        row.maximum = *std::max_element(row.accuracies.begin(), row.accuracies.end());
        row.median = median_of(row.accuracies);
    }
    report.best_by_median = 0;
    report.best_by_max = 0;
    for (std::size_t ci = 1; ci < report.rows.size(); ++ci) {
        if (report.rows[ci].median > report.rows[report.best_by_median].median)
            report.best_by_median = ci;
        if (report.rows[ci].maximum > report.rows[report.best_by_max].maximum)
            report.best_by_max = ci;
    }
    report.significance.assign(report.rows.size(),
                               std::vector<double>(report.rows.size(), 1.0));
    for (std::size_t a = 0; a < report.rows.size(); ++a)
        for (std::size_t b = a + 1; b < report.rows.size(); ++b) {
            double p = wilcoxon_signed_rank(report.rows[a].accuracies,
                                            report.rows[b].accuracies)
                           .p_value;
            report.significance[a][b] = p;
            report.significance[b][a] = p;
        }
    return report;
}

}  // namespace

AblationReport ablate(const std::vector<SpeechInstance>& instances, Task task,
                      const FeatureSchema& schema_template, const Providers& providers,
                      const AblationOptions& options) {
    std::vector<RawInstance> raw;
    for (const auto& s : instances)
        raw.push_back({s.locator, s.text, s.meta, static_cast<int>(s.gold)});
    return run_ablation(raw, task, static_cast<int>(kNumSpeechActs), schema_template, providers,
                        options);
}

AblationReport ablate_search(const std::vector<SearchInstance>& instances,
                             const FeatureSchema& schema_template, const Providers& providers,
                             const AblationOptions& options) {
    std::vector<RawInstance> raw;
    for (const auto& s : instances)
        raw.push_back({s.locator, s.context_text, s.meta, static_cast<int>(s.gold)});
    return run_ablation(raw, Task::Search, static_cast<int>(kNumSearchActions), schema_template,
                        providers, options);
}

void render_ablation_report(const AblationReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    char buf[64];

    std::ofstream tsv(out_dir + "/ablation_report.tsv", std::ios::binary);
    if (!tsv) throw IoError("cannot write ablation_report.tsv");
    tsv << "combo\tseed\taccuracy\n";
    for (const auto& row : report.rows)
        for (std::size_t si = 0; si < report.seeds.size(); ++si) {
            std::snprintf(buf, sizeof(buf), "%.6f", row.accuracies[si]);
            tsv << row.combo_name << '\t' << report.seeds[si] << '\t' << buf << '\n';
        }

    std::ofstream sig(out_dir + "/significance.tsv", std::ios::binary);
    if (!sig) throw IoError("cannot write significance.tsv");
    sig << "combo";
    for (const auto& row : report.rows) sig << '\t' << row.combo_name;
    sig << '\n';
    for (std::size_t a = 0; a < report.rows.size(); ++a) {
        sig << report.rows[a].combo_name;
        for (std::size_t b = 0; b < report.rows.size(); ++b) {
            std::snprintf(buf, sizeof(buf), "%.6f", report.significance[a][b]);
            sig << '\t' << buf;
        }
        sig << '\n';
    }

    std::ofstream md(out_dir + "/summary.md", std::ios::binary);
    if (!md) throw IoError("cannot write summary.md");
    md << "# Ablation summary (" << task_name(report.task) << " task)\n\n";
    md << "| Feature Categories | Maximum | Median | |\n";
    md << "|--------------------|---------|--------|-|\n";
    const std::size_t best = report.best_by_median;
    for (std::size_t ci = 0; ci < report.rows.size(); ++ci) {
        const auto& row = report.rows[ci];
        bool significant = ci == best;
        for (std::size_t other = 0; significant && other < report.rows.size(); ++other)
            if (other != best && report.significance[best][other] >= 0.05) significant = false;
        char maxbuf[64], medbuf[64];
        std::snprintf(maxbuf, sizeof(maxbuf), "%.3f", row.maximum);
        std::snprintf(medbuf, sizeof(medbuf), "%.3f", row.median);
        md << "| " << row.combo_name << " | " << maxbuf << " | " << medbuf << " | "
           << (significant ? "#" : "") << " |\n";
    }
    md << "\n`#` marks the best-by-median combination when every pairwise "
          "comparison against it is significant at p<0.05.\n";
    md << "\nBest by median: `" << report.rows[report.best_by_median].combo_name
       << "`; best by maximum: `" << report.rows[report.best_by_max].combo_name << "`.\n";
    md << "\nSeeds: " << report.seeds.size() << "; full per-seed accuracies in "
       << "`ablation_report.tsv`, pairwise Wilcoxon p-values in `significance.tsv`.\n";
    md << "\n## Configuration\n\n```json\n" << report.config_json << "\n```\n";

    std::vector<std::string> labels;
    std::vector<double> medians;
    for (const auto& row : report.rows) {
        labels.push_back(row.combo_name);
        medians.push_back(row.median);
    }
    write_bar_chart(out_dir + "/accuracy_median", "Median accuracy per combination", labels,
                    medians);
}

void render_stats_report(const CorpusStats& stats, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream tsv(out_dir + "/corpus_stats.tsv", std::ios::binary);
    if (!tsv) throw IoError("cannot write corpus_stats.tsv");
    tsv << "kind\tkey\tcount\n";
    for (const auto& [k, v] : stats.speech_act_counts) tsv << "speech_act\t" << k << '\t' << v << '\n';
    for (const auto& [k, v] : stats.search_action_counts)
        tsv << "search_action\t" << k << '\t' << v << '\n';
    for (const auto& [k, v] : stats.speaker_counts) tsv << "speaker\t" << k << '\t' << v << '\n';
    for (const auto& [k, v] : stats.task_utterance_counts) tsv << "task\t" << k << '\t' << v << '\n';
    tsv << "total\tutterances\t" << stats.total_utterances << '\n';
    tsv << "total\tsearch_actions\t" << stats.total_actions << '\n';
    tsv << "total\tsessions\t" << stats.total_sessions << '\n';

    auto chart = [&out_dir](const std::string& base, const std::string& title,
                            const std::map<std::string, std::size_t>& counts) {
        if (counts.empty()) return;
        std::vector<std::string> labels;
        std::vector<double> values;
        for (const auto& [k, v] : counts) {
            labels.push_back(k);
            values.push_back(static_cast<double>(v));
        }
        write_bar_chart(out_dir + "/" + base, title, labels, values);
    };
    chart("speech_act_frequencies", "Speech act frequencies", stats.speech_act_counts);
    chart("search_action_frequencies", "Search action frequencies", stats.search_action_counts);
    chart("task_utterance_counts", "Utterances per task", stats.task_utterance_counts);
}

}  // namespace convact
