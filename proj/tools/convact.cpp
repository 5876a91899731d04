// convact: command-line front end for the conversational-act toolkit.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "convact/cor.hpp"
#include "convact/corpus.hpp"
#include "convact/errors.hpp"
#include "convact/eval.hpp"
#include "convact/features.hpp"
#include "convact/kappa.hpp"
#include "convact/model.hpp"
#include "convact/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace convact;

namespace {

constexpr const char* kVersion = "convact 1.0.0";

// Flat JSON config with dotted keys; CLI flags override file values.
struct FlatConfig {
    std::map<std::string, json> values;

    static FlatConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read config file " + path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw FormatError("config file " + path + ": " + e.what());
        }
        if (!j.is_object()) throw FormatError("config file must be a flat JSON object");
        FlatConfig cfg;
        for (auto& [k, v] : j.items()) {
            if (v.is_object() || v.is_array())
                throw FormatError("config key '" + k + "' is not scalar (use dotted keys)");
            cfg.values[k] = v;
        }
        return cfg;
    }

    // Applies the file value only when the CLI flag was not given.
    template <typename T>
    void fill(const CLI::App& app, const std::string& flag, const std::string& key, T& target) {
        auto it = values.find(key);
        if (it == values.end()) return;
        const auto* opt = app.get_option_no_throw(flag);
        if (opt && opt->count() > 0) return;
        try {
            target = it->second.get<T>();
        } catch (const json::exception&) {
            throw FormatError("config key '" + key + "' has the wrong type");
        }
    }
};

CorpusFormat parse_format(const std::string& name) {
    if (name == "tsv") return CorpusFormat::Tsv;
    if (name == "jsonl") return CorpusFormat::Jsonl;
    throw InvalidArgument("unknown corpus format '" + name + "' (expected tsv or jsonl)");
}

CorpusFormat sniff_format(const std::string& path, const std::string& flag_value) {
    if (!flag_value.empty()) return parse_format(flag_value);
    if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") return CorpusFormat::Jsonl;
    return CorpusFormat::Tsv;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        auto dots = part.find("..");
        if (dots != std::string::npos) {
            std::uint64_t lo = std::stoull(part.substr(0, dots));
            std::uint64_t hi = std::stoull(part.substr(dots + 2));
            if (hi < lo) throw InvalidArgument("seed range '" + part + "' is reversed");
            for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
        } else if (!part.empty()) {
            seeds.push_back(std::stoull(part));
        }
    }
    if (seeds.empty()) throw InvalidArgument("no seeds in '" + spec + "'");
    return seeds;
}

std::vector<Channel> parse_channel_list(const std::string& spec) {
    std::vector<Channel> out;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        auto c = parse_channel(part);
        if (!c) throw InvalidArgument("unknown channel '" + part + "'");
        out.push_back(*c);
    }
    if (out.empty()) throw InvalidArgument("channel subset must be non-empty");
    return canonical_channels(out);
}

// "full" or semicolon-separated combos of comma-separated channels.
std::vector<std::vector<Channel>> parse_combos(const std::string& spec) {
    if (spec == "full") return full_ablation_combos();
    std::vector<std::vector<Channel>> combos;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ';'))
        if (!part.empty()) combos.push_back(parse_channel_list(part));
    if (combos.empty()) throw InvalidArgument("no channel combinations in '" + spec + "'");
    return combos;
}

std::string cache_dir() {
    if (const char* env = std::getenv("CONVACT_CACHE")) return env;
    if (const char* home = std::getenv("HOME")) return std::string(home) + "/.cache/convact";
    return ".convact_cache";
}

// Embedding files are looked up as given, then under the cache directory.
std::string resolve_embeddings(const std::string& path) {
    if (fs::exists(path)) return path;
    fs::path cached = fs::path(cache_dir()) / path;
    if (fs::exists(cached)) return cached.string();
    throw IoError("embeddings file not found: " + path + " (also tried " + cached.string() + ")");
}

struct ProviderBundle {
    std::unique_ptr<Annotator> annotator;
    std::unique_ptr<TextEncoder> encoder;
    Providers providers;
};

ProviderBundle make_providers(const std::string& annotations_path,
                              const std::string& embeddings_path, int stub_width) {
    ProviderBundle b;
    if (annotations_path.empty())
        b.annotator = std::make_unique<FallbackAnnotator>();
    else
        b.annotator = std::make_unique<PrecomputedAnnotator>(annotations_path);
    if (embeddings_path.empty())
        b.encoder = std::make_unique<HashStubEncoder>(stub_width);
    else
        b.encoder = std::make_unique<FileEncoder>(resolve_embeddings(embeddings_path));
    b.providers = {b.annotator.get(), b.encoder.get()};
    return b;
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const std::map<std::string, json>& resolved,
                        const std::vector<std::uint64_t>& seeds,
                        std::optional<std::uint64_t> schema_hash) {
    fs::create_directories(out_dir);
    json m;
    m["version"] = kVersion;
    m["command"] = command;
    json cfg = json::object();
    for (const auto& [k, v] : resolved) cfg[k] = v;
    m["config"] = cfg;
    m["seeds"] = seeds;
    if (schema_hash) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(*schema_hash));
        m["schema_hash"] = buf;
    }
    m["cache_dir"] = cache_dir();
    std::ofstream out(out_dir + "/run_manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write run_manifest.json in " + out_dir);
    out << m.dump(2) << '\n';
}

// Shared model hyperparameter flags; returns the resolver to run post-parse.
struct ModelFlags {
    AdnnConfig cfg;

    void attach(CLI::App* cmd) {
        cmd->add_option("--hidden-units", cfg.hidden_units, "BiLSTM hidden units per direction");
        cmd->add_option("--attention-dim", cfg.attention_dim, "attention projection dimension");
        cmd->add_option("--dropout", cfg.dropout, "input dropout rate");
        cmd->add_option("--recurrent-dropout", cfg.recurrent_dropout, "recurrent dropout rate");
        cmd->add_option("--post-attention-dropout", cfg.post_attention_dropout,
                        "dropout on the fused context");
        cmd->add_option("--learning-rate", cfg.learning_rate, "Adam learning rate");
        cmd->add_option("--batch-size", cfg.batch_size, "mini-batch size");
        cmd->add_option("--epochs", cfg.epochs, "training epochs");
    }

    void resolve(const CLI::App& cmd, FlatConfig& file) {
        file.fill(cmd, "--hidden-units", "model.hidden_units", cfg.hidden_units);
        file.fill(cmd, "--attention-dim", "model.attention_dim", cfg.attention_dim);
        file.fill(cmd, "--dropout", "model.dropout", cfg.dropout);
        file.fill(cmd, "--recurrent-dropout", "model.recurrent_dropout", cfg.recurrent_dropout);
        file.fill(cmd, "--post-attention-dropout", "model.post_attention_dropout",
                  cfg.post_attention_dropout);
        file.fill(cmd, "--learning-rate", "model.learning_rate", cfg.learning_rate);
        file.fill(cmd, "--batch-size", "model.batch_size", cfg.batch_size);
        file.fill(cmd, "--epochs", "model.epochs", cfg.epochs);
    }

    void snapshot(std::map<std::string, json>& out) const {
        out["model.hidden_units"] = cfg.hidden_units;
        out["model.attention_dim"] = cfg.attention_dim;
        out["model.dropout"] = cfg.dropout;
        out["model.recurrent_dropout"] = cfg.recurrent_dropout;
        out["model.post_attention_dropout"] = cfg.post_attention_dropout;
        out["model.learning_rate"] = cfg.learning_rate;
        out["model.batch_size"] = cfg.batch_size;
        out["model.epochs"] = cfg.epochs;
    }
};

struct InstanceData {
    std::vector<Locator> locators;
    std::vector<std::string> texts;
    std::vector<MetadataInputs> metas;
    std::vector<int> labels;
    int n_classes = 0;
};

InstanceData collect_instances(const Corpus& corpus, Task task) {
    InstanceData d;
    if (task == Task::Speech) {
        d.n_classes = static_cast<int>(kNumSpeechActs);
        for (const auto& inst : make_speech_instances(corpus)) {
            d.locators.push_back(inst.locator);
            d.texts.push_back(inst.text);
            d.metas.push_back(inst.meta);
            d.labels.push_back(static_cast<int>(inst.gold));
        }
    } else {
        d.n_classes = static_cast<int>(kNumSearchActions);
        for (const auto& inst : make_search_instances(corpus, ActSource::Gold)) {
            d.locators.push_back(inst.locator);
            d.texts.push_back(inst.context_text);
            d.metas.push_back(inst.meta);
            d.labels.push_back(static_cast<int>(inst.gold));
        }
    }
    if (d.labels.empty()) throw InvalidArgument("corpus has no instances for this task");
    return d;
}

Task parse_task(const std::string& name) {
    if (name == "speech") return Task::Speech;
    if (name == "search") return Task::Search;
    throw InvalidArgument("unknown task '" + name + "' (expected speech or search)");
}

int cmd_corpus_validate(const std::string& in, const std::string& format) {
    Corpus corpus = load_corpus(in, sniff_format(in, format));
    ValidationReport report = validate(corpus);
    std::cout << report.violations.size() << " violations\n";
    for (const auto& v : report.violations)
        std::cout << v.session_id << '\t' << v.event_index << '\t' << v.message << '\n';
    return report.clean() ? 0 : 1;
}

int cmd_corpus_stats(const std::string& in, const std::string& format,
                     const std::string& out_dir) {
    Corpus corpus = load_corpus(in, sniff_format(in, format));
    CorpusStats s = stats(corpus);
    std::cout << "sessions\t" << s.total_sessions << "\nutterances\t" << s.total_utterances
              << "\nsearch_actions\t" << s.total_actions << '\n';
    for (const auto& [k, v] : s.speech_act_counts) std::cout << k << '\t' << v << '\n';
    for (const auto& [k, v] : s.search_action_counts) std::cout << k << '\t' << v << '\n';
    if (!out_dir.empty()) {
        render_stats_report(s, out_dir);
        write_run_manifest(out_dir, "corpus stats", {{"in", in}}, {}, std::nullopt);
    }
    return 0;
}

int cmd_kappa(const std::string& in, const std::string& labels_spec,
              const std::string& out_dir) {
    auto by_annotator = load_annotations(in);
    if (by_annotator.size() < 2) throw InvalidArgument("need at least two annotators");
    std::vector<std::string> label_set;
    if (labels_spec == "S") {
        for (auto a : all_speech_acts()) label_set.push_back(speech_act_code(a));
    } else if (labels_spec == "SR") {
        for (auto a : all_search_actions()) label_set.push_back(search_action_code(a));
    } else if (!labels_spec.empty()) {
        std::stringstream ss(labels_spec);
        std::string part;
        while (std::getline(ss, part, ','))
            if (!part.empty()) label_set.push_back(part);
    } else {
        std::set<std::string> seen;
        for (const auto& [_, labels] : by_annotator) seen.insert(labels.begin(), labels.end());
        label_set.assign(seen.begin(), seen.end());
    }
    AgreementTable table = mean_pairwise_agreement(by_annotator, label_set);
    std::cout << agreement_table_tsv(table);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream tsv(out_dir + "/agreement.tsv", std::ios::binary);
        tsv << agreement_table_tsv(table);
        std::ofstream md(out_dir + "/agreement.md", std::ios::binary);
        md << agreement_table_markdown(table);
        write_run_manifest(out_dir, "kappa", {{"in", in}, {"labels", labels_spec}}, {},
                           std::nullopt);
    }
    return 0;
}

int cmd_features_extract(const std::string& in, const std::string& format,
                         const std::string& out_dir, const std::string& channels_spec,
                         const ProviderBundle& bundle, std::uint64_t seed, double split_ratio) {
    Corpus corpus = load_corpus(in, sniff_format(in, format));
    auto channels = parse_channel_list(channels_spec);
    InstanceData data = collect_instances(corpus, Task::Speech);

    FeatureSchema schema = default_schema(corpus);
    schema.annotator_name = bundle.providers.annotator->name();
    schema.annotator_version = bundle.providers.annotator->version();
    schema.encoder_name = bundle.providers.encoder->name();
    schema.encoder_width = bundle.providers.encoder->width();
    Split split = stratified_split(data.labels, seed, split_ratio);
    fit_standardizer(schema, data.metas, split.train);

    fs::create_directories(out_dir);
    write_schema(schema, out_dir + "/schema.json");
    std::ofstream tsv(out_dir + "/features.tsv", std::ios::binary);
    if (!tsv) throw IoError("cannot write features.tsv");
    tsv << "session_id\tevent_index\tlabel\tn_tokens\tlinguistic_width\tmeta_dim\temb_rows\n";
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        ChannelSet cs = build_channels(data.texts[i], data.metas[i], data.labels[i], channels,
                                       schema, bundle.providers, &data.locators[i]);
        std::size_t n_tokens = cs.linguistic ? cs.linguistic->n_tokens : 0;
        long ling_w = cs.linguistic ? cs.linguistic->rows.cols() : 0;
        long meta_d = cs.meta ? cs.meta->flat().size() : 0;
        long emb_r = cs.embedding ? cs.embedding->rows() : 0;
        tsv << data.locators[i].session_id << '\t' << data.locators[i].event_index << '\t'
            << data.labels[i] << '\t' << n_tokens << '\t' << ling_w << '\t' << meta_d << '\t'
            << emb_r << '\n';
    }
    write_run_manifest(out_dir, "features extract",
                       {{"in", in}, {"channels", channels_spec}, {"seed", seed},
                        {"split_ratio", split_ratio}},
                       {seed}, schema.hash());
    std::cout << data.labels.size() << " instances extracted\n";
    return 0;
}

int cmd_train(const std::string& in, const std::string& format, const std::string& task_name_,
              const std::string& channels_spec, const std::string& out_dir,
              const ProviderBundle& bundle, AdnnConfig cfg, std::uint64_t seed,
              double split_ratio, std::map<std::string, json> snapshot) {
    Corpus corpus = load_corpus(in, sniff_format(in, format));
    Task task = parse_task(task_name_);
    InstanceData data = collect_instances(corpus, task);
    cfg.channels = parse_channel_list(channels_spec);
    cfg.n_classes = data.n_classes;
    cfg.seed = seed;
    cfg.check();

    FeatureSchema schema = default_schema(corpus);
    schema.annotator_name = bundle.providers.annotator->name();
    schema.annotator_version = bundle.providers.annotator->version();
    schema.encoder_name = bundle.providers.encoder->name();
    schema.encoder_width = bundle.providers.encoder->width();
    Split split = stratified_split(data.labels, seed, split_ratio);
    fit_standardizer(schema, data.metas, split.train);

    std::vector<ChannelSet> all(data.labels.size());
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        all[i] = build_channels(data.texts[i], data.metas[i], data.labels[i], cfg.channels,
                                schema, bundle.providers, &data.locators[i]);
    std::vector<ChannelSet> train_set;
    for (std::size_t i : split.train) train_set.push_back(all[i]);

    AdnnModel model = AdnnModel::train(train_set, cfg, schema);

    auto accuracy_on = [&](const std::vector<std::size_t>& idx) {
        std::size_t correct = 0;
        for (std::size_t i : idx)
            if (model.predict(all[i]).label == data.labels[i]) ++correct;
        return static_cast<double>(correct) / static_cast<double>(idx.size());
    };
    double train_acc = accuracy_on(split.train);
    double test_acc = accuracy_on(split.test);

    model.save(out_dir);
    snapshot["in"] = in;
    snapshot["task"] = task_name_;
    snapshot["channels"] = combo_name(cfg.channels);
    snapshot["train.seed"] = seed;
    snapshot["train.split_ratio"] = split_ratio;
    write_run_manifest(out_dir, "train", snapshot, {seed}, schema.hash());
    std::printf("train_accuracy\t%.6f\ntest_accuracy\t%.6f\n", train_acc, test_acc);
    return 0;
}

int cmd_ablate(const std::string& in, const std::string& format, const std::string& task_name_,
               const std::string& combos_spec, const std::string& seeds_spec,
               const std::string& out_dir, const ProviderBundle& bundle, AdnnConfig cfg,
               double split_ratio, int jobs, std::map<std::string, json> snapshot) {
    Corpus corpus = load_corpus(in, sniff_format(in, format));
    Task task = parse_task(task_name_);

    FeatureSchema schema = default_schema(corpus);
    schema.annotator_name = bundle.providers.annotator->name();
    schema.annotator_version = bundle.providers.annotator->version();
    schema.encoder_name = bundle.providers.encoder->name();
    schema.encoder_width = bundle.providers.encoder->width();

    AblationOptions options;
    options.combos = parse_combos(combos_spec);
    options.seeds = parse_seeds(seeds_spec);
    options.split_ratio = split_ratio;
    options.config = cfg;
    options.jobs = jobs;

    AblationReport report =
        task == Task::Speech
            ? ablate(make_speech_instances(corpus), task, schema, bundle.providers, options)
            : ablate_search(make_search_instances(corpus, ActSource::Gold), schema,
                            bundle.providers, options);
    render_ablation_report(report, out_dir);
    snapshot["in"] = in;
    snapshot["task"] = task_name_;
    snapshot["combos"] = combos_spec;
    snapshot["seeds"] = seeds_spec;
    snapshot["split_ratio"] = split_ratio;
    write_run_manifest(out_dir, "ablate", snapshot, options.seeds, schema.hash());
    std::cout << report.rows.size() << " combinations x " << options.seeds.size()
              << " seeds; best by median: " << report.rows[report.best_by_median].combo_name
              << '\n';
    return 0;
}

int cmd_pipeline_run(const std::string& in, const std::string& format,
                     const std::string& speech_dir, const std::string& search_dir,
                     const std::string& out_dir, const ProviderBundle& bundle) {
    Corpus corpus = load_corpus(in, sniff_format(in, format));
    AdnnModel speech_model = AdnnModel::load(speech_dir);
    AdnnModel search_model = AdnnModel::load(search_dir);
    PipelinePredictions preds = run_two_stage(corpus, speech_model, search_model,
                                              bundle.providers);
    fs::create_directories(out_dir);
    write_predictions_tsv(preds, out_dir + "/predictions.tsv");
    write_run_manifest(out_dir, "pipeline run",
                       {{"in", in}, {"speech_model", speech_dir}, {"search_model", search_dir}},
                       {speech_model.config().seed, search_model.config().seed},
                       speech_model.schema().hash());
    std::size_t search_rows = 0;
    for (const auto& r : preds.rows)
        if (r.stage == "search") ++search_rows;
    std::cout << preds.rows.size() << " predictions (" << search_rows << " search)\n";
    return 0;
}

int cmd_synth(std::size_t sessions, std::uint64_t seed, int turns, const std::string& out,
              const std::string& format, const std::string& grammar_path) {
    CorGrammar grammar = grammar_path.empty() ? default_grammar() : load_grammar(grammar_path);
    Corpus corpus = generate_corpus(sessions, seed, turns, grammar);
    write_corpus(corpus, out, sniff_format(out, format));
    std::cout << corpus.sessions.size() << " sessions, " << corpus.utterance_count()
              << " utterances, " << corpus.action_count() << " search actions\n";
    return 0;
}

int cmd_report(const std::string& in, const std::string& format, const std::string& out_dir) {
    Corpus corpus = load_corpus(in, sniff_format(in, format));
    render_stats_report(stats(corpus), out_dir);
    write_run_manifest(out_dir, "report", {{"in", in}}, {}, std::nullopt);
    std::cout << "report written to " << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conversational speech-act and search-action toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    std::string config_path;
    app.add_option("--config", config_path, "flat JSON config file (dotted keys)");

    std::string in, format, out_dir, task = "speech", channels = "meta,linguistic";
    std::string combos = "full", seeds_spec = "1..30", labels_spec;
    std::string annotations_path, embeddings_path, grammar_path;
    std::string speech_model_dir, search_model_dir;
    std::uint64_t seed = 1, synth_seed = 1;
    double split_ratio = 0.8;
    int jobs = 1, stub_width = 8, synth_turns = 12;
    std::size_t synth_sessions = 10;

    auto add_provider_flags = [&](CLI::App* cmd) {
        cmd->add_option("--annotations", annotations_path, "precomputed annotation TSV");
        cmd->add_option("--embeddings", embeddings_path,
                        "precomputed embedding TSV (also probed under CONVACT_CACHE)");
        cmd->add_option("--stub-width", stub_width, "hash-stub embedding width");
    };

    auto* corpus_cmd = app.add_subcommand("corpus", "corpus inspection");
    corpus_cmd->require_subcommand(1);
    auto* validate_cmd = corpus_cmd->add_subcommand("validate", "check corpus invariants");
    validate_cmd->add_option("--in", in, "corpus file")->required();
    validate_cmd->add_option("--format", format, "tsv|jsonl (default: by extension)");
    auto* stats_cmd = corpus_cmd->add_subcommand("stats", "label/speaker/task counts");
    stats_cmd->add_option("--in", in, "corpus file")->required();
    stats_cmd->add_option("--format", format, "tsv|jsonl");
    stats_cmd->add_option("--out", out_dir, "also render charts + TSV to this directory");

    auto* kappa_cmd = app.add_subcommand("kappa", "inter-annotator agreement");
    kappa_cmd->add_option("--in", in, "annotation TSV (item_id, annotator_id, label)")
        ->required();
    kappa_cmd->add_option("--labels", labels_spec, "S | SR | comma list (default: observed)");
    kappa_cmd->add_option("--out", out_dir, "write agreement.tsv/.md here");

    auto* features_cmd = app.add_subcommand("features", "feature extraction");
    features_cmd->require_subcommand(1);
    auto* extract_cmd = features_cmd->add_subcommand("extract", "write schema + feature table");
    extract_cmd->add_option("--in", in, "corpus file")->required();
    extract_cmd->add_option("--format", format, "tsv|jsonl");
    extract_cmd->add_option("--out", out_dir, "output directory")->required();
    extract_cmd->add_option("--channels", channels, "comma list: meta,linguistic,bert");
    extract_cmd->add_option("--seed", seed, "standardizer split seed");
    extract_cmd->add_option("--split-ratio", split_ratio, "train fraction");
    add_provider_flags(extract_cmd);

    ModelFlags train_model, ablate_model;
    auto* train_cmd = app.add_subcommand("train", "train one model");
    train_cmd->add_option("--in", in, "corpus file")->required();
    train_cmd->add_option("--format", format, "tsv|jsonl");
    train_cmd->add_option("--task", task, "speech|search");
    train_cmd->add_option("--channels", channels, "comma list: meta,linguistic,bert");
    train_cmd->add_option("--out", out_dir, "model output directory")->required();
    train_cmd->add_option("--seed", seed, "training seed");
    train_cmd->add_option("--split-ratio", split_ratio, "train fraction");
    add_provider_flags(train_cmd);
    train_model.attach(train_cmd);

    auto* ablate_cmd = app.add_subcommand("ablate", "channel ablation over seeds");
    ablate_cmd->add_option("--in", in, "corpus file")->required();
    ablate_cmd->add_option("--format", format, "tsv|jsonl");
    ablate_cmd->add_option("--task", task, "speech|search");
    ablate_cmd->add_option("--channels", combos, "'full' or combos like meta;meta,linguistic");
    ablate_cmd->add_option("--seeds", seeds_spec, "e.g. 1..30 or 1,2,5");
    ablate_cmd->add_option("--out", out_dir, "report directory")->required();
    ablate_cmd->add_option("--split-ratio", split_ratio, "train fraction");
    ablate_cmd->add_option("--jobs", jobs, "worker thread cap");
    add_provider_flags(ablate_cmd);
    ablate_model.attach(ablate_cmd);

    auto* pipeline_cmd = app.add_subcommand("pipeline", "two-stage runs");
    pipeline_cmd->require_subcommand(1);
    auto* run_cmd = pipeline_cmd->add_subcommand("run", "speech acts then search actions");
    run_cmd->add_option("--in", in, "corpus file")->required();
    run_cmd->add_option("--format", format, "tsv|jsonl");
    run_cmd->add_option("--speech-model", speech_model_dir, "stage-1 model dir")->required();
    run_cmd->add_option("--search-model", search_model_dir, "stage-2 model dir")->required();
    run_cmd->add_option("--out", out_dir, "output directory")->required();
    add_provider_flags(run_cmd);

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    synth_cmd->add_option("--sessions", synth_sessions, "number of sessions");
    synth_cmd->add_option("--seed", synth_seed, "base seed");
    synth_cmd->add_option("--turns", synth_turns, "target turns per session");
    synth_cmd->add_option("--out", in, "output corpus path")->required();
    synth_cmd->add_option("--format", format, "tsv|jsonl");
    synth_cmd->add_option("--grammar", grammar_path, "grammar JSON (default: built-in)");

    auto* report_cmd = app.add_subcommand("report", "render corpus stats report");
    report_cmd->add_option("--in", in, "corpus file")->required();
    report_cmd->add_option("--format", format, "tsv|jsonl");
    report_cmd->add_option("--out", out_dir, "report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << e.what() << '\n' << app.help() << '\n';
        return 2;
    }

    try {
        FlatConfig file_cfg;
        if (!config_path.empty()) file_cfg = FlatConfig::load(config_path);

        auto resolve_common = [&](CLI::App& cmd) {
            file_cfg.fill(cmd, "--task", "run.task", task);
            file_cfg.fill(cmd, "--channels", "run.channels", channels);
            file_cfg.fill(cmd, "--seed", "train.seed", seed);
            file_cfg.fill(cmd, "--split-ratio", "train.split_ratio", split_ratio);
            file_cfg.fill(cmd, "--annotations", "provider.annotations", annotations_path);
            file_cfg.fill(cmd, "--embeddings", "provider.embeddings", embeddings_path);
            file_cfg.fill(cmd, "--stub-width", "provider.stub_width", stub_width);
        };

        if (validate_cmd->parsed()) return cmd_corpus_validate(in, format);
        if (stats_cmd->parsed()) return cmd_corpus_stats(in, format, out_dir);
        if (kappa_cmd->parsed()) return cmd_kappa(in, labels_spec, out_dir);
        if (extract_cmd->parsed()) {
            resolve_common(*extract_cmd);
            auto bundle = make_providers(annotations_path, embeddings_path, stub_width);
            return cmd_features_extract(in, format, out_dir, channels, bundle, seed,
                                        split_ratio);
        }
        if (train_cmd->parsed()) {
            resolve_common(*train_cmd);
            train_model.resolve(*train_cmd, file_cfg);
            auto bundle = make_providers(annotations_path, embeddings_path, stub_width);
            std::map<std::string, json> snapshot;
            train_model.snapshot(snapshot);
            return cmd_train(in, format, task, channels, out_dir, bundle, train_model.cfg, seed,
                             split_ratio, snapshot);
        }
        if (ablate_cmd->parsed()) {
            resolve_common(*ablate_cmd);
            file_cfg.fill(*ablate_cmd, "--channels", "ablate.channels", combos);
            file_cfg.fill(*ablate_cmd, "--seeds", "ablate.seeds", seeds_spec);
            file_cfg.fill(*ablate_cmd, "--jobs", "run.jobs", jobs);
            ablate_model.resolve(*ablate_cmd, file_cfg);
            auto bundle = make_providers(annotations_path, embeddings_path, stub_width);
            std::map<std::string, json> snapshot;
            ablate_model.snapshot(snapshot);
            return cmd_ablate(in, format, task, combos, seeds_spec, out_dir, bundle,
                              ablate_model.cfg, split_ratio, jobs, snapshot);
        }
        if (run_cmd->parsed()) {
            resolve_common(*run_cmd);
            auto bundle = make_providers(annotations_path, embeddings_path, stub_width);
            return cmd_pipeline_run(in, format, speech_model_dir, search_model_dir, out_dir,
                                    bundle);
        }
        if (synth_cmd->parsed())
            return cmd_synth(synth_sessions, synth_seed, synth_turns, in, format, grammar_path);
        if (report_cmd->parsed()) return cmd_report(in, format, out_dir);

        std::cerr << app.help() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
}
