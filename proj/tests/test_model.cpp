#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "convact/errors.hpp"
#include "convact/model.hpp"
#include "convact/pipeline.hpp"

using namespace convact;
namespace fs = std::filesystem;

namespace {

const std::string kFixture = std::string(FIXTURE_DIR) + "/mini.tsv";

FeatureSchema fitted_schema(const Corpus& corpus) {
    FeatureSchema s = default_schema(corpus);
    s.metadata.utterance_number = StandardizerMoments{3.0, 1.5};
    s.metadata.duration = StandardizerMoments{2.0, 1.0};
    return s;
}

// All channels populated, from the fixture corpus.
std::vector<ChannelSet> fixture_instances(const FeatureSchema& schema) {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FallbackAnnotator ann;
    HashStubEncoder enc(6);
    Providers providers{&ann, &enc};
    std::vector<ChannelSet> out;
    for (const auto& inst : make_speech_instances(corpus))
        out.push_back(build_channels(inst.text, inst.meta, static_cast<int>(inst.gold) % 3,
                                     {Channel::Meta, Channel::Linguistic, Channel::Embedding},
                                     schema, providers, &inst.locator));
    return out;
}

// Two linguistically separable classes.
std::vector<ChannelSet> toy_dataset(const FeatureSchema& schema, int n_per_class) {
    FallbackAnnotator ann;
    Providers providers{&ann, nullptr};
    std::vector<ChannelSet> out;
    for (int i = 0; i < n_per_class; ++i) {
        MetadataInputs meta;
        meta.utterance_number = static_cast<double>(i + 1);
        meta.duration_s = 1.0 + 0.1 * i;
        meta.system_id = "sys-a";
        meta.complexity = "0";
        // Class 0: in-lexicon statement. Class 1: OOV question.
        out.push_back(build_channels("the price is fine .", meta, 0,
                                     {Channel::Meta, Channel::Linguistic}, schema, providers));
        meta.speaker = Speaker::Agent;
        out.push_back(build_channels("bergamot lavender cologne ?", meta, 1,
                                     {Channel::Meta, Channel::Linguistic}, schema, providers));
    }
    return out;
}

AdnnConfig small_config(int n_classes, std::vector<Channel> channels) {
    AdnnConfig cfg;
    cfg.hidden_units = 6;
    cfg.attention_dim = 4;
    cfg.n_classes = n_classes;
    cfg.batch_size = 8;
    cfg.epochs = 5;
    cfg.channels = std::move(channels);
    return cfg;
}

}  // namespace

TEST_CASE("attention: single timestep gets weight 1 and returns its row") {
    Eigen::MatrixXd H(1, 3);
    H << 0.2, -0.7, 1.4;
    Eigen::MatrixXd W = Eigen::MatrixXd::Random(2, 3);
    Eigen::VectorXd v = Eigen::VectorXd::Random(2);
    AttentionResult r = additive_attention(H, W, v);
    REQUIRE(r.weights.size() == 1);
    CHECK(r.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((r.context - H.row(0).transpose()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("attention: identical rows get uniform weights") {
    Eigen::MatrixXd H(4, 3);
    for (int t = 0; t < 4; ++t) H.row(t) << 0.5, -0.25, 0.1;
    Eigen::MatrixXd W = Eigen::MatrixXd::Random(2, 3);
    Eigen::VectorXd v = Eigen::VectorXd::Random(2);
    AttentionResult r = additive_attention(H, W, v);
    for (int t = 0; t < 4; ++t) CHECK(r.weights[t] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("attention matches an inline recomputation on a 3x2 example") {
    Eigen::MatrixXd H(3, 2);
    H << 1.0, -0.5, 0.25, 0.75, -1.25, 0.5;
    Eigen::MatrixXd W(2, 2);
    W << 0.3, -0.6, 0.9, 0.2;
    Eigen::VectorXd v(2);
    v << 0.7, -0.4;

    // Independent recomputation of s_t = v . tanh(W h_t) and the softmax.
    Eigen::Vector3d s;
    for (int t = 0; t < 3; ++t)
        s[t] = v.dot((W * H.row(t).transpose()).array().tanh().matrix());
    Eigen::Vector3d e = (s.array() - s.maxCoeff()).exp();
    Eigen::Vector3d w = e / e.sum();
    Eigen::Vector2d ctx = Eigen::Vector2d::Zero();
    for (int t = 0; t < 3; ++t) ctx += w[t] * H.row(t).transpose();

    AttentionResult r = additive_attention(H, W, v);
    CHECK((r.weights - w).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((r.context - ctx).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("attention weights are a distribution on random inputs") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        int T = 1 + static_cast<int>(rng() % 12), d = 2 + static_cast<int>(rng() % 5);
        Eigen::MatrixXd H(T, d), W(3, d);
        Eigen::VectorXd v(3);
        for (int i = 0; i < T; ++i)
            for (int j = 0; j < d; ++j) H(i, j) = g(rng);
        for (int i = 0; i < 3; ++i) {
            v[i] = g(rng);
            for (int j = 0; j < d; ++j) W(i, j) = g(rng);
        }
        AttentionResult r = additive_attention(H, W, v);
        CHECK(r.weights.minCoeff() >= 0.0);
        CHECK(std::fabs(r.weights.sum() - 1.0) <= 1e-9);
    }
}

TEST_CASE("config validation rejects bad values") {
    AdnnConfig cfg;
    SUBCASE("negative dropout") { cfg.dropout = -0.1; }
    SUBCASE("dropout of one") { cfg.dropout = 1.0; }
    SUBCASE("zero hidden units") { cfg.hidden_units = 0; }
    SUBCASE("zero batch") { cfg.batch_size = 0; }
    SUBCASE("negative epochs") { cfg.epochs = -1; }
    SUBCASE("empty channels") { cfg.channels.clear(); }
    CHECK_THROWS_AS(cfg.check(), InvalidArgument);
}

TEST_CASE("config json round-trip") {
    AdnnConfig cfg;
    cfg.hidden_units = 17;
    cfg.learning_rate = 3e-4;
    cfg.channels = {Channel::Linguistic, Channel::Embedding};
    AdnnConfig back = AdnnConfig::from_json(cfg.to_json());
    CHECK(back.hidden_units == 17);
    CHECK(back.learning_rate == 3e-4);
    CHECK(back.channels == canonical_channels(cfg.channels));
    CHECK(back.seed == cfg.seed);
}

TEST_CASE("untrained model (epochs = 0) yields valid distributions") {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema schema = fitted_schema(corpus);
    auto instances = fixture_instances(schema);
    AdnnConfig cfg = small_config(3, {Channel::Meta, Channel::Linguistic, Channel::Embedding});
    cfg.epochs = 0;
    AdnnModel model = AdnnModel::train(instances, cfg, schema);
    CHECK(model.training_loss().empty());
    for (const auto& inst : instances) {
        Prediction p = model.predict(inst);
        CHECK(p.distribution.size() == 3);
        CHECK(p.distribution.minCoeff() >= 0.0);
        CHECK(std::fabs(p.distribution.sum() - 1.0) <= 1e-9);
        CHECK(p.label >= 0);
        CHECK(p.label < 3);
    }
}

TEST_CASE("argmax ties break toward the lowest class index") {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema schema = fitted_schema(corpus);
    auto instances = fixture_instances(schema);
    AdnnConfig cfg = small_config(3, {Channel::Meta});
    AdnnModel model(cfg, schema, {{Channel::Meta, 13}});
    for (Param* p : model.params()) p->value.setZero();
    Prediction p = model.predict(instances.front());
    CHECK(p.label == 0);
    for (int k = 0; k < 3; ++k)
        CHECK(p.distribution[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("prediction requires every configured channel") {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema schema = fitted_schema(corpus);
    auto instances = fixture_instances(schema);
    AdnnConfig cfg = small_config(3, {Channel::Meta, Channel::Embedding});
    cfg.epochs = 1;
    AdnnModel model = AdnnModel::train(instances, cfg, schema);
    ChannelSet missing = instances.front();
    missing.embedding.reset();
    CHECK_THROWS_AS(model.predict(missing), InvalidArgument);
}

TEST_CASE("training is deterministic in the seed and instance-order invariant") {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema schema = fitted_schema(corpus);
    auto instances = fixture_instances(schema);
    AdnnConfig cfg = small_config(3, {Channel::Meta, Channel::Linguistic});
    cfg.epochs = 3;
    cfg.seed = 9;

    AdnnModel a = AdnnModel::train(instances, cfg, schema);
    AdnnModel b = AdnnModel::train(instances, cfg, schema);
    auto reversed = instances;
    std::reverse(reversed.begin(), reversed.end());
    AdnnModel c = AdnnModel::train(reversed, cfg, schema);
    cfg.seed = 10;
    AdnnModel d = AdnnModel::train(instances, cfg, schema);

    bool any_diff_seed = false;
    for (const auto& inst : instances) {
        Eigen::VectorXd pa = a.predict(inst).distribution;
        CHECK((pa - b.predict(inst).distribution).cwiseAbs().maxCoeff() == 0.0);
        CHECK((pa - c.predict(inst).distribution).cwiseAbs().maxCoeff() == 0.0);
        if ((pa - d.predict(inst).distribution).cwiseAbs().maxCoeff() > 0.0)
            any_diff_seed = true;
    }
    CHECK(any_diff_seed);
    CHECK(a.training_loss() == b.training_loss());
    CHECK(a.training_loss() == c.training_loss());
}

TEST_CASE("model overfits a separable toy problem") {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema schema = fitted_schema(corpus);
    auto data = toy_dataset(schema, 12);
    AdnnConfig cfg = small_config(2, {Channel::Meta, Channel::Linguistic});
    cfg.epochs = 12;
    cfg.learning_rate = 5e-3;
    AdnnModel model = AdnnModel::train(data, cfg, schema);

    std::size_t correct = 0;
    for (const auto& inst : data)
        if (model.predict(inst).label == inst.label) ++correct;
    CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= 0.99);

    // Loss should improve substantially from the first epoch to the last.
    const auto& loss = model.training_loss();
    REQUIRE(loss.size() == 12);
    CHECK(loss.back() < loss.front());
    for (double l : loss) CHECK(std::isfinite(l));
}

TEST_CASE("analytic gradients match central finite differences") {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema schema = fitted_schema(corpus);
    auto instances = fixture_instances(schema);
    AdnnConfig cfg;
    cfg.hidden_units = 3;
    cfg.attention_dim = 2;
    cfg.n_classes = 3;
    cfg.channels = {Channel::Meta, Channel::Linguistic, Channel::Embedding};
    std::map<Channel, int> dims = {{Channel::Meta, 13},
                                   {Channel::Linguistic, schema.linguistic.width()},
                                   {Channel::Embedding, 6}};
    AdnnModel model(cfg, schema, dims);

    std::vector<const ChannelSet*> batch;
    for (std::size_t i = 0; i < 3; ++i) batch.push_back(&instances[i]);

    auto all_params = model.params();
    for (Param* p : all_params) p->grad.setZero();
    model.loss_and_gradients(batch, false, 0);

    const double eps = 1e-6;
    // Pass when relative error <= 1e-4, or absolute error <= 1e-7 for
    // near-zero gradients where central differences are noise-dominated.
    double worst = 0.0;
    for (Param* p : all_params) {
        Eigen::MatrixXd analytic = p->grad;
        for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
            for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
                const double saved = p->value(r, c);
                p->value(r, c) = saved + eps;
                for (Param* q : all_params) q->grad.setZero();
                double up = model.loss_and_gradients(batch, false, 0);
                p->value(r, c) = saved - eps;
                for (Param* q : all_params) q->grad.setZero();
                double down = model.loss_and_gradients(batch, false, 0);
                p->value(r, c) = saved;
                double fd = (up - down) / (2.0 * eps);
                double abs_err = std::fabs(fd - analytic(r, c));
                if (abs_err <= 1e-7) continue;
                double rel = abs_err / std::max(std::fabs(fd), std::fabs(analytic(r, c)));
                worst = std::max(worst, rel);
            }
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("save/load round-trips the artifact byte-for-byte") {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema schema = fitted_schema(corpus);
    auto instances = fixture_instances(schema);
    AdnnConfig cfg = small_config(3, {Channel::Meta, Channel::Linguistic, Channel::Embedding});
    cfg.epochs = 2;
    AdnnModel model = AdnnModel::train(instances, cfg, schema);

    std::string dir1 = (fs::temp_directory_path() / "model_rt1").string();
    std::string dir2 = (fs::temp_directory_path() / "model_rt2").string();
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    model.save(dir1);
    CHECK(fs::exists(dir1 + "/manifest.json"));
    CHECK(fs::exists(dir1 + "/schema.json"));
    CHECK(fs::exists(dir1 + "/training_log.tsv"));

    AdnnModel loaded = AdnnModel::load(dir1);
    CHECK(loaded.config().hidden_units == cfg.hidden_units);
    CHECK(loaded.config().channels == canonical_channels(cfg.channels));
    CHECK(loaded.schema().hash() == schema.hash());
    CHECK(loaded.training_loss().size() == 2);

    // Saving the loaded model reproduces identical weight files.
    loaded.save(dir2);
    for (const auto& entry : fs::directory_iterator(dir1)) {
        std::ifstream f1(entry.path(), std::ios::binary);
        std::ifstream f2(dir2 + "/" + entry.path().filename().string(), std::ios::binary);
        std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(c1 == c2);
    }

    // Weights travel as float32; predictions agree within that precision.
    for (const auto& inst : instances) {
        Eigen::VectorXd p0 = model.predict(inst).distribution;
        Eigen::VectorXd p1 = loaded.predict(inst).distribution;
        CHECK((p0 - p1).cwiseAbs().maxCoeff() <= 1e-5);
    }

    // A tampered schema must be rejected on load.
    FeatureSchema other = schema;
    other.linguistic.max_len = 32;
    write_schema(other, dir1 + "/schema.json");
    CHECK_THROWS_AS(AdnnModel::load(dir1), FormatError);

    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("channel_input shapes") {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema schema = fitted_schema(corpus);
    auto instances = fixture_instances(schema);

    Eigen::MatrixXd meta = AdnnModel::channel_input(instances[0], Channel::Meta);
    CHECK(meta.rows() == 8);   // one step per metadata field
    CHECK(meta.cols() == 13);  // widest block (13-way one-hots)

    Eigen::MatrixXd ling = AdnnModel::channel_input(instances[0], Channel::Linguistic);
    CHECK(static_cast<std::size_t>(ling.rows()) == instances[0].linguistic->n_tokens);

    ChannelSet empty_text = instances[0];
    empty_text.linguistic->n_tokens = 0;
    Eigen::MatrixXd z = AdnnModel::channel_input(empty_text, Channel::Linguistic);
    CHECK(z.rows() == 1);
    CHECK(z.cwiseAbs().sum() == 0.0);
}

TEST_CASE("content hash is invariant to construction but not to content") {
    Corpus corpus = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema schema = fitted_schema(corpus);
    auto instances = fixture_instances(schema);
    CHECK(instance_content_hash(instances[0]) == instance_content_hash(instances[0]));
    CHECK(instance_content_hash(instances[0]) != instance_content_hash(instances[1]));
    ChannelSet relabeled = instances[0];
    relabeled.label = relabeled.label + 1;
    CHECK(instance_content_hash(relabeled) != instance_content_hash(instances[0]));
}
