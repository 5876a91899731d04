#include "convact/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "convact/errors.hpp"

namespace convact {

namespace fs = std::filesystem;
using nlohmann::json;

void AdnnConfig::check() const {
    if (n_classes < 2) throw InvalidArgument("n_classes must be >= 2");
    if (hidden_units < 1 || attention_dim < 1)
        throw InvalidArgument("hidden_units and attention_dim must be positive");
    for (double d : {dropout, recurrent_dropout, post_attention_dropout})
        if (d < 0.0 || d >= 1.0) throw InvalidArgument("dropout rates must be in [0, 1)");
    if (channels.empty()) throw InvalidArgument("channel subset must be non-empty");
    if (batch_size < 1) throw InvalidArgument("batch_size must be positive");
    if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
    if (learning_rate <= 0.0) throw InvalidArgument("learning_rate must be positive");
}

std::string AdnnConfig::to_json() const {
    json j;
    j["hidden_units"] = hidden_units;
    j["dropout"] = dropout;
    j["recurrent_dropout"] = recurrent_dropout;
    j["post_attention_dropout"] = post_attention_dropout;
    j["attention_dim"] = attention_dim;
    j["n_classes"] = n_classes;
    j["learning_rate"] = learning_rate;
    j["encoder_learning_rate"] = encoder_learning_rate;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["fine_tune_encoder"] = fine_tune_encoder;
    std::vector<std::string> names;
    for (Channel c : channels) names.push_back(channel_name(c));
    j["channels"] = names;
    return j.dump(2);
}

AdnnConfig AdnnConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    AdnnConfig c;
    c.hidden_units = j.value("hidden_units", c.hidden_units);
    c.dropout = j.value("dropout", c.dropout);
    c.recurrent_dropout = j.value("recurrent_dropout", c.recurrent_dropout);
    c.post_attention_dropout = j.value("post_attention_dropout", c.post_attention_dropout);
    c.attention_dim = j.value("attention_dim", c.attention_dim);
    c.n_classes = j.value("n_classes", c.n_classes);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.encoder_learning_rate = j.value("encoder_learning_rate", c.encoder_learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.fine_tune_encoder = j.value("fine_tune_encoder", c.fine_tune_encoder);
    if (j.contains("channels")) {
        c.channels.clear();
        for (const auto& n : j["channels"]) {
            auto ch = parse_channel(n.get<std::string>());
            if (!ch) throw FormatError("unknown channel in config: " + n.get<std::string>());
            c.channels.push_back(*ch);
        }
    }
    return c;
}

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
    Eigen::VectorXd z = (x.array() - x.maxCoeff()).exp();
    return z / z.sum();
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

AttentionResult additive_attention(const Eigen::MatrixXd& H, const Eigen::MatrixXd& W,
                                   const Eigen::VectorXd& v) {
    if (H.rows() < 1) throw InvalidArgument("attention over an empty sequence");
    if (W.cols() != H.cols() || W.rows() != v.size())
        throw InvalidArgument("attention parameter shapes do not match input");
    const auto T = H.rows();
    Eigen::VectorXd scores(T);
    for (Eigen::Index t = 0; t < T; ++t)
        scores[t] = v.dot((W * H.row(t).transpose()).array().tanh().matrix());
    AttentionResult res;
    res.weights = softmax(scores);
    res.context = H.transpose() * res.weights;
    return res;
}

std::uint64_t instance_content_hash(const ChannelSet& instance) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* data, std::size_t size) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    auto mix_matrix = [&](const Eigen::MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                double v = m(r, c);
                mix_bytes(&v, sizeof(v));
            }
    };
    mix_bytes(&instance.label, sizeof(instance.label));
    if (instance.meta) {
        for (const auto& [name, v] : instance.meta->blocks) {
            mix_bytes(name.data(), name.size());
            mix_matrix(v);
        }
    }
    if (instance.linguistic) {
        mix_bytes(&instance.linguistic->n_tokens, sizeof(instance.linguistic->n_tokens));
        mix_matrix(instance.linguistic->rows);
    }
    if (instance.embedding) mix_matrix(*instance.embedding);
    return h;
}

Eigen::MatrixXd AdnnModel::channel_input(const ChannelSet& instance, Channel channel) {
    switch (channel) {
        case Channel::Meta: {
            if (!instance.meta) throw InvalidArgument("instance lacks the meta channel");
            const auto& blocks = instance.meta->blocks;
            Eigen::Index width = 0;
            for (const auto& [name, v] : blocks) width = std::max(width, v.size());
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(blocks.size()),
                                                      width);
            for (std::size_t i = 0; i < blocks.size(); ++i)
                m.row(static_cast<Eigen::Index>(i)).head(blocks[i].second.size()) =
                    blocks[i].second.transpose();
            return m;
        }
        case Channel::Linguistic: {
            if (!instance.linguistic)
                throw InvalidArgument("instance lacks the linguistic channel");
            auto n = static_cast<Eigen::Index>(instance.linguistic->n_tokens);
            if (n == 0)  // no tokens survived; feed one neutral row
                return Eigen::MatrixXd::Zero(1, instance.linguistic->rows.cols());
            return instance.linguistic->rows.topRows(n);
        }
        case Channel::Embedding:
            if (!instance.embedding) throw InvalidArgument("instance lacks the bert channel");
            if (instance.embedding->rows() == 0)
                throw InvalidArgument("empty embedding sequence");
            return *instance.embedding;
    }
    throw InvalidArgument("bad channel");
}

AdnnModel::AdnnModel(const AdnnConfig& config, const FeatureSchema& schema,
                     const std::map<Channel, int>& input_dims)
    : config_(config), schema_(schema), input_dims_(input_dims) {
    config_.check();
    config_.channels = canonical_channels(config_.channels);
    const int h = config_.hidden_units;
    const int a = config_.attention_dim;
    for (Channel c : config_.channels) {
        auto it = input_dims_.find(c);
        if (it == input_dims_.end())
            throw InvalidArgument("missing input dim for channel " + channel_name(c));
        ChannelEncoder enc;
        enc.input_dim = it->second;
        enc.has_lstm = (c != Channel::Embedding);
        enc.context_dim = enc.has_lstm ? 2 * h : enc.input_dim;
        std::string prefix = channel_name(c);
        if (enc.has_lstm) {
            for (auto* dir : {&enc.fw, &enc.bw}) {
                const char* tag = (dir == &enc.fw) ? "fw" : "bw";
                dir->Wx = Param(prefix + "." + tag + ".Wx", 4 * h, enc.input_dim);
                dir->Wh = Param(prefix + "." + tag + ".Wh", 4 * h, h);
                dir->b = Param(prefix + "." + tag + ".b", 4 * h, 1);
            }
        }
        enc.att_W = Param(prefix + ".att.W", a, enc.context_dim);
        enc.att_v = Param(prefix + ".att.v", a, 1);
        encoders_[c] = std::move(enc);
    }
    head_W = Param("head.W", config_.n_classes, fused_dim());
    head_b = Param("head.b", config_.n_classes, 1);
    init_params(config_.seed);
}

int AdnnModel::fused_dim() const {
    int d = 0;
    for (const auto& [c, enc] : encoders_) d += enc.context_dim;
    return d;
}

std::vector<Param*> AdnnModel::params() {
    std::vector<Param*> out;
    for (Channel c : config_.channels) {
        auto& enc = encoders_.at(c);
        if (enc.has_lstm)
            for (auto* dir : {&enc.fw, &enc.bw})
                for (auto* p : {&dir->Wx, &dir->Wh, &dir->b}) out.push_back(p);
        out.push_back(&enc.att_W);
        out.push_back(&enc.att_v);
    }
    out.push_back(&head_W);
    out.push_back(&head_b);
    return out;
}

std::vector<const Param*> AdnnModel::params() const {
    auto mutable_params = const_cast<AdnnModel*>(this)->params();
    return {mutable_params.begin(), mutable_params.end()};
}

void AdnnModel::init_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0xda3e39cb94b95bdbULL);
    auto glorot = [&rng](Param& p) {
        double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index r = 0; r < p.value.rows(); ++r)
            for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = dist(rng);
    };
    const int h = config_.hidden_units;
    for (Param* p : params()) {
        glorot(*p);
        if (p->name.ends_with(".b")) {
            p->value.setZero();
            if (p->name.find(".fw.") != std::string::npos ||
                p->name.find(".bw.") != std::string::npos)
                p->value.block(h, 0, h, 1).setConstant(1.0);  // forget gate bias
        }
        if (p->name == "head.b") p->value.setZero();
    }
}

namespace {

// Per-sequence caches for one LSTM direction.
struct LstmCache {
    Eigen::MatrixXd X;                   // T x d input (post input-dropout)
    Eigen::MatrixXd i, f, g, o, c, h;    // T x h
    Eigen::VectorXd rmask;               // recurrent dropout mask (h)
};

Eigen::MatrixXd lstm_forward(const Eigen::MatrixXd& X, const LstmDirParams& p,
                             const Eigen::VectorXd& rmask, LstmCache& cache) {
    const auto T = X.rows();
    const auto h = p.Wh.value.cols();
    cache.X = X;
    cache.rmask = rmask;
    for (auto* m : {&cache.i, &cache.f, &cache.g, &cache.o, &cache.c, &cache.h})
        m->resize(T, h);
    Eigen::MatrixXd ax = X * p.Wx.value.transpose();  // T x 4h
    Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd a(4 * h);
    for (Eigen::Index t = 0; t < T; ++t) {
        a.noalias() = p.Wh.value * (rmask.array() * h_prev.array()).matrix();
        a += ax.row(t).transpose() + p.b.value.col(0);
        for (Eigen::Index k = 0; k < h; ++k) {
            double iv = sigmoid(a[k]);
            double fv = sigmoid(a[h + k]);
            double gv = std::tanh(a[2 * h + k]);
            double ov = sigmoid(a[3 * h + k]);
            double cv = fv * c_prev[k] + iv * gv;
            cache.i(t, k) = iv;
            cache.f(t, k) = fv;
            cache.g(t, k) = gv;
            cache.o(t, k) = ov;
            cache.c(t, k) = cv;
            cache.h(t, k) = ov * std::tanh(cv);
        }
        h_prev = cache.h.row(t);
        c_prev = cache.c.row(t);
    }
    return cache.h;
}

void lstm_backward(const Eigen::MatrixXd& dH, const LstmCache& cache, LstmDirParams& p) {
    const auto T = cache.X.rows();
    const auto h = cache.h.cols();
    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(h);
    Eigen::MatrixXd dA(T, 4 * h);
    Eigen::VectorXd da(4 * h);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        for (Eigen::Index k = 0; k < h; ++k) {
            double dh = dH(t, k) + dh_next[k];
            double cv = cache.c(t, k);
            double tc = std::tanh(cv);
            double dov = dh * tc;
            double dct = dh * cache.o(t, k) * (1.0 - tc * tc) + dc_next[k];
            double c_prev = (t > 0) ? cache.c(t - 1, k) : 0.0;
            double dfv = dct * c_prev;
            dc_next[k] = dct * cache.f(t, k);
            double div = dct * cache.g(t, k);
            double dgv = dct * cache.i(t, k);
            double iv = cache.i(t, k), fv = cache.f(t, k), gv = cache.g(t, k),
                   ov = cache.o(t, k);
            da[k] = div * iv * (1.0 - iv);
            da[h + k] = dfv * fv * (1.0 - fv);
            da[2 * h + k] = dgv * (1.0 - gv * gv);
            da[3 * h + k] = dov * ov * (1.0 - ov);
        }
        dA.row(t) = da.transpose();
        if (t > 0) {
            Eigen::VectorXd h_prev_masked =
                (cache.rmask.array() * cache.h.row(t - 1).transpose().array()).matrix();
            p.Wh.grad.noalias() += da * h_prev_masked.transpose();
        }
        p.b.grad.col(0) += da;
        dh_next.noalias() = p.Wh.value.transpose() * da;
        dh_next.array() *= cache.rmask.array();
    }
    p.Wx.grad.noalias() += dA.transpose() * cache.X;
}

struct AttentionCache {
    Eigen::MatrixXd H;   // T x d
    Eigen::MatrixXd U;   // T x a, tanh(W h_t)
    Eigen::VectorXd weights;
};

Eigen::VectorXd attention_forward(const Eigen::MatrixXd& H, const Param& W, const Param& v,
                                  AttentionCache& cache) {
    const auto T = H.rows();
    cache.H = H;
    cache.U = (H * W.value.transpose()).array().tanh();
    Eigen::VectorXd scores = cache.U * v.value.col(0);
    cache.weights = softmax(scores);
    return H.transpose() * cache.weights;
}

Eigen::MatrixXd attention_backward(const Eigen::VectorXd& dcontext, const AttentionCache& cache,
                                   Param& W, Param& v) {
    const auto T = cache.H.rows();
    Eigen::VectorXd dalpha = cache.H * dcontext;
    double dot = cache.weights.dot(dalpha);
    Eigen::VectorXd ds =
        (cache.weights.array() * (dalpha.array() - dot)).matrix();  // softmax backward
    Eigen::MatrixXd dH = cache.weights * dcontext.transpose();      // T x d
    v.grad.col(0).noalias() += cache.U.transpose() * ds;
    // dscore_t/dW = ((1 - u_t^2) .* v) h_t^T
    Eigen::MatrixXd dU =
        (ds * v.value.col(0).transpose()).array() * (1.0 - cache.U.array().square());
    W.grad.noalias() += dU.transpose() * cache.H;
    dH.noalias() += dU * W.value;
    return dH;
}

Eigen::MatrixXd apply_dropout(const Eigen::MatrixXd& X, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return X;
    std::bernoulli_distribution keep(1.0 - rate);
    Eigen::MatrixXd out = X;
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c)
            out(r, c) = keep(rng) ? out(r, c) * scale : 0.0;
    return out;
}

Eigen::VectorXd dropout_mask(Eigen::Index n, double rate, std::mt19937_64& rng) {
    Eigen::VectorXd mask = Eigen::VectorXd::Ones(n);
    if (rate <= 0.0) return mask;
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index k = 0; k < n; ++k) mask[k] = keep(rng) ? scale : 0.0;
    return mask;
}

}  // namespace

double AdnnModel::loss_and_gradients(const std::vector<const ChannelSet*>& batch, bool training,
                                     std::uint64_t dropout_salt) {
    if (batch.empty()) throw InvalidArgument("empty batch");
    double total_loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const int h = config_.hidden_units;

    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const ChannelSet& inst = *batch[bi];
        if (inst.label < 0 || inst.label >= config_.n_classes)
            throw InvalidArgument("label out of range: " + std::to_string(inst.label));
        std::mt19937_64 drop_rng(dropout_salt * 0x9e3779b97f4a7c15ULL + bi + 1);

        // Forward
        std::map<Channel, LstmCache> fw_caches, bw_caches;
        std::map<Channel, AttentionCache> att_caches;
        Eigen::VectorXd fused(fused_dim());
        int at = 0;
        for (Channel c : config_.channels) {
            auto& enc = encoders_.at(c);
            Eigen::MatrixXd X = channel_input(inst, c);
            if (X.rows() == 0) throw InvalidArgument("empty sequence for channel " +
                                                     channel_name(c));
            if (X.cols() != enc.input_dim)
                throw InvalidArgument("channel " + channel_name(c) + " width " +
                                      std::to_string(X.cols()) + " does not match model " +
                                      std::to_string(enc.input_dim));
            Eigen::MatrixXd H;
            if (enc.has_lstm) {
                if (training) X = apply_dropout(X, config_.dropout, drop_rng);
                Eigen::VectorXd rm_f =
                    training ? dropout_mask(h, config_.recurrent_dropout, drop_rng)
                             : Eigen::VectorXd::Ones(h);
                Eigen::VectorXd rm_b =
                    training ? dropout_mask(h, config_.recurrent_dropout, drop_rng)
                             : Eigen::VectorXd::Ones(h);
                Eigen::MatrixXd Hf = lstm_forward(X, enc.fw, rm_f, fw_caches[c]);
                Eigen::MatrixXd Hb =
                    lstm_forward(X.colwise().reverse(), enc.bw, rm_b, bw_caches[c]);
                H.resize(X.rows(), 2 * h);
                H.leftCols(h) = Hf;
                H.rightCols(h) = Hb.colwise().reverse();
            } else {
                H = X;
            }
            Eigen::VectorXd context =
                attention_forward(H, enc.att_W, enc.att_v, att_caches[c]);
            fused.segment(at, enc.context_dim) = context;
            at += enc.context_dim;
        }

        Eigen::VectorXd post_mask = Eigen::VectorXd::Ones(fused.size());
        if (training)
            post_mask = dropout_mask(fused.size(), config_.post_attention_dropout, drop_rng);
        Eigen::VectorXd z = (fused.array() * post_mask.array()).matrix();
        Eigen::VectorXd logits = head_W.value * z + head_b.value.col(0);
        Eigen::VectorXd p = softmax(logits);
        total_loss += -std::log(std::max(p[inst.label], 1e-300));

        // Backward
        Eigen::VectorXd dlogits = p;
        dlogits[inst.label] -= 1.0;
        dlogits *= inv_n;
        head_W.grad.noalias() += dlogits * z.transpose();
        head_b.grad.col(0) += dlogits;
        Eigen::VectorXd dz = head_W.value.transpose() * dlogits;
        Eigen::VectorXd dfused = (dz.array() * post_mask.array()).matrix();

        at = 0;
        for (Channel c : config_.channels) {
            auto& enc = encoders_.at(c);
            Eigen::VectorXd dcontext = dfused.segment(at, enc.context_dim);
            at += enc.context_dim;
            Eigen::MatrixXd dH =
                attention_backward(dcontext, att_caches[c], enc.att_W, enc.att_v);
            if (enc.has_lstm) {
                lstm_backward(dH.leftCols(h), fw_caches[c], enc.fw);
                lstm_backward(dH.rightCols(h).colwise().reverse(), bw_caches[c], enc.bw);
            }
        }
    }
    return total_loss * inv_n;
}

AdnnModel AdnnModel::train(const std::vector<ChannelSet>& instances, const AdnnConfig& config,
                           const FeatureSchema& schema) {
    config.check();
    if (instances.empty()) throw InvalidArgument("empty training set");
    auto channels = canonical_channels(config.channels);
    std::map<Channel, int> dims;
    for (Channel c : channels)
        dims[c] = static_cast<int>(channel_input(instances.front(), c).cols());
    AdnnConfig cfg = config;
    cfg.channels = channels;
    AdnnModel model(cfg, schema, dims);

    // Canonical order by content hash so results do not depend on the
    // caller's instance ordering.
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::uint64_t> hashes(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i)
        hashes[i] = instance_content_hash(instances[i]);
    std::stable_sort(order.begin(), order.end(),
                     [&hashes](std::size_t a, std::size_t b) { return hashes[a] < hashes[b]; });

    auto all_params = model.params();
    std::vector<Eigen::MatrixXd> adam_m, adam_v;
    for (Param* p : all_params) {
        adam_m.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
        adam_v.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    }
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> shuffled = order;
        std::mt19937_64 shuffle_rng(cfg.seed * 0x2545f4914f6cdd1dULL + epoch + 1);
        std::shuffle(shuffled.begin(), shuffled.end(), shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < shuffled.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end =
                std::min(shuffled.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const ChannelSet*> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(&instances[shuffled[i]]);
            for (Param* p : all_params) p->grad.setZero();
            std::uint64_t salt =
                cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 32) ^ (start * 2654435761ULL);
            epoch_loss += model.loss_and_gradients(batch, true, salt);
            ++n_batches;
            ++step;
            const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t pi = 0; pi < all_params.size(); ++pi) {
                Param& p = *all_params[pi];
                adam_m[pi] = beta1 * adam_m[pi] + (1.0 - beta1) * p.grad;
                adam_v[pi] =
                    (beta2 * adam_v[pi].array() + (1.0 - beta2) * p.grad.array().square())
                        .matrix();
                p.value.array() -= cfg.learning_rate * (adam_m[pi].array() / bias1) /
                                   ((adam_v[pi].array() / bias2).sqrt() + eps);
            }
        }
        if (!std::isfinite(epoch_loss))
            throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
        model.training_loss_.push_back(n_batches ? epoch_loss / static_cast<double>(n_batches)
                                                 : 0.0);
    }
    return model;
}

Prediction AdnnModel::predict(const ChannelSet& instance) const {
    for (Channel c : config_.channels) {
        bool present = (c == Channel::Meta && instance.meta) ||
                       (c == Channel::Linguistic && instance.linguistic) ||
                       (c == Channel::Embedding && instance.embedding);
        if (!present)
            throw InvalidArgument("instance is missing channel " + channel_name(c));
    }
    const int h = config_.hidden_units;
    Eigen::VectorXd fused(const_cast<AdnnModel*>(this)->fused_dim());
    int at = 0;
    for (Channel c : config_.channels) {
        const auto& enc = encoders_.at(c);
        Eigen::MatrixXd X = channel_input(instance, c);
        Eigen::MatrixXd H;
        if (enc.has_lstm) {
            LstmCache cf, cb;
            Eigen::VectorXd ones = Eigen::VectorXd::Ones(h);
            Eigen::MatrixXd Hf = lstm_forward(X, const_cast<LstmDirParams&>(enc.fw), ones, cf);
            Eigen::MatrixXd Hb = lstm_forward(X.colwise().reverse(),
                                              const_cast<LstmDirParams&>(enc.bw), ones, cb);
            H.resize(X.rows(), 2 * h);
            H.leftCols(h) = Hf;
            H.rightCols(h) = Hb.colwise().reverse();
        } else {
            H = X;
        }
        auto res = additive_attention(H, enc.att_W.value, enc.att_v.value.col(0));
        fused.segment(at, enc.context_dim) = res.context;
        at += enc.context_dim;
    }
    Prediction pred;
    pred.distribution = softmax(head_W.value * fused + head_b.value.col(0));
    pred.label = 0;
    for (int k = 1; k < config_.n_classes; ++k)
        if (pred.distribution[k] > pred.distribution[pred.label]) pred.label = k;
    return pred;
}

namespace {

constexpr char kWeightsMagic[8] = {'C', 'O', 'N', 'V', 'A', 'C', 'T', 'W'};

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw FormatError("corrupt weights file: truncated");
    return v;
}

void write_weights_file(const std::string& path, const std::vector<const Param*>& group) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kWeightsMagic, sizeof(kWeightsMagic));
    write_u32(out, static_cast<std::uint32_t>(group.size()));
    for (const Param* p : group) {
        write_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_u32(out, static_cast<std::uint32_t>(p->value.rows()));
        write_u32(out, static_cast<std::uint32_t>(p->value.cols()));
        for (Eigen::Index r = 0; r < p->value.rows(); ++r)
            for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
                auto f = static_cast<float>(p->value(r, c));
                out.write(reinterpret_cast<const char*>(&f), sizeof(f));
            }
    }
}

std::map<std::string, Eigen::MatrixXd> read_weights_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kWeightsMagic, 8) != 0)
        throw FormatError("corrupt weights file: bad magic in " + path);
    std::uint32_t count = read_u32(in);
    std::map<std::string, Eigen::MatrixXd> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw FormatError("corrupt weights file");
        std::uint32_t rows = read_u32(in), cols = read_u32(in);
        Eigen::MatrixXd m(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c) {
                float f = 0;
                if (!in.read(reinterpret_cast<char*>(&f), sizeof(f)))
                    throw FormatError("corrupt weights file: truncated data");
                m(r, c) = static_cast<double>(f);
            }
        out[name] = std::move(m);
    }
    return out;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

void AdnnModel::save(const std::string& dir) const {
    fs::create_directories(dir);
    write_schema(schema_, dir + "/schema.json");

    std::map<std::string, std::vector<const Param*>> groups;
    for (Channel c : config_.channels) {
        const auto& enc = encoders_.at(c);
        auto& group = groups["weights_" + channel_name(c) + ".bin"];
        if (enc.has_lstm)
            for (const auto* d : {&enc.fw, &enc.bw})
                for (const Param* p : {&d->Wx, &d->Wh, &d->b}) group.push_back(p);
        group.push_back(&enc.att_W);
        group.push_back(&enc.att_v);
    }
    groups["weights_head.bin"] = {&head_W, &head_b};
    for (const auto& [file, group] : groups) write_weights_file(dir + "/" + file, group);

    json manifest;
    manifest["format_version"] = 1;
    manifest["config"] = json::parse(config_.to_json());
    manifest["schema_hash"] = hash_hex(schema_.hash());
    std::vector<std::string> names, files;
    for (Channel c : config_.channels) names.push_back(channel_name(c));
    for (const auto& [file, group] : groups) files.push_back(file);
    manifest["channel_order"] = names;
    manifest["weight_files"] = files;
    json dims;
    for (const auto& [c, d] : input_dims_) dims[channel_name(c)] = d;
    manifest["input_dims"] = dims;
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw IoError("cannot write manifest");
    mf << manifest.dump(2) << "\n";

    std::ofstream log(dir + "/training_log.tsv");
    log << "epoch\tloss\n";
    for (std::size_t e = 0; e < training_loss_.size(); ++e) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.9g", training_loss_[e]);
        log << e + 1 << '\t' << buf << '\n';
    }
}

AdnnModel AdnnModel::load(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw IoError("cannot open " + dir + "/manifest.json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::parse_error& e) {
        throw FormatError("corrupt manifest: " + std::string(e.what()));
    }
    if (manifest.value("format_version", 0) != 1)
        throw FormatError("incompatible model artifact version");

    FeatureSchema schema = load_schema(dir + "/schema.json");
    if (hash_hex(schema.hash()) != manifest.at("schema_hash").get<std::string>())
        throw FormatError("incompatible artifact: schema hash mismatch");

    AdnnConfig config = AdnnConfig::from_json(manifest.at("config").dump());
    std::map<Channel, int> dims;
    for (const auto& [name, d] : manifest.at("input_dims").items()) {
        auto c = parse_channel(name);
        if (!c) throw FormatError("bad channel in manifest: " + name);
        dims[*c] = d.get<int>();
    }
    AdnnModel model(config, schema, dims);

    std::map<std::string, Eigen::MatrixXd> arrays;
    for (const auto& file : manifest.at("weight_files")) {
        auto part = read_weights_file(dir + "/" + file.get<std::string>());
        arrays.insert(part.begin(), part.end());
    }
    for (Param* p : model.params()) {
        auto it = arrays.find(p->name);
        if (it == arrays.end())
            throw FormatError("corrupt artifact: missing parameter " + p->name);
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
            throw FormatError("corrupt artifact: shape mismatch for " + p->name);
        p->value = it->second;
    }

    std::ifstream log(dir + "/training_log.tsv");
    if (log) {
        std::string line;
        std::getline(log, line);  // header
        while (std::getline(log, line)) {
            auto tab = line.find('\t');
            if (tab != std::string::npos)
                model.training_loss_.push_back(std::stod(line.substr(tab + 1)));
        }
    }
    return model;
}

}  // namespace convact
