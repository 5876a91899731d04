#ifndef CONVACT_MODEL_HPP
#define CONVACT_MODEL_HPP

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "convact/features.hpp"

namespace convact {

struct AdnnConfig {
    int hidden_units = 128;
    double dropout = 0.25;                 // BiLSTM input dropout
    double recurrent_dropout = 0.1;
    double post_attention_dropout = 0.25;
    int attention_dim = 64;
    int n_classes = 2;
    double learning_rate = 1e-3;
    double encoder_learning_rate = 2e-5;   // for trainable contextual encoders
    int batch_size = 16;
    int epochs = 20;
    std::uint64_t seed = 1;
    std::vector<Channel> channels = {Channel::Meta};
    bool fine_tune_encoder = true;         // honored only by trainable encoders

    void check() const;  // throws InvalidArgument on bad values
    std::string to_json() const;
    static AdnnConfig from_json(const std::string& text);
};

struct Param {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    Param() = default;
    Param(std::string n, int rows, int cols)
        : name(std::move(n)), value(Eigen::MatrixXd::Zero(rows, cols)),
          grad(Eigen::MatrixXd::Zero(rows, cols)) {}
};

// Additive attention over a T x d sequence: scores s_t = v . tanh(W h_t),
// weights = softmax(s), context = sum_t weights_t h_t.
struct AttentionResult {
    Eigen::VectorXd context;
    Eigen::VectorXd weights;
};

AttentionResult additive_attention(const Eigen::MatrixXd& H, const Eigen::MatrixXd& W,
                                   const Eigen::VectorXd& v);

struct LstmDirParams {
    Param Wx;  // 4h x d, gate order i,f,g,o
    Param Wh;  // 4h x h
    Param b;   // 4h x 1
};

struct ChannelEncoder {
    bool has_lstm = true;   // false for the embedding channel
    int input_dim = 0;
    int context_dim = 0;    // 2h with BiLSTM, input_dim without
    LstmDirParams fw, bw;
    Param att_W;            // attention_dim x context_dim
    Param att_v;            // attention_dim x 1
};

struct Prediction {
    int label = -1;
    Eigen::VectorXd distribution;
};

class AdnnModel {
public:
    AdnnModel() = default;
    AdnnModel(const AdnnConfig& config, const FeatureSchema& schema,
              const std::map<Channel, int>& input_dims);

    // Mini-batch Adam on categorical cross-entropy. Deterministic in
    // config.seed: initialization, shuffling, and dropout masks all derive
    // from it, and instances are pre-sorted by content hash so the caller's
    // ordering is irrelevant.
    static AdnnModel train(const std::vector<ChannelSet>& instances, const AdnnConfig& config,
                           const FeatureSchema& schema);

    Prediction predict(const ChannelSet& instance) const;

    // Mean loss over the batch; gradients accumulate into the params.
    // training=false disables dropout (used by the finite-difference check).
    double loss_and_gradients(const std::vector<const ChannelSet*>& batch, bool training,
                              std::uint64_t dropout_salt);

    std::vector<Param*> params();
    std::vector<const Param*> params() const;

    const AdnnConfig& config() const { return config_; }
    const FeatureSchema& schema() const { return schema_; }
    const std::vector<double>& training_loss() const { return training_loss_; }
    const std::map<Channel, int>& input_dims() const { return input_dims_; }

    void save(const std::string& dir) const;
    static AdnnModel load(const std::string& dir);

    // Per-channel input sequence for an instance (meta becomes an
    // 8-step sequence of zero-padded field blocks).
    static Eigen::MatrixXd channel_input(const ChannelSet& instance, Channel channel);

private:
    friend struct ForwardPass;
    AdnnConfig config_;
    FeatureSchema schema_;
    std::map<Channel, int> input_dims_;
    std::map<Channel, ChannelEncoder> encoders_;
    Param head_W, head_b;
    std::vector<double> training_loss_;

    void init_params(std::uint64_t seed);
    int fused_dim() const;
};

std::uint64_t instance_content_hash(const ChannelSet& instance);

}  // namespace convact

#endif
