#ifndef CONVACT_FEATURES_HPP
#define CONVACT_FEATURES_HPP

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "convact/corpus.hpp"

namespace convact {

struct TokenAnnotation {
    std::string surface;
    std::string ner_type = "NONE";
    bool alphabetic = false;
    bool digit = false;
    bool punctuation = false;
    bool url = false;
    bool stopword = false;
    bool oov = false;
    std::string pos_coarse = "OTHER";
    std::string pos_fine = "OTHER";
    std::string dep_relation = "OTHER";
    int sent_start_distance = 0;  // bucketed later: 0,1,2,3,4+
    bool sentence_start = false;
};

// Token-level NLP annotation provider.
class Annotator {
public:
    virtual ~Annotator() = default;
    virtual std::vector<TokenAnnotation> annotate(const std::string& text) const = 0;
    virtual std::string name() const = 0;
    virtual std::string version() const = 0;
};

// Deterministic rule-based annotator: whitespace + punctuation tokenizer,
// regex-style URL/digit/punctuation detection, fixed stopword list and
// lexicon (OOV = alphabetic word outside both), OTHER for POS/dep/NER.
class FallbackAnnotator : public Annotator {
public:
    std::vector<TokenAnnotation> annotate(const std::string& text) const override;
    std::string name() const override { return "fallback"; }
    std::string version() const override { return "1"; }
};

// Replays annotations from a TSV keyed by (session_id, event_index,
// token_index), for provider-free runs with precomputed NLP output.
class PrecomputedAnnotator : public Annotator {
public:
    explicit PrecomputedAnnotator(const std::string& path);
    // Lookup key "session_id:event_index" must be set before annotate().
    void set_key(const std::string& session_id, int event_index) const;
    std::vector<TokenAnnotation> annotate(const std::string& text) const override;
    std::string name() const override { return "precomputed"; }
    std::string version() const override { return "1"; }

private:
    std::map<std::string, std::vector<TokenAnnotation>> by_key_;
    mutable std::string current_key_;
};

struct CategoricalBlock {
    std::string name;                // ner_type, pos_coarse, pos_fine,
                                     // dep_relation, sent_start_distance
    std::vector<std::string> vocab;  // must contain "OTHER"
};

struct LinguisticSchema {
    std::vector<CategoricalBlock> blocks;
    bool sentence_boundary_column = true;
    int max_len = 64;
    static constexpr int kNumFlags = 6;
    int width() const;
};

struct StandardizerMoments {
    double mean = 0.0;
    double std = 1.0;
};

struct MetadataSchema {
    std::vector<std::string> system_ids;        // + OTHER
    std::vector<std::string> complexities;      // + OTHER
    std::optional<StandardizerMoments> utterance_number;
    std::optional<StandardizerMoments> duration;
};

struct FeatureSchema {
    LinguisticSchema linguistic;
    MetadataSchema metadata;
    std::string annotator_name = "fallback";
    std::string annotator_version = "1";
    std::string encoder_name = "stub";
    int encoder_width = 8;

    std::string to_json() const;
    static FeatureSchema from_json(const std::string& text);
    std::uint64_t hash() const;  // FNV-1a over the canonical JSON
};

// Default schema for the fallback annotator (OTHER-only POS/dep vocab).
FeatureSchema default_schema(const Corpus& corpus);

void write_schema(const FeatureSchema& schema, const std::string& path);
FeatureSchema load_schema(const std::string& path);

struct LinguisticMatrix {
    Eigen::MatrixXd rows;       // max_len x width, padding rows all-zero
    std::size_t n_tokens = 0;   // real (unpadded) rows
};

LinguisticMatrix encode_linguistic(const std::vector<TokenAnnotation>& annotations,
                                   const LinguisticSchema& schema);

// Eight named blocks; the model consumes them as an 8-step sequence.
struct MetadataVector {
    std::vector<std::pair<std::string, Eigen::VectorXd>> blocks;
    Eigen::VectorXd flat() const;
};

inline constexpr std::size_t kMetadataFieldCount = 8;

// Raw per-instance metadata before schema encoding.
struct MetadataInputs {
    double utterance_number = 0.0;
    double duration_s = 0.0;
    Speaker speaker = Speaker::User;
    std::string system_id;
    std::string complexity;
    std::optional<SpeechAct> prev_speech_act;
    std::optional<SearchAction> prev_search_action;
    std::optional<SpeechAct> prev_user_speech_act;
};

// Throws if the schema has no standardizer moments.
MetadataVector encode_metadata(const MetadataInputs& inputs, const MetadataSchema& schema);

// Gathers MetadataInputs for the event at position `event_pos` in the
// session's event list, scanning only the preceding events.
MetadataInputs metadata_inputs_for(const Session& session, std::size_t event_pos);

// Contextual text encoder (embedding channel provider).
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    // Returns an n_tokens x width matrix; empty text yields the single
    // start-token row.
    virtual Eigen::MatrixXd encode(const std::string& text) const = 0;
    virtual int width() const = 0;
    virtual std::string name() const = 0;
};

// Test stub. Whitespace tokens; row for token w, column j:
//   ((fnv1a64(w) ^ (j * 0x9e3779b97f4a7c15)) % 2001) / 1000.0 - 1.0
// Empty text encodes the start token "<s>".
class HashStubEncoder : public TextEncoder {
public:
    explicit HashStubEncoder(int width = 8) : width_(width) {}
    Eigen::MatrixXd encode(const std::string& text) const override;
    int width() const override { return width_; }
    std::string name() const override { return "stub"; }

private:
    int width_;
};

// Precomputed embeddings: TSV of fnv1a64(text) in hex, n_rows, width, then
// row-major values. Lets an external pretrained encoder back the embedding
// channel without linking it here.
class FileEncoder : public TextEncoder {
public:
    explicit FileEncoder(const std::string& path);
    Eigen::MatrixXd encode(const std::string& text) const override;
    int width() const override { return width_; }
    std::string name() const override { return "file"; }

private:
    std::map<std::uint64_t, Eigen::MatrixXd> table_;
    int width_ = 0;
};

enum class Channel : int { Meta = 0, Linguistic = 1, Embedding = 2 };

std::string channel_name(Channel c);
std::optional<Channel> parse_channel(const std::string& name);
// Canonical order: meta, linguistic, embedding.
std::vector<Channel> canonical_channels(const std::vector<Channel>& subset);

struct ChannelSet {
    std::optional<LinguisticMatrix> linguistic;
    std::optional<MetadataVector> meta;
    std::optional<Eigen::MatrixXd> embedding;
    int label = -1;
};

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace convact

#endif
