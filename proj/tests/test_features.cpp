#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "convact/errors.hpp"
#include "convact/features.hpp"

using namespace convact;

namespace {

const std::string kFixture = std::string(FIXTURE_DIR) + "/mini.tsv";

FeatureSchema schema_with_moments(const Corpus& corpus) {
    FeatureSchema s = default_schema(corpus);
    s.metadata.utterance_number = StandardizerMoments{4.0, 2.0};
    s.metadata.duration = StandardizerMoments{1.5, 0.5};
    return s;
}

}  // namespace

TEST_CASE("fnv1a64 matches published reference values") {
    CHECK(fnv1a64(std::string("")) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64(std::string("a")) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64(std::string("foobar")) == 0x85944171f73967e8ULL);
}

TEST_CASE("fallback annotator tokenizes 'Hi Joanna.' into three tokens") {
    FallbackAnnotator ann;
    auto toks = ann.annotate("Hi Joanna.");
    REQUIRE(toks.size() == 3);
    CHECK(toks[0].surface == "Hi");
    CHECK(toks[0].alphabetic);
    CHECK_FALSE(toks[0].oov);  // "hi" is in the lexicon
    CHECK(toks[0].sentence_start);
    CHECK(toks[1].surface == "Joanna");
    CHECK(toks[1].oov);  // proper name outside lexicon and stopwords
    CHECK(toks[1].sent_start_distance == 1);
    CHECK(toks[2].surface == ".");
    CHECK(toks[2].punctuation);
    CHECK_FALSE(toks[2].alphabetic);
}

TEST_CASE("fallback annotator keeps URLs whole and flags them") {
    FallbackAnnotator ann;
    auto toks = ann.annotate("check http://a.example.com now!");
    REQUIRE(toks.size() == 4);
    CHECK(toks[1].surface == "http://a.example.com");
    CHECK(toks[1].url);
    CHECK_FALSE(toks[1].punctuation);
    CHECK(toks[2].surface == "now");
    CHECK(toks[2].stopword);
    CHECK(toks[3].surface == "!");
}

TEST_CASE("digit and stopword flags, sentence reset after terminals") {
    FallbackAnnotator ann;
    auto toks = ann.annotate("it costs 42 dollars . sure ?");
    REQUIRE(toks.size() == 7);
    CHECK(toks[0].stopword);          // it
    CHECK_FALSE(toks[1].oov);         // costs: lexicon
    CHECK(toks[2].digit);             // 42
    CHECK_FALSE(toks[2].alphabetic);
    CHECK(toks[4].surface == ".");
    CHECK(toks[5].surface == "sure");
    CHECK(toks[5].sentence_start);    // reset after "."
    CHECK(toks[5].sent_start_distance == 0);
    CHECK(toks[6].sent_start_distance == 1);
}

TEST_CASE("sent_start_distance buckets saturate at 4+") {
    FallbackAnnotator ann;
    auto toks = ann.annotate("one two three four five six");
    REQUIRE(toks.size() == 6);
    CHECK(toks[4].sent_start_distance == 4);
    CHECK(toks[5].sent_start_distance == 5);  // bucketed to "4+" at encode time

    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema s = default_schema(c);
    LinguisticMatrix m = encode_linguistic(toks, s.linguistic);
    // Both tokens past index 4 land in the same "4+" bucket column.
    int col = 0;
    for (const auto& b : s.linguistic.blocks) {
        if (b.name == "sent_start_distance") break;
        col += static_cast<int>(b.vocab.size());
    }
    CHECK(m.rows(4, col + 4) == 1.0);
    CHECK(m.rows(5, col + 4) == 1.0);
}

TEST_CASE("linguistic encoding: one-hot per block, padding rows zero") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema s = default_schema(c);
    CHECK(s.linguistic.width() == 18);  // 2+1+1+1+6 vocab + 6 flags + boundary

    FallbackAnnotator ann;
    auto toks = ann.annotate("find me the price of bergamot perfume ?");
    LinguisticMatrix m = encode_linguistic(toks, s.linguistic);
    CHECK(m.n_tokens == 8);
    CHECK(m.rows.rows() == s.linguistic.max_len);
    CHECK(m.rows.cols() == 18);

    for (std::size_t t = 0; t < m.n_tokens; ++t) {
        int col = 0;
        for (const auto& b : s.linguistic.blocks) {
            double sum = m.rows.row(static_cast<int>(t))
                             .segment(col, static_cast<int>(b.vocab.size()))
                             .sum();
            CHECK(sum == 1.0);  // exactly one hot per categorical block
            col += static_cast<int>(b.vocab.size());
        }
    }
    for (int t = static_cast<int>(m.n_tokens); t < s.linguistic.max_len; ++t)
        CHECK(m.rows.row(t).cwiseAbs().sum() == 0.0);
}

TEST_CASE("linguistic encoding truncates at max_len") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema s = default_schema(c);
    s.linguistic.max_len = 4;
    FallbackAnnotator ann;
    LinguisticMatrix m = encode_linguistic(ann.annotate("a b c d e f g"), s.linguistic);
    CHECK(m.n_tokens == 4);
    CHECK(m.rows.rows() == 4);
}

TEST_CASE("metadata encoding standardizes and one-hots") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema s = schema_with_moments(c);

    MetadataInputs in;
    in.utterance_number = 6.0;  // z = (6-4)/2 = 1
    in.duration_s = 1.0;        // z = (1-1.5)/0.5 = -1
    in.speaker = Speaker::Agent;
    in.system_id = "sys-a";
    in.complexity = "1";
    in.prev_speech_act = SpeechAct::QuestionSeek;
    in.prev_search_action = std::nullopt;
    in.prev_user_speech_act = SpeechAct::Instruct;

    MetadataVector v = encode_metadata(in, s.metadata);
    REQUIRE(v.blocks.size() == kMetadataFieldCount);
    CHECK(v.blocks[0].second[0] == doctest::Approx(1.0));
    CHECK(v.blocks[1].second[0] == doctest::Approx(-1.0));
    CHECK(v.blocks[2].second[1] == 1.0);  // agent
    CHECK(v.blocks[2].second[0] == 0.0);
    // system_ids = {sys-a, sys-b, OTHER}
    CHECK(v.blocks[3].second.size() == 3);
    CHECK(v.blocks[3].second[0] == 1.0);
    // prev_speech_act: S1 -> index 0 of 13
    CHECK(v.blocks[5].second.size() == 13);
    CHECK(v.blocks[5].second[0] == 1.0);
    // absent prev_search_action -> "none" bucket (index 4 of 5)
    CHECK(v.blocks[6].second.size() == 5);
    CHECK(v.blocks[6].second[4] == 1.0);
    // prev_user_speech_act: S8 -> index 7
    CHECK(v.blocks[7].second[7] == 1.0);
    CHECK(v.flat().size() == 1 + 1 + 2 + 3 + 3 + 13 + 5 + 13);
}

TEST_CASE("metadata encoding requires moments; zero std maps to zero") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema s = default_schema(c);
    MetadataInputs in;
    in.system_id = "sys-a";
    in.complexity = "0";
    CHECK_THROWS_AS(encode_metadata(in, s.metadata), InvalidArgument);

    s.metadata.utterance_number = StandardizerMoments{3.0, 0.0};
    s.metadata.duration = StandardizerMoments{0.0, 1.0};
    in.utterance_number = 99.0;
    MetadataVector v = encode_metadata(in, s.metadata);
    CHECK(v.blocks[0].second[0] == 0.0);
}

TEST_CASE("unknown system ids fall into the OTHER bucket") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema s = schema_with_moments(c);
    MetadataInputs in;
    in.system_id = "sys-z";
    in.complexity = "7";
    MetadataVector v = encode_metadata(in, s.metadata);
    CHECK(v.blocks[3].second[2] == 1.0);  // OTHER is last
    CHECK(v.blocks[4].second[v.blocks[4].second.size() - 1] == 1.0);
}

TEST_CASE("metadata_inputs_for reads only the session prefix") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    const Session& s1 = c.sessions[0];

    MetadataInputs first = metadata_inputs_for(s1, 0);
    CHECK(first.utterance_number == 1.0);
    CHECK_FALSE(first.prev_speech_act.has_value());
    CHECK_FALSE(first.prev_search_action.has_value());
    CHECK(first.duration_s == doctest::Approx(1.2));

    // Event 3 is the agent answer; prefix holds S12, S1, SR1.
    MetadataInputs answer = metadata_inputs_for(s1, 3);
    CHECK(answer.utterance_number == 3.0);
    CHECK(answer.speaker == Speaker::Agent);
    CHECK(answer.prev_speech_act == SpeechAct::QuestionSeek);
    CHECK(answer.prev_user_speech_act == SpeechAct::QuestionSeek);
    CHECK(answer.prev_search_action == SearchAction::QueryCreationRefinement);

    // Event 4 is a search action: utterance_number counts utterances before.
    MetadataInputs action = metadata_inputs_for(s1, 4);
    CHECK(action.utterance_number == 3.0);
    CHECK(action.duration_s == 0.0);
    CHECK(action.prev_speech_act == SpeechAct::Answer);
    CHECK(action.prev_user_speech_act == SpeechAct::QuestionSeek);
}

TEST_CASE("hash stub encoder matches its documented formula") {
    HashStubEncoder enc(4);
    Eigen::MatrixXd m = enc.encode("hello world");
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 4);
    for (int j = 0; j < 4; ++j) {
        std::uint64_t h = fnv1a64(std::string("hello"));
        std::uint64_t mixed = h ^ (static_cast<std::uint64_t>(j) * 0x9e3779b97f4a7c15ULL);
        double expected = static_cast<double>(mixed % 2001) / 1000.0 - 1.0;
        CHECK(m(0, j) == expected);
        CHECK(m(0, j) >= -1.0);
        CHECK(m(0, j) <= 1.0);
    }
    Eigen::MatrixXd again = enc.encode("hello world");
    CHECK(m == again);

    Eigen::MatrixXd empty = enc.encode("");
    CHECK(empty.rows() == 1);  // start token
    CHECK(empty == enc.encode("<s>"));
}

TEST_CASE("file encoder round-trips precomputed embeddings") {
    std::string path =
        (std::filesystem::temp_directory_path() / "emb.tsv").string();
    {
        std::ofstream out(path);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(std::string("hi there"))));
        out << buf << " 2 3 0.5 -1 2 0.25 0 1.5\n";
    }
    FileEncoder enc(path);
    CHECK(enc.width() == 3);
    Eigen::MatrixXd m = enc.encode("hi there");
    REQUIRE(m.rows() == 2);
    CHECK(m(0, 0) == 0.5);
    CHECK(m(1, 2) == 1.5);
    CHECK_THROWS_AS(enc.encode("unknown text"), InvalidArgument);
    std::remove(path.c_str());
}

TEST_CASE("precomputed annotator replays stored tokens by key") {
    std::string path =
        (std::filesystem::temp_directory_path() / "annot_tokens.tsv").string();
    {
        std::ofstream out(path);
        out << "session_id\tevent_index\ttoken_index\tsurface\tner\tflags\tpos_c\tpos_f\tdep\t"
               "dist\tsstart\n";
        out << "s1\t0\t0\tHi\tNONE\t100000\tINTJ\tUH\tdiscourse\t0\t1\t\n";
        out << "s1\t0\t1\tJoanna\tPERSON\t100001\tPROPN\tNNP\tvocative\t1\t0\t\n";
    }
    PrecomputedAnnotator ann(path);
    ann.set_key("s1", 0);
    auto toks = ann.annotate("ignored");
    REQUIRE(toks.size() == 2);
    CHECK(toks[0].surface == "Hi");
    CHECK(toks[0].alphabetic);
    CHECK(toks[1].ner_type == "PERSON");
    CHECK(toks[1].oov);
    CHECK(toks[1].pos_coarse == "PROPN");
    ann.set_key("s1", 99);
    CHECK_THROWS_AS(ann.annotate("x"), InvalidArgument);
    std::remove(path.c_str());
}

TEST_CASE("schema json round-trip preserves the hash") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    FeatureSchema s = schema_with_moments(c);
    FeatureSchema back = FeatureSchema::from_json(s.to_json());
    CHECK(back.hash() == s.hash());
    CHECK(back.linguistic.width() == s.linguistic.width());
    CHECK(back.metadata.system_ids == s.metadata.system_ids);

    back.linguistic.max_len = 99;
    CHECK(back.hash() != s.hash());
}

TEST_CASE("channel names, parsing, and canonical order") {
    CHECK(channel_name(Channel::Embedding) == "bert");
    CHECK(parse_channel("meta") == Channel::Meta);
    CHECK(parse_channel("bert") == Channel::Embedding);
    CHECK_FALSE(parse_channel("nope").has_value());
    std::vector<Channel> shuffled = {Channel::Embedding, Channel::Meta, Channel::Linguistic};
    std::vector<Channel> expect = {Channel::Meta, Channel::Linguistic, Channel::Embedding};
    CHECK(canonical_channels(shuffled) == expect);
}
