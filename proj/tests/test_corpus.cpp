#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "convact/corpus.hpp"
#include "convact/errors.hpp"

using namespace convact;
namespace fs = std::filesystem;

namespace {

const std::string kFixture = std::string(FIXTURE_DIR) + "/mini.tsv";

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

const std::string kHeader =
    "session_id\tuser_id\ttask_id\ttask_complexity\tsystem_id\tevent_index\tevent_type\t"
    "speaker\tstart_ms\tend_ms\ttext\tspeech_act\tsearch_action\n";

}  // namespace

TEST_CASE("fixture loads with hand-tallied counts") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    CHECK(c.sessions.size() == 2);
    CHECK(c.utterance_count() == 7);
    CHECK(c.action_count() == 3);

    CorpusStats s = stats(c);
    CHECK(s.total_sessions == 2);
    CHECK(s.total_utterances == 7);
    CHECK(s.total_actions == 3);
    CHECK(s.speech_act_counts.at("S12") == 2);
    CHECK(s.speech_act_counts.at("S1") == 1);
    CHECK(s.speech_act_counts.at("S4") == 2);
    CHECK(s.speech_act_counts.at("S8") == 1);
    CHECK(s.speech_act_counts.at("S10") == 1);
    CHECK(s.speech_act_counts.size() == 5);
    CHECK(s.search_action_counts.at("SR1") == 1);
    CHECK(s.search_action_counts.at("SR2") == 1);
    CHECK(s.search_action_counts.at("SR3") == 1);
    CHECK(s.speaker_counts.at("user") == 4);
    CHECK(s.speaker_counts.at("agent") == 3);
    CHECK(s.task_utterance_counts.at("health") == 4);
    CHECK(s.task_utterance_counts.at("conference") == 3);

    const Session& s1 = c.sessions[0];
    CHECK(s1.session_id == "s1");
    CHECK(s1.task_complexity == 0);
    CHECK(s1.system_id == "sys-a");
    const auto& u0 = std::get<Utterance>(s1.events[0]);
    CHECK(u0.text == "Hi Joanna .");
    CHECK(u0.speech_act == SpeechAct::GreetingsClosing);
    CHECK(u0.start_ms == 0);
    CHECK(u0.end_ms == 1200);
    const auto& a2 = std::get<SearchActionEvent>(s1.events[2]);
    CHECK(a2.action == SearchAction::QueryCreationRefinement);
    CHECK(a2.timestamp_ms == 4500);
}

TEST_CASE("clean fixture validates with zero violations") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    CHECK(validate(c).clean());
}

TEST_CASE("tsv and jsonl round-trips preserve the corpus") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);
    // Awkward text must survive both formats.
    std::get<Utterance>(c.sessions[0].events[0]).text = "tabs\tand\nnewlines \"quoted\"";

    for (CorpusFormat fmt : {CorpusFormat::Tsv, CorpusFormat::Jsonl}) {
        std::string path = temp_path(fmt == CorpusFormat::Tsv ? "rt.tsv" : "rt.jsonl");
        write_corpus(c, path, fmt);
        Corpus back = load_corpus(path, fmt);
        REQUIRE(back.sessions.size() == c.sessions.size());
        CHECK(std::get<Utterance>(back.sessions[0].events[0]).text ==
              "tabs\tand\nnewlines \"quoted\"");
        for (std::size_t i = 0; i < c.sessions.size(); ++i) {
            CHECK(back.sessions[i].session_id == c.sessions[i].session_id);
            CHECK(back.sessions[i].events.size() == c.sessions[i].events.size());
            for (std::size_t e = 0; e < c.sessions[i].events.size(); ++e) {
                CHECK(event_index_of(back.sessions[i].events[e]) ==
                      event_index_of(c.sessions[i].events[e]));
                CHECK(event_time_of(back.sessions[i].events[e]) ==
                      event_time_of(c.sessions[i].events[e]));
            }
        }
        std::remove(path.c_str());
    }
}

TEST_CASE("loader rejects malformed input") {
    std::string path = temp_path("bad.tsv");

    SUBCASE("empty file") {
        write_text(path, "");
        CHECK_THROWS_AS(load_corpus(path, CorpusFormat::Tsv), EmptyFileError);
    }
    SUBCASE("missing column") {
        write_text(path, "session_id\tuser_id\n");
        CHECK_THROWS_AS(load_corpus(path, CorpusFormat::Tsv), MissingColumnError);
    }
    SUBCASE("unknown speech act code") {
        write_text(path, kHeader +
                             "s1\tu1\tt\t0\tsys\t0\tutterance\tuser\t0\t1\thi\tS99\t\n");
        CHECK_THROWS_AS(load_corpus(path, CorpusFormat::Tsv), FormatError);
    }
    SUBCASE("user-attributed search action") {
        write_text(path, kHeader +
                             "s1\tu1\tt\t0\tsys\t0\tsearch_action\tuser\t0\t0\t\t\tSR1\n");
        CHECK_THROWS_AS(load_corpus(path, CorpusFormat::Tsv), FormatError);
    }
    SUBCASE("wrong field count") {
        write_text(path, kHeader + "s1\tu1\tt\n");
        CHECK_THROWS_AS(load_corpus(path, CorpusFormat::Tsv), MalformedRowError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_corpus(temp_path("nope-does-not-exist.tsv"), CorpusFormat::Tsv),
                        IoError);
    }
    std::remove(path.c_str());
}

TEST_CASE("validator flags the documented violations") {
    Corpus c = load_corpus(kFixture, CorpusFormat::Tsv);

    SUBCASE("negative duration") {
        auto& u = std::get<Utterance>(c.sessions[0].events[0]);
        u.start_ms = 500;
        u.end_ms = 100;
        auto report = validate(c);
        REQUIRE_FALSE(report.clean());
        CHECK(report.violations[0].session_id == "s1");
    }
    SUBCASE("empty utterance text") {
        std::get<Utterance>(c.sessions[0].events[0]).text = "";
        CHECK_FALSE(validate(c).clean());
    }
    SUBCASE("non-increasing event index") {
        std::get<Utterance>(c.sessions[0].events[1]).event_index = 0;
        CHECK_FALSE(validate(c).clean());
    }
    SUBCASE("duplicate session id") {
        c.sessions.push_back(c.sessions[0]);
        CHECK_FALSE(validate(c).clean());
    }
}

TEST_CASE("stratified split partitions every stratum across seeds 1..30") {
    // 3 strata: 10 of label 0, 5 of label 1, 4 of label 2, 1 singleton (3).
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) labels.push_back(0);
    for (int i = 0; i < 5; ++i) labels.push_back(1);
    for (int i = 0; i < 4; ++i) labels.push_back(2);
    labels.push_back(3);

    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        Split split = stratified_split(labels, seed, 0.8);
        std::set<std::size_t> seen(split.train.begin(), split.train.end());
        for (std::size_t i : split.test) CHECK(seen.insert(i).second);
        CHECK(seen.size() == labels.size());
        // Each multi-member stratum must appear on both sides.
        for (int lbl : {0, 1, 2}) {
            bool in_train = false, in_test = false;
            for (std::size_t i : split.train) in_train |= labels[i] == lbl;
            for (std::size_t i : split.test) in_test |= labels[i] == lbl;
            CHECK(in_train);
            CHECK(in_test);
        }
    }
}

TEST_CASE("stratified split is deterministic and validates its arguments") {
    std::vector<int> labels = {0, 0, 0, 1, 1, 1, 1, 1};
    Split a = stratified_split(labels, 7, 0.75);
    Split b = stratified_split(labels, 7, 0.75);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    Split c = stratified_split(labels, 8, 0.75);
    CHECK((a.train != c.train || a.test != c.test));

    CHECK_THROWS_AS(stratified_split(labels, 1, 0.0), InvalidArgument);
    CHECK_THROWS_AS(stratified_split(labels, 1, 1.0), InvalidArgument);
    CHECK_THROWS_AS(stratified_split({0}, 1, 0.5), InvalidArgument);
}

TEST_CASE("split sizes follow the rounding-and-clamp rule") {
    // 10 members at 0.8 -> 8 train; 2 members -> clamp keeps 1 on each side.
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) labels.push_back(0);
    labels.push_back(1);
    labels.push_back(1);
    Split split = stratified_split(labels, 3, 0.8);
    std::size_t train0 = 0, train1 = 0;
    for (std::size_t i : split.train) (labels[i] == 0 ? train0 : train1)++;
    CHECK(train0 == 8);
    CHECK(train1 == 1);
}
