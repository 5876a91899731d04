#ifndef CONVACT_CORPUS_HPP
#define CONVACT_CORPUS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "convact/labels.hpp"

namespace convact {

struct Utterance {
    std::string session_id;
    int event_index = 0;
    Speaker speaker = Speaker::User;
    std::string text;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    SpeechAct speech_act = SpeechAct::QuestionSeek;
};

// Search actions are performed by the agent only; the loader rejects rows
// that attribute one to the user.
struct SearchActionEvent {
    std::string session_id;
    int event_index = 0;
    std::int64_t timestamp_ms = 0;
    SearchAction action = SearchAction::QueryCreationRefinement;
};

using Event = std::variant<Utterance, SearchActionEvent>;

int event_index_of(const Event& e);
std::int64_t event_time_of(const Event& e);

struct Session {
    std::string session_id;
    std::string user_id;
    std::string task_id;
    int task_complexity = 0;
    std::string system_id;
    std::vector<Event> events;  // ordered by event_index

    std::size_t utterance_count() const;
    std::size_t action_count() const;
};

struct Corpus {
    std::vector<Session> sessions;
    std::string provenance;  // e.g. "convex", "scs", "synthetic"

    std::size_t utterance_count() const;
    std::size_t action_count() const;
};

enum class CorpusFormat { Tsv, Jsonl };

// One row per event, tab-delimited, header required. See write_corpus for
// the column list. JSONL: one session object per line.
Corpus load_corpus(const std::string& path, CorpusFormat format);
void write_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format);

struct Violation {
    std::string session_id;
    int event_index = -1;  // -1 for session-level violations
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool clean() const { return violations.empty(); }
};

ValidationReport validate(const Corpus& corpus);

struct Split {
    std::vector<std::size_t> train;  // indices into the instance list
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
    double ratio = 0.0;
};

// Stratified instance split, deterministic in (seed, ratio, instance order).
// Strata with fewer than two members are merged into a remainder pool.
Split stratified_split(const std::vector<int>& labels, std::uint64_t seed, double ratio);

struct CorpusStats {
    std::map<std::string, std::size_t> speech_act_counts;    // by code S1..S12
    std::map<std::string, std::size_t> search_action_counts; // by code SR1..SR4
    std::map<std::string, std::size_t> speaker_counts;       // "user"/"agent"
    std::map<std::string, std::size_t> task_utterance_counts;
    std::size_t total_utterances = 0;
    std::size_t total_actions = 0;
    std::size_t total_sessions = 0;
};

CorpusStats stats(const Corpus& corpus);

}  // namespace convact

#endif
