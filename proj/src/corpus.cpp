#include "convact/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "convact/errors.hpp"

namespace convact {

namespace {

using nlohmann::json;

const std::vector<std::string> kColumns = {
    "session_id", "user_id",   "task_id", "task_complexity", "system_id",
    "event_index", "event_type", "speaker", "start_ms",       "end_ms",
    "text",        "speech_act", "search_action"};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

// Utterance text may contain tabs/newlines; they are escaped in the TSV.
std::string escape_text(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\\': out += "\\\\"; break;
            default: out += c;
        }
    }
    return out;
}

std::string unescape_text(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            char n = s[++i];
            if (n == 't') out += '\t';
            else if (n == 'n') out += '\n';
            else if (n == 'r') out += '\r';
            else if (n == '\\') out += '\\';
            else { out += '\\'; out += n; }
        } else {
            out += s[i];
        }
    }
    return out;
}

std::int64_t parse_int(const std::string& s, std::size_t line, const char* field) {
    try {
        std::size_t pos = 0;
        std::int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw MalformedRowError(line, std::string("bad integer for ") + field + ": '" + s + "'");
    }
}

struct SessionKey {
    std::string user_id, task_id, system_id;
    int task_complexity;
};

Event parse_event_row(const std::unordered_map<std::string, std::string>& row,
                      std::size_t line) {
    const std::string& type = row.at("event_type");
    const std::string& session_id = row.at("session_id");
    int event_index = static_cast<int>(parse_int(row.at("event_index"), line, "event_index"));
    if (type == "utterance") {
        Utterance u;
        u.session_id = session_id;
        u.event_index = event_index;
        auto speaker = parse_speaker(row.at("speaker"));
        if (!speaker) throw MalformedRowError(line, "bad speaker '" + row.at("speaker") + "'");
        u.speaker = *speaker;
        u.start_ms = parse_int(row.at("start_ms"), line, "start_ms");
        u.end_ms = parse_int(row.at("end_ms"), line, "end_ms");
        u.text = unescape_text(row.at("text"));
        const std::string& act = row.at("speech_act");
        auto parsed = parse_speech_act(act);
        if (!parsed) throw UnknownLabelError(act);
        u.speech_act = *parsed;
        if (!row.at("search_action").empty())
            throw MalformedRowError(line, "utterance row carries a search_action label");
        return u;
    }
    if (type == "search_action") {
        SearchActionEvent a;
        a.session_id = session_id;
        a.event_index = event_index;
        const std::string& speaker = row.at("speaker");
        if (speaker == "user")
            throw MalformedRowError(line, "search action attributed to the user");
        if (speaker != "agent" && speaker != "-")
            throw MalformedRowError(line, "bad speaker '" + speaker + "' for search action");
        a.timestamp_ms = parse_int(row.at("start_ms"), line, "start_ms");
        const std::string& act = row.at("search_action");
        auto parsed = parse_search_action(act);
        if (!parsed) throw UnknownLabelError(act);
        a.action = *parsed;
        if (!row.at("speech_act").empty())
            throw MalformedRowError(line, "search action row carries a speech_act label");
        return a;
    }
    throw MalformedRowError(line, "unknown event_type '" + type + "'");
}

Corpus load_tsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw EmptyFileError(path);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    auto cols = split_tabs(header);
    std::unordered_map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < cols.size(); ++i) col_index[trim(cols[i])] = i;
    for (const auto& required : kColumns)
        if (!col_index.count(required)) throw MissingColumnError(required);

    Corpus corpus;
    std::unordered_map<std::string, std::size_t> session_pos;
    std::string line;
    std::size_t line_no = 1;
    bool any_row = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        any_row = true;
        auto fields = split_tabs(line);
        if (fields.size() != cols.size())
            throw MalformedRowError(line_no, "expected " + std::to_string(cols.size()) +
                                                 " fields, got " + std::to_string(fields.size()));
        std::unordered_map<std::string, std::string> row;
        for (const auto& c : kColumns) row[c] = fields[col_index[c]];

        const std::string& sid = row["session_id"];
        if (!session_pos.count(sid)) {
            session_pos[sid] = corpus.sessions.size();
            Session s;
            s.session_id = sid;
            s.user_id = row["user_id"];
            s.task_id = row["task_id"];
            s.task_complexity =
                static_cast<int>(parse_int(row["task_complexity"], line_no, "task_complexity"));
            s.system_id = row["system_id"];
            corpus.sessions.push_back(std::move(s));
        }
        corpus.sessions[session_pos[sid]].events.push_back(parse_event_row(row, line_no));
    }
    if (!any_row) throw EmptyFileError(path);
    return corpus;
}

json event_to_json(const Event& e) {
    json j;
    if (const auto* u = std::get_if<Utterance>(&e)) {
        j["event_type"] = "utterance";
        j["event_index"] = u->event_index;
        j["speaker"] = speaker_name(u->speaker);
        j["start_ms"] = u->start_ms;
        j["end_ms"] = u->end_ms;
        j["text"] = u->text;
        j["speech_act"] = speech_act_code(u->speech_act);
    } else {
        const auto& a = std::get<SearchActionEvent>(e);
        j["event_type"] = "search_action";
        j["event_index"] = a.event_index;
        j["speaker"] = "agent";
        j["start_ms"] = a.timestamp_ms;
        j["search_action"] = search_action_code(a.action);
    }
    return j;
}

Event event_from_json(const json& j, const std::string& session_id, std::size_t line) {
    std::unordered_map<std::string, std::string> row;
    for (const auto& c : kColumns) row[c] = "";
    row["session_id"] = session_id;
    row["event_type"] = j.value("event_type", "");
    row["event_index"] = std::to_string(j.value("event_index", 0));
    row["speaker"] = j.value("speaker", "-");
    row["start_ms"] = std::to_string(j.value("start_ms", std::int64_t{0}));
    row["end_ms"] = std::to_string(j.value("end_ms", std::int64_t{0}));
    row["text"] = escape_text(j.value("text", ""));
    row["speech_act"] = j.value("speech_act", "");
    row["search_action"] = j.value("search_action", "");
    return parse_event_row(row, line);
}

Corpus load_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw MalformedRowError(line_no, std::string("bad JSON: ") + e.what());
        }
        Session s;
        s.session_id = j.value("session_id", "");
        if (s.session_id.empty()) throw MalformedRowError(line_no, "missing session_id");
        s.user_id = j.value("user_id", "");
        s.task_id = j.value("task_id", "");
        s.task_complexity = j.value("task_complexity", 0);
        s.system_id = j.value("system_id", "");
        if (!j.contains("events") || !j["events"].is_array())
            throw MissingColumnError("events");
        for (const auto& ev : j["events"])
            s.events.push_back(event_from_json(ev, s.session_id, line_no));
        corpus.sessions.push_back(std::move(s));
    }
    if (corpus.sessions.empty()) throw EmptyFileError(path);
    return corpus;
}

}  // namespace

int event_index_of(const Event& e) {
    return std::visit([](const auto& x) { return x.event_index; }, e);
}

std::int64_t event_time_of(const Event& e) {
    if (const auto* u = std::get_if<Utterance>(&e)) return u->start_ms;
    return std::get<SearchActionEvent>(e).timestamp_ms;
}

std::size_t Session::utterance_count() const {
    return static_cast<std::size_t>(std::count_if(
        events.begin(), events.end(),
        [](const Event& e) { return std::holds_alternative<Utterance>(e); }));
}

std::size_t Session::action_count() const {
    return events.size() - utterance_count();
}

std::size_t Corpus::utterance_count() const {
    std::size_t n = 0;
    for (const auto& s : sessions) n += s.utterance_count();
    return n;
}

std::size_t Corpus::action_count() const {
    std::size_t n = 0;
    for (const auto& s : sessions) n += s.action_count();
    return n;
}

Corpus load_corpus(const std::string& path, CorpusFormat format) {
    return format == CorpusFormat::Tsv ? load_tsv(path) : load_jsonl(path);
}

void write_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    if (format == CorpusFormat::Tsv) {
        for (std::size_t i = 0; i < kColumns.size(); ++i)
            out << (i ? "\t" : "") << kColumns[i];
        out << "\n";
        for (const auto& s : corpus.sessions) {
            for (const auto& e : s.events) {
                out << s.session_id << '\t' << s.user_id << '\t' << s.task_id << '\t'
                    << s.task_complexity << '\t' << s.system_id << '\t';
                if (const auto* u = std::get_if<Utterance>(&e)) {
                    out << u->event_index << "\tutterance\t" << speaker_name(u->speaker) << '\t'
                        << u->start_ms << '\t' << u->end_ms << '\t' << escape_text(u->text)
                        << '\t' << speech_act_code(u->speech_act) << "\t\n";
                } else {
                    const auto& a = std::get<SearchActionEvent>(e);
                    out << a.event_index << "\tsearch_action\t-\t" << a.timestamp_ms << '\t'
                        << a.timestamp_ms << "\t\t\t" << search_action_code(a.action) << "\n";
                }
            }
        }
    } else {
        for (const auto& s : corpus.sessions) {
            json j;
            j["session_id"] = s.session_id;
            j["user_id"] = s.user_id;
            j["task_id"] = s.task_id;
            j["task_complexity"] = s.task_complexity;
            j["system_id"] = s.system_id;
            j["events"] = json::array();
            for (const auto& e : s.events) j["events"].push_back(event_to_json(e));
            out << j.dump() << "\n";
        }
    }
}

ValidationReport validate(const Corpus& corpus) {
    ValidationReport report;
    std::unordered_set<std::string> seen_ids;
    for (const auto& s : corpus.sessions) {
        if (!seen_ids.insert(s.session_id).second)
            report.violations.push_back({s.session_id, -1, "duplicate session_id"});
        int last_index = -1;
        std::int64_t last_time = -1;
        for (const auto& e : s.events) {
            int idx = event_index_of(e);
            if (idx <= last_index)
                report.violations.push_back(
                    {s.session_id, idx, "event_index not strictly increasing"});
            last_index = idx;
            std::int64_t t = event_time_of(e);
            if (t < last_time)
                report.violations.push_back({s.session_id, idx, "timestamps decrease"});
            last_time = t;
            if (const auto* u = std::get_if<Utterance>(&e)) {
                if (u->end_ms < u->start_ms)
                    report.violations.push_back({s.session_id, idx, "negative duration"});
                if (trim(u->text).empty())
                    report.violations.push_back({s.session_id, idx, "empty utterance text"});
            }
        }
    }
    return report;
}

Split stratified_split(const std::vector<int>& labels, std::uint64_t seed, double ratio) {
    if (ratio <= 0.0 || ratio >= 1.0)
        throw InvalidArgument("split ratio must be in (0, 1)");
    if (labels.size() < 2) throw InvalidArgument("too few instances to split");

    std::map<int, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < labels.size(); ++i) strata[labels[i]].push_back(i);

    // Singleton strata cannot be split proportionally; pool them.
    std::vector<std::size_t> remainder;
    for (auto it = strata.begin(); it != strata.end();) {
        if (it->second.size() < 2) {
            remainder.insert(remainder.end(), it->second.begin(), it->second.end());
            it = strata.erase(it);
        } else {
            ++it;
        }
    }
    if (!remainder.empty()) strata[-1] = std::move(remainder);

    Split split;
    split.seed = seed;
    split.ratio = ratio;
    std::mt19937_64 rng(seed);
    for (auto& [label, members] : strata) {
        std::shuffle(members.begin(), members.end(), rng);
        if (members.size() == 1) {  // lone pooled instance: keep it trainable
            split.train.push_back(members[0]);
            continue;
        }
        auto n_train =
            static_cast<std::size_t>(static_cast<double>(members.size()) * ratio + 0.5);
        n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
        split.train.insert(split.train.end(), members.begin(), members.begin() + n_train);
        split.test.insert(split.test.end(), members.begin() + n_train, members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

CorpusStats stats(const Corpus& corpus) {
    CorpusStats st;
    st.total_sessions = corpus.sessions.size();
    for (const auto& s : corpus.sessions) {
        for (const auto& e : s.events) {
            if (const auto* u = std::get_if<Utterance>(&e)) {
                ++st.total_utterances;
                ++st.speech_act_counts[speech_act_code(u->speech_act)];
                ++st.speaker_counts[speaker_name(u->speaker)];
                ++st.task_utterance_counts[s.task_id];
            } else {
                const auto& a = std::get<SearchActionEvent>(e);
                ++st.total_actions;
                ++st.search_action_counts[search_action_code(a.action)];
            }
        }
    }
    return st;
}

}  // namespace convact
