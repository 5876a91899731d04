#include "convact/cor.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "convact/errors.hpp"

namespace convact {

namespace {

using nlohmann::json;

const std::vector<std::string> kOovPool = {
    "bergamot", "joanna",  "lavender", "sephora", "cologne",
    "turmeric", "rhinitis", "neurips",  "kaltura", "polly"};

const std::vector<std::string> kUrlPool = {
    "http://shop.example.com", "http://health.example.org/faq",
    "http://papers.example.net"};

std::vector<std::string> tokenize_template(const std::string& tmpl) {
    std::vector<std::string> out;
    std::istringstream ss(tmpl);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

}  // namespace

bool CorGrammar::is_accepting(const std::string& state) const {
    return std::find(accepting_states.begin(), accepting_states.end(), state) !=
           accepting_states.end();
}

const CorTransition* CorGrammar::find(const std::string& state, Speaker speaker,
                                      SpeechAct act) const {
    for (const auto& t : transitions)
        if (t.from == state && t.speaker == speaker && t.act == act) return &t;
    return nullptr;
}

CorGrammar default_grammar() {
    CorGrammar g;
    g.states = {"start",     "greeted",  "ready",    "requested", "repeat_requested",
                "clarifying", "countered", "accepted", "answered",  "evaluated",
                "courtesy",   "farewell", "closed"};
    g.start_state = "start";
    g.accepting_states = {"closed"};

    auto add = [&g](const char* from, Speaker sp, SpeechAct act, const char* to, double w) {
        g.transitions.push_back({from, sp, act, to, w});
    };
    using A = SpeechAct;
    add("start", Speaker::User, A::GreetingsClosing, "greeted", 1.0);
    add("greeted", Speaker::Agent, A::GreetingsClosing, "ready", 1.0);
    add("ready", Speaker::User, A::QuestionSeek, "requested", 1.0);
    add("requested", Speaker::Agent, A::AcceptReject, "accepted", 0.40);
    add("requested", Speaker::Agent, A::Clarify, "clarifying", 0.25);
    add("requested", Speaker::Agent, A::CounterOffer, "countered", 0.20);
    add("requested", Speaker::Agent, A::Repeat, "repeat_requested", 0.15);
    add("repeat_requested", Speaker::User, A::QuestionSeek, "requested", 1.0);
    add("clarifying", Speaker::User, A::Confirmation, "accepted", 0.6);
    add("clarifying", Speaker::User, A::InformDeclare, "accepted", 0.4);
    add("countered", Speaker::User, A::Confirmation, "accepted", 0.5);
    add("countered", Speaker::User, A::Instruct, "accepted", 0.5);
    add("accepted", Speaker::Agent, A::Answer, "answered", 1.0);
    add("answered", Speaker::User, A::Evaluation, "evaluated", 0.6);
    add("answered", Speaker::User, A::Repeat, "accepted", 0.2);
    add("answered", Speaker::User, A::InformDeclare, "accepted", 0.2);
    add("evaluated", Speaker::User, A::QuestionSeek, "requested", 0.4);
    add("evaluated", Speaker::Agent, A::Courtesy, "courtesy", 0.4);
    add("evaluated", Speaker::User, A::GreetingsClosing, "farewell", 0.2);
    add("courtesy", Speaker::User, A::QuestionSeek, "requested", 0.5);
    add("courtesy", Speaker::User, A::GreetingsClosing, "farewell", 0.5);
    add("farewell", Speaker::Agent, A::GreetingsClosing, "closed", 1.0);

    // Template pools. Each act keeps a fixed token-count and token-class
    // shape so the rule-based annotator yields act-separable features.
    g.templates["S1"] = {"what is the price of <oov> ?",
                         "what is the deadline for <oov> ?",
                         "what are the reviews for <oov> ?"};
    g.templates["S2"] = {"okay let me look into it now .",
                         "fine i will check on that now .",
                         "sorry i can not answer that one ."};
    g.templates["S3"] = {"would you like me to query <oov> <oov> ?",
                         "should i search instead for <oov> <oov> then ?"};
    g.templates["S4"] = {"it costs <num> dollars total .",
                         "the answer is <num> dollars .",
                         "there are <num> options listed ."};
    g.templates["S5"] = {"can you tell me more about the <oov> please ?",
                         "do you want me to focus on <oov> only ?"};
    g.templates["S6"] = {"no , in <oov> .", "well , try <oov> .", "also , include <oov> ."};
    g.templates["S7"] = {"that is <oov> .", "this was <oov> .", "that sounds <oov> ."};
    g.templates["S8"] = {"search on <url> now .", "query <url> directly please ."};
    g.templates["S9"] = {"can you repeat that ?", "could you restate that ?",
                         "can you repeat it ?"};
    g.templates["S10"] = {"yes .", "no .", "sure .", "exactly ."};
    g.templates["S11"] = {"is there anything else i can help you with today ?",
                          "can i do anything else for you right now today ?",
                          "thanks for waiting is there more i can do today ?"};
    g.templates["S12.open"] = {"hi <oov> .", "hello <oov> ."};
    g.templates["S12.close"] = {"good bye <oov> .", "okay bye <oov> ."};
    return g;
}

CorGrammar load_grammar(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError("bad grammar JSON: " + std::string(e.what()));
    }
    CorGrammar g;
    g.states = j.at("states").get<std::vector<std::string>>();
    g.start_state = j.at("start_state").get<std::string>();
    g.accepting_states = j.at("accepting_states").get<std::vector<std::string>>();
    for (const auto& t : j.at("transitions")) {
        CorTransition tr;
        tr.from = t.at("from").get<std::string>();
        auto sp = parse_speaker(t.at("speaker").get<std::string>());
        if (!sp) throw FormatError("bad speaker in grammar transition");
        tr.speaker = *sp;
        auto act = parse_speech_act(t.at("act").get<std::string>());
        if (!act) throw UnknownLabelError(t.at("act").get<std::string>());
        tr.act = *act;
        tr.to = t.at("to").get<std::string>();
        tr.weight = t.value("weight", 1.0);
        if (g.find(tr.from, tr.speaker, tr.act))
            throw FormatError("nondeterministic grammar: duplicate transition from " + tr.from);
        g.transitions.push_back(std::move(tr));
    }
    if (j.contains("templates"))
        g.templates = j["templates"].get<std::map<std::string, std::vector<std::string>>>();
    return g;
}

void write_grammar(const CorGrammar& grammar, const std::string& path) {
    json j;
    j["states"] = grammar.states;
    j["start_state"] = grammar.start_state;
    j["accepting_states"] = grammar.accepting_states;
    j["transitions"] = json::array();
    for (const auto& t : grammar.transitions) {
        j["transitions"].push_back({{"from", t.from},
                                    {"speaker", speaker_name(t.speaker)},
                                    {"act", speech_act_code(t.act)},
                                    {"to", t.to},
                                    {"weight", t.weight}});
    }
    j["templates"] = grammar.templates;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<SequenceViolation> validate_sequence(
    const std::vector<std::pair<Speaker, SpeechAct>>& acts, const CorGrammar& grammar) {
    std::vector<SequenceViolation> violations;
    std::string state = grammar.start_state;
    for (std::size_t i = 0; i < acts.size(); ++i) {
        const auto* t = grammar.find(state, acts[i].first, acts[i].second);
        if (!t) {
            violations.push_back({i, speaker_name(acts[i].first) + " " +
                                         speech_act_code(acts[i].second) +
                                         " not allowed in state '" + state + "'"});
            continue;  // stay in state, keep scanning
        }
        state = t->to;
    }
    if (!grammar.is_accepting(state))
        violations.push_back(
            {acts.size(), "no closing ritual: sequence ends in non-accepting state '" + state + "'"});
    return violations;
}

namespace {

// Shortest transition count from each state to an accepting state.
std::unordered_map<std::string, int> distances_to_accepting(const CorGrammar& g) {
    std::unordered_map<std::string, int> dist;
    std::deque<std::string> queue;
    for (const auto& s : g.accepting_states) {
        dist[s] = 0;
        queue.push_back(s);
    }
    while (!queue.empty()) {
        std::string cur = queue.front();
        queue.pop_front();
        for (const auto& t : g.transitions) {
            if (t.to == cur && !dist.count(t.from)) {
                dist[t.from] = dist[cur] + 1;
                queue.push_back(t.from);
            }
        }
    }
    return dist;
}

std::string expand_template(const std::string& tmpl, std::mt19937_64& rng) {
    std::string out;
    for (const auto& tok : tokenize_template(tmpl)) {
        std::string word = tok;
        if (tok == "<oov>") {
            word = kOovPool[rng() % kOovPool.size()];
        } else if (tok == "<num>") {
            word = std::to_string(2 + rng() % 998);
        } else if (tok == "<url>") {
            word = kUrlPool[rng() % kUrlPool.size()];
        }
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

const std::vector<std::string>& template_pool(const CorGrammar& g, const CorTransition& t) {
    std::string key = speech_act_code(t.act);
    if (t.act == SpeechAct::GreetingsClosing) {
        std::string variant = (t.to == "greeted" || t.to == "ready") ? key + ".open" : key + ".close";
        auto it = g.templates.find(variant);
        if (it != g.templates.end()) return it->second;
    }
    auto it = g.templates.find(key);
    if (it == g.templates.end())
        throw InvalidArgument("grammar has no templates for act " + key);
    return it->second;
}

SearchAction pick_search_action(SpeechAct last_user_act, std::mt19937_64& rng) {
    switch (last_user_act) {
        case SpeechAct::Instruct: return SearchAction::QueryCreationRefinement;
        case SpeechAct::Confirmation: return SearchAction::SerpScanning;
        case SpeechAct::InformDeclare: return SearchAction::OrganizingAnswers;
        case SpeechAct::Repeat: return SearchAction::SerpScanning;
        default: {
            double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            if (u < 0.3) return SearchAction::QueryCreationRefinement;
            if (u < 0.8) return SearchAction::DocumentScanning;
            return SearchAction::OrganizingAnswers;
        }
    }
}

}  // namespace

Session generate_dialogue(std::uint64_t seed, int target_turns, const CorGrammar& grammar) {
    if (target_turns < 2) throw InvalidArgument("target_turns must be >= 2");
    auto dist = distances_to_accepting(grammar);
    if (!dist.count(grammar.start_state))
        throw InvalidArgument("accepting state unreachable from start");

    static const char* kTasks[] = {"health", "conference", "perfume"};
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    Session session;
    session.session_id = "synth-" + std::to_string(seed);
    session.user_id = "u" + std::to_string(seed % 25 + 1);
    session.task_id = kTasks[seed % 3];
    session.task_complexity = session.task_id == std::string("health") ? 0 : 1;
    session.system_id = (seed % 2 == 0) ? "sys-a" : "sys-b";

    std::string state = grammar.start_state;
    int event_index = 0;
    std::int64_t clock_ms = 0;
    int utterances = 0;
    SpeechAct last_user_act = SpeechAct::QuestionSeek;
    const int max_events = 6 * target_turns + 24;

    while (!grammar.is_accepting(state)) {
        if (event_index > max_events)
            throw InvalidArgument("grammar failed to reach an accepting state within bounds");
        std::vector<const CorTransition*> options;
        for (const auto& t : grammar.transitions)
            if (t.from == state) options.push_back(&t);
        if (options.empty())
            throw InvalidArgument("dead-end state '" + state + "' in grammar");

        const CorTransition* choice = nullptr;
        if (utterances >= target_turns) {
            // Wind down: head for the accepting state.
            for (const auto* t : options) {
                auto it = dist.find(t->to);
                if (it == dist.end()) continue;
                if (!choice || it->second < dist.at(choice->to)) choice = t;
            }
            if (!choice) throw InvalidArgument("no path to accepting state from '" + state + "'");
        } else {
            double total = 0.0;
            for (const auto* t : options) total += t->weight;
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (const auto* t : options) {
                u -= t->weight;
                choice = t;
                if (u <= 0.0) break;
            }
        }

        // The agent runs a search before every answer.
        if (choice->speaker == Speaker::Agent && choice->act == SpeechAct::Answer) {
            SearchActionEvent a;
            a.session_id = session.session_id;
            a.event_index = event_index++;
            a.timestamp_ms = clock_ms;
            a.action = pick_search_action(last_user_act, rng);
            session.events.emplace_back(a);
            clock_ms += 1000 + static_cast<std::int64_t>(rng() % 1000);
        }

        Utterance utt;
        utt.session_id = session.session_id;
        utt.event_index = event_index++;
        utt.speaker = choice->speaker;
        utt.speech_act = choice->act;
        const auto& pool = template_pool(grammar, *choice);
        utt.text = expand_template(pool[rng() % pool.size()], rng);
        auto tokens = tokenize_template(utt.text);
        utt.start_ms = clock_ms;
        utt.end_ms = clock_ms + 350 * static_cast<std::int64_t>(tokens.size()) +
                     static_cast<std::int64_t>(rng() % 400);
        clock_ms = utt.end_ms + 300 + static_cast<std::int64_t>(rng() % 500);
        session.events.emplace_back(utt);
        ++utterances;
        if (choice->speaker == Speaker::User) last_user_act = choice->act;
        state = choice->to;
    }
    return session;
}

Corpus generate_corpus(std::size_t n_sessions, std::uint64_t base_seed, int target_turns,
                       const CorGrammar& grammar) {
    Corpus corpus;
    corpus.provenance = "synthetic";
    for (std::size_t i = 0; i < n_sessions; ++i)
        corpus.sessions.push_back(generate_dialogue(base_seed + i, target_turns, grammar));
    return corpus;
}

}  // namespace convact
