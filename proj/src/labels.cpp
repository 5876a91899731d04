#include "convact/labels.hpp"

namespace convact {

namespace {

constexpr std::array<const char*, kNumSpeechActs> kSpeechActNames = {
    "Question/Seek",   "Accept/Reject", "Counter/Offer", "Answer",
    "Clarify",         "Inform/Declare", "Evaluation",   "Instruct",
    "Repeat",          "Confirmation",  "Courtesy",      "Greetings/Closing",
};

constexpr std::array<const char*, kNumSearchActions> kSearchActionNames = {
    "Query Creation/Refinement",
    "SERP Scanning",
    "Document Scanning",
    "Organizing Answers from Multiple Documents",
};

}  // namespace

std::string speech_act_code(SpeechAct a) {
    return "S" + std::to_string(static_cast<int>(a) + 1);
}

std::string speech_act_name(SpeechAct a) {
    return kSpeechActNames[static_cast<std::size_t>(a)];
}

std::string search_action_code(SearchAction a) {
    return "SR" + std::to_string(static_cast<int>(a) + 1);
}

std::string search_action_name(SearchAction a) {
    return kSearchActionNames[static_cast<std::size_t>(a)];
}

std::optional<SpeechAct> parse_speech_act(std::string_view code) {
    if (code.size() < 2 || code.size() > 3 || code[0] != 'S') return std::nullopt;
    if (code[1] < '1' || code[1] > '9') return std::nullopt;
    int n = 0;
    for (std::size_t i = 1; i < code.size(); ++i) {
        if (code[i] < '0' || code[i] > '9') return std::nullopt;
        n = n * 10 + (code[i] - '0');
    }
    if (n < 1 || n > static_cast<int>(kNumSpeechActs)) return std::nullopt;
    return static_cast<SpeechAct>(n - 1);
}

std::optional<SearchAction> parse_search_action(std::string_view code) {
    if (code.size() != 3 || code[0] != 'S' || code[1] != 'R') return std::nullopt;
    int n = code[2] - '0';
    if (n < 1 || n > static_cast<int>(kNumSearchActions)) return std::nullopt;
    return static_cast<SearchAction>(n - 1);
}

std::array<SpeechAct, kNumSpeechActs> all_speech_acts() {
    std::array<SpeechAct, kNumSpeechActs> out{};
    for (std::size_t i = 0; i < kNumSpeechActs; ++i) out[i] = static_cast<SpeechAct>(i);
    return out;
}

std::array<SearchAction, kNumSearchActions> all_search_actions() {
    std::array<SearchAction, kNumSearchActions> out{};
    for (std::size_t i = 0; i < kNumSearchActions; ++i) out[i] = static_cast<SearchAction>(i);
    return out;
}

std::string speaker_name(Speaker s) {
    return s == Speaker::User ? "user" : "agent";
}

std::optional<Speaker> parse_speaker(std::string_view name) {
    if (name == "user") return Speaker::User;
    if (name == "agent") return Speaker::Agent;
    return std::nullopt;
}

}  // namespace convact
