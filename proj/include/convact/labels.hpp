#ifndef CONVACT_LABELS_HPP
#define CONVACT_LABELS_HPP

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace convact {

// Twelve-way speech act taxonomy (codes S1..S12).
enum class SpeechAct : int {
    QuestionSeek = 0,    // S1
    AcceptReject,        // S2
    CounterOffer,        // S3
    Answer,              // S4
    Clarify,             // S5
    InformDeclare,       // S6
    Evaluation,          // S7
    Instruct,            // S8
    Repeat,              // S9
    Confirmation,        // S10
    Courtesy,            // S11
    GreetingsClosing,    // S12
};

// Four-way agent search action taxonomy (codes SR1..SR4).
enum class SearchAction : int {
    QueryCreationRefinement = 0,  // SR1
    SerpScanning,                 // SR2
    DocumentScanning,             // SR3
    OrganizingAnswers,            // SR4
};

inline constexpr std::size_t kNumSpeechActs = 12;
inline constexpr std::size_t kNumSearchActions = 4;

std::string speech_act_code(SpeechAct a);          // "S1".."S12"
std::string speech_act_name(SpeechAct a);          // "Question/Seek", ...
std::string search_action_code(SearchAction a);    // "SR1".."SR4"
std::string search_action_name(SearchAction a);

// Parse a code like "S7" / "SR2". Empty optional on unknown codes.
std::optional<SpeechAct> parse_speech_act(std::string_view code);
std::optional<SearchAction> parse_search_action(std::string_view code);

std::array<SpeechAct, kNumSpeechActs> all_speech_acts();
std::array<SearchAction, kNumSearchActions> all_search_actions();

enum class Speaker : int { User = 0, Agent = 1 };

std::string speaker_name(Speaker s);  // "user" / "agent"
std::optional<Speaker> parse_speaker(std::string_view name);

}  // namespace convact

#endif
