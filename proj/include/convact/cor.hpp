#ifndef CONVACT_COR_HPP
#define CONVACT_COR_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "convact/corpus.hpp"
#include "convact/labels.hpp"

namespace convact {

// Dialogue grammar over speech-act labels, in the spirit of the
// Conversational Roles (COR) family of state-transition models. The default
// grammar shipped here is a handcrafted artifact for sequence validation and
// synthetic fixture generation, not a reconstruction of any published
// network.
struct CorTransition {
    std::string from;
    Speaker speaker = Speaker::User;
    SpeechAct act = SpeechAct::QuestionSeek;
    std::string to;
    double weight = 1.0;  // sampling weight for the generator
};

struct CorGrammar {
    std::vector<std::string> states;
    std::string start_state;
    std::vector<std::string> accepting_states;
    std::vector<CorTransition> transitions;
    // Per-act utterance template pools. Placeholders: <oov> rare word,
    // <num> number, <url> address; expanded by the generator.
    std::map<std::string, std::vector<std::string>> templates;

    bool is_accepting(const std::string& state) const;
    // Deterministic transition lookup; nullptr when undefined.
    const CorTransition* find(const std::string& state, Speaker speaker, SpeechAct act) const;
};

CorGrammar default_grammar();
CorGrammar load_grammar(const std::string& path);
void write_grammar(const CorGrammar& grammar, const std::string& path);

struct SequenceViolation {
    std::size_t index = 0;  // position in the act sequence; size() for end-state
    std::string message;
};

std::vector<SequenceViolation> validate_sequence(
    const std::vector<std::pair<Speaker, SpeechAct>>& acts, const CorGrammar& grammar);

// Deterministic per seed. The session validates against the same grammar,
// opens and closes with S12 under the default grammar, and a search action
// is inserted before every agent answer.
Session generate_dialogue(std::uint64_t seed, int target_turns, const CorGrammar& grammar);

Corpus generate_corpus(std::size_t n_sessions, std::uint64_t base_seed, int target_turns,
                       const CorGrammar& grammar);

}  // namespace convact

#endif
