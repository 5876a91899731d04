#ifndef CONVACT_PIPELINE_HPP
#define CONVACT_PIPELINE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convact/corpus.hpp"
#include "convact/features.hpp"
#include "convact/model.hpp"

namespace convact {

struct Locator {
    std::string session_id;
    int event_index = 0;
    bool operator<(const Locator& o) const {
        return session_id != o.session_id ? session_id < o.session_id
                                          : event_index < o.event_index;
    }
    bool operator==(const Locator& o) const = default;
};

struct SpeechInstance {
    Locator locator;
    std::string text;
    MetadataInputs meta;
    SpeechAct gold = SpeechAct::QuestionSeek;
};

enum class ActSource { Gold, Predicted };

struct SearchInstance {
    Locator locator;
    std::string context_text;  // prior user utterances, most recent window
    MetadataInputs meta;
    SearchAction gold = SearchAction::QueryCreationRefinement;
    ActSource act_source = ActSource::Gold;
};

// One instance per utterance, with metadata from the session prefix.
std::vector<SpeechInstance> make_speech_instances(const Corpus& corpus);

// One instance per search action. context_text concatenates the user
// utterances since the previous search action (or session start); when that
// window has none, the most recent user utterance in the session is used.
// With ActSource::Predicted the prev-act metadata fields are read from the
// supplied prediction map instead of gold labels.
std::vector<SearchInstance> make_search_instances(
    const Corpus& corpus, ActSource act_source,
    const std::map<Locator, SpeechAct>* predictions = nullptr,
    int max_context_tokens = 64);

// Standardizer moments from the training subset only.
void fit_standardizer(FeatureSchema& schema, const std::vector<MetadataInputs>& inputs,
                      const std::vector<std::size_t>& train_indices);

struct Providers {
    const Annotator* annotator = nullptr;
    const TextEncoder* encoder = nullptr;
};

// Builds exactly the requested channels for one instance.
ChannelSet build_channels(const std::string& text, const MetadataInputs& meta, int label,
                          const std::vector<Channel>& channels, const FeatureSchema& schema,
                          const Providers& providers,
                          const Locator* locator = nullptr);

struct PredictionRow {
    Locator locator;
    std::string stage;  // "speech" | "search"
    std::string gold;
    std::string predicted;
    double p_max = 0.0;
};

struct PipelinePredictions {
    std::vector<PredictionRow> rows;
};

// Stage 1 predicts a speech act for every utterance; stage 2 feeds those
// predictions into the search-action metadata and predicts every action.
PipelinePredictions run_two_stage(const Corpus& corpus, const AdnnModel& speech_model,
                                  const AdnnModel& search_model, const Providers& providers);

void write_predictions_tsv(const PipelinePredictions& preds, const std::string& path);

}  // namespace convact

#endif
