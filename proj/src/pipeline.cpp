#include "convact/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "convact/errors.hpp"

namespace convact {

std::vector<SpeechInstance> make_speech_instances(const Corpus& corpus) {
    std::vector<SpeechInstance> out;
    for (const auto& session : corpus.sessions) {
        for (std::size_t pos = 0; pos < session.events.size(); ++pos) {
            const auto* u = std::get_if<Utterance>(&session.events[pos]);
            if (!u) continue;
            SpeechInstance inst;
            inst.locator = {session.session_id, u->event_index};
            inst.text = u->text;
            inst.meta = metadata_inputs_for(session, pos);
            inst.gold = u->speech_act;
            out.push_back(std::move(inst));
        }
    }
    return out;
}

namespace {

std::string last_n_tokens(const std::string& text, int n) {
    std::vector<std::string> tokens;
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    std::size_t start = tokens.size() > static_cast<std::size_t>(n)
                            ? tokens.size() - static_cast<std::size_t>(n)
                            : 0;
    std::string out;
    for (std::size_t i = start; i < tokens.size(); ++i) {
        if (!out.empty()) out += ' ';
        out += tokens[i];
    }
    return out;
}

}  // namespace

std::vector<SearchInstance> make_search_instances(const Corpus& corpus, ActSource act_source,
                                                  const std::map<Locator, SpeechAct>* predictions,
                                                  int max_context_tokens) {
    if (act_source == ActSource::Predicted && !predictions)
        throw InvalidArgument("predicted act source requires a prediction map");
    std::vector<SearchInstance> out;
    for (const auto& session : corpus.sessions) {
        for (std::size_t pos = 0; pos < session.events.size(); ++pos) {
            const auto* action = std::get_if<SearchActionEvent>(&session.events[pos]);
            if (!action) continue;

            SearchInstance inst;
            inst.locator = {session.session_id, action->event_index};
            inst.gold = action->action;
            inst.act_source = act_source;
            inst.meta = metadata_inputs_for(session, pos);

            // Window: user utterances after the previous search action.
            std::string window;
            std::string latest_user_text;
            for (std::size_t i = 0; i < pos; ++i) {
                if (std::holds_alternative<SearchActionEvent>(session.events[i])) {
                    window.clear();
                    continue;
                }
                const auto& u = std::get<Utterance>(session.events[i]);
                if (u.speaker != Speaker::User) continue;
                latest_user_text = u.text;
                if (!window.empty()) window += ' ';
                window += u.text;
            }
            inst.context_text =
                last_n_tokens(window.empty() ? latest_user_text : window, max_context_tokens);

            if (act_source == ActSource::Predicted) {
                // Re-derive the prev-act fields from predicted labels.
                std::optional<SpeechAct> prev, prev_user;
                for (std::size_t i = 0; i < pos; ++i) {
                    const auto* u = std::get_if<Utterance>(&session.events[i]);
                    if (!u) continue;
                    auto it = predictions->find({session.session_id, u->event_index});
                    if (it == predictions->end())
                        throw InvalidArgument("missing prediction for " + session.session_id +
                                              ":" + std::to_string(u->event_index));
                    prev = it->second;
                    if (u->speaker == Speaker::User) prev_user = it->second;
                }
                inst.meta.prev_speech_act = prev;
                inst.meta.prev_user_speech_act = prev_user;
            }
            out.push_back(std::move(inst));
        }
    }
    return out;
}

void fit_standardizer(FeatureSchema& schema, const std::vector<MetadataInputs>& inputs,
                      const std::vector<std::size_t>& train_indices) {
    if (train_indices.empty()) throw InvalidArgument("empty training split for standardizer");
    auto moments = [&](auto field) {
        double mean = 0.0;
        for (std::size_t i : train_indices) mean += field(inputs[i]);
        mean /= static_cast<double>(train_indices.size());
        double var = 0.0;
        for (std::size_t i : train_indices) {
            double d = field(inputs[i]) - mean;
            var += d * d;
        }
        var /= static_cast<double>(train_indices.size());
        return StandardizerMoments{mean, std::sqrt(var)};
    };
    schema.metadata.utterance_number =
        moments([](const MetadataInputs& m) { return m.utterance_number; });
    schema.metadata.duration = moments([](const MetadataInputs& m) { return m.duration_s; });
}

ChannelSet build_channels(const std::string& text, const MetadataInputs& meta, int label,
                          const std::vector<Channel>& channels, const FeatureSchema& schema,
                          const Providers& providers, const Locator* locator) {
    if (channels.empty()) throw InvalidArgument("channel subset must be non-empty");
    ChannelSet out;
    out.label = label;
    for (Channel c : canonical_channels(channels)) {
        switch (c) {
            case Channel::Meta:
                out.meta = encode_metadata(meta, schema.metadata);
                break;
            case Channel::Linguistic: {
                if (!providers.annotator)
                    throw InvalidArgument("linguistic channel requested without an annotator");
                if (const auto* pre =
                        dynamic_cast<const PrecomputedAnnotator*>(providers.annotator)) {
                    if (!locator)
                        throw InvalidArgument("precomputed annotator requires a locator");
                    pre->set_key(locator->session_id, locator->event_index);
                }
                out.linguistic =
                    encode_linguistic(providers.annotator->annotate(text), schema.linguistic);
                break;
            }
            case Channel::Embedding:
                if (!providers.encoder)
                    throw InvalidArgument("bert channel requested without an encoder");
                out.embedding = providers.encoder->encode(text);
                break;
        }
    }
    return out;
}

PipelinePredictions run_two_stage(const Corpus& corpus, const AdnnModel& speech_model,
                                  const AdnnModel& search_model, const Providers& providers) {
    if (speech_model.schema().hash() != search_model.schema().hash() &&
        speech_model.schema().metadata.system_ids != search_model.schema().metadata.system_ids)
        throw InvalidArgument("speech and search models use incompatible schemas");

    PipelinePredictions preds;
    std::map<Locator, SpeechAct> predicted_acts;

    // Stage 1: speech acts for every utterance.
    for (const auto& inst : make_speech_instances(corpus)) {
        ChannelSet cs =
            build_channels(inst.text, inst.meta, static_cast<int>(inst.gold),
                           speech_model.config().channels, speech_model.schema(), providers,
                           &inst.locator);
        Prediction p = speech_model.predict(cs);
        auto act = static_cast<SpeechAct>(p.label);
        predicted_acts[inst.locator] = act;
        preds.rows.push_back({inst.locator, "speech", speech_act_code(inst.gold),
                              speech_act_code(act), p.distribution[p.label]});
    }

    // Stage 2: search actions with predicted prev-act metadata.
    int max_ctx = search_model.schema().linguistic.max_len;
    for (const auto& inst :
         make_search_instances(corpus, ActSource::Predicted, &predicted_acts, max_ctx)) {
        ChannelSet cs = build_channels(inst.context_text, inst.meta,
                                       static_cast<int>(inst.gold),
                                       search_model.config().channels, search_model.schema(),
                                       providers, &inst.locator);
        Prediction p = search_model.predict(cs);
        preds.rows.push_back({inst.locator, "search", search_action_code(inst.gold),
                              search_action_code(static_cast<SearchAction>(p.label)),
                              p.distribution[p.label]});
    }
    return preds;
}

void write_predictions_tsv(const PipelinePredictions& preds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "session_id\tevent_index\tstage\tgold\tpredicted\tp_max\n";
    char buf[64];
    for (const auto& r : preds.rows) {
        std::snprintf(buf, sizeof(buf), "%.6f", r.p_max);
        out << r.locator.session_id << '\t' << r.locator.event_index << '\t' << r.stage << '\t'
            << r.gold << '\t' << r.predicted << '\t' << buf << '\n';
    }
}

}  // namespace convact
