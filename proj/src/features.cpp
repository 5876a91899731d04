#include "convact/features.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "convact/errors.hpp"

namespace convact {

namespace {

using nlohmann::json;

const std::set<std::string>& stopword_set() {
    static const std::set<std::string> kStopwords = {
        "a",    "an",   "and",  "are",  "as",    "at",    "be",   "by",    "can",
        "could", "did",  "do",   "does", "for",   "from",  "had",  "has",   "have",
        "he",   "her",  "his",  "how",  "i",     "if",    "in",   "is",    "it",
        "its",  "may",  "me",   "my",   "no",    "not",   "of",   "on",    "or",
        "our",  "she",  "so",   "that", "the",   "their", "them", "then",  "there",
        "these", "they", "this", "to",   "was",   "we",    "were", "what",  "when",
        "where", "which", "who", "will", "with",  "would", "you",  "your",  "yes",
        "should", "like", "now"};
    return kStopwords;
}

// Known-word lexicon for the rule-based annotator. Alphabetic tokens outside
// the stopword set and this list are flagged out-of-vocabulary.
const std::set<std::string>& lexicon_set() {
    static const std::set<std::string> kLexicon = {
        "price",   "deadline", "reviews",  "okay",    "fine",   "sorry",   "look",
        "check",   "answer",   "one",      "query",   "search", "costs",   "dollars",
        "total",   "options",  "listed",   "tell",    "focus",  "try",     "include",
        "sounds",  "directly", "use",      "sure",    "exactly", "today",  "thanks",
        "waiting", "hi",       "hello",    "good",    "bye",    "great",   "find",
        "online",  "say",      "right",    "please",  "more",   "about",   "anything",
        "else",    "want",     "only",     "instead", "well",   "also",    "into",
        "able",    "help",     "looking",  "give",    "few",    "minutes", "name",
        "specific", "too",     "complex",  "steps",   "again",  "last",    "time",
        "long",    "thing",    "things",   "people",  "best",   "listen",  "talking"};
    return kLexicon;
}

bool is_punct_char(unsigned char c) {
    return std::ispunct(c) != 0;
}

bool looks_like_url(const std::string& tok) {
    return tok.rfind("http://", 0) == 0 || tok.rfind("https://", 0) == 0 ||
           tok.rfind("www.", 0) == 0;
}

std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Whitespace split, then peel leading/trailing punctuation into their own
// tokens. URLs are kept whole.
std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream ss(text);
    std::string chunk;
    while (ss >> chunk) {
        if (looks_like_url(chunk)) {
            tokens.push_back(chunk);
            continue;
        }
        std::size_t begin = 0, end = chunk.size();
        std::vector<std::string> leading, trailing;
        while (begin < end && is_punct_char(static_cast<unsigned char>(chunk[begin])))
            leading.push_back(std::string(1, chunk[begin++]));
        while (end > begin && is_punct_char(static_cast<unsigned char>(chunk[end - 1])))
            trailing.insert(trailing.begin(), std::string(1, chunk[end - 1])), --end;
        for (auto& t : leading) tokens.push_back(std::move(t));
        if (end > begin) tokens.push_back(chunk.substr(begin, end - begin));
        for (auto& t : trailing) tokens.push_back(std::move(t));
    }
    return tokens;
}

bool sentence_terminal(const std::string& tok) {
    return tok == "." || tok == "?" || tok == "!";
}

std::string bucket_name(int distance) {
    return distance >= 4 ? "4+" : std::to_string(distance);
}

int vocab_index(const std::vector<std::string>& vocab, const std::string& value) {
    for (std::size_t i = 0; i < vocab.size(); ++i)
        if (vocab[i] == value) return static_cast<int>(i);
    for (std::size_t i = 0; i < vocab.size(); ++i)
        if (vocab[i] == "OTHER") return static_cast<int>(i);
    throw InvalidArgument("schema vocabulary lacks an OTHER bucket");
}

Eigen::VectorXd one_hot(int index, int width) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(width);
    v[index] = 1.0;
    return v;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::vector<TokenAnnotation> FallbackAnnotator::annotate(const std::string& text) const {
    std::vector<TokenAnnotation> out;
    int sent_pos = 0;
    for (const auto& tok : tokenize(text)) {
        TokenAnnotation a;
        a.surface = tok;
        a.url = looks_like_url(tok);
        if (!a.url) {
            a.alphabetic = !tok.empty() &&
                           std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
                               return std::isalpha(c) != 0;
                           });
            a.digit = !tok.empty() && std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
                          return std::isdigit(c) != 0;
                      });
            a.punctuation = !tok.empty() &&
                            std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
                                return is_punct_char(c);
                            });
        }
        if (a.alphabetic) {
            std::string low = lowercase(tok);
            a.stopword = stopword_set().count(low) > 0;
            a.oov = !a.stopword && lexicon_set().count(low) == 0;
        }
        a.sent_start_distance = sent_pos;
        a.sentence_start = (sent_pos == 0);
        out.push_back(std::move(a));
        sent_pos = sentence_terminal(tok) ? 0 : sent_pos + 1;
    }
    return out;
}

PrecomputedAnnotator::PrecomputedAnnotator(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw EmptyFileError(path);
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string sid, eidx, tidx, surface, ner, pos_c, pos_f, dep;
        std::string flags, dist, sstart;
        if (!std::getline(ss, sid, '\t') || !std::getline(ss, eidx, '\t') ||
            !std::getline(ss, tidx, '\t') || !std::getline(ss, surface, '\t') ||
            !std::getline(ss, ner, '\t') || !std::getline(ss, flags, '\t') ||
            !std::getline(ss, pos_c, '\t') || !std::getline(ss, pos_f, '\t') ||
            !std::getline(ss, dep, '\t') || !std::getline(ss, dist, '\t') ||
            !std::getline(ss, sstart, '\t'))
            throw MalformedRowError(line_no, "bad precomputed annotation row");
        if (flags.size() != 6) throw MalformedRowError(line_no, "flags must be 6 bits");
        TokenAnnotation a;
        a.surface = surface;
        a.ner_type = ner;
        a.alphabetic = flags[0] == '1';
        a.digit = flags[1] == '1';
        a.punctuation = flags[2] == '1';
        a.url = flags[3] == '1';
        a.stopword = flags[4] == '1';
        a.oov = flags[5] == '1';
        a.pos_coarse = pos_c;
        a.pos_fine = pos_f;
        a.dep_relation = dep;
        a.sent_start_distance = std::stoi(dist);
        a.sentence_start = sstart == "1";
        by_key_[sid + ":" + eidx].push_back(std::move(a));
    }
}

void PrecomputedAnnotator::set_key(const std::string& session_id, int event_index) const {
    current_key_ = session_id + ":" + std::to_string(event_index);
}

std::vector<TokenAnnotation> PrecomputedAnnotator::annotate(const std::string&) const {
    auto it = by_key_.find(current_key_);
    if (it == by_key_.end())
        throw InvalidArgument("no precomputed annotations for key " + current_key_);
    return it->second;
}

int LinguisticSchema::width() const {
    int w = kNumFlags + (sentence_boundary_column ? 1 : 0);
    for (const auto& b : blocks) w += static_cast<int>(b.vocab.size());
    return w;
}

LinguisticMatrix encode_linguistic(const std::vector<TokenAnnotation>& annotations,
                                   const LinguisticSchema& schema) {
    LinguisticMatrix out;
    out.rows = Eigen::MatrixXd::Zero(schema.max_len, schema.width());
    out.n_tokens = std::min<std::size_t>(annotations.size(),
                                         static_cast<std::size_t>(schema.max_len));
    for (std::size_t t = 0; t < out.n_tokens; ++t) {
        const auto& a = annotations[t];
        int col = 0;
        for (const auto& block : schema.blocks) {
            std::string value;
            if (block.name == "ner_type") value = a.ner_type;
            else if (block.name == "pos_coarse") value = a.pos_coarse;
            else if (block.name == "pos_fine") value = a.pos_fine;
            else if (block.name == "dep_relation") value = a.dep_relation;
            else if (block.name == "sent_start_distance") value = bucket_name(a.sent_start_distance);
            else throw InvalidArgument("unknown linguistic block '" + block.name + "'");
            out.rows(static_cast<int>(t), col + vocab_index(block.vocab, value)) = 1.0;
            col += static_cast<int>(block.vocab.size());
        }
        const bool flags[LinguisticSchema::kNumFlags] = {a.alphabetic, a.digit, a.punctuation,
                                                         a.url,        a.stopword, a.oov};
        for (int f = 0; f < LinguisticSchema::kNumFlags; ++f)
            out.rows(static_cast<int>(t), col + f) = flags[f] ? 1.0 : 0.0;
        col += LinguisticSchema::kNumFlags;
        if (schema.sentence_boundary_column)
            out.rows(static_cast<int>(t), col) = a.sentence_start ? 1.0 : 0.0;
    }
    return out;
}

Eigen::VectorXd MetadataVector::flat() const {
    int n = 0;
    for (const auto& [name, v] : blocks) n += static_cast<int>(v.size());
    Eigen::VectorXd out(n);
    int at = 0;
    for (const auto& [name, v] : blocks) {
        out.segment(at, v.size()) = v;
        at += static_cast<int>(v.size());
    }
    return out;
}

MetadataVector encode_metadata(const MetadataInputs& inputs, const MetadataSchema& schema) {
    if (!schema.utterance_number || !schema.duration)
        throw InvalidArgument("standardizer moments missing from metadata schema");
    auto standardize = [](double v, const StandardizerMoments& m) {
        return m.std > 0.0 ? (v - m.mean) / m.std : 0.0;
    };
    MetadataVector out;
    Eigen::VectorXd num(1), dur(1);
    num[0] = standardize(inputs.utterance_number, *schema.utterance_number);
    dur[0] = standardize(inputs.duration_s, *schema.duration);
    out.blocks.emplace_back("utterance_number", num);
    out.blocks.emplace_back("duration_s", dur);
    out.blocks.emplace_back("speaker_role",
                            one_hot(inputs.speaker == Speaker::User ? 0 : 1, 2));
    out.blocks.emplace_back(
        "system_id", one_hot(vocab_index(schema.system_ids, inputs.system_id),
                             static_cast<int>(schema.system_ids.size())));
    out.blocks.emplace_back(
        "task_complexity", one_hot(vocab_index(schema.complexities, inputs.complexity),
                                   static_cast<int>(schema.complexities.size())));
    auto act_hot = [](const std::optional<SpeechAct>& a) {
        return one_hot(a ? static_cast<int>(*a) : static_cast<int>(kNumSpeechActs),
                       static_cast<int>(kNumSpeechActs) + 1);
    };
    out.blocks.emplace_back("prev_speech_act", act_hot(inputs.prev_speech_act));
    out.blocks.emplace_back(
        "prev_search_action",
        one_hot(inputs.prev_search_action ? static_cast<int>(*inputs.prev_search_action)
                                          : static_cast<int>(kNumSearchActions),
                static_cast<int>(kNumSearchActions) + 1));
    out.blocks.emplace_back("prev_user_speech_act", act_hot(inputs.prev_user_speech_act));
    return out;
}

MetadataInputs metadata_inputs_for(const Session& session, std::size_t event_pos) {
    MetadataInputs in;
    in.system_id = session.system_id;
    in.complexity = std::to_string(session.task_complexity);
    std::size_t utterances_before = 0;
    for (std::size_t i = 0; i < event_pos; ++i) {
        const Event& e = session.events[i];
        if (const auto* u = std::get_if<Utterance>(&e)) {
            ++utterances_before;
            in.prev_speech_act = u->speech_act;
            if (u->speaker == Speaker::User) in.prev_user_speech_act = u->speech_act;
        } else {
            in.prev_search_action = std::get<SearchActionEvent>(e).action;
        }
    }
    const Event& self = session.events[event_pos];
    if (const auto* u = std::get_if<Utterance>(&self)) {
        in.utterance_number = static_cast<double>(utterances_before + 1);
        in.duration_s = static_cast<double>(u->end_ms - u->start_ms) / 1000.0;
        in.speaker = u->speaker;
    } else {
        in.utterance_number = static_cast<double>(utterances_before);
        in.duration_s = 0.0;
        in.speaker = Speaker::Agent;
    }
    return in;
}

namespace {

json schema_to_json_obj(const FeatureSchema& s) {
    json j;
    j["linguistic"]["max_len"] = s.linguistic.max_len;
    j["linguistic"]["sentence_boundary_column"] = s.linguistic.sentence_boundary_column;
    j["linguistic"]["blocks"] = json::array();
    for (const auto& b : s.linguistic.blocks)
        j["linguistic"]["blocks"].push_back({{"name", b.name}, {"vocab", b.vocab}});
    j["metadata"]["system_ids"] = s.metadata.system_ids;
    j["metadata"]["complexities"] = s.metadata.complexities;
    if (s.metadata.utterance_number)
        j["metadata"]["utterance_number"] = {{"mean", s.metadata.utterance_number->mean},
                                             {"std", s.metadata.utterance_number->std}};
    if (s.metadata.duration)
        j["metadata"]["duration"] = {{"mean", s.metadata.duration->mean},
                                     {"std", s.metadata.duration->std}};
    j["annotator"] = {{"name", s.annotator_name}, {"version", s.annotator_version}};
    j["encoder"] = {{"name", s.encoder_name}, {"width", s.encoder_width}};
    return j;
}

}  // namespace

std::string FeatureSchema::to_json() const { return schema_to_json_obj(*this).dump(2); }

FeatureSchema FeatureSchema::from_json(const std::string& text) {
    json j = json::parse(text);
    FeatureSchema s;
    s.linguistic.max_len = j.at("linguistic").at("max_len").get<int>();
    s.linguistic.sentence_boundary_column =
        j.at("linguistic").at("sentence_boundary_column").get<bool>();
    for (const auto& b : j.at("linguistic").at("blocks"))
        s.linguistic.blocks.push_back(
            {b.at("name").get<std::string>(), b.at("vocab").get<std::vector<std::string>>()});
    s.metadata.system_ids = j.at("metadata").at("system_ids").get<std::vector<std::string>>();
    s.metadata.complexities =
        j.at("metadata").at("complexities").get<std::vector<std::string>>();
    if (j.at("metadata").contains("utterance_number"))
        s.metadata.utterance_number = StandardizerMoments{
            j["metadata"]["utterance_number"]["mean"].get<double>(),
            j["metadata"]["utterance_number"]["std"].get<double>()};
    if (j.at("metadata").contains("duration"))
        s.metadata.duration =
            StandardizerMoments{j["metadata"]["duration"]["mean"].get<double>(),
                                j["metadata"]["duration"]["std"].get<double>()};
    s.annotator_name = j.at("annotator").at("name").get<std::string>();
    s.annotator_version = j.at("annotator").at("version").get<std::string>();
    s.encoder_name = j.at("encoder").at("name").get<std::string>();
    s.encoder_width = j.at("encoder").at("width").get<int>();
    return s;
}

std::uint64_t FeatureSchema::hash() const {
    // Canonical dump; nlohmann objects serialize with sorted keys.
    return fnv1a64(schema_to_json_obj(*this).dump());
}

FeatureSchema default_schema(const Corpus& corpus) {
    FeatureSchema s;
    s.linguistic.blocks = {
        {"ner_type", {"NONE", "OTHER"}},
        {"pos_coarse", {"OTHER"}},
        {"pos_fine", {"OTHER"}},
        {"dep_relation", {"OTHER"}},
        {"sent_start_distance", {"0", "1", "2", "3", "4+", "OTHER"}},
    };
    std::set<std::string> systems, complexities;
    for (const auto& sess : corpus.sessions) {
        systems.insert(sess.system_id);
        complexities.insert(std::to_string(sess.task_complexity));
    }
    s.metadata.system_ids.assign(systems.begin(), systems.end());
    s.metadata.system_ids.push_back("OTHER");
    s.metadata.complexities.assign(complexities.begin(), complexities.end());
    s.metadata.complexities.push_back("OTHER");
    return s;
}

void write_schema(const FeatureSchema& schema, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << schema.to_json() << "\n";
}

FeatureSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return FeatureSchema::from_json(buf.str());
}

Eigen::MatrixXd HashStubEncoder::encode(const std::string& text) const {
    std::vector<std::string> tokens;
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    if (tokens.empty()) tokens.push_back("<s>");
    Eigen::MatrixXd out(static_cast<int>(tokens.size()), width_);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        std::uint64_t h = fnv1a64(tokens[t]);
        for (int j = 0; j < width_; ++j) {
            std::uint64_t mixed = h ^ (static_cast<std::uint64_t>(j) * 0x9e3779b97f4a7c15ULL);
            out(static_cast<int>(t), j) = static_cast<double>(mixed % 2001) / 1000.0 - 1.0;
        }
    }
    return out;
}

FileEncoder::FileEncoder(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string hex;
        int rows = 0, width = 0;
        if (!(ss >> hex >> rows >> width) || rows <= 0 || width <= 0)
            throw MalformedRowError(line_no, "bad embedding row");
        if (width_ == 0) width_ = width;
        if (width != width_) throw MalformedRowError(line_no, "inconsistent embedding width");
        Eigen::MatrixXd m(rows, width);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < width; ++c)
                if (!(ss >> m(r, c))) throw MalformedRowError(line_no, "truncated embedding row");
        table_[std::stoull(hex, nullptr, 16)] = std::move(m);
    }
    if (table_.empty()) throw EmptyFileError(path);
}

Eigen::MatrixXd FileEncoder::encode(const std::string& text) const {
    auto it = table_.find(fnv1a64(text));
    if (it == table_.end())
        throw InvalidArgument("no precomputed embedding for text: " + text.substr(0, 40));
    return it->second;
}

std::string channel_name(Channel c) {
    switch (c) {
        case Channel::Meta: return "meta";
        case Channel::Linguistic: return "linguistic";
        case Channel::Embedding: return "bert";
    }
    return "?";
}

std::optional<Channel> parse_channel(const std::string& name) {
    if (name == "meta") return Channel::Meta;
    if (name == "linguistic") return Channel::Linguistic;
    if (name == "bert" || name == "embedding") return Channel::Embedding;
    return std::nullopt;
}

std::vector<Channel> canonical_channels(const std::vector<Channel>& subset) {
    std::vector<Channel> out;
    for (Channel c : {Channel::Meta, Channel::Linguistic, Channel::Embedding})
        if (std::find(subset.begin(), subset.end(), c) != subset.end()) out.push_back(c);
    return out;
}

}  // namespace convact
