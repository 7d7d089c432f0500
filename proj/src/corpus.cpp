#include "lgda/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lgda/errors.hpp"

namespace lgda {

Vocab::Vocab() {
    add(std::string(kMaskToken));
    add(std::string(kPadToken));
    add(std::string(kUnkToken));
}

void Vocab::add(std::string token) {
    const auto id = static_cast<TokenId>(tokens_.size());
    if (!index_.emplace(token, id).second) {
        throw Error("duplicate vocabulary token: '" + token + "'");
    }
    tokens_.push_back(std::move(token));
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& t : tokens) v.add(t);
    return v;
}

bool Vocab::contains(std::string_view token) const { return find(token).has_value(); }

std::optional<TokenId> Vocab::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

TokenId Vocab::id(std::string_view token) const { return find(token).value_or(kUnkId); }

TokenId Vocab::require(std::string_view token) const {
    auto found = find(token);
    if (!found) throw UnknownWordError(std::string(token));
    return *found;
}

const std::string& Vocab::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw Error("token id out of range: " + std::to_string(id));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write vocabulary: " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read vocabulary: " + path.string());
    std::vector<std::string> all;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        all.push_back(line);
    }
    if (all.size() < static_cast<std::size_t>(kNumSpecials) || all[0] != kMaskToken ||
        all[1] != kPadToken || all[2] != kUnkToken) {
        throw ParseError(path.string(), 1, "vocabulary file must start with the special tokens");
    }
    return from_tokens(std::vector<std::string>(all.begin() + kNumSpecials, all.end()));
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!current.empty()) words.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    // Special tokens keep their canonical spelling so they cannot pass as ordinary words.
    for (auto& w : words) {
        for (auto special : {Vocab::kMaskToken, Vocab::kPadToken, Vocab::kUnkToken}) {
            std::string lowered(special);
            for (auto& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            if (w == lowered) w = std::string(special);
        }
    }
    return words;
}

Vocab build_vocab(const std::vector<std::string>& lines, std::size_t min_freq,
                  const std::vector<std::string>& reserved) {
    std::map<std::string, std::size_t> freq;
    for (const auto& line : lines) {
        for (auto& w : split_words(line)) ++freq[std::move(w)];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [word, count] : freq) {
        if (word.front() == '[' && Vocab{}.contains(word)) continue;
        if (count >= std::max<std::size_t>(min_freq, 1)) kept.emplace_back(word, count);
    }
    if (kept.empty()) throw EmptyCorpusError("no token reaches min_freq=" + std::to_string(min_freq));
    for (const auto& r : reserved) {
        for (auto& w : split_words(r)) {
            auto already = std::find_if(kept.begin(), kept.end(),
                                        [&](const auto& p) { return p.first == w; });
            if (already == kept.end()) {
                auto it = freq.find(w);
                kept.emplace_back(w, it == freq.end() ? 0 : it->second);
            }
        }
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> ordered;
    ordered.reserve(kept.size());
    for (auto& p : kept) ordered.push_back(std::move(p.first));
    return Vocab::from_tokens(ordered);
}

TokenSeq tokenize(std::string_view text, const Vocab& vocab) {
    TokenSeq ids;
    for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
    return ids;
}

std::string detokenize(const TokenSeq& ids, const Vocab& vocab) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += vocab.token(ids[i]);
    }
    return out;
}

std::vector<std::size_t> DatasetSplit::class_histogram() const {
    std::vector<std::size_t> hist(class_count, 0);
    for (const auto& ex : examples) ++hist.at(static_cast<std::size_t>(ex.label));
    return hist;
}

DatasetFormat parse_dataset_format(std::string_view name) {
    if (name == "jsonl") return DatasetFormat::jsonl;
    if (name == "tsv") return DatasetFormat::tsv;
    throw UnknownFormatError("unknown dataset format: '" + std::string(name) + "'");
}

DatasetFormat format_from_extension(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".jsonl" || ext == ".json") return DatasetFormat::jsonl;
    if (ext == ".tsv") return DatasetFormat::tsv;
    throw UnknownFormatError("cannot infer dataset format from '" + path.string() + "'");
}

std::vector<TextRecord> read_records(const std::filesystem::path& path, DatasetFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset: " + path.string());
    std::vector<TextRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        TextRecord rec;
        if (format == DatasetFormat::jsonl) {
            nlohmann::json obj;
            try {
                obj = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(path.string(), line_no, std::string("invalid JSON: ") + e.what());
            }
            if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string()) {
                throw ParseError(path.string(), line_no, "missing string field 'text'");
            }
            if (!obj.contains("label")) throw ParseError(path.string(), line_no, "missing field 'label'");
            rec.text = obj["text"].get<std::string>();
            const auto& label = obj["label"];
            if (label.is_string()) {
                rec.label = label.get<std::string>();
            } else if (label.is_number_integer()) {
                rec.label = std::to_string(label.get<long long>());
            } else {
                throw ParseError(path.string(), line_no, "field 'label' must be a string or integer");
            }
        } else {
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw ParseError(path.string(), line_no, "missing label column");
            rec.text = line.substr(0, tab);
            rec.label = line.substr(tab + 1);
            if (rec.label.empty() || rec.label.find('\t') != std::string::npos) {
                throw ParseError(path.string(), line_no, "expected exactly two columns: text<TAB>label");
            }
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void write_records(const std::vector<TextRecord>& records, const std::filesystem::path& path,
                   DatasetFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write dataset: " + path.string());
    for (const auto& r : records) {
        if (format == DatasetFormat::jsonl) {
            nlohmann::ordered_json obj;
            obj["text"] = r.text;
            obj["label"] = r.label;
            out << obj.dump() << '\n';
        } else {
            if (r.text.find_first_of("\t\n") != std::string::npos) {
                throw Error("text contains a tab or newline and cannot be written as TSV");
            }
            out << r.text << '\t' << r.label << '\n';
        }
    }
}

DatasetSplit encode_records(const std::vector<TextRecord>& records, const Vocab& vocab,
                            std::vector<std::string> label_names) {
    DatasetSplit split;
    split.label_names = std::move(label_names);
    std::unordered_map<std::string, ClassId> label_ids;
    for (std::size_t i = 0; i < split.label_names.size(); ++i) {
        label_ids.emplace(split.label_names[i], static_cast<ClassId>(i));
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        auto [it, inserted] = label_ids.emplace(r.label, static_cast<ClassId>(split.label_names.size()));
        if (inserted) split.label_names.push_back(r.label);
        LabeledExample ex{tokenize(r.text, vocab), it->second};
        if (ex.tokens.empty()) throw EmptyInputError("record " + std::to_string(i + 1) + " has empty text");
        if (std::find(ex.tokens.begin(), ex.tokens.end(), kMaskId) != ex.tokens.end() ||
            std::find(ex.tokens.begin(), ex.tokens.end(), kPadId) != ex.tokens.end()) {
            throw Error("record " + std::to_string(i + 1) + " contains a reserved token");
        }
        split.examples.push_back(std::move(ex));
    }
    split.class_count = split.label_names.size();
    return split;
}

DatasetSplit load_dataset(const std::filesystem::path& path, DatasetFormat format,
                          const Vocab& vocab, std::vector<std::string> label_names) {
    return encode_records(read_records(path, format), vocab, std::move(label_names));
}

void save_dataset(const DatasetSplit& split, const Vocab& vocab,
                  const std::filesystem::path& path, DatasetFormat format) {
    std::vector<TextRecord> records;
    records.reserve(split.size());
    for (const auto& ex : split.examples) {
        records.push_back({detokenize(ex.tokens, vocab),
                           split.label_names.at(static_cast<std::size_t>(ex.label))});
    }
    write_records(records, path, format);
}

std::vector<LabeledExample> examples_of_class(const DatasetSplit& split, ClassId label) {
    std::vector<LabeledExample> out;
    for (const auto& ex : split.examples) {
        if (ex.label == label) out.push_back(ex);
    }
    return out;
}

KShotSplits kshot_sample(const DatasetSplit& full, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ConfigError("K must be at least 1");
    KShotSplits out;
    out.train.class_count = out.val.class_count = full.class_count;
    out.train.label_names = out.val.label_names = full.label_names;
    Rng rng(seed);
    for (std::size_t c = 0; c < full.class_count; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < full.examples.size(); ++i) {
            if (full.examples[i].label == static_cast<ClassId>(c)) members.push_back(i);
        }
        if (members.size() < 2 * k) {
            const std::string name = c < full.label_names.size() ? full.label_names[c] : std::to_string(c);
            throw InsufficientExamplesError("class '" + name + "' has " + std::to_string(members.size()) +
                                            " examples, needs " + std::to_string(2 * k));
        }
        rng.shuffle(members);
        for (std::size_t i = 0; i < k; ++i) out.train.examples.push_back(full.examples[members[i]]);
        for (std::size_t i = k; i < 2 * k; ++i) out.val.examples.push_back(full.examples[members[i]]);
    }
    return out;
}

SyntheticSpec SyntheticSpec::defaults() {
    SyntheticSpec s;
    s.class_count = 2;
    s.label_names = {"positive", "negative"};
    s.cue_words = {{"good", "great", "nice", "superb", "fine", "lovely"},
                   {"bad", "awful", "poor", "dull", "weak", "boring"}};
    s.filler_words = {"the",    "a",     "movie",   "film",  "picture", "plot",   "story",
                      "tale",   "actor", "performer", "cast", "scene",  "was",    "and",
                      "with",   "this",  "show",    "script", "music",  "ending", "role",
                      "very",   "really", "truly",  "seemed", "felt",   "director", "of",
                      "to",     "in"};
    s.filler_synonym_groups = {{"movie", "film", "picture"},
                               {"plot", "story", "tale"},
                               {"actor", "performer"},
                               {"very", "really", "truly"},
                               {"seemed", "felt"}};
    return s;
}

void SyntheticSpec::validate() const {
    if (class_count < 2) throw ConfigError("synthetic spec needs at least 2 classes");
    if (cue_words.size() != class_count) throw ConfigError("synthetic spec needs one cue list per class");
    if (!label_names.empty() && label_names.size() != class_count) {
        throw ConfigError("synthetic spec label_names must name every class");
    }
    if (redundancy == 0) throw ConfigError("synthetic spec redundancy must be at least 1");
    std::set<std::string> seen;
    for (const auto& cues : cue_words) {
        if (cues.size() < redundancy) {
            throw ConfigError("synthetic spec cue list shorter than redundancy factor");
        }
        for (std::size_t i = 0; i < redundancy; ++i) {
            if (!seen.insert(cues[i]).second) {
                throw ConfigError("synthetic spec cue lists overlap on '" + cues[i] + "'");
            }
        }
    }
    if (filler_words.empty()) throw ConfigError("synthetic spec needs filler words");
    for (const auto& f : filler_words) {
        if (seen.count(f)) throw ConfigError("filler word '" + f + "' is also a cue word");
        if (f == "it" || f == "is") throw ConfigError("filler words may not contain template words");
    }
    const std::set<std::string> fillers(filler_words.begin(), filler_words.end());
    for (const auto& group : filler_synonym_groups) {
        for (const auto& w : group) {
            if (!fillers.count(w)) throw ConfigError("synonym '" + w + "' is not a filler word");
        }
    }
    if (min_length < 3 || max_length < min_length) throw ConfigError("synthetic spec length range invalid");
    if (corpus_size <= class_count * redundancy) {
        throw ConfigError("synthetic spec corpus_size must exceed class_count * redundancy");
    }
    for (double p : {prompt_rate, echo_rate, distractor_rate}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synthetic spec rates must lie in [0,1]");
    }
}

namespace {

class SentenceMaker {
public:
    SentenceMaker(const SyntheticSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

    std::string pick(const std::vector<std::string>& from, std::size_t limit) {
        return from[rng_.uniform_index(std::min(limit, from.size()))];
    }

    std::string cue(std::size_t cls) { return pick(spec_.cue_words[cls], spec_.redundancy); }

    std::size_t other_class(std::size_t cls) {
        auto o = rng_.uniform_index(spec_.class_count - 1);
        return o >= cls ? o + 1 : o;
    }

    // Filler sentence of random length with the given cue words placed at random slots.
    std::vector<std::string> body(const std::vector<std::string>& cues) {
        const std::size_t len = spec_.min_length + rng_.uniform_index(spec_.max_length - spec_.min_length + 1);
        std::vector<std::string> words;
        for (std::size_t i = 0; i + cues.size() < len; ++i) words.push_back(pick(spec_.filler_words, spec_.filler_words.size()));
        for (const auto& c : cues) {
            const auto at = rng_.uniform_index(words.size() + 1);
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), c);
        }
        return words;
    }

    static std::string join(const std::vector<std::string>& words) {
        std::string s;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i) s.push_back(' ');
            s += words[i];
        }
        return s;
    }

private:
    const SyntheticSpec& spec_;
    Rng& rng_;
};

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    SyntheticData data;
    Rng corpus_rng(derive_seed(seed, "synthetic.corpus"));
    SentenceMaker corpus_maker(spec, corpus_rng);

    // Every cue word appears at least once so the vocabulary domain is seed independent.
    std::vector<std::string> must_cover;
    for (std::size_t c = 0; c < spec.class_count; ++c) {
        for (std::size_t i = 0; i < spec.redundancy; ++i) must_cover.push_back(spec.cue_words[c][i]);
    }
    // The last line is reserved for filler coverage.
    for (std::size_t line = 0; line + 1 < spec.corpus_size; ++line) {
        auto cls = static_cast<std::size_t>(corpus_rng.uniform_index(spec.class_count));
        if (line < must_cover.size()) cls = line / spec.redundancy;
        std::vector<std::string> cues;
        const auto n_cues = 1 + corpus_rng.uniform_index(2);
        for (std::size_t i = 0; i < n_cues; ++i) cues.push_back(corpus_maker.cue(cls));
        if (line < must_cover.size()) cues[0] = must_cover[line];
        // A neutral line (no class signal) roughly one time in eight.
        if (line >= must_cover.size() && corpus_rng.uniform_index(8) == 0) cues.clear();
        auto words = corpus_maker.body(cues);
        if (!cues.empty() && corpus_rng.bernoulli(spec.prompt_rate)) {
            words.push_back("it");
            words.push_back("is");
            words.push_back(corpus_rng.bernoulli(spec.echo_rate)
                                ? cues[corpus_rng.uniform_index(cues.size())]
                                : corpus_maker.cue(cls));
        }
        data.corpus.push_back(SentenceMaker::join(words));
    }
    data.corpus.push_back(SentenceMaker::join(spec.filler_words));

    const auto label_of = [&](std::size_t c) {
        return spec.label_names.empty() ? "class" + std::to_string(c) : spec.label_names[c];
    };
    const auto make_task = [&](std::size_t per_class, std::string_view stream) {
        Rng rng(derive_seed(seed, stream));
        SentenceMaker maker(spec, rng);
        std::vector<TextRecord> records;
        // Interleaved classes keep first-appearance label order equal to class order.
        for (std::size_t i = 0; i < per_class; ++i) {
            for (std::size_t c = 0; c < spec.class_count; ++c) {
                std::vector<std::string> cues;
                const auto n_true = 1 + rng.uniform_index(2);
                for (std::size_t j = 0; j < n_true; ++j) cues.push_back(maker.cue(c));
                if (rng.bernoulli(spec.distractor_rate)) cues.push_back(maker.cue(maker.other_class(c)));
                records.push_back({SentenceMaker::join(maker.body(cues)), label_of(c)});
            }
        }
        return records;
    };
    data.pool = make_task(spec.pool_per_class, "synthetic.pool");
    data.test = make_task(spec.test_per_class, "synthetic.test");

    std::map<std::string, std::vector<std::string>> lexicon;
    for (const auto& group : spec.filler_synonym_groups) {
        for (const auto& w : group) {
            for (const auto& s : group) {
                if (s != w) lexicon[w].push_back(s);
            }
        }
    }
    for (std::size_t c = 0; c < spec.class_count; ++c) {
        for (std::size_t i = 0; i < spec.redundancy; ++i) {
            for (std::size_t j = 0; j < spec.redundancy; ++j) {
                if (i != j) lexicon[spec.cue_words[c][i]].push_back(spec.cue_words[c][j]);
            }
        }
    }
    data.lexicon.assign(lexicon.begin(), lexicon.end());
    return data;
}

}  // namespace lgda
