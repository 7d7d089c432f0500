#include "lgda/augment.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "lgda/errors.hpp"
#include "lgda/rng.hpp"

namespace lgda {

std::vector<AugmentedExample> prompt_da_augment(const DatasetSplit& train, const Verbalizer& verbalizer) {
    std::vector<AugmentedExample> out;
    std::size_t total = 0;
    for (const auto& ex : train.examples) {
        if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= verbalizer.class_count()) {
            throw ConfigError("verbalizer has no label words for class " + std::to_string(ex.label));
        }
        total += verbalizer.label_words[static_cast<std::size_t>(ex.label)].size();
    }
    out.reserve(total);
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto& ex = train.examples[i];
        for (TokenId word : verbalizer.label_words[static_cast<std::size_t>(ex.label)]) {
            out.push_back({ex.tokens, word, i, ex.label});
        }
    }
    return out;
}

void SynonymLexicon::add(TokenId token, std::vector<TokenId> substitutes) {
    substitutes.erase(std::remove(substitutes.begin(), substitutes.end(), token), substitutes.end());
    if (substitutes.empty()) return;
    auto& slot = entries_[token];
    for (TokenId s : substitutes) {
        if (std::find(slot.begin(), slot.end(), s) == slot.end()) slot.push_back(s);
    }
}

const std::vector<TokenId>* SynonymLexicon::find(TokenId token) const {
    auto it = entries_.find(token);
    return it == entries_.end() ? nullptr : &it->second;
}

SynonymLexicon SynonymLexicon::from_words(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& entries, const Vocab& vocab) {
    SynonymLexicon lex;
    for (const auto& [word, subs] : entries) {
        std::vector<TokenId> ids;
        for (const auto& s : subs) ids.push_back(vocab.require(s));
        lex.add(vocab.require(word), std::move(ids));
    }
    return lex;
}

SynonymLexicon SynonymLexicon::load(const std::filesystem::path& path, const Vocab& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open lexicon: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string(), 1, std::string("invalid lexicon JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(path.string(), 1, "lexicon must be a JSON object");
    std::vector<std::pair<std::string, std::vector<std::string>>> entries;
    for (const auto& [word, subs] : j.items()) {
        if (!subs.is_array()) throw ParseError(path.string(), 1, "lexicon entry '" + word + "' is not an array");
        auto& e = entries.emplace_back(word, std::vector<std::string>{});
        for (const auto& s : subs) e.second.push_back(s.get<std::string>());
    }
    return from_words(entries, vocab);
}

void save_lexicon(const std::vector<std::pair<std::string, std::vector<std::string>>>& entries,
                  const std::filesystem::path& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [word, subs] : entries) j[word] = subs;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write lexicon: " + path.string());
    out << j.dump(2) << '\n';
}

DatasetSplit synonym_substitute(const DatasetSplit& train, const SynonymLexicon& lexicon, std::size_t copies,
                                double rate, std::uint64_t seed) {
    if (copies == 0) throw ConfigError("synonym substitution needs copies >= 1");
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("substitution rate must lie in [0,1]");
    DatasetSplit out = train;
    Rng rng(seed);
    for (std::size_t c = 1; c < copies; ++c) {
        for (const auto& ex : train.examples) {
            LabeledExample copy = ex;
            for (auto& tok : copy.tokens) {
                const auto* subs = lexicon.find(tok);
                if (!subs) continue;
                // One draw per eligible token, independent of the outcome, keeps streams aligned.
                const bool replace = rng.bernoulli(rate);
                const auto pick = rng.uniform_index(subs->size());
                if (replace) tok = (*subs)[pick];
            }
            out.examples.push_back(std::move(copy));
        }
    }
    return out;
}

}  // namespace lgda
