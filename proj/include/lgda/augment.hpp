#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lgda/corpus.hpp"
#include "lgda/verbalizer.hpp"

namespace lgda {

/// An instance paired with one label word of its class.
struct AugmentedExample {
    TokenSeq tokens;  // x, untemplated
    TokenId target = 0;
    std::size_t origin = 0;  // index of the source example
    ClassId source_class = 0;

    bool operator==(const AugmentedExample&) const = default;
};

/// Instance-label-word pairs: every (x, y) becomes (x, v) for each label word v of class y,
/// in source order then label-word order. Instances are copied unmodified.
std::vector<AugmentedExample> prompt_da_augment(const DatasetSplit& train, const Verbalizer& verbalizer);

/// Token -> substitute tokens. Substitutes are vocabulary members and never the token itself.
class SynonymLexicon {
public:
    SynonymLexicon() = default;

    void add(TokenId token, std::vector<TokenId> substitutes);
    const std::vector<TokenId>* find(TokenId token) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    /// Word-level entries; unknown words are rejected with UnknownWordError.
    static SynonymLexicon from_words(const std::vector<std::pair<std::string, std::vector<std::string>>>& entries,
                                     const Vocab& vocab);
    /// JSON object: token -> array of tokens.
    static SynonymLexicon load(const std::filesystem::path& path, const Vocab& vocab);

private:
    std::map<TokenId, std::vector<TokenId>> entries_;
};

void save_lexicon(const std::vector<std::pair<std::string, std::vector<std::string>>>& entries,
                  const std::filesystem::path& path);

/// Conventional augmentation: the originals followed by (copies - 1) perturbed copies of the
/// split. In each copy every token with a lexicon entry is replaced, with probability `rate`,
/// by a uniformly chosen substitute. Labels are preserved.
DatasetSplit synonym_substitute(const DatasetSplit& train, const SynonymLexicon& lexicon, std::size_t copies,
                                double rate, std::uint64_t seed);

}  // namespace lgda
