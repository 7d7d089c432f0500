#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lgda/rng.hpp"

namespace lgda {

using TokenId = std::int32_t;
using ClassId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kMaskId = 0;
inline constexpr TokenId kPadId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr TokenId kNumSpecials = 3;

/// Token <-> id mapping. Ids 0..2 are the special tokens [MASK], [PAD], [UNK];
/// corpus tokens are always lowercase, so they never collide with the specials.
class Vocab {
public:
    static constexpr std::string_view kMaskToken = "[MASK]";
    static constexpr std::string_view kPadToken = "[PAD]";
    static constexpr std::string_view kUnkToken = "[UNK]";

    /// Vocabulary holding only the specials.
    Vocab();

    /// Specials followed by `tokens` in the given order. Duplicates or special names are rejected.
    static Vocab from_tokens(const std::vector<std::string>& tokens);

    std::size_t size() const noexcept { return tokens_.size(); }
    bool contains(std::string_view token) const;
    std::optional<TokenId> find(std::string_view token) const;
    /// Id of `token`, kUnkId when absent.
    TokenId id(std::string_view token) const;
    /// Throws UnknownWordError when absent.
    TokenId require(std::string_view token) const;
    const std::string& token(TokenId id) const;
    static bool is_special(TokenId id) noexcept { return id >= 0 && id < kNumSpecials; }

    /// All tokens in id order, specials included.
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// One token per line, in id order.
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    void add(std::string token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Lowercase (ASCII) whitespace split.
std::vector<std::string> split_words(std::string_view text);

/// Tokens of frequency >= min_freq ordered by (-frequency, token), after the specials.
/// `reserved` words are always included (ranked with their corpus frequency, possibly 0).
/// Throws EmptyCorpusError if no corpus token survives min_freq.
Vocab build_vocab(const std::vector<std::string>& lines, std::size_t min_freq,
                  const std::vector<std::string>& reserved = {});

TokenSeq tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(const TokenSeq& ids, const Vocab& vocab);

struct LabeledExample {
    TokenSeq tokens;
    ClassId label = 0;

    bool operator==(const LabeledExample&) const = default;
};

struct DatasetSplit {
    std::vector<LabeledExample> examples;
    std::size_t class_count = 0;
    /// Label string of each dense class id.
    std::vector<std::string> label_names;

    std::size_t size() const noexcept { return examples.size(); }
    std::vector<std::size_t> class_histogram() const;
    bool operator==(const DatasetSplit&) const = default;
};

/// Text records before tokenization.
struct TextRecord {
    std::string text;
    std::string label;

    bool operator==(const TextRecord&) const = default;
};

enum class DatasetFormat { jsonl, tsv };

DatasetFormat parse_dataset_format(std::string_view name);
/// Format from the file extension (.jsonl/.json -> jsonl, .tsv -> tsv).
DatasetFormat format_from_extension(const std::filesystem::path& path);

std::vector<TextRecord> read_records(const std::filesystem::path& path, DatasetFormat format);
void write_records(const std::vector<TextRecord>& records, const std::filesystem::path& path,
                   DatasetFormat format);

/// Tokenizes records and maps labels to dense ids. Labels already named in `label_names`
/// keep their id; new labels get the next id in first-appearance order.
DatasetSplit encode_records(const std::vector<TextRecord>& records, const Vocab& vocab,
                            std::vector<std::string> label_names = {});

DatasetSplit load_dataset(const std::filesystem::path& path, DatasetFormat format,
                          const Vocab& vocab, std::vector<std::string> label_names = {});
void save_dataset(const DatasetSplit& split, const Vocab& vocab,
                  const std::filesystem::path& path, DatasetFormat format);

/// Examples of one class, in split order.
std::vector<LabeledExample> examples_of_class(const DatasetSplit& split, ClassId label);

struct KShotSplits {
    DatasetSplit train;
    DatasetSplit val;
};

/// Draws 2K examples per class without replacement: first K go to train, the next K to val.
/// Output is class-major, in draw order within a class.
KShotSplits kshot_sample(const DatasetSplit& full, std::size_t k, std::uint64_t seed);

struct SyntheticSpec {
    std::size_t class_count = 2;
    std::vector<std::string> label_names;
    /// Class-indicative words, one list per class. Lists must be disjoint.
    std::vector<std::vector<std::string>> cue_words;
    std::vector<std::string> filler_words;
    /// Label-preserving synonyms for filler words (used to build the substitution lexicon).
    std::vector<std::vector<std::string>> filler_synonym_groups;
    std::size_t min_length = 6;
    std::size_t max_length = 10;
    std::size_t corpus_size = 3000;
    /// Examples per class in the labeled pool and in the test set.
    std::size_t pool_per_class = 64;
    std::size_t test_per_class = 1000;
    /// Distinct cue words per class actually used (prefix of each cue list).
    std::size_t redundancy = 4;
    /// Probability that a pretraining line ends with "it is <cue>".
    double prompt_rate = 0.5;
    /// Probability that the closing cue repeats a cue already in the line.
    double echo_rate = 0.6;
    /// Probability that a task example carries a cue word of another class.
    double distractor_rate = 0.15;

    /// Two-class sentiment-flavoured default.
    static SyntheticSpec defaults();
    void validate() const;
};

struct SyntheticData {
    std::vector<std::string> corpus;
    std::vector<TextRecord> pool;
    std::vector<TextRecord> test;
    /// word -> substitutes, all drawn from the corpus domain.
    std::vector<std::pair<std::string, std::vector<std::string>>> lexicon;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace lgda
