#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgda/corpus.hpp"
#include "lgda/model.hpp"
#include "lgda/prompt_template.hpp"

namespace lgda {

/// Multiple-to-one verbalizer: label_words[y] is the ordered list of words mapped to class y.
struct Verbalizer {
    std::vector<TokenSeq> label_words;

    std::size_t class_count() const { return label_words.size(); }
    /// k_y; throws if classes disagree.
    std::size_t words_per_class() const;
    /// Checks the structural invariants (non-empty, in range, non-special, distinct within a
    /// class; with `strict`, also disjoint across classes).
    void validate(std::size_t vocab_size, bool strict = false) const;
    bool has_cross_class_overlap() const;
    /// One line per class, comma-separated words.
    std::string to_text(const Vocab& vocab) const;
    std::vector<std::vector<std::string>> words(const Vocab& vocab) const;

    bool operator==(const Verbalizer&) const = default;
};

/// One line per class in class-id order, or a single line with `|` between classes.
/// All classes must have the same number of words.
Verbalizer parse_verbalizer(std::string_view text, const Vocab& vocab);
Verbalizer load_manual_verbalizer(const std::filesystem::path& path, const Vocab& vocab);
void save_verbalizer(const Verbalizer& verbalizer, const Vocab& vocab, const std::filesystem::path& path);

enum class ScoreSpace { probability, log_probability };

/// true where a token may serve as a label word: not special, not a template word.
std::vector<bool> candidacy_mask(std::size_t vocab_size, const PromptTemplate& t);

inline constexpr double kExcludedScore = -std::numeric_limits<double>::infinity();

/// Sum over the examples of the mask distribution (or its log) at every vocabulary token.
/// Ineligible tokens get kExcludedScore.
std::vector<double> candidate_scores(const ModelParams& model, std::span<const LabeledExample> class_examples,
                                     const PromptTemplate& t, ScoreSpace space = ScoreSpace::probability);

/// Same score from precomputed mask distributions.
std::vector<double> candidate_scores_from_distributions(std::span<const std::vector<double>> distributions,
                                                        const std::vector<bool>& eligible,
                                                        ScoreSpace space = ScoreSpace::probability);

struct CandidateList {
    TokenSeq ids;
    std::vector<double> scores;
};

/// Per class Top-m candidates.
using CandidateSet = std::vector<CandidateList>;

/// The m highest finite scores, ties by ascending token id. Throws ConfigError if fewer than
/// m tokens are eligible.
CandidateList top_m(std::span<const double> scores, std::size_t m);

inline constexpr std::uint64_t kDefaultSearchBudget = 1'000'000;

/// prod over classes of C(|candidates_y|, k); saturates at UINT64_MAX.
std::uint64_t candidate_space_size(const CandidateSet& candidates, std::size_t k);
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// Lazily walks every verbalizer formed by choosing k words per class from the candidate
/// lists. Order is lexicographic over (class 0 combination, class 1 combination, ...), each
/// combination being a sorted index set into the class's candidate list.
class VerbalizerEnumerator {
public:
    VerbalizerEnumerator(CandidateSet candidates, std::size_t k, std::uint64_t budget = kDefaultSearchBudget);

    std::uint64_t size() const noexcept { return size_; }
    std::optional<Verbalizer> next();

private:
    bool advance();

    CandidateSet candidates_;
    std::size_t k_;
    std::uint64_t size_;
    std::vector<std::vector<std::size_t>> combo_;
    bool started_ = false;
    bool done_ = false;
};

struct SearchConfig {
    std::size_t m = 4;
    std::size_t n = 1;
    std::size_t k = 3;
    std::uint64_t seed = 0;
    std::uint64_t budget = kDefaultSearchBudget;
    bool strict = false;
    ScoreSpace score_space = ScoreSpace::probability;

    void validate() const;
};

/// Fraction of D_train classified correctly with the max-aggregation rule.
double train_accuracy(const ModelParams& model, const Verbalizer& verbalizer, const DatasetSplit& train,
                      const PromptTemplate& t);

struct ScoredVerbalizer {
    Verbalizer verbalizer;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

struct SearchResult {
    Verbalizer verbalizer;
    double accuracy = 0.0;
    CandidateSet candidates;
    /// Top-n by accuracy (descending, enumeration order among equals).
    std::vector<ScoredVerbalizer> shortlist;
    /// Shortlist members tied at the best accuracy.
    std::size_t tied = 0;
    std::uint64_t evaluated = 0;
};

/// Automatic label-word search: Top-m candidates per class from summed mask likelihoods,
/// exhaustive accuracy ranking of every k-per-class combination, Top-n shortlist, and a
/// seeded uniform pick among shortlist members tied at the best accuracy.
SearchResult select_verbalizer(const ModelParams& model, const DatasetSplit& train, const PromptTemplate& t,
                               const SearchConfig& cfg);

/// JSON sidecar describing a search: candidates with scores, shortlist, chosen verbalizer.
std::string search_report_json(const SearchResult& result, const Vocab& vocab);

}  // namespace lgda
