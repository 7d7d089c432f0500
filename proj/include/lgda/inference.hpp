#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <vector>

#include "lgda/corpus.hpp"
#include "lgda/model.hpp"
#include "lgda/prompt_template.hpp"
#include "lgda/verbalizer.hpp"

namespace lgda {

/// How label-word probabilities combine into a class score. `max` is the default rule;
/// `mean` exists only for ablations.
enum class Aggregation { max, mean };

Aggregation parse_aggregation(std::string_view name);

struct ClassScores {
    std::vector<double> class_scores;
    /// word_probs[y][i]: mask probability of the i-th label word of class y.
    std::vector<std::vector<double>> word_probs;
};

/// Mask distribution of T(x).
std::vector<double> mask_distribution(const ModelParams& model, const TokenSeq& x, const PromptTemplate& t);

ClassScores class_scores_from_distribution(std::span<const double> distribution, const Verbalizer& verbalizer,
                                           Aggregation agg = Aggregation::max);

ClassScores class_scores(const ModelParams& model, const TokenSeq& x, const PromptTemplate& t,
                         const Verbalizer& verbalizer, Aggregation agg = Aggregation::max);

/// Highest class score; exact ties go to the lowest class id.
ClassId argmax_class(std::span<const double> scores);

ClassId predict(const ModelParams& model, const TokenSeq& x, const PromptTemplate& t, const Verbalizer& verbalizer,
                Aggregation agg = Aggregation::max);

struct Prediction {
    std::size_t index = 0;
    ClassId gold = 0;
    ClassId predicted = 0;
    std::vector<double> scores;
};

struct Evaluation {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::vector<Prediction> predictions;

    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

Evaluation evaluate(const ModelParams& model, const DatasetSplit& split, const PromptTemplate& t,
                    const Verbalizer& verbalizer, Aggregation agg = Aggregation::max);

/// CSV: example_index,gold,predicted,score_0,...,score_{C-1}
void write_predictions_csv(const Evaluation& eval, std::size_t class_count, std::ostream& out);

}  // namespace lgda
