#include "lgda/inference.hpp"

#include <iomanip>

#include "lgda/errors.hpp"

namespace lgda {

Aggregation parse_aggregation(std::string_view name) {
    if (name == "max") return Aggregation::max;
    if (name == "mean") return Aggregation::mean;
    throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected max | mean)");
}

std::vector<double> mask_distribution(const ModelParams& model, const TokenSeq& x, const PromptTemplate& t) {
    const auto in = apply_template(x, t, model.config().max_len);
    return forward_mask_distribution(model, in.tokens, in.mask_pos);
}

ClassScores class_scores_from_distribution(std::span<const double> distribution, const Verbalizer& verbalizer,
                                           Aggregation agg) {
    if (verbalizer.label_words.empty()) throw ConfigError("verbalizer has no classes");
    ClassScores out;
    out.class_scores.reserve(verbalizer.class_count());
    for (const auto& words : verbalizer.label_words) {
        if (words.empty()) throw ConfigError("verbalizer class without label words");
        std::vector<double> probs;
        probs.reserve(words.size());
        for (TokenId w : words) probs.push_back(distribution[static_cast<std::size_t>(w)]);
        double score = probs.front();
        if (agg == Aggregation::max) {
            for (double p : probs) score = std::max(score, p);
        } else {
            score = 0.0;
            for (double p : probs) score += p;
            score /= static_cast<double>(probs.size());
        }
        out.class_scores.push_back(score);
        out.word_probs.push_back(std::move(probs));
    }
    return out;
}

ClassScores class_scores(const ModelParams& model, const TokenSeq& x, const PromptTemplate& t,
                         const Verbalizer& verbalizer, Aggregation agg) {
    verbalizer.validate(model.config().vocab_size);
    return class_scores_from_distribution(mask_distribution(model, x, t), verbalizer, agg);
}

ClassId argmax_class(std::span<const double> scores) {
    if (scores.empty()) throw ConfigError("no class scores");
    std::size_t best = 0;
    for (std::size_t y = 1; y < scores.size(); ++y) {
        if (scores[y] > scores[best]) best = y;
    }
    return static_cast<ClassId>(best);
}

ClassId predict(const ModelParams& model, const TokenSeq& x, const PromptTemplate& t, const Verbalizer& verbalizer,
                Aggregation agg) {
    return argmax_class(class_scores(model, x, t, verbalizer, agg).class_scores);
}

Evaluation evaluate(const ModelParams& model, const DatasetSplit& split, const PromptTemplate& t,
                    const Verbalizer& verbalizer, Aggregation agg) {
    if (split.examples.empty()) throw EmptyInputError("cannot evaluate on an empty split");
    verbalizer.validate(model.config().vocab_size);
    Evaluation eval;
    eval.total = split.size();
    eval.predictions.reserve(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) {
        const auto& ex = split.examples[i];
        auto scores = class_scores_from_distribution(mask_distribution(model, ex.tokens, t), verbalizer, agg);
        Prediction p{i, ex.label, argmax_class(scores.class_scores), std::move(scores.class_scores)};
        if (p.predicted == p.gold) ++eval.correct;
        eval.predictions.push_back(std::move(p));
    }
    return eval;
}

void write_predictions_csv(const Evaluation& eval, std::size_t class_count, std::ostream& out) {
    out << "example_index,gold,predicted";
    for (std::size_t y = 0; y < class_count; ++y) out << ",score_" << y;
    out << '\n';
    const auto old_precision = out.precision(17);
    for (const auto& p : eval.predictions) {
        out << p.index << ',' << p.gold << ',' << p.predicted;
        for (double s : p.scores) out << ',' << s;
        out << '\n';
    }
    out.precision(old_precision);
}

}  // namespace lgda
