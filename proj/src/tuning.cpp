#include "lgda/tuning.hpp"

#include <algorithm>
#include <numeric>

#include "lgda/errors.hpp"
#include "lgda/rng.hpp"

namespace lgda {

LossScaling parse_loss_scaling(std::string_view name) {
    if (name == "sum") return LossScaling::sum;
    if (name == "mean") return LossScaling::mean;
    throw ConfigError("unknown loss scaling '" + std::string(name) + "' (expected sum | mean)");
}

void TuneConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(adam.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
}

TuneResult tune(ModelParams params, const std::vector<AugmentedExample>& data, const PromptTemplate& t,
                const TuneConfig& cfg, const EpochScorer& validation) {
    cfg.validate();
    if (data.empty()) throw EmptyInputError("tuning set is empty");

    std::vector<MaskedSequence> items;
    items.reserve(data.size());
    for (const auto& ex : data) {
        auto in = apply_template(ex.tokens, t, params.config().max_len);
        items.push_back({std::move(in.tokens), {{in.mask_pos, ex.target}}});
    }

    Rng rng(cfg.seed);
    OptimizerState opt = OptimizerState::for_params(params, cfg.adam);
    ModelParams grads = ModelParams::zeros(params.config());
    TuneResult result;
    std::optional<ModelParams> best;
    double best_score = 0.0;

    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<MaskedSequence> batch;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        LossValue epoch_loss;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto stop = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t b = start; b < stop; ++b) batch.push_back(items[order[b]]);
            const double scale = cfg.scaling == LossScaling::mean ? 1.0 / static_cast<double>(batch.size()) : 1.0;
            grads.set_zero();
            const auto loss = accumulate_gradients(params, batch, grads, scale);
            optimizer_step(params, grads, opt);
            ++result.steps;
            epoch_loss.sum += loss.sum;
            epoch_loss.count += loss.count;
        }
        result.trace.push_back({epoch + 1, epoch_loss.mean(), epoch_loss.sum});
        if (validation) {
            const double score = validation(params);
            if (!best || score > best_score) {
                best = params;
                best_score = score;
                result.selected_epoch = epoch + 1;
            }
        }
    }
    result.params = best ? std::move(*best) : std::move(params);
    return result;
}

std::vector<AugmentedExample> standard_prompt_pairs(const DatasetSplit& train, const TokenSeq& label_words) {
    std::vector<AugmentedExample> out;
    out.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto& ex = train.examples[i];
        if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= label_words.size()) {
            throw ConfigError("no label word for class " + std::to_string(ex.label));
        }
        out.push_back({ex.tokens, label_words[static_cast<std::size_t>(ex.label)], i, ex.label});
    }
    return out;
}

void write_loss_trace_csv(const std::vector<EpochLoss>& trace, std::ostream& out) {
    const auto old_precision = out.precision(17);
    out << "epoch,mean_loss,sum_loss\n";
    for (const auto& e : trace) out << e.epoch << ',' << e.mean_loss << ',' << e.sum_loss << '\n';
    out.precision(old_precision);
}

}  // namespace lgda
