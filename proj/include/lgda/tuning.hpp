#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <optional>
#include <vector>

#include "lgda/augment.hpp"
#include "lgda/model.hpp"
#include "lgda/prompt_template.hpp"

namespace lgda {

enum class LossScaling { sum, mean };

LossScaling parse_loss_scaling(std::string_view name);

struct TuneConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 4;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    /// `mean` divides each batch's summed NLL by the batch size; `sum` uses it as is.
    LossScaling scaling = LossScaling::mean;

    void validate() const;
};

struct EpochLoss {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double sum_loss = 0.0;
};

struct TuneResult {
    ModelParams params;
    std::vector<EpochLoss> trace;
    std::size_t steps = 0;
    /// Set when validation-based selection was used.
    std::optional<std::size_t> selected_epoch;
};

/// Called after each epoch with the current parameters; returns a validation score where
/// higher is better. When given, tune() returns the parameters of the best-scoring epoch
/// (earliest on ties) instead of the final ones.
using EpochScorer = std::function<double(const ModelParams&)>;

/// Prompt-based tuning over instance-label-word pairs: per epoch a seeded shuffle, then
/// mini-batches of templated inputs whose mask must predict the paired word, one Adam step
/// per batch.
TuneResult tune(ModelParams params, const std::vector<AugmentedExample>& data, const PromptTemplate& t,
                const TuneConfig& cfg, const EpochScorer& validation = {});

/// Standard one-to-one prompt tuning: every (x, y) trains the mask toward label_words[y].
std::vector<AugmentedExample> standard_prompt_pairs(const DatasetSplit& train, const TokenSeq& label_words);

/// CSV: epoch,mean_loss,sum_loss
void write_loss_trace_csv(const std::vector<EpochLoss>& trace, std::ostream& out);

}  // namespace lgda
