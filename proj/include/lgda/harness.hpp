#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgda/augment.hpp"
#include "lgda/corpus.hpp"
#include "lgda/inference.hpp"
#include "lgda/model.hpp"
#include "lgda/prompt_template.hpp"
#include "lgda/tuning.hpp"
#include "lgda/verbalizer.hpp"

namespace lgda {

using json = nlohmann::ordered_json;

enum class VerbalizerMode {
    automatic,  // label-word search on D_train
    manual,     // user-supplied word lists, first k_y words of each class
    single,     // standard prompt tuning: one word per class, no augmentation module
};

SyntheticSpec synthetic_spec_from_json(const json& j);
json synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

VerbalizerMode parse_verbalizer_mode(std::string_view name);
std::string to_string(VerbalizerMode mode);

struct PretrainSettings {
    std::size_t min_freq = 1;
    std::uint64_t init_seed = 1;
    double init_std = 0.1;
    PretrainConfig run = default_run();

    /// 40 epochs, 30% masking, learning rate 3e-3.
    static PretrainConfig default_run() {
        PretrainConfig c;
        c.epochs = 40;
        c.mask_fraction = 0.3;
        c.adam.learning_rate = 3e-3;
        return c;
    }
};

/// Where data and the pretrained model come from. Two experiments with equal sources share
/// one prepared context.
struct SourceConfig {
    std::optional<SyntheticSpec> synthetic;
    std::uint64_t data_seed = 7;
    std::filesystem::path pool_path;
    std::filesystem::path test_path;
    std::optional<DatasetFormat> format;  // inferred from the extension when empty
    std::filesystem::path checkpoint;
    std::filesystem::path vocab;
    std::filesystem::path lexicon;  // optional; the synthetic lexicon is used otherwise
    ModelConfig model{};
    PretrainSettings pretrain{};
};

struct ConventionalDaConfig {
    bool enabled = false;
    std::size_t copies = 2;
    double rate = 0.3;
};

struct ExperimentConfig {
    std::string name = "experiment";
    SourceConfig source;
    std::size_t k_shot = 8;
    std::vector<std::uint64_t> seeds = {13, 21, 42, 87, 100};
    TemplateMode template_mode = TemplateMode::manual;
    VerbalizerMode verbalizer_mode = VerbalizerMode::automatic;
    std::size_t k_y = 3;
    std::filesystem::path verbalizer_file;
    std::string verbalizer_words;  // inline alternative to verbalizer_file
    SearchConfig search{};
    TuneConfig tune{};
    bool select_on_validation = false;
    ConventionalDaConfig conventional_da{};
    Aggregation aggregation = Aggregation::max;
    std::size_t threads = 1;

    void validate() const;
};

/// Parses a JSON file; unreadable or malformed files are config errors.
json read_json_file(const std::filesystem::path& path);

/// Defaults as JSON; every field of ExperimentConfig appears here.
json default_config_json();
/// Parses a (possibly partial) config, filling missing fields from the defaults.
ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& cfg);

/// Applies `path=value` where path is dot-separated ("tune.epochs=5"). The value is parsed as
/// JSON when possible, otherwise taken as a string.
void apply_override(json& cfg, const std::string& assignment);

/// Data, vocabulary, pretrained model and lexicon shared by every seed of an experiment.
struct ExperimentContext {
    Vocab vocab;
    DatasetSplit pool;
    DatasetSplit test;
    ModelParams pretrained;
    SynonymLexicon lexicon;
    std::vector<double> pretrain_loss;
};

ExperimentContext prepare_context(const SourceConfig& source);

/// Memoizes prepared contexts by the JSON form of their source.
class ContextCache {
public:
    const ExperimentContext& get(const ExperimentConfig& cfg);
    std::size_t size() const { return contexts_.size(); }

private:
    std::map<std::string, std::unique_ptr<ExperimentContext>> contexts_;
};

struct SeedRecord {
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> verbalizer;
    std::optional<double> search_accuracy;
    std::size_t train_size = 0;
    std::size_t tuning_pairs = 0;
    std::size_t steps = 0;
    std::vector<EpochLoss> loss_trace;
    std::optional<std::size_t> selected_epoch;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
};

/// Everything run_single produces, including the tuned model (not persisted in reports).
struct SingleRun {
    SeedRecord record;
    Verbalizer verbalizer;
    ModelParams tuned;
    KShotSplits splits;
};

/// sample -> (conventional DA) -> verbalizer -> augmentation -> tuning -> evaluation.
SingleRun run_single_full(const ExperimentContext& ctx, const ExperimentConfig& cfg, std::uint64_t seed);
SeedRecord run_single(const ExperimentContext& ctx, const ExperimentConfig& cfg, std::uint64_t seed);

struct Aggregate {
    double mean = 0.0;
    /// Sample standard deviation (n - 1 denominator); empty with fewer than two values.
    std::optional<double> std;
};

Aggregate aggregate(const std::vector<double>& values);

struct RunReport {
    std::string name;
    std::vector<SeedRecord> records;
    Aggregate test_accuracy;

    std::vector<double> test_accuracies() const;
};

RunReport run_sweep(const ExperimentContext& ctx, const ExperimentConfig& cfg);
/// Prepares the context from cfg.source, then runs the sweep.
RunReport run_sweep(const ExperimentConfig& cfg);

struct Condition {
    std::string name;
    json delta;  // JSON merge patch over the base config
};

std::vector<Condition> parse_conditions(const json& j);

struct ComparisonTable {
    std::vector<RunReport> rows;
};

/// One sweep per condition over the base config's seed list. Conditions that share a data and
/// model source share one prepared context, so every condition sees the same K-shot splits.
ComparisonTable run_conditions(const json& base, const std::vector<Condition>& conditions,
                               ContextCache* cache = nullptr);

enum class SweepParam { k_y, k_shot };

SweepParam parse_sweep_param(std::string_view name);
std::string to_string(SweepParam p);

struct SweepSeries {
    SweepParam param = SweepParam::k_y;
    std::vector<std::size_t> values;
    std::vector<RunReport> reports;
};

SweepSeries sweep_parameter(const json& base, SweepParam param, const std::vector<std::size_t>& values,
                            ContextCache* cache = nullptr);

json record_to_json(const SeedRecord& r);
json report_to_json(const RunReport& report);
json table_to_json(const ComparisonTable& table);
json series_to_json(const SweepSeries& series);

/// Flat per-seed CSV: condition,seed,train_accuracy,val_accuracy,test_accuracy,...
std::string records_csv(const std::vector<RunReport>& reports);
/// condition,n,mean,std
std::string summary_csv(const std::vector<RunReport>& reports);
/// param,value,n,mean,std
std::string series_csv(const SweepSeries& series);
/// Aligned plain-text table with "mean (std)" cells in accuracy points.
std::string render_table(const std::vector<RunReport>& reports);
/// "89.5 (2.9)"
std::string format_cell(const Aggregate& a);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace lgda
