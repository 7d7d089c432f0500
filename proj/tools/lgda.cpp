// Command-line front end: data generation, pretraining, verbalizer search, tuning,
// evaluation and multi-seed experiments.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lgda/errors.hpp"
#include "lgda/harness.hpp"

namespace fs = std::filesystem;
using namespace lgda;

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
std::vector<T> parse_number_list(const std::string& text, const char* what) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(static_cast<T>(v));
        } catch (const std::logic_error&) {
            throw ConfigError(std::string("invalid ") + what + " entry '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + " is empty");
    return out;
}

/// Options shared by every config-driven subcommand.
struct ConfigOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string seed_list;
    std::string template_mode;
    std::string verbalizer_mode;
    std::string verbalizer_file;
    std::size_t k_shot = 0;
    std::size_t k_y = 0;
    std::size_t epochs = 0;
    std::size_t threads = 0;
    std::string checkpoint;
    std::string vocab;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config_path, "JSON experiment config");
        app->add_option("--set", overrides, "Override a config field, e.g. tune.epochs=5 (repeatable)");
        app->add_option("--seed-list", seed_list, "Comma-separated sampling seeds");
        app->add_option("--template", template_mode, "manual | template-free");
        app->add_option("--verbalizer", verbalizer_mode, "auto | manual | single");
        app->add_option("--verbalizer-file", verbalizer_file, "Manual verbalizer file");
        app->add_option("--K", k_shot, "Training examples per class");
        app->add_option("--k-y", k_y, "Label words per class");
        app->add_option("--epochs", epochs, "Tuning epochs");
        app->add_option("--threads", threads, "Seeds run concurrently");
        app->add_option("--checkpoint", checkpoint, "Pretrained checkpoint");
        app->add_option("--vocab", vocab, "Vocabulary of the checkpoint");
    }

    json load() const {
        json j = config_path.empty() ? default_config_json() : read_json_file(config_path);
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        if (!template_mode.empty()) j["template"] = template_mode;
        if (!verbalizer_mode.empty()) j["verbalizer"] = verbalizer_mode;
        if (!verbalizer_file.empty()) j["verbalizer_file"] = verbalizer_file;
        if (k_shot) j["K"] = k_shot;
        if (k_y) j["k_y"] = k_y;
        if (epochs) j["tune"]["epochs"] = epochs;
        if (threads) j["threads"] = threads;
        if (!checkpoint.empty()) j["source"]["checkpoint"] = checkpoint;
        if (!vocab.empty()) j["source"]["vocab"] = vocab;
        if (!seed_list.empty()) j["seeds"] = parse_number_list<std::uint64_t>(seed_list, "seed list");
        for (const auto& o : overrides) apply_override(j, o);
        // Validate eagerly so config errors surface before any work.
        config_from_json(j);
        return j;
    }
};

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

void write_reports(const fs::path& out, const std::vector<RunReport>& reports, const json& full) {
    write_json(out / "results.json", full);
    write_text_file(out / "records.csv", records_csv(reports));
    write_text_file(out / "summary.csv", summary_csv(reports));
    const auto table = render_table(reports);
    write_text_file(out / "table.txt", table);
    std::cout << table;
}

int cmd_gen_data(const std::string& spec_path, std::uint64_t seed, const fs::path& out, const std::string& format) {
    const auto spec = spec_path.empty() ? SyntheticSpec::defaults() : load_synthetic_spec(spec_path);
    const auto fmt = parse_dataset_format(format);
    const auto data = generate_synthetic(spec, seed);
    const std::string ext = fmt == DatasetFormat::jsonl ? ".jsonl" : ".tsv";
    std::string corpus;
    for (const auto& line : data.corpus) corpus += line + "\n";
    write_text_file(out / "corpus.txt", corpus);
    write_records(data.pool, out / ("pool" + ext), fmt);
    write_records(data.test, out / ("test" + ext), fmt);
    save_lexicon(data.lexicon, out / "lexicon.json");
    write_json(out / "spec.json", synthetic_spec_to_json(spec));
    std::cout << "wrote " << data.corpus.size() << " corpus lines, " << data.pool.size() << " pool and "
              << data.test.size() << " test records to " << out.string() << "\n";
    return 0;
}

int cmd_pretrain(const ConfigOptions& opts, const fs::path& out) {
    auto j = opts.load();
    j["source"]["checkpoint"] = "";
    j["source"]["vocab"] = "";
    const auto cfg = config_from_json(j);
    const auto& p = cfg.source.pretrain;
    const auto ctx = prepare_context(cfg.source);
    fs::create_directories(out);
    save_checkpoint(ctx.pretrained, out / "model.ckpt");
    ctx.vocab.save(out / "vocab.txt");
    std::ostringstream csv;
    csv.precision(17);
    csv << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < ctx.pretrain_loss.size(); ++e) csv << e + 1 << ',' << ctx.pretrain_loss[e] << "\n";
    write_text_file(out / "pretrain_loss.csv", csv.str());
    std::cout << "pretrained " << ctx.pretrained.parameter_count() << " parameters for " << p.run.epochs
              << " epochs; vocabulary " << ctx.vocab.size() << "; final loss "
              << (ctx.pretrain_loss.empty() ? 0.0 : ctx.pretrain_loss.back()) << "\n";
    return 0;
}

std::uint64_t single_seed(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed) {
    return seed ? *seed : cfg.seeds.front();
}

int cmd_search(const ConfigOptions& opts, std::optional<std::uint64_t> seed_opt, const fs::path& out) {
    const auto cfg = config_from_json(opts.load());
    const auto ctx = prepare_context(cfg.source);
    const auto seed = single_seed(cfg, seed_opt);
    const auto splits = kshot_sample(ctx.pool, cfg.k_shot, derive_seed(seed, "sample"));
    SearchConfig sc = cfg.search;
    sc.k = cfg.k_y;
    sc.seed = derive_seed(seed, "tie-break");
    const auto result = select_verbalizer(ctx.pretrained, splits.train, PromptTemplate::make(cfg.template_mode, ctx.vocab), sc);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_verbalizer(result.verbalizer, ctx.vocab, out);
    auto sidecar = out;
    sidecar += ".json";
    write_text_file(sidecar, search_report_json(result, ctx.vocab));
    std::cout << result.verbalizer.to_text(ctx.vocab) << "\ntrain accuracy " << result.accuracy << "\n";
    return 0;
}

int cmd_tune(const ConfigOptions& opts, std::optional<std::uint64_t> seed_opt, const fs::path& out) {
    const auto cfg = config_from_json(opts.load());
    const auto ctx = prepare_context(cfg.source);
    const auto seed = single_seed(cfg, seed_opt);
    const auto run = run_single_full(ctx, cfg, seed);
    fs::create_directories(out);
    save_checkpoint(run.tuned, out / "tuned.ckpt");
    ctx.vocab.save(out / "vocab.txt");
    save_verbalizer(run.verbalizer, ctx.vocab, out / "verbalizer.txt");
    std::string labels;
    for (const auto& name : ctx.pool.label_names) labels += name + "\n";
    write_text_file(out / "labels.txt", labels);
    std::ostringstream trace;
    write_loss_trace_csv(run.record.loss_trace, trace);
    write_text_file(out / "loss_trace.csv", trace.str());
    write_json(out / "record.json", record_to_json(run.record));
    std::cout << "seed " << seed << ": " << run.record.tuning_pairs << " tuning pairs, " << run.record.steps
              << " steps, test accuracy " << run.record.test_accuracy << "\n";
    return 0;
}

std::vector<std::string> read_labels(const std::string& arg) {
    if (arg.empty()) return {};
    if (fs::exists(arg)) {
        std::ifstream in(arg);
        std::vector<std::string> out;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) out.push_back(line);
        }
        return out;
    }
    return split_list(arg);
}

struct EvalOptions {
    std::string checkpoint, vocab, verbalizer, data, labels, format, template_mode = "manual", aggregation = "max";
    std::string out;
};

int cmd_eval(const EvalOptions& o) {
    const auto vocab = Vocab::load(o.vocab);
    const auto model = load_checkpoint(o.checkpoint);
    if (model.config().vocab_size != vocab.size()) {
        throw ConfigError("checkpoint vocabulary size does not match the vocabulary file");
    }
    const auto verbalizer = load_manual_verbalizer(o.verbalizer, vocab);
    const auto fmt = o.format.empty() ? format_from_extension(o.data) : parse_dataset_format(o.format);
    auto split = load_dataset(o.data, fmt, vocab, read_labels(o.labels));
    if (split.class_count > verbalizer.class_count()) {
        throw ConfigError("data has more classes than the verbalizer");
    }
    split.class_count = verbalizer.class_count();
    const auto t = PromptTemplate::make(parse_template_mode(o.template_mode), vocab);
    const auto eval = evaluate(model, split, t, verbalizer, parse_aggregation(o.aggregation));
    if (!o.out.empty()) {
        std::ostringstream csv;
        write_predictions_csv(eval, split.class_count, csv);
        write_text_file(o.out, csv.str());
    }
    json summary = {{"correct", eval.correct}, {"total", eval.total}, {"accuracy", eval.accuracy()}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_experiment(const ConfigOptions& opts, const std::string& conditions_path, const fs::path& out) {
    const auto base = opts.load();
    const auto conditions =
        conditions_path.empty() ? std::vector<Condition>{{config_from_json(base).name, json::object()}}
                                : parse_conditions(read_json_file(conditions_path));
    const auto table = run_conditions(base, conditions);
    write_reports(out, table.rows, table_to_json(table));
    return 0;
}

int cmd_sweep(const ConfigOptions& opts, const std::string& param, const std::string& values, const fs::path& out) {
    const auto base = opts.load();
    const auto series = sweep_parameter(base, parse_sweep_param(param), parse_number_list<std::size_t>(values, "value list"));
    write_reports(out, series.reports, series_to_json(series));
    write_text_file(out / "series.csv", series_csv(series));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Label-guided data augmentation for prompt-based few-shot classification"};
    app.require_subcommand(1);

    std::string spec_path, format = "jsonl", out_dir;
    std::uint64_t data_seed = 7;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus and classification task");
    gen->add_option("--spec", spec_path, "Synthetic spec JSON (defaults when omitted)");
    gen->add_option("--seed", data_seed, "Generation seed");
    gen->add_option("--format", format, "jsonl | tsv");
    gen->add_option("-o,--out", out_dir, "Output directory")->required();

    ConfigOptions pre_opts;
    std::string pre_out;
    auto* pre = app.add_subcommand("pretrain", "Pretrain the masked LM and write a checkpoint");
    pre_opts.attach(pre);
    pre->add_option("-o,--out", pre_out, "Output directory")->required();

    ConfigOptions search_opts;
    std::optional<std::uint64_t> search_seed;
    std::string search_out;
    auto* search = app.add_subcommand("search-verbalizer", "Search label words on one K-shot sample");
    search_opts.attach(search);
    search->add_option("--seed", search_seed, "Sampling seed (first of the seed list by default)");
    search->add_option("-o,--out", search_out, "Verbalizer file to write")->required();

    ConfigOptions tune_opts;
    std::optional<std::uint64_t> tune_seed;
    std::string tune_out;
    auto* tune_cmd = app.add_subcommand("tune", "Run one seed end to end and keep the tuned model");
    tune_opts.attach(tune_cmd);
    tune_cmd->add_option("--seed", tune_seed, "Sampling seed (first of the seed list by default)");
    tune_cmd->add_option("-o,--out", tune_out, "Output directory")->required();

    EvalOptions eval_opts;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and verbalizer on a dataset");
    eval->add_option("--checkpoint", eval_opts.checkpoint, "Model checkpoint")->required();
    eval->add_option("--vocab", eval_opts.vocab, "Vocabulary file")->required();
    eval->add_option("--verbalizer-file", eval_opts.verbalizer, "Verbalizer file")->required();
    eval->add_option("--data", eval_opts.data, "JSONL or TSV dataset")->required();
    eval->add_option("--labels", eval_opts.labels, "Label names in class order: a file or a comma list");
    eval->add_option("--format", eval_opts.format, "jsonl | tsv (from the extension by default)");
    eval->add_option("--template", eval_opts.template_mode, "manual | template-free");
    eval->add_option("--aggregation", eval_opts.aggregation, "max | mean");
    eval->add_option("-o,--out", eval_opts.out, "Predictions CSV");

    ConfigOptions exp_opts;
    std::string conditions_path, exp_out;
    auto* exp = app.add_subcommand("experiment", "Run every condition over the seed list");
    exp_opts.attach(exp);
    exp->add_option("--conditions", conditions_path, "Conditions JSON (named config patches)");
    exp->add_option("-o,--out", exp_out, "Output directory")->required();

    ConfigOptions sweep_opts;
    std::string sweep_param, sweep_values, sweep_out;
    auto* sweep = app.add_subcommand("sweep", "Sweep k_y or K over the seed list");
    sweep_opts.attach(sweep);
    sweep->add_option("--param", sweep_param, "ky | K")->required();
    sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
    sweep->add_option("-o,--out", sweep_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_gen_data(spec_path, data_seed, out_dir, format);
        if (*pre) return cmd_pretrain(pre_opts, pre_out);
        if (*search) return cmd_search(search_opts, search_seed, search_out);
        if (*tune_cmd) return cmd_tune(tune_opts, tune_seed, tune_out);
        if (*eval) return cmd_eval(eval_opts);
        if (*exp) return cmd_experiment(exp_opts, conditions_path, exp_out);
        if (*sweep) return cmd_sweep(sweep_opts, sweep_param, sweep_values, sweep_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
