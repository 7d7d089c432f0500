#include "lgda/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include "lgda/errors.hpp"
#include "lgda/rng.hpp"

namespace lgda {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Runs `fn` converting JSON type errors into config errors.
template <typename Fn>
auto guarded(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

/// Rejects keys of `given` that are absent from `schema` (recursing into objects).
void check_keys(const json& given, const json& schema, const std::string& prefix) {
    if (!given.is_object()) return;
    for (const auto& [key, value] : given.items()) {
        if (!schema.contains(key)) throw ConfigError("unknown config field '" + prefix + key + "'");
        const auto& sub = schema.at(key);
        if (sub.is_object() && value.is_object()) check_keys(value, sub, prefix + key + ".");
    }
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
    const json schema = synthetic_spec_to_json(SyntheticSpec::defaults());
    check_keys(j, schema, "synthetic.");
    json merged = schema;
    merged.merge_patch(j);
    return guarded("synthetic spec", [&] {
        SyntheticSpec s;
        s.class_count = merged.at("class_count").get<std::size_t>();
        s.label_names = merged.at("label_names").get<std::vector<std::string>>();
        s.cue_words = merged.at("cue_words").get<std::vector<std::vector<std::string>>>();
        s.filler_words = merged.at("filler_words").get<std::vector<std::string>>();
        s.filler_synonym_groups = merged.at("filler_synonym_groups").get<std::vector<std::vector<std::string>>>();
        s.min_length = merged.at("min_length").get<std::size_t>();
        s.max_length = merged.at("max_length").get<std::size_t>();
        s.corpus_size = merged.at("corpus_size").get<std::size_t>();
        s.pool_per_class = merged.at("pool_per_class").get<std::size_t>();
        s.test_per_class = merged.at("test_per_class").get<std::size_t>();
        s.redundancy = merged.at("redundancy").get<std::size_t>();
        s.prompt_rate = merged.at("prompt_rate").get<double>();
        s.echo_rate = merged.at("echo_rate").get<double>();
        s.distractor_rate = merged.at("distractor_rate").get<double>();
        s.validate();
        return s;
    });
}

json synthetic_spec_to_json(const SyntheticSpec& s) {
    json j;
    j["class_count"] = s.class_count;
    j["label_names"] = s.label_names;
    j["cue_words"] = s.cue_words;
    j["filler_words"] = s.filler_words;
    j["filler_synonym_groups"] = s.filler_synonym_groups;
    j["min_length"] = s.min_length;
    j["max_length"] = s.max_length;
    j["corpus_size"] = s.corpus_size;
    j["pool_per_class"] = s.pool_per_class;
    j["test_per_class"] = s.test_per_class;
    j["redundancy"] = s.redundancy;
    j["prompt_rate"] = s.prompt_rate;
    j["echo_rate"] = s.echo_rate;
    j["distractor_rate"] = s.distractor_rate;
    return j;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open synthetic spec: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid synthetic spec JSON in " + path.string() + ": " + e.what());
    }
    return synthetic_spec_from_json(j);
}

VerbalizerMode parse_verbalizer_mode(std::string_view name) {
    if (name == "auto") return VerbalizerMode::automatic;
    if (name == "manual") return VerbalizerMode::manual;
    if (name == "single") return VerbalizerMode::single;
    throw ConfigError("unknown verbalizer mode '" + std::string(name) + "' (expected auto | manual | single)");
}

std::string to_string(VerbalizerMode mode) {
    switch (mode) {
        case VerbalizerMode::automatic: return "auto";
        case VerbalizerMode::manual: return "manual";
        case VerbalizerMode::single: return "single";
    }
    return "auto";
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("seed list is empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw ConfigError("seed list contains duplicates");
    }
    if (k_shot == 0) throw ConfigError("K must be at least 1");
    if (k_y == 0) throw ConfigError("k_y must be at least 1");
    if (verbalizer_mode == VerbalizerMode::single && k_y != 1) {
        throw ConfigError("verbalizer mode 'single' requires k_y = 1");
    }
    if (verbalizer_mode == VerbalizerMode::manual && verbalizer_file.empty() && verbalizer_words.empty()) {
        throw ConfigError("verbalizer mode 'manual' needs verbalizer_file or verbalizer_words");
    }
    if (verbalizer_mode == VerbalizerMode::automatic) {
        SearchConfig s = search;
        s.k = k_y;
        s.validate();
    }
    tune.validate();
    if (conventional_da.enabled && conventional_da.copies == 0) throw ConfigError("conventional_da.copies must be >= 1");
    if (!(conventional_da.rate >= 0.0 && conventional_da.rate <= 1.0)) {
        throw ConfigError("conventional_da.rate must lie in [0,1]");
    }
    if (threads == 0) throw ConfigError("threads must be at least 1");
    const auto& src = source;
    if (!src.synthetic && src.pool_path.empty()) throw ConfigError("source needs a synthetic spec or a pool_path");
    if (!src.synthetic && src.test_path.empty()) throw ConfigError("source.test_path is required with pool_path");
    if (src.checkpoint.empty() != src.vocab.empty()) {
        throw ConfigError("source.checkpoint and source.vocab must be given together");
    }
    if (src.checkpoint.empty()) {
        ModelConfig m = src.model;
        m.vocab_size = std::max<std::size_t>(m.vocab_size, 1);
        m.validate();
    }
}

json default_config_json() {
    ExperimentConfig cfg;
    cfg.source.synthetic = SyntheticSpec::defaults();
    return config_to_json(cfg);
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    const auto& s = cfg.source;
    json src;
    src["synthetic"] = s.synthetic ? synthetic_spec_to_json(*s.synthetic) : json(nullptr);
    src["data_seed"] = s.data_seed;
    src["pool_path"] = s.pool_path.string();
    src["test_path"] = s.test_path.string();
    src["format"] = s.format ? (*s.format == DatasetFormat::jsonl ? "jsonl" : "tsv") : "";
    src["checkpoint"] = s.checkpoint.string();
    src["vocab"] = s.vocab.string();
    src["lexicon"] = s.lexicon.string();
    src["model"] = {{"d_model", s.model.d_model},
                    {"n_layers", s.model.n_layers},
                    {"n_heads", s.model.n_heads},
                    {"d_ff", s.model.d_ff},
                    {"max_len", s.model.max_len},
                    {"tie_output", s.model.tie_output_to_embeddings}};
    const auto& p = s.pretrain;
    src["pretrain"] = {{"min_freq", p.min_freq},
                       {"init_seed", p.init_seed},
                       {"init_std", p.init_std},
                       {"epochs", p.run.epochs},
                       {"batch_size", p.run.batch_size},
                       {"mask_fraction", p.run.mask_fraction},
                       {"lr", p.run.adam.learning_rate},
                       {"seed", p.run.seed}};
    j["source"] = src;
    j["K"] = cfg.k_shot;
    j["seeds"] = cfg.seeds;
    j["template"] = to_string(cfg.template_mode);
    j["verbalizer"] = to_string(cfg.verbalizer_mode);
    j["k_y"] = cfg.k_y;
    j["verbalizer_file"] = cfg.verbalizer_file.string();
    j["verbalizer_words"] = cfg.verbalizer_words;
    j["search"] = {{"m", cfg.search.m},
                   {"n", cfg.search.n},
                   {"strict", cfg.search.strict},
                   {"score_space", cfg.search.score_space == ScoreSpace::probability ? "probability" : "log"},
                   {"budget", cfg.search.budget}};
    j["tune"] = {{"epochs", cfg.tune.epochs},
                 {"batch_size", cfg.tune.batch_size},
                 {"lr", cfg.tune.adam.learning_rate},
                 {"beta1", cfg.tune.adam.beta1},
                 {"beta2", cfg.tune.adam.beta2},
                 {"eps", cfg.tune.adam.epsilon},
                 {"loss_scaling", cfg.tune.scaling == LossScaling::mean ? "mean" : "sum"},
                 {"select_on_validation", cfg.select_on_validation}};
    j["conventional_da"] = {{"enabled", cfg.conventional_da.enabled},
                            {"copies", cfg.conventional_da.copies},
                            {"rate", cfg.conventional_da.rate}};
    j["aggregation"] = cfg.aggregation == Aggregation::max ? "max" : "mean";
    j["threads"] = cfg.threads;
    return j;
}

ExperimentConfig config_from_json(const json& given) {
    if (!given.is_object()) throw ConfigError("config must be a JSON object");
    json schema = default_config_json();
    // The synthetic block has its own schema, checked by synthetic_spec_from_json.
    json given_outer = given;
    if (given_outer.contains("source") && given_outer["source"].is_object()) given_outer["source"].erase("synthetic");
    check_keys(given_outer, schema, "");

    json merged = schema;
    json synthetic_patch = json::object();
    bool synthetic_null = false;
    if (given.contains("source") && given.at("source").is_object() && given.at("source").contains("synthetic")) {
        const auto& syn = given.at("source").at("synthetic");
        if (syn.is_null()) {
            synthetic_null = true;
        } else {
            synthetic_patch = syn;
        }
    }
    merged.merge_patch(given_outer);
    // A data path without an explicit synthetic block means "no synthetic data".
    if (!given.contains("source") || !given.at("source").contains("synthetic")) {
        if (!merged["source"]["pool_path"].get<std::string>().empty()) synthetic_null = true;
    }

    return guarded("config", [&] {
        ExperimentConfig cfg;
        cfg.name = merged.at("name").get<std::string>();
        auto& src = cfg.source;
        const auto& s = merged.at("source");
        if (!synthetic_null) src.synthetic = synthetic_spec_from_json(synthetic_patch);
        src.data_seed = s.at("data_seed").get<std::uint64_t>();
        src.pool_path = s.at("pool_path").get<std::string>();
        src.test_path = s.at("test_path").get<std::string>();
        const auto fmt = s.at("format").get<std::string>();
        if (!fmt.empty()) src.format = parse_dataset_format(fmt);
        src.checkpoint = s.at("checkpoint").get<std::string>();
        src.vocab = s.at("vocab").get<std::string>();
        src.lexicon = s.at("lexicon").get<std::string>();
        const auto& m = s.at("model");
        src.model.d_model = m.at("d_model").get<std::size_t>();
        src.model.n_layers = m.at("n_layers").get<std::size_t>();
        src.model.n_heads = m.at("n_heads").get<std::size_t>();
        src.model.d_ff = m.at("d_ff").get<std::size_t>();
        src.model.max_len = m.at("max_len").get<std::size_t>();
        src.model.tie_output_to_embeddings = m.at("tie_output").get<bool>();
        const auto& p = s.at("pretrain");
        src.pretrain.min_freq = p.at("min_freq").get<std::size_t>();
        src.pretrain.init_seed = p.at("init_seed").get<std::uint64_t>();
        src.pretrain.init_std = p.at("init_std").get<double>();
        src.pretrain.run.epochs = p.at("epochs").get<std::size_t>();
        src.pretrain.run.batch_size = p.at("batch_size").get<std::size_t>();
        src.pretrain.run.mask_fraction = p.at("mask_fraction").get<double>();
        src.pretrain.run.adam.learning_rate = p.at("lr").get<double>();
        src.pretrain.run.seed = p.at("seed").get<std::uint64_t>();

        cfg.k_shot = merged.at("K").get<std::size_t>();
        cfg.seeds = merged.at("seeds").get<std::vector<std::uint64_t>>();
        cfg.template_mode = parse_template_mode(merged.at("template").get<std::string>());
        cfg.verbalizer_mode = parse_verbalizer_mode(merged.at("verbalizer").get<std::string>());
        cfg.k_y = merged.at("k_y").get<std::size_t>();
        cfg.verbalizer_file = merged.at("verbalizer_file").get<std::string>();
        cfg.verbalizer_words = merged.at("verbalizer_words").get<std::string>();
        const auto& se = merged.at("search");
        cfg.search.m = se.at("m").get<std::size_t>();
        cfg.search.n = se.at("n").get<std::size_t>();
        cfg.search.strict = se.at("strict").get<bool>();
        const auto space = se.at("score_space").get<std::string>();
        if (space == "probability") {
            cfg.search.score_space = ScoreSpace::probability;
        } else if (space == "log") {
            cfg.search.score_space = ScoreSpace::log_probability;
        } else {
            throw ConfigError("search.score_space must be 'probability' or 'log'");
        }
        cfg.search.budget = se.at("budget").get<std::uint64_t>();
        cfg.search.k = cfg.k_y;
        const auto& t = merged.at("tune");
        cfg.tune.epochs = t.at("epochs").get<std::size_t>();
        cfg.tune.batch_size = t.at("batch_size").get<std::size_t>();
        cfg.tune.adam.learning_rate = t.at("lr").get<double>();
        cfg.tune.adam.beta1 = t.at("beta1").get<double>();
        cfg.tune.adam.beta2 = t.at("beta2").get<double>();
        cfg.tune.adam.epsilon = t.at("eps").get<double>();
        cfg.tune.scaling = parse_loss_scaling(t.at("loss_scaling").get<std::string>());
        cfg.select_on_validation = t.at("select_on_validation").get<bool>();
        const auto& da = merged.at("conventional_da");
        cfg.conventional_da.enabled = da.at("enabled").get<bool>();
        cfg.conventional_da.copies = da.at("copies").get<std::size_t>();
        cfg.conventional_da.rate = da.at("rate").get<double>();
        cfg.aggregation = parse_aggregation(merged.at("aggregation").get<std::string>());
        cfg.threads = merged.at("threads").get<std::size_t>();
        cfg.validate();
        return cfg;
    });
}

void apply_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like path=value: '" + assignment + "'");
    const auto path = assignment.substr(0, eq);
    const auto raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("empty component in override path '" + path + "'");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
        node = &(*node)[key];
        start = dot + 1;
    }
}

ExperimentContext prepare_context(const SourceConfig& source) {
    ExperimentContext ctx;
    std::vector<std::string> corpus;
    std::vector<TextRecord> pool_records, test_records;
    std::vector<std::string> label_names;
    std::vector<std::pair<std::string, std::vector<std::string>>> lexicon_words;

    if (source.synthetic) {
        auto data = generate_synthetic(*source.synthetic, source.data_seed);
        corpus = std::move(data.corpus);
        pool_records = std::move(data.pool);
        test_records = std::move(data.test);
        label_names = source.synthetic->label_names;
        lexicon_words = std::move(data.lexicon);
    } else {
        const auto pool_fmt = source.format ? *source.format : format_from_extension(source.pool_path);
        const auto test_fmt = source.format ? *source.format : format_from_extension(source.test_path);
        pool_records = read_records(source.pool_path, pool_fmt);
        test_records = read_records(source.test_path, test_fmt);
        for (const auto& r : pool_records) corpus.push_back(r.text);
        for (const auto& r : test_records) corpus.push_back(r.text);
    }

    if (!source.checkpoint.empty()) {
        ctx.vocab = Vocab::load(source.vocab);
        ctx.pretrained = load_checkpoint(source.checkpoint);
        if (ctx.pretrained.config().vocab_size != ctx.vocab.size()) {
            throw ConfigError("checkpoint vocabulary size does not match the vocabulary file");
        }
    } else {
        ctx.vocab = build_vocab(corpus, source.pretrain.min_freq, manual_template_words());
        ModelConfig mc = source.model;
        mc.vocab_size = ctx.vocab.size();
        std::vector<TokenSeq> lines;
        lines.reserve(corpus.size());
        for (const auto& line : corpus) lines.push_back(tokenize(line, ctx.vocab));
        auto result = pretrain(ModelParams::init(mc, source.pretrain.init_seed, source.pretrain.init_std), lines,
                               source.pretrain.run);
        ctx.pretrained = std::move(result.params);
        ctx.pretrain_loss = std::move(result.epoch_loss);
    }

    ctx.pool = encode_records(pool_records, ctx.vocab, label_names);
    ctx.test = encode_records(test_records, ctx.vocab, ctx.pool.label_names);
    ctx.test.class_count = ctx.pool.class_count = std::max(ctx.pool.label_names.size(), ctx.test.label_names.size());
    ctx.pool.label_names = ctx.test.label_names;
    if (!source.lexicon.empty()) {
        ctx.lexicon = SynonymLexicon::load(source.lexicon, ctx.vocab);
    } else if (!lexicon_words.empty()) {
        ctx.lexicon = SynonymLexicon::from_words(lexicon_words, ctx.vocab);
    }
    return ctx;
}

const ExperimentContext& ContextCache::get(const ExperimentConfig& cfg) {
    const auto key = config_to_json(cfg)["source"].dump();
    auto it = contexts_.find(key);
    if (it == contexts_.end()) {
        it = contexts_.emplace(key, std::make_unique<ExperimentContext>(prepare_context(cfg.source))).first;
    }
    return *it->second;
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

Verbalizer manual_verbalizer(const ExperimentConfig& cfg, const Vocab& vocab, std::size_t k) {
    Verbalizer full = cfg.verbalizer_file.empty() ? parse_verbalizer(cfg.verbalizer_words, vocab)
                                                  : load_manual_verbalizer(cfg.verbalizer_file, vocab);
    if (full.words_per_class() < k) {
        throw ConfigError("manual verbalizer has " + std::to_string(full.words_per_class()) +
                          " words per class, k_y=" + std::to_string(k) + " requested");
    }
    Verbalizer v;
    for (const auto& words : full.label_words) v.label_words.emplace_back(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(k));
    return v;
}

}  // namespace

SingleRun run_single_full(const ExperimentContext& ctx, const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SingleRun run;
    auto& rec = run.record;
    rec.seed = seed;
    const auto tmpl = stage("template", [&] { return PromptTemplate::make(cfg.template_mode, ctx.vocab); });

    run.splits = stage("sample", [&] { return kshot_sample(ctx.pool, cfg.k_shot, derive_seed(seed, "sample")); });
    const auto& train = run.splits.train;

    DatasetSplit tuning_source = train;
    if (cfg.conventional_da.enabled) {
        tuning_source = stage("conventional-da", [&] {
            return synonym_substitute(train, ctx.lexicon, cfg.conventional_da.copies, cfg.conventional_da.rate,
                                      derive_seed(seed, "conventional-da"));
        });
    }

    run.verbalizer = stage("verbalizer", [&] {
        const bool search = cfg.verbalizer_mode == VerbalizerMode::automatic ||
                            (cfg.verbalizer_mode == VerbalizerMode::single && cfg.verbalizer_file.empty() &&
                             cfg.verbalizer_words.empty());
        if (!search) return manual_verbalizer(cfg, ctx.vocab, cfg.k_y);
        SearchConfig sc = cfg.search;
        sc.k = cfg.k_y;
        sc.seed = derive_seed(seed, "tie-break");
        auto result = select_verbalizer(ctx.pretrained, train, tmpl, sc);
        rec.search_accuracy = result.accuracy;
        return result.verbalizer;
    });
    rec.verbalizer = run.verbalizer.words(ctx.vocab);

    const auto pairs = stage("augment", [&] {
        if (cfg.verbalizer_mode == VerbalizerMode::single) {
            TokenSeq words;
            for (const auto& w : run.verbalizer.label_words) words.push_back(w.front());
            return standard_prompt_pairs(tuning_source, words);
        }
        return prompt_da_augment(tuning_source, run.verbalizer);
    });
    rec.train_size = train.size();
    rec.tuning_pairs = pairs.size();

    auto tuned = stage("tune", [&] {
        TuneConfig tc = cfg.tune;
        tc.seed = derive_seed(seed, "shuffle");
        EpochScorer scorer;
        if (cfg.select_on_validation) {
            scorer = [&](const ModelParams& p) {
                return evaluate(p, run.splits.val, tmpl, run.verbalizer, cfg.aggregation).accuracy();
            };
        }
        return tune(ctx.pretrained, pairs, tmpl, tc, scorer);
    });
    rec.steps = tuned.steps;
    rec.loss_trace = tuned.trace;
    rec.selected_epoch = tuned.selected_epoch;
    run.tuned = std::move(tuned.params);

    stage("evaluate", [&] {
        rec.train_accuracy = evaluate(run.tuned, train, tmpl, run.verbalizer, cfg.aggregation).accuracy();
        rec.val_accuracy = evaluate(run.tuned, run.splits.val, tmpl, run.verbalizer, cfg.aggregation).accuracy();
        rec.test_accuracy = evaluate(run.tuned, ctx.test, tmpl, run.verbalizer, cfg.aggregation).accuracy();
        return 0;
    });
    return run;
}

SeedRecord run_single(const ExperimentContext& ctx, const ExperimentConfig& cfg, std::uint64_t seed) {
    return run_single_full(ctx, cfg, seed).record;
}

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return a;
}

std::vector<double> RunReport::test_accuracies() const {
    std::vector<double> out;
    for (const auto& r : records) out.push_back(r.test_accuracy);
    return out;
}

RunReport run_sweep(const ExperimentContext& ctx, const ExperimentConfig& cfg) {
    cfg.validate();
    RunReport report;
    report.name = cfg.name;
    report.records.resize(cfg.seeds.size());
    if (cfg.threads <= 1) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) report.records[i] = run_single(ctx, cfg, cfg.seeds[i]);
    } else {
        for (std::size_t start = 0; start < cfg.seeds.size(); start += cfg.threads) {
            const auto stop = std::min(cfg.seeds.size(), start + cfg.threads);
            std::vector<std::future<SeedRecord>> jobs;
            for (std::size_t i = start; i < stop; ++i) {
                jobs.push_back(std::async(std::launch::async, [&, i] { return run_single(ctx, cfg, cfg.seeds[i]); }));
            }
            for (std::size_t i = start; i < stop; ++i) report.records[i] = jobs[i - start].get();
        }
    }
    report.test_accuracy = aggregate(report.test_accuracies());
    return report;
}

RunReport run_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto ctx = prepare_context(cfg.source);
    return run_sweep(ctx, cfg);
}

std::vector<Condition> parse_conditions(const json& j) {
    const json* list = &j;
    if (j.is_object()) {
        if (!j.contains("conditions")) throw ConfigError("conditions file needs a 'conditions' array");
        list = &j.at("conditions");
    }
    if (!list->is_array() || list->empty()) throw ConfigError("conditions must be a non-empty array");
    std::vector<Condition> out;
    std::set<std::string> names;
    for (const auto& c : *list) {
        if (!c.is_object() || !c.contains("name") || !c.at("name").is_string()) {
            throw ConfigError("every condition needs a string 'name'");
        }
        Condition cond{c.at("name").get<std::string>(), c.value("set", json::object())};
        if (!cond.delta.is_object()) throw ConfigError("condition 'set' must be an object");
        if (!names.insert(cond.name).second) throw ConfigError("duplicate condition name '" + cond.name + "'");
        out.push_back(std::move(cond));
    }
    return out;
}

ComparisonTable run_conditions(const json& base, const std::vector<Condition>& conditions, ContextCache* cache) {
    if (conditions.empty()) throw ConfigError("no conditions given");
    const auto base_seeds = config_from_json(base).seeds;
    std::set<std::string> names;
    std::vector<ExperimentConfig> configs;
    for (const auto& c : conditions) {
        if (!names.insert(c.name).second) throw ConfigError("duplicate condition name '" + c.name + "'");
        json merged = base;
        merged.merge_patch(c.delta);
        merged["name"] = c.name;
        configs.push_back(config_from_json(merged));
        if (configs.back().seeds != base_seeds) {
            throw ConfigError("condition '" + c.name + "' changes the seed list; all conditions share the base seeds");
        }
    }
    ContextCache local;
    ContextCache& contexts = cache ? *cache : local;
    ComparisonTable table;
    for (const auto& cfg : configs) table.rows.push_back(run_sweep(contexts.get(cfg), cfg));
    return table;
}

SweepParam parse_sweep_param(std::string_view name) {
    if (name == "ky" || name == "k_y") return SweepParam::k_y;
    if (name == "K" || name == "k") return SweepParam::k_shot;
    throw ConfigError("unknown sweep parameter '" + std::string(name) + "' (expected ky | K)");
}

std::string to_string(SweepParam p) { return p == SweepParam::k_y ? "k_y" : "K"; }

SweepSeries sweep_parameter(const json& base, SweepParam param, const std::vector<std::size_t>& values,
                            ContextCache* cache) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    for (auto v : values) {
        if (v == 0) throw ConfigError("sweep values must be at least 1");
    }
    ContextCache local;
    ContextCache& contexts = cache ? *cache : local;
    SweepSeries series;
    series.param = param;
    series.values = values;
    for (auto v : values) {
        json j = base;
        j[param == SweepParam::k_y ? "k_y" : "K"] = v;
        const auto base_name = j.value("name", std::string("sweep"));
        j["name"] = base_name + "/" + to_string(param) + "=" + std::to_string(v);
        if (param == SweepParam::k_y && v != 1 && j.value("verbalizer", std::string("auto")) == "single") {
            throw ConfigError("verbalizer mode 'single' cannot sweep k_y");
        }
        const auto cfg = config_from_json(j);
        series.reports.push_back(run_sweep(contexts.get(cfg), cfg));
    }
    return series;
}

json record_to_json(const SeedRecord& r) {
    json j;
    j["seed"] = r.seed;
    j["verbalizer"] = r.verbalizer;
    j["search_accuracy"] = r.search_accuracy ? json(*r.search_accuracy) : json(nullptr);
    j["train_size"] = r.train_size;
    j["tuning_pairs"] = r.tuning_pairs;
    j["steps"] = r.steps;
    auto& trace = j["loss_trace"] = json::array();
    for (const auto& e : r.loss_trace) {
        trace.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"sum_loss", e.sum_loss}});
    }
    j["selected_epoch"] = r.selected_epoch ? json(*r.selected_epoch) : json(nullptr);
    j["train_accuracy"] = r.train_accuracy;
    j["val_accuracy"] = r.val_accuracy;
    j["test_accuracy"] = r.test_accuracy;
    return j;
}

json report_to_json(const RunReport& report) {
    json j;
    j["name"] = report.name;
    auto& recs = j["records"] = json::array();
    for (const auto& r : report.records) recs.push_back(record_to_json(r));
    j["test_accuracy"] = {{"mean", report.test_accuracy.mean},
                          {"std", report.test_accuracy.std ? json(*report.test_accuracy.std) : json(nullptr)},
                          {"n", report.records.size()}};
    return j;
}

json table_to_json(const ComparisonTable& table) {
    json j;
    auto& rows = j["conditions"] = json::array();
    for (const auto& r : table.rows) rows.push_back(report_to_json(r));
    return j;
}

json series_to_json(const SweepSeries& series) {
    json j;
    j["param"] = to_string(series.param);
    j["values"] = series.values;
    auto& reps = j["reports"] = json::array();
    for (const auto& r : series.reports) reps.push_back(report_to_json(r));
    return j;
}

std::string records_csv(const std::vector<RunReport>& reports) {
    std::ostringstream out;
    out << "condition,seed,train_size,tuning_pairs,steps,search_accuracy,train_accuracy,val_accuracy,test_accuracy,"
           "final_mean_loss,verbalizer\n";
    for (const auto& rep : reports) {
        for (const auto& r : rep.records) {
            std::string words;
            for (std::size_t y = 0; y < r.verbalizer.size(); ++y) {
                if (y) words += '|';
                for (std::size_t i = 0; i < r.verbalizer[y].size(); ++i) {
                    if (i) words += ' ';
                    words += r.verbalizer[y][i];
                }
            }
            out << rep.name << ',' << r.seed << ',' << r.train_size << ',' << r.tuning_pairs << ',' << r.steps << ','
                << (r.search_accuracy ? fmt_double(*r.search_accuracy) : "") << ',' << fmt_double(r.train_accuracy)
                << ',' << fmt_double(r.val_accuracy) << ',' << fmt_double(r.test_accuracy) << ','
                << (r.loss_trace.empty() ? "" : fmt_double(r.loss_trace.back().mean_loss)) << ',' << words << '\n';
        }
    }
    return out.str();
}

std::string summary_csv(const std::vector<RunReport>& reports) {
    std::ostringstream out;
    out << "condition,n,mean,std\n";
    for (const auto& rep : reports) {
        out << rep.name << ',' << rep.records.size() << ',' << fmt_double(rep.test_accuracy.mean) << ','
            << (rep.test_accuracy.std ? fmt_double(*rep.test_accuracy.std) : "") << '\n';
    }
    return out.str();
}

std::string series_csv(const SweepSeries& series) {
    std::ostringstream out;
    out << "param,value,n,mean,std\n";
    for (std::size_t i = 0; i < series.reports.size(); ++i) {
        const auto& rep = series.reports[i];
        out << to_string(series.param) << ',' << series.values[i] << ',' << rep.records.size() << ','
            << fmt_double(rep.test_accuracy.mean) << ','
            << (rep.test_accuracy.std ? fmt_double(*rep.test_accuracy.std) : "") << '\n';
    }
    return out.str();
}

std::string format_cell(const Aggregate& a) {
    char buf[64];
    if (a.std) {
        std::snprintf(buf, sizeof buf, "%.1f (%.1f)", 100.0 * a.mean, 100.0 * *a.std);
    } else {
        std::snprintf(buf, sizeof buf, "%.1f", 100.0 * a.mean);
    }
    return buf;
}

std::string render_table(const std::vector<RunReport>& reports) {
    std::size_t width = std::string("condition").size();
    for (const auto& r : reports) width = std::max(width, r.name.size());
    std::ostringstream out;
    const auto pad = [&](const std::string& s) { return s + std::string(width - s.size() + 2, ' '); };
    out << pad("condition") << "test accuracy\n";
    out << std::string(width + 2 + 13, '-') << '\n';
    for (const auto& r : reports) out << pad(r.name) << format_cell(r.test_accuracy) << '\n';
    return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

}  // namespace lgda
