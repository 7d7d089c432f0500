// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "lgda/harness.hpp"
#include "test_support.hpp"

using namespace lgda;
using lgda::testing::random_split;
using lgda::testing::TempDir;
using lgda::testing::tiny_config;
using lgda::testing::word_vocab;
namespace fs = std::filesystem;

namespace {

// Central differences at step 1e-5 carry about 2e-10 of absolute round-off, so gradients
// smaller than the floor are compared in absolute terms (1e-9).
constexpr double kGradFloor = 1e-3;

struct Outcome {
    bool pass = true;
    std::string detail;
};

void require(Outcome& o, bool ok, const std::string& what) {
    if (!ok && o.pass) {
        o.pass = false;
        o.detail = what;
    }
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::vector<std::vector<std::size_t>> subsets(std::size_t m, std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
        std::vector<std::size_t> s;
        for (std::size_t i = 0; i < m; ++i) {
            if (mask & (1u << i)) s.push_back(i);
        }
        out.push_back(s);
    }
    return out;
}

std::uint64_t choose(std::uint64_t n, std::uint64_t k) {
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

Outcome verbalizer_oracle() {
    Outcome o;
    const std::size_t V = 16;
    const auto vocab = word_vocab(V - kNumSpecials - 2);
    const auto t = PromptTemplate::make(TemplateMode::manual, vocab);
    const auto model = ModelParams::init(tiny_config(V, 16, 2, 2, 16), 20240611, 1.0);
    Rng rng(99);
    const auto train = random_split(V, 2, 8, rng, 2, 6);

    std::vector<std::vector<double>> dists;
    for (const auto& ex : train.examples) {
        const auto in = apply_template(ex.tokens, t, model.config().max_len);
        dists.push_back(forward_mask_distribution(model, in.tokens, in.mask_pos));
    }
    std::size_t checked = 0;
    for (std::size_t m = 1; m <= 5; ++m) {
        for (std::size_t k = 1; k <= std::min<std::size_t>(2, m); ++k) {
            SearchConfig cfg;
            cfg.m = m;
            cfg.k = k;
            const auto r = select_verbalizer(model, train, t, cfg);
            std::size_t best = 0, total = 0;
            for (const auto& a : subsets(m, k)) {
                for (const auto& b : subsets(m, k)) {
                    ++total;
                    std::size_t correct = 0;
                    for (std::size_t i = 0; i < train.size(); ++i) {
                        double s0 = 0.0, s1 = 0.0;
                        for (auto j : a) s0 = std::max(s0, dists[i][r.candidates[0].ids[j]]);
                        for (auto j : b) s1 = std::max(s1, dists[i][r.candidates[1].ids[j]]);
                        correct += static_cast<std::size_t>((s1 > s0 ? 1 : 0) == train.examples[i].label);
                    }
                    best = std::max(best, correct);
                }
            }
            require(o, total == r.evaluated, "evaluated count differs from the exhaustive oracle");
            require(o, r.accuracy == static_cast<double>(best) / static_cast<double>(train.size()),
                    "m=" + std::to_string(m) + " k=" + std::to_string(k) + ": accuracy differs from the oracle");
            ++checked;
        }
    }
    std::size_t counts = 0;
    for (std::size_t classes = 1; classes <= 3; ++classes) {
        for (std::size_t m = 1; m <= 6; ++m) {
            for (std::size_t k = 1; k <= m; ++k) {
                CandidateSet c(classes);
                for (auto& list : c) {
                    for (std::size_t i = 0; i < m; ++i) {
                        list.ids.push_back(static_cast<TokenId>(kNumSpecials + i));
                        list.scores.push_back(1.0);
                    }
                }
                std::uint64_t expected = 1;
                for (std::size_t y = 0; y < classes; ++y) expected *= choose(m, k);
                VerbalizerEnumerator e(c, k);
                std::uint64_t n = 0;
                while (e.next()) ++n;
                require(o, n == expected, "|F| mismatch at m=" + std::to_string(m));
                ++counts;
            }
        }
    }
    if (o.pass) o.detail = std::to_string(checked) + " searches match, " + std::to_string(counts) + " |F| counts match";
    return o;
}

Outcome gradient_check() {
    Outcome o;
    Rng rng(2024);
    double worst = 0.0;
    std::string worst_name;
    std::size_t coords = 0;
    for (const auto& [d, layers, tied] : std::vector<std::tuple<std::size_t, std::size_t, bool>>{
             {8, 1, true}, {16, 2, true}, {16, 2, false}}) {
        const auto cfg = tiny_config(13, d, layers, 2, 10, tied);
        const auto p = ModelParams::init(cfg, rng.next_u64(), 0.3);
        std::vector<MaskedSequence> batch;
        for (int b = 0; b < 3; ++b) {
            MaskedSequence s;
            s.tokens.resize(3 + rng.uniform_index(7));
            for (auto& tok : s.tokens) tok = static_cast<TokenId>(kNumSpecials + rng.uniform_index(13 - kNumSpecials));
            const auto pos = rng.uniform_index(s.tokens.size());
            s.tokens[pos] = kMaskId;
            s.targets.push_back({pos, static_cast<TokenId>(kNumSpecials + rng.uniform_index(13 - kNumSpecials))});
            batch.push_back(s);
        }
        auto grads = ModelParams::zeros(cfg);
        accumulate_gradients(p, batch, grads);
        const auto loss = [&](const ModelParams& q) {
            auto scratch = ModelParams::zeros(cfg);
            return accumulate_gradients(q, batch, scratch).sum;
        };
        auto probe = p;
        auto probe_tensors = probe.tensors();
        const auto grad_tensors = grads.tensors();
        for (std::size_t ti = 0; ti < probe_tensors.size(); ++ti) {
            for (int c = 0; c < 10; ++c) {
                const auto j = rng.uniform_index(probe_tensors[ti].tensor->size());
                double& w = probe_tensors[ti].tensor->data[j];
                const double w0 = w;
                w = w0 + 1e-5;
                const double up = loss(probe);
                w = w0 - 1e-5;
                const double down = loss(probe);
                w = w0;
                const double fd = (up - down) / 2e-5;
                const double an = grad_tensors[ti].tensor->data[j];
                const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), kGradFloor});
                if (rel > worst) {
                    worst = rel;
                    worst_name = probe_tensors[ti].name;
                }
                ++coords;
            }
        }
    }
    require(o, worst <= 1e-6, "max relative error " + fmt("%.3g", worst) + " at " + worst_name);
    if (o.pass) o.detail = std::to_string(coords) + " coordinates, max relative error " + fmt("%.3g", worst);
    return o;
}

Outcome normalization() {
    Outcome o;
    Rng rng(3);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto cfg = tiny_config(4 + rng.uniform_index(40), 8 * (1 + rng.uniform_index(2)), 1 + rng.uniform_index(2), 2,
                                     12, rng.bernoulli(0.5));
        const auto p = ModelParams::init(cfg, rng.next_u64(), 0.05 + rng.uniform() * 2.0);
        TokenSeq x(1 + rng.uniform_index(12));
        for (auto& tok : x) tok = static_cast<TokenId>(rng.uniform_index(cfg.vocab_size));
        const auto pos = rng.uniform_index(x.size());
        for (auto& tok : x) {
            if (tok == kMaskId) tok = kUnkId;
        }
        x[pos] = kMaskId;
        double s = 0.0;
        for (double v : forward_mask_distribution(p, x, pos)) s += v;
        worst = std::max(worst, std::abs(s - 1.0));
    }
    require(o, worst <= 1e-9, "deviation " + fmt("%.3g", worst));
    if (o.pass) o.detail = "100 cases, max |sum - 1| = " + fmt("%.3g", worst);
    return o;
}

Outcome augmentation_cardinality() {
    Outcome o;
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const std::size_t k = 1 + rng.uniform_index(5);
        const std::size_t n = 1 + rng.uniform_index(64);
        auto train = random_split(60, 2, 32, rng);
        train.examples.resize(n);
        Verbalizer v;
        for (std::size_t y = 0; y < 2; ++y) {
            TokenSeq words;
            for (std::size_t j = 0; j < k; ++j) words.push_back(static_cast<TokenId>(kNumSpecials + 10 * y + j));
            v.label_words.push_back(words);
        }
        const auto out = prompt_da_augment(train, v);
        require(o, out.size() == k * n, "size " + std::to_string(out.size()) + " for k_y=" + std::to_string(k));
        for (const auto& a : out) require(o, a.tokens == train.examples[a.origin].tokens, "instance altered");
    }
    Rng rng2(8);
    const auto pool = random_split(30, 2, 40, rng2);
    const auto splits = kshot_sample(pool, 8, 1);
    const auto pairs = prompt_da_augment(splits.train, Verbalizer{{{3, 4, 5}, {6, 7, 8}}});
    require(o, pairs.size() == 48, "K=8, k_y=3 gave " + std::to_string(pairs.size()) + " pairs");
    if (o.pass) o.detail = "200 randomized cases; K=8, |Y|=2, k_y=3 -> 48 pairs";
    return o;
}

Outcome baseline_degeneration(const ExperimentContext& ctx, const ExperimentConfig& base) {
    Outcome o;
    std::size_t compared = 0;
    for (const auto seed : base.seeds) {
        auto cfg = base;
        cfg.k_y = 1;
        cfg.verbalizer_mode = VerbalizerMode::automatic;
        const auto pda = run_single_full(ctx, cfg, seed);
        // Standard prompt tuning, assembled directly from the modules.
        const auto t = PromptTemplate::make(cfg.template_mode, ctx.vocab);
        TokenSeq words;
        for (const auto& w : pda.verbalizer.label_words) words.push_back(w.at(0));
        TuneConfig tc = cfg.tune;
        tc.seed = derive_seed(seed, "shuffle");
        const auto standard = tune(ctx.pretrained, standard_prompt_pairs(pda.splits.train, words), t, tc);
        require(o, standard.params == pda.tuned, "parameters differ at seed " + std::to_string(seed));
        const auto a = evaluate(pda.tuned, ctx.test, t, pda.verbalizer);
        const auto b = evaluate(standard.params, ctx.test, t, Verbalizer{{{words[0]}, {words[1]}}});
        for (std::size_t i = 0; i < a.predictions.size(); ++i) {
            require(o, a.predictions[i].predicted == b.predictions[i].predicted &&
                           a.predictions[i].scores == b.predictions[i].scores,
                    "prediction differs at seed " + std::to_string(seed));
        }
        compared += a.predictions.size();

        cfg.verbalizer_mode = VerbalizerMode::single;
        const auto single = run_single_full(ctx, cfg, seed);
        require(o, single.tuned == pda.tuned, "single-word mode differs at seed " + std::to_string(seed));
    }
    if (o.pass) o.detail = std::to_string(base.seeds.size()) + " seeds, " + std::to_string(compared) + " predictions identical";
    return o;
}

Outcome determinism(const fs::path& data_dir) {
    Outcome o;
    TempDir dir("acceptance_cli");
    std::ofstream(dir / "small.json") << R"({
      "name": "det",
      "source": {"synthetic": {"corpus_size": 600, "pool_per_class": 24, "test_per_class": 50}, "data_seed": 11,
                 "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_len": 16},
                 "pretrain": {"epochs": 3}},
      "K": 4, "seeds": [1, 2, 3], "tune": {"epochs": 3}
    })";
    const auto cfg = (dir / "small.json").string();
    const auto conds = (data_dir / "table3_conditions.json").string();
    const std::vector<std::string> commands = {
        "gen-data --seed 4 -o {out}",
        "pretrain -c " + cfg + " -o {out}",
        "search-verbalizer -c " + cfg + " -o {out}/v.txt",
        "tune -c " + cfg + " --seed 2 -o {out}",
        "experiment -c " + cfg + " --conditions " + conds + " -o {out}",
        "experiment -c " + cfg + " --conditions " + conds + " --threads 3 -o {out}",
        "sweep -c " + cfg + " --param ky --values 1,2,3 -o {out}",
    };
    std::size_t files = 0;
    for (std::size_t c = 0; c < commands.size(); ++c) {
        std::vector<fs::path> outs;
        for (int rep = 0; rep < 2; ++rep) {
            const auto out = dir / ("run" + std::to_string(c) + "_" + std::to_string(rep));
            auto cmd = commands[c];
            for (std::size_t p; (p = cmd.find("{out}")) != std::string::npos;) cmd.replace(p, 5, out.string());
            const int status = std::system((std::string(LGDA_CLI_PATH) + " " + cmd + " > /dev/null 2>&1").c_str());
            require(o, WIFEXITED(status) && WEXITSTATUS(status) == 0, "command failed: " + cmd);
            outs.push_back(out);
        }
        if (!o.pass) break;
        for (const auto& entry : fs::recursive_directory_iterator(outs[0])) {
            if (!entry.is_regular_file()) continue;
            const auto rel = fs::relative(entry.path(), outs[0]);
            const auto read = [](const fs::path& p) {
                std::ifstream in(p, std::ios::binary);
                return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
            };
            require(o, read(entry.path()) == read(outs[1] / rel), "differs: " + rel.string());
            ++files;
        }
    }
    if (o.pass) o.detail = std::to_string(commands.size()) + " commands run twice, " + std::to_string(files) + " output files byte-identical";
    return o;
}

Outcome sampling_protocol() {
    Outcome o;
    Rng rng(9);
    DatasetSplit pool;
    pool.class_count = 3;
    pool.label_names = {"a", "b", "c"};
    for (TokenId i = 0; i < 300; ++i) pool.examples.push_back({{i}, static_cast<ClassId>(i % 3)});
    for (int c = 0; c < 100; ++c) {
        const auto k = 1 + rng.uniform_index(50);
        const auto seed = rng.next_u64();
        const auto s = kshot_sample(pool, k, seed);
        for (ClassId y = 0; y < 3; ++y) {
            require(o, examples_of_class(s.train, y).size() == k, "train count");
            require(o, examples_of_class(s.val, y).size() == k, "val count");
        }
        std::set<TokenId> seen;
        for (const auto& ex : s.train.examples) seen.insert(ex.tokens[0]);
        for (const auto& ex : s.val.examples) seen.insert(ex.tokens[0]);
        require(o, seen.size() == 6 * k, "train and val overlap for K=" + std::to_string(k));
    }
    if (o.pass) o.detail = "100 (K, seed) cases, exact counts, disjoint";
    return o;
}

Outcome prediction_transformation() {
    Outcome o;
    Rng rng(10);
    for (int i = 0; i < 100; ++i) {
        const std::size_t V = 8 + rng.uniform_index(12);
        const auto vocab = word_vocab(V - kNumSpecials - 2);
        const auto model = ModelParams::init(tiny_config(V), rng.next_u64(), 0.7);
        const auto t = PromptTemplate::make(rng.bernoulli(0.5) ? TemplateMode::manual : TemplateMode::template_free, vocab);
        Verbalizer v;
        std::vector<TokenId> pool;
        for (TokenId w = kNumSpecials; w < static_cast<TokenId>(V); ++w) pool.push_back(w);
        rng.shuffle(pool);
        const auto classes = 2 + rng.uniform_index(2);
        const auto k = 1 + rng.uniform_index(std::min<std::size_t>(3, pool.size() / classes));
        for (std::size_t y = 0; y < classes; ++y) v.label_words.emplace_back(pool.begin() + y * k, pool.begin() + (y + 1) * k);
        TokenSeq x(1 + rng.uniform_index(8));
        for (auto& tok : x) tok = static_cast<TokenId>(kNumSpecials + rng.uniform_index(V - kNumSpecials));
        const auto in = apply_template(x, t, model.config().max_len);
        const auto full = forward_mask_distribution(model, in.tokens, in.mask_pos);
        const auto s = class_scores(model, x, t, v);
        for (std::size_t y = 0; y < classes; ++y) {
            double best = 0.0;
            for (auto w : v.label_words[y]) best = std::max(best, full[w]);
            require(o, s.class_scores[y] == best, "class score differs from the brute-force max");
        }
    }
    // Dominated words: below the class max on every example.
    std::size_t constructed = 0;
    const std::size_t V = 16;
    const auto vocab = word_vocab(V - kNumSpecials - 2);
    const auto t = PromptTemplate::make(TemplateMode::manual, vocab);
    for (int trial = 0; trial < 30; ++trial) {
        const auto model = ModelParams::init(tiny_config(V), rng.next_u64(), 0.8);
        const auto data = random_split(V, 2, 10, rng);
        const Verbalizer base{{{static_cast<TokenId>(5 + trial % 4)}, {static_cast<TokenId>(10 + trial % 5)}}};
        std::vector<std::vector<double>> dists;
        for (const auto& ex : data.examples) dists.push_back(mask_distribution(model, ex.tokens, t));
        for (std::size_t y = 0; y < 2; ++y) {
            for (TokenId w = kNumSpecials; w < static_cast<TokenId>(V); ++w) {
                const auto own = base.label_words[y][0];
                if (w == own) continue;
                if (!std::all_of(dists.begin(), dists.end(), [&](const auto& d) { return d[w] < d[own]; })) continue;
                auto grown = base;
                grown.label_words[y].push_back(w);
                ++constructed;
                for (const auto& ex : data.examples) {
                    require(o, predict(model, ex.tokens, t, grown) == predict(model, ex.tokens, t, base),
                            "dominated word changed a prediction");
                }
            }
        }
    }
    require(o, constructed > 0, "no dominated words constructed");
    if (o.pass) o.detail = "100 brute-force cases; " + std::to_string(constructed) + " dominated-word extensions invariant";
    return o;
}

const RunReport& row(const ComparisonTable& table, const std::string& name) {
    for (const auto& r : table.rows) {
        if (r.name == name) return r;
    }
    throw std::runtime_error("missing condition " + name);
}

std::string points(double acc) { return fmt("%.2f", 100.0 * acc); }

}  // namespace

int main() {
    const fs::path data_dir = LGDA_DATA_DIR;
    const auto base_json = read_json_file(data_dir / "base.json");
    const auto conditions = parse_conditions(read_json_file(data_dir / "table3_conditions.json"));

    bool all = true;
    const auto report = [&](int n, const char* title, const std::function<Outcome()>& fn) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        all = all && o.pass;
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", n, title, o.detail.c_str(), secs);
        std::fflush(stdout);
    };

    report(1, "verbalizer oracle equivalence", verbalizer_oracle);
    report(2, "gradient correctness", gradient_check);
    report(3, "normalization", normalization);
    report(4, "augmentation cardinality", augmentation_cardinality);

    ContextCache cache;
    ComparisonTable table;
    bool table_ready = false;
    const auto run_table = [&] {
        if (!table_ready) {
            table = run_conditions(base_json, conditions, &cache);
            table_ready = true;
        }
    };
    report(5, "baseline degeneration", [&] {
        const auto cfg = config_from_json(base_json);
        return baseline_degeneration(cache.get(cfg), cfg);
    });
    report(6, "trend: +PromptDA vs prompt tuning", [&] {
        run_table();
        const double pt = row(table, "prompt-tuning").test_accuracy.mean;
        const double pda = row(table, "+promptda").test_accuracy.mean;
        Outcome o;
        o.pass = pda >= pt - 0.005;
        o.detail = "prompt tuning " + points(pt) + ", +PromptDA " + points(pda) + ", tolerance 0.5 points";
        return o;
    });
    report(7, "trend: combination with conventional DA", [&] {
        run_table();
        const double pda = row(table, "+promptda").test_accuracy.mean;
        const double cda = row(table, "+conventional-da").test_accuracy.mean;
        const double both = row(table, "+promptda+conventional-da").test_accuracy.mean;
        Outcome o;
        o.pass = both >= std::max(pda, cda) - 0.005;
        o.detail = "PromptDA " + points(pda) + ", conventional DA " + points(cda) + ", both " + points(both) +
                   ", tolerance 0.5 points";
        return o;
    });
    report(8, "determinism", [&] { return determinism(data_dir); });
    report(9, "sampling protocol", sampling_protocol);
    report(10, "prediction transformation", prediction_transformation);

    if (table_ready) std::printf("\n%s", render_table(table.rows).c_str());
    return all ? 0 : 1;
}
