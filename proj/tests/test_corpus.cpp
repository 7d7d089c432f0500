#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "lgda/corpus.hpp"
#include "lgda/errors.hpp"
#include "test_support.hpp"

using namespace lgda;
using lgda::testing::TempDir;

TEST_CASE("build_vocab orders by frequency then token") {
    const auto v2 = build_vocab({"a b", "a c"}, 2);
    CHECK(v2.size() == 4);
    CHECK(v2.token(3) == "a");

    const auto v1 = build_vocab({"a b", "a c"}, 1);
    CHECK(v1.tokens() == std::vector<std::string>{"[MASK]", "[PAD]", "[UNK]", "a", "b", "c"});

    CHECK_THROWS_AS(build_vocab({"a b"}, 2), EmptyCorpusError);
    CHECK_THROWS_AS(build_vocab({}, 1), EmptyCorpusError);
}

TEST_CASE("build_vocab keeps reserved words") {
    const auto v = build_vocab({"x x y"}, 1, {"it", "is"});
    CHECK(v.contains("it"));
    CHECK(v.contains("is"));
    CHECK(v.token(3) == "x");
}

TEST_CASE("vocab size equals specials plus distinct tokens of a synthetic corpus") {
    auto spec = SyntheticSpec::defaults();
    spec.corpus_size = 1000;
    const auto data = generate_synthetic(spec, 11);
    std::set<std::string> distinct;
    for (const auto& line : data.corpus) {
        std::string word;
        for (char ch : line + " ") {
            if (ch == ' ') {
                if (!word.empty()) distinct.insert(word);
                word.clear();
            } else {
                word.push_back(ch);
            }
        }
    }
    const auto v = build_vocab(data.corpus, 1);
    CHECK(v.size() == 3 + distinct.size());
}

TEST_CASE("tokenize lowercases and maps unknown words to UNK") {
    const auto v = Vocab::from_tokens({"nice", "movie", "a"});
    CHECK(tokenize("Nice movie", v) == TokenSeq{v.id("nice"), v.id("movie")});
    CHECK(tokenize("zzz", v) == TokenSeq{kUnkId});
    CHECK(tokenize("A a", v) == TokenSeq{v.id("a"), v.id("a")});
    CHECK(tokenize("", v).empty());
    CHECK(tokenize("  \t ", v).empty());
    CHECK(detokenize(tokenize("Nice  MOVIE a", v), v) == "nice movie a");
}

TEST_CASE("vocab rejects duplicates and special names; save/load round-trips") {
    CHECK_THROWS_AS(Vocab::from_tokens({"a", "a"}), Error);
    CHECK_THROWS_AS(Vocab::from_tokens({"[MASK]"}), Error);
    CHECK_THROWS_AS(Vocab::from_tokens({"a"}).require("b"), UnknownWordError);

    TempDir dir("vocab");
    const auto v = Vocab::from_tokens({"x", "y", "z"});
    v.save(dir / "v.txt");
    CHECK(Vocab::load(dir / "v.txt") == v);

    std::ofstream(dir / "bad.txt") << "x\ny\n";
    CHECK_THROWS(Vocab::load(dir / "bad.txt"));
}

TEST_CASE("load_dataset assigns labels by first appearance") {
    TempDir dir("ds");
    std::ofstream(dir / "d.jsonl") << "{\"text\":\"a b\",\"label\":\"neg\"}\n"
                                   << "{\"text\":\"b c\",\"label\":\"pos\"}\n"
                                   << "\n"
                                   << "{\"text\":\"c\",\"label\":\"neg\"}\n"
                                   << "{\"text\":\"a\",\"label\":\"pos\"}\n";
    const auto v = Vocab::from_tokens({"a", "b", "c"});
    const auto s = load_dataset(dir / "d.jsonl", DatasetFormat::jsonl, v);
    CHECK(s.class_count == 2);
    CHECK(s.size() == 4);
    CHECK(s.label_names == std::vector<std::string>{"neg", "pos"});
    CHECK(s.examples[1].label == 1);
    CHECK(s.examples[2].tokens == TokenSeq{v.id("c")});

    const auto fixed = load_dataset(dir / "d.jsonl", DatasetFormat::jsonl, v, {"pos", "neg"});
    CHECK(fixed.examples[0].label == 1);
}

TEST_CASE("dataset parse errors carry the line number") {
    TempDir dir("dsbad");
    std::ofstream(dir / "d.tsv") << "a b\tpos\nb c\n";
    const auto v = Vocab::from_tokens({"a", "b", "c"});
    try {
        load_dataset(dir / "d.tsv", DatasetFormat::tsv, v);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    std::ofstream(dir / "d.jsonl") << "{\"text\":\"a\",\"label\":\"x\"}\n{\"text\":\"a\"}\n";
    try {
        load_dataset(dir / "d.jsonl", DatasetFormat::jsonl, v);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_dataset_format("csv"), UnknownFormatError);
    CHECK_THROWS_AS(format_from_extension("x.csv"), UnknownFormatError);
    CHECK(format_from_extension("x.tsv") == DatasetFormat::tsv);
}

TEST_CASE("dataset write and reload round-trips ids") {
    TempDir dir("rt");
    Rng rng(4);
    const auto v = lgda::testing::word_vocab(10);
    auto s = lgda::testing::random_split(v.size(), 3, 5, rng);
    for (auto fmt : {DatasetFormat::jsonl, DatasetFormat::tsv}) {
        const auto path = dir / (fmt == DatasetFormat::jsonl ? "s.jsonl" : "s.tsv");
        save_dataset(s, v, path, fmt);
        const auto back = load_dataset(path, fmt, v, s.label_names);
        CHECK(back.examples == s.examples);
        CHECK(back.class_count == s.class_count);
    }
}

TEST_CASE("encode_records rejects mask and pad tokens and empty text") {
    const auto v = Vocab::from_tokens({"a"});
    CHECK_THROWS(encode_records({{"a [mask]", "x"}}, v));
    CHECK_THROWS(encode_records({{"[PAD] a", "x"}}, v));
    CHECK(build_vocab({"a [MASK] b"}, 1).size() == kNumSpecials + 2);
    CHECK_THROWS(encode_records({{"   ", "x"}}, v));
    CHECK(encode_records({{"a zzz", "x"}}, v).examples[0].tokens == TokenSeq{v.id("a"), kUnkId});
}

TEST_CASE("kshot_sample gives K per class, disjoint, deterministic") {
    Rng rng(21);
    const auto full = lgda::testing::random_split(40, 2, 30, rng, 3, 8);
    const auto a = kshot_sample(full, 8, 99);
    CHECK(a.train.size() == 16);
    CHECK(a.val.size() == 16);
    CHECK(a.train.class_histogram() == std::vector<std::size_t>{8, 8});
    CHECK(a.val.class_histogram() == std::vector<std::size_t>{8, 8});
    const auto b = kshot_sample(full, 8, 99);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK_FALSE(kshot_sample(full, 8, 100).train == a.train);
}

TEST_CASE("kshot_sample with exactly 2K examples splits them all") {
    DatasetSplit full;
    full.class_count = 2;
    full.label_names = {"p", "n"};
    full.examples = {{{3}, 0}, {{4}, 0}, {{5}, 1}, {{6}, 1}};
    const auto s = kshot_sample(full, 1, 1);
    std::multiset<TokenId> seen;
    for (const auto& e : s.train.examples) seen.insert(e.tokens[0]);
    for (const auto& e : s.val.examples) seen.insert(e.tokens[0]);
    CHECK(seen == std::multiset<TokenId>{3, 4, 5, 6});
}

TEST_CASE("kshot_sample names the deficient class") {
    DatasetSplit full;
    full.class_count = 2;
    full.label_names = {"pos", "neg"};
    full.examples = {{{3}, 0}, {{4}, 0}, {{5}, 1}};
    try {
        kshot_sample(full, 1, 1);
        FAIL("expected InsufficientExamplesError");
    } catch (const InsufficientExamplesError& e) {
        CHECK(std::string(e.what()).find("neg") != std::string::npos);
    }
}

TEST_CASE("synthetic generator: sizes, coverage, determinism") {
    auto spec = SyntheticSpec::defaults();
    spec.redundancy = 3;
    spec.corpus_size = 5000;
    const auto a = generate_synthetic(spec, 1);
    CHECK(a.corpus.size() == 5000);
    CHECK(a.pool.size() == spec.pool_per_class * 2);
    CHECK(a.test.size() == spec.test_per_class * 2);

    const auto vocab = build_vocab(a.corpus, 1);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < 3; ++i) CHECK(vocab.contains(spec.cue_words[c][i]));
    }
    for (const auto& f : spec.filler_words) CHECK(vocab.contains(f));

    const auto again = generate_synthetic(spec, 1);
    CHECK(again.corpus == a.corpus);
    CHECK(again.pool == a.pool);

    // A different seed changes the lines but not the token domain.
    const auto b = generate_synthetic(spec, 2);
    std::multiset<std::string> la(a.corpus.begin(), a.corpus.end()), lb(b.corpus.begin(), b.corpus.end());
    CHECK(la != lb);
    CHECK(build_vocab(b.corpus, 1).size() == vocab.size());
    std::set<std::string> da(vocab.tokens().begin(), vocab.tokens().end());
    const auto vb = build_vocab(b.corpus, 1);
    std::set<std::string> db(vb.tokens().begin(), vb.tokens().end());
    CHECK(da == db);
}

TEST_CASE("synthetic task is balanced and interleaved") {
    const auto data = generate_synthetic(SyntheticSpec::defaults(), 3);
    std::map<std::string, int> counts;
    for (const auto& r : data.pool) counts[r.label]++;
    CHECK(counts["positive"] == counts["negative"]);
    CHECK(data.pool[0].label == "positive");
    CHECK(data.pool[1].label == "negative");
}

TEST_CASE("synthetic spec validation") {
    auto spec = SyntheticSpec::defaults();
    spec.cue_words[1][0] = spec.cue_words[0][0];
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = SyntheticSpec::defaults();
    spec.redundancy = 7;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = SyntheticSpec::defaults();
    spec.echo_rate = 1.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}
