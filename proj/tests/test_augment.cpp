#include <fstream>

#include "doctest.h"
#include "lgda/augment.hpp"
#include "lgda/errors.hpp"
#include "test_support.hpp"

using namespace lgda;
using lgda::testing::random_split;
using lgda::testing::TempDir;

TEST_CASE("one example pairs with each label word of its class") {
    const auto v = Vocab::from_tokens({"nice", "movie", "good", "great", "best", "bad"});
    DatasetSplit train;
    train.class_count = 2;
    train.examples = {{tokenize("nice movie", v), 0}};
    const Verbalizer verbalizer{{tokenize("good great best", v), {v.id("bad")}}};
    const auto out = prompt_da_augment(train, verbalizer);
    REQUIRE(out.size() == 3);
    const char* words[] = {"good", "great", "best"};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(out[i].tokens == train.examples[0].tokens);
        CHECK(out[i].target == v.id(words[i]));
        CHECK(out[i].origin == 0);
        CHECK(out[i].source_class == 0);
    }
}

TEST_CASE("K=8, two classes, k_y=3 gives 48 pairs in source then word order") {
    Rng rng(1);
    const auto train = random_split(20, 2, 8, rng);
    const Verbalizer v{{{3, 4, 5}, {6, 7, 8}}};
    const auto out = prompt_da_augment(train, v);
    REQUIRE(out.size() == 48);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& src = train.examples[i / 3];
        CHECK(out[i].origin == i / 3);
        CHECK(out[i].tokens == src.tokens);
        CHECK(out[i].source_class == src.label);
        CHECK(out[i].target == v.label_words[src.label][i % 3]);
    }
}

TEST_CASE("size is k_y times the training set and instances are untouched") {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        const auto classes = 2 + rng.uniform_index(3);
        const auto k = 1 + rng.uniform_index(4);
        const auto train = random_split(40, classes, 1 + rng.uniform_index(6), rng);
        Verbalizer v;
        for (std::size_t y = 0; y < classes; ++y) {
            TokenSeq words;
            for (std::size_t i = 0; i < k; ++i) words.push_back(static_cast<TokenId>(3 + y * 8 + i));
            v.label_words.push_back(words);
        }
        const auto out = prompt_da_augment(train, v);
        CHECK(out.size() == k * train.size());
        for (const auto& a : out) {
            CHECK(a.tokens == train.examples[a.origin].tokens);
            const auto& words = v.label_words[a.source_class];
            CHECK(std::find(words.begin(), words.end(), a.target) != words.end());
        }
        if (k == 1) {
            for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].target == v.label_words[train.examples[i].label][0]);
        }
    }
}

TEST_CASE("missing class in the verbalizer is an error") {
    Rng rng(3);
    const auto train = random_split(10, 3, 2, rng);
    CHECK_THROWS_AS(prompt_da_augment(train, Verbalizer{{{3}, {4}}}), ConfigError);
}

TEST_CASE("synonym substitution keeps originals and adds perturbed copies") {
    Rng rng(4);
    const auto train = random_split(12, 2, 8, rng);
    SynonymLexicon lex;
    for (TokenId t = 3; t < 12; ++t) lex.add(t, {static_cast<TokenId>(t == 11 ? 3 : t + 1)});
    const auto out = synonym_substitute(train, lex, 2, 0.3, 9);
    REQUIRE(out.size() == 32);
    for (std::size_t i = 0; i < 16; ++i) CHECK(out.examples[i] == train.examples[i]);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        const auto& copy = out.examples[16 + i];
        CHECK(copy.label == train.examples[i].label);
        REQUIRE(copy.tokens.size() == train.examples[i].tokens.size());
        for (std::size_t j = 0; j < copy.tokens.size(); ++j) {
            const auto orig = train.examples[i].tokens[j];
            if (copy.tokens[j] != orig) {
                ++changed;
                CHECK(copy.tokens[j] == (*lex.find(orig))[0]);
            }
        }
    }
    CHECK(changed > 0);
    CHECK(synonym_substitute(train, lex, 2, 0.3, 9).examples == out.examples);
    CHECK(synonym_substitute(train, lex, 3, 0.3, 9).size() == 48);

    const auto none = synonym_substitute(train, lex, 2, 0.0, 9);
    for (std::size_t i = 0; i < 16; ++i) CHECK(none.examples[16 + i] == train.examples[i]);
    CHECK_THROWS_AS(synonym_substitute(train, lex, 0, 0.3, 9), ConfigError);
    CHECK_THROWS_AS(synonym_substitute(train, lex, 2, 1.5, 9), ConfigError);
}

TEST_CASE("rate 1 always substitutes a covered token") {
    DatasetSplit one;
    one.class_count = 1;
    one.examples = {{{5}, 0}};
    SynonymLexicon lex;
    lex.add(5, {7, 8});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto out = synonym_substitute(one, lex, 2, 1.0, seed);
        CHECK((out.examples[1].tokens[0] == 7 || out.examples[1].tokens[0] == 8));
    }
}

TEST_CASE("conventional DA then label augmentation gives k_y * copies * |D| pairs") {
    Rng rng(5);
    const auto train = random_split(12, 2, 8, rng);
    SynonymLexicon lex;
    lex.add(4, {5});
    for (std::size_t copies = 1; copies <= 3; ++copies) {
        const auto enlarged = synonym_substitute(train, lex, copies, 0.5, 1);
        CHECK(prompt_da_augment(enlarged, Verbalizer{{{6, 7, 8}, {9, 10, 11}}}).size() == 3 * copies * 16);
    }
}

TEST_CASE("lexicon construction and files") {
    const auto v = Vocab::from_tokens({"film", "movie", "picture"});
    const auto lex = SynonymLexicon::from_words({{"film", {"movie", "picture"}}}, v);
    REQUIRE(lex.find(v.id("film")));
    CHECK(*lex.find(v.id("film")) == TokenSeq{v.id("movie"), v.id("picture")});
    CHECK(lex.find(v.id("movie")) == nullptr);
    CHECK_THROWS_AS(SynonymLexicon::from_words({{"film", {"flick"}}}, v), UnknownWordError);
    SynonymLexicon self;
    self.add(3, {3});
    self.add(4, {4, 5, 5});
    CHECK(self.find(3) == nullptr);
    CHECK(*self.find(4) == TokenSeq{5});

    TempDir dir("lex");
    save_lexicon({{"film", {"movie"}}, {"movie", {"film", "picture"}}}, dir / "lex.json");
    const auto back = SynonymLexicon::load(dir / "lex.json", v);
    CHECK(back.size() == 2);
    CHECK(*back.find(v.id("movie")) == TokenSeq{v.id("film"), v.id("picture")});
    std::ofstream(dir / "bad.json") << "[1, 2]";
    CHECK_THROWS_AS(SynonymLexicon::load(dir / "bad.json", v), ParseError);
}
