#include "lgda/verbalizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lgda/errors.hpp"
#include "lgda/inference.hpp"

namespace lgda {

std::size_t Verbalizer::words_per_class() const {
    if (label_words.empty()) throw ConfigError("verbalizer has no classes");
    const auto k = label_words.front().size();
    for (const auto& words : label_words) {
        if (words.size() != k) throw ConfigError("verbalizer classes have different word counts");
    }
    return k;
}

void Verbalizer::validate(std::size_t vocab_size, bool strict) const {
    if (label_words.empty()) throw ConfigError("verbalizer has no classes");
    for (std::size_t y = 0; y < label_words.size(); ++y) {
        const auto& words = label_words[y];
        if (words.empty()) throw ConfigError("class " + std::to_string(y) + " has no label words");
        std::set<TokenId> seen;
        for (TokenId w : words) {
            if (w < 0 || static_cast<std::size_t>(w) >= vocab_size) {
                throw ConfigError("label word id " + std::to_string(w) + " outside the vocabulary");
            }
            if (Vocab::is_special(w)) throw ConfigError("special token used as label word");
            if (!seen.insert(w).second) {
                throw ConfigError("duplicate label word within class " + std::to_string(y));
            }
        }
    }
    if (strict && has_cross_class_overlap()) throw ConfigError("label word shared across classes (strict mode)");
}

bool Verbalizer::has_cross_class_overlap() const {
    std::set<TokenId> seen;
    for (const auto& words : label_words) {
        const std::set<TokenId> mine(words.begin(), words.end());
        for (TokenId w : mine) {
            if (!seen.insert(w).second) return true;
        }
    }
    return false;
}

std::vector<std::vector<std::string>> Verbalizer::words(const Vocab& vocab) const {
    std::vector<std::vector<std::string>> out;
    for (const auto& ids : label_words) {
        auto& row = out.emplace_back();
        for (TokenId id : ids) row.push_back(vocab.token(id));
    }
    return out;
}

std::string Verbalizer::to_text(const Vocab& vocab) const {
    std::string out;
    for (const auto& row : words(vocab)) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out.push_back(',');
            out += row[i];
        }
        out.push_back('\n');
    }
    return out;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_on(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto at = s.find(sep, start);
        parts.push_back(std::string(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start)));
        if (at == std::string_view::npos) break;
        start = at + 1;
    }
    return parts;
}

}  // namespace

Verbalizer parse_verbalizer(std::string_view text, const Vocab& vocab) {
    std::vector<std::string> class_specs;
    for (const auto& line : split_on(text, '\n')) {
        const auto t = trim(line);
        if (t.empty()) continue;
        for (const auto& part : split_on(t, '|')) class_specs.push_back(trim(part));
    }
    if (class_specs.empty()) throw ConfigError("verbalizer text is empty");
    Verbalizer v;
    for (const auto& spec : class_specs) {
        auto& ids = v.label_words.emplace_back();
        for (const auto& raw : split_on(spec, ',')) {
            const auto word = trim(raw);
            if (word.empty()) throw ConfigError("empty label word in verbalizer");
            auto lowered = split_words(word);
            if (lowered.size() != 1) throw ConfigError("label word '" + word + "' is not a single token");
            ids.push_back(vocab.require(lowered.front()));
        }
    }
    v.words_per_class();
    v.validate(vocab.size());
    return v;
}

Verbalizer load_manual_verbalizer(const std::filesystem::path& path, const Vocab& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open verbalizer file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_verbalizer(ss.str(), vocab);
}

void save_verbalizer(const Verbalizer& verbalizer, const Vocab& vocab, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write verbalizer: " + path.string());
    out << verbalizer.to_text(vocab);
}

std::vector<bool> candidacy_mask(std::size_t vocab_size, const PromptTemplate& t) {
    std::vector<bool> eligible(vocab_size, true);
    for (TokenId s = 0; s < kNumSpecials && static_cast<std::size_t>(s) < vocab_size; ++s) {
        eligible[static_cast<std::size_t>(s)] = false;
    }
    for (TokenId id : t.content_tokens()) {
        if (static_cast<std::size_t>(id) < vocab_size) eligible[static_cast<std::size_t>(id)] = false;
    }
    return eligible;
}

std::vector<double> candidate_scores_from_distributions(std::span<const std::vector<double>> distributions,
                                                        const std::vector<bool>& eligible, ScoreSpace space) {
    if (distributions.empty()) throw EmptyInputError("candidate scoring needs at least one example");
    std::vector<double> scores(eligible.size(), 0.0);
    for (const auto& dist : distributions) {
        if (dist.size() != eligible.size()) throw ShapeMismatchError("distribution size differs from vocabulary");
        for (std::size_t v = 0; v < dist.size(); ++v) {
            scores[v] += space == ScoreSpace::probability ? dist[v] : std::log(dist[v]);
        }
    }
    for (std::size_t v = 0; v < scores.size(); ++v) {
        if (!eligible[v]) scores[v] = kExcludedScore;
    }
    return scores;
}

std::vector<double> candidate_scores(const ModelParams& model, std::span<const LabeledExample> class_examples,
                                     const PromptTemplate& t, ScoreSpace space) {
    if (class_examples.empty()) throw EmptyInputError("no training examples for this class");
    const auto label = class_examples.front().label;
    std::vector<std::vector<double>> dists;
    dists.reserve(class_examples.size());
    for (const auto& ex : class_examples) {
        if (ex.label != label) throw ConfigError("candidate scoring expects examples of a single class");
        dists.push_back(mask_distribution(model, ex.tokens, t));
    }
    return candidate_scores_from_distributions(dists, candidacy_mask(model.config().vocab_size, t), space);
}

CandidateList top_m(std::span<const double> scores, std::size_t m) {
    if (m == 0) throw ConfigError("m must be at least 1");
    std::vector<TokenId> eligible;
    for (std::size_t v = 0; v < scores.size(); ++v) {
        if (std::isfinite(scores[v])) eligible.push_back(static_cast<TokenId>(v));
    }
    if (eligible.size() < m) {
        throw ConfigError("m=" + std::to_string(m) + " exceeds the " + std::to_string(eligible.size()) +
                          " eligible label-word candidates");
    }
    const auto by_score = [&](TokenId a, TokenId b) {
        const double sa = scores[static_cast<std::size_t>(a)], sb = scores[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    };
    std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(m), eligible.end(), by_score);
    CandidateList out;
    for (std::size_t i = 0; i < m; ++i) {
        out.ids.push_back(eligible[i]);
        out.scores.push_back(scores[static_cast<std::size_t>(eligible[i])]);
    }
    return out;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
    }
    return static_cast<std::uint64_t>(r);
}

std::uint64_t candidate_space_size(const CandidateSet& candidates, std::size_t k) {
    constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
    if (candidates.empty()) return 0;
    std::uint64_t total = 1;
    for (const auto& c : candidates) {
        const auto per = binomial(c.ids.size(), k);
        if (per == 0) return 0;
        if (per == kMax || total > kMax / per) return kMax;
        total *= per;
    }
    return total;
}

VerbalizerEnumerator::VerbalizerEnumerator(CandidateSet candidates, std::size_t k, std::uint64_t budget)
    : candidates_(std::move(candidates)), k_(k), size_(candidate_space_size(candidates_, k)) {
    if (k == 0) throw ConfigError("k_y must be at least 1");
    for (const auto& c : candidates_) {
        if (c.ids.size() < k) throw ConfigError("k_y exceeds the number of candidates per class");
    }
    if (size_ > budget) {
        throw BudgetError("candidate space of " + std::to_string(size_) + " verbalizers exceeds the budget of " +
                          std::to_string(budget));
    }
    combo_.assign(candidates_.size(), std::vector<std::size_t>(k));
    for (auto& c : combo_) std::iota(c.begin(), c.end(), std::size_t{0});
    done_ = size_ == 0;
}

bool VerbalizerEnumerator::advance() {
    // Odometer over classes, last class fastest; each digit is a k-combination.
    for (std::size_t y = combo_.size(); y-- > 0;) {
        auto& c = combo_[y];
        const auto m = candidates_[y].ids.size();
        std::size_t i = k_;
        while (i-- > 0) {
            if (c[i] < m - k_ + i) {
                ++c[i];
                for (std::size_t j = i + 1; j < k_; ++j) c[j] = c[j - 1] + 1;
                return true;
            }
        }
        std::iota(c.begin(), c.end(), std::size_t{0});
    }
    return false;
}

std::optional<Verbalizer> VerbalizerEnumerator::next() {
    if (done_) return std::nullopt;
    if (started_ && !advance()) {
        done_ = true;
        return std::nullopt;
    }
    started_ = true;
    Verbalizer v;
    for (std::size_t y = 0; y < combo_.size(); ++y) {
        auto& words = v.label_words.emplace_back();
        for (auto idx : combo_[y]) words.push_back(candidates_[y].ids[idx]);
    }
    return v;
}

void SearchConfig::validate() const {
    if (m == 0 || k == 0 || n == 0) throw ConfigError("search parameters m, n and k_y must be at least 1");
    if (k > m) throw ConfigError("k_y must not exceed m");
}

double train_accuracy(const ModelParams& model, const Verbalizer& verbalizer, const DatasetSplit& train,
                      const PromptTemplate& t) {
    return evaluate(model, train, t, verbalizer, Aggregation::max).accuracy();
}

SearchResult select_verbalizer(const ModelParams& model, const DatasetSplit& train, const PromptTemplate& t,
                               const SearchConfig& cfg) {
    cfg.validate();
    if (train.examples.empty()) throw EmptyInputError("verbalizer search needs training examples");

    // One forward pass per example; every candidate is then scored from these distributions.
    std::vector<std::vector<double>> dists;
    dists.reserve(train.size());
    for (const auto& ex : train.examples) dists.push_back(mask_distribution(model, ex.tokens, t));
    const auto eligible = candidacy_mask(model.config().vocab_size, t);

    SearchResult result;
    for (std::size_t y = 0; y < train.class_count; ++y) {
        std::vector<std::vector<double>> class_dists;
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (train.examples[i].label == static_cast<ClassId>(y)) class_dists.push_back(dists[i]);
        }
        if (class_dists.empty()) throw EmptyInputError("class " + std::to_string(y) + " has no training examples");
        result.candidates.push_back(top_m(candidate_scores_from_distributions(class_dists, eligible, cfg.score_space), cfg.m));
    }

    VerbalizerEnumerator enumerator(result.candidates, cfg.k, cfg.budget);
    std::vector<ScoredVerbalizer>& shortlist = result.shortlist;
    while (auto v = enumerator.next()) {
        if (cfg.strict && v->has_cross_class_overlap()) continue;
        ++result.evaluated;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < train.size(); ++i) {
            const auto scores = class_scores_from_distribution(dists[i], *v, Aggregation::max);
            if (argmax_class(scores.class_scores) == train.examples[i].label) ++correct;
        }
        // Insert after every entry with >= correct, keeping enumeration order among equals.
        auto pos = std::find_if(shortlist.begin(), shortlist.end(),
                                [&](const ScoredVerbalizer& s) { return s.correct < correct; });
        if (static_cast<std::size_t>(pos - shortlist.begin()) >= cfg.n) continue;
        shortlist.insert(pos, ScoredVerbalizer{std::move(*v), correct,
                                               static_cast<double>(correct) / static_cast<double>(train.size())});
        if (shortlist.size() > cfg.n) shortlist.pop_back();
    }
    if (shortlist.empty()) throw ConfigError("no admissible verbalizer (strict mode rejected every candidate)");

    const auto best = shortlist.front().correct;
    result.tied = static_cast<std::size_t>(std::count_if(shortlist.begin(), shortlist.end(),
                                                         [&](const ScoredVerbalizer& s) { return s.correct == best; }));
    std::size_t pick = 0;
    if (result.tied > 1) {
        Rng rng(cfg.seed);
        pick = static_cast<std::size_t>(rng.uniform_index(result.tied));
    }
    result.verbalizer = shortlist[pick].verbalizer;
    result.accuracy = shortlist[pick].accuracy;
    return result;
}

std::string search_report_json(const SearchResult& result, const Vocab& vocab) {
    nlohmann::ordered_json j;
    j["accuracy"] = result.accuracy;
    j["verbalizer"] = result.verbalizer.words(vocab);
    j["evaluated"] = result.evaluated;
    j["tied_at_best"] = result.tied;
    auto& cands = j["candidates"] = nlohmann::ordered_json::array();
    for (const auto& c : result.candidates) {
        auto row = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < c.ids.size(); ++i) {
            row.push_back({{"word", vocab.token(c.ids[i])}, {"score", c.scores[i]}});
        }
        cands.push_back(std::move(row));
    }
    auto& sl = j["shortlist"] = nlohmann::ordered_json::array();
    for (const auto& s : result.shortlist) {
        sl.push_back({{"verbalizer", s.verbalizer.words(vocab)}, {"accuracy", s.accuracy}});
    }
    return j.dump(2) + "\n";
}

}  // namespace lgda
