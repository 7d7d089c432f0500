#pragma once

#include <string>
#include <string_view>

#include "lgda/corpus.hpp"

namespace lgda {

enum class TemplateMode { manual, template_free };

/// Parses `manual` or `template-free` (also accepts `template_free`).
TemplateMode parse_template_mode(std::string_view name);
std::string to_string(TemplateMode mode);

/// The words of the manual template, in order. They are reserved vocabulary entries.
inline const std::vector<std::string>& manual_template_words() {
    static const std::vector<std::string> words = {"it", "is"};
    return words;
}

/// Fixed context wrapped around an input: prefix ++ x ++ suffix, with exactly one MASK
/// across prefix and suffix.
struct PromptTemplate {
    TemplateMode mode = TemplateMode::manual;
    TokenSeq prefix;
    TokenSeq suffix;

    /// manual: x ++ "it is" ++ [MASK]; template_free: x ++ [MASK].
    static PromptTemplate make(TemplateMode mode, const Vocab& vocab);

    std::size_t overhead() const { return prefix.size() + suffix.size(); }
    /// Non-special ids used by the template (excluded from label-word candidacy).
    TokenSeq content_tokens() const;
};

struct TemplatedInput {
    TokenSeq tokens;
    std::size_t mask_pos = 0;
};

/// Applies the template. Inputs too long for `max_len` lose tokens from the left; the
/// template itself is always kept. Throws MaskPositionError if x already holds MASK and
/// LengthError if the template alone does not fit.
TemplatedInput apply_template(const TokenSeq& x, const PromptTemplate& t, std::size_t max_len);

}  // namespace lgda
