#include "lgda/prompt_template.hpp"

#include <algorithm>

#include "lgda/errors.hpp"

namespace lgda {

TemplateMode parse_template_mode(std::string_view name) {
    if (name == "manual") return TemplateMode::manual;
    if (name == "template-free" || name == "template_free") return TemplateMode::template_free;
    throw ConfigError("unknown template mode '" + std::string(name) + "' (expected manual | template-free)");
}

std::string to_string(TemplateMode mode) {
    return mode == TemplateMode::manual ? "manual" : "template-free";
}

PromptTemplate PromptTemplate::make(TemplateMode mode, const Vocab& vocab) {
    PromptTemplate t;
    t.mode = mode;
    if (mode == TemplateMode::manual) {
        for (const auto& w : manual_template_words()) t.suffix.push_back(vocab.require(w));
    }
    t.suffix.push_back(kMaskId);
    return t;
}

TokenSeq PromptTemplate::content_tokens() const {
    TokenSeq out;
    for (const auto* part : {&prefix, &suffix}) {
        for (TokenId id : *part) {
            if (!Vocab::is_special(id) && std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
        }
    }
    return out;
}

TemplatedInput apply_template(const TokenSeq& x, const PromptTemplate& t, std::size_t max_len) {
    if (std::find(x.begin(), x.end(), kMaskId) != x.end()) {
        throw MaskPositionError("input already contains the mask token");
    }
    const auto masks = std::count(t.prefix.begin(), t.prefix.end(), kMaskId) +
                       std::count(t.suffix.begin(), t.suffix.end(), kMaskId);
    if (masks != 1) throw ConfigError("template must contain exactly one mask token");
    if (t.overhead() > max_len) throw LengthError("template longer than max_len");

    const auto keep = std::min(x.size(), max_len - t.overhead());
    TemplatedInput out;
    out.tokens.reserve(keep + t.overhead());
    out.tokens.insert(out.tokens.end(), t.prefix.begin(), t.prefix.end());
    out.tokens.insert(out.tokens.end(), x.end() - static_cast<std::ptrdiff_t>(keep), x.end());
    out.tokens.insert(out.tokens.end(), t.suffix.begin(), t.suffix.end());
    out.mask_pos = static_cast<std::size_t>(std::find(out.tokens.begin(), out.tokens.end(), kMaskId) - out.tokens.begin());
    return out;
}

}  // namespace lgda
