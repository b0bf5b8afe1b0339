#include "ner/postprocess.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace ner {

std::vector<DictMatch> find_matches(const std::vector<std::string>& tokens,
                                    const EntityLexicon& lex) {
    // Index forms by their token count so each slice is one set lookup.
    std::map<std::size_t, std::map<std::vector<std::string>, std::vector<std::string>>> by_len;
    for (const auto& [type, forms] : lex.by_type())
        for (const auto& form : forms) by_len[form.size()][form].push_back(type);

    std::vector<DictMatch> out;
    const std::size_t n = tokens.size();
    std::vector<std::string> norm = lex.normalize(tokens);
    for (std::size_t start = 0; start < n; ++start) {
        for (const auto& [len, forms] : by_len) {
            if (start + len > n) break;
            std::vector<std::string> slice(norm.begin() + static_cast<std::ptrdiff_t>(start),
                                           norm.begin() + static_cast<std::ptrdiff_t>(start + len));
            auto it = forms.find(slice);
            if (it == forms.end()) continue;
            for (const std::string& type : it->second)
                out.push_back(DictMatch{start, start + len, type});
        }
    }
    std::sort(out.begin(), out.end(), [](const DictMatch& a, const DictMatch& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.end != b.end) return a.end < b.end;
        return a.etype < b.etype;
    });
    return out;
}

ResolvedMatchSet resolve_conflicts(std::vector<DictMatch> candidates) {
    if (candidates.empty()) return {};
    // Start-ordered with longer matches first so the left-to-right optimal
    // reconstruction realizes the documented tie preference.
    std::sort(candidates.begin(), candidates.end(), [](const DictMatch& a, const DictMatch& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.end != b.end) return a.end > b.end;
        return a.etype < b.etype;
    });

    const std::size_t n = candidates.size();
    // next[j]: first candidate starting at or after candidates[j].end.
    std::vector<std::size_t> next(n);
    for (std::size_t j = 0; j < n; ++j) {
        auto it = std::lower_bound(candidates.begin(), candidates.end(), candidates[j].end,
                                   [](const DictMatch& c, std::size_t pos) { return c.start < pos; });
        next[j] = static_cast<std::size_t>(it - candidates.begin());
    }

    // best[j]: maximum total weight using candidates j..n-1.
    std::vector<std::size_t> best(n + 1, 0);
    for (std::size_t j = n; j-- > 0;)
        best[j] = std::max(best[j + 1], candidates[j].weight() + best[next[j]]);

    ResolvedMatchSet resolved;
    resolved.total_weight = best[0];
    std::size_t j = 0;
    while (j < n) {
        if (candidates[j].weight() + best[next[j]] == best[j]) {
            resolved.matches.push_back(candidates[j]);
            j = next[j];
        } else {
            ++j;
        }
    }
    return resolved;
}

std::vector<int> apply_matches(const std::vector<int>& pred, const ResolvedMatchSet& resolved,
                               const LabelScheme& scheme, bool fill_only) {
    std::vector<int> out = pred;
    for (const DictMatch& m : resolved.matches) {
        if (m.end > out.size() || m.start >= m.end)
            throw std::invalid_argument("apply_matches: match out of bounds");
        auto type = scheme.type_index(m.etype);
        if (!type) throw std::invalid_argument("apply_matches: unknown entity type " + m.etype);
        if (fill_only) {
            bool all_outside = true;
            for (std::size_t i = m.start; i < m.end; ++i)
                if (out[i] != LabelScheme::kOutside) all_outside = false;
            if (!all_outside) continue;
        }
        for (std::size_t i = m.start; i < m.end; ++i)
            out[i] = i == m.start ? scheme.begin_tag(*type) : scheme.inside_tag(*type);
    }
    // Overwriting can orphan the tail of a predicted span; promote dangling
    // I-tags to B.
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!scheme.is_inside(out[i])) continue;
        std::size_t type = scheme.type_of(out[i]);
        bool chained = i > 0 && (out[i - 1] == scheme.begin_tag(type) ||
                                 out[i - 1] == scheme.inside_tag(type));
        if (!chained) out[i] = scheme.begin_tag(type);
    }
    return out;
}

}  // namespace ner
