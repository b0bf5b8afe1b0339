#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ner/corpus.hpp"

namespace ner {

// One candidate dictionary hit over a half-open token range.
struct DictMatch {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive
    std::string etype;

    std::size_t weight() const { return end - start; }

    bool operator==(const DictMatch& o) const {
        return start == o.start && end == o.end && etype == o.etype;
    }
};

// Pairwise non-overlapping matches sorted by start.
struct ResolvedMatchSet {
    std::vector<DictMatch> matches;
    std::size_t total_weight = 0;
};

// Every token slice equal to a lexicon surface form (under the lexicon's
// case flag), including overlaps and multi-type hits, sorted by
// (start, end, type).
std::vector<DictMatch> find_matches(const std::vector<std::string>& tokens,
                                    const EntityLexicon& lex);

// Maximum total matched tokens over non-overlapping subsets (weighted
// interval scheduling). Equal-weight optima are disambiguated left to right,
// preferring the earlier start, then the longer match, then the smaller type
// name.
ResolvedMatchSet resolve_conflicts(std::vector<DictMatch> candidates);

// Overwrites each matched range with B-t (I-t)*; the rest keeps pred, with
// dangling I-tags repaired to B so the result is BIO-valid. With fill_only,
// only matches lying entirely on O-tagged positions are applied.
std::vector<int> apply_matches(const std::vector<int>& pred, const ResolvedMatchSet& resolved,
                               const LabelScheme& scheme, bool fill_only = false);

}  // namespace ner
