#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ner/corpus.hpp"
#include "ner/rng.hpp"

namespace testutil {

// Synthetic tagging corpus where each entity type owns a disjoint pool of
// surface forms, so the mapping from token identity to tag is learnable by
// a small model. Filler tokens are shared and always O.
inline std::vector<ner::Sentence> synthetic_corpus(std::size_t n, const ner::LabelScheme& scheme,
                                                   std::uint64_t seed,
                                                   std::size_t forms_per_type = 4) {
    using namespace ner;
    static const std::vector<std::string> filler = {"the", "a",   "of",  "and", "saw",
                                                    "went", "to",  "near", "old", "new"};
    std::vector<std::vector<std::vector<std::string>>> pools(scheme.num_types());
    for (std::size_t t = 0; t < scheme.num_types(); ++t) {
        const std::string& ty = scheme.types()[t];
        for (std::size_t i = 0; i < forms_per_type; ++i) {
            std::vector<std::string> form{ty + "tok" + std::to_string(i)};
            if (i % 2 == 1) form.push_back(ty + "tail" + std::to_string(i));
            pools[t].push_back(std::move(form));
        }
    }

    Rng rng(seed);
    std::vector<Sentence> corpus;
    corpus.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Sentence s;
        auto add_filler = [&](std::size_t lo, std::size_t hi) {
            std::size_t c = lo + rng.uniform_int(hi - lo + 1);
            for (std::size_t i = 0; i < c; ++i) {
                s.tokens.push_back(filler[rng.uniform_int(filler.size())]);
                s.tags.push_back(LabelScheme::kOutside);
            }
        };
        auto add_entity = [&]() {
            std::size_t t = rng.uniform_int(scheme.num_types());
            const auto& form = pools[t][rng.uniform_int(pools[t].size())];
            for (std::size_t i = 0; i < form.size(); ++i) {
                s.tokens.push_back(form[i]);
                s.tags.push_back(i == 0 ? scheme.begin_tag(t) : scheme.inside_tag(t));
            }
        };
        add_filler(1, 2);
        add_entity();
        add_filler(1, 2);
        if (rng.uniform() < 0.5) {
            add_entity();
            add_filler(0, 1);
        }
        corpus.push_back(std::move(s));
    }
    return corpus;
}

}  // namespace testutil
