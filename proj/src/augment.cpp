#include "ner/augment.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

#include "ner/encoder.hpp"

namespace ner {

namespace {
// Sentinels live outside any real token alphabet (corpus tokens cannot
// contain control characters).
const std::string kBos = "\x01<s>";
const std::string kEos = "\x01</s>";
}  // namespace

MaskedSentence mask_entities(const Sentence& s, const LabelScheme& scheme) {
    if (!scheme.valid_bio(s.tags)) throw std::invalid_argument("mask_entities: tags not BIO-valid");
    MaskedSentence out;
    std::size_t i = 0;
    while (i < s.size()) {
        int tag = s.tags[i];
        if (tag == LabelScheme::kOutside) {
            out.tokens.push_back(s.tokens[i]);
            ++i;
            continue;
        }
        std::size_t type = scheme.type_of(tag);
        std::size_t j = i + 1;
        while (j < s.size() && s.tags[j] == scheme.inside_tag(type)) ++j;
        out.tokens.push_back(kMaskToken);
        out.slots.push_back(scheme.types()[type]);
        out.source_forms.emplace_back(s.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      s.tokens.begin() + static_cast<std::ptrdiff_t>(j));
        i = j;
    }
    return out;
}

MarkovGenerator MarkovGenerator::train(const std::vector<MaskedSentence>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("MarkovGenerator: empty training corpus");
    MarkovGenerator gen;
    for (const MaskedSentence& s : corpus) {
        std::string prev2 = kBos, prev1 = kBos;
        for (std::size_t i = 0; i <= s.tokens.size(); ++i) {
            const std::string& next = i < s.tokens.size() ? s.tokens[i] : kEos;
            ++gen.trigram_[{prev2, prev1}][next];
            ++gen.bigram_[prev1][next];
            if (next != kEos && next != kMaskToken) ++gen.unigram_[next];
            prev2 = prev1;
            prev1 = next;
        }
    }
    gen.trained_ = true;
    return gen;
}

bool MarkovGenerator::sample_from(const Counts& counts, Rng& rng, std::string& out) {
    std::uint64_t total = 0;
    for (const auto& [tok, n] : counts) {
        if (tok == kEos || tok == kMaskToken) continue;
        total += n;
    }
    if (total == 0) return false;
    std::uint64_t pick = rng.uniform_int(total);
    for (const auto& [tok, n] : counts) {
        if (tok == kEos || tok == kMaskToken) continue;
        if (pick < n) {
            out = tok;
            return true;
        }
        pick -= n;
    }
    return false;  // unreachable
}

bool MarkovGenerator::sample_token(const Context& ctx, Rng& rng, std::string& out) const {
    if (auto it = trigram_.find(ctx); it != trigram_.end() && sample_from(it->second, rng, out))
        return true;
    if (auto it = bigram_.find(ctx.second); it != bigram_.end() && sample_from(it->second, rng, out))
        return true;
    return sample_from(unigram_, rng, out);
}

MaskedSentence MarkovGenerator::generate(const MaskedSentence& masked, Rng& rng) const {
    if (!trained_) throw std::logic_error("MarkovGenerator: generate before train");
    const std::size_t n = masked.tokens.size();
    bool has_context = false;
    for (const std::string& t : masked.tokens)
        if (t != kMaskToken) has_context = true;
    if (!has_context) return masked;  // nothing to resample
    if (unigram_.empty()) return masked;  // chain knows no context tokens

    // Segment the template into gaps separated by masks, then resample each
    // gap at a fresh length in [ceil(g/2), 2g].
    MaskedSentence out;
    out.slots = masked.slots;
    out.source_forms = masked.source_forms;
    out.tokens.reserve(2 * n);

    Context ctx{kBos, kBos};
    auto emit = [&](const std::string& tok) {
        out.tokens.push_back(tok);
        ctx = {ctx.second, tok};
    };

    std::size_t i = 0;
    while (i <= n) {
        std::size_t gap = 0;
        while (i + gap < n && masked.tokens[i + gap] != kMaskToken) ++gap;
        if (gap > 0) {
            std::size_t lo = (gap + 1) / 2, hi = 2 * gap;
            std::size_t want = lo + rng.uniform_int(hi - lo + 1);
            for (std::size_t t = 0; t < want; ++t) {
                std::string tok;
                if (!sample_token(ctx, rng, tok)) break;
                emit(tok);
            }
        }
        i += gap;
        if (i < n) emit(masked.tokens[i]);  // the mask itself
        ++i;
    }
    return out;
}

Sentence infill(const MaskedSentence& masked, const EntityLexicon& lex, const LabelScheme& scheme,
                Rng& rng) {
    Sentence out;
    out.origin = Origin::augmented;
    std::size_t slot = 0;
    for (const std::string& tok : masked.tokens) {
        if (tok != kMaskToken) {
            out.tokens.push_back(tok);
            out.tags.push_back(LabelScheme::kOutside);
            continue;
        }
        if (slot >= masked.slots.size())
            throw std::invalid_argument("infill: more masks than slots");
        const std::string& type = masked.slots[slot];
        auto type_index = scheme.type_index(type);
        if (!type_index) throw std::invalid_argument("infill: unknown entity type " + type);
        if (!lex.has_type(type) || lex.forms(type).empty())
            throw std::invalid_argument("infill: lexicon has no surface form for type " + type);

        const auto& forms = lex.forms(type);
        std::vector<const std::vector<std::string>*> candidates;
        candidates.reserve(forms.size());
        const std::vector<std::string>* source = nullptr;
        if (slot < masked.source_forms.size() && forms.size() >= 2) {
            auto it = forms.find(lex.normalize(masked.source_forms[slot]));
            if (it != forms.end()) source = &*it;
        }
        for (const auto& f : forms)
            if (&f != source) candidates.push_back(&f);

        const auto& pick = *candidates[rng.uniform_int(candidates.size())];
        for (std::size_t j = 0; j < pick.size(); ++j) {
            out.tokens.push_back(pick[j]);
            out.tags.push_back(j == 0 ? scheme.begin_tag(*type_index)
                                      : scheme.inside_tag(*type_index));
        }
        ++slot;
    }
    if (slot != masked.slots.size())
        throw std::invalid_argument("infill: fewer masks than slots");
    return out;
}

Sentence drop_nonentity(const Sentence& s, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("drop_nonentity: p must be in [0, 1)");
    Sentence out;
    out.origin = s.origin;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.tags[i] == LabelScheme::kOutside && rng.uniform() < p) continue;
        out.tokens.push_back(s.tokens[i]);
        out.tags.push_back(s.tags[i]);
    }
    if (out.tokens.empty() && !s.tokens.empty()) {
        out.tokens.push_back(s.tokens[0]);
        out.tags.push_back(s.tags[0]);
    }
    return out;
}

std::vector<Sentence> augment_corpus(const std::vector<Sentence>& corpus, const AugmentConfig& cfg,
                                     const EntityLexicon& lex, const SentenceGenerator& gen,
                                     const LabelScheme& scheme, std::ostream* log) {
    std::vector<Sentence> out = corpus;
    out.reserve(corpus.size() * (1 + cfg.ratio));
    Rng parent(cfg.seed);
    for (std::size_t idx = 0; idx < corpus.size(); ++idx) {
        Rng rng = parent.child(idx);
        for (std::size_t copy = 0; copy < cfg.ratio; ++copy) {
            MaskedSentence masked = mask_entities(corpus[idx], scheme);
            MaskedSentence varied = gen.generate(masked, rng);
            Sentence filled;
            try {
                filled = infill(varied, lex, scheme, rng);
            } catch (const std::invalid_argument& e) {
                if (log)
                    *log << "augment: skipping variant " << copy << " of sentence " << idx << ": "
                         << e.what() << "\n";
                continue;
            }
            Sentence dropped = drop_nonentity(filled, cfg.deletion_p, rng);
            dropped.origin = Origin::augmented;
            out.push_back(std::move(dropped));
        }
    }
    return out;
}

}  // namespace ner
