#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ner/corpus.hpp"
#include "ner/rng.hpp"

namespace ner {

// A sentence with each entity span collapsed to one mask symbol. slots and
// source_forms run parallel, one entry per mask in left-to-right order;
// source_forms keeps the original surface so infilling can avoid echoing it.
struct MaskedSentence {
    std::vector<std::string> tokens;
    std::vector<std::string> slots;  // entity type names
    std::vector<std::vector<std::string>> source_forms;

    std::size_t mask_count() const { return slots.size(); }
};

// Produces a context variant of a masked sentence. Implementations must
// keep the mask count, mask order and the slot list exactly.
class SentenceGenerator {
public:
    virtual ~SentenceGenerator() = default;
    virtual MaskedSentence generate(const MaskedSentence& masked, Rng& rng) const = 0;
};

struct AugmentConfig {
    std::size_t ratio = 2;      // augmented copies appended per original
    double deletion_p = 0.1;    // per-token drop probability, non-entity tokens only
    std::uint64_t seed = 0;
};

MaskedSentence mask_entities(const Sentence& s, const LabelScheme& scheme);

// Order-2 Markov chain over masked-corpus tokens. Mask symbols are kept
// verbatim; only the context between them is resampled, each gap to a fresh
// length in [ceil(g/2), 2g], so sentence length stays within [1/2, 2x].
class MarkovGenerator : public SentenceGenerator {
public:
    static MarkovGenerator train(const std::vector<MaskedSentence>& corpus);

    MaskedSentence generate(const MaskedSentence& masked, Rng& rng) const override;

    bool trained() const { return trained_; }

private:
    using Context = std::pair<std::string, std::string>;
    using Counts = std::map<std::string, std::uint32_t>;

    // Returns false when no sampleable successor exists at any order.
    bool sample_token(const Context& ctx, Rng& rng, std::string& out) const;
    static bool sample_from(const Counts& counts, Rng& rng, std::string& out);

    bool trained_ = false;
    std::map<Context, Counts> trigram_;
    std::map<std::string, Counts> bigram_;
    Counts unigram_;
};

// Replaces each mask with a surface form of its slot type sampled uniformly
// from the lexicon, skipping the slot's own source surface when at least one
// alternative exists. Throws std::invalid_argument naming the type when the
// lexicon has no form for a slot.
Sentence infill(const MaskedSentence& masked, const EntityLexicon& lex, const LabelScheme& scheme,
                Rng& rng);

// Independently deletes each O-tagged token with probability p; entity
// tokens survive. If everything would be deleted, the first token stays.
Sentence drop_nonentity(const Sentence& s, double p, Rng& rng);

// originals ++ ratio augmented variants per original (mask -> generate ->
// infill -> drop). Per-sentence child RNGs keep the output independent of
// evaluation order. Variants whose infill fails are skipped with a warning
// on `log`.
std::vector<Sentence> augment_corpus(const std::vector<Sentence>& corpus, const AugmentConfig& cfg,
                                     const EntityLexicon& lex, const SentenceGenerator& gen,
                                     const LabelScheme& scheme, std::ostream* log = nullptr);

}  // namespace ner
