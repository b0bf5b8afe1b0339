#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ner/augment.hpp"
#include "ner/corpus.hpp"
#include "ner/crf.hpp"
#include "ner/encoder.hpp"
#include "ner/ensemble.hpp"
#include "ner/params.hpp"

namespace ner {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 24;
    double encoder_lr = 3e-5;
    double crf_lr = 1e-3;  // CRF, fusion and adapter parameters
    double dropout = 0.5;
    std::size_t max_len = 128;
    std::size_t patience = 3;  // epochs without dev-F1 improvement
    std::uint64_t seed = 0;
    bool joint = false;  // single-stage end-to-end instead of two-stage

    void validate() const;
};

// Adaptive moment estimation; betas and epsilon are fixed here rather than
// configured.
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

class AdamState {
public:
    explicit AdamState(std::size_t size) : m_(size, 0.0), v_(size, 0.0) {}

    // One bias-corrected update over a flat view; n must equal the
    // construction size.
    void step(double* params, const double* grads, std::size_t n, double lr);

private:
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

// A set of live parameter views updated together under one learning rate.
class ParamGroup {
public:
    ParamGroup(std::vector<ParamRef> params, double lr);

    // grads must mirror the parameter layout ref-for-ref.
    void apply(const std::vector<ParamRef>& grads);

    std::vector<double> snapshot() const { return flatten(params_); }
    void restore(const std::vector<double>& flat) { unflatten(flat, params_); }
    double lr() const { return lr_; }

private:
    std::vector<ParamRef> params_;
    double lr_;
    AdamState adam_;
};

struct ScopeMetrics {
    std::size_t gold = 0;
    std::size_t pred = 0;
    std::size_t correct = 0;

    double precision() const { return pred == 0 ? 0.0 : static_cast<double>(correct) / pred; }
    double recall() const { return gold == 0 ? 0.0 : static_cast<double>(correct) / gold; }
    double f1() const;

    bool operator==(const ScopeMetrics&) const = default;
};

double f1_score(double precision, double recall);

// Entity-level exact (start, end, type) match counts, per type and overall.
struct EvalReport {
    std::vector<std::pair<std::string, ScopeMetrics>> per_type;  // scheme order
    ScopeMetrics overall;

    // Header `scope precision recall f1 gold pred correct`, tab-separated,
    // one row per type plus ALL.
    std::string to_tsv() const;

    bool operator==(const EvalReport&) const = default;
};

EvalReport score_predictions(const std::vector<Sentence>& gold,
                             const std::vector<std::vector<int>>& pred,
                             const LabelScheme& scheme);

struct PostprocessOptions {
    EntityLexicon lexicon;  // carries its own case-sensitivity flag
    bool fill_only = false;

    explicit PostprocessOptions(EntityLexicon lex, bool fill = false)
        : lexicon(std::move(lex)), fill_only(fill) {}
};

// Everything needed to tag new text.
struct ModelBundle {
    LabelScheme scheme;
    Vocabulary vocab;
    std::vector<TokenEncoder> encoders;  // frozen after stage 1
    EnsembleModel ensemble;
    CrfModel crf;  // over the ensemble common dim

    std::size_t max_len() const { return encoders.at(0).config.max_len; }
};

// Constrained-Viterbi tags for one sentence (no truncation; tokens must fit
// max_len).
std::vector<int> predict_tags(const ModelBundle& bundle, const std::vector<std::string>& tokens);

// Batch prediction with over-length inputs truncated to max_len (warning on
// `warn`); result i has min(|tokens_i|, max_len) tags.
std::vector<std::vector<int>> predict_corpus(const ModelBundle& bundle,
                                             const std::vector<std::vector<std::string>>& inputs,
                                             const PostprocessOptions* post = nullptr,
                                             std::ostream* warn = nullptr);

EvalReport evaluate(const ModelBundle& bundle, const std::vector<Sentence>& data,
                    const PostprocessOptions* post = nullptr, std::ostream* warn = nullptr);

// Single fine-tuned encoder with its private CRF head.
EvalReport evaluate_encoder(const TokenEncoder& enc, const CrfModel& crf,
                            const std::vector<Sentence>& data, const LabelScheme& scheme,
                            std::ostream* warn = nullptr);

struct EncoderStage {
    TokenEncoder encoder;
    CrfModel crf;
    EvalReport dev_report;
};

// Mini-batch gradient training of encoder + private CRF head on the tagging
// loss; early stop on dev entity F1, returning the best-dev-epoch
// parameters. The model-init stream is cfg.seed child 0 (used by callers
// creating the encoder), training consumes child 1.
EncoderStage finetune_encoder(TokenEncoder encoder, const std::vector<Sentence>& train,
                              const std::vector<Sentence>& dev, const TrainConfig& cfg,
                              const LabelScheme& scheme, std::ostream* log = nullptr);

struct EnsembleStage {
    EnsembleModel ensemble;
    CrfModel crf;
    EvalReport dev_report;
};

// Stage 2: encoders stay frozen (their outputs are precomputed once);
// adapters, fusion and a fresh CRF train at cfg.crf_lr.
EnsembleStage train_ensemble(const std::vector<TokenEncoder>& encoders,
                             const std::vector<Sentence>& train,
                             const std::vector<Sentence>& dev, const TrainConfig& cfg,
                             const LabelScheme& scheme, std::size_t common_dim,
                             std::size_t attn_dim, std::ostream* log = nullptr);

struct PipelineOptions {
    std::vector<EncoderConfig> encoder_configs;  // empty = default trio
    std::size_t common_dim = 64;
    std::size_t attn_dim = 32;
};

// Two stand-ins over bidirectional attention at different depths/widths plus
// one causal, mirroring an ensemble of distinct pre-trained models.
std::vector<EncoderConfig> default_encoder_configs(double dropout, std::size_t max_len);

// Deterministic split used when no dev file is given: last 10 percent
// (at least one sentence) becomes dev. A single-sentence corpus serves as
// both.
std::pair<std::vector<Sentence>, std::vector<Sentence>> split_dev(
    const std::vector<Sentence>& corpus);

ModelBundle train_pipeline(const std::vector<Sentence>& train, const std::vector<Sentence>& dev,
                           const TrainConfig& cfg, const LabelScheme& scheme,
                           const PipelineOptions& opts, std::ostream* log = nullptr,
                           EvalReport* dev_report = nullptr);

struct AblationRow {
    std::size_t ratio = 0;
    std::size_t train_size = 0;
    EvalReport report;
};

// One single-encoder training run per augmentation ratio, evaluated on dev.
std::vector<AblationRow> ablate_augmentation(const std::vector<Sentence>& train,
                                             const std::vector<Sentence>& dev,
                                             const std::vector<std::size_t>& ratios,
                                             const TrainConfig& cfg, const AugmentConfig& aug,
                                             const EntityLexicon& lex,
                                             const SentenceGenerator& gen,
                                             const LabelScheme& scheme,
                                             const EncoderConfig& enc_cfg,
                                             std::ostream* log = nullptr);

// Plain single-encoder run; the ratio-0 ablation row reproduces this
// bit-for-bit under the same seed.
EncoderStage train_single(const std::vector<Sentence>& train, const std::vector<Sentence>& dev,
                          const TrainConfig& cfg, const LabelScheme& scheme,
                          const EncoderConfig& enc_cfg, std::ostream* log = nullptr);

// Header `ratio train_size precision recall f1`, ratios printed "0+" style.
std::string ablation_tsv(const std::vector<AblationRow>& rows);

void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);

}  // namespace ner
