#include "ner/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "ner/checkpoint.hpp"
#include "ner/errors.hpp"
#include "ner/kernels.hpp"
#include "ner/postprocess.hpp"

namespace ner {

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size == 0 || max_len == 0 || patience == 0)
        throw std::invalid_argument("TrainConfig: counts must be positive");
    if (!(encoder_lr > 0.0 && encoder_lr < 1.0) || !(crf_lr > 0.0 && crf_lr < 1.0))
        throw std::invalid_argument("TrainConfig: learning rates must lie in (0, 1)");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("TrainConfig: dropout must be in [0, 1)");
}

void AdamState::step(double* params, const double* grads, std::size_t n, double lr) {
    if (n != m_.size()) throw std::invalid_argument("AdamState: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < n; ++i) {
        double g = grads[i];
        m_[i] = kAdamBeta1 * m_[i] + (1.0 - kAdamBeta1) * g;
        v_[i] = kAdamBeta2 * v_[i] + (1.0 - kAdamBeta2) * g * g;
        params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + kAdamEps);
    }
}

ParamGroup::ParamGroup(std::vector<ParamRef> params, double lr)
    : params_(std::move(params)), lr_(lr), adam_(total_size(params_)) {}

void ParamGroup::apply(const std::vector<ParamRef>& grads) {
    if (grads.size() != params_.size())
        throw std::invalid_argument("ParamGroup: gradient layout mismatch");
    std::vector<double> flat_grads = flatten(grads);
    std::vector<double> flat_params = flatten(params_);
    adam_.step(flat_params.data(), flat_grads.data(), flat_params.size(), lr_);
    unflatten(flat_params, params_);
}

double f1_score(double precision, double recall) {
    double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

double ScopeMetrics::f1() const { return f1_score(precision(), recall()); }

namespace {

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void tsv_row(std::ostringstream& out, const std::string& scope, const ScopeMetrics& m) {
    out << scope << '\t' << format_metric(m.precision()) << '\t' << format_metric(m.recall())
        << '\t' << format_metric(m.f1()) << '\t' << m.gold << '\t' << m.pred << '\t' << m.correct
        << '\n';
}

}  // namespace

std::string EvalReport::to_tsv() const {
    std::ostringstream out;
    out << "scope\tprecision\trecall\tf1\tgold\tpred\tcorrect\n";
    for (const auto& [type, metrics] : per_type) tsv_row(out, type, metrics);
    tsv_row(out, "ALL", overall);
    return out.str();
}

EvalReport score_predictions(const std::vector<Sentence>& gold,
                             const std::vector<std::vector<int>>& pred,
                             const LabelScheme& scheme) {
    if (gold.size() != pred.size())
        throw std::invalid_argument("score_predictions: corpus size mismatch");
    std::map<std::string, ScopeMetrics> by_type;
    for (const std::string& t : scheme.types()) by_type[t] = ScopeMetrics{};
    EvalReport report;

    for (std::size_t i = 0; i < gold.size(); ++i) {
        std::vector<int> gold_tags = gold[i].tags;
        if (gold_tags.size() > pred[i].size()) gold_tags.resize(pred[i].size());
        std::vector<EntitySpan> gold_spans = extract_spans(gold_tags);
        std::vector<EntitySpan> pred_spans = extract_spans(pred[i]);
        std::set<std::tuple<std::size_t, std::size_t, std::size_t>> gold_set;
        for (const EntitySpan& s : gold_spans) {
            gold_set.insert({s.start, s.end, s.type_index});
            ++by_type[scheme.types()[s.type_index]].gold;
        }
        for (const EntitySpan& s : pred_spans) {
            ScopeMetrics& m = by_type[scheme.types()[s.type_index]];
            ++m.pred;
            if (gold_set.count({s.start, s.end, s.type_index})) ++m.correct;
        }
    }

    for (const std::string& t : scheme.types()) {
        const ScopeMetrics& m = by_type[t];
        report.per_type.emplace_back(t, m);
        report.overall.gold += m.gold;
        report.overall.pred += m.pred;
        report.overall.correct += m.correct;
    }
    return report;
}

namespace {

Sentence truncate_sentence(const Sentence& s, std::size_t max_len) {
    if (s.size() <= max_len) return s;
    Sentence out;
    out.origin = s.origin;
    out.tokens.assign(s.tokens.begin(), s.tokens.begin() + static_cast<std::ptrdiff_t>(max_len));
    out.tags.assign(s.tags.begin(), s.tags.begin() + static_cast<std::ptrdiff_t>(max_len));
    return out;
}

// Eval-mode layer averages of every encoder for one sentence.
std::vector<Matrix> native_outputs(const std::vector<TokenEncoder>& encoders,
                                   const std::vector<std::string>& tokens) {
    Rng dummy(0);
    std::vector<Matrix> out;
    out.reserve(encoders.size());
    for (const TokenEncoder& enc : encoders)
        out.push_back(layer_average(encode(enc, tokens, false, dummy)));
    return out;
}

std::vector<int> decode_fused(const std::vector<Matrix>& native, const EnsembleModel& ensemble,
                              const CrfModel& constrained) {
    StackedOutputs stacked = apply_adapters(ensemble, native);
    Matrix fused = fuse_forward(ensemble.fusion, stacked);
    return viterbi(emissions(constrained, fused), constrained).tags;
}

void axpy_refs(double alpha, const std::vector<ParamRef>& src, const std::vector<ParamRef>& dst) {
    if (src.size() != dst.size()) throw std::invalid_argument("axpy_refs: layout mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i].size != dst[i].size) throw std::invalid_argument("axpy_refs: size mismatch");
        kernels::axpy(alpha, src[i].data, dst[i].data, src[i].size);
    }
}

void scale_refs(const std::vector<ParamRef>& refs, double alpha) {
    for (const ParamRef& r : refs) kernels::scale(r.data, alpha, r.size);
}

void zero_refs(const std::vector<ParamRef>& refs) {
    for (const ParamRef& r : refs) std::fill(r.data, r.data + r.size, 0.0);
}

std::vector<ParamRef> concat_refs(std::vector<ParamRef> a, const std::vector<ParamRef>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

EnsembleModel zero_ensemble_like(const EnsembleModel& m) {
    EnsembleModel z;
    z.adapters.reserve(m.adapters.size());
    for (const Matrix& a : m.adapters) z.adapters.emplace_back(a.rows(), a.cols());
    z.fusion.projections.reserve(m.fusion.projections.size());
    for (const Matrix& p : m.fusion.projections)
        z.fusion.projections.emplace_back(p.rows(), p.cols());
    z.fusion.query.assign(m.fusion.query.size(), 0.0);
    z.fusion.temperature = m.fusion.temperature;
    return z;
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t>& order, Rng& rng,
                                                   std::size_t batch_size) {
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
        std::size_t e = std::min(order.size(), b + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                             order.begin() + static_cast<std::ptrdiff_t>(e));
    }
    return batches;
}

[[noreturn]] void diverged(std::size_t epoch, std::size_t batch) {
    throw NumericError("training loss not finite at epoch " + std::to_string(epoch) + " batch " +
                       std::to_string(batch));
}

std::vector<std::vector<int>> postprocess_tags(std::vector<std::vector<int>> preds,
                                               const std::vector<std::vector<std::string>>& inputs,
                                               const PostprocessOptions& post,
                                               const LabelScheme& scheme) {
    for (std::size_t i = 0; i < preds.size(); ++i) {
        std::vector<std::string> tokens(inputs[i].begin(),
                                        inputs[i].begin() +
                                            static_cast<std::ptrdiff_t>(preds[i].size()));
        auto matches = find_matches(tokens, post.lexicon);
        if (matches.empty()) continue;
        preds[i] = apply_matches(preds[i], resolve_conflicts(std::move(matches)), scheme,
                                 post.fill_only);
    }
    return preds;
}

}  // namespace

std::vector<int> predict_tags(const ModelBundle& bundle, const std::vector<std::string>& tokens) {
    CrfModel constrained = constrain_bio(bundle.crf, bundle.scheme);
    return decode_fused(native_outputs(bundle.encoders, tokens), bundle.ensemble, constrained);
}

std::vector<std::vector<int>> predict_corpus(const ModelBundle& bundle,
                                             const std::vector<std::vector<std::string>>& inputs,
                                             const PostprocessOptions* post, std::ostream* warn) {
    CrfModel constrained = constrain_bio(bundle.crf, bundle.scheme);
    const std::size_t max_len = bundle.max_len();
    std::vector<std::vector<int>> preds;
    preds.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        std::vector<std::string> tokens = inputs[i];
        if (tokens.size() > max_len) {
            if (warn)
                *warn << "predict: sentence " << i << " has " << tokens.size()
                      << " tokens, truncating to " << max_len << "\n";
            tokens.resize(max_len);
        }
        preds.push_back(decode_fused(native_outputs(bundle.encoders, tokens), bundle.ensemble,
                                     constrained));
    }
    if (post) preds = postprocess_tags(std::move(preds), inputs, *post, bundle.scheme);
    return preds;
}

EvalReport evaluate(const ModelBundle& bundle, const std::vector<Sentence>& data,
                    const PostprocessOptions* post, std::ostream* warn) {
    std::vector<std::vector<std::string>> inputs;
    inputs.reserve(data.size());
    for (const Sentence& s : data) inputs.push_back(s.tokens);
    return score_predictions(data, predict_corpus(bundle, inputs, post, warn), bundle.scheme);
}

EvalReport evaluate_encoder(const TokenEncoder& enc, const CrfModel& crf,
                            const std::vector<Sentence>& data, const LabelScheme& scheme,
                            std::ostream* warn) {
    CrfModel constrained = constrain_bio(crf, scheme);
    Rng dummy(0);
    std::vector<std::vector<int>> preds;
    preds.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        Sentence s = truncate_sentence(data[i], enc.config.max_len);
        if (s.size() < data[i].size() && warn)
            *warn << "evaluate: sentence " << i << " truncated to " << enc.config.max_len << "\n";
        Matrix avg = layer_average(encode(enc, s.tokens, false, dummy));
        preds.push_back(viterbi(emissions(constrained, avg), constrained).tags);
    }
    return score_predictions(data, preds, scheme);
}

EncoderStage finetune_encoder(TokenEncoder encoder, const std::vector<Sentence>& train,
                              const std::vector<Sentence>& dev, const TrainConfig& cfg,
                              const LabelScheme& scheme, std::ostream* log) {
    cfg.validate();
    if (train.empty() || dev.empty())
        throw std::invalid_argument("finetune_encoder: empty corpus");

    Rng rng = Rng(cfg.seed).child(1);
    CrfModel crf = CrfModel::create(encoder.config.hidden_dim, scheme.num_tags(), rng);

    ParamGroup enc_group(param_refs(encoder.params, "enc/"), cfg.encoder_lr);
    ParamGroup crf_group(param_refs(crf, "crf/"), cfg.crf_lr);

    EncoderParams enc_grads = zero_params_like(encoder);
    CrfModel crf_grads = zero_crf_like(crf);
    std::vector<ParamRef> enc_grad_refs = param_refs(enc_grads, "enc/");
    std::vector<ParamRef> crf_grad_refs = param_refs(crf_grads, "crf/");

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double best_f1 = -1.0;
    std::size_t stale = 0;
    std::vector<double> best_enc, best_crf;
    EvalReport best_report;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (const auto& batch : make_batches(order, rng, cfg.batch_size)) {
            ++batch_index;
            zero_refs(enc_grad_refs);
            zero_refs(crf_grad_refs);
            double batch_loss = 0.0;
            for (std::size_t idx : batch) {
                Sentence s = truncate_sentence(train[idx], cfg.max_len);
                EncoderCache cache;
                Matrix avg = layer_average(encode(encoder, s.tokens, true, rng, &cache));
                EmissionTable e = emissions(crf, avg);
                batch_loss += nll_loss(e, crf, s.tags);
                CrfGradients cg = crf_backward(e, crf, s.tags);
                crf_grads.transitions.add_scaled(cg.transitions, 1.0);
                kernels::axpy(1.0, cg.start.data(), crf_grads.start.data(), cg.start.size());
                kernels::axpy(1.0, cg.end.data(), crf_grads.end.data(), cg.end.size());
                Matrix d_fused = emissions_backward(crf, avg, cg.emissions, crf_grads.projection,
                                                    crf_grads.bias);
                EncoderParams eg = encoder_backward(encoder, d_fused, cache);
                axpy_refs(1.0, param_refs(eg, "enc/"), enc_grad_refs);
            }
            if (!std::isfinite(batch_loss)) diverged(epoch, batch_index);
            double inv = 1.0 / static_cast<double>(batch.size());
            scale_refs(enc_grad_refs, inv);
            scale_refs(crf_grad_refs, inv);
            enc_group.apply(enc_grad_refs);
            crf_group.apply(crf_grad_refs);
            epoch_loss += batch_loss;
        }

        EvalReport report = evaluate_encoder(encoder, crf, dev, scheme);
        double f1 = report.overall.f1();
        if (log)
            *log << "finetune epoch " << epoch << " loss "
                 << epoch_loss / static_cast<double>(train.size()) << " dev-f1 " << f1 << "\n";
        if (f1 > best_f1) {
            best_f1 = f1;
            best_enc = enc_group.snapshot();
            best_crf = crf_group.snapshot();
            best_report = report;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }

    enc_group.restore(best_enc);
    crf_group.restore(best_crf);
    return EncoderStage{std::move(encoder), std::move(crf), std::move(best_report)};
}

EnsembleStage train_ensemble(const std::vector<TokenEncoder>& encoders,
                             const std::vector<Sentence>& train,
                             const std::vector<Sentence>& dev, const TrainConfig& cfg,
                             const LabelScheme& scheme, std::size_t common_dim,
                             std::size_t attn_dim, std::ostream* log) {
    cfg.validate();
    if (encoders.empty()) throw std::invalid_argument("train_ensemble: no encoders");
    if (train.empty() || dev.empty()) throw std::invalid_argument("train_ensemble: empty corpus");

    const std::size_t K = encoders.size();
    std::vector<std::size_t> native_dims;
    for (const TokenEncoder& enc : encoders) native_dims.push_back(enc.config.hidden_dim);

    // Frozen encoders: every representation is fixed, compute them once.
    std::vector<Sentence> train_cut, dev_cut;
    std::vector<std::vector<Matrix>> train_reps, dev_reps;
    for (const Sentence& s : train) {
        train_cut.push_back(truncate_sentence(s, cfg.max_len));
        train_reps.push_back(native_outputs(encoders, train_cut.back().tokens));
    }
    for (const Sentence& s : dev) {
        dev_cut.push_back(truncate_sentence(s, cfg.max_len));
        dev_reps.push_back(native_outputs(encoders, dev_cut.back().tokens));
    }

    Rng init_rng = Rng(cfg.seed).child(0);
    EnsembleModel model = EnsembleModel::create(native_dims, common_dim, attn_dim, init_rng);
    CrfModel crf = CrfModel::create(common_dim, scheme.num_tags(), init_rng);

    ParamGroup group(concat_refs(param_refs(model, "ens/"), param_refs(crf, "crf/")), cfg.crf_lr);

    EnsembleModel model_grads = zero_ensemble_like(model);
    CrfModel crf_grads = zero_crf_like(crf);
    std::vector<ParamRef> grad_refs =
        concat_refs(param_refs(model_grads, "ens/"), param_refs(crf_grads, "crf/"));

    auto eval_cached = [&](const std::vector<Sentence>& cut,
                           const std::vector<std::vector<Matrix>>& reps) {
        CrfModel constrained = constrain_bio(crf, scheme);
        std::vector<std::vector<int>> preds;
        preds.reserve(cut.size());
        for (const auto& r : reps) preds.push_back(decode_fused(r, model, constrained));
        return score_predictions(cut, preds, scheme);
    };

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng(cfg.seed).child(1);

    double best_f1 = -1.0;
    std::size_t stale = 0;
    std::vector<double> best_params;
    EvalReport best_report;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (const auto& batch : make_batches(order, rng, cfg.batch_size)) {
            ++batch_index;
            zero_refs(grad_refs);
            double batch_loss = 0.0;
            for (std::size_t idx : batch) {
                StackedOutputs stacked = apply_adapters(model, train_reps[idx]);
                FusionCache fc;
                Matrix fused = fuse_forward(model.fusion, stacked, &fc);
                EmissionTable e = emissions(crf, fused);
                batch_loss += nll_loss(e, crf, train_cut[idx].tags);
                CrfGradients cg = crf_backward(e, crf, train_cut[idx].tags);
                crf_grads.transitions.add_scaled(cg.transitions, 1.0);
                kernels::axpy(1.0, cg.start.data(), crf_grads.start.data(), cg.start.size());
                kernels::axpy(1.0, cg.end.data(), crf_grads.end.data(), cg.end.size());
                Matrix d_fused = emissions_backward(crf, fused, cg.emissions, crf_grads.projection,
                                                    crf_grads.bias);
                FusionGradients fg = fusion_backward(model.fusion, d_fused, fc);
                for (std::size_t k = 0; k < K; ++k) {
                    model_grads.fusion.projections[k].add_scaled(fg.projections[k], 1.0);
                    model_grads.adapters[k].add_scaled(matmul_ta(train_reps[idx][k], fg.inputs[k]),
                                                       1.0);
                }
                kernels::axpy(1.0, fg.query.data(), model_grads.fusion.query.data(),
                              fg.query.size());
            }
            if (!std::isfinite(batch_loss)) diverged(epoch, batch_index);
            scale_refs(grad_refs, 1.0 / static_cast<double>(batch.size()));
            group.apply(grad_refs);
            epoch_loss += batch_loss;
        }

        EvalReport report = eval_cached(dev_cut, dev_reps);
        double f1 = report.overall.f1();
        if (log)
            *log << "ensemble epoch " << epoch << " loss "
                 << epoch_loss / static_cast<double>(train.size()) << " dev-f1 " << f1 << "\n";
        if (f1 > best_f1) {
            best_f1 = f1;
            best_params = group.snapshot();
            best_report = report;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }

    group.restore(best_params);
    return EnsembleStage{std::move(model), std::move(crf), std::move(best_report)};
}

std::vector<EncoderConfig> default_encoder_configs(double dropout, std::size_t max_len) {
    EncoderConfig wide;
    wide.hidden_dim = 32;
    wide.num_layers = 4;
    wide.num_heads = 4;
    wide.ff_dim = 64;
    EncoderConfig deep;
    deep.hidden_dim = 48;
    deep.num_layers = 5;
    deep.num_heads = 4;
    deep.ff_dim = 96;
    EncoderConfig causal;
    causal.hidden_dim = 32;
    causal.num_layers = 4;
    causal.num_heads = 4;
    causal.ff_dim = 64;
    causal.variant = EncoderVariant::causal_attention;
    std::vector<EncoderConfig> configs{wide, deep, causal};
    for (EncoderConfig& c : configs) {
        c.dropout = dropout;
        c.max_len = max_len;
    }
    return configs;
}

std::pair<std::vector<Sentence>, std::vector<Sentence>> split_dev(
    const std::vector<Sentence>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("split_dev: empty corpus");
    std::size_t n_dev = std::max<std::size_t>(1, corpus.size() / 10);
    if (n_dev >= corpus.size()) return {corpus, corpus};
    std::vector<Sentence> train(corpus.begin(),
                                corpus.end() - static_cast<std::ptrdiff_t>(n_dev));
    std::vector<Sentence> dev(corpus.end() - static_cast<std::ptrdiff_t>(n_dev), corpus.end());
    return {std::move(train), std::move(dev)};
}

namespace {

// Single-stage alternative: everything trains at once, encoder parameters at
// the encoder rate, the rest at the CRF rate.
ModelBundle train_joint(const std::vector<Sentence>& train, const std::vector<Sentence>& dev,
                        const TrainConfig& cfg, const LabelScheme& scheme,
                        const PipelineOptions& opts, const Vocabulary& vocab,
                        std::vector<TokenEncoder> encoders, std::ostream* log,
                        EvalReport* dev_report) {
    const std::size_t K = encoders.size();
    std::vector<std::size_t> native_dims;
    for (const TokenEncoder& enc : encoders) native_dims.push_back(enc.config.hidden_dim);

    Rng master(cfg.seed);
    Rng init_rng = master.child(K);
    EnsembleModel model =
        EnsembleModel::create(native_dims, opts.common_dim, opts.attn_dim, init_rng);
    CrfModel crf = CrfModel::create(opts.common_dim, scheme.num_tags(), init_rng);

    std::vector<ParamRef> enc_refs;
    for (std::size_t k = 0; k < K; ++k)
        enc_refs = concat_refs(std::move(enc_refs),
                               param_refs(encoders[k].params, "enc" + std::to_string(k) + "/"));
    ParamGroup enc_group(enc_refs, cfg.encoder_lr);
    ParamGroup head_group(concat_refs(param_refs(model, "ens/"), param_refs(crf, "crf/")),
                          cfg.crf_lr);

    std::vector<EncoderParams> enc_grads;
    std::vector<ParamRef> enc_grad_refs;
    for (std::size_t k = 0; k < K; ++k) enc_grads.push_back(zero_params_like(encoders[k]));
    for (std::size_t k = 0; k < K; ++k)
        enc_grad_refs = concat_refs(std::move(enc_grad_refs),
                                    param_refs(enc_grads[k], "enc" + std::to_string(k) + "/"));
    EnsembleModel model_grads = zero_ensemble_like(model);
    CrfModel crf_grads = zero_crf_like(crf);
    std::vector<ParamRef> head_grad_refs =
        concat_refs(param_refs(model_grads, "ens/"), param_refs(crf_grads, "crf/"));

    std::vector<Sentence> train_cut;
    for (const Sentence& s : train) train_cut.push_back(truncate_sentence(s, cfg.max_len));

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = master.child(K + 1);

    auto eval_now = [&]() {
        ModelBundle b{scheme, vocab, encoders, model, crf};
        return evaluate(b, dev);
    };

    double best_f1 = -1.0;
    std::size_t stale = 0;
    std::vector<double> best_enc, best_head;
    EvalReport best_report;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::size_t batch_index = 0;
        for (const auto& batch : make_batches(order, rng, cfg.batch_size)) {
            ++batch_index;
            zero_refs(enc_grad_refs);
            zero_refs(head_grad_refs);
            double batch_loss = 0.0;
            for (std::size_t idx : batch) {
                const Sentence& s = train_cut[idx];
                std::vector<EncoderCache> caches(K);
                std::vector<Matrix> native;
                native.reserve(K);
                for (std::size_t k = 0; k < K; ++k)
                    native.push_back(
                        layer_average(encode(encoders[k], s.tokens, true, rng, &caches[k])));
                StackedOutputs stacked = apply_adapters(model, native);
                FusionCache fc;
                Matrix fused = fuse_forward(model.fusion, stacked, &fc);
                EmissionTable e = emissions(crf, fused);
                batch_loss += nll_loss(e, crf, s.tags);
                CrfGradients cg = crf_backward(e, crf, s.tags);
                crf_grads.transitions.add_scaled(cg.transitions, 1.0);
                kernels::axpy(1.0, cg.start.data(), crf_grads.start.data(), cg.start.size());
                kernels::axpy(1.0, cg.end.data(), crf_grads.end.data(), cg.end.size());
                Matrix d_fused = emissions_backward(crf, fused, cg.emissions, crf_grads.projection,
                                                    crf_grads.bias);
                FusionGradients fg = fusion_backward(model.fusion, d_fused, fc);
                kernels::axpy(1.0, fg.query.data(), model_grads.fusion.query.data(),
                              fg.query.size());
                for (std::size_t k = 0; k < K; ++k) {
                    model_grads.fusion.projections[k].add_scaled(fg.projections[k], 1.0);
                    model_grads.adapters[k].add_scaled(matmul_ta(native[k], fg.inputs[k]), 1.0);
                    Matrix d_native = matmul_tb(fg.inputs[k], model.adapters[k]);
                    EncoderParams eg = encoder_backward(encoders[k], d_native, caches[k]);
                    axpy_refs(1.0, param_refs(eg, "x/"),
                              param_refs(enc_grads[k], "x/"));
                }
            }
            if (!std::isfinite(batch_loss)) diverged(epoch, batch_index);
            double inv = 1.0 / static_cast<double>(batch.size());
            scale_refs(enc_grad_refs, inv);
            scale_refs(head_grad_refs, inv);
            enc_group.apply(enc_grad_refs);
            head_group.apply(head_grad_refs);
        }

        EvalReport report = eval_now();
        double f1 = report.overall.f1();
        if (log) *log << "joint epoch " << epoch << " dev-f1 " << f1 << "\n";
        if (f1 > best_f1) {
            best_f1 = f1;
            best_enc = enc_group.snapshot();
            best_head = head_group.snapshot();
            best_report = report;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }

    enc_group.restore(best_enc);
    head_group.restore(best_head);
    if (dev_report) *dev_report = best_report;
    return ModelBundle{scheme, vocab, std::move(encoders), std::move(model), std::move(crf)};
}

}  // namespace

ModelBundle train_pipeline(const std::vector<Sentence>& train, const std::vector<Sentence>& dev,
                           const TrainConfig& cfg, const LabelScheme& scheme,
                           const PipelineOptions& opts, std::ostream* log,
                           EvalReport* dev_report) {
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("train_pipeline: empty training corpus");

    std::vector<Sentence> train_use = train, dev_use = dev;
    if (dev_use.empty()) std::tie(train_use, dev_use) = split_dev(train);

    std::vector<EncoderConfig> configs = opts.encoder_configs.empty()
                                             ? default_encoder_configs(cfg.dropout, cfg.max_len)
                                             : opts.encoder_configs;
    Vocabulary vocab = Vocabulary::build(train_use);

    Rng master(cfg.seed);
    std::vector<TokenEncoder> encoders;
    encoders.reserve(configs.size());
    for (std::size_t k = 0; k < configs.size(); ++k) {
        Rng enc_rng = master.child(k).child(0);
        encoders.push_back(TokenEncoder::create(configs[k], vocab, enc_rng));
    }

    if (cfg.joint)
        return train_joint(train_use, dev_use, cfg, scheme, opts, vocab, std::move(encoders), log,
                           dev_report);

    for (std::size_t k = 0; k < encoders.size(); ++k) {
        TrainConfig stage_cfg = cfg;
        stage_cfg.seed = master.child(k).seed();
        if (log) *log << "fine-tuning encoder " << k << "\n";
        EncoderStage stage = finetune_encoder(std::move(encoders[k]), train_use, dev_use,
                                              stage_cfg, scheme, log);
        encoders[k] = std::move(stage.encoder);
        if (log)
            *log << "encoder " << k << " dev-f1 " << stage.dev_report.overall.f1() << "\n";
    }

    TrainConfig ens_cfg = cfg;
    ens_cfg.seed = master.child(encoders.size()).seed();
    EnsembleStage ens = train_ensemble(encoders, train_use, dev_use, ens_cfg, scheme,
                                       opts.common_dim, opts.attn_dim, log);
    if (dev_report) *dev_report = ens.dev_report;
    return ModelBundle{scheme, std::move(vocab), std::move(encoders), std::move(ens.ensemble),
                       std::move(ens.crf)};
}

EncoderStage train_single(const std::vector<Sentence>& train, const std::vector<Sentence>& dev,
                          const TrainConfig& cfg, const LabelScheme& scheme,
                          const EncoderConfig& enc_cfg, std::ostream* log) {
    Vocabulary vocab = Vocabulary::build(train);
    Rng init_rng = Rng(cfg.seed).child(0);
    TokenEncoder enc = TokenEncoder::create(enc_cfg, vocab, init_rng);
    return finetune_encoder(std::move(enc), train, dev, cfg, scheme, log);
}

std::vector<AblationRow> ablate_augmentation(const std::vector<Sentence>& train,
                                             const std::vector<Sentence>& dev,
                                             const std::vector<std::size_t>& ratios,
                                             const TrainConfig& cfg, const AugmentConfig& aug,
                                             const EntityLexicon& lex,
                                             const SentenceGenerator& gen,
                                             const LabelScheme& scheme,
                                             const EncoderConfig& enc_cfg, std::ostream* log) {
    if (ratios.empty()) throw std::invalid_argument("ablate_augmentation: no ratios");
    std::vector<AblationRow> rows;
    for (std::size_t ratio : ratios) {
        AugmentConfig run_aug = aug;
        run_aug.ratio = ratio;
        std::vector<Sentence> expanded = augment_corpus(train, run_aug, lex, gen, scheme, log);
        if (log) *log << "ablate ratio " << ratio << ": " << expanded.size() << " sentences\n";
        EncoderStage stage = train_single(expanded, dev, cfg, scheme, enc_cfg, log);
        AblationRow row;
        row.ratio = ratio;
        row.train_size = expanded.size();
        row.report = evaluate_encoder(stage.encoder, stage.crf, dev, scheme);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_tsv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "ratio\ttrain_size\tprecision\trecall\tf1\n";
    for (const AblationRow& row : rows) {
        const ScopeMetrics& m = row.report.overall;
        out << row.ratio << "+\t" << row.train_size << '\t' << format_metric(m.precision()) << '\t'
            << format_metric(m.recall()) << '\t' << format_metric(m.f1()) << '\n';
    }
    return out.str();
}

namespace {

std::vector<double> encoder_meta(const EncoderConfig& c) {
    return {static_cast<double>(c.hidden_dim),
            static_cast<double>(c.num_layers),
            static_cast<double>(c.num_heads),
            static_cast<double>(c.ff_dim),
            c.dropout,
            static_cast<double>(c.max_len),
            c.variant == EncoderVariant::causal_attention ? 1.0 : 0.0};
}

EncoderConfig meta_to_config(const std::vector<double>& v, std::size_t vocab_size,
                             const std::string& segment_name) {
    if (v.size() != 7) throw DataError("checkpoint: segment " + segment_name + " has wrong size");
    EncoderConfig c;
    c.vocab_size = vocab_size;
    c.hidden_dim = static_cast<std::size_t>(v[0]);
    c.num_layers = static_cast<std::size_t>(v[1]);
    c.num_heads = static_cast<std::size_t>(v[2]);
    c.ff_dim = static_cast<std::size_t>(v[3]);
    c.dropout = v[4];
    c.max_len = static_cast<std::size_t>(v[5]);
    c.variant = v[6] != 0.0 ? EncoderVariant::causal_attention
                            : EncoderVariant::bidirectional_attention;
    return c;
}

Segment ref_segment(const ParamRef& r) {
    return Segment{r.name, r.shape, std::vector<double>(r.data, r.data + r.size)};
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::string& path) {
    ModelBundle copy = bundle;  // refs need mutable storage; values are untouched
    std::vector<Segment> segments;
    segments.push_back(make_string_segment("scheme/types", copy.scheme.types()));
    segments.push_back(make_string_segment("vocab/tokens", copy.vocab.tokens()));
    segments.push_back(
        make_scalar_segment("meta/encoder_count", static_cast<double>(copy.encoders.size())));
    for (std::size_t k = 0; k < copy.encoders.size(); ++k) {
        std::string prefix = "enc" + std::to_string(k) + "/";
        segments.push_back(make_segment(prefix + "meta", encoder_meta(copy.encoders[k].config)));
        for (const ParamRef& r : param_refs(copy.encoders[k].params, prefix))
            segments.push_back(ref_segment(r));
    }
    for (const ParamRef& r : param_refs(copy.ensemble, "ensemble/"))
        segments.push_back(ref_segment(r));
    segments.push_back(
        make_scalar_segment("ensemble/fusion/temperature", copy.ensemble.fusion.temperature));
    for (const ParamRef& r : param_refs(copy.crf, "crf/")) segments.push_back(ref_segment(r));
    write_segments_file(path, segments);
}

ModelBundle load_bundle(const std::string& path) {
    std::vector<Segment> segments = read_segments_file(path);
    std::map<std::string, const Segment*> by_name;
    for (const Segment& s : segments) {
        if (!by_name.emplace(s.name, &s).second)
            throw DataError("checkpoint: duplicate segment " + s.name);
    }
    auto need = [&](const std::string& name) -> const Segment& {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint: missing segment " + name);
        return *it->second;
    };
    auto fill_refs = [&](const std::vector<ParamRef>& refs) {
        for (const ParamRef& r : refs) {
            const Segment& s = need(r.name);
            if (s.shape != r.shape)
                throw DataError("checkpoint: segment " + r.name + " has unexpected shape");
            std::copy(s.values.begin(), s.values.end(), r.data);
        }
    };

    ModelBundle bundle;
    bundle.scheme = LabelScheme(segment_strings(need("scheme/types")));
    bundle.vocab = Vocabulary(segment_strings(need("vocab/tokens")));

    auto count = static_cast<std::size_t>(segment_scalar(need("meta/encoder_count")));
    if (count == 0) throw DataError("checkpoint: no encoders in model file");
    for (std::size_t k = 0; k < count; ++k) {
        std::string prefix = "enc" + std::to_string(k) + "/";
        TokenEncoder enc;
        enc.config = meta_to_config(segment_vector(need(prefix + "meta")), bundle.vocab.size(),
                                    prefix + "meta");
        enc.config.validate();
        enc.vocab = bundle.vocab;
        enc.params = zero_params_like(enc);
        fill_refs(param_refs(enc.params, prefix));
        bundle.encoders.push_back(std::move(enc));
    }

    const Segment& query_seg = need("ensemble/fusion/query");
    std::size_t attn_dim = segment_vector(query_seg).size();
    std::vector<std::size_t> native_dims;
    for (const TokenEncoder& enc : bundle.encoders) native_dims.push_back(enc.config.hidden_dim);
    const Segment& adapter0 = need("ensemble/adapter0");
    if (adapter0.shape.size() != 2)
        throw DataError("checkpoint: segment ensemble/adapter0 is not a matrix");
    std::size_t common_dim = adapter0.shape[1];
    Rng scratch(0);
    bundle.ensemble = EnsembleModel::create(native_dims, common_dim, attn_dim, scratch);
    fill_refs(param_refs(bundle.ensemble, "ensemble/"));
    bundle.ensemble.fusion.temperature = segment_scalar(need("ensemble/fusion/temperature"));
    if (!(bundle.ensemble.fusion.temperature > 0.0))
        throw DataError("checkpoint: segment ensemble/fusion/temperature must be positive");

    bundle.crf.projection = segment_matrix(need("crf/projection"));
    bundle.crf.bias = segment_vector(need("crf/bias"));
    bundle.crf.transitions = segment_matrix(need("crf/transitions"));
    bundle.crf.start = segment_vector(need("crf/start"));
    bundle.crf.end = segment_vector(need("crf/end"));
    if (bundle.crf.num_tags() != bundle.scheme.num_tags())
        throw DataError("checkpoint: segment crf/bias tag count does not match scheme");
    if (bundle.crf.input_dim() != common_dim)
        throw DataError("checkpoint: segment crf/projection does not match ensemble dim");
    if (bundle.crf.transitions.rows() != bundle.crf.num_tags() ||
        bundle.crf.transitions.cols() != bundle.crf.num_tags() ||
        bundle.crf.start.size() != bundle.crf.num_tags() ||
        bundle.crf.end.size() != bundle.crf.num_tags() ||
        bundle.crf.projection.cols() != bundle.crf.num_tags())
        throw DataError("checkpoint: crf segment shapes disagree");
    return bundle;
}

}  // namespace ner
