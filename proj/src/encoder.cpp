#include "ner/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ner/kernels.hpp"
#include "ner/numerics.hpp"

namespace ner {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kAttentionMask = -1e9;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
           x * std::exp(-0.5 * x * x) * 0.3989422804014326779;  // 1/sqrt(2*pi)
}

// out = gain .* (x - mean) / sqrt(var + eps) + bias, per row.
Matrix layer_norm(const Matrix& x, const std::vector<double>& gain,
                  const std::vector<double>& bias, Matrix& norm, std::vector<double>& inv_std) {
    const std::size_t L = x.rows(), d = x.cols();
    Matrix out(L, d);
    norm = Matrix(L, d);
    inv_std.assign(L, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
        const double* xi = x.row(i);
        double mean = kernels::sum(xi, d) / static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double c = xi[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_std[i] = is;
        double* ni = norm.row(i);
        double* oi = out.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            ni[j] = (xi[j] - mean) * is;
            oi[j] = gain[j] * ni[j] + bias[j];
        }
    }
    return out;
}

Matrix layer_norm_backward(const Matrix& d_out, const Matrix& norm,
                           const std::vector<double>& inv_std, const std::vector<double>& gain,
                           std::vector<double>& d_gain, std::vector<double>& d_bias) {
    const std::size_t L = d_out.rows(), d = d_out.cols();
    Matrix d_x(L, d);
    for (std::size_t i = 0; i < L; ++i) {
        const double* go = d_out.row(i);
        const double* ni = norm.row(i);
        double mean_dn = 0.0, mean_dn_n = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double dn = go[j] * gain[j];
            mean_dn += dn;
            mean_dn_n += dn * ni[j];
            d_gain[j] += go[j] * ni[j];
            d_bias[j] += go[j];
        }
        mean_dn /= static_cast<double>(d);
        mean_dn_n /= static_cast<double>(d);
        double* dx = d_x.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            double dn = go[j] * gain[j];
            dx[j] = inv_std[i] * (dn - mean_dn - ni[j] * mean_dn_n);
        }
    }
    return d_x;
}

Matrix linear(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
    Matrix out = matmul(x, w);
    for (std::size_t i = 0; i < out.rows(); ++i)
        kernels::axpy(1.0, b.data(), out.row(i), out.cols());
    return out;
}

// d_w += x^T d_out, d_b += column sums, returns d_x.
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& d_out, Matrix& d_w,
                       std::vector<double>& d_b) {
    d_w.add_scaled(matmul_ta(x, d_out), 1.0);
    for (std::size_t i = 0; i < d_out.rows(); ++i)
        kernels::axpy(1.0, d_out.row(i), d_b.data(), d_b.size());
    return matmul_tb(d_out, w);
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
    Matrix mask(rows, cols);
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& v : mask.values()) v = rng.uniform() < p ? 0.0 : keep_scale;
    return mask;
}

void apply_mask(Matrix& x, const Matrix& mask) {
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] *= mask.data()[i];
}

}  // namespace

void EncoderConfig::validate() const {
    if (vocab_size < 3) throw std::invalid_argument("EncoderConfig: vocabulary too small");
    if (hidden_dim == 0 || num_heads == 0 || hidden_dim % num_heads != 0)
        throw std::invalid_argument("EncoderConfig: hidden_dim must be a positive multiple of num_heads");
    if (num_layers < 4)
        throw std::invalid_argument("EncoderConfig: need at least 4 layers for layer-range averaging");
    if (ff_dim == 0) throw std::invalid_argument("EncoderConfig: ff_dim must be positive");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("EncoderConfig: dropout must be in [0, 1)");
    if (max_len == 0) throw std::invalid_argument("EncoderConfig: max_len must be positive");
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{kPadToken, kUnkToken, kMaskToken}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 3 || tokens_[0] != kPadToken || tokens_[1] != kUnkToken ||
        tokens_[2] != kMaskToken)
        throw std::invalid_argument("Vocabulary: reserved symbols missing");
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        index_.emplace(tokens_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& corpus) {
    Vocabulary v;
    for (const Sentence& s : corpus) {
        for (const std::string& tok : s.tokens) {
            if (v.index_.emplace(tok, static_cast<int>(v.tokens_.size())).second)
                v.tokens_.push_back(tok);
        }
    }
    return v;
}

int Vocabulary::id(const std::string& surface) const {
    auto it = index_.find(surface);
    return it == index_.end() ? kUnk : it->second;
}

TokenEncoder TokenEncoder::create(const EncoderConfig& config, const Vocabulary& vocab, Rng& rng) {
    EncoderConfig cfg = config;
    cfg.vocab_size = vocab.size();
    cfg.validate();

    const std::size_t d = cfg.hidden_dim, ff = cfg.ff_dim;
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(d));
    const double ff_scale = 1.0 / std::sqrt(static_cast<double>(ff));

    TokenEncoder enc;
    enc.config = cfg;
    enc.vocab = vocab;
    enc.params.token_embedding = Matrix::randn(cfg.vocab_size, d, rng, 0.1);
    enc.params.position_embedding = Matrix::randn(cfg.max_len, d, rng, 0.1);
    enc.params.layers.resize(cfg.num_layers);
    for (auto& layer : enc.params.layers) {
        layer.wq = Matrix::randn(d, d, rng, w_scale);
        layer.wk = Matrix::randn(d, d, rng, w_scale);
        layer.wv = Matrix::randn(d, d, rng, w_scale);
        layer.wo = Matrix::randn(d, d, rng, w_scale);
        layer.bq.assign(d, 0.0);
        layer.bk.assign(d, 0.0);
        layer.bv.assign(d, 0.0);
        layer.bo.assign(d, 0.0);
        layer.w1 = Matrix::randn(d, ff, rng, w_scale);
        layer.b1.assign(ff, 0.0);
        layer.w2 = Matrix::randn(ff, d, rng, ff_scale);
        layer.b2.assign(d, 0.0);
        layer.ln1_gain.assign(d, 1.0);
        layer.ln1_bias.assign(d, 0.0);
        layer.ln2_gain.assign(d, 1.0);
        layer.ln2_bias.assign(d, 0.0);
    }
    return enc;
}

namespace {

Matrix block_forward(const EncoderConfig& cfg, const EncoderLayerParams& p, const Matrix& x,
                     bool train_mode, Rng& rng, LayerCache& cache) {
    const std::size_t L = x.rows(), d = cfg.hidden_dim;
    const std::size_t heads = cfg.num_heads, dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool causal = cfg.variant == EncoderVariant::causal_attention;
    const bool use_dropout = train_mode && cfg.dropout > 0.0;

    cache.block_input = x;
    cache.attn.ln_out = layer_norm(x, p.ln1_gain, p.ln1_bias, cache.attn.ln_norm,
                                   cache.attn.ln_inv_std);

    cache.attn.q = linear(cache.attn.ln_out, p.wq, p.bq);
    cache.attn.k = linear(cache.attn.ln_out, p.wk, p.bk);
    cache.attn.v = linear(cache.attn.ln_out, p.wv, p.bv);

    cache.attn.probs.assign(heads, Matrix());
    cache.attn.concat = Matrix(L, d);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        Matrix scores(L, L);
        for (std::size_t i = 0; i < L; ++i) {
            double* si = scores.row(i);
            const double* qi = cache.attn.q.row(i) + off;
            for (std::size_t j = 0; j < L; ++j)
                si[j] = (causal && j > i)
                            ? kAttentionMask
                            : kernels::dot(qi, cache.attn.k.row(j) + off, dh) * inv_sqrt_dh;
            softmax_inplace(si, L);
        }
        for (std::size_t i = 0; i < L; ++i) {
            double* oi = cache.attn.concat.row(i) + off;
            const double* pi = scores.row(i);
            for (std::size_t j = 0; j < L; ++j)
                kernels::axpy(pi[j], cache.attn.v.row(j) + off, oi, dh);
        }
        cache.attn.probs[h] = std::move(scores);
    }

    Matrix attn_out = linear(cache.attn.concat, p.wo, p.bo);
    if (use_dropout) {
        cache.attn_drop_mask = dropout_mask(L, d, cfg.dropout, rng);
        apply_mask(attn_out, cache.attn_drop_mask);
    }
    cache.after_attn = x;
    cache.after_attn.add_scaled(attn_out, 1.0);

    cache.ln2_out = layer_norm(cache.after_attn, p.ln2_gain, p.ln2_bias, cache.ln2_norm,
                               cache.ln2_inv_std);
    cache.ff_pre = linear(cache.ln2_out, p.w1, p.b1);
    cache.ff_act = cache.ff_pre;
    for (double& v : cache.ff_act.values()) v = gelu(v);
    Matrix ff_out = linear(cache.ff_act, p.w2, p.b2);
    if (use_dropout) {
        cache.ff_drop_mask = dropout_mask(L, d, cfg.dropout, rng);
        apply_mask(ff_out, cache.ff_drop_mask);
    }
    Matrix out = cache.after_attn;
    out.add_scaled(ff_out, 1.0);
    return out;
}

Matrix block_backward(const EncoderConfig& cfg, const EncoderLayerParams& p,
                      EncoderLayerParams& g, const LayerCache& cache, const Matrix& d_out) {
    const std::size_t L = d_out.rows();
    const std::size_t heads = cfg.num_heads, dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    // Residual: out = after_attn + dropout(ff(ln2(after_attn)))
    Matrix d_after_attn = d_out;
    Matrix d_ff_out = d_out;
    if (!cache.ff_drop_mask.empty()) apply_mask(d_ff_out, cache.ff_drop_mask);

    Matrix d_act = linear_backward(cache.ff_act, p.w2, d_ff_out, g.w2, g.b2);
    for (std::size_t i = 0; i < d_act.size(); ++i)
        d_act.data()[i] *= gelu_grad(cache.ff_pre.data()[i]);
    Matrix d_ln2_out = linear_backward(cache.ln2_out, p.w1, d_act, g.w1, g.b1);
    d_after_attn.add_scaled(layer_norm_backward(d_ln2_out, cache.ln2_norm, cache.ln2_inv_std,
                                                p.ln2_gain, g.ln2_gain, g.ln2_bias),
                            1.0);

    // Residual: after_attn = block_input + dropout(attn(ln1(block_input)))
    Matrix d_x = d_after_attn;
    Matrix d_attn_out = d_after_attn;
    if (!cache.attn_drop_mask.empty()) apply_mask(d_attn_out, cache.attn_drop_mask);

    Matrix d_concat = linear_backward(cache.attn.concat, p.wo, d_attn_out, g.wo, g.bo);

    Matrix d_q(L, cfg.hidden_dim), d_k(L, cfg.hidden_dim), d_v(L, cfg.hidden_dim);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        const Matrix& probs = cache.attn.probs[h];
        Matrix d_probs(L, L);
        for (std::size_t i = 0; i < L; ++i) {
            const double* doi = d_concat.row(i) + off;
            double* dpi = d_probs.row(i);
            for (std::size_t j = 0; j < L; ++j)
                dpi[j] = kernels::dot(doi, cache.attn.v.row(j) + off, dh);
        }
        for (std::size_t j = 0; j < L; ++j) {
            double* dvj = d_v.row(j) + off;
            for (std::size_t i = 0; i < L; ++i)
                kernels::axpy(probs(i, j), d_concat.row(i) + off, dvj, dh);
        }
        // softmax rows: ds = p .* (dp - <dp, p>)
        for (std::size_t i = 0; i < L; ++i) {
            const double* pi = probs.row(i);
            double* dpi = d_probs.row(i);
            double inner = kernels::dot(dpi, pi, L);
            for (std::size_t j = 0; j < L; ++j) dpi[j] = pi[j] * (dpi[j] - inner);
        }
        for (std::size_t i = 0; i < L; ++i) {
            const double* dsi = d_probs.row(i);
            double* dqi = d_q.row(i) + off;
            for (std::size_t j = 0; j < L; ++j) {
                double w = dsi[j] * inv_sqrt_dh;
                kernels::axpy(w, cache.attn.k.row(j) + off, dqi, dh);
                kernels::axpy(w, cache.attn.q.row(i) + off, d_k.row(j) + off, dh);
            }
        }
    }

    Matrix d_ln1_out = linear_backward(cache.attn.ln_out, p.wq, d_q, g.wq, g.bq);
    d_ln1_out.add_scaled(linear_backward(cache.attn.ln_out, p.wk, d_k, g.wk, g.bk), 1.0);
    d_ln1_out.add_scaled(linear_backward(cache.attn.ln_out, p.wv, d_v, g.wv, g.bv), 1.0);
    d_x.add_scaled(layer_norm_backward(d_ln1_out, cache.attn.ln_norm, cache.attn.ln_inv_std,
                                       p.ln1_gain, g.ln1_gain, g.ln1_bias),
                   1.0);
    return d_x;
}

}  // namespace

LayerStack encode(const TokenEncoder& enc, const std::vector<std::string>& tokens,
                  bool train_mode, Rng& rng, EncoderCache* cache) {
    const EncoderConfig& cfg = enc.config;
    if (tokens.empty()) throw std::invalid_argument("encode: empty token list");
    if (tokens.size() > cfg.max_len)
        throw std::invalid_argument("encode: sentence length " + std::to_string(tokens.size()) +
                                    " exceeds max length " + std::to_string(cfg.max_len));

    const std::size_t L = tokens.size(), d = cfg.hidden_dim;
    std::vector<int> ids(L);
    for (std::size_t i = 0; i < L; ++i) ids[i] = enc.vocab.id(tokens[i]);

    Matrix x(L, d);
    for (std::size_t i = 0; i < L; ++i) {
        const double* te = enc.params.token_embedding.row(static_cast<std::size_t>(ids[i]));
        const double* pe = enc.params.position_embedding.row(i);
        double* xi = x.row(i);
        for (std::size_t j = 0; j < d; ++j) xi[j] = te[j] + pe[j];
    }

    Matrix embed_mask;
    if (train_mode && cfg.dropout > 0.0) {
        embed_mask = dropout_mask(L, d, cfg.dropout, rng);
        apply_mask(x, embed_mask);
    }

    if (cache) {
        cache->token_ids = ids;
        cache->embed_drop_mask = embed_mask;
        cache->embedded = x;
        cache->layers.assign(cfg.num_layers, LayerCache{});
        cache->train_mode = train_mode;
    }

    LayerStack stack;
    stack.outputs.reserve(cfg.num_layers);
    LayerCache scratch;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        LayerCache& lc = cache ? cache->layers[l] : scratch;
        x = block_forward(cfg, enc.params.layers[l], x, train_mode, rng, lc);
        stack.outputs.push_back(x);
    }
    return stack;
}

Matrix layer_average(const LayerStack& stack) {
    const std::size_t n = stack.outputs.size();
    if (n < 4)
        throw std::invalid_argument("layer_average: need at least 4 layers, got " +
                                    std::to_string(n));
    Matrix avg = stack.outputs[n - 4];
    avg.add_scaled(stack.outputs[n - 3], 1.0);
    avg.add_scaled(stack.outputs[n - 2], 1.0);
    avg.scale_inplace(1.0 / 3.0);
    return avg;
}

EncoderParams zero_params_like(const TokenEncoder& enc) {
    const EncoderConfig& cfg = enc.config;
    EncoderParams g;
    g.token_embedding = Matrix(cfg.vocab_size, cfg.hidden_dim);
    g.position_embedding = Matrix(cfg.max_len, cfg.hidden_dim);
    g.layers.resize(cfg.num_layers);
    const std::size_t d = cfg.hidden_dim, ff = cfg.ff_dim;
    for (auto& layer : g.layers) {
        layer.wq = Matrix(d, d);
        layer.wk = Matrix(d, d);
        layer.wv = Matrix(d, d);
        layer.wo = Matrix(d, d);
        layer.bq.assign(d, 0.0);
        layer.bk.assign(d, 0.0);
        layer.bv.assign(d, 0.0);
        layer.bo.assign(d, 0.0);
        layer.w1 = Matrix(d, ff);
        layer.b1.assign(ff, 0.0);
        layer.w2 = Matrix(ff, d);
        layer.b2.assign(d, 0.0);
        layer.ln1_gain.assign(d, 0.0);
        layer.ln1_bias.assign(d, 0.0);
        layer.ln2_gain.assign(d, 0.0);
        layer.ln2_bias.assign(d, 0.0);
    }
    return g;
}

EncoderParams encoder_backward(const TokenEncoder& enc, const Matrix& upstream,
                               const EncoderCache& cache) {
    const EncoderConfig& cfg = enc.config;
    const std::size_t n = cfg.num_layers;
    if (cache.layers.size() != n || cache.token_ids.empty())
        throw std::invalid_argument("encoder_backward: cache does not match encoder");
    if (upstream.rows() != cache.token_ids.size() || upstream.cols() != cfg.hidden_dim)
        throw std::invalid_argument("encoder_backward: upstream gradient shape mismatch");

    EncoderParams grads = zero_params_like(enc);
    Matrix g(upstream.rows(), upstream.cols());

    // The final layer's output is excluded from the average, so no gradient
    // flows through it; layers N-4..N-2 (0-indexed) each receive a third.
    for (std::size_t idx = n - 1; idx > 0; --idx) {
        std::size_t l = idx - 1;  // walks n-2 down to 0, never touching layer n-1
        if (l + 4 >= n) g.add_scaled(upstream, 1.0 / 3.0);
        g = block_backward(cfg, enc.params.layers[l], grads.layers[l], cache.layers[l], g);
    }

    if (!cache.embed_drop_mask.empty()) apply_mask(g, cache.embed_drop_mask);
    for (std::size_t i = 0; i < g.rows(); ++i) {
        kernels::axpy(1.0, g.row(i),
                      grads.token_embedding.row(static_cast<std::size_t>(cache.token_ids[i])),
                      cfg.hidden_dim);
        kernels::axpy(1.0, g.row(i), grads.position_embedding.row(i), cfg.hidden_dim);
    }
    return grads;
}

std::vector<ParamRef> param_refs(EncoderParams& p, const std::string& prefix) {
    std::vector<ParamRef> refs;
    refs.push_back(ref(prefix + "tok_emb", p.token_embedding));
    refs.push_back(ref(prefix + "pos_emb", p.position_embedding));
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        std::string lp = prefix + "layer" + std::to_string(l) + "/";
        refs.push_back(ref(lp + "wq", layer.wq));
        refs.push_back(ref(lp + "bq", layer.bq));
        refs.push_back(ref(lp + "wk", layer.wk));
        refs.push_back(ref(lp + "bk", layer.bk));
        refs.push_back(ref(lp + "wv", layer.wv));
        refs.push_back(ref(lp + "bv", layer.bv));
        refs.push_back(ref(lp + "wo", layer.wo));
        refs.push_back(ref(lp + "bo", layer.bo));
        refs.push_back(ref(lp + "w1", layer.w1));
        refs.push_back(ref(lp + "b1", layer.b1));
        refs.push_back(ref(lp + "w2", layer.w2));
        refs.push_back(ref(lp + "b2", layer.b2));
        refs.push_back(ref(lp + "ln1_gain", layer.ln1_gain));
        refs.push_back(ref(lp + "ln1_bias", layer.ln1_bias));
        refs.push_back(ref(lp + "ln2_gain", layer.ln2_gain));
        refs.push_back(ref(lp + "ln2_bias", layer.ln2_bias));
    }
    return refs;
}

}  // namespace ner
