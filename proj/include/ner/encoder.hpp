#pragma once

#include <map>
#include <string>
#include <vector>

#include "ner/corpus.hpp"
#include "ner/matrix.hpp"
#include "ner/params.hpp"
#include "ner/rng.hpp"

namespace ner {

// Reserved vocabulary symbols.
inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kMaskToken = "[MASK]";

// Word-level vocabulary built from the training corpus (min frequency 1),
// with padding/unknown/entity-mask ids reserved up front.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kMask = 2;

    Vocabulary();
    explicit Vocabulary(std::vector<std::string> tokens);  // must start with the reserved three
    static Vocabulary build(const std::vector<Sentence>& corpus);

    int id(const std::string& surface) const;  // kUnk when absent
    const std::string& surface(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

enum class EncoderVariant { bidirectional_attention, causal_attention };

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t hidden_dim = 32;   // d
    std::size_t num_layers = 4;    // N >= 4; layer-range averaging needs N-3..N-1
    std::size_t num_heads = 4;
    std::size_t ff_dim = 64;
    double dropout = 0.5;
    std::size_t max_len = 128;
    EncoderVariant variant = EncoderVariant::bidirectional_attention;

    std::size_t head_dim() const { return hidden_dim / num_heads; }
    void validate() const;
};

struct EncoderLayerParams {
    Matrix wq, wk, wv, wo;                       // d x d
    std::vector<double> bq, bk, bv, bo;          // d
    Matrix w1;                                   // d x ff
    std::vector<double> b1;                      // ff
    Matrix w2;                                   // ff x d
    std::vector<double> b2;                      // d
    std::vector<double> ln1_gain, ln1_bias;      // d
    std::vector<double> ln2_gain, ln2_bias;      // d
};

struct EncoderParams {
    Matrix token_embedding;     // vocab x d
    Matrix position_embedding;  // max_len x d
    std::vector<EncoderLayerParams> layers;
};

// One trainable token encoder (a stand-in for one fine-tuned pre-trained
// model): embeddings plus a pre-norm transformer stack.
struct TokenEncoder {
    EncoderConfig config;
    Vocabulary vocab;
    EncoderParams params;

    static TokenEncoder create(const EncoderConfig& config, const Vocabulary& vocab, Rng& rng);
};

// Per-layer outputs of one forward pass; exactly N entries of shape L x d.
struct LayerStack {
    std::vector<Matrix> outputs;
};

struct AttentionCache {
    Matrix ln_norm;             // x-hat of the pre-attention norm
    std::vector<double> ln_inv_std;
    Matrix ln_out;              // input to the q/k/v projections
    Matrix q, k, v;             // L x d, heads concatenated
    std::vector<Matrix> probs;  // per head, L x L
    Matrix concat;              // L x d, pre-output-projection
};

struct LayerCache {
    Matrix block_input;
    AttentionCache attn;
    Matrix attn_drop_mask;      // empty = identity
    Matrix after_attn;          // residual stream after the attention sublayer
    Matrix ln2_norm;
    std::vector<double> ln2_inv_std;
    Matrix ln2_out;
    Matrix ff_pre;              // L x ff, pre-activation
    Matrix ff_act;
    Matrix ff_drop_mask;
};

struct EncoderCache {
    std::vector<int> token_ids;
    Matrix embed_drop_mask;
    Matrix embedded;            // input to the first layer
    std::vector<LayerCache> layers;
    bool train_mode = false;
};

// Forward pass over surface tokens (unknowns map to the unknown id).
// Dropout is applied only in train mode, drawing from rng. Pass a cache to
// enable encoder_backward.
LayerStack encode(const TokenEncoder& enc, const std::vector<std::string>& tokens,
                  bool train_mode, Rng& rng, EncoderCache* cache = nullptr);

// Elementwise mean of layer outputs N-3, N-2 and N-1 (1-indexed); the final
// layer is excluded. Requires N >= 4.
Matrix layer_average(const LayerStack& stack);

// Gradient of a scalar loss w.r.t. every encoder parameter, where upstream
// is the loss gradient at the layer_average output. Token inputs are
// discrete, so nothing flows past the embedding lookup.
EncoderParams encoder_backward(const TokenEncoder& enc, const Matrix& upstream,
                               const EncoderCache& cache);

EncoderParams zero_params_like(const TokenEncoder& enc);
std::vector<ParamRef> param_refs(EncoderParams& p, const std::string& prefix);

}  // namespace ner
