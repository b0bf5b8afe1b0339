#pragma once

#include <utility>
#include <vector>

#include "ner/corpus.hpp"
#include "ner/matrix.hpp"
#include "ner/params.hpp"
#include "ner/rng.hpp"

namespace ner {

// Linear-chain CRF head: emission projection of the fused representation
// plus tag-transition, start and end scores. score(y) =
//   start[y_0] + sum_i e[i, y_i] + sum_i transitions[y_i, y_{i+1}] + end[y_{L-1}]
struct CrfModel {
    Matrix projection;               // d x T
    std::vector<double> bias;        // T
    Matrix transitions;              // T x T, (u, v) = score of u followed by v
    std::vector<double> start;       // T
    std::vector<double> end;         // T

    std::size_t num_tags() const { return bias.size(); }
    std::size_t input_dim() const { return projection.rows(); }

    static CrfModel create(std::size_t input_dim, std::size_t num_tags, Rng& rng,
                           double init_scale = 0.1);
};

// L x T per-position per-tag scores.
using EmissionTable = Matrix;

EmissionTable emissions(const CrfModel& model, const Matrix& fused);

// Gradients of a scalar loss through the emission projection:
// given dL/d(emissions), accumulates dL/d(projection), dL/d(bias) and
// returns dL/d(fused).
Matrix emissions_backward(const CrfModel& model, const Matrix& fused, const Matrix& d_emissions,
                          Matrix& d_projection, std::vector<double>& d_bias);

double score_sequence(const EmissionTable& e, const CrfModel& model, const std::vector<int>& tags);

// log sum over all T^L tag sequences of exp(score), forward algorithm.
double log_partition(const EmissionTable& e, const CrfModel& model);

// log_partition - score(gold); always >= 0.
double nll_loss(const EmissionTable& e, const CrfModel& model, const std::vector<int>& gold);

struct CrfGradients {
    Matrix emissions;                // L x T
    Matrix transitions;              // T x T
    std::vector<double> start;       // T
    std::vector<double> end;         // T
};

// Exact nll gradients from forward-backward marginals:
// d/de[i,t] = P(y_i = t) - 1[gold_i = t], with the pair-marginal analogue
// for transitions.
CrfGradients crf_backward(const EmissionTable& e, const CrfModel& model,
                          const std::vector<int>& gold);

struct ViterbiResult {
    std::vector<int> tags;
    double score = 0.0;
};

// Argmax tag sequence; ties broken by the lowest tag index at each
// backtrack step.
ViterbiResult viterbi(const EmissionTable& e, const CrfModel& model);

// Copy with transitions into I-t from anything but B-t/I-t, and starts of
// I-t, pushed down to -1e9 so decoded sequences are BIO-valid while all
// arithmetic stays finite.
CrfModel constrain_bio(const CrfModel& model, const LabelScheme& scheme);

inline constexpr double kBioMaskScore = -1e9;

// Stable enumeration of the trainable arrays, used by the optimizer and the
// checkpoint writer. A zero-filled CrfModel of matching shape doubles as the
// gradient container.
std::vector<ParamRef> param_refs(CrfModel& m, const std::string& prefix);
CrfModel zero_crf_like(const CrfModel& m);

}  // namespace ner
