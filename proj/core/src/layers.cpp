#include "powercast/layers.hpp"

#include "powercast/errors.hpp"

#include <cmath>

namespace powercast::layers {

using namespace autodiff;

void LstmParams::check() const {
    const Shape& wi = W_i.shape();
    if (wi.size() != 2) throw ShapeError("LSTM W_i must be rank 2, got " + shape_to_string(wi));
    const std::size_t in = wi[0], hidden = wi[1];
    auto expect = [](const Tensor& t, const Shape& want, const char* name) {
        if (t.shape() != want) {
            throw ShapeError(std::string("LSTM ") + name + ": expected " +
                             shape_to_string(want) + ", got " + shape_to_string(t.shape()));
        }
    };
    for (const auto* w : {&W_f, &W_o, &W_c}) expect(*w, {in, hidden}, "W");
    for (const auto* u : {&U_i, &U_f, &U_o, &U_c}) expect(*u, {hidden, hidden}, "U");
    for (const auto* b : {&b_i, &b_f, &b_o, &b_c}) expect(*b, {hidden}, "b");
}

std::pair<Tensor, Tensor> lstm_step(const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmParams& params) {
    auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
        return add(add(matmul(x_t, w), matmul(h_prev, u)), b);
    };
    Tensor i = sigmoid(gate(params.W_i, params.U_i, params.b_i));
    Tensor f = sigmoid(gate(params.W_f, params.U_f, params.b_f));
    Tensor o = sigmoid(gate(params.W_o, params.U_o, params.b_o));
    Tensor c_tilde = tanh(gate(params.W_c, params.U_c, params.b_c));
    Tensor c = add(mul(f, c_prev), mul(i, c_tilde));
    Tensor h = mul(o, tanh(c));
    return {h, c};
}

void Time2VecParams::check() const {
    if (k < 1) throw ConfigError("time2vec requires k >= 1, got " + std::to_string(k));
    const auto width = static_cast<std::size_t>(k + 1);
    if (omega.shape() != Shape{1, width}) {
        throw ShapeError("time2vec omega: expected (1," + std::to_string(width) + "), got " +
                         shape_to_string(omega.shape()));
    }
    if (phi.shape() != Shape{width}) {
        throw ShapeError("time2vec phi: expected (" + std::to_string(width) + "), got " +
                         shape_to_string(phi.shape()));
    }
}

Tensor time2vec(const Tensor& tau_column, const Time2VecParams& params) {
    params.check();
    if (tau_column.rank() != 2 || tau_column.shape()[1] != 1) {
        throw ShapeError("time2vec expects a (n,1) column of time indices, got " +
                         shape_to_string(tau_column.shape()));
    }
    const auto width = static_cast<std::size_t>(params.k + 1);
    Tensor lin = affine(tau_column, params.omega, params.phi);  // (n, k+1)
    Tensor linear_part = slice_lastdim(lin, 0, 1);
    Tensor periodic_part = sin(slice_lastdim(lin, 1, width));
    const Tensor parts[] = {linear_part, periodic_part};
    return concat_lastdim(parts);
}

Tensor time2vec_at(double tau, const Time2VecParams& params) {
    return time2vec(Tensor::from({1, 1}, {tau}), params);
}

void AttentionConfig::validate() const {
    if (heads < 1 || model_dim < 1) {
        throw ConfigError("attention heads and model_dim must be positive");
    }
    if (model_dim % heads != 0) {
        throw ConfigError("model_dim " + std::to_string(model_dim) +
                          " not divisible by heads " + std::to_string(heads));
    }
}

AttentionConfig twelve_head_preset() { return AttentionConfig{12, 264}; }

Tensor attention_weights(const Tensor& q, const Tensor& k) {
    const Shape& qs = q.shape();
    const Shape& ks = k.shape();
    if (qs.empty() || ks.empty() || qs.back() != ks.back()) {
        throw ShapeError("attention: query/key inner dims differ, " + shape_to_string(qs) +
                         " vs " + shape_to_string(ks));
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(qs.back()));
    Tensor scores = scale(matmul(q, transpose_last(k)), inv_sqrt_dk);
    return softmax_lastdim(scores);
}

Tensor attention_head(const Tensor& q, const Tensor& k, const Tensor& v) {
    const Shape& ks = k.shape();
    const Shape& vs = v.shape();
    if (ks[ks.size() - 2] != vs[vs.size() - 2]) {
        throw ShapeError("attention: key/value sequence lengths differ, " +
                         shape_to_string(ks) + " vs " + shape_to_string(vs));
    }
    return matmul(attention_weights(q, k), v);
}

Tensor multi_head_attention(const Tensor& x, const AttentionConfig& cfg,
                            const MultiHeadWeights& weights) {
    cfg.validate();
    if (weights.heads.size() != static_cast<std::size_t>(cfg.heads)) {
        throw ConfigError("multi_head_attention: " + std::to_string(weights.heads.size()) +
                          " head weight sets for " + std::to_string(cfg.heads) + " heads");
    }
    if (x.shape().back() != static_cast<std::size_t>(cfg.model_dim)) {
        throw ShapeError("multi_head_attention input " + shape_to_string(x.shape()) +
                         " does not end in model_dim " + std::to_string(cfg.model_dim));
    }
    std::vector<Tensor> outputs;
    outputs.reserve(weights.heads.size());
    for (const AttentionHeadWeights& head : weights.heads) {
        Tensor q = affine(x, head.Wq, head.bq);
        Tensor k = affine(x, head.Wk, head.bk);
        Tensor v = affine(x, head.Wv, head.bv);
        outputs.push_back(attention_head(q, k, v));
    }
    Tensor merged = concat_lastdim(outputs);
    return affine(merged, weights.Wo, weights.bo);
}

Tensor apply_dropout(const Tensor& x, const DropoutSpec& spec) {
    if (!spec.training || spec.rate <= 0.0) return x;
    if (spec.rng == nullptr) {
        throw UsageError("training-mode dropout requires a mask generator");
    }
    const double keep = 1.0 - spec.rate;
    return dropout(x, dropout_mask(x.numel(), keep, *spec.rng), keep);
}

Tensor layer_norm_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    return add(mul(layer_norm(x, kLayerNormEpsilon), gamma), beta);
}

Tensor encoder_block(const Tensor& x, const AttentionConfig& cfg,
                     const EncoderBlockWeights& weights, const DropoutSpec& dropout) {
    Tensor attended = multi_head_attention(x, cfg, weights.attention);
    attended = apply_dropout(attended, dropout);
    Tensor normed = layer_norm_affine(add(x, attended), weights.ln1_gamma, weights.ln1_beta);

    Tensor inner = relu(affine(normed, weights.ff.W1, weights.ff.b1));
    Tensor projected = affine(inner, weights.ff.W2, weights.ff.b2);
    projected = apply_dropout(projected, dropout);
    return layer_norm_affine(add(normed, projected), weights.ln2_gamma, weights.ln2_beta);
}

} // namespace powercast::layers
