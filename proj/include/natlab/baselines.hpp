#ifndef NATLAB_BASELINES_HPP
#define NATLAB_BASELINES_HPP

#include <string>

#include "natlab/attention.hpp"

namespace natlab {

// ---------------------------------------------------------------------------
// The four competing subject-injection mechanisms, implemented against the
// same host cross-attention so all comparisons share one substrate.
// ---------------------------------------------------------------------------

enum class MechanismKind { NestedAttention, DecoupledCA, SimpleAdapter, GlobalV, MultipleTokens };

inline const char* mechanism_name(MechanismKind k) {
    switch (k) {
        case MechanismKind::NestedAttention: return "nested";
        case MechanismKind::DecoupledCA: return "decoupled_ca";
        case MechanismKind::SimpleAdapter: return "simple_adapter";
        case MechanismKind::GlobalV: return "global_v";
        case MechanismKind::MultipleTokens: return "multiple_tokens";
    }
    return "?";
}

inline MechanismKind mechanism_from_name(const std::string& name) {
    for (MechanismKind k : {MechanismKind::NestedAttention, MechanismKind::DecoupledCA, MechanismKind::SimpleAdapter,
                            MechanismKind::GlobalV, MechanismKind::MultipleTokens})
        if (name == mechanism_name(k)) return k;
    throw std::invalid_argument("unknown mechanism '" + name + "'");
}

// Image-side branch of one decoupled cross-attention layer. Shares the host
// layer's queries; outputs sum with the text branch, weighted by scale.
struct DecoupledCAParams {
    Tensor w_k_img;  // d_enc -> d
    Tensor w_v_img;  // d_enc -> d
    double scale = 1.0;  // lambda in [0, 1]
};

// text attention + scale * image attention, same Q for both branches
inline Tensor decoupled_ca_forward(const Tensor& features, const Tensor& text_emb, const Tensor& enc_tokens,
                                   const CrossAttentionLayer& layer, const DecoupledCAParams& params) {
    if (params.scale < 0.0 || params.scale > 1.0)
        throw std::invalid_argument("decoupled_ca: scale must be in [0, 1]");
    auto pa        = detail::project_and_score(features, text_emb, layer);
    Tensor a_text  = softmax_rows(pa.logits, 1.0);
    Tensor out     = matmul(a_text, pa.v);
    Tensor k_img   = matmul(enc_tokens, params.w_k_img);
    Tensor v_img   = matmul(enc_tokens, params.w_v_img);
    Tensor logits  = scale(matmul(pa.q, transpose(k_img)), 1.0 / std::sqrt(double(layer.d)));
    Tensor a_img   = softmax_rows(logits, 1.0);
    return add(out, scale(matmul(a_img, v_img), params.scale));
}

// Image tokens, already projected to the text embedding width, are appended
// to the prompt and attended like ordinary tokens. No new attention params.
inline Tensor simple_adapter_forward(const Tensor& features, const Tensor& text_emb,
                                     const Tensor& enc_tokens_projected, const CrossAttentionLayer& layer) {
    if (enc_tokens_projected.dim(1) != text_emb.dim(1))
        throw std::invalid_argument("simple_adapter: projected tokens must match text embedding width");
    Tensor extended = concat_rows({text_emb, enc_tokens_projected});
    return cross_attention_forward(features, extended, layer);
}

// The subject value becomes projection(mean of encoder tokens): one shared
// value for every query. Keys stay untouched; lambda boosts the subject
// column like the nested mechanism does.
inline Tensor global_v_forward(const Tensor& features, const Tensor& text_emb, const Tensor& enc_tokens,
                               const CrossAttentionLayer& layer, const Tensor& w_proj, int subject_index,
                               double lambda = 1.0) {
    auto pa = detail::project_and_score(features, text_emb, layer);
    int T = text_emb.dim(0);
    if (subject_index < 0 || subject_index >= T) throw std::invalid_argument("global_v: subject index out of range");
    Tensor logits = apply_attention_factor(pa.logits, subject_index, lambda);
    Tensor a      = softmax_rows(logits, 1.0);
    Tensor out    = matmul(a, pa.v);
    int M         = enc_tokens.dim(0);
    Tensor ones   = Tensor::filled({1, M}, 1.0 / double(M));
    Tensor v_new  = matmul(matmul(ones, enc_tokens), w_proj);  // 1 x d
    int n         = features.dim(0);
    Tensor delta  = sub(row_broadcast(v_new, n), row_broadcast(select_row(pa.v, subject_index), n));
    return add(out, mul_colvec(delta, select_col(a, subject_index)));
}

// The subject slot is replaced by M tokens that all share the subject's key
// (so attention cannot be drawn away from the prompt) but carry one
// encoder-produced value each. Softmax runs over T-1+M logits; the attention
// factor applies per copy.
inline Tensor multiple_tokens_forward(const Tensor& features, const Tensor& text_emb, const Tensor& enc_values,
                                      const CrossAttentionLayer& layer, int subject_index, double lambda = 1.0) {
    auto pa = detail::project_and_score(features, text_emb, layer);
    int T = text_emb.dim(0), M = enc_values.dim(0);
    if (subject_index < 0 || subject_index >= T)
        throw std::invalid_argument("multiple_tokens: subject index out of range");
    if (enc_values.dim(1) != layer.d) throw std::invalid_argument("multiple_tokens: values must have width d");

    std::vector<Tensor> k_rows, v_rows;
    for (int s = 0; s < T; ++s) {
        if (s == subject_index) {
            k_rows.push_back(row_broadcast(select_row(pa.k, s), M));  // tied keys
            v_rows.push_back(enc_values);
        } else {
            k_rows.push_back(select_row(pa.k, s));
            v_rows.push_back(select_row(pa.v, s));
        }
    }
    Tensor k_ext   = concat_rows(k_rows);
    Tensor v_ext   = concat_rows(v_rows);
    Tensor logits  = scale(matmul(pa.q, transpose(k_ext)), 1.0 / std::sqrt(double(layer.d)));
    for (int copy = 0; copy < M; ++copy)
        logits = apply_attention_factor(logits, subject_index + copy, lambda);
    Tensor a = softmax_rows(logits, 1.0);
    return matmul(a, v_ext);
}

}  // namespace natlab

#endif  // NATLAB_BASELINES_HPP
