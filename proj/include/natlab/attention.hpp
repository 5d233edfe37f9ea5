#ifndef NATLAB_ATTENTION_HPP
#define NATLAB_ATTENTION_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "natlab/tensor.hpp"

namespace natlab {

// ---------------------------------------------------------------------------
// Cross-attention and the nested attention mechanism.
//
// Nested attention replaces the value of one designated prompt token with a
// query-dependent value: each spatial query attends over encoder-produced
// tokens through its own small attention layer, and the result is substituted
// for that token's value in the host cross-attention. Keys and queries of the
// host layer are never modified.
// ---------------------------------------------------------------------------

struct CrossAttentionLayer {
    int layer_id = 0;
    Tensor w_q;  // feature channels -> d
    Tensor w_k;  // text channels -> d
    Tensor w_v;  // text channels -> d
    int d = 0;
};

struct NestedAttentionLayer {
    int layer_id = 0;    // must match the host CrossAttentionLayer
    Tensor w_k_nested;   // encoder token channels -> d
    Tensor w_v_nested;   // encoder token channels -> d
    int d = 0;
};

// One personalized word: the prompt position it owns, the encoder tokens
// carrying the subject, the inference-time attention factor lambda (>= 1)
// and the value-norm constant alpha (0 disables the norm regularization).
struct SubjectBinding {
    int subject_token_index = 0;
    Tensor encoder_tokens;  // M x d_enc
    double lambda = 1.0;
    double alpha  = 2.0;
};

// One value vector per spatial query, all destined for the same token slot.
struct PerQueryValues {
    Tensor values;  // num_queries x d
};

// --------------------------- capture interface -----------------------------

struct NestedCaptureRecord {
    int subject_index = 0;
    Tensor weights;  // n x M, post-softmax nested attention
    Tensor values;   // n x d, the regularized per-query values
};

struct AttentionCapture {
    int layer_id = 0;
    int step     = 0;
    Tensor external_weights;  // n x T, post-softmax
    std::vector<NestedCaptureRecord> nested;
};

using CaptureSink = std::function<void(const AttentionCapture&)>;

struct CaptureContext {
    CaptureSink sink;
    int step = 0;
};

// ------------------------------ operations ---------------------------------

// Pre-softmax boost of the subject column: x -> max(x, lambda * x).
// Negative logits are left untouched so the subject's attention is never
// reduced. Applied to already 1/sqrt(d)-scaled logits.
inline Tensor apply_attention_factor(const Tensor& logits, int subject_index, double lambda) {
    detail::require_rank2(logits, "apply_attention_factor");
    if (lambda < 1.0) throw std::invalid_argument("apply_attention_factor: lambda must be >= 1");
    int T = logits.dim(1);
    if (subject_index < 0 || subject_index >= T)
        throw std::invalid_argument("apply_attention_factor: subject index " + std::to_string(subject_index) +
                                    " out of range for " + std::to_string(T) + " tokens");
    int m = logits.dim(0);
    std::vector<double> out(logits.data());
    for (int i = 0; i < m; ++i) {
        double& x = out[size_t(i) * size_t(T) + size_t(subject_index)];
        x         = std::max(x, lambda * x);
    }
    return detail::make_op(logits.shape(), std::move(out), "attention_factor", {logits},
                           [m, T, subject_index, lambda](TensorNode& self) {
                               auto& p = self.parents[0];
                               p->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
                               // correct the subject column: d/dx max(x, lx) = l for x >= 0, 1 otherwise
                               for (int i = 0; i < m; ++i) {
                                   size_t idx = size_t(i) * size_t(T) + size_t(subject_index);
                                   double x   = p->data[idx];
                                   double d   = x >= 0.0 ? lambda : 1.0;
                                   p->grad[idx] += self.grad[idx] * (d - 1.0);
                               }
                           });
}

namespace detail {

struct ProjectedAttention {
    Tensor q, k, v;  // n x d, T x d, T x d
    Tensor logits;   // n x T, already scaled by 1/sqrt(d)
};

inline ProjectedAttention project_and_score(const Tensor& features, const Tensor& text_emb,
                                            const CrossAttentionLayer& layer) {
    if (features.dim(1) != layer.w_q.dim(0))
        throw std::invalid_argument("cross_attention: feature channels " + std::to_string(features.dim(1)) +
                                    " do not match W_Q rows " + std::to_string(layer.w_q.dim(0)));
    if (text_emb.dim(1) != layer.w_k.dim(0))
        throw std::invalid_argument("cross_attention: text channels " + std::to_string(text_emb.dim(1)) +
                                    " do not match W_K rows " + std::to_string(layer.w_k.dim(0)));
    ProjectedAttention pa;
    pa.q      = matmul(features, layer.w_q);
    pa.k      = matmul(text_emb, layer.w_k);
    pa.v      = matmul(text_emb, layer.w_v);
    pa.logits = scale(matmul(pa.q, transpose(pa.k)), 1.0 / std::sqrt(double(layer.d)));
    return pa;
}

}  // namespace detail

// Standard text-conditioned cross-attention: softmax(QK^T / sqrt(d)) V.
inline Tensor cross_attention_forward(const Tensor& features, const Tensor& text_emb, const CrossAttentionLayer& layer) {
    auto pa  = detail::project_and_score(features, text_emb, layer);
    Tensor a = softmax_rows(pa.logits, 1.0);
    return matmul(a, pa.v);
}

// The inner attention: each external query selects its own value from the
// encoder tokens. Output is NOT yet norm-regularized.
inline PerQueryValues nested_values(const Tensor& queries, const SubjectBinding& binding,
                                    const NestedAttentionLayer& nested) {
    if (binding.encoder_tokens.dim(1) != nested.w_k_nested.dim(0))
        throw std::invalid_argument("nested_values: encoder token dim " + std::to_string(binding.encoder_tokens.dim(1)) +
                                    " does not match nested projection rows " + std::to_string(nested.w_k_nested.dim(0)));
    Tensor k_n     = matmul(binding.encoder_tokens, nested.w_k_nested);  // M x d
    Tensor v_n     = matmul(binding.encoder_tokens, nested.w_v_nested);  // M x d
    Tensor logits  = scale(matmul(queries, transpose(k_n)), 1.0 / std::sqrt(double(nested.d)));
    Tensor weights = softmax_rows(logits, 1.0);
    return PerQueryValues{matmul(weights, v_n)};
}

// Hard rescale of every per-query value to norm alpha * |V[s*]|, direction
// preserved. Differentiable through the row values.
inline PerQueryValues regularize_values(const PerQueryValues& raw, double v_star_norm, double alpha, int layer_id = -1) {
    int n = raw.values.dim(0);
    for (int i = 0; i < n; ++i) {
        double norm = 0.0;
        for (int j = 0; j < raw.values.dim(1); ++j) norm += raw.values.at(i, j) * raw.values.at(i, j);
        if (norm <= 0.0)
            throw std::runtime_error("regularize_values: zero-norm value row " + std::to_string(i) + " (layer " +
                                     std::to_string(layer_id) + ")");
    }
    Tensor norms = row_l2_norms(raw.values);
    return PerQueryValues{scale(mul_colvec(raw.values, recip(norms)), alpha * v_star_norm)};
}

namespace detail {

// As regularize_values, but the target norm is a graph scalar so gradients
// also flow into the un-personalized value it is derived from.
inline PerQueryValues regularize_values_t(const PerQueryValues& raw, const Tensor& v_star_norm, double alpha,
                                          int layer_id) {
    int n = raw.values.dim(0);
    for (int i = 0; i < n; ++i) {
        double norm = 0.0;
        for (int j = 0; j < raw.values.dim(1); ++j) norm += raw.values.at(i, j) * raw.values.at(i, j);
        if (norm <= 0.0)
            throw std::runtime_error("regularize_values: zero-norm value row " + std::to_string(i) + " (layer " +
                                     std::to_string(layer_id) + ")");
    }
    Tensor norms = row_l2_norms(raw.values);
    Tensor unit  = mul_colvec(raw.values, recip(norms));
    return PerQueryValues{mul_scalar_t(unit, scale(v_star_norm, alpha))};
}

}  // namespace detail

// Materialized per-query value bank: bank[i][s] = vq_b[i] when s is a bound
// subject index, base_V[s] otherwise. Plain data, used for inspection.
inline Tensor assemble_per_query_values(const Tensor& base_v, const std::vector<std::pair<int, PerQueryValues>>& bound) {
    detail::require_rank2(base_v, "assemble_per_query_values");
    int T = base_v.dim(0), d = base_v.dim(1);
    if (bound.empty()) throw std::invalid_argument("assemble_per_query_values: no bindings");
    int n = bound.front().second.values.dim(0);
    for (const auto& [idx, vq] : bound) {
        if (idx < 0 || idx >= T)
            throw std::invalid_argument("assemble_per_query_values: index " + std::to_string(idx) + " out of range");
        if (vq.values.dim(0) != n || vq.values.dim(1) != d)
            throw std::invalid_argument("assemble_per_query_values: per-query value shape mismatch");
    }
    Tensor bank = Tensor::zeros({n, T, d});
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < T; ++s) {
            const double* src = nullptr;
            for (const auto& [idx, vq] : bound)
                if (idx == s) src = vq.values.data().data() + size_t(i) * size_t(d);
            if (!src) src = base_v.data().data() + size_t(s) * size_t(d);
            std::copy(src, src + d, bank.data().data() + (size_t(i) * size_t(T) + size_t(s)) * size_t(d));
        }
    return bank;
}

inline Tensor assemble_per_query_values(const Tensor& base_v, int subject_index, const PerQueryValues& vq) {
    return assemble_per_query_values(base_v, {{subject_index, vq}});
}

// Full mechanism: host attention with per-binding attention factors, nested
// per-query values, norm regularization and value substitution. With no
// bindings this reduces bit-exactly to cross_attention_forward.
inline Tensor nested_cross_attention_forward(const Tensor& features, const Tensor& text_emb,
                                             const std::vector<SubjectBinding>& bindings,
                                             const CrossAttentionLayer& ca,
                                             const std::vector<const NestedAttentionLayer*>& nested_by_binding,
                                             CaptureContext* capture = nullptr) {
    if (bindings.size() != nested_by_binding.size())
        throw std::invalid_argument("nested_cross_attention: bindings and nested layers must pair up");
    int T = text_emb.dim(0);
    for (size_t a = 0; a < bindings.size(); ++a) {
        if (bindings[a].subject_token_index < 0 || bindings[a].subject_token_index >= T)
            throw std::invalid_argument("nested_cross_attention: subject index out of range");
        if (bindings[a].lambda < 1.0) throw std::invalid_argument("nested_cross_attention: lambda must be >= 1");
        if (bindings[a].alpha < 0.0) throw std::invalid_argument("nested_cross_attention: alpha must be >= 0");
        if (nested_by_binding[a]->layer_id != ca.layer_id)
            throw std::invalid_argument("nested_cross_attention: nested layer id " +
                                        std::to_string(nested_by_binding[a]->layer_id) + " does not match host layer " +
                                        std::to_string(ca.layer_id));
        for (size_t b = a + 1; b < bindings.size(); ++b)
            if (bindings[a].subject_token_index == bindings[b].subject_token_index)
                throw std::invalid_argument("nested_cross_attention: duplicate subject token index " +
                                            std::to_string(bindings[a].subject_token_index));
    }

    auto pa       = detail::project_and_score(features, text_emb, ca);
    Tensor logits = pa.logits;
    for (const SubjectBinding& b : bindings)
        logits = apply_attention_factor(logits, b.subject_token_index, b.lambda);
    Tensor a   = softmax_rows(logits, 1.0);
    Tensor out = matmul(a, pa.v);

    AttentionCapture cap;
    int n = features.dim(0);
    for (size_t bi = 0; bi < bindings.size(); ++bi) {
        const SubjectBinding& b = bindings[bi];
        const NestedAttentionLayer& nl = *nested_by_binding[bi];
        Tensor k_n     = matmul(b.encoder_tokens, nl.w_k_nested);
        Tensor v_n     = matmul(b.encoder_tokens, nl.w_v_nested);
        Tensor nlogits = scale(matmul(pa.q, transpose(k_n)), 1.0 / std::sqrt(double(nl.d)));
        Tensor nw      = softmax_rows(nlogits, 1.0);
        PerQueryValues vq{matmul(nw, v_n)};
        if (b.alpha > 0.0) {
            Tensor v_star = select_row(pa.v, b.subject_token_index);
            vq            = detail::regularize_values_t(vq, l2_norm_t(v_star), b.alpha, ca.layer_id);
        }
        Tensor delta = sub(vq.values, row_broadcast(select_row(pa.v, b.subject_token_index), n));
        out          = add(out, mul_colvec(delta, select_col(a, b.subject_token_index)));
        if (capture && capture->sink)
            cap.nested.push_back({b.subject_token_index, nw.clone(), vq.values.clone()});
    }

    if (capture && capture->sink) {
        cap.layer_id         = ca.layer_id;
        cap.step             = capture->step;
        cap.external_weights = a.clone();
        capture->sink(cap);
    }
    return out;
}

}  // namespace natlab

#endif  // NATLAB_ATTENTION_HPP
