#ifndef NATLAB_ENCODER_HPP
#define NATLAB_ENCODER_HPP

#include <utility>
#include <vector>

#include "natlab/attention.hpp"
#include "natlab/image_io.hpp"
#include "natlab/tensor.hpp"

namespace natlab {

// ---------------------------------------------------------------------------
// Subject encoder: a frozen patch-feature backbone feeding a Q-Former whose
// learned queries produce a fixed-size token set. The token count M is what
// later becomes the number of nested keys/values.
// ---------------------------------------------------------------------------

// Frozen feature backbone: seeded linear patch embedding plus positional
// table. Its parameters never enter any trainable set.
struct PatchFeatureExtractor {
    int patch_size = 8;
    int d_enc      = 32;
    int image_size = 32;
    Tensor embed;       // (patch*patch*3) x d_enc
    Tensor bias;        // 1 x d_enc
    Tensor positional;  // P x d_enc

    static PatchFeatureExtractor create(int patch_size, int d_enc, uint64_t seed, int image_size = 32) {
        if (image_size % patch_size != 0) throw std::invalid_argument("extractor: patch must divide image size");
        PatchFeatureExtractor fx;
        fx.patch_size = patch_size;
        fx.d_enc      = d_enc;
        fx.image_size = image_size;
        int patch_dim = patch_size * patch_size * 3;
        int p_tokens  = (image_size / patch_size) * (image_size / patch_size);
        RandomSource rng(seed, 0xfe47);
        fx.embed      = Tensor::randn({patch_dim, d_enc}, rng, 1.0 / std::sqrt(double(patch_dim)));
        fx.bias       = Tensor::randn({1, d_enc}, rng, 0.1);
        fx.positional = Tensor::randn({p_tokens, d_enc}, rng, 0.5);
        return fx;
    }

    uint64_t checksum() const {
        uint64_t h = fnv1a64(embed.data().data(), embed.numel() * sizeof(double));
        h          = fnv1a64(bias.data().data(), bias.numel() * sizeof(double), h);
        return fnv1a64(positional.data().data(), positional.numel() * sizeof(double), h);
    }
};

// P tokens from an image; pixels map to [0,1], so a black image yields
// exactly bias + positional rows.
inline Tensor extract_features(const Image& image, const PatchFeatureExtractor& fx) {
    if (image.width % fx.patch_size != 0 || image.height % fx.patch_size != 0)
        throw std::invalid_argument("extract_features: image " + std::to_string(image.width) + "x" +
                                    std::to_string(image.height) + " not divisible by patch " +
                                    std::to_string(fx.patch_size));
    int px = image.width / fx.patch_size, py = image.height / fx.patch_size;
    int p_tokens = px * py;
    if (p_tokens != fx.positional.dim(0))
        throw std::invalid_argument("extract_features: positional table built for different image size");
    int patch_dim = fx.patch_size * fx.patch_size * 3;
    Tensor patches = Tensor::zeros({p_tokens, patch_dim});
    for (int t = 0; t < p_tokens; ++t) {
        int ox = (t % px) * fx.patch_size, oy = (t / px) * fx.patch_size;
        int k = 0;
        for (int y = 0; y < fx.patch_size; ++y)
            for (int x = 0; x < fx.patch_size; ++x)
                for (int c = 0; c < 3; ++c)
                    patches.at(t, k++) = double(image.at(ox + x, oy + y, c)) / 255.0;
    }
    return add(add_rowvec(matmul(patches, fx.embed), fx.bias), fx.positional);
}

// ----------------------------------- Q-Former ------------------------------

struct QFormerBlock {
    Tensor w_q, w_k, w_v;  // d_enc x d_enc
    Tensor mlp_w1, mlp_b1; // d_enc x hidden, 1 x hidden
    Tensor mlp_w2, mlp_b2; // hidden x d_enc, 1 x d_enc
};

struct QFormer {
    int M     = 64;
    int d_enc = 32;
    Tensor learned_queries;  // M x d_enc
    std::vector<QFormerBlock> blocks;

    static QFormer create(int M, int d_enc, int depth, int mlp_hidden, uint64_t seed) {
        QFormer qf;
        qf.M     = M;
        qf.d_enc = d_enc;
        RandomSource rng(seed, 0x9f04);
        // small symmetric start; keeps early nested values away from zero norm
        qf.learned_queries = Tensor::randn({M, d_enc}, rng, 0.02, true);
        for (int i = 0; i < depth; ++i) {
            QFormerBlock b;
            double ws = 1.0 / std::sqrt(double(d_enc));
            b.w_q     = Tensor::randn({d_enc, d_enc}, rng, ws, true);
            b.w_k     = Tensor::randn({d_enc, d_enc}, rng, ws, true);
            b.w_v     = Tensor::randn({d_enc, d_enc}, rng, ws, true);
            b.mlp_w1  = Tensor::randn({d_enc, mlp_hidden}, rng, ws, true);
            b.mlp_b1  = Tensor::zeros({1, mlp_hidden}, true);
            b.mlp_w2  = Tensor::randn({mlp_hidden, d_enc}, rng, 1.0 / std::sqrt(double(mlp_hidden)), true);
            b.mlp_b2  = Tensor::zeros({1, d_enc}, true);
            qf.blocks.push_back(std::move(b));
        }
        return qf;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> ps = {learned_queries};
        for (const auto& b : blocks)
            for (const Tensor& t : {b.w_q, b.w_k, b.w_v, b.mlp_w1, b.mlp_b1, b.mlp_w2, b.mlp_b2}) ps.push_back(t);
        return ps;
    }
};

struct TokenRange {
    int source_id = 0;
    int begin     = 0;
    int end       = 0;
};

struct EncoderOutput {
    Tensor tokens;  // M_total x d_enc
    std::vector<TokenRange> provenance;
};

namespace detail {

inline Tensor qformer_run(const Tensor& features, const QFormer& qf, Tensor* final_attention) {
    if (features.dim(1) != qf.d_enc)
        throw std::invalid_argument("qformer: feature dim " + std::to_string(features.dim(1)) + " != d_enc " +
                                    std::to_string(qf.d_enc));
    Tensor x = qf.learned_queries;
    double inv_sqrt_d = 1.0 / std::sqrt(double(qf.d_enc));
    for (size_t i = 0; i < qf.blocks.size(); ++i) {
        const QFormerBlock& b = qf.blocks[i];
        Tensor q       = matmul(x, b.w_q);
        Tensor k       = matmul(features, b.w_k);
        Tensor v       = matmul(features, b.w_v);
        Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d), 1.0);
        x              = add(x, matmul(weights, v));
        Tensor h       = silu(add_rowvec(matmul(x, b.mlp_w1), b.mlp_b1));
        x              = add(x, add_rowvec(matmul(h, b.mlp_w2), b.mlp_b2));
        if (final_attention && i + 1 == qf.blocks.size()) *final_attention = weights.clone();
    }
    if (final_attention && qf.blocks.empty()) {
        // depth 0 has no attention; report a uniform map
        *final_attention = Tensor::filled({qf.M, features.dim(0)}, 1.0 / double(features.dim(0)));
    }
    return x;
}

}  // namespace detail

inline EncoderOutput qformer_forward(const Tensor& features, const QFormer& qf, int source_id = 0) {
    EncoderOutput out;
    out.tokens = detail::qformer_run(features, qf, nullptr);
    out.provenance.push_back({source_id, 0, qf.M});
    return out;
}

// Final block's attention weights per learned query, rows summing to 1.
// Row m reshapes to the patch grid for visualization.
inline Tensor qformer_attention_maps(const Tensor& features, const QFormer& qf) {
    Tensor maps;
    detail::qformer_run(features, qf, &maps);
    return maps;
}

inline std::pair<Tensor, Tensor> project_nested_kv(const EncoderOutput& enc, const NestedAttentionLayer& nested) {
    if (enc.tokens.dim(1) != nested.w_k_nested.dim(0))
        throw std::invalid_argument("project_nested_kv: token dim " + std::to_string(enc.tokens.dim(1)) +
                                    " != projection rows " + std::to_string(nested.w_k_nested.dim(0)));
    return {matmul(enc.tokens, nested.w_k_nested), matmul(enc.tokens, nested.w_v_nested)};
}

// Stack encoder outputs (multiple views of one subject, or different
// subjects for identity mixing); token count is additive.
inline EncoderOutput concat_subject_tokens(const std::vector<EncoderOutput>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_subject_tokens: empty list");
    EncoderOutput out;
    std::vector<Tensor> stacks;
    int offset = 0;
    for (const auto& p : parts) {
        stacks.push_back(p.tokens);
        for (const TokenRange& r : p.provenance) {
            out.provenance.push_back({r.source_id, r.begin + offset, r.end + offset});
        }
        offset += p.tokens.dim(0);
    }
    out.tokens = concat_rows(stacks);
    return out;
}

// Full image -> subject tokens path.
inline EncoderOutput encode_subject(const Image& image, const PatchFeatureExtractor& fx, const QFormer& qf,
                                    int source_id = 0) {
    return qformer_forward(extract_features(image, fx), qf, source_id);
}

}  // namespace natlab

#endif  // NATLAB_ENCODER_HPP
