#ifndef NATLAB_DENOISER_HPP
#define NATLAB_DENOISER_HPP

#include <optional>
#include <string>
#include <vector>

#include "natlab/baselines.hpp"
#include "natlab/checkpoint.hpp"
#include "natlab/config.hpp"
#include "natlab/encoder.hpp"
#include "natlab/synth_data.hpp"

namespace natlab {

// ---------------------------------------------------------------------------
// Toy text-conditioned pixel-space diffusion denoiser. Transformer blocks of
// self-attention + cross-attention + MLP over patch tokens; every
// cross-attention layer hosts the active injection mechanism.
// ---------------------------------------------------------------------------

struct DiffusionSchedule {
    int steps = 100;
    std::vector<double> betas;
    std::vector<double> alpha_bar;  // cumulative alpha products, strictly decreasing

    static DiffusionSchedule linear(int steps, double beta_start, double beta_end) {
        if (steps < 1) throw std::invalid_argument("schedule: steps must be >= 1");
        DiffusionSchedule s;
        s.steps = steps;
        double prod = 1.0;
        for (int t = 0; t < steps; ++t) {
            double beta = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * double(t) / double(steps - 1);
            if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("schedule: betas must lie in (0,1)");
            s.betas.push_back(beta);
            prod *= 1.0 - beta;
            s.alpha_bar.push_back(prod);
        }
        return s;
    }

    static DiffusionSchedule from_config(const RunConfig& cfg) {
        return linear(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    }
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise
inline Tensor forward_noising(const Tensor& x0, int t, const Tensor& noise, const DiffusionSchedule& sched) {
    if (t < 0 || t >= sched.steps)
        throw std::invalid_argument("forward_noising: t " + std::to_string(t) + " outside [0, " +
                                    std::to_string(sched.steps) + ")");
    detail::require_same_shape(x0, noise, "forward_noising");
    double ab = sched.alpha_bar[size_t(t)];
    return add(scale(x0, std::sqrt(ab)), scale(noise, std::sqrt(1.0 - ab)));
}

// ------------------------------- host model --------------------------------

struct DenoiserBlock {
    Tensor time_proj;                   // per-block timestep conditioning
    Tensor sa_wq, sa_wk, sa_wv, sa_wo;  // self-attention
    CrossAttentionLayer ca;             // text cross-attention (shared with mechanisms)
    Tensor ca_wo;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct ToyDenoiser {
    int image_size = 32;
    int patch = 4, d_model = 48, d_attn = 32, mlp_hidden = 96;
    int n_tokens = 64, patch_dim = 48;
    int prompt_len = 8, text_dim = 24;

    Tensor patch_embed_w, patch_embed_b;
    Tensor pos_table;
    Tensor time_w1, time_b1, time_w2, time_b2;
    Tensor token_embed;  // vocabulary x text_dim
    std::vector<DenoiserBlock> blocks;
    Tensor unembed_w, unembed_b;
    // The head predicts the bounded residual D = sqrt(abar) eps - sqrt(1-abar) x0,
    // and the noise estimate is assembled as
    //   eps_hat = skip_gain * sqrt(1-abar) * x_t + sqrt(abar) * D_hat.
    // skip_gain starts at 0 so an untrained model predicts ~zero noise; it
    // learns its way to ~1. This keeps the DDIM x0 estimate bounded at high t.
    Tensor skip_gain;
    DiffusionSchedule sched;

    std::vector<size_t> patch_map;  // {H,W,3} index -> {n_tokens, patch_dim} order

    static ToyDenoiser create(const RunConfig& cfg, int image_size = 32) {
        ToyDenoiser m;
        m.image_size = image_size;
        m.patch      = cfg.model.patch;
        m.d_model    = cfg.model.dim;
        m.d_attn     = cfg.model.attn_dim;
        m.mlp_hidden = cfg.model.mlp_hidden;
        m.prompt_len = cfg.model.prompt_len;
        m.text_dim   = cfg.model.text_dim;
        m.patch_dim  = m.patch * m.patch * 3;
        int side     = m.image_size / m.patch;
        m.n_tokens   = side * side;

        RandomSource rng(cfg.model.init_seed, 0x0de1);
        auto w = [&rng](std::vector<int> shape, double stddev) { return Tensor::randn(shape, rng, stddev, true); };
        double s_in  = 1.0 / std::sqrt(double(m.d_model));
        double s_out = 0.1 * s_in;  // damped output projections: stable residuals, near-zero initial prediction

        m.patch_embed_w = w({m.patch_dim, m.d_model}, 1.0 / std::sqrt(double(m.patch_dim)));
        m.patch_embed_b = Tensor::zeros({1, m.d_model}, true);
        m.pos_table     = w({m.n_tokens, m.d_model}, 0.02);
        m.time_w1       = w({m.d_model, m.d_model}, s_in);
        m.time_b1       = Tensor::zeros({1, m.d_model}, true);
        m.time_w2       = w({m.d_model, m.d_model}, s_out);
        m.time_b2       = Tensor::zeros({1, m.d_model}, true);
        m.token_embed   = w({int(vocabulary().size()), m.text_dim}, 0.5);
        for (int i = 0; i < cfg.model.blocks; ++i) {
            DenoiserBlock b;
            b.time_proj   = w({m.d_model, m.d_model}, s_out);
            b.sa_wq       = w({m.d_model, m.d_attn}, s_in);
            b.sa_wk       = w({m.d_model, m.d_attn}, s_in);
            b.sa_wv       = w({m.d_model, m.d_attn}, s_in);
            b.sa_wo       = w({m.d_attn, m.d_model}, s_out);
            b.ca.layer_id = i;
            b.ca.d        = m.d_attn;
            b.ca.w_q      = w({m.d_model, m.d_attn}, s_in);
            b.ca.w_k      = w({m.text_dim, m.d_attn}, 1.0 / std::sqrt(double(m.text_dim)));
            b.ca.w_v      = w({m.text_dim, m.d_attn}, 1.0 / std::sqrt(double(m.text_dim)));
            b.ca_wo       = w({m.d_attn, m.d_model}, s_out);
            b.mlp_w1      = w({m.d_model, m.mlp_hidden}, s_in);
            b.mlp_b1      = Tensor::zeros({1, m.mlp_hidden}, true);
            b.mlp_w2      = w({m.mlp_hidden, m.d_model}, 0.1 / std::sqrt(double(m.mlp_hidden)));
            b.mlp_b2      = Tensor::zeros({1, m.d_model}, true);
            m.blocks.push_back(std::move(b));
        }
        m.unembed_w = w({m.d_model, m.patch_dim}, s_out);
        m.unembed_b = Tensor::zeros({1, m.patch_dim}, true);
        m.skip_gain = Tensor::zeros({1}, true);
        m.sched     = DiffusionSchedule::from_config(cfg);

        m.patch_map.resize(size_t(m.n_tokens) * size_t(m.patch_dim));
        for (int tkn = 0; tkn < m.n_tokens; ++tkn) {
            int ox = (tkn % side) * m.patch, oy = (tkn / side) * m.patch;
            int k = 0;
            for (int y = 0; y < m.patch; ++y)
                for (int x = 0; x < m.patch; ++x)
                    for (int c = 0; c < 3; ++c)
                        m.patch_map[size_t(tkn) * size_t(m.patch_dim) + size_t(k++)] =
                            (size_t(oy + y) * size_t(m.image_size) + size_t(ox + x)) * 3 + size_t(c);
        }
        return m;
    }

    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor>> ps;
        ps.emplace_back("host.patch_embed.w", patch_embed_w);
        ps.emplace_back("host.patch_embed.b", patch_embed_b);
        ps.emplace_back("host.pos_table", pos_table);
        ps.emplace_back("host.time.w1", time_w1);
        ps.emplace_back("host.time.b1", time_b1);
        ps.emplace_back("host.time.w2", time_w2);
        ps.emplace_back("host.time.b2", time_b2);
        ps.emplace_back("host.token_embed", token_embed);
        ps.emplace_back("host.skip_gain", skip_gain);
        for (size_t i = 0; i < blocks.size(); ++i) {
            std::string p = "host.block" + std::to_string(i) + ".";
            const auto& b = blocks[i];
            ps.emplace_back(p + "time_proj", b.time_proj);
            ps.emplace_back(p + "sa_wq", b.sa_wq);
            ps.emplace_back(p + "sa_wk", b.sa_wk);
            ps.emplace_back(p + "sa_wv", b.sa_wv);
            ps.emplace_back(p + "sa_wo", b.sa_wo);
            ps.emplace_back(p + "ca_wq", b.ca.w_q);
            ps.emplace_back(p + "ca_wk", b.ca.w_k);
            ps.emplace_back(p + "ca_wv", b.ca.w_v);
            ps.emplace_back(p + "ca_wo", b.ca_wo);
            ps.emplace_back(p + "mlp_w1", b.mlp_w1);
            ps.emplace_back(p + "mlp_b1", b.mlp_b1);
            ps.emplace_back(p + "mlp_w2", b.mlp_w2);
            ps.emplace_back(p + "mlp_b2", b.mlp_b2);
        }
        ps.emplace_back("host.unembed.w", unembed_w);
        ps.emplace_back("host.unembed.b", unembed_b);
        return ps;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [n, t] : named_parameters()) out.push_back(t);
        return out;
    }

    void set_trainable(bool trainable) {
        for (Tensor& t : parameters()) t.set_requires_grad(trainable);
    }
};

// ------------------------- stage-B adapter bundle --------------------------

// Everything stage B trains for one mechanism: the shared encoder plus the
// mechanism's per-layer projections. The frozen extractor rides along so a
// checkpoint is self-contained.
struct SubjectAdapter {
    MechanismKind kind = MechanismKind::NestedAttention;
    PatchFeatureExtractor extractor;  // frozen
    QFormer qformer;
    std::vector<NestedAttentionLayer> nested;     // nested: one per cross-attention layer
    std::vector<DecoupledCAParams> decoupled;     // decoupled_ca
    std::vector<Tensor> gv_proj;                  // global_v: d_enc -> d per layer
    std::vector<Tensor> mt_proj;                  // multiple_tokens: d_enc -> d per layer
    Tensor sa_proj;                               // simple_adapter: single d_enc -> text_dim map

    static SubjectAdapter create(MechanismKind kind, const RunConfig& cfg) {
        SubjectAdapter a;
        a.kind      = kind;
        a.extractor = PatchFeatureExtractor::create(cfg.encoder.patch, cfg.encoder.feat_dim, cfg.encoder.extractor_seed);
        a.qformer   = QFormer::create(cfg.encoder.queries, cfg.encoder.feat_dim, cfg.encoder.blocks,
                                      2 * cfg.encoder.feat_dim, cfg.encoder.init_seed);
        RandomSource rng(cfg.encoder.init_seed, 0xada9);
        int d_enc = cfg.encoder.feat_dim, d = cfg.model.attn_dim;
        double ws = 1.0 / std::sqrt(double(d_enc));
        for (int i = 0; i < cfg.model.blocks; ++i) {
            switch (kind) {
                case MechanismKind::NestedAttention: {
                    NestedAttentionLayer nl;
                    nl.layer_id   = i;
                    nl.d          = d;
                    nl.w_k_nested = Tensor::randn({d_enc, d}, rng, ws, true);
                    nl.w_v_nested = Tensor::randn({d_enc, d}, rng, ws, true);
                    a.nested.push_back(std::move(nl));
                    break;
                }
                case MechanismKind::DecoupledCA: {
                    DecoupledCAParams p;
                    // small but nonzero: keeps scale=1 training alive at step 0
                    p.w_k_img = Tensor::randn({d_enc, d}, rng, 0.05, true);
                    p.w_v_img = Tensor::randn({d_enc, d}, rng, 0.05, true);
                    a.decoupled.push_back(std::move(p));
                    break;
                }
                case MechanismKind::GlobalV:
                    a.gv_proj.push_back(Tensor::randn({d_enc, d}, rng, ws, true));
                    break;
                case MechanismKind::MultipleTokens:
                    a.mt_proj.push_back(Tensor::randn({d_enc, d}, rng, ws, true));
                    break;
                case MechanismKind::SimpleAdapter:
                    break;
            }
        }
        if (kind == MechanismKind::SimpleAdapter)
            a.sa_proj = Tensor::randn({d_enc, cfg.model.text_dim}, rng, ws, true);
        return a;
    }

    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor>> ps;
        ps.emplace_back("adapter.qformer.queries", qformer.learned_queries);
        for (size_t i = 0; i < qformer.blocks.size(); ++i) {
            std::string p = "adapter.qformer.block" + std::to_string(i) + ".";
            const auto& b = qformer.blocks[i];
            ps.emplace_back(p + "w_q", b.w_q);
            ps.emplace_back(p + "w_k", b.w_k);
            ps.emplace_back(p + "w_v", b.w_v);
            ps.emplace_back(p + "mlp_w1", b.mlp_w1);
            ps.emplace_back(p + "mlp_b1", b.mlp_b1);
            ps.emplace_back(p + "mlp_w2", b.mlp_w2);
            ps.emplace_back(p + "mlp_b2", b.mlp_b2);
        }
        for (size_t i = 0; i < nested.size(); ++i) {
            std::string p = "adapter.layer" + std::to_string(i) + ".";
            ps.emplace_back(p + "w_k_nested", nested[i].w_k_nested);
            ps.emplace_back(p + "w_v_nested", nested[i].w_v_nested);
        }
        for (size_t i = 0; i < decoupled.size(); ++i) {
            std::string p = "adapter.layer" + std::to_string(i) + ".";
            ps.emplace_back(p + "w_k_img", decoupled[i].w_k_img);
            ps.emplace_back(p + "w_v_img", decoupled[i].w_v_img);
        }
        for (size_t i = 0; i < gv_proj.size(); ++i)
            ps.emplace_back("adapter.layer" + std::to_string(i) + ".gv_proj", gv_proj[i]);
        for (size_t i = 0; i < mt_proj.size(); ++i)
            ps.emplace_back("adapter.layer" + std::to_string(i) + ".mt_proj", mt_proj[i]);
        if (sa_proj.defined()) ps.emplace_back("adapter.sa_proj", sa_proj);
        return ps;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [n, t] : named_parameters()) out.push_back(t);
        return out;
    }

    void set_trainable(bool trainable) {
        for (Tensor t : parameters()) t.set_requires_grad(trainable);
    }
};

// One personalized subject riding through a sampling or training pass.
struct BoundSubject {
    SubjectBinding binding;
    const SubjectAdapter* adapter = nullptr;
    double mix_scale = 1.0;  // decoupled_ca branch weight, in [0, 1]
};

// Encode one or more reference images and bind them to a prompt position.
inline BoundSubject bind_subject(const SubjectAdapter& adapter, const std::vector<Image>& refs, int subject_index,
                                 double lambda, double alpha) {
    if (refs.empty()) throw std::invalid_argument("bind_subject: need at least one reference image");
    std::vector<EncoderOutput> parts;
    for (size_t i = 0; i < refs.size(); ++i)
        parts.push_back(encode_subject(refs[i], adapter.extractor, adapter.qformer, int(i)));
    BoundSubject s;
    s.binding.subject_token_index = subject_index;
    s.binding.encoder_tokens      = concat_subject_tokens(parts).tokens;
    s.binding.lambda              = lambda;
    s.binding.alpha               = alpha;
    s.adapter                     = &adapter;
    return s;
}

// ------------------------------ forward pass -------------------------------

namespace detail {

inline Tensor time_embedding(int t, const ToyDenoiser& m) {
    Tensor sins = Tensor::zeros({1, m.d_model});
    int half = m.d_model / 2;
    for (int j = 0; j < half; ++j) {
        double freq = std::exp(-std::log(10000.0) * double(j) / double(half));
        sins.at(0, j)        = std::sin(double(t) * freq);
        sins.at(0, half + j) = std::cos(double(t) * freq);
    }
    Tensor h = silu(add_rowvec(matmul(sins, m.time_w1), m.time_b1));
    return add_rowvec(matmul(h, m.time_w2), m.time_b2);
}

inline Tensor self_attention(const Tensor& h, const DenoiserBlock& b, int d_attn) {
    Tensor q = matmul(h, b.sa_wq);
    Tensor k = matmul(h, b.sa_wk);
    Tensor v = matmul(h, b.sa_wv);
    Tensor a = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(d_attn))), 1.0);
    return matmul(matmul(a, v), b.sa_wo);
}

inline Tensor mechanism_cross_attention(const Tensor& h, const Tensor& c, size_t block_idx, const ToyDenoiser& model,
                                        const std::vector<BoundSubject>& subjects, CaptureContext* capture) {
    const CrossAttentionLayer& ca = model.blocks[block_idx].ca;
    if (subjects.empty()) return cross_attention_forward(h, c, ca);

    MechanismKind kind = subjects[0].adapter->kind;
    for (const auto& s : subjects) {
        if (!s.adapter) throw std::invalid_argument("denoiser: subject without adapter");
        if (s.adapter->kind != kind) throw std::invalid_argument("denoiser: subjects must share one mechanism");
    }
    if (kind != MechanismKind::NestedAttention && subjects.size() > 1)
        throw std::invalid_argument("denoiser: multi-subject generation requires the nested mechanism");

    if (kind == MechanismKind::NestedAttention) {
        std::vector<SubjectBinding> bindings;
        std::vector<const NestedAttentionLayer*> layers;
        for (const auto& s : subjects) {
            if (s.adapter->nested.size() != model.blocks.size())
                throw std::invalid_argument("denoiser: adapter must carry one nested layer per cross-attention layer");
            bindings.push_back(s.binding);
            layers.push_back(&s.adapter->nested[block_idx]);
        }
        return nested_cross_attention_forward(h, c, bindings, ca, layers, capture);
    }

    const BoundSubject& s = subjects[0];
    switch (kind) {
        case MechanismKind::DecoupledCA: {
            DecoupledCAParams p = s.adapter->decoupled[block_idx];
            p.scale             = s.mix_scale;
            return decoupled_ca_forward(h, c, s.binding.encoder_tokens, ca, p);
        }
        case MechanismKind::SimpleAdapter: {
            Tensor projected = matmul(s.binding.encoder_tokens, s.adapter->sa_proj);
            return simple_adapter_forward(h, c, projected, ca);
        }
        case MechanismKind::GlobalV:
            return global_v_forward(h, c, s.binding.encoder_tokens, ca, s.adapter->gv_proj[block_idx],
                                    s.binding.subject_token_index, s.binding.lambda);
        case MechanismKind::MultipleTokens: {
            Tensor values = matmul(s.binding.encoder_tokens, s.adapter->mt_proj[block_idx]);
            return multiple_tokens_forward(h, c, values, ca, s.binding.subject_token_index, s.binding.lambda);
        }
        default:
            throw std::logic_error("unreachable mechanism");
    }
}

}  // namespace detail

// Predict the noise in x_t. x_t is {H, W, 3} in [-1, 1] space.
inline Tensor denoiser_forward(const Tensor& x_t, int t, const TokenizedPrompt& prompt,
                               const std::vector<BoundSubject>& subjects, const ToyDenoiser& model,
                               CaptureContext* capture = nullptr) {
    if (int(prompt.ids.size()) != model.prompt_len)
        throw std::invalid_argument("denoiser_forward: prompt length mismatch");
    for (const auto& s : subjects)
        if (s.binding.subject_token_index >= model.prompt_len)
            throw std::invalid_argument("denoiser_forward: binding index beyond prompt length");

    if (t < 0 || t >= model.sched.steps) throw std::invalid_argument("denoiser_forward: t out of schedule range");
    Tensor patches = permute_elems(x_t, model.patch_map, {model.n_tokens, model.patch_dim});
    Tensor f       = add(add_rowvec(matmul(patches, model.patch_embed_w), model.patch_embed_b), model.pos_table);
    Tensor temb    = detail::time_embedding(t, model);
    Tensor c       = gather_rows(model.token_embed, prompt.ids);

    for (size_t i = 0; i < model.blocks.size(); ++i) {
        const DenoiserBlock& b = model.blocks[i];
        f = add_rowvec(f, matmul(temb, b.time_proj));
        f = add(f, detail::self_attention(rmsnorm_rows(f), b, model.d_attn));
        Tensor ca_out = detail::mechanism_cross_attention(rmsnorm_rows(f), c, i, model, subjects, capture);
        f = add(f, matmul(ca_out, b.ca_wo));
        Tensor h = silu(add_rowvec(matmul(rmsnorm_rows(f), b.mlp_w1), b.mlp_b1));
        f = add(f, add_rowvec(matmul(h, b.mlp_w2), b.mlp_b2));
    }
    Tensor out = add_rowvec(matmul(f, model.unembed_w), model.unembed_b);

    // inverse of the patch permutation
    std::vector<size_t> inverse(model.patch_map.size());
    for (size_t i = 0; i < model.patch_map.size(); ++i) inverse[model.patch_map[i]] = i;
    Tensor residual = permute_elems(out, inverse, {model.image_size, model.image_size, 3});

    double ab = model.sched.alpha_bar[size_t(t)];
    Tensor skip = mul_scalar_t(x_t, scale(model.skip_gain, std::sqrt(1.0 - ab)));
    return add(skip, scale(residual, std::sqrt(ab)));
}

// Swap the word the binding injects into; the binding itself is untouched.
inline TokenizedPrompt retarget_subject(const TokenizedPrompt& prompt, const std::string& new_word) {
    int id = word_id(new_word);
    if (id < 0) throw std::runtime_error("retarget_subject: unknown word '" + new_word + "'");
    TokenizedPrompt out = prompt;
    out.ids[size_t(out.subject_index)] = id;
    if (out.subject_index < int(out.words.size())) out.words[size_t(out.subject_index)] = new_word;
    return out;
}

// ------------------------------- sampling ----------------------------------

// The starting latent of a sampling run: a function of the seed alone,
// never of the prompt, so one seed fixes composition across prompts.
inline Tensor initial_latent(uint64_t seed, int image_size) {
    RandomSource rng(seed, 0x1a7e);
    return Tensor::randn({image_size, image_size, 3}, rng);
}

// Deterministic DDIM sampler.
inline Tensor sample_latent(const TokenizedPrompt& prompt, const std::vector<BoundSubject>& subjects, int steps,
                            uint64_t seed, const DiffusionSchedule& sched, const ToyDenoiser& model,
                            CaptureContext* capture = nullptr) {
    if (steps < 1 || steps > sched.steps) throw std::invalid_argument("sample: steps must be in [1, T]");
    Tensor x = initial_latent(seed, model.image_size);

    std::vector<int> ts;
    for (int i = 0; i < steps; ++i)
        ts.push_back(steps == 1 ? sched.steps - 1 : int(std::lround(double(sched.steps - 1) * double(i) / double(steps - 1))));

    for (int i = steps - 1; i >= 0; --i) {
        int t = ts[size_t(i)];
        if (capture) capture->step = t;
        Tensor eps = denoiser_forward(x, t, prompt, subjects, model, capture);
        double ab  = sched.alpha_bar[size_t(t)];
        Tensor x0  = scale(sub(x, scale(eps, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
        for (double& v : x0.data()) v = std::clamp(v, -1.0, 1.0);  // pixel-space clamp
        if (i == 0) {
            x = x0;
        } else {
            double ab_prev = sched.alpha_bar[size_t(ts[size_t(i - 1)])];
            x = add(scale(x0, std::sqrt(ab_prev)), scale(eps, std::sqrt(1.0 - ab_prev)));
        }
    }
    return x;
}

inline Image sample_image(const TokenizedPrompt& prompt, const std::vector<BoundSubject>& subjects, int steps,
                          uint64_t seed, const DiffusionSchedule& sched, const ToyDenoiser& model,
                          CaptureContext* capture = nullptr) {
    return tensor_to_image(sample_latent(prompt, subjects, steps, seed, sched, model, capture));
}

// ------------------------------ checkpoints --------------------------------

inline Checkpoint make_checkpoint(const RunConfig& cfg, const ToyDenoiser& model, const SubjectAdapter* adapter,
                                  const std::string& lineage) {
    Checkpoint ck;
    ck.config_text = canonical_text(cfg);
    ck.lineage     = lineage;
    {
        Tensor betas = Tensor::zeros({int(cfg.schedule.steps)});
        DiffusionSchedule sched = DiffusionSchedule::from_config(cfg);
        for (int t = 0; t < sched.steps; ++t) betas.data()[size_t(t)] = sched.betas[size_t(t)];
        ck.params.emplace_back("schedule.betas", betas);
    }
    for (auto& [name, t] : model.named_parameters()) ck.params.emplace_back(name, t.clone());
    // the frozen extractor is reconstructed from its seed in the config echo
    if (adapter)
        for (auto& [name, t] : adapter->named_parameters()) ck.params.emplace_back(name, t.clone());
    return ck;
}

inline std::pair<RunConfig, ToyDenoiser> model_from_checkpoint(const Checkpoint& ck) {
    RunConfig cfg     = parse_config(ck.config_text);
    ToyDenoiser model = ToyDenoiser::create(cfg);
    for (auto& [name, t] : model.named_parameters()) {
        const Tensor& src = ck.find(name);
        if (src.shape() != t.shape()) throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        t.data() = src.data();
    }
    return {cfg, model};
}

inline SubjectAdapter adapter_from_checkpoint(const Checkpoint& ck, const RunConfig& cfg) {
    SubjectAdapter a = SubjectAdapter::create(mechanism_from_name(cfg.subject.mechanism), cfg);
    for (auto& [name, t] : a.named_parameters()) {
        const Tensor& src = ck.find(name);
        if (src.shape() != t.shape()) throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        t.data() = src.data();
    }
    return a;
}

}  // namespace natlab

#endif  // NATLAB_DENOISER_HPP
