#ifndef NATLAB_TRAINING_HPP
#define NATLAB_TRAINING_HPP

#include <string>
#include <vector>

#include "natlab/denoiser.hpp"

namespace natlab {

// Plain gradient descent with momentum and global-norm gradient clipping.
struct SgdMomentum {
    double lr       = 0.05;
    double momentum = 0.9;
    double clip     = 1.0;
    std::vector<Tensor> params;
    std::vector<std::vector<double>> velocity;

    SgdMomentum(std::vector<Tensor> params_, double lr_, double momentum_, double clip_)
        : lr(lr_), momentum(momentum_), clip(clip_), params(std::move(params_)) {
        for (const Tensor& p : params) velocity.emplace_back(p.numel(), 0.0);
    }

    void zero_grad() {
        for (Tensor& p : params) p.zero_grad();
    }

    double grad_norm() const {
        double s = 0.0;
        for (const Tensor& p : params)
            for (double g : p.grad()) s += g * g;
        return std::sqrt(s);
    }

    void step() {
        double norm  = grad_norm();
        double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& p = params[i];
            if (p.grad().empty()) continue;
            auto& v = velocity[i];
            for (size_t j = 0; j < v.size(); ++j) {
                v[j] = momentum * v[j] + scale * p.grad()[j];
                p.data()[j] -= lr * v[j];
            }
        }
    }
};

namespace detail {

inline std::vector<BoundSubject> training_subjects(const SyntheticSample& s, const SubjectAdapter* adapter,
                                                   double alpha) {
    if (!adapter) return {};
    // training always runs at lambda = 1 / full mix; the factor is an
    // inference-time control
    BoundSubject b = bind_subject(*adapter, {s.input_image}, s.prompt.subject_index, 1.0, alpha);
    b.mix_scale    = 1.0;
    return {b};
}

}  // namespace detail

// One optimizer step over a mini-batch of (input image, prompt, target)
// triplets: noise the target, predict the noise, MSE, update. Returns the
// batch loss.
inline double training_step(const std::vector<const SyntheticSample*>& batch, ToyDenoiser& model,
                            SubjectAdapter* adapter, SgdMomentum& opt, RandomSource& rng,
                            const DiffusionSchedule& sched, double alpha) {
    opt.zero_grad();
    Tensor loss;
    for (const SyntheticSample* s : batch) {
        int t        = int(rng.uniform_int(0, sched.steps - 1));
        Tensor x0    = image_to_tensor(s->target_image);
        Tensor noise = Tensor::randn({x0.dim(0), x0.dim(1), 3}, rng);
        Tensor x_t   = forward_noising(x0, t, noise, sched);
        Tensor pred  = denoiser_forward(x_t, t, s->prompt, detail::training_subjects(*s, adapter, alpha), model);
        Tensor l     = mse(pred, noise);
        loss         = loss.defined() ? add(loss, l) : l;
    }
    loss = scale(loss, 1.0 / double(batch.size()));
    loss.backward();
    opt.step();
    return loss.scalar();
}

struct TrainResult {
    std::vector<double> losses;  // one entry per step
};

// Full training run for one stage. Stage A trains the host; stage B freezes
// it and trains the adapter (the extractor stays frozen either way).
inline TrainResult train_model(ToyDenoiser& model, SubjectAdapter* adapter, const std::vector<SyntheticSample>& data,
                               const RunConfig& cfg) {
    DiffusionSchedule sched = DiffusionSchedule::from_config(cfg);
    bool stage_b = adapter != nullptr;
    model.set_trainable(!stage_b);
    std::vector<Tensor> params = stage_b ? adapter->parameters() : model.parameters();
    if (stage_b)
        for (Tensor& p : params) p.set_requires_grad(true);
    SgdMomentum opt(params, cfg.train.lr, cfg.train.momentum, cfg.train.clip);

    RandomSource pick  = RandomSource(cfg.train.seed, 0xb41c);
    RandomSource noise = RandomSource(cfg.train.seed, 0x0153);
    TrainResult result;
    for (int step = 0; step < cfg.train.steps; ++step) {
        std::vector<const SyntheticSample*> batch;
        for (int i = 0; i < cfg.train.batch; ++i)
            batch.push_back(&data[size_t(pick.uniform_int(0, int64_t(data.size()) - 1))]);
        double loss;
        try {
            loss = training_step(batch, model, adapter, opt, noise, sched, cfg.subject.alpha);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("training step " + std::to_string(step) + ": " + e.what());
        }
        result.losses.push_back(loss);
    }
    return result;
}

inline std::string loss_curve_csv(const TrainResult& r, const RunConfig& cfg) {
    CsvTable t;
    t.comments.push_back("stage " + cfg.train.stage + " loss curve");
    t.header = {"step", "loss"};
    for (size_t i = 0; i < r.losses.size(); ++i)
        t.rows.push_back({std::to_string(i), fmt_double(r.losses[size_t(i)])});
    return emit_csv(t);
}

}  // namespace natlab

#endif  // NATLAB_TRAINING_HPP
