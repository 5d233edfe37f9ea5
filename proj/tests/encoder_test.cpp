#include "natlab/encoder.hpp"

#include <gtest/gtest.h>

#include "natlab/synth_data.hpp"

using namespace natlab;

namespace {

Tensor random_tensor(std::vector<int> shape, RandomSource& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// independent re-implementation of one Q-Former pass with plain loops
std::vector<double> naive_qformer(const Tensor& features, const QFormer& qf) {
    int M = qf.M, d = qf.d_enc, P = features.dim(0);
    std::vector<double> x(qf.learned_queries.data());
    auto matvec = [](const std::vector<double>& a, int rows, int cols, const Tensor& w, int wcols,
                     std::vector<double>& out) {
        out.assign(size_t(rows) * size_t(wcols), 0.0);
        for (int i = 0; i < rows; ++i)
            for (int k = 0; k < cols; ++k)
                for (int j = 0; j < wcols; ++j)
                    out[size_t(i) * size_t(wcols) + size_t(j)] += a[size_t(i) * size_t(cols) + size_t(k)] * w.at(k, j);
    };
    for (const auto& b : qf.blocks) {
        std::vector<double> q, k, v;
        matvec(x, M, d, b.w_q, d, q);
        matvec(std::vector<double>(features.data()), P, d, b.w_k, d, k);
        matvec(std::vector<double>(features.data()), P, d, b.w_v, d, v);
        for (int i = 0; i < M; ++i) {
            std::vector<double> logits(size_t(P), 0.0);
            for (int p = 0; p < P; ++p)
                for (int j = 0; j < d; ++j)
                    logits[size_t(p)] += q[size_t(i) * size_t(d) + size_t(j)] * k[size_t(p) * size_t(d) + size_t(j)];
            double mx = logits[0];
            for (double l : logits) mx = std::max(mx, l);
            double denom = 0.0;
            for (int p = 0; p < P; ++p) {
                logits[size_t(p)] = std::exp(logits[size_t(p)] / std::sqrt(double(d)) - mx / std::sqrt(double(d)));
                denom += logits[size_t(p)];
            }
            for (int j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int p = 0; p < P; ++p) acc += logits[size_t(p)] / denom * v[size_t(p) * size_t(d) + size_t(j)];
                x[size_t(i) * size_t(d) + size_t(j)] += acc;
            }
        }
        std::vector<double> h;
        matvec(x, M, d, b.mlp_w1, b.mlp_w1.dim(1), h);
        int hid = b.mlp_w1.dim(1);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < hid; ++j) {
                double z = h[size_t(i) * size_t(hid) + size_t(j)] + b.mlp_b1.at(0, j);
                h[size_t(i) * size_t(hid) + size_t(j)] = z / (1.0 + std::exp(-z));
            }
        std::vector<double> o;
        matvec(h, M, hid, b.mlp_w2, d, o);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < d; ++j)
                x[size_t(i) * size_t(d) + size_t(j)] += o[size_t(i) * size_t(d) + size_t(j)] + b.mlp_b2.at(0, j);
    }
    return x;
}

}  // namespace

TEST(Extractor, DeterministicOnIdenticalImages) {
    auto fx = PatchFeatureExtractor::create(8, 32, 5);
    RandomSource rng(1);
    IdentityParams id = make_identity(rng);
    Tensor a = extract_features(render_input(id), fx);
    Tensor b = extract_features(render_input(id), fx);
    for (size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Extractor, BlackImageYieldsBiasPlusPositional) {
    auto fx = PatchFeatureExtractor::create(8, 16, 5);
    Image zeros(32, 32);  // all pixel values 0
    Tensor f = extract_features(zeros, fx);
    for (int t = 0; t < 16; ++t)
        for (int j = 0; j < 16; ++j)
            EXPECT_NEAR(f.at(t, j), fx.positional.at(t, j) + fx.bias.at(0, j), 1e-15);
}

TEST(Extractor, TokenCountArithmetic) {
    auto fx  = PatchFeatureExtractor::create(8, 32, 5);
    Tensor f = extract_features(Image(32, 32), fx);
    EXPECT_EQ(f.dim(0), 16);
    EXPECT_EQ(f.dim(1), 32);
}

TEST(Extractor, RejectsNonDivisibleImage) {
    auto fx = PatchFeatureExtractor::create(8, 32, 5, 32);
    EXPECT_THROW(extract_features(Image(30, 30), fx), std::invalid_argument);
}

TEST(Extractor, ChecksumStableAcrossConstruction) {
    auto a = PatchFeatureExtractor::create(8, 32, 5);
    auto b = PatchFeatureExtractor::create(8, 32, 5);
    auto c = PatchFeatureExtractor::create(8, 32, 6);
    EXPECT_EQ(a.checksum(), b.checksum());
    EXPECT_NE(a.checksum(), c.checksum());
}

TEST(QFormerOps, DepthZeroReturnsLearnedQueries) {
    QFormer qf = QFormer::create(6, 8, 0, 16, 3);
    RandomSource rng(2);
    Tensor features = random_tensor({4, 8}, rng);
    EncoderOutput out = qformer_forward(features, qf);
    for (size_t i = 0; i < out.tokens.numel(); ++i) EXPECT_EQ(out.tokens.data()[i], qf.learned_queries.data()[i]);
    EXPECT_EQ(out.tokens.dim(0), 6);
}

TEST(QFormerOps, SingleFeatureAttentionIsTrivial) {
    QFormer qf = QFormer::create(4, 8, 2, 16, 3);
    RandomSource rng(3);
    Tensor features = random_tensor({1, 8}, rng);
    Tensor maps = qformer_attention_maps(features, qf);
    EXPECT_EQ(maps.shape(), (std::vector<int>{4, 1}));
    for (double v : maps.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(QFormerOps, MatchesNaiveOracle) {
    QFormer qf = QFormer::create(5, 8, 2, 12, 7);
    RandomSource rng(4);
    Tensor features = random_tensor({6, 8}, rng);
    EncoderOutput out = qformer_forward(features, qf);
    auto ref = naive_qformer(features, qf);
    for (size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.tokens.data()[i], ref[i], 1e-11);
}

TEST(QFormerOps, OutputTokenCountIndependentOfInputSize) {
    QFormer qf = QFormer::create(7, 8, 2, 12, 7);
    RandomSource rng(5);
    for (int P : {2, 5, 16}) {
        EncoderOutput out = qformer_forward(random_tensor({P, 8}, rng), qf);
        EXPECT_EQ(out.tokens.dim(0), 7);
    }
}

TEST(QFormerOps, AttentionMapsRowsSumToOne) {
    QFormer qf = QFormer::create(6, 8, 2, 12, 9);
    RandomSource rng(6);
    Tensor maps = qformer_attention_maps(random_tensor({9, 8}, rng), qf);
    for (int i = 0; i < 6; ++i) {
        double s = 0.0;
        for (int p = 0; p < 9; ++p) s += maps.at(i, p);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(QFormerOps, GradientsFlowThroughBlocks) {
    QFormer qf = QFormer::create(3, 6, 2, 8, 11);
    RandomSource rng(7);
    Tensor features = random_tensor({4, 6}, rng);
    double err = grad_check(
        [&](const Tensor& f) { return sum(detail::qformer_run(f, qf, nullptr)); }, features, 1e-5);
    EXPECT_LT(err, 1e-4);
    double err_q = grad_check(
        [&](const Tensor& q) {
            QFormer qf2          = qf;
            qf2.learned_queries  = q;
            return sum(detail::qformer_run(features, qf2, nullptr));
        },
        qf.learned_queries, 1e-5);
    EXPECT_LT(err_q, 1e-4);
}

TEST(ProjectKV, ZeroTokensGiveZeroProjections) {
    NestedAttentionLayer nl;
    nl.d          = 4;
    RandomSource rng(8);
    nl.w_k_nested = random_tensor({6, 4}, rng);
    nl.w_v_nested = random_tensor({6, 4}, rng);
    EncoderOutput enc;
    enc.tokens = Tensor::zeros({3, 6});
    auto [k, v] = project_nested_kv(enc, nl);
    for (double x : k.data()) EXPECT_EQ(x, 0.0);
    for (double x : v.data()) EXPECT_EQ(x, 0.0);
}

TEST(ProjectKV, IdentityProjectionReturnsTokens) {
    NestedAttentionLayer nl;
    nl.d = 3;
    nl.w_k_nested = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    nl.w_v_nested = nl.w_k_nested;
    RandomSource rng(9);
    EncoderOutput enc;
    enc.tokens = random_tensor({5, 3}, rng);
    auto [k, v] = project_nested_kv(enc, nl);
    for (size_t i = 0; i < k.numel(); ++i) {
        EXPECT_NEAR(k.data()[i], enc.tokens.data()[i], 1e-15);
        EXPECT_NEAR(v.data()[i], enc.tokens.data()[i], 1e-15);
    }
}

TEST(ProjectKV, SmallInstanceMatchesMatmulOracle) {
    NestedAttentionLayer nl;
    nl.d          = 2;
    nl.w_k_nested = Tensor::from({2, 2}, {1, 2, 3, 4});
    nl.w_v_nested = Tensor::from({2, 2}, {0, 1, 1, 0});
    EncoderOutput enc;
    enc.tokens  = Tensor::from({2, 2}, {1, 1, 2, -1});
    auto [k, v] = project_nested_kv(enc, nl);
    // hand-computed: [1,1;2,-1] * [1,2;3,4] = [4,6;-1,0]
    EXPECT_DOUBLE_EQ(k.at(0, 0), 4.0);
    EXPECT_DOUBLE_EQ(k.at(0, 1), 6.0);
    EXPECT_DOUBLE_EQ(k.at(1, 0), -1.0);
    EXPECT_DOUBLE_EQ(k.at(1, 1), 0.0);
    // [1,1;2,-1] * [0,1;1,0] = [1,1;-1,2]
    EXPECT_DOUBLE_EQ(v.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(v.at(1, 1), 2.0);
}

TEST(Concat, SinglePartIsIdentity) {
    QFormer qf = QFormer::create(4, 8, 1, 12, 13);
    RandomSource rng(10);
    EncoderOutput a = qformer_forward(random_tensor({3, 8}, rng), qf, 42);
    EncoderOutput c = concat_subject_tokens({a});
    EXPECT_EQ(c.tokens.shape(), a.tokens.shape());
    for (size_t i = 0; i < a.tokens.numel(); ++i) EXPECT_EQ(c.tokens.data()[i], a.tokens.data()[i]);
    ASSERT_EQ(c.provenance.size(), 1u);
    EXPECT_EQ(c.provenance[0].source_id, 42);
}

TEST(Concat, TokenCountIsAdditive) {
    // the paper's pet encoder size: two 256-token parts concatenate to 512
    RandomSource rng(11);
    EncoderOutput a, b;
    a.tokens = random_tensor({256, 8}, rng);
    a.provenance.push_back({0, 0, 256});
    b.tokens = random_tensor({256, 8}, rng);
    b.provenance.push_back({1, 0, 256});
    EncoderOutput c = concat_subject_tokens({a, b});
    EXPECT_EQ(c.tokens.dim(0), 512);
    ASSERT_EQ(c.provenance.size(), 2u);
    EXPECT_EQ(c.provenance[0].end, 256);
    EXPECT_EQ(c.provenance[1].begin, 256);
    EXPECT_EQ(c.provenance[1].end, 512);
}

TEST(Concat, OrderPermutesProvenanceButNotNestedOutput) {
    RandomSource rng(12);
    EncoderOutput a, b;
    a.tokens = random_tensor({3, 4}, rng);
    a.provenance.push_back({0, 0, 3});
    b.tokens = random_tensor({2, 4}, rng);
    b.provenance.push_back({1, 0, 2});
    EncoderOutput ab = concat_subject_tokens({a, b});
    EncoderOutput ba = concat_subject_tokens({b, a});
    EXPECT_NE(ab.provenance[0].source_id, ba.provenance[0].source_id);

    NestedAttentionLayer nl;
    nl.d          = 4;
    nl.w_k_nested = random_tensor({4, 4}, rng);
    nl.w_v_nested = random_tensor({4, 4}, rng);
    Tensor queries = random_tensor({5, 4}, rng);
    SubjectBinding sab, sba;
    sab.encoder_tokens = ab.tokens;
    sba.encoder_tokens = ba.tokens;
    PerQueryValues vab = nested_values(queries, sab, nl);
    PerQueryValues vba = nested_values(queries, sba, nl);
    for (size_t i = 0; i < vab.values.numel(); ++i) EXPECT_NEAR(vab.values.data()[i], vba.values.data()[i], 1e-12);
}

TEST(Concat, RejectsEmptyList) { EXPECT_THROW(concat_subject_tokens({}), std::invalid_argument); }
