#include <doctest.h>

#include <limits>
#include <random>

#include "glc/errors.hpp"
#include "glc/latent_autoencoder.hpp"
#include "test_util.hpp"

using namespace glc;

namespace {

/// Brute-force nearest row per position, lowest index on ties.
std::vector<int64_t> oracle_nearest(const torch::Tensor& latent, const torch::Tensor& codebook) {
    auto l = latent.to(torch::kDouble).contiguous();
    auto c = codebook.to(torch::kDouble).contiguous();
    const auto b = l.size(0), n = l.size(1), h = l.size(2), w = l.size(3), m = c.size(0);
    auto la = l.accessor<double, 4>();
    auto ca = c.accessor<double, 2>();
    std::vector<int64_t> out;
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                double best = std::numeric_limits<double>::infinity();
                int64_t arg = 0;
                for (int64_t k = 0; k < m; ++k) {
                    double d = 0.0;
                    for (int64_t ch = 0; ch < n; ++ch) d += (la[bi][ch][i][j] - ca[k][ch]) * (la[bi][ch][i][j] - ca[k][ch]);
                    if (d < best) {
                        best = d;
                        arg = k;
                    }
                }
                out.push_back(arg);
            }
    return out;
}

}  // namespace

TEST_CASE("nearest-neighbour VQ agrees with brute force on random draws") {
    std::mt19937_64 rng(21);
    int disagreements = 0;
    for (int draw = 0; draw < 1000; ++draw) {
        const int64_t n = 1 + static_cast<int64_t>(rng() % 8), m = 1 + static_cast<int64_t>(rng() % 40);
        const int64_t h = 1 + static_cast<int64_t>(rng() % 4), w = 1 + static_cast<int64_t>(rng() % 4);
        torch::manual_seed(draw);
        auto latent = torch::randn({1 + static_cast<int64_t>(draw % 2), n, h, w});
        auto codebook = torch::randn({m, n});
        auto got = nearest_indices(latent, codebook).flatten();
        const auto want = oracle_nearest(latent, codebook);
        for (std::size_t k = 0; k < want.size(); ++k) disagreements += got[static_cast<int64_t>(k)].item<int64_t>() != want[k];
    }
    CHECK(disagreements == 0);
}

TEST_CASE("VQ projection is idempotent and lookup matches the indices") {
    torch::manual_seed(1);
    auto codebook = torch::randn({32, 6});
    auto latent = torch::randn({2, 6, 5, 3});
    auto first = vq_nearest(latent, codebook);
    auto second = vq_nearest(first.codes, codebook);
    CHECK(torch::equal(first.indices, second.indices));
    CHECK(torch::equal(first.codes, second.codes));
    CHECK(torch::equal(lookup_codes(first.indices, codebook), first.codes));
    CHECK(first.indices.sizes() == torch::IntArrayRef({2, 5, 3}));
}

TEST_CASE("VQ ties resolve to the lowest index") {
    auto codebook = torch::tensor({{1.0f, 0.0f}, {-1.0f, 0.0f}, {1.0f, 0.0f}});
    auto latent = torch::zeros({1, 2, 1, 1});
    CHECK(nearest_indices(latent, codebook).item<int64_t>() == 0);
}

TEST_CASE("VQ straight-through copies the gradient to the latent only") {
    torch::manual_seed(2);
    auto codebook = torch::randn({16, 4}, torch::requires_grad());
    auto latent = torch::randn({1, 4, 3, 3}, torch::requires_grad());
    auto vq = vq_nearest(latent, codebook);
    CHECK(torch::allclose(vq.quantized, vq.codes));
    auto g = torch::randn_like(latent);
    (vq.quantized * g).sum().backward();
    CHECK(torch::allclose(latent.grad(), g));
    CHECK_FALSE(codebook.grad().defined());

    auto latent2 = latent.detach().clone().requires_grad_(true);
    auto vq2 = vq_nearest(latent2, codebook);
    vq2.codes.sum().backward();
    CHECK_FALSE(latent2.grad().defined());
    CHECK(codebook.grad().abs().sum().item<double>() > 0.0);
}

TEST_CASE("VQ rejects mismatched inputs") {
    CHECK_THROWS_AS(nearest_indices(torch::zeros({1, 3, 2, 2}), torch::zeros({4, 2})), ShapeError);
    CHECK_THROWS_AS(nearest_indices(torch::zeros({1, 3, 2, 2}), torch::zeros({0, 3})), InvalidArgument);
    CHECK_THROWS_AS(nearest_indices(torch::zeros({3, 2, 2}), torch::zeros({4, 3})), ShapeError);
}

TEST_CASE("patch attention does not mix windows") {
    torch::manual_seed(3);
    PatchAttention attn(8, 4);
    torch::NoGradGuard no_grad;
    auto x = torch::randn({1, 8, 8, 12});
    auto base = attn->forward(x);
    CHECK(base.sizes() == x.sizes());
    auto x2 = x.clone();
    x2.slice(2, 0, 4).slice(3, 4, 8).add_(torch::randn({1, 8, 4, 4}));  // window (0, 1)
    auto changed = (attn->forward(x2) - base).abs().sum(1)[0] > 1e-6;
    CHECK(changed.slice(0, 0, 4).slice(1, 4, 8).all().item<bool>());
    CHECK(changed.sum().item<int64_t>() == 16);

    // Uneven grid: padded keys are masked, so the output matches the cropped computation
    // on the first full window.
    auto y = torch::randn({1, 8, 6, 5});
    auto out = attn->forward(y);
    CHECK(out.sizes() == y.sizes());
    CHECK(torch::isfinite(out).all().item<bool>());
    auto full = attn->forward(y.slice(2, 0, 4).slice(3, 0, 4).contiguous());
    CHECK(torch::allclose(out.slice(2, 0, 4).slice(3, 0, 4), full, 1e-5, 1e-6));
}

TEST_CASE("encoder and decoder follow the downsampling factor") {
    auto ckpt = glc::test::toy_checkpoint(4);
    auto& m = ckpt.model;
    torch::NoGradGuard no_grad;
    const int64_t f = ckpt.config.downsample_factor();
    for (auto [h, w] : {std::pair<int64_t, int64_t>{16, 16}, {17, 30}, {5, 3}, {1, 9}}) {
        auto x = torch::rand({1, 3, h, w});
        auto latent = encode_latent(m->encoder, x, ckpt.config, Padding::Reflect);
        CHECK(latent.size(1) == ckpt.config.latent_channels);
        CHECK(latent.size(2) == (h + f - 1) / f);
        CHECK(latent.size(3) == (w + f - 1) / f);
        CHECK(latent.size(2) == latent_extent(h, ckpt.config));
        auto x_hat = decode_latent(m->decoder, latent, ckpt.config, h, w);
        CHECK(x_hat.sizes() == torch::IntArrayRef({1, 3, h, w}));
        CHECK(x_hat.min().item<double>() >= 0.0);
        CHECK(x_hat.max().item<double>() <= 1.0);
    }
    CHECK_THROWS_AS(encode_latent(m->encoder, torch::rand({1, 3, 6, 8}), ckpt.config, Padding::None), ShapeError);
    CHECK_THROWS_AS(encode_latent(m->encoder, torch::rand({1, 1, 8, 8}), ckpt.config), ShapeError);
    auto bad = torch::zeros({1, ckpt.config.latent_channels, 2, 2});
    bad[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(decode_latent(m->decoder, bad, ckpt.config, 8, 8), NonFiniteError);
    CHECK_THROWS_AS(decode_latent(m->decoder, torch::zeros({1, ckpt.config.latent_channels, 2, 2}), ckpt.config, 9, 8),
                    ShapeError);
}

TEST_CASE("padding reflects when possible and replicates otherwise") {
    auto x = torch::arange(9, torch::kFloat).view({1, 1, 3, 3});
    auto p = pad_to_multiple(x, 4);
    CHECK(p.sizes() == torch::IntArrayRef({1, 1, 4, 4}));
    CHECK(p[0][0][0][3].item<float>() == 1.0f);
    CHECK(p[0][0][3][0].item<float>() == 3.0f);
    // Too small to reflect 2 -> 4: edge replication.
    auto small = torch::arange(6, torch::kFloat).view({1, 1, 2, 3});
    auto q = pad_to_multiple(small, 4);
    CHECK(q[0][0][0][3].item<float>() == 2.0f);
    CHECK(q[0][0][3][0].item<float>() == 3.0f);
    CHECK(pad_to_multiple(x, 1).sizes() == x.sizes());
}

TEST_CASE("codebook module exposes size and dimension") {
    Codebook cb(12, 5);
    CHECK(cb->size() == 12);
    CHECK(cb->dim() == 5);
    auto vq = cb->forward(torch::randn({1, 5, 2, 2}));
    CHECK(vq.indices.max().item<int64_t>() < 12);
}
