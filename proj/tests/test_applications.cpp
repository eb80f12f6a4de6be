#include <doctest.h>

#include "glc/applications.hpp"
#include "glc/codec.hpp"
#include "glc/errors.hpp"
#include "glc/evaluation.hpp"
#include "test_util.hpp"

using namespace glc;

namespace {

const ImageSet& content() {
    static const ImageSet data = synthetic_images(8, 32, 3);
    return data;
}

}  // namespace

TEST_CASE("Gaussian noise has the requested spread and stays in range") {
    auto clean = torch::full({3, 64, 64}, 0.5);
    auto noisy = add_gaussian_noise(clean, 0.05, 1);
    CHECK((noisy - clean).std().item<double>() == doctest::Approx(0.05).epsilon(0.05));
    CHECK(torch::equal(noisy, add_gaussian_noise(clean, 0.05, 1)));
    auto extreme = add_gaussian_noise(clean, 2.0, 2);
    CHECK(extreme.min().item<double>() >= 0.0);
    CHECK(extreme.max().item<double>() <= 1.0);
}

TEST_CASE("restoration encoder replaces only E and its streams decode with the stock model") {
    auto codec = glc::test::toy_checkpoint(4);
    const auto codec_hash = parameter_hash(*codec.model);
    RestorationConfig cfg;
    cfg.steps = 3;
    cfg.batch_size = 4;
    cfg.crop = 32;
    cfg.code_prediction = true;
    int logged = 0;
    auto rest = train_restoration_encoder(codec, content(), cfg, [&](const nlohmann::json&) { ++logged; });
    CHECK(logged == 3);
    CHECK(parameter_hash(*codec.model) == codec_hash);
    CHECK(parameter_hash(*rest.model->encoder) != parameter_hash(*codec.model->encoder));
    CHECK(parameter_hash(*rest.model->decoder) == parameter_hash(*codec.model->decoder));
    CHECK(model_fingerprint(rest.model) == model_fingerprint(codec.model));
    CHECK(rest.provenance["application"]["kind"] == "restoration");

    auto noisy = add_gaussian_noise(content().images[0], kDefaultNoiseSigma, 9);
    auto enc = encode_image(rest.model, noisy, {RateIndex{1}});
    auto dec = decode_stream(codec.model, enc.bytes);
    CHECK(torch::equal(dec.y_hat, enc.y_hat));
    CHECK_THROWS_AS(train_restoration_encoder(codec, ImageSet{}, cfg), InvalidArgument);
}

TEST_CASE("style decoder starts fresh and leaves the codec untouched") {
    auto codec = glc::test::toy_checkpoint(5);
    const auto codec_hash = parameter_hash(*codec.model);
    StyleConfig cfg;
    cfg.steps = 3;
    cfg.batch_size = 4;
    cfg.crop = 32;
    auto style = glc::test::random_image(32, 32, 6);
    auto styled = train_style_decoder(codec, style, content(), cfg);
    CHECK(parameter_hash(*codec.model) == codec_hash);
    CHECK(parameter_hash(*styled.model->decoder) != parameter_hash(*codec.model->decoder));
    CHECK(parameter_hash(*styled.model->encoder) == parameter_hash(*codec.model->encoder));
    CHECK(parameter_hash(*styled.model->transform) == parameter_hash(*codec.model->transform));
    CHECK(styled.config == codec.config);

    auto enc = encode_image(codec.model, content().images[1]);
    auto dec = decode_stream(codec.model, enc.bytes, {CoderKind::Reference, &styled.model->decoder});
    CHECK(dec.image.sizes() == torch::IntArrayRef({1, 3, 32, 32}));
    CHECK_THROWS_AS(train_style_decoder(codec, torch::Tensor(), content(), cfg), InvalidArgument);
    CHECK_THROWS_AS(train_style_decoder(codec, style, ImageSet{}, cfg), InvalidArgument);
}

TEST_CASE("evaluation reports real bitstream rates") {
    auto ckpt = glc::test::toy_checkpoint(6);
    ImageSet set = synthetic_images(2, 24, 8);
    EvalOptions opts;
    opts.rates = {0, 3};
    auto report = evaluate_dataset(ckpt.model, set, opts);
    CHECK(report.images.size() == 4);
    CHECK(report.aggregate.size() == 2);
    for (const auto& e : report.images) {
        auto enc = encode_image(ckpt.model, set.images[e.name == set.names[0] ? 0 : 1], {RateIndex{e.rate}});
        CHECK(e.point.bpp == doctest::Approx(enc.bpp()));
        CHECK(e.point.metrics.count("psnr") == 1);
        CHECK(e.point.metrics.count("ms_ssim") == 1);
    }
    auto j = report_to_json(report);
    auto c = curve_from_report(j, "psnr");
    CHECK(c.size() == 2);
    CHECK_THROWS_AS(curve_from_report(j, "fid"), InvalidArgument);
    CHECK_THROWS_AS(evaluate_dataset(ckpt.model, ImageSet{}, opts), InvalidArgument);

    opts.patches = true;
    CHECK_THROWS_AS(evaluate_dataset(ckpt.model, set, opts), InvalidArgument);

    auto base = indices_map_baseline(ckpt, set);
    // 6 x 6 latent positions of 6 bits over 24 x 24 pixels.
    CHECK(base.bpp == doctest::Approx(6.0 * 6.0 * 6.0 / (24.0 * 24.0)));
    auto est = estimated_rd_point(ckpt.model, set, 2);
    CHECK(est.bpp > 0.0);
    auto fac = glc::test::toy_checkpoint(6, HyperPrior::Factorized);
    CHECK(estimated_rd_point(fac.model, set, 2).bpp > 0.0);
}
