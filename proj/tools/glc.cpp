// glc: command-line front end for the codec, training, evaluation and applications.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "glc/applications.hpp"
#include "glc/codec.hpp"
#include "glc/errors.hpp"
#include "glc/evaluation.hpp"
#include "glc/image_io.hpp"
#include "glc/metrics.hpp"
#include "glc/training.hpp"

namespace {

using namespace glc;

std::vector<int> parse_rates(const std::string& list) {
    std::vector<int> rates;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            rates.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw InvalidArgument("bad rate list '" + list + "'");
        }
    }
    if (rates.empty()) throw InvalidArgument("empty rate list");
    return rates;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
}

ImageSet dataset_from(const std::string& dir, int synthetic, int size, std::uint64_t seed) {
    if (!dir.empty()) return load_image_dir(dir);
    if (synthetic > 0) return synthetic_images(synthetic, size, seed);
    throw InvalidArgument("give a dataset directory (-d) or --synthetic N");
}

struct EncodeArgs {
    std::string input, output, model, coder = "reference", dump;
    int rate = 0;
};

void add_encode_options(CLI::App* cmd, EncodeArgs& a) {
    cmd->add_option("-i,--input", a.input, "input image (.png/.ppm)")->required();
    cmd->add_option("-o,--output", a.output, "output .glc file")->required();
    cmd->add_option("-m,--model", a.model, "checkpoint")->required();
    cmd->add_option("-q,--rate", a.rate, "rate index")->default_val(0);
    cmd->add_option("--coder", a.coder, "entropy coder: reference|native (GLC_CODER overrides)")
        ->check(CLI::IsMember({"reference", "native"}));
    cmd->add_option("--dump-yhat", a.dump, "write the quantized code y^ as text");
}

int run_encode(const EncodeArgs& a) {
    auto ckpt = load_checkpoint(a.model);
    const auto image = load_image(a.input);
    const auto coder = resolve_coder_kind(parse_coder_kind(a.coder));
    auto result = encode_image(ckpt.model, image, {RateIndex{a.rate}, coder});
    write_file_bytes(a.output, result.bytes);
    if (!a.dump.empty()) write_y_hat_dump(result.y_hat, a.dump);
    std::printf("bytes=%zu bpp=%.6f coder=%s code_predictor_evaluations=%lld\n", result.bytes.size(), result.bpp(),
                to_string(coder).c_str(), static_cast<long long>(CodePredictorImpl::evaluations()));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GLC generative latent image codec"};
    app.require_subcommand(1);

    // encode
    EncodeArgs enc;
    add_encode_options(app.add_subcommand("encode", "compress an image to a .glc stream"), enc);

    // decode
    auto* decode = app.add_subcommand("decode", "reconstruct an image from a .glc stream");
    std::string dec_in, dec_out, dec_model, dec_style, dec_coder = "reference", dec_dump;
    decode->add_option("-i,--input", dec_in, "input .glc file")->required();
    decode->add_option("-o,--output", dec_out, "output image (.png/.ppm)")->required();
    decode->add_option("-m,--model", dec_model, "checkpoint")->required();
    decode->add_option("--decoder", dec_style, "checkpoint whose decoder replaces the codec decoder");
    decode->add_option("--coder", dec_coder, "entropy coder: reference|native")->check(CLI::IsMember({"reference", "native"}));
    decode->add_option("--dump-yhat", dec_dump, "write the decoded y^ as text");

    // eval
    auto* eval = app.add_subcommand("eval", "rate-distortion evaluation over a directory");
    std::string eval_dir, eval_model, eval_rates = "0,1,2,3", eval_report, eval_coder = "reference";
    bool eval_patches = false, eval_baseline = false;
    eval->add_option("-d,--dataset", eval_dir, "image directory")->required();
    eval->add_option("-m,--model", eval_model, "checkpoint")->required();
    eval->add_option("-q,--rates", eval_rates, "comma-separated rate indices");
    eval->add_flag("--patches", eval_patches, "evaluate 256x256 patches (grid plus 128-shifted grid)");
    eval->add_option("--report", eval_report, "write the report as JSON");
    eval->add_flag("--baseline", eval_baseline, "also report fixed-length indices-map coding");
    eval->add_option("--coder", eval_coder, "entropy coder")->check(CLI::IsMember({"reference", "native"}));

    // train
    auto* train = app.add_subcommand("train", "run one training stage");
    int train_stage_no = 1;
    std::string train_config, train_resume, train_out, train_prior;
    train->add_option("--stage", train_stage_no, "stage 1, 2 or 3")->required()->check(CLI::Range(1, 3));
    train->add_option("--config", train_config, "training config (JSON)")->required();
    train->add_option("--resume", train_resume, "input checkpoint (required for stages 2 and 3)");
    train->add_option("-o,--output", train_out, "output checkpoint (default stage<N>.ckpt)");
    train->add_option("--hyper-prior", train_prior, "switch the resumed model's hyper prior before training")
        ->check(CLI::IsMember({"categorical", "factorized"}));

    // bdrate
    auto* bdrate = app.add_subcommand("bdrate", "Bjontegaard delta rate between two eval reports");
    std::string bd_ref, bd_test, bd_metric = "psnr";
    bdrate->add_option("--ref", bd_ref, "reference report")->required();
    bdrate->add_option("--test", bd_test, "test report")->required();
    bdrate->add_option("--metric", bd_metric, "metric column");

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic toy image set");
    std::string synth_out;
    int synth_count = 10, synth_size = 64;
    std::uint64_t synth_seed = 1;
    synth->add_option("-o,--output", synth_out, "output directory")->required();
    synth->add_option("-n,--count", synth_count, "number of images");
    synth->add_option("--size", synth_size, "image side in pixels");
    synth->add_option("--seed", synth_seed, "generator seed");

    // app ...
    auto* apps = app.add_subcommand("app", "latent-space applications");
    apps->require_subcommand(1);
    auto* rest_train = apps->add_subcommand("train-restoration", "train a denoising encoder on a frozen codec");
    std::string rt_model, rt_dir, rt_out;
    int rt_synthetic = 0, rt_size = 64;
    RestorationConfig rt_cfg;
    rest_train->add_option("-m,--model", rt_model, "codec checkpoint")->required();
    rest_train->add_option("-d,--dataset", rt_dir, "clean image directory");
    rest_train->add_option("--synthetic", rt_synthetic, "use N synthetic images instead of a directory");
    rest_train->add_option("--size", rt_size, "synthetic image side");
    rest_train->add_option("-o,--output", rt_out, "output checkpoint")->required();
    rest_train->add_option("--steps", rt_cfg.steps, "training steps");
    rest_train->add_option("--sigma", rt_cfg.noise_sigma, "Gaussian noise sigma in [0, 1] units");
    rest_train->add_option("--lr", rt_cfg.learning_rate, "learning rate");
    rest_train->add_option("--seed", rt_cfg.seed, "seed");
    rest_train->add_flag("--code-prediction", rt_cfg.code_prediction, "add the code-prediction term");

    EncodeArgs rest_enc;
    add_encode_options(apps->add_subcommand("encode-restoration", "encode a degraded image with a restoration checkpoint"),
                       rest_enc);

    auto* style_train = apps->add_subcommand("train-style", "train a stylization decoder on a frozen codec");
    std::string st_model, st_style, st_dir, st_out;
    int st_synthetic = 0, st_size = 64;
    StyleConfig st_cfg;
    style_train->add_option("-m,--model", st_model, "codec checkpoint")->required();
    style_train->add_option("--style", st_style, "style image")->required();
    style_train->add_option("-d,--dataset", st_dir, "content image directory");
    style_train->add_option("--synthetic", st_synthetic, "use N synthetic content images");
    style_train->add_option("--size", st_size, "synthetic image side");
    style_train->add_option("-o,--output", st_out, "output checkpoint")->required();
    style_train->add_option("--steps", st_cfg.steps, "training steps");
    style_train->add_option("--style-weight", st_cfg.style_weight, "style loss weight");
    style_train->add_option("--content-weight", st_cfg.content_weight, "content loss weight");
    style_train->add_option("--lr", st_cfg.learning_rate, "learning rate");
    style_train->add_option("--seed", st_cfg.seed, "seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("encode")) return run_encode(enc);

        if (app.got_subcommand(decode)) {
            auto ckpt = load_checkpoint(dec_model);
            std::optional<Checkpoint> style;
            DecodeOptions options;
            options.coder = resolve_coder_kind(parse_coder_kind(dec_coder));
            if (!dec_style.empty()) {
                style = load_checkpoint(dec_style);
                if (!(style->config == ckpt.config)) throw ModelMismatch("--decoder checkpoint has a different architecture");
                options.decoder = &style->model->decoder;
            }
            auto result = decode_stream(ckpt.model, read_file_bytes(dec_in), options);
            save_image(result.image, dec_out);
            if (!dec_dump.empty()) write_y_hat_dump(result.y_hat, dec_dump);
            std::printf("decoded %ux%u code_predictor_evaluations=%lld\n", result.header.orig_width,
                        result.header.orig_height, static_cast<long long>(CodePredictorImpl::evaluations()));
            return 0;
        }

        if (app.got_subcommand(eval)) {
            auto ckpt = load_checkpoint(eval_model);
            EvalOptions options;
            options.rates = parse_rates(eval_rates);
            options.patches = eval_patches;
            options.coder = resolve_coder_kind(parse_coder_kind(eval_coder));
            auto report = evaluate_dataset(ckpt.model, load_image_dir(eval_dir), options);
            auto j = report_to_json(report);
            for (const auto& row : j["rows"])
                std::printf("q=%d bpp=%.6f psnr=%.4f ms_ssim=%.6f latent_mse=%.6g\n", row["q"].get<int>(),
                            row["bpp"].get<double>(), row["psnr"].get<double>(), row["ms_ssim"].get<double>(),
                            row["latent_mse"].get<double>());
            if (eval_baseline) {
                const auto base = indices_map_baseline(ckpt, load_image_dir(eval_dir));
                j["indices_map"] = {{"bpp", base.bpp}, {"latent_mse", base.metrics.at("latent_mse")}};
                std::printf("indices_map bpp=%.6f latent_mse=%.6g\n", base.bpp, base.metrics.at("latent_mse"));
            }
            if (!eval_report.empty()) write_json(j, eval_report);
            return 0;
        }

        if (app.got_subcommand(train)) {
            auto config = load_train_config(train_config);
            config.stage = train_stage_no;
            std::optional<Checkpoint> input;
            if (!train_resume.empty()) input = load_checkpoint(train_resume);
            if (!train_prior.empty()) {
                if (!input) throw InvalidArgument("--hyper-prior needs --resume");
                input = with_hyper_prior(*input, train_prior == "factorized" ? HyperPrior::Factorized
                                                                             : HyperPrior::Categorical,
                                         config.seed);
            }
            const auto data = load_training_data(config);
            auto ckpt = train_stage(config, data, std::move(input));
            const auto out = train_out.empty() ? "stage" + std::to_string(train_stage_no) + ".ckpt" : train_out;
            save_checkpoint(ckpt, out);
            std::printf("stage %d done: %d steps on %zu images -> %s\n", train_stage_no, config.steps, data.size(),
                        out.c_str());
            return 0;
        }

        if (app.got_subcommand(bdrate)) {
            const auto ref = curve_from_report(read_json(bd_ref), bd_metric);
            const auto test = curve_from_report(read_json(bd_test), bd_metric);
            std::printf("bd_rate=%.4f%%\n", bd_rate(ref, test));
            return 0;
        }

        if (app.got_subcommand(synth)) {
            save_image_dir(synthetic_images(synth_count, synth_size, synth_seed), synth_out);
            return 0;
        }

        if (rest_train->parsed()) {
            auto codec = load_checkpoint(rt_model);
            auto out = train_restoration_encoder(codec, dataset_from(rt_dir, rt_synthetic, rt_size, 1), rt_cfg);
            save_checkpoint(out, rt_out);
            std::printf("restoration encoder -> %s\n", rt_out.c_str());
            return 0;
        }
        if (apps->got_subcommand("encode-restoration")) return run_encode(rest_enc);
        if (style_train->parsed()) {
            auto codec = load_checkpoint(st_model);
            auto out = train_style_decoder(codec, load_image(st_style), dataset_from(st_dir, st_synthetic, st_size, 1),
                                           st_cfg);
            save_checkpoint(out, st_out);
            std::printf("style decoder -> %s\n", st_out.c_str());
            return 0;
        }
    } catch (const glc::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const c10::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what_without_backtrace());
        return 1;
    }
    return 0;
}
