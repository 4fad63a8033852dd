// aimcsim command line: calibration, characterization, network compilation,
// training/evaluation with the simulator in the loop, and cost estimation.
//
// exit codes: 0 success, 2 usage, 3 config/dataset ingestion, 4 computation
// or calibration failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "aimc/calibration.hpp"
#include "aimc/config.hpp"
#include "aimc/cost.hpp"
#include "aimc/train.hpp"

namespace fs = std::filesystem;
using namespace aimc;

namespace {

// one process per experiment directory
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".aimcsim.lock") {
        fs::create_directories(dir);
        if (fs::exists(path_))
            throw ConfigError("experiment directory is locked by another run: " + path_.string() +
                              " (remove the lockfile if that run is gone)");
        std::ofstream(path_) << "locked\n";
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

Config load_cfg(const std::string& config_flag) {
    if (!config_flag.empty()) return load_config(config_flag);
    const auto env = default_config_path();
    if (!env.empty()) return load_config(env);
    return Config{};
}

Dataset load_split(const fs::path& dir, bool train) {
    const fs::path images = dir / (train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte");
    const fs::path labels = dir / (train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte");
    return load_mnist(images, labels);
}

ModelSpec spec_by_name(const std::string& name) {
    if (name == "dense") return ModelSpec::mnist_dense();
    if (name == "conv") return ModelSpec::mnist_conv();
    throw ConfigError("unknown model '" + name + "' (expected dense or conv)");
}

AnalogCore make_core(const Config& cfg, std::uint64_t seed) {
    return AnalogCore::make(seed, cfg.variation, cfg.physics);
}

// calibrate in-process or load a stored calibration, then optionally detune
void setup_calibration(AnalogCore& core, const Config& cfg, const std::string& calibration_file,
                       double decalibrate, Rng& rng) {
    if (!calibration_file.empty()) {
        core.set_calibration(CalibrationState::load(calibration_file));
    } else {
        std::fprintf(stderr, "calibrating core (no --calibration file given)...\n");
        calibrate_drivers(core, cfg.calibration.driver_tolerance_ns, rng, cfg.calibration);
        calibrate_neurons(core, cfg.calibration.target_amplitude_lsb, cfg.calibration.tolerance_cv,
                          rng, cfg.calibration);
    }
    if (decalibrate > 0.0)
        core.set_calibration(blend_decalibration(core.calibration(), decalibrate));
}

MatF warmup_images(const Dataset& ds, int count) {
    return to_float_images(ds, 0, std::min(count, ds.count));
}

Backend backend_by_name(const std::string& name) {
    if (name == "software-float") return Backend::software_float;
    if (name == "software-quantized") return Backend::software_quantized;
    if (name == "simulator") return Backend::simulator;
    throw ConfigError("unknown backend '" + name + "'");
}

void save_plan_json(const CompiledModel& model, const fs::path& path) {
    std::ofstream os(path);
    os << "{\n  \"tile_execs\": " << model.tile_execs << ",\n  \"runs\": " << model.runs
       << ",\n  \"layers\": [\n";
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& cl = model.layers[l];
        os << "    {\"in_dim\": " << cl.in_dim << ", \"out_dim\": " << cl.out_dim
           << ", \"patch_execs\": " << cl.patch_execs << ", \"mode\": \""
           << (cl.mode == AdcMode::relu ? "relu" : "signed") << "\""
           << ", \"row_tiles\": " << cl.plan.row_tiles << ", \"col_tiles\": " << cl.plan.col_tiles
           << ", \"weight_scale\": " << cl.qweights.scale << ", \"input_scale\": " << cl.input_scale
           << "}" << (l + 1 < model.layers.size() ? ",\n" : "\n");
    }
    os << "  ]\n}\n";
}

// calibrated core plus executor for the simulator backend
struct SimBundle {
    std::unique_ptr<AnalogCore> core;
    std::unique_ptr<SimExecutor> sim;
};

std::optional<SimBundle> make_sim(const Config& cfg, Backend backend, CompiledModel& model,
                                  std::uint64_t seed, const std::string& calibration_file,
                                  double decalibrate, const MatF& warmup,
                                  const std::vector<MatF>& weights) {
    if (backend != Backend::simulator) return std::nullopt;
    SimBundle bundle;
    bundle.core = std::make_unique<AnalogCore>(make_core(cfg, seed));
    Rng rng = Rng(seed).fork(3);
    setup_calibration(*bundle.core, cfg, calibration_file, decalibrate, rng);
    bundle.sim = std::make_unique<SimExecutor>(*bundle.core, model, cfg.mac);
    init_hw_gains(model, bundle.core->physics(), cfg.mac.resends);
    fit_hw_gains(model, *bundle.sim, warmup, weights, Rng(seed).fork(4).seed());
    return std::optional<SimBundle>(std::move(bundle));
}

int run_calibrate(const Config& cfg, std::uint64_t seed, const fs::path& out) {
    DirLock lock(out);
    auto core = make_core(cfg, seed);
    Rng rng = Rng(seed).fork(1);

    const auto pre =
        measure_stimulus_response(core, cfg.calibration.stimulus, +1, 30, rng, cfg.calibration);
    calibrate_drivers(core, cfg.calibration.driver_tolerance_ns, rng, cfg.calibration);
    calibrate_neurons(core, cfg.calibration.target_amplitude_lsb, cfg.calibration.tolerance_cv, rng,
                      cfg.calibration);
    const auto post_pos =
        measure_stimulus_response(core, cfg.calibration.stimulus, +1, 100, rng, cfg.calibration);
    const auto post_neg =
        measure_stimulus_response(core, cfg.calibration.stimulus, -1, 100, rng, cfg.calibration);

    core.calibration().save(out / "calibration.txt");

    std::ofstream csv(out / "calibration_responses.csv");
    csv << "neuron,pre,post_pos,post_neg\n";
    for (std::size_t n = 0; n < pre.size(); ++n)
        csv << n << ',' << pre[n] << ',' << post_pos[n] << ',' << post_neg[n] << '\n';

    std::printf("pre-calibration response CV:  %.4f\n", response_cv(pre));
    std::printf("post-calibration response CV: %.4f (pos) / %.4f (neg)\n", response_cv(post_pos),
                response_cv(post_neg));
    std::printf("calibration written to %s\n", (out / "calibration.txt").c_str());
    return 0;
}

int run_characterize(const Config& cfg, std::uint64_t seed, const fs::path& out, int repeats,
                     int resends, const std::string& calibration_file, bool raw) {
    DirLock lock(out);
    auto core = make_core(cfg, seed);
    Rng rng = Rng(seed).fork(2);
    if (!raw) setup_calibration(core, cfg, calibration_file, 0.0, rng);

    CharacterizationSweep sweep;
    sweep.repeats = repeats;
    sweep.resends = resends;
    const auto rep = characterize(core, sweep, rng);
    rep.save_csv(out / "characterization.csv");
    std::printf("characterization (%d levels x %d columns, %d repeats) -> %s\n",
                static_cast<int>(rep.levels.size()), rep.columns, repeats,
                (out / "characterization.csv").c_str());
    return 0;
}

int run_cost(const Config& cfg, const std::string& model_name, int batch) {
    const auto spec = spec_by_name(model_name);
    const auto weights = init_weights(spec, 1);
    MatF warmup(1, spec.input_dim());
    for (auto& x : warmup.v) x = 0.5f;
    const auto model = compile_model(spec, weights, warmup);
    const auto rep = estimate_cost(model, cfg.timing, batch);

    std::printf("model %s: %d tile executions, %d runs\n", model_name.c_str(), rep.tile_execs,
                rep.runs);
    std::printf("per image: %.3f ms, %.3f mJ\n", rep.runtime_ms, rep.energy_mj);
    std::printf("batch of %d: %.3f ms, %.3f mJ\n", rep.batch, rep.batch_runtime_ms,
                rep.batch_energy_mj);
    for (const auto& phase : rep.breakdown)
        std::printf("  %-32s %10.3f ms %10.3f mJ\n", phase.name.c_str(), phase.runtime_ms,
                    phase.energy_mj);
    return 0;
}

int run_compile(const Config& cfg, const std::string& model_name, std::uint64_t seed,
                const fs::path& out, const std::string& weights_file, const std::string& mnist) {
    DirLock lock(out);
    const auto spec = spec_by_name(model_name);
    auto weights =
        weights_file.empty() ? init_weights(spec, seed) : load_master_weights(weights_file);

    MatF warmup;
    if (!mnist.empty()) {
        warmup = warmup_images(load_split(mnist, true), cfg.training.warmup_images);
    } else {
        std::fprintf(stderr, "no --mnist directory: input scales fitted on synthetic images\n");
        Rng rng(seed);
        warmup = MatF(64, spec.input_dim());
        for (auto& x : warmup.v) x = static_cast<float>(rng.uniform(0.0, 1.0));
    }

    auto model = compile_model(spec, weights, warmup, {}, cfg.training.weight_limit);
    std::vector<QuantizedMatrix> qlayers;
    for (const auto& l : model.layers) qlayers.push_back(l.qweights);
    save_quantized_model(out / "quantized.bin", qlayers);
    save_plan_json(model, out / "plan.json");
    std::printf("compiled %s: %d tile executions, %d runs -> %s\n", model_name.c_str(),
                model.tile_execs, model.runs, (out / "plan.json").c_str());
    return 0;
}

int run_train(const Config& cfg, const std::string& model_name, const std::string& backend_name,
              std::uint64_t seed, const fs::path& out, const std::string& mnist, int epochs,
              const std::string& resume, const std::string& calibration_file, double decalibrate) {
    DirLock lock(out);
    const Backend backend = backend_by_name(backend_name);
    const auto train_ds = load_split(mnist, true);
    std::optional<Dataset> test_ds;
    try {
        test_ds = load_split(mnist, false);
    } catch (const IngestError&) {
        std::fprintf(stderr, "test split not found, skipping per-epoch evaluation\n");
    }

    TrainState st;
    st.spec = spec_by_name(model_name);
    st.master = resume.empty() ? init_weights(st.spec, seed) : load_master_weights(resume);
    st.hyper.adam = cfg.training.adam;
    st.hyper.batch_size = cfg.training.batch_size;
    st.hyper.batches_per_epoch = cfg.training.batches_per_epoch;
    st.optimizer = Adam(st.master, st.hyper.adam);
    st.backend = backend;
    st.data_seed = seed;
    st.noise_seed = seed + 1;

    const MatF warmup = warmup_images(train_ds, cfg.training.warmup_images);
    auto model = compile_model(st.spec, st.master, warmup, {}, cfg.training.weight_limit);
    auto bundle =
        make_sim(cfg, backend, model, seed, calibration_file, decalibrate, warmup, st.master);

    std::ofstream metrics(out / "metrics.csv");
    metrics << "epoch,batch,loss,accuracy\n";
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto em = train_epoch(st, model, train_ds, bundle ? bundle->sim.get() : nullptr);
        double loss = 0.0, acc = 0.0;
        for (const auto& m : em) {
            metrics << epoch << ',' << m.batch_index << ',' << m.loss << ',' << m.accuracy << '\n';
            loss += m.loss;
            acc += m.accuracy;
        }
        std::printf("epoch %d: train loss %.4f, train accuracy %.4f\n", epoch, loss / em.size(),
                    acc / em.size());
        if (test_ds) {
            requantize(model, st.master);
            if (bundle) bundle->sim->set_weights(model);
            const auto ev = evaluate(model, st.master, *test_ds, backend, 1,
                                     bundle ? bundle->sim.get() : nullptr, st.noise_seed);
            std::printf("epoch %d: test accuracy %.4f\n", epoch, ev.accuracy);
        }
    }

    save_master_weights(out / "master.bin", st.master);
    requantize(model, st.master);
    std::vector<QuantizedMatrix> qlayers;
    for (const auto& l : model.layers) qlayers.push_back(l.qweights);
    save_quantized_model(out / "quantized.bin", qlayers);
    std::printf("checkpoints written to %s\n", out.c_str());
    return 0;
}

int run_evaluate(const Config& cfg, const std::string& model_name, const std::string& backend_name,
                 std::uint64_t seed, const fs::path& out, const std::string& mnist,
                 const std::string& weights_file, int repeats, const std::string& calibration_file,
                 double decalibrate) {
    DirLock lock(out);
    const Backend backend = backend_by_name(backend_name);
    const auto test_ds = load_split(mnist, false);

    MatF warmup;
    try {
        warmup = warmup_images(load_split(mnist, true), cfg.training.warmup_images);
    } catch (const IngestError&) {
        warmup = warmup_images(test_ds, cfg.training.warmup_images);
    }

    const auto spec = spec_by_name(model_name);
    auto weights =
        weights_file.empty() ? init_weights(spec, seed) : load_master_weights(weights_file);
    auto model = compile_model(spec, weights, warmup, {}, cfg.training.weight_limit);
    auto bundle = make_sim(cfg, backend, model, seed, calibration_file, decalibrate, warmup, weights);

    const auto res = evaluate(model, weights, test_ds, backend, repeats,
                              bundle ? bundle->sim.get() : nullptr, seed + 1);
    res.save_confusion_csv(out / "confusion.csv");
    if (repeats > 1)
        std::printf("accuracy: %.4f +- %.4f over %d repeats\n", res.accuracy_mean, res.accuracy_std,
                    repeats);
    else
        std::printf("accuracy: %.4f\n", res.accuracy);
    std::printf("confusion matrix -> %s\n", (out / "confusion.csv").c_str());
    return 0;
}

int run_decal_sweep(const Config& cfg, const std::string& model_name, std::uint64_t seed,
                    const fs::path& out, const std::string& mnist, const std::string& weights_file,
                    std::vector<double> factors, int repeats) {
    DirLock lock(out);
    const auto train_ds = load_split(mnist, true);
    const auto test_ds = load_split(mnist, false);
    const MatF warmup = warmup_images(train_ds, cfg.training.warmup_images);

    const auto spec = spec_by_name(model_name);
    auto base_weights =
        weights_file.empty() ? init_weights(spec, seed) : load_master_weights(weights_file);

    auto core = make_core(cfg, seed);
    Rng rng = Rng(seed).fork(5);
    calibrate_drivers(core, cfg.calibration.driver_tolerance_ns, rng, cfg.calibration);
    calibrate_neurons(core, cfg.calibration.target_amplitude_lsb, cfg.calibration.tolerance_cv, rng,
                      cfg.calibration);
    const auto calibrated = core.calibration();

    std::ofstream csv(out / "decalibration.csv");
    csv << "factor,pre_accuracy,pre_std,post_accuracy,post_std\n";
    for (double factor : factors) {
        core.set_calibration(blend_decalibration(calibrated, factor));

        TrainState st;
        st.spec = spec;
        st.master = base_weights;
        st.hyper.adam = cfg.training.adam;
        st.hyper.batch_size = cfg.training.batch_size;
        st.hyper.batches_per_epoch = cfg.training.batches_per_epoch;
        st.optimizer = Adam(st.master, st.hyper.adam);
        st.backend = Backend::simulator;
        st.data_seed = seed;
        st.noise_seed = seed + 1;

        auto model = compile_model(spec, st.master, warmup, {}, cfg.training.weight_limit);
        SimExecutor sim(core, model, cfg.mac);
        init_hw_gains(model, core.physics(), cfg.mac.resends);
        fit_hw_gains(model, sim, warmup, st.master, seed + 7);

        const auto pre =
            evaluate(model, st.master, test_ds, Backend::simulator, repeats, &sim, st.noise_seed);
        for (int e = 0; e < cfg.training.itl_epochs; ++e) train_epoch(st, model, train_ds, &sim);
        requantize(model, st.master);
        sim.set_weights(model);
        const auto post =
            evaluate(model, st.master, test_ds, Backend::simulator, repeats, &sim, st.noise_seed);

        csv << factor << ',' << pre.accuracy_mean << ',' << pre.accuracy_std << ','
            << post.accuracy_mean << ',' << post.accuracy_std << '\n';
        std::printf("factor %.2f: pre %.4f +- %.4f, post %.4f +- %.4f\n", factor, pre.accuracy_mean,
                    pre.accuracy_std, post.accuracy_mean, post.accuracy_std);
    }
    std::printf("sweep -> %s\n", (out / "decalibration.csv").c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"analog in-memory MAC accelerator simulator"};
    app.require_subcommand(1);

    std::string config_flag, mnist, out = "experiment", model = "dense";
    std::string backend, weights_file, calibration_file, resume;
    std::uint64_t seed = 1;
    int repeats = 1, epochs = 1, batch = 1, resends = 1;
    double decalibrate = 0.0;
    bool raw = false;
    std::vector<double> factors = {0.0, 0.5, 1.0};

    app.add_option("--config", config_flag, "config file (or AIMCSIM_CONFIG)");
    app.add_option("--seed", seed, "seed for every stochastic choice");

    auto* cal = app.add_subcommand("calibrate", "trim a fresh core and store the calibration");
    cal->add_option("--out", out);

    auto* chr = app.add_subcommand("characterize", "ramp/random weight sweep over input levels");
    chr->add_option("--out", out);
    chr->add_option("--repeats", repeats)->default_val(30);
    chr->add_option("--resends", resends)->default_val(1);
    chr->add_option("--calibration", calibration_file, "stored calibration file");
    chr->add_flag("--raw", raw, "characterize the uncalibrated core");

    auto* cmp = app.add_subcommand("compile", "quantize and partition a model");
    cmp->add_option("--model", model);
    cmp->add_option("--weights", weights_file, "master weight checkpoint");
    cmp->add_option("--mnist", mnist, "dataset directory for input scales");
    cmp->add_option("--out", out);

    auto* cst = app.add_subcommand("cost", "timing/energy estimate for a compiled model");
    cst->add_option("--model", model);
    cst->add_option("--batch", batch);

    auto* trn = app.add_subcommand("train", "train a model on the chosen backend");
    trn->add_option("--model", model);
    trn->add_option("--backend", backend)->default_val("software-float");
    trn->add_option("--mnist", mnist)->required();
    trn->add_option("--epochs", epochs);
    trn->add_option("--resume", resume, "master checkpoint to continue from");
    trn->add_option("--calibration", calibration_file);
    trn->add_option("--decalibrate", decalibrate, "blend factor toward the median state");
    trn->add_option("--out", out);

    auto* evl = app.add_subcommand("evaluate", "test-set accuracy and confusion matrix");
    evl->add_option("--model", model);
    evl->add_option("--backend", backend)->default_val("simulator");
    evl->add_option("--mnist", mnist)->required();
    evl->add_option("--weights", weights_file);
    evl->add_option("--repeats", repeats);
    evl->add_option("--calibration", calibration_file);
    evl->add_option("--decalibrate", decalibrate);
    evl->add_option("--out", out);

    auto* dcs =
        app.add_subcommand("decalibrate-sweep", "pre/post-ITL accuracy across blend factors");
    dcs->add_option("--model", model);
    dcs->add_option("--mnist", mnist)->required();
    dcs->add_option("--weights", weights_file);
    dcs->add_option("--factors", factors)->delimiter(',');
    dcs->add_option("--repeats", repeats);
    dcs->add_option("--out", out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const Config cfg = load_cfg(config_flag);
        if (cal->parsed()) return run_calibrate(cfg, seed, out);
        if (chr->parsed())
            return run_characterize(cfg, seed, out, repeats, resends, calibration_file, raw);
        if (cmp->parsed()) return run_compile(cfg, model, seed, out, weights_file, mnist);
        if (cst->parsed()) return run_cost(cfg, model, batch);
        if (trn->parsed())
            return run_train(cfg, model, backend, seed, out, mnist, epochs, resume,
                             calibration_file, decalibrate);
        if (evl->parsed())
            return run_evaluate(cfg, model, backend, seed, out, mnist, weights_file, repeats,
                                calibration_file, decalibrate);
        if (dcs->parsed())
            return run_decal_sweep(cfg, model, seed, out, mnist, weights_file, factors, repeats);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const IngestError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const CalibrationFailure& e) {
        std::fprintf(stderr, "calibration failure: %s\n", e.what());
        return 4;
    } catch (const ContractViolation& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
    return 0;
}
