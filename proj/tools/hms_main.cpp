// Command-line front end for the sparse depth completion toolkit:
// data generation, training, prediction, evaluation, corruption protocols,
// robustness sweeps, gradient checking and the invariant self-test.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hms/evaluation.hpp"
#include "hms/gradcheck.hpp"
#include "hms/rng.hpp"
#include "hms/selftest.hpp"
#include "hms/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace hms;

namespace {

HmsNetConfig arch_config(const std::string& arch) {
    HmsNetConfig cfg;
    if (arch == "full") return cfg;
    if (arch == "toy") return toy_net_config();
    if (arch == "baseline")
        cfg.variant = NetVariant::baseline;
    else if (arch == "up_only")
        cfg.variant = NetVariant::up_only;
    else if (arch == "down_only")
        cfg.variant = NetVariant::down_only;
    else if (arch == "no_mid_flow")
        cfg.variant = NetVariant::no_mid_flow;
    else
        throw ConfigError("unknown arch '" + arch +
                          "' (full|baseline|up_only|down_only|no_mid_flow|toy)");
    return cfg;
}

std::string sample_name(int i, const char* prefix) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d.pgm", prefix, i);
    return buf;
}

struct GenArgs {
    std::string out;
    int count = 10;
    int size = 64;
    int height = 0, width = 0;
    double density = 0.05;
    int exact = -1;
    std::uint64_t seed = 0;
    double min_depth = 1.0, max_depth = 100.0;
    double ground_near = 3.0, ground_far_frac = 0.9;
    int min_objects = 2, max_objects = 6;
};

int cmd_gen(const GenArgs& a) {
    const int H = a.height > 0 ? a.height : a.size;
    const int W = a.width > 0 ? a.width : a.size;
    std::cout << "# gen: out=" << a.out << " count=" << a.count << " height=" << H
              << " width=" << W << " density=" << a.density << " exact=" << a.exact
              << " depth=[" << a.min_depth << "," << a.max_depth << "] objects=["
              << a.min_objects << "," << a.max_objects << "] seed=" << a.seed << "\n";
    fs::create_directories(a.out);
    std::vector<ManifestEntry> manifest;
    for (int i = 0; i < a.count; ++i) {
        SceneSpec spec;
        spec.height = H;
        spec.width = W;
        spec.seed = mix_seed(a.seed, std::uint64_t(i));
        spec.min_depth = a.min_depth;
        spec.max_depth = a.max_depth;
        spec.ground_near = a.ground_near;
        spec.ground_far_frac = a.ground_far_frac;
        spec.min_objects = a.min_objects;
        spec.max_objects = a.max_objects;
        spec.density = a.density;
        const MaskedMap gt = generate_scene(spec);
        const std::uint64_t sseed = mix_seed(a.seed, 0x10000ULL + std::uint64_t(i));
        const MaskedMap input = a.exact >= 0 ? sparsify_exact(gt, a.exact, sseed)
                                             : sparsify(gt, a.density, sseed);
        const std::string gt_name = sample_name(i, "gt");
        const std::string in_name = sample_name(i, "in");
        write_depth_pgm(gt, (fs::path(a.out) / gt_name).string());
        write_depth_pgm(input, (fs::path(a.out) / in_name).string());
        manifest.push_back({in_name, gt_name});
    }
    write_manifest((fs::path(a.out) / "manifest.txt").string(), manifest);
    std::cout << "wrote " << a.count << " sample pairs to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string arch = "full";
    std::string resume;
    TrainConfig cfg;
    double val_fraction = 0.2;
};

int cmd_train(const TrainArgs& a) {
    std::cout << "# train: data=" << a.data << " out=" << a.out << " arch=" << a.arch
              << " epochs=" << a.cfg.epochs << " lr0=" << a.cfg.lr0 << " poly_power="
              << a.cfg.poly_power << " batch=" << a.cfg.batch_size << " beta1=" << a.cfg.beta1
              << " beta2=" << a.cfg.beta2 << " eps_adam=" << a.cfg.eps_adam << " patience="
              << a.cfg.loss_floor_patience << " val_fraction=" << a.val_fraction
              << " seed=" << a.cfg.seed << (a.resume.empty() ? "" : " resume=" + a.resume)
              << "\n";
    const std::vector<DepthSample> data = load_dataset(a.data);
    for (const DepthSample& s : data) validate_depth_sample(s);
    const HmsNet net(arch_config(a.arch));

    ParamStore store;
    TrainOptions opts;
    opts.val_fraction = a.val_fraction;
    if (!a.resume.empty()) {
        LoadedCheckpoint ck = load_checkpoint(a.resume);
        store = std::move(ck.store);
        check_params_match(net.graph(), store);
        opts.resume = true;
    } else {
        net.init_params(store, a.cfg.seed);
    }

    fs::create_directories(a.out);
    opts.best_checkpoint_path = (fs::path(a.out) / "best.ckpt").string();
    opts.last_checkpoint_path = (fs::path(a.out) / "last.ckpt").string();
    std::ofstream log_file(fs::path(a.out) / "train.log",
                           opts.resume ? std::ios::app : std::ios::out);

    struct Tee : std::ostream, std::streambuf {
        std::ostream &a, &b;
        Tee(std::ostream& x, std::ostream& y) : std::ostream(this), a(x), b(y) {}
        int overflow(int c) override {
            a.put(char(c));
            b.put(char(c));
            return c;
        }
    } tee(std::cout, log_file);
    opts.log_stream = &tee;

    const TrainSummary summary = train(net, store, data, a.cfg, opts);
    std::cout << "best val rmse " << summary.best_val_rmse_mm << " mm at epoch "
              << summary.best_epoch << "; checkpoints in " << a.out << "\n";
    return 0;
}

struct PredictArgs {
    std::string ckpt;
    std::string data;
    std::string out;
    std::string arch = "full";
};

int cmd_predict(const PredictArgs& a) {
    std::cout << "# predict: ckpt=" << a.ckpt << " data=" << a.data << " out=" << a.out
              << " arch=" << a.arch << "\n";
    const HmsNet net(arch_config(a.arch));
    LoadedCheckpoint ck = load_checkpoint(a.ckpt);
    check_params_match(net.graph(), ck.store);
    const auto entries = read_manifest(a.data);
    const std::vector<DepthSample> data = load_dataset(a.data);
    fs::create_directories(a.out);
    const fs::path base = fs::path(a.data).parent_path();
    std::vector<ManifestEntry> pred_manifest;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ForwardResult res = net.forward(data[i].input, ck.store);
        MaskedMap pred;
        pred.features = res.prediction;
        pred.mask = res.prediction_mask;
        const std::string name = "pred_" + data[i].id + ".pgm";
        write_depth_pgm(pred, (fs::path(a.out) / name).string());
        const fs::path gt(entries[i].gt_path);
        pred_manifest.push_back(
            {name, fs::absolute(gt.is_absolute() ? gt : base / gt).string()});
    }
    write_manifest((fs::path(a.out) / "pred_manifest.txt").string(), pred_manifest);
    std::cout << "wrote " << data.size() << " predictions to " << a.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string pred_manifest;
    std::string arch = "full";
    std::string tsv;
    bool per_sample = false;
};

int cmd_eval(const EvalArgs& a) {
    std::cout << "# eval: ckpt=" << a.ckpt << " data=" << a.data
              << " pred_manifest=" << a.pred_manifest << " arch=" << a.arch << "\n";
    MetricAccumulator acc;
    if (!a.pred_manifest.empty()) {
        const auto entries = read_manifest(a.pred_manifest);
        const fs::path base = fs::path(a.pred_manifest).parent_path();
        const auto resolve = [&](const std::string& p) {
            const fs::path fp(p);
            return fp.is_absolute() ? fp.string() : (base / fp).string();
        };
        for (const ManifestEntry& e : entries) {
            const MaskedMap pred = read_depth_pgm(resolve(e.input_path));
            const MaskedMap gt = read_depth_pgm(resolve(e.gt_path));
            acc.add(pred.features, gt, fs::path(e.input_path).stem().string());
        }
    } else if (!a.ckpt.empty() && !a.data.empty()) {
        const HmsNet net(arch_config(a.arch));
        LoadedCheckpoint ck = load_checkpoint(a.ckpt);
        check_params_match(net.graph(), ck.store);
        for (const DepthSample& s : load_dataset(a.data)) {
            const ForwardResult res = net.forward(s.input, ck.store);
            acc.add(res.prediction, s.gt, s.id);
        }
    } else {
        throw ConfigError("eval: pass either --pred-manifest or both --ckpt and --data");
    }
    const MetricReport rep = acc.report();
    std::cout << rep.to_table();
    std::cout << "tsv\t" << rep.to_tsv_line() << "\n";
    if (a.per_sample)
        for (const SampleMetrics& s : rep.per_sample)
            std::cout << "sample\t" << s.id << "\t" << s.rmse_mm << "\t" << s.mae_mm << "\t"
                      << s.rel << "\t" << s.valid_count << "\t"
                      << (s.inverse_ok ? "inverse_ok" : "inverse_failed") << "\n";
    if (!a.tsv.empty()) {
        std::ofstream out(a.tsv);
        out << "rmse_mm\tmae_mm\tirmse_1/km\timae_1/km\trel\tvalid_px\n"
            << rep.to_tsv_line() << "\n";
    }
    return 0;
}

struct CorruptArgs {
    std::string data;
    std::string out;
    std::string protocol = "scene_noise";
    double sigma = 10.0;
    double keep = 0.5;
    std::uint64_t seed = 0;
};

int cmd_corrupt(const CorruptArgs& a) {
    std::cout << "# corrupt: data=" << a.data << " out=" << a.out << " protocol=" << a.protocol
              << " sigma=" << a.sigma << " keep=" << a.keep << " seed=" << a.seed << "\n";
    const Protocol proto = protocol_from_string(a.protocol);
    const auto entries = read_manifest(a.data);
    const std::vector<DepthSample> data = load_dataset(a.data);
    const fs::path base = fs::path(a.data).parent_path();
    fs::create_directories(a.out);
    std::vector<ManifestEntry> manifest;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::uint64_t s = mix_seed(a.seed, i);
        MaskedMap corrupted;
        switch (proto) {
            case Protocol::scene_noise:
                corrupted = corrupt_scene_noise(data[i].input, a.sigma, s);
                break;
            case Protocol::region_noise:
                corrupted = corrupt_region_noise(data[i].input, a.sigma, s);
                break;
            case Protocol::sparsity:
                corrupted = sparsify(data[i].input, a.keep, s);
                break;
        }
        const std::string name = "in_" + data[i].id + ".pgm";
        write_depth_pgm(corrupted, (fs::path(a.out) / name).string());
        const fs::path gt(entries[i].gt_path);
        manifest.push_back({name, fs::absolute(gt.is_absolute() ? gt : base / gt).string()});
    }
    write_manifest((fs::path(a.out) / "manifest.txt").string(), manifest);
    std::cout << "wrote " << data.size() << " corrupted inputs to " << a.out << "\n";
    return 0;
}

struct SweepArgs {
    std::string ckpt;
    std::string data;
    std::string protocol = "sparsity";
    std::vector<double> levels;
    std::string out = "sweep.tsv";
    std::string arch = "full";
    std::uint64_t seed = 0;
};

int cmd_sweep(const SweepArgs& a) {
    std::ostringstream lv;
    for (const double l : a.levels) lv << l << ",";
    std::cout << "# sweep: ckpt=" << a.ckpt << " data=" << a.data << " protocol=" << a.protocol
              << " levels=" << lv.str() << " out=" << a.out << " arch=" << a.arch
              << " seed=" << a.seed << "\n";
    if (a.levels.empty()) throw ConfigError("sweep: --levels must not be empty");
    const HmsNet net(arch_config(a.arch));
    LoadedCheckpoint ck = load_checkpoint(a.ckpt);
    check_params_match(net.graph(), ck.store);
    const std::vector<DepthSample> data = load_dataset(a.data);
    const auto curve =
        robustness_sweep(net, ck.store, data, protocol_from_string(a.protocol), a.levels, a.seed);
    const std::string tsv = sweep_to_tsv(curve);
    std::ofstream out(a.out);
    out << tsv;
    std::cout << tsv;
    return 0;
}

struct GradcheckArgs {
    std::string op = "all";
    std::uint64_t seed = 1;
    double tol = 1e-4;
    double network_tol = 1e-3;
    int seeds = 20;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    std::cout << "# gradcheck: op=" << a.op << " seed=" << a.seed << " tol=" << a.tol
              << " network_tol=" << a.network_tol << " seeds=" << a.seeds << "\n";
    const std::vector<std::string> ops =
        a.op == "all" ? std::vector<std::string>{"si_conv", "si_upsample", "si_maxpool",
                                                 "si_average", "si_concat_conv", "relu", "loss",
                                                 "network"}
                      : std::vector<std::string>{a.op};
    bool all_pass = true;
    for (const std::string& op : ops) {
        const double tol = op == "network" ? a.network_tol : a.tol;
        const int n_seeds = op == "network" ? 1 : a.seeds;
        std::vector<GradGroupReport> worst;
        for (int s = 0; s < n_seeds; ++s) {
            const GradCheckReport rep = gradcheck_by_name(op, a.seed + std::uint64_t(s));
            if (worst.empty()) worst = rep.groups;
            for (std::size_t g = 0; g < rep.groups.size(); ++g)
                worst[g].max_rel_err = std::max(worst[g].max_rel_err, rep.groups[g].max_rel_err);
        }
        double op_worst = 0;
        for (const GradGroupReport& g : worst) {
            std::printf("%-16s %-14s max_rel_err %.3e\n", op.c_str(), g.group.c_str(),
                        g.max_rel_err);
            op_worst = std::max(op_worst, g.max_rel_err);
        }
        const bool pass = op_worst < tol;
        std::printf("%-16s %s (worst %.3e, tol %.1e)\n", op.c_str(), pass ? "PASS" : "FAIL",
                    op_worst, tol);
        all_pass = all_pass && pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse depth completion: sparsity-invariant multi-scale network toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "plain-text key=value overlay; flags take precedence");
    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads")->envname("HMS_THREADS");

    GenArgs gen;
    CLI::App* c_gen = app.add_subcommand("gen", "generate a synthetic sparse-depth dataset");
    c_gen->add_option("--out", gen.out, "output directory")->required();
    c_gen->add_option("--count", gen.count, "number of scenes")->check(CLI::PositiveNumber);
    c_gen->add_option("--size", gen.size, "square scene size");
    c_gen->add_option("--height", gen.height, "scene height (overrides --size)");
    c_gen->add_option("--width", gen.width, "scene width (overrides --size)");
    c_gen->add_option("--density", gen.density, "keep probability for input sparsification");
    c_gen->add_option("--exact", gen.exact, "keep exactly N points instead of Bernoulli");
    c_gen->add_option("--seed", gen.seed, "RNG seed");
    c_gen->add_option("--min-depth", gen.min_depth, "minimum scene depth (m)");
    c_gen->add_option("--max-depth", gen.max_depth, "maximum scene depth (m)");
    c_gen->add_option("--ground-near", gen.ground_near, "ground depth at the bottom row (m)");
    c_gen->add_option("--ground-far-frac", gen.ground_far_frac,
                      "horizon depth as a fraction of max depth");
    c_gen->add_option("--min-objects", gen.min_objects, "minimum box count");
    c_gen->add_option("--max-objects", gen.max_objects, "maximum box count");

    TrainArgs tr;
    CLI::App* c_train = app.add_subcommand("train", "train a model on a dataset manifest");
    c_train->add_option("--data", tr.data, "dataset manifest")->required();
    c_train->add_option("--out", tr.out, "output directory")->required();
    c_train->add_option("--arch", tr.arch, "full|baseline|up_only|down_only|no_mid_flow|toy");
    c_train->add_option("--resume", tr.resume, "checkpoint to resume from");
    c_train->add_option("--epochs", tr.cfg.epochs, "training epochs");
    c_train->add_option("--lr0", tr.cfg.lr0, "initial learning rate");
    c_train->add_option("--poly-power", tr.cfg.poly_power, "LR decay exponent");
    c_train->add_option("--beta1", tr.cfg.beta1, "Adam beta1");
    c_train->add_option("--beta2", tr.cfg.beta2, "Adam beta2");
    c_train->add_option("--eps-adam", tr.cfg.eps_adam, "Adam epsilon");
    c_train->add_option("--batch", tr.cfg.batch_size, "batch size");
    c_train->add_option("--seed", tr.cfg.seed, "RNG seed");
    c_train->add_option("--patience", tr.cfg.loss_floor_patience,
                        "early-stop patience in epochs (0 = off)");
    c_train->add_option("--val-fraction", tr.val_fraction, "held-out fraction");

    PredictArgs pr;
    CLI::App* c_pred = app.add_subcommand("predict", "predict dense depth for a manifest");
    c_pred->add_option("--ckpt", pr.ckpt, "checkpoint")->required();
    c_pred->add_option("--data", pr.data, "dataset manifest")->required();
    c_pred->add_option("--out", pr.out, "output directory")->required();
    c_pred->add_option("--arch", pr.arch, "architecture of the checkpoint");

    EvalArgs ev;
    CLI::App* c_eval = app.add_subcommand("eval", "compute error metrics");
    c_eval->add_option("--ckpt", ev.ckpt, "checkpoint (with --data)");
    c_eval->add_option("--data", ev.data, "dataset manifest (with --ckpt)");
    c_eval->add_option("--pred-manifest", ev.pred_manifest,
                       "manifest of prediction<TAB>gt files");
    c_eval->add_option("--arch", ev.arch, "architecture of the checkpoint");
    c_eval->add_option("--tsv", ev.tsv, "write machine-readable report here");
    c_eval->add_flag("--per-sample", ev.per_sample, "print the per-sample breakdown");

    CorruptArgs co;
    CLI::App* c_cor = app.add_subcommand("corrupt", "apply a corruption protocol to inputs");
    c_cor->add_option("--data", co.data, "dataset manifest")->required();
    c_cor->add_option("--out", co.out, "output directory")->required();
    c_cor->add_option("--protocol", co.protocol, "scene_noise|region_noise|sparsity");
    c_cor->add_option("--sigma", co.sigma, "noise standard deviation (m)");
    c_cor->add_option("--keep", co.keep, "keep fraction for sparsity");
    c_cor->add_option("--seed", co.seed, "RNG seed");

    SweepArgs sw;
    CLI::App* c_sw = app.add_subcommand("sweep", "robustness curve over corruption levels");
    c_sw->add_option("--ckpt", sw.ckpt, "checkpoint")->required();
    c_sw->add_option("--data", sw.data, "dataset manifest")->required();
    c_sw->add_option("--protocol", sw.protocol, "scene_noise|region_noise|sparsity");
    c_sw->add_option("--levels", sw.levels, "corruption levels")->required()->delimiter(',');
    c_sw->add_option("--out", sw.out, "output TSV path");
    c_sw->add_option("--arch", sw.arch, "architecture of the checkpoint");
    c_sw->add_option("--seed", sw.seed, "RNG seed");

    GradcheckArgs gc;
    CLI::App* c_gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    c_gc->add_option("op", gc.op,
                     "si_conv|si_upsample|si_maxpool|si_average|si_concat_conv|relu|loss|network|"
                     "all");
    c_gc->add_option("--seed", gc.seed, "base RNG seed");
    c_gc->add_option("--tol", gc.tol, "per-op tolerance");
    c_gc->add_option("--network-tol", gc.network_tol, "whole-network tolerance");
    c_gc->add_option("--seeds", gc.seeds, "seeds per op");

    CLI::App* c_st = app.add_subcommand("selftest", "run the library invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        if (app.got_subcommand(c_gen)) return cmd_gen(gen);
        if (app.got_subcommand(c_train)) return cmd_train(tr);
        if (app.got_subcommand(c_pred)) return cmd_predict(pr);
        if (app.got_subcommand(c_eval)) return cmd_eval(ev);
        if (app.got_subcommand(c_cor)) return cmd_corrupt(co);
        if (app.got_subcommand(c_sw)) return cmd_sweep(sw);
        if (app.got_subcommand(c_gc)) return cmd_gradcheck(gc);
        if (app.got_subcommand(c_st)) {
            std::cout << "# selftest\n";
            return run_selftest(std::cout) == 0 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error\t" << e.what() << "\n";
        return 1;
    }
    return 0;
}
