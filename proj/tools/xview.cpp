// xview: synthetic cross-view embedding training and retrieval evaluation.
//
// Subcommands: gen-data, train, eval, gradcheck, sweep.
// Exit codes: 0 success, 1 usage/config, 2 numeric failure, 3 IO.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "xview/config.hpp"
#include "xview/eval.hpp"
#include "xview/gradcheck.hpp"
#include "xview/pipeline.hpp"
#include "xview/report.hpp"
#include "xview/sweep.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    bool out_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "path to a key=value config file");
    cmd->add_option("--seed", opts.seed, "override the master seed")->each([&](const std::string&) {
        opts.seed_set = true;
    });
    cmd->add_option("--out", opts.out_dir, "override the output directory")->each([&](const std::string&) {
        opts.out_set = true;
    });
}

xview::RunConfig load_config(const CommonOpts& opts) {
    xview::RunConfig cfg;
    if (!opts.config_path.empty()) cfg = xview::parse_config_file(opts.config_path);
    if (opts.seed_set) {
        cfg.seed = opts.seed;
        cfg.train.seed = opts.seed;
    }
    if (opts.out_set) cfg.out_dir = opts.out_dir;
    return cfg;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw xview::io_error("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

int cmd_gen_data(const CommonOpts& opts) {
    xview::RunConfig cfg = load_config(opts);
    ensure_out_dir(cfg.out_dir);
    auto [train_ds, test_ds] = xview::generate_split(cfg);
    std::string train_path = join(cfg.out_dir, "train.txt");
    std::string test_path = join(cfg.out_dir, "test.txt");
    xview::write_manifest_file(train_ds, train_path);
    xview::write_manifest_file(test_ds, test_path);
    std::cout << "train: " << train_ds.num_classes() << " classes, " << train_ds.items.size() << " items -> "
              << train_path << '\n';
    std::cout << "test:  " << test_ds.num_classes() << " classes, " << test_ds.items.size() << " items -> "
              << test_path << '\n';
    return 0;
}

int cmd_train(const CommonOpts& opts) {
    xview::RunConfig cfg = load_config(opts);
    ensure_out_dir(cfg.out_dir);
    xview::CrossViewDataset train_ds = xview::read_manifest_file(join(cfg.out_dir, "train.txt"));
    xview::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    xview::TrainResult result = xview::train(tc, train_ds);
    std::string ckpt_path = join(cfg.out_dir, "checkpoint.txt");
    xview::write_checkpoint_file(result.params, ckpt_path);
    xview::write_train_log_jsonl(result.log, join(cfg.out_dir, "train_log.jsonl"));
    if (!result.log.empty()) {
        const xview::EpochStats& last = result.log.back();
        std::cout << "trained " << result.log.size() << " epochs; final l_total "
                  << xview::format_double(last.l_total) << ", mean |rho_offdiag| "
                  << xview::format_double(last.mean_abs_offdiag_rho) << '\n';
    }
    std::cout << "checkpoint -> " << ckpt_path << '\n';
    return 0;
}

int cmd_eval(const CommonOpts& opts) {
    xview::RunConfig cfg = load_config(opts);
    ensure_out_dir(cfg.out_dir);
    xview::ModelParams params = xview::read_checkpoint_file(join(cfg.out_dir, "checkpoint.txt"));
    xview::CrossViewDataset test_ds = xview::read_manifest_file(join(cfg.out_dir, "test.txt"));
    if (params.dims.input_dim != test_ds.feature_dim)
        throw xview::config_error("checkpoint input_dim " + std::to_string(params.dims.input_dim) +
                                  " does not match manifest feature dim " +
                                  std::to_string(test_ds.feature_dim));

    xview::EmbeddingSet sat =
        xview::embed_platform(params, test_ds, xview::Platform::satellite, cfg.train.retrieval_feature);
    xview::EmbeddingSet drone =
        xview::embed_platform(params, test_ds, xview::Platform::drone, cfg.train.retrieval_feature);
    xview::write_embeddings_file(sat, join(cfg.out_dir, "embeddings_sat.txt"));
    xview::write_embeddings_file(drone, join(cfg.out_dir, "embeddings_drone.txt"));

    xview::BidirectionalMetrics metrics = xview::evaluate_bidirectional(sat, drone, cfg.eval_ks);
    xview::OffdiagStats offdiag = xview::offdiag_stats(sat, drone, cfg.train.dwdr.eps, cfg.offdiag_tau);
    xview::json j = xview::bidirectional_to_json(metrics);
    j["offdiag"] = xview::offdiag_to_json(offdiag);
    xview::write_json_file(j, join(cfg.out_dir, "metrics.json"));
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_gradcheck(const CommonOpts& opts) {
    xview::GradCheckSuiteConfig gc;
    if (opts.seed_set) gc.seed = opts.seed;
    auto reports = xview::run_gradcheck_suite(gc);
    bool all_ok = true;
    for (const auto& r : reports) {
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << "  instances=" << r.instances
                  << "  max_rel_err=" << xview::format_double(r.max_rel_err)
                  << "  max_abs_err=" << xview::format_double(r.max_abs_err) << "  (tol "
                  << xview::format_double(r.rel_tol) << " rel / " << xview::format_double(r.abs_tol)
                  << " abs per entry)\n";
        all_ok = all_ok && r.passed;
    }
    if (!all_ok) {
        std::cerr << "gradient check failed\n";
        return 2;
    }
    return 0;
}

int cmd_sweep(const CommonOpts& opts) {
    if (opts.config_path.empty()) throw xview::config_error("sweep requires --config <sweep spec>");
    xview::SweepSpec spec = xview::parse_sweep_spec_file(opts.config_path);
    if (opts.seed_set) throw xview::config_error("sweep takes its seed list from the spec file");
    if (opts.out_set) spec.base.out_dir = opts.out_dir;
    ensure_out_dir(spec.base.out_dir);
    auto rows = xview::run_sweep(spec, &std::cout);
    std::string csv_path = join(spec.base.out_dir, "sweep.csv");
    {
        std::ofstream os(csv_path);
        if (!os) throw xview::io_error("cannot open '" + csv_path + "' for writing");
        xview::write_sweep_csv(rows, os);
    }
    xview::write_json_file(xview::sweep_to_json(rows), join(spec.base.out_dir, "sweep.json"));
    std::cout << "results -> " << csv_path << '\n';
    bool any_failed = false;
    for (const auto& r : rows) any_failed = any_failed || r.failed > 0;
    return any_failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-view embedding training with decorrelation regularization"};
    app.require_subcommand(0, 1);
    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults, "print the default config and exit");

    CommonOpts gen_opts, train_opts, eval_opts, grad_opts, sweep_opts;
    CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic train/test manifests");
    add_common(gen, gen_opts);
    CLI::App* train = app.add_subcommand("train", "train on <out>/train.txt");
    add_common(train, train_opts);
    CLI::App* eval = app.add_subcommand("eval", "evaluate <out>/checkpoint.txt on <out>/test.txt");
    add_common(eval, eval_opts);
    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference verification of all losses");
    add_common(grad, grad_opts);
    CLI::App* sweep = app.add_subcommand("sweep", "run an ablation sweep from a sweep spec");
    add_common(sweep, sweep_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (print_defaults) {
            xview::print_config(xview::RunConfig{}, std::cout);
            return 0;
        }
        if (gen->parsed()) return cmd_gen_data(gen_opts);
        if (train->parsed()) return cmd_train(train_opts);
        if (eval->parsed()) return cmd_eval(eval_opts);
        if (grad->parsed()) return cmd_gradcheck(grad_opts);
        if (sweep->parsed()) return cmd_sweep(sweep_opts);
        std::cerr << app.help();
        return 1;
    } catch (const xview::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const xview::io_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 3;
    } catch (const xview::error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
