#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "xview/config.hpp"
#include "xview/sweep.hpp"

using namespace xview;

TEST_CASE("config parses key = value lines", "[config]") {
    std::istringstream is(
        "# comment\n"
        "\n"
        "classes = 24\n"
        "train_classes=12\n"
        "loss_arm = dwdr_only\n"
        "sampling = drone\n"
        "eval_ks = 1, 5 ,10\n"
        "alpha = 0.75\n"
        "seed = 77\n");
    RunConfig cfg = parse_config(is, "t");
    REQUIRE(cfg.synth.num_classes == 24);
    REQUIRE(cfg.synth.train_classes == 12);
    REQUIRE(cfg.train.arm == LossArm::dwdr_only);
    REQUIRE(cfg.train.sampling == SamplingStrategy::drone);
    REQUIRE(cfg.eval_ks == std::vector<int>{1, 5, 10});
    REQUIRE(cfg.train.dwdr.alpha == 0.75);
    REQUIRE(cfg.seed == 77);
    REQUIRE(cfg.train.seed == 77);  // master seed propagates
}

TEST_CASE("unknown keys are rejected with the offending name", "[config]") {
    std::istringstream is("classez = 24\n");
    REQUIRE_THROWS_WITH(parse_config(is, "t"), Catch::Matchers::ContainsSubstring("classez"));

    std::istringstream bad_value("classes = many\n");
    REQUIRE_THROWS_AS(parse_config(bad_value, "t"), config_error);

    std::istringstream bad_line("classes\n");
    REQUIRE_THROWS_WITH(parse_config(bad_line, "t"), Catch::Matchers::ContainsSubstring("t:1"));
}

TEST_CASE("print_config round-trips to the same effective config", "[config]") {
    RunConfig defaults;
    std::ostringstream os;
    print_config(defaults, os);
    std::istringstream is(os.str());
    RunConfig back = parse_config(is, "defaults");
    std::ostringstream os2;
    print_config(back, os2);
    REQUIRE(os2.str() == os.str());
}

TEST_CASE("round trip preserves a modified config", "[config]") {
    RunConfig cfg;
    cfg.train.dwdr.lambda = 0.0123;
    cfg.train.arm = LossArm::softmargin_plus_dwdr;
    cfg.train.retrieval_feature = RetrievalFeature::classifier_hidden;
    cfg.synth.noise_sigma = 0.07;
    cfg.eval_ks = {1, 2, 3};
    std::ostringstream os;
    print_config(cfg, os);
    std::istringstream is(os.str());
    RunConfig back = parse_config(is, "mod");
    REQUIRE(back.train.dwdr.lambda == 0.0123);
    REQUIRE(back.train.arm == LossArm::softmargin_plus_dwdr);
    REQUIRE(back.train.retrieval_feature == RetrievalFeature::classifier_hidden);
    REQUIRE(back.synth.noise_sigma == 0.07);
    REQUIRE(back.eval_ks == std::vector<int>{1, 2, 3});
}

TEST_CASE("sweep spec parsing", "[config]") {
    std::istringstream is(
        "seeds = 3,4\n"
        "jobs = 2\n"
        "classes = 16\n"
        "train_classes = 8\n"
        "arm = base loss_arm=instance_only\n"
        "arm = regularized loss_arm=instance_plus_dwdr dwdr_lambda=0.02\n");
    SweepSpec spec = parse_sweep_spec(is, "s");
    REQUIRE(spec.seeds == std::vector<uint64_t>{3, 4});
    REQUIRE(spec.jobs == 2);
    REQUIRE(spec.base.synth.num_classes == 16);
    REQUIRE(spec.arms.size() == 2);
    REQUIRE(spec.arms[1].name == "regularized");
    REQUIRE(spec.arms[1].overrides.size() == 2);

    std::istringstream empty("seeds = 1\n");
    REQUIRE_THROWS_WITH(parse_sweep_spec(empty, "s"), Catch::Matchers::ContainsSubstring("no arms"));

    std::istringstream bad("arm = x no_such_key=1\n");
    REQUIRE_THROWS_WITH(parse_sweep_spec(bad, "s"), Catch::Matchers::ContainsSubstring("no_such_key"));
}

TEST_CASE("sweep summary statistics", "[config]") {
    MeanStd ms = mean_std({1.0, 2.0, 3.0, 4.0});
    REQUIRE_THAT(ms.mean, Catch::Matchers::WithinAbs(2.5, 1e-15));
    REQUIRE_THAT(ms.stddev, Catch::Matchers::WithinRel(std::sqrt(1.25), 1e-12));
    REQUIRE(mean_std({}).mean == 0.0);
}
