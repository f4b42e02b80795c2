#include <doctest.h>

#include <fstream>

#include "dvhn/errors.hpp"
#include "dvhn/solver.hpp"
#include "support.hpp"

using namespace dvhn;

TEST_CASE("defaults") {
    const TrainConfig cfg;
    CHECK(cfg.margin_alpha == 0.3);
    CHECK(cfg.lr == 3e-4);
    CHECK(cfg.weight_decay == 5e-4);
    CHECK(cfg.beta1 == 0.9);
    CHECK(cfg.beta2 == 0.99);
    CHECK(cfg.lambda == 1.0);
    CHECK(cfg.sigma == 1.0);
    CHECK(cfg.P == 16);
    CHECK(cfg.K1 == 6);
    CHECK(cfg.inner_iters == 100);
    CHECK(cfg.dcc_sweeps == 1);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("key = value parsing") {
    const auto cfg = parse_config("# comment\nbits_K = 32\nlambda=0.5  # trailing\n\nseed = 9\n");
    CHECK(cfg.bits_K == 32);
    CHECK(cfg.lambda == 0.5);
    CHECK(cfg.seed == 9);
    CHECK(cfg.margin_alpha == 0.3);
    CHECK_THROWS_AS(parse_config("nonsense = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("bits_K = many\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("bits_K = 12abc\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("bits_K\n"), ValidationError);
}

TEST_CASE("formatted config parses back to the same values") {
    TrainConfig cfg;
    for (const auto& key : config_keys()) CHECK_NOTHROW(set_config_value(cfg, key, "3"));
    cfg.margin_alpha = 0.125;
    cfg.nu = 1e-3;
    const auto back = parse_config(format_config(cfg));
    CHECK(format_config(back) == format_config(cfg));
    CHECK(back.margin_alpha == 0.125);
    CHECK(back.nu == 1e-3);
}

TEST_CASE("config files") {
    dvhn::testing::TempDir dir;
    {
        std::ofstream out(dir / "run.cfg");
        out << "bits_K = 16\nouter_iters_T = 2\n";
    }
    TrainConfig base;
    base.seed = 5;
    const auto cfg = load_config(dir / "run.cfg", base);
    CHECK(cfg.bits_K == 16);
    CHECK(cfg.outer_iters_T == 2);
    CHECK(cfg.seed == 5);
    CHECK_THROWS_AS(load_config(dir / "missing.cfg"), IoError);
}

TEST_CASE("validation") {
    TrainConfig cfg;
    cfg.mu = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.nu = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.margin_alpha = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.outer_iters_T = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
