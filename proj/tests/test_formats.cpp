#include <doctest.h>

#include "pfncast/rng.hpp"
#include "pfncast/run_config.hpp"
#include "pfncast/toml.hpp"
#include "pfncast/weights_io.hpp"

using namespace pfncast;

TEST_CASE("weights round trip") {
    PfnConfig cfg;
    cfg.n_layers = 2;
    cfg.emb_dim = 16;
    cfg.n_heads = 2;
    cfg.ff_dim = 24;
    cfg.max_features = 6;
    cfg.max_classes = 3;
    PfnWeights w = PfnWeights::init(cfg, 99);

    auto bytes = serialize_weights(w);
    PfnWeights back = deserialize_weights(bytes);
    CHECK(back.config.n_layers == 2);
    CHECK(back.config.emb_dim == 16);

    SUBCASE("load then save reproduces identical bytes") {
        CHECK(serialize_weights(back) == bytes);
    }

    SUBCASE("values survive the f32 round trip") {
        std::vector<float> want, got;
        w.for_each_tensor([&](const std::string&, const Tensor& t) {
            for (double v : t.data) want.push_back(static_cast<float>(v));
        });
        back.for_each_tensor([&](const std::string&, const Tensor& t) {
            for (double v : t.data) got.push_back(static_cast<float>(v));
        });
        CHECK(want == got);
    }
}

TEST_CASE("weights loader rejects corruption") {
    PfnConfig cfg;
    cfg.n_layers = 1;
    cfg.emb_dim = 8;
    cfg.n_heads = 2;
    cfg.ff_dim = 8;
    cfg.max_features = 4;
    cfg.max_classes = 2;
    auto bytes = serialize_weights(PfnWeights::init(cfg, 5));

    SUBCASE("bad magic") {
        auto bad = bytes;
        bad[1] = 'X';
        CHECK_THROWS_WITH_AS(deserialize_weights(bad), doctest::Contains("magic"),
                             WeightsFormatError);
    }

    SUBCASE("any single flipped bit fails the crc") {
        Rng rng(17);
        for (int trial = 0; trial < 40; ++trial) {
            auto bad = bytes;
            size_t byte = static_cast<size_t>(
                rng.uniform_int(4, static_cast<int64_t>(bad.size()) - 1));
            bad[byte] ^= static_cast<uint8_t>(1u << rng.uniform_int(0, 7));
            CHECK_THROWS_AS(deserialize_weights(bad), WeightsFormatError);
        }
    }

    SUBCASE("truncation is caught") {
        auto bad = bytes;
        bad.resize(bad.size() / 2);
        CHECK_THROWS_AS(deserialize_weights(bad), WeightsFormatError);
    }

    SUBCASE("unsupported version") {
        auto bad = bytes;
        bad[4] = 9;  // version field
        // crc now mismatches first; rebuild it to reach the version check
        uint32_t crc = crc32(bad.data(), bad.size() - 4);
        for (int i = 0; i < 4; ++i)
            bad[bad.size() - 4 + static_cast<size_t>(i)] =
                static_cast<uint8_t>((crc >> (8 * i)) & 0xff);
        CHECK_THROWS_WITH_AS(deserialize_weights(bad), doctest::Contains("version"),
                             WeightsFormatError);
    }
}

TEST_CASE("toml parses the supported subset") {
    const std::string text =
        "# comment\n"
        "[prior]\n"
        "n_samples = [32, 256]\n"
        "noise_sigma = 0.25\n"
        "imbalance = \"random-offset\"\n"
        "\n"
        "[pfn]\n"
        "n_layers = 12   # the deep variant\n"
        "dropout = 1e-1\n";
    auto doc = toml::parse(text);
    CHECK(doc.at("prior").at("noise_sigma").as_double() == 0.25);
    CHECK(doc.at("prior").at("imbalance").as_string() == "random-offset");
    auto range = doc.at("prior").at("n_samples").as_number_array();
    REQUIRE(range.size() == 2);
    CHECK(range[0] == 32);
    CHECK(range[1] == 256);
    CHECK(doc.at("pfn").at("n_layers").as_int() == 12);
    CHECK(doc.at("pfn").at("dropout").as_double() == 0.1);
}

TEST_CASE("toml reports locations for malformed input") {
    try {
        toml::parse("[prior]\nnoise = \n");
        FAIL("expected a parse error");
    } catch (const toml::TomlError& e) {
        CHECK(e.line == 2);
    }

    try {
        toml::parse("key_without_equals\n");
        FAIL("expected a parse error");
    } catch (const toml::TomlError& e) {
        CHECK(e.line == 1);
    }

    CHECK_THROWS_AS(toml::parse("[x]\na = 1\na = 2\n"), toml::TomlError);
    CHECK_THROWS_AS(toml::parse("[x]\na = [1, \"two\"]\n"), toml::TomlError);
}

TEST_CASE("run config applies defaults and overrides") {
    RunConfig defaults = parse_run_config("");
    CHECK(defaults.pfn.n_layers == 3);
    CHECK(defaults.pfn.emb_dim == 128);
    CHECK(defaults.eval.train_fraction == 0.76);
    CHECK(defaults.eval.n_seeds == 40);
    CHECK(defaults.eval.top_k == 25);
    CHECK(defaults.gbdt.n_rounds == 200);

    RunConfig cfg = parse_run_config(
        "[pfn]\n"
        "n_layers = 12\n"
        "emb_dim = 64\n"
        "n_heads = 8\n"
        "[prior]\n"
        "n_classes_max = 4\n"
        "imbalance = \"quantile-uniform\"\n"
        "[baselines]\n"
        "gbdt_rounds = 50\n"
        "[eval]\n"
        "n_seeds = 5\n");
    CHECK(cfg.pfn.n_layers == 12);
    CHECK(cfg.pfn.emb_dim == 64);
    CHECK(cfg.prior.n_classes_max == 4);
    CHECK(cfg.prior.imbalance == IntervalMode::QuantileUniform);
    CHECK(cfg.gbdt.n_rounds == 50);
    CHECK(cfg.eval.n_seeds == 5);
}

TEST_CASE("run config rejects unknown keys with a location") {
    try {
        parse_run_config("[pfn]\nn_layrs = 3\n");
        FAIL("expected rejection");
    } catch (const toml::TomlError& e) {
        CHECK(std::string(e.what()).find("n_layrs") != std::string::npos);
        CHECK(e.line == 2);
    }

    CHECK_THROWS_AS(parse_run_config("[nonsense]\nx = 1\n"), toml::TomlError);
    CHECK_THROWS_AS(parse_run_config("[prior]\nimbalance = \"sideways\"\n"), toml::TomlError);
}

TEST_CASE("prior config serializes to a toml section that parses back") {
    PriorConfig p;
    p.n_samples_min = 10;
    p.n_samples_max = 20;
    p.noise_sigma = 0.05;
    std::string text = prior_to_toml(p);
    RunConfig cfg = parse_run_config(text);
    CHECK(cfg.prior.n_samples_min == 10);
    CHECK(cfg.prior.n_samples_max == 20);
    CHECK(cfg.prior.noise_sigma == 0.05);
}
