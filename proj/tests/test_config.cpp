#include <doctest.h>

#include <string>
#include <vector>

#include "selfloop/config.hpp"
#include "selfloop/error.hpp"
#include "support/test_util.hpp"

using namespace selfloop;

namespace {

const char* kMinimalConfig = R"({
  "world": {},
  "dataset": {},
  "loop": {},
  "seeds": [1]
})";

ExperimentConfig sample_config() {
    ExperimentConfig cfg = parse_config(kMinimalConfig);
    cfg.world.num_classes = 3;
    cfg.world.num_subgroups = 2;
    cfg.world.feature_dim = 5;
    cfg.world.class_separation = 4.5;
    cfg.world.subgroup_proportions = {{0.7, 0.3}, {0.5, 0.5}, {0.2, 0.8}};
    cfg.world_seed = 99;
    cfg.loop.generations = 3;
    cfg.loop.mix_ratio = 25.0;
    cfg.loop.filter_ratio = 5.0;
    cfg.loop.gmm_components = 2;
    cfg.loop.arch.kind = Arch::mlp;
    cfg.loop.arch.hidden = 8;
    cfg.loop.knob_schedule = {{0.9, 0.1}, {0.8, 0.2}, {0.7, 0.3}};
    cfg.loop.di_variant = DiVariant::directed;
    cfg.loop.n_original = 400;
    cfg.loop.n_test = 100;
    cfg.seeds = {3, 14, 15};
    cfg.output_dir = "out";
    cfg.validate();
    return cfg;
}

Errc parse_error_code(const std::string& text, const std::string& expected_detail) {
    try {
        parse_config(text);
        FAIL("expected parse_config to throw for: ", text);
    } catch (const Error& err) {
        INFO("detail: ", err.detail());
        CHECK(err.detail().find(expected_detail) != std::string::npos);
        return err.code();
    }
    return Errc::io;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("minimal config applies documented defaults") {
    const ExperimentConfig cfg = parse_config(kMinimalConfig);
    CHECK(cfg.loop.generations == 10);
    CHECK(cfg.loop.mix_ratio == 20.0);
    CHECK(cfg.loop.filter_ratio == 10.0);
    CHECK(cfg.loop.queue_capacity == 3);
    CHECK(cfg.loop.warm_start == false);
    CHECK(cfg.loop.knob_schedule.empty());
    CHECK(cfg.loop.arch.kind == Arch::linear);
    CHECK(cfg.loop.arch.hidden == 32);
    CHECK(cfg.loop.train.learning_rate == 0.1);
    CHECK(cfg.loop.train.max_epochs == 50);
    CHECK(cfg.loop.di_variant == DiVariant::symmetric);
    CHECK(cfg.loop.n_original == 5000);
    CHECK(cfg.loop.n_test == 2000);
    CHECK(cfg.world.num_classes == 2);
    CHECK(cfg.world.num_subgroups == 1);
    CHECK(cfg.world.feature_dim == 2);
    CHECK(cfg.world.class_separation == 6.0);
    CHECK(cfg.world.subgroup_proportions == WorldSpec::uniform_proportions(2, 1));
    CHECK(cfg.world_seed == 20240101);
    CHECK(cfg.loop.gmm_components == cfg.world.num_subgroups);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1});
    CHECK(cfg.output_dir.empty());
}

TEST_CASE("world section drives the mixture default") {
    const ExperimentConfig cfg =
        parse_config(R"({"world": {"num_subgroups": 3}, "seeds": [1]})");
    CHECK(cfg.world.num_subgroups == 3);
    CHECK(cfg.loop.gmm_components == 3);
    CHECK(cfg.world.subgroup_proportions == WorldSpec::uniform_proportions(2, 3));

    const ExperimentConfig overridden = parse_config(
        R"({"world": {"num_subgroups": 3}, "loop": {"gmm_components": 5}, "seeds": [1]})");
    CHECK(overridden.loop.gmm_components == 5);
}

TEST_CASE("dataset section sets the pool sizes") {
    const ExperimentConfig cfg =
        parse_config(R"({"dataset": {"n_train": 800, "n_test": 300}, "seeds": [1]})");
    CHECK(cfg.loop.n_original == 800);
    CHECK(cfg.loop.n_test == 300);
}

TEST_CASE("malformed json is a parse error") {
    try {
        parse_config("{ not json");
        FAIL("expected a parse error");
    } catch (const Error& err) {
        CHECK(err.code() == Errc::parse);
    }
    try {
        parse_config("[1, 2]");
        FAIL("expected a validation error");
    } catch (const Error& err) {
        CHECK(err.code() == Errc::validation);
    }
}

TEST_CASE("unknown keys are rejected with their path") {
    CHECK(parse_error_code(R"({"seeds": [1], "bogus": 1})", "unknown key: bogus") == Errc::schema);
    CHECK(parse_error_code(R"({"world": {"n_classes": 3}, "seeds": [1]})",
                           "unknown key: world.n_classes") == Errc::schema);
    CHECK(parse_error_code(R"({"loop": {"generaions": 3}, "seeds": [1]})",
                           "unknown key: loop.generaions") == Errc::schema);
    CHECK(parse_error_code(R"({"loop": {"train": {"momentum": 0.9}}, "seeds": [1]})",
                           "unknown key: loop.train.momentum") == Errc::schema);
    CHECK(parse_error_code(R"({"loop": {"classifier": {"depth": 2}}, "seeds": [1]})",
                           "unknown key: loop.classifier.depth") == Errc::schema);
    CHECK(parse_error_code(R"({"loop": {"knobs": {"q": 1, "v": 0}}, "seeds": [1]})",
                           "unknown key: loop.knobs.v") == Errc::schema);
}

TEST_CASE("invalid values name the key path") {
    CHECK(parse_error_code(R"({"world": {"num_classes": "two"}, "seeds": [1]})",
                           "invalid value for world.num_classes") == Errc::validation);
    CHECK(parse_error_code(R"({"loop": {"filter_ratio": 100}, "seeds": [1]})",
                           "loop.filter_ratio") == Errc::validation);
    CHECK(parse_error_code(R"({"loop": {"di_variant": "both"}, "seeds": [1]})",
                           "di_variant") == Errc::validation);
    CHECK(parse_error_code(R"({"loop": {"classifier": {"arch": "tree"}}, "seeds": [1]})",
                           "arch") == Errc::validation);
    CHECK(parse_error_code(R"({"loop": {"knobs": {"q": 2.0}}, "seeds": [1]})",
                           "loop.knobs") == Errc::validation);
    CHECK(parse_error_code(R"({"loop": {"mix_ratio": 0}, "seeds": [1]})",
                           "loop.mix_ratio") == Errc::validation);
}

TEST_CASE("seeds are required") {
    CHECK(parse_error_code(R"({"world": {}})", "seeds") == Errc::validation);
    CHECK(parse_error_code(R"({"seeds": []})", "seeds") == Errc::validation);
}

TEST_CASE("constant knobs expand to a full schedule") {
    const ExperimentConfig cfg = parse_config(
        R"({"loop": {"generations": 4, "knobs": {"q": 0.7, "u": 0.5}}, "seeds": [1]})");
    REQUIRE(cfg.loop.knob_schedule.size() == 4);
    for (const SamplingKnobs& k : cfg.loop.knob_schedule) {
        CHECK(k.q == 0.7);
        CHECK(k.u == 0.5);
    }
}

TEST_CASE("explicit knob schedules are parsed per generation") {
    const ExperimentConfig cfg = parse_config(
        R"({"loop": {"generations": 2,
                     "knob_schedule": [{"q": 0.9, "u": 0.0}, {"q": 0.5, "u": 1.0}]},
            "seeds": [1]})");
    REQUIRE(cfg.loop.knob_schedule.size() == 2);
    CHECK(cfg.loop.knob_schedule[0].q == 0.9);
    CHECK(cfg.loop.knob_schedule[1].u == 1.0);

    CHECK(parse_error_code(
              R"({"loop": {"generations": 3, "knob_schedule": [{"q": 0.9}]}, "seeds": [1]})",
              "knob_schedule") == Errc::validation);
}

TEST_CASE("knobs and knob_schedule are mutually exclusive") {
    CHECK(parse_error_code(
              R"({"loop": {"knobs": {"q": 1}, "knob_schedule": []}, "seeds": [1]})",
              "mutually exclusive") == Errc::schema);
}

TEST_CASE("serialization round trips") {
    const ExperimentConfig cfg = sample_config();
    const std::string canon = serialize_config(cfg);
    const ExperimentConfig reparsed = parse_config(canon);
    CHECK(serialize_config(reparsed) == canon);
    CHECK(reparsed.world.num_classes == cfg.world.num_classes);
    CHECK(reparsed.world.subgroup_proportions == cfg.world.subgroup_proportions);
    CHECK(reparsed.world_seed == cfg.world_seed);
    CHECK(reparsed.loop.generations == cfg.loop.generations);
    CHECK(reparsed.loop.arch.kind == cfg.loop.arch.kind);
    CHECK(reparsed.loop.di_variant == cfg.loop.di_variant);
    CHECK(reparsed.loop.knob_schedule.size() == cfg.loop.knob_schedule.size());
    CHECK(reparsed.seeds == cfg.seeds);
    CHECK(reparsed.output_dir == cfg.output_dir);
}

TEST_CASE("config hash is stable and sensitive") {
    const ExperimentConfig cfg = sample_config();
    const std::string h1 = config_hash(cfg);
    CHECK(h1.size() == 16);
    CHECK(h1.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(config_hash(parse_config(serialize_config(cfg))) == h1);

    ExperimentConfig tweaked = cfg;
    tweaked.world_seed += 1;
    CHECK(config_hash(tweaked) != h1);
}

}  // TEST_SUITE("config")

TEST_SUITE("config.invariants") {

TEST_CASE("any unknown key fails parsing") {
    const std::vector<std::string> bad_configs = {
        R"({"seeds": [1], "extra": {}})",
        R"({"world": {"classes": 2}, "seeds": [1]})",
        R"({"dataset": {"n_validation": 5}, "seeds": [1]})",
        R"({"loop": {"filter": 10}, "seeds": [1]})",
        R"({"loop": {"train": {"lr": 0.1}}, "seeds": [1]})",
        R"({"loop": {"classifier": {"architecture": "linear"}}, "seeds": [1]})",
        R"({"loop": {"knob_schedule": [{"quality": 1}]}, "seeds": [1]})",
    };
    for (const std::string& text : bad_configs) {
        INFO("config: ", text);
        try {
            parse_config(text);
            FAIL("expected a schema error");
        } catch (const Error& err) {
            CHECK(err.code() == Errc::schema);
            CHECK(err.detail().find("unknown key") != std::string::npos);
        }
    }
}

TEST_CASE("parse of the canonical form is the identity") {
    ExperimentConfig cfg = sample_config();
    for (int variant = 0; variant < 3; ++variant) {
        cfg.loop.generations = 2 + static_cast<std::size_t>(variant);
        cfg.loop.knob_schedule.assign(cfg.loop.generations, SamplingKnobs{0.8, 0.25});
        cfg.seeds.push_back(100 + static_cast<std::uint64_t>(variant));
        const std::string canon = serialize_config(cfg);
        CHECK(serialize_config(parse_config(canon)) == canon);
    }
}

}  // TEST_SUITE("config.invariants")
