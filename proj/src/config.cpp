#include "selfloop/config.hpp"

#include <cstdio>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "selfloop/error.hpp"

namespace selfloop {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::string& path,
                         const std::set<std::string>& allowed) {
    for (const auto& item : obj.items()) {
        if (allowed.count(item.key()) == 0) {
            throw Error(Errc::schema, "unknown key: " + path + item.key());
        }
    }
}

const json* get_section(const json& root, const char* name) {
    if (!root.contains(name)) return nullptr;
    const json& section = root.at(name);
    if (!section.is_object()) {
        throw Error(Errc::validation, std::string(name) + " must be a JSON object");
    }
    return &section;
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& into) {
    if (!obj.contains(key)) return;
    try {
        into = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(Errc::validation, "invalid value for " + path + key);
    }
}

SamplingKnobs read_knobs(const json& obj, const std::string& path) {
    reject_unknown_keys(obj, path, {"q", "u"});
    SamplingKnobs knobs;
    read_field(obj, path, "q", knobs.q);
    read_field(obj, path, "u", knobs.u);
    try {
        knobs.validate();
    } catch (const Error& e) {
        throw Error(e.code(), path.substr(0, path.size() - 1) + ": " + e.detail());
    }
    return knobs;
}

void parse_world(const json* section, ExperimentConfig& cfg) {
    if (section == nullptr) return;
    const std::string path = "world.";
    reject_unknown_keys(*section, path,
                        {"num_classes", "num_subgroups", "feature_dim", "class_separation",
                         "subgroup_offset", "noise_scale", "subgroup_proportions", "seed"});
    read_field(*section, path, "num_classes", cfg.world.num_classes);
    read_field(*section, path, "num_subgroups", cfg.world.num_subgroups);
    read_field(*section, path, "feature_dim", cfg.world.feature_dim);
    read_field(*section, path, "class_separation", cfg.world.class_separation);
    read_field(*section, path, "subgroup_offset", cfg.world.subgroup_offset);
    read_field(*section, path, "noise_scale", cfg.world.noise_scale);
    read_field(*section, path, "subgroup_proportions", cfg.world.subgroup_proportions);
    read_field(*section, path, "seed", cfg.world_seed);
}

void parse_dataset(const json* section, ExperimentConfig& cfg) {
    if (section == nullptr) return;
    const std::string path = "dataset.";
    reject_unknown_keys(*section, path, {"n_train", "n_test"});
    read_field(*section, path, "n_train", cfg.loop.n_original);
    read_field(*section, path, "n_test", cfg.loop.n_test);
}

void parse_classifier(const json& obj, ExperimentConfig& cfg) {
    const std::string path = "loop.classifier.";
    reject_unknown_keys(obj, path, {"arch", "hidden"});
    std::string arch = "linear";
    read_field(obj, path, "arch", arch);
    if (arch == "linear") {
        cfg.loop.arch.kind = Arch::linear;
    } else if (arch == "mlp") {
        cfg.loop.arch.kind = Arch::mlp;
    } else {
        throw Error(Errc::validation, "loop.classifier.arch must be \"linear\" or \"mlp\"");
    }
    read_field(obj, path, "hidden", cfg.loop.arch.hidden);
}

void parse_train(const json& obj, ExperimentConfig& cfg) {
    const std::string path = "loop.train.";
    reject_unknown_keys(obj, path,
                        {"learning_rate", "max_epochs", "batch_size", "early_stop_patience",
                         "early_stop_min_delta", "validation_fraction"});
    read_field(obj, path, "learning_rate", cfg.loop.train.learning_rate);
    read_field(obj, path, "max_epochs", cfg.loop.train.max_epochs);
    read_field(obj, path, "batch_size", cfg.loop.train.batch_size);
    read_field(obj, path, "early_stop_patience", cfg.loop.train.early_stop_patience);
    read_field(obj, path, "early_stop_min_delta", cfg.loop.train.early_stop_min_delta);
    read_field(obj, path, "validation_fraction", cfg.loop.train.validation_fraction);
}

void parse_loop(const json* section, ExperimentConfig& cfg) {
    if (section == nullptr) return;
    const std::string path = "loop.";
    reject_unknown_keys(*section, path,
                        {"generations", "mix_ratio", "filter_ratio", "queue_capacity",
                         "gmm_components", "warm_start", "knobs", "knob_schedule", "classifier",
                         "train", "di_variant"});
    read_field(*section, path, "generations", cfg.loop.generations);
    read_field(*section, path, "mix_ratio", cfg.loop.mix_ratio);
    read_field(*section, path, "filter_ratio", cfg.loop.filter_ratio);
    read_field(*section, path, "queue_capacity", cfg.loop.queue_capacity);
    read_field(*section, path, "gmm_components", cfg.loop.gmm_components);
    read_field(*section, path, "warm_start", cfg.loop.warm_start);

    if (section->contains("knobs") && section->contains("knob_schedule")) {
        throw Error(Errc::schema, "loop.knobs and loop.knob_schedule are mutually exclusive");
    }
    if (section->contains("knobs")) {
        const SamplingKnobs knobs = read_knobs(section->at("knobs"), "loop.knobs.");
        cfg.loop.knob_schedule.assign(cfg.loop.generations, knobs);
    }
    if (section->contains("knob_schedule")) {
        const json& schedule = section->at("knob_schedule");
        if (!schedule.is_array()) {
            throw Error(Errc::validation, "loop.knob_schedule must be an array");
        }
        cfg.loop.knob_schedule.clear();
        for (std::size_t i = 0; i < schedule.size(); ++i) {
            cfg.loop.knob_schedule.push_back(
                read_knobs(schedule.at(i), "loop.knob_schedule[" + std::to_string(i) + "]."));
        }
    }
    if (section->contains("classifier")) parse_classifier(section->at("classifier"), cfg);
    if (section->contains("train")) parse_train(section->at("train"), cfg);
    if (section->contains("di_variant")) {
        const std::string variant = section->at("di_variant").get<std::string>();
        if (variant == "symmetric") {
            cfg.loop.di_variant = DiVariant::symmetric;
        } else if (variant == "directed") {
            cfg.loop.di_variant = DiVariant::directed;
        } else {
            throw Error(Errc::validation, "loop.di_variant must be \"symmetric\" or \"directed\"");
        }
    }
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

}  // namespace

void ExperimentConfig::validate() const {
    world.validate();
    loop.validate();
    if (seeds.empty()) throw Error(Errc::validation, "seeds must contain at least one entry");
}

ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::parse, e.what());
    }
    if (!root.is_object()) throw Error(Errc::validation, "config root must be a JSON object");
    reject_unknown_keys(root, "", {"world", "dataset", "loop", "seeds", "output_dir"});

    ExperimentConfig cfg;
    cfg.world.subgroup_proportions.clear();  // refilled below once G is known
    parse_world(get_section(root, "world"), cfg);
    if (cfg.world.subgroup_proportions.empty()) {
        cfg.world.subgroup_proportions =
            WorldSpec::uniform_proportions(cfg.world.num_classes, cfg.world.num_subgroups);
    }
    // The per-class mixture defaults to one component per true subgroup.
    cfg.loop.gmm_components = cfg.world.num_subgroups;
    parse_dataset(get_section(root, "dataset"), cfg);
    parse_loop(get_section(root, "loop"), cfg);

    if (root.contains("seeds")) {
        read_field(root, "", "seeds", cfg.seeds);
    }
    read_field(root, "", "output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json root;
    root["world"] = {{"num_classes", cfg.world.num_classes},
                     {"num_subgroups", cfg.world.num_subgroups},
                     {"feature_dim", cfg.world.feature_dim},
                     {"class_separation", cfg.world.class_separation},
                     {"subgroup_offset", cfg.world.subgroup_offset},
                     {"noise_scale", cfg.world.noise_scale},
                     {"subgroup_proportions", cfg.world.subgroup_proportions},
                     {"seed", cfg.world_seed}};
    root["dataset"] = {{"n_train", cfg.loop.n_original}, {"n_test", cfg.loop.n_test}};
    json loop;
    loop["generations"] = cfg.loop.generations;
    loop["mix_ratio"] = cfg.loop.mix_ratio;
    loop["filter_ratio"] = cfg.loop.filter_ratio;
    loop["queue_capacity"] = cfg.loop.queue_capacity;
    loop["gmm_components"] = cfg.loop.gmm_components;
    loop["warm_start"] = cfg.loop.warm_start;
    if (!cfg.loop.knob_schedule.empty()) {
        json schedule = json::array();
        for (const SamplingKnobs& k : cfg.loop.knob_schedule) {
            schedule.push_back({{"q", k.q}, {"u", k.u}});
        }
        loop["knob_schedule"] = std::move(schedule);
    }
    loop["classifier"] = {{"arch", cfg.loop.arch.kind == Arch::linear ? "linear" : "mlp"},
                          {"hidden", cfg.loop.arch.hidden}};
    loop["train"] = {{"learning_rate", cfg.loop.train.learning_rate},
                     {"max_epochs", cfg.loop.train.max_epochs},
                     {"batch_size", cfg.loop.train.batch_size},
                     {"early_stop_patience", cfg.loop.train.early_stop_patience},
                     {"early_stop_min_delta", cfg.loop.train.early_stop_min_delta},
                     {"validation_fraction", cfg.loop.train.validation_fraction}};
    loop["di_variant"] = cfg.loop.di_variant == DiVariant::symmetric ? "symmetric" : "directed";
    root["loop"] = std::move(loop);
    root["seeds"] = cfg.seeds;
    root["output_dir"] = cfg.output_dir;
    return root.dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string canon = serialize_config(cfg);
    std::uint64_t hash = kFnvOffset;
    for (const unsigned char c : canon) {
        hash ^= c;
        hash *= kFnvPrime;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return std::string(buf);
}

}  // namespace selfloop
