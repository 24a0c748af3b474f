#include "selfloop/loop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "selfloop/error.hpp"

namespace selfloop {

namespace {

std::vector<Vector> feature_cloud(const Dataset& data) {
    std::vector<Vector> cloud;
    cloud.reserve(data.size());
    for (const Sample& s : data.samples) cloud.push_back(s.features);
    return cloud;
}

}  // namespace

void LoopConfig::validate() const {
    if (!(mix_ratio > 0.0)) throw Error(Errc::validation, "loop.mix_ratio must be > 0");
    if (!(filter_ratio >= 0.0) || !(filter_ratio < 100.0)) {
        throw Error(Errc::validation, "loop.filter_ratio must be in [0, 100)");
    }
    if (queue_capacity < 1) throw Error(Errc::validation, "loop.queue_capacity must be >= 1");
    if (gmm_components < 1) throw Error(Errc::validation, "loop.gmm_components must be >= 1");
    if (!knob_schedule.empty() && knob_schedule.size() != generations) {
        throw Error(Errc::validation, "loop.knob_schedule must be empty or have one entry per generation");
    }
    for (const SamplingKnobs& k : knob_schedule) k.validate();
    if (n_original < 2) throw Error(Errc::validation, "loop.n_original must be >= 2");
    if (n_test < 1) throw Error(Errc::validation, "loop.n_test must be >= 1");
    train.validate();
}

SamplingKnobs LoopConfig::knobs_at(std::size_t generation) const {
    if (knob_schedule.empty()) return SamplingKnobs{};
    return knob_schedule.at(generation - 1);
}

StackQueue& queue_push(StackQueue& queue, Dataset batch) {
    if (queue.capacity < 1) throw Error(Errc::validation, "queue capacity must be >= 1");
    for (const Sample& s : batch.samples) {
        if (s.is_real()) {
            throw Error(Errc::provenance, "real sample pushed into the generated-batch queue");
        }
    }
    queue.batches.push_back(std::move(batch));
    while (queue.batches.size() > queue.capacity) queue.batches.erase(queue.batches.begin());
    return queue;
}

Dataset filter_batch(const Dataset& batch, const ClassifierModel& scorer, double filter_ratio) {
    if (!(filter_ratio >= 0.0) || !(filter_ratio < 100.0)) {
        throw Error(Errc::validation, "filter ratio must be in [0, 100)");
    }
    const std::size_t n = batch.size();
    const auto drop = static_cast<std::size_t>(std::floor(filter_ratio / 100.0 * static_cast<double>(n)));
    if (drop == 0) return batch;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Vector scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = confidence_score(scorer, batch.samples[i].features);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<bool> keep(n, false);
    for (std::size_t rank = 0; rank + drop < n; ++rank) keep[order[rank]] = true;

    Dataset out;
    out.schema = batch.schema;
    out.samples.reserve(n - drop);
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) out.samples.push_back(batch.samples[i]);
    }
    return out;
}

Dataset assemble_pool(const Dataset& original, const StackQueue& queue) {
    Dataset pool = original;
    for (const Dataset& batch : queue.batches) {
        if (!batch.samples.empty() && !(batch.schema == original.schema)) {
            throw Error(Errc::shape, "queue batch schema does not match the original data");
        }
        pool.samples.insert(pool.samples.end(), batch.samples.begin(), batch.samples.end());
    }
    return pool;
}

std::vector<std::size_t> proportional_class_counts(const Dataset& original, std::size_t total) {
    const std::size_t classes = original.schema.num_classes;
    std::vector<std::size_t> freq(classes, 0);
    for (const Sample& s : original.samples) ++freq[static_cast<std::size_t>(s.class_label)];

    const auto n = static_cast<double>(original.size());
    std::vector<std::size_t> counts(classes, 0);
    std::vector<std::pair<double, std::size_t>> remainders;  // (-fraction, class) for ascending sort
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        const double share = static_cast<double>(total) * static_cast<double>(freq[c]) / n;
        counts[c] = static_cast<std::size_t>(std::floor(share));
        assigned += counts[c];
        remainders.emplace_back(-(share - std::floor(share)), c);
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
        ++counts[remainders[i % classes].second];
    }
    return counts;
}

std::vector<GenerationRecord> run_loop(const World& world, const LoopConfig& cfg, std::uint64_t seed,
                                       const RecordSink& sink, LoopState* final_state) {
    cfg.validate();
    RandomSource rng(seed);

    LoopState state;
    RandomSource data_rng = rng.fork();
    state.original = sample_dataset(world, cfg.n_original, data_rng);
    state.test = sample_dataset(world, cfg.n_test, data_rng);
    std::uint64_t next_id = assign_sample_ids(state.original, 1);
    next_id = assign_sample_ids(state.test, next_id);
    state.queue.capacity = cfg.queue_capacity;

    const auto sampled = static_cast<std::size_t>(
        std::llround(cfg.mix_ratio / 100.0 * static_cast<double>(cfg.n_original)));
    if (cfg.generations >= 1 && sampled < 1) {
        throw Error(Errc::validation, "loop.mix_ratio yields zero generated samples per generation");
    }
    const std::vector<std::size_t> class_counts =
        proportional_class_counts(state.original, sampled);

    auto record_generation = [&state, &cfg, &sink](int t, double fid_value) {
        GenerationRecord rec =
            evaluate_generation(t, state.classifier, state.test, fid_value, cfg.di_variant);
        state.records.push_back(rec);
        if (sink) sink(rec);
    };

    try {
        RandomSource init_rng = rng.fork();
        ClassifierModel blank = init_classifier(cfg.arch, world.spec.feature_dim,
                                                world.spec.num_classes, init_rng);
        RandomSource train_rng = rng.fork();
        state.classifier = train(blank, state.original, cfg.train, train_rng).first;
        record_generation(0, 0.0);
    } catch (const Error& e) {
        throw Error(e.code(), "generation 0: " + e.detail());
    }

    const std::vector<Vector> original_cloud = feature_cloud(state.original);
    for (std::size_t t = 1; t <= cfg.generations; ++t) {
        try {
            Dataset pool = assemble_pool(state.original, state.queue);
            RandomSource fit_rng = rng.fork();
            state.generator = fit_generator(pool, cfg.gmm_components, fit_rng);

            RandomSource sample_rng = rng.fork();
            Dataset raw_batch = sample_generator(state.generator, class_counts, cfg.knobs_at(t),
                                                 static_cast<int>(t), sample_rng);
            const double fid_value = fid(original_cloud, feature_cloud(raw_batch));

            Dataset kept = filter_batch(raw_batch, state.classifier, cfg.filter_ratio);
            next_id = assign_sample_ids(kept, next_id);
            queue_push(state.queue, std::move(kept));
            pool = assemble_pool(state.original, state.queue);

            RandomSource train_rng = rng.fork();
            if (cfg.warm_start) {
                state.classifier = train(state.classifier, pool, cfg.train, train_rng).first;
            } else {
                RandomSource init_rng = rng.fork();
                ClassifierModel blank = init_classifier(cfg.arch, world.spec.feature_dim,
                                                        world.spec.num_classes, init_rng);
                state.classifier = train(blank, pool, cfg.train, train_rng).first;
            }
            record_generation(static_cast<int>(t), fid_value);
        } catch (const Error& e) {
            throw Error(e.code(), "generation " + std::to_string(t) + ": " + e.detail());
        }
    }
    if (final_state) *final_state = std::move(state);
    return final_state ? final_state->records : state.records;
}

}  // namespace selfloop
