#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "selfloop/classifier.hpp"
#include "selfloop/generator.hpp"
#include "selfloop/metrics.hpp"
#include "selfloop/world.hpp"

namespace selfloop {

struct LoopConfig {
    std::size_t generations = 10;   // T; the run emits T+1 records
    double mix_ratio = 20.0;        // p percent: S = round(p/100 * n_original) per generation
    double filter_ratio = 10.0;     // r percent: drop the floor(r/100 * n) least confident
    std::size_t queue_capacity = 3; // D batches retained
    std::vector<SamplingKnobs> knob_schedule;  // per-generation; empty = neutral knobs
    std::size_t gmm_components = 3; // K per class mixture
    Architecture arch;
    TrainConfig train;
    bool warm_start = false;        // continue from f_{t-1} instead of a fresh init
    std::size_t n_original = 5000;
    std::size_t n_test = 2000;
    DiVariant di_variant = DiVariant::symmetric;

    void validate() const;
    SamplingKnobs knobs_at(std::size_t generation) const;  // 1-based generation index
};

/// FIFO stack of generated batches, oldest first.
struct StackQueue {
    std::vector<Dataset> batches;
    std::size_t capacity = 3;
};

struct LoopState {
    Dataset original;
    Dataset test;
    StackQueue queue;
    ClassifierModel classifier;
    GeneratorModel generator;
    std::vector<GenerationRecord> records;
};

/// Append the batch, evicting the oldest once capacity is exceeded.
/// Every sample must carry generated provenance.
StackQueue& queue_push(StackQueue& queue, Dataset batch);

/// Remove the floor(r/100 * n) samples the scorer is least confident on.
/// Survivors keep their original batch order; confidence ties resolve by
/// batch position (stable).
Dataset filter_batch(const Dataset& batch, const ClassifierModel& scorer, double filter_ratio);

/// Original data followed by every queue batch, oldest first.
Dataset assemble_pool(const Dataset& original, const StackQueue& queue);

/// Split total proportionally to the original class frequencies by largest
/// remainder; ties go to the lower class index.
std::vector<std::size_t> proportional_class_counts(const Dataset& original, std::size_t total);

using RecordSink = std::function<void(const GenerationRecord&)>;

/// The whole self-consuming loop: generation 0 trains on original data
/// only; each later generation refits the generator on the current pool,
/// samples, filters with the previous classifier, pushes into the queue,
/// and retrains. The per-generation FID compares the raw (unfiltered)
/// batch against the original training features; generation 0 reports 0.
/// Each record is handed to the sink before the next generation starts,
/// so partial results survive an aborting error. Errors carry the failing
/// generation index. When final_state is non-null it receives the loop
/// state after the last generation.
std::vector<GenerationRecord> run_loop(const World& world, const LoopConfig& cfg, std::uint64_t seed,
                                       const RecordSink& sink = {}, LoopState* final_state = nullptr);

}  // namespace selfloop
