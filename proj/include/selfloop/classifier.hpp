#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "selfloop/numeric.hpp"
#include "selfloop/world.hpp"

namespace selfloop {

enum class Arch { linear, mlp };

/// Linear is plain softmax regression; mlp adds one rectifier hidden layer.
struct Architecture {
    Arch kind = Arch::linear;
    std::size_t hidden = 32;
};

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;
};

struct ClassifierModel {
    Architecture arch;
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    std::vector<DenseLayer> layers;
};

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t max_epochs = 50;
    std::size_t batch_size = 128;
    std::size_t early_stop_patience = 5;
    double early_stop_min_delta = 1e-4;
    double validation_fraction = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_acc;
    std::size_t stopped_epoch = 0;
};

/// Weights from U(-s, s) with s = 1/sqrt(fan_in), biases zero.
ClassifierModel init_classifier(const Architecture& arch, std::size_t input_dim,
                                std::size_t num_classes, RandomSource& rng);

/// Mini-batch cross-entropy training with adaptive-moment updates and a
/// stratified validation split carved from the pool. Stops early when the
/// validation loss fails to improve by min_delta for patience epochs;
/// returns the parameters of the best-validation epoch.
std::pair<ClassifierModel, TrainHistory> train(const ClassifierModel& model, const Dataset& pool,
                                               const TrainConfig& cfg, RandomSource& rng);

/// Softmax probabilities (max-subtraction stabilized); entries sum to 1.
Vector predict_proba(const ClassifierModel& model, const Vector& x);

/// Argmax of predict_proba; ties resolve to the lowest class index.
int predict_label(const ClassifierModel& model, const Vector& x);

/// Max softmax probability in (0, 1]; higher means more confident.
double confidence_score(const ClassifierModel& model, const Vector& x);

/// Mean cross-entropy over the batch; fills *grads (same layer shapes as
/// the model) when non-null. Exposed for optimizer steps and gradient
/// checking.
double batch_loss_and_grad(const ClassifierModel& model, const std::vector<const Sample*>& batch,
                           std::vector<DenseLayer>* grads);

std::vector<double> flatten_parameters(const ClassifierModel& model);
void set_parameters(ClassifierModel& model, const std::vector<double>& flat);

std::string classifier_to_json(const ClassifierModel& model);
ClassifierModel classifier_from_json(const std::string& text);

}  // namespace selfloop
