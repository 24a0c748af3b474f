#include "selfloop/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "selfloop/error.hpp"

namespace selfloop {

namespace {

std::vector<DenseLayer> zero_like(const std::vector<DenseLayer>& layers) {
    std::vector<DenseLayer> out;
    out.reserve(layers.size());
    for (const DenseLayer& layer : layers) {
        DenseLayer z;
        z.weights = Matrix(layer.weights.rows(), layer.weights.cols());
        z.bias = Vector(layer.bias.size(), 0.0);
        out.push_back(std::move(z));
    }
    return out;
}

Vector forward_logits(const ClassifierModel& model, const Vector& x, Vector* hidden_pre) {
    if (x.size() != model.input_dim) {
        throw Error(Errc::shape, "classifier input has dimension " + std::to_string(x.size()) +
                                     ", expected " + std::to_string(model.input_dim));
    }
    if (model.arch.kind == Arch::linear) {
        Vector logits = model.layers[0].weights * x;
        for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += model.layers[0].bias[k];
        return logits;
    }
    Vector pre = model.layers[0].weights * x;
    for (std::size_t j = 0; j < pre.size(); ++j) pre[j] += model.layers[0].bias[j];
    Vector act(pre.size());
    for (std::size_t j = 0; j < pre.size(); ++j) act[j] = pre[j] > 0.0 ? pre[j] : 0.0;
    if (hidden_pre != nullptr) *hidden_pre = pre;
    Vector logits = model.layers[1].weights * act;
    for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += model.layers[1].bias[k];
    return logits;
}

Vector softmax_from_logits(const Vector& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    Vector p(logits.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - m);
        sum += p[k];
    }
    for (double& v : p) v /= sum;
    return p;
}

void shuffle_indices(std::vector<std::size_t>& idx, RandomSource& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

void flatten_layers(const std::vector<DenseLayer>& layers, std::vector<double>& out) {
    out.clear();
    for (const DenseLayer& layer : layers) {
        out.insert(out.end(), layer.weights.data().begin(), layer.weights.data().end());
        out.insert(out.end(), layer.bias.begin(), layer.bias.end());
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error(Errc::validation, "train.learning_rate must be finite and >= 0");
    }
    if (max_epochs < 1) throw Error(Errc::validation, "train.max_epochs must be >= 1");
    if (batch_size < 1) throw Error(Errc::validation, "train.batch_size must be >= 1");
    if (early_stop_patience < 1) {
        throw Error(Errc::validation, "train.early_stop_patience must be >= 1");
    }
    if (!(early_stop_min_delta >= 0.0)) {
        throw Error(Errc::validation, "train.early_stop_min_delta must be >= 0");
    }
    if (!(validation_fraction > 0.0) || !(validation_fraction <= 0.5)) {
        throw Error(Errc::validation, "train.validation_fraction must be in (0, 0.5]");
    }
    if (!(beta1 >= 0.0) || !(beta1 < 1.0) || !(beta2 >= 0.0) || !(beta2 < 1.0)) {
        throw Error(Errc::validation, "train.beta1 and train.beta2 must be in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw Error(Errc::validation, "train.epsilon must be > 0");
}

ClassifierModel init_classifier(const Architecture& arch, std::size_t input_dim,
                                std::size_t num_classes, RandomSource& rng) {
    if (input_dim < 1) throw Error(Errc::validation, "classifier input_dim must be >= 1");
    if (num_classes < 1) throw Error(Errc::validation, "classifier num_classes must be >= 1");
    if (arch.kind == Arch::mlp && arch.hidden < 1) {
        throw Error(Errc::validation, "classifier hidden width must be >= 1");
    }
    ClassifierModel model;
    model.arch = arch;
    model.input_dim = input_dim;
    model.num_classes = num_classes;
    auto make_layer = [&rng](std::size_t out, std::size_t in) {
        DenseLayer layer;
        layer.weights = Matrix(out, in);
        const double s = 1.0 / std::sqrt(static_cast<double>(in));
        for (std::size_t r = 0; r < out; ++r) {
            for (std::size_t c = 0; c < in; ++c) layer.weights(r, c) = rng.uniform(-s, s);
        }
        layer.bias = Vector(out, 0.0);
        return layer;
    };
    if (arch.kind == Arch::linear) {
        model.layers.push_back(make_layer(num_classes, input_dim));
    } else {
        model.layers.push_back(make_layer(arch.hidden, input_dim));
        model.layers.push_back(make_layer(num_classes, arch.hidden));
    }
    return model;
}

double batch_loss_and_grad(const ClassifierModel& model, const std::vector<const Sample*>& batch,
                           std::vector<DenseLayer>* grads) {
    if (batch.empty()) throw Error(Errc::empty_input, "loss requested for an empty batch");
    if (grads != nullptr) *grads = zero_like(model.layers);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const Sample* sample : batch) {
        const int y = sample->class_label;
        if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes) {
            throw Error(Errc::shape, "class label " + std::to_string(y) + " outside model range");
        }
        Vector pre;
        const Vector logits = forward_logits(model, sample->features, &pre);
        const double m = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (const double l : logits) sum += std::exp(l - m);
        const double lse = m + std::log(sum);
        loss += (lse - logits[static_cast<std::size_t>(y)]) * inv_n;
        if (grads == nullptr) continue;

        Vector dlogits(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k) {
            const double p = std::exp(logits[k] - lse);
            dlogits[k] = (p - (static_cast<int>(k) == y ? 1.0 : 0.0)) * inv_n;
        }
        if (model.arch.kind == Arch::linear) {
            DenseLayer& g = (*grads)[0];
            for (std::size_t k = 0; k < dlogits.size(); ++k) {
                for (std::size_t j = 0; j < model.input_dim; ++j) {
                    g.weights(k, j) += dlogits[k] * sample->features[j];
                }
                g.bias[k] += dlogits[k];
            }
        } else {
            Vector act(pre.size());
            for (std::size_t j = 0; j < pre.size(); ++j) act[j] = pre[j] > 0.0 ? pre[j] : 0.0;
            DenseLayer& g2 = (*grads)[1];
            for (std::size_t k = 0; k < dlogits.size(); ++k) {
                for (std::size_t j = 0; j < act.size(); ++j) {
                    g2.weights(k, j) += dlogits[k] * act[j];
                }
                g2.bias[k] += dlogits[k];
            }
            const Matrix& w2 = model.layers[1].weights;
            Vector dpre(pre.size(), 0.0);
            for (std::size_t j = 0; j < pre.size(); ++j) {
                if (pre[j] <= 0.0) continue;
                double acc = 0.0;
                for (std::size_t k = 0; k < dlogits.size(); ++k) acc += w2(k, j) * dlogits[k];
                dpre[j] = acc;
            }
            DenseLayer& g1 = (*grads)[0];
            for (std::size_t j = 0; j < dpre.size(); ++j) {
                for (std::size_t i = 0; i < model.input_dim; ++i) {
                    g1.weights(j, i) += dpre[j] * sample->features[i];
                }
                g1.bias[j] += dpre[j];
            }
        }
    }
    return loss;
}

std::pair<ClassifierModel, TrainHistory> train(const ClassifierModel& model, const Dataset& pool,
                                               const TrainConfig& cfg, RandomSource& rng) {
    cfg.validate();
    if (pool.empty()) throw Error(Errc::empty_input, "training pool is empty");
    if (pool.schema.feature_dim != model.input_dim ||
        pool.schema.num_classes != model.num_classes) {
        throw Error(Errc::shape, "training pool schema does not match the classifier");
    }

    std::vector<std::vector<std::size_t>> by_class(model.num_classes);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        by_class[static_cast<std::size_t>(pool.samples[i].class_label)].push_back(i);
    }
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::vector<std::size_t>& members = by_class[c];
        shuffle_indices(members, rng);
        const auto val_count = static_cast<std::size_t>(
            std::floor(cfg.validation_fraction * static_cast<double>(members.size())));
        val_idx.insert(val_idx.end(), members.begin(),
                       members.begin() + static_cast<std::ptrdiff_t>(val_count));
        train_idx.insert(train_idx.end(),
                         members.begin() + static_cast<std::ptrdiff_t>(val_count), members.end());
        if (members.size() == val_count) {
            throw Error(Errc::missing_class,
                        "class " + std::to_string(c) + " absent from the training split");
        }
    }

    std::vector<const Sample*> val_batch;
    val_batch.reserve(val_idx.size());
    for (const std::size_t i : val_idx) val_batch.push_back(&pool.samples[i]);

    ClassifierModel work = model;
    std::vector<double> theta = flatten_parameters(work);
    std::vector<double> grad_flat(theta.size(), 0.0);
    std::vector<double> moment1(theta.size(), 0.0);
    std::vector<double> moment2(theta.size(), 0.0);
    std::vector<DenseLayer> grads;
    std::size_t step = 0;

    TrainHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> best_theta = theta;
    std::size_t bad_epochs = 0;

    auto eval_split = [&work](const std::vector<const Sample*>& batch, double* acc) {
        const double loss = batch_loss_and_grad(work, batch, nullptr);
        if (acc != nullptr) {
            std::size_t hits = 0;
            for (const Sample* s : batch) {
                if (predict_label(work, s->features) == s->class_label) ++hits;
            }
            *acc = static_cast<double>(hits) / static_cast<double>(batch.size());
        }
        return loss;
    };

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_indices(train_idx, rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, train_idx.size());
            std::vector<const Sample*> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&pool.samples[train_idx[i]]);
            const double loss = batch_loss_and_grad(work, batch, &grads);
            loss_sum += loss * static_cast<double>(batch.size());
            flatten_layers(grads, grad_flat);
            ++step;
            const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < theta.size(); ++p) {
                moment1[p] = cfg.beta1 * moment1[p] + (1.0 - cfg.beta1) * grad_flat[p];
                moment2[p] = cfg.beta2 * moment2[p] + (1.0 - cfg.beta2) * grad_flat[p] * grad_flat[p];
                const double m_hat = moment1[p] / corr1;
                const double v_hat = moment2[p] / corr2;
                theta[p] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
            }
            set_parameters(work, theta);
        }
        history.train_loss.push_back(loss_sum / static_cast<double>(train_idx.size()));
        double val_acc = 0.0;
        double val_loss = 0.0;
        if (!val_batch.empty()) {
            val_loss = eval_split(val_batch, &val_acc);
        } else {
            std::vector<const Sample*> train_batch;
            train_batch.reserve(train_idx.size());
            for (const std::size_t i : train_idx) train_batch.push_back(&pool.samples[i]);
            val_loss = eval_split(train_batch, &val_acc);
        }
        history.val_loss.push_back(val_loss);
        history.val_acc.push_back(val_acc);
        history.stopped_epoch = epoch;
        if (val_loss < best_val - cfg.early_stop_min_delta) {
            best_val = val_loss;
            best_theta = theta;
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.early_stop_patience) {
            break;
        }
    }

    set_parameters(work, best_theta);
    return {std::move(work), std::move(history)};
}

Vector predict_proba(const ClassifierModel& model, const Vector& x) {
    return softmax_from_logits(forward_logits(model, x, nullptr));
}

int predict_label(const ClassifierModel& model, const Vector& x) {
    const Vector logits = forward_logits(model, x, nullptr);
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k) {
        if (logits[k] > logits[best]) best = k;
    }
    return static_cast<int>(best);
}

double confidence_score(const ClassifierModel& model, const Vector& x) {
    const Vector p = predict_proba(model, x);
    return *std::max_element(p.begin(), p.end());
}

std::vector<double> flatten_parameters(const ClassifierModel& model) {
    std::vector<double> flat;
    flatten_layers(model.layers, flat);
    return flat;
}

void set_parameters(ClassifierModel& model, const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (DenseLayer& layer : model.layers) {
        const std::size_t wn = layer.weights.data().size();
        if (pos + wn + layer.bias.size() > flat.size()) {
            throw Error(Errc::shape, "parameter vector shorter than the model");
        }
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + wn),
                  layer.weights.data().begin());
        pos += wn;
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + layer.bias.size()),
                  layer.bias.begin());
        pos += layer.bias.size();
    }
    if (pos != flat.size()) throw Error(Errc::shape, "parameter vector longer than the model");
}

std::string classifier_to_json(const ClassifierModel& model) {
    nlohmann::json j;
    j["arch"] = model.arch.kind == Arch::linear ? "linear" : "mlp";
    if (model.arch.kind == Arch::mlp) j["hidden"] = model.arch.hidden;
    j["input_dim"] = model.input_dim;
    j["num_classes"] = model.num_classes;
    nlohmann::json layers = nlohmann::json::array();
    for (const DenseLayer& layer : model.layers) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < layer.weights.cols(); ++c) row.push_back(layer.weights(r, c));
            rows.push_back(std::move(row));
        }
        layers.push_back({{"weights", std::move(rows)}, {"bias", layer.bias}});
    }
    j["layers"] = std::move(layers);
    return j.dump(2);
}

ClassifierModel classifier_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::parse, std::string("classifier json: ") + e.what());
    }
    try {
        ClassifierModel model;
        const std::string kind = j.at("arch").get<std::string>();
        if (kind == "linear") {
            model.arch.kind = Arch::linear;
        } else if (kind == "mlp") {
            model.arch.kind = Arch::mlp;
            model.arch.hidden = j.at("hidden").get<std::size_t>();
        } else {
            throw Error(Errc::schema, "classifier json: unknown arch '" + kind + "'");
        }
        model.input_dim = j.at("input_dim").get<std::size_t>();
        model.num_classes = j.at("num_classes").get<std::size_t>();
        for (const nlohmann::json& jl : j.at("layers")) {
            DenseLayer layer;
            const auto& rows = jl.at("weights");
            const std::size_t nr = rows.size();
            const std::size_t nc = nr > 0 ? rows.at(0).size() : 0;
            layer.weights = Matrix(nr, nc);
            for (std::size_t r = 0; r < nr; ++r) {
                if (rows.at(r).size() != nc) {
                    throw Error(Errc::schema, "classifier json: ragged weight matrix");
                }
                for (std::size_t c = 0; c < nc; ++c) {
                    layer.weights(r, c) = rows.at(r).at(c).get<double>();
                }
            }
            layer.bias = jl.at("bias").get<Vector>();
            if (layer.bias.size() != nr) {
                throw Error(Errc::schema, "classifier json: bias length mismatch");
            }
            model.layers.push_back(std::move(layer));
        }
        const std::size_t expected = model.arch.kind == Arch::linear ? 1 : 2;
        if (model.layers.size() != expected) {
            throw Error(Errc::schema, "classifier json: wrong layer count");
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::schema, std::string("classifier json: ") + e.what());
    }
}

}  // namespace selfloop
