#include "iwin/train.hpp"

#include <cmath>

#include "iwin/kernels.hpp"

namespace iwin {

double evaluate_loss(const ModelConfig& cfg, const ModelWeights& weights, const Dataset& data) {
    Tensor logits = backbone_forward(data.images, cfg, weights);
    return cross_entropy_logits(logits, data.labels).item();
}

double evaluate_accuracy(const ModelConfig& cfg, const ModelWeights& weights, const Dataset& data) {
    Tensor logits = backbone_forward(data.images, cfg, weights);
    const std::int64_t B = logits.dim(0), K = logits.dim(1);
    std::int64_t hits = 0;
    for (std::int64_t b = 0; b < B; ++b) {
        std::int64_t best = 0;
        for (std::int64_t k = 1; k < K; ++k) {
            if (logits.at({b, k}) > logits.at({b, best})) best = k;
        }
        if (best == data.labels[static_cast<std::size_t>(b)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(B);
}

TrainResult train_toy(const ModelConfig& cfg, ModelWeights& weights, const Dataset& data,
                      int steps, double lr) {
    TrainResult res;
    res.initial_loss = evaluate_loss(cfg, weights, data);
    res.final_loss = res.initial_loss;
    for (int step = 0; step < steps; ++step) {
        std::vector<Tensor> grads;
        double loss = 0.0;
        try {
            Tape tape;
            ModelWeights tracked = watch_weights(tape, weights);
            Tensor logits = backbone_forward(data.images, cfg, tracked);
            Tensor l = cross_entropy_logits(logits, data.labels);
            loss = l.item();
            if (!std::isfinite(loss)) throw NumericError("loss is not finite");
            tape.backward(l);
            for_each_tensor(tracked,
                            [&](const std::string&, Tensor& t) { grads.push_back(tape.grad(t)); });
        } catch (const NumericError&) {
            res.diverged = true;
            res.diverged_step = step;
            res.steps_run = step;
            return res;
        }
        // tape and its captured activations are gone; update in place
        std::size_t i = 0;
        for_each_tensor(weights, [&](const std::string&, Tensor& t) {
            kernels::active().axpy(-lr, grads[i++].data(), t.data(), t.size());
        });
        res.final_loss = loss;
        res.steps_run = step + 1;
    }
    res.final_loss = evaluate_loss(cfg, weights, data);
    res.accuracy = evaluate_accuracy(cfg, weights, data);
    return res;
}

}  // namespace iwin
