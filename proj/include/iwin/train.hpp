#pragma once

#include "iwin/model.hpp"
#include "iwin/synthetic.hpp"

namespace iwin {

// Plain full-batch gradient descent with cross-entropy; single-threaded and
// deterministic for a fixed seed/dataset.
struct TrainResult {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double accuracy = 0.0;
    int steps_run = 0;
    bool diverged = false;
    int diverged_step = -1;
};

TrainResult train_toy(const ModelConfig& cfg, ModelWeights& weights, const Dataset& data,
                      int steps, double lr);

double evaluate_accuracy(const ModelConfig& cfg, const ModelWeights& weights, const Dataset& data);
double evaluate_loss(const ModelConfig& cfg, const ModelWeights& weights, const Dataset& data);

}  // namespace iwin
