#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "seqmask/data.hpp"
#include "seqmask/explainer.hpp"
#include "seqmask/explanandum.hpp"
#include "seqmask/losses.hpp"
#include "seqmask/tensor.hpp"

namespace seqmask {

struct TrainConfig {
  double base_lr = 0.0002;
  std::int64_t batch_size = 16;
  int max_epochs = 20;
  int patience = 3;            // epochs of no validation improvement
  std::int64_t warmup_steps = 0;
  double weight_decay = 0.0;   // decoupled, applied after the Adam update
  std::uint64_t seed = 0;
};

// Half-cosine decay from base_lr at step 0 to 0 at step == total_steps.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr);

// cosine_lr preceded by a linear ramp over the first warmup_steps steps.
double schedule_lr(std::int64_t step, std::int64_t total_steps, double base_lr,
                   std::int64_t warmup_steps);

// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8). Refuses
// parameters that do not require gradients, both at construction and at every
// step, so a frozen model can never be touched by mistake.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);

  // Applies one update from the gradients currently stored on the
  // parameters; a parameter without a gradient buffer contributes zero.
  void step(double lr, double weight_decay = 0.0);

  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double beta1_, beta2_, epsilon_;
  std::int64_t t_ = 0;
};

struct EpochStats {
  double train_loss = 0.0;  // mean over steps of the batch-mean loss
  double val_loss = 0.0;
  double last_lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // parameters were restored to this epoch's snapshot
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
  std::int64_t steps = 0;
};

// Supervised training of the classifier on unmasked inputs. Keeps the
// best-validation parameter snapshot and restores it before returning.
// Throws if the model is frozen or a loss turns non-finite.
TrainHistory train_explanandum(Explanandum& model, const LabeledDataset& train,
                               const LabeledDataset& val,
                               const TrainConfig& config);

struct StepRow {
  std::int64_t step = 0;
  double l_c = 0.0, l_e = 0.0, l_a = 0.0, l_tv = 0.0, total = 0.0, lr = 0.0;
};

struct ExplainerTrainResult {
  TrainHistory history;
  std::vector<StepRow> step_rows;
};

// Trains the mask network against the frozen classifier. Batches share one
// batch-norm pass: per-item feature blocks are concatenated row-wise,
// normalized together, then sliced back so every item keeps its exact
// length. Requires model.frozen(); verifies the classifier's parameter hash
// is unchanged afterwards. When loss_csv_path is non-empty, writes one
// "step, L_c, L_e, L_a, L_tv, total, lr" row per optimizer step.
ExplainerTrainResult train_explainer(Explainer& explainer,
                                     const Explanandum& model,
                                     const LabeledDataset& train,
                                     const LabeledDataset& val,
                                     const TrainConfig& config,
                                     const LossWeights& weights,
                                     const AreaBounds& bounds,
                                     const std::string& loss_csv_path = "");

}  // namespace seqmask
