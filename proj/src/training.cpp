#include "seqmask/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqmask/masking.hpp"
#include "seqmask/rng.hpp"

namespace seqmask {

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> snap;
  snap.reserve(params.size());
  for (const Tensor& p : params) snap.emplace_back(p.values().begin(), p.values().end());
  return snap;
}

void restore_params(std::vector<Tensor>& params,
                    const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& dst = params[i].mutable_values();
    std::copy(snap[i].begin(), snap[i].end(), dst.begin());
  }
}

void check_finite(double loss, int epoch, std::int64_t step) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "training diverged: loss " << loss << " at epoch " << epoch
        << " step " << step << "; lower the learning rate or check the data";
    throw std::runtime_error(msg.str());
  }
}

void check_dataset(const LabeledDataset& train, const LabeledDataset& val) {
  if (train.size() == 0) throw std::invalid_argument("training set is empty");
  if (val.size() == 0) throw std::invalid_argument("validation set is empty");
}

}  // namespace

double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr) {
  if (total_steps <= 0) {
    throw std::invalid_argument("cosine_lr: total_steps must be positive");
  }
  const std::int64_t s = std::clamp<std::int64_t>(step, 0, total_steps);
  const double phase = std::numbers::pi * static_cast<double>(s) /
                       static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(phase));
}

double schedule_lr(std::int64_t step, std::int64_t total_steps, double base_lr,
                   std::int64_t warmup_steps) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) /
           static_cast<double>(warmup_steps);
  }
  const std::int64_t rest = total_steps - warmup_steps;
  if (rest <= 0) return base_lr;
  return cosine_lr(step - warmup_steps, rest, base_lr);
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2,
           double epsilon)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2),
      epsilon_(epsilon) {
  if (params_.empty()) throw std::invalid_argument("Adam: no parameters");
  for (const Tensor& p : params_) {
    if (!p.requires_grad()) {
      throw std::logic_error("Adam: refusing a parameter that does not require "
                             "gradients (frozen model?)");
    }
  }
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
    v_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
  }
}

void Adam::step(double lr, double weight_decay) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.requires_grad()) {
      throw std::logic_error("Adam: parameter was frozen after registration");
    }
    auto& vals = p.mutable_values();
    const auto grad = p.grad();  // empty when the last graph skipped it
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g;
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g * g;
      const double m_hat = m_[i][k] / bc1;
      const double v_hat = v_[i][k] / bc2;
      vals[k] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
      if (weight_decay != 0.0) vals[k] -= lr * weight_decay * vals[k];
    }
  }
}

TrainHistory train_explanandum(Explanandum& model, const LabeledDataset& train,
                               const LabeledDataset& val,
                               const TrainConfig& config) {
  if (model.frozen()) {
    throw std::logic_error("train_explanandum: model is frozen");
  }
  check_dataset(train, val);

  std::vector<Tensor> params = model.params();
  Adam opt(params);
  const auto n = train.size();
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>(
      (n + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size));
  const std::int64_t total_steps = steps_per_epoch * config.max_epochs;

  Rng run_rng(config.seed);
  TrainHistory history;
  auto best = snapshot_params(params);
  int bad_epochs = 0;
  std::int64_t global_step = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng order_rng = run_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto order = shuffled_indices(n, order_rng);

    double epoch_loss = 0.0;
    std::int64_t epoch_steps = 0;
    double last_lr = 0.0;
    for (std::size_t begin = 0; begin < n;
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(n, begin + static_cast<std::size_t>(config.batch_size));
      Tensor acc = Tensor::scalar(0.0);
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t item = order[b];
        acc = add(acc, model.loss(model.forward(train.sequences[item]),
                                  train.labels[item]));
      }
      Tensor batch_loss =
          mul_scalar(acc, 1.0 / static_cast<double>(end - begin));
      check_finite(batch_loss.value(), epoch, global_step);
      batch_loss.backward();
      last_lr = schedule_lr(global_step, total_steps, config.base_lr,
                            config.warmup_steps);
      opt.step(last_lr, config.weight_decay);
      epoch_loss += batch_loss.value();
      ++epoch_steps;
      ++global_step;
    }

    double val_loss = 0.0;
    {
      NoGradGuard guard;
      for (std::size_t i = 0; i < val.size(); ++i) {
        val_loss +=
            model.loss(model.forward(val.sequences[i]), val.labels[i]).value();
      }
      val_loss /= static_cast<double>(val.size());
    }
    check_finite(val_loss, epoch, global_step);

    history.epochs.push_back({epoch_loss / static_cast<double>(epoch_steps),
                              val_loss, last_lr});
    if (val_loss < history.best_val_loss) {
      history.best_val_loss = val_loss;
      history.best_epoch = epoch;
      best = snapshot_params(params);
      bad_epochs = 0;
    } else if (++bad_epochs >= config.patience) {
      history.early_stopped = true;
      break;
    }
  }

  restore_params(params, best);
  history.steps = global_step;
  return history;
}

namespace {

void check_head_match(const std::vector<HeadSpec>& a,
                      const std::vector<HeadSpec>& b) {
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    ok = a[i].name == b[i].name && a[i].num_classes == b[i].num_classes;
  }
  if (!ok) {
    throw std::invalid_argument(
        "explainer and classifier disagree on the label heads");
  }
}

// Mask stack rows for one item sliced out of the shared batch-norm pass,
// padded back to the item's full length with constant zero rows.
Tensor pad_stack(const Tensor& sliced, std::int64_t full_len) {
  const std::int64_t have = sliced.rows();
  if (have == full_len) return sliced;
  Tensor zeros = Tensor::zeros({full_len - have, sliced.cols()});
  const Tensor parts[] = {sliced, zeros};
  return concat_rows(std::span<const Tensor>(parts, 2));
}

}  // namespace

ExplainerTrainResult train_explainer(Explainer& explainer,
                                     const Explanandum& model,
                                     const LabeledDataset& train,
                                     const LabeledDataset& val,
                                     const TrainConfig& config,
                                     const LossWeights& weights,
                                     const AreaBounds& bounds,
                                     const std::string& loss_csv_path) {
  if (!model.frozen()) {
    throw std::logic_error(
        "train_explainer: the classifier must be frozen first");
  }
  check_dataset(train, val);
  check_head_match(explainer.config().heads, model.config().heads);
  const std::uint64_t hash_before = model.param_hash();

  std::ofstream csv;
  if (!loss_csv_path.empty()) {
    csv.open(loss_csv_path);
    if (!csv) {
      throw std::runtime_error("cannot open loss log: " + loss_csv_path);
    }
    csv << std::setprecision(17) << "step, L_c, L_e, L_a, L_tv, total, lr\n";
  }

  std::vector<Tensor> params = explainer.params();
  Adam opt(params);
  const auto n = train.size();
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>(
      (n + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size));
  const std::int64_t total_steps = steps_per_epoch * config.max_epochs;

  auto item_loss = [&](const MaskStack& S, std::size_t item) {
    Tensor m = target_mask(S, train.labels[item]);
    Tensor n_mask = nontarget_mask(S, train.labels[item]);
    return total_loss(train.sequences[item], train.labels[item], S, m, n_mask,
                      weights, bounds, model);
  };
  auto val_item_loss = [&](std::size_t item) {
    MaskStack S = explainer.explain(val.sequences[item]);
    Tensor m = target_mask(S, val.labels[item]);
    Tensor n_mask = nontarget_mask(S, val.labels[item]);
    return total_loss(val.sequences[item], val.labels[item], S, m, n_mask,
                      weights, bounds, model)
        .total.value();
  };

  Rng run_rng(config.seed);
  ExplainerTrainResult result;
  TrainHistory& history = result.history;
  auto best = snapshot_params(params);
  auto best_buffers = explainer.named_buffers();
  int bad_epochs = 0;
  std::int64_t global_step = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng order_rng = run_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto order = shuffled_indices(n, order_rng);

    double epoch_loss = 0.0;
    std::int64_t epoch_steps = 0;
    double last_lr = 0.0;
    for (std::size_t begin = 0; begin < n;
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(n, begin + static_cast<std::size_t>(config.batch_size));
      const double inv_b = 1.0 / static_cast<double>(end - begin);

      // One shared normalization over the concatenated token rows of the
      // whole batch, then per-item slices of the resulting mask stack.
      std::vector<Tensor> feats;
      std::vector<std::int64_t> offsets;
      std::int64_t row_cursor = 0;
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t item = order[b];
        Tensor f = explainer.features(train.sequences[item]);
        offsets.push_back(row_cursor);
        row_cursor += f.rows();
        feats.push_back(std::move(f));
      }
      Tensor stacked = concat_rows(std::span<const Tensor>(feats));
      Tensor masks = explainer.mask_head(explainer.batchnorm_train(stacked));

      Tensor lc_acc = Tensor::scalar(0.0), le_acc = Tensor::scalar(0.0);
      Tensor la_acc = Tensor::scalar(0.0), ltv_acc = Tensor::scalar(0.0);
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t item = order[b];
        const std::int64_t valid = train.sequences[item].valid_len;
        MaskStack S;
        S.heads = model.config().heads;
        S.valid_len = valid;
        S.values = pad_stack(
            slice_rows(masks, offsets[b - begin], valid),
            static_cast<std::int64_t>(train.sequences[item].ids.size()));
        LossBreakdown bd = item_loss(S, item);
        lc_acc = add(lc_acc, bd.l_c);
        le_acc = add(le_acc, bd.l_e);
        la_acc = add(la_acc, bd.l_a);
        ltv_acc = add(ltv_acc, bd.l_tv);
      }
      Tensor batch_total =
          add(add(mul_scalar(lc_acc, inv_b),
                  mul_scalar(le_acc, inv_b * weights.lambda_e)),
              add(mul_scalar(la_acc, inv_b * weights.lambda_a),
                  mul_scalar(ltv_acc, inv_b * weights.lambda_tv)));
      check_finite(batch_total.value(), epoch, global_step);
      batch_total.backward();
      last_lr = schedule_lr(global_step, total_steps, config.base_lr,
                            config.warmup_steps);
      opt.step(last_lr, config.weight_decay);

      StepRow row;
      row.step = global_step;
      row.l_c = lc_acc.value() * inv_b;
      row.l_e = le_acc.value() * inv_b;
      row.l_a = la_acc.value() * inv_b;
      row.l_tv = ltv_acc.value() * inv_b;
      row.total = batch_total.value();
      row.lr = last_lr;
      result.step_rows.push_back(row);
      if (csv.is_open()) {
        csv << row.step << ", " << row.l_c << ", " << row.l_e << ", "
            << row.l_a << ", " << row.l_tv << ", " << row.total << ", "
            << row.lr << "\n";
      }

      epoch_loss += row.total;
      ++epoch_steps;
      ++global_step;
    }

    double val_loss = 0.0;
    {
      NoGradGuard guard;
      for (std::size_t i = 0; i < val.size(); ++i) val_loss += val_item_loss(i);
      val_loss /= static_cast<double>(val.size());
    }
    check_finite(val_loss, epoch, global_step);

    history.epochs.push_back({epoch_loss / static_cast<double>(epoch_steps),
                              val_loss, last_lr});
    if (val_loss < history.best_val_loss) {
      history.best_val_loss = val_loss;
      history.best_epoch = epoch;
      best = snapshot_params(params);
      best_buffers = explainer.named_buffers();
      bad_epochs = 0;
    } else if (++bad_epochs >= config.patience) {
      history.early_stopped = true;
      break;
    }
  }

  restore_params(params, best);
  for (auto& [name, values] : best_buffers) {
    explainer.set_buffer(name, values);
  }
  history.steps = global_step;

  if (model.param_hash() != hash_before) {
    throw std::logic_error(
        "train_explainer: frozen classifier parameters changed during "
        "training");
  }
  return result;
}

}  // namespace seqmask
