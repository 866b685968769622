#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "anglenas/network.hpp"

namespace anglenas {

struct TrainConfig {
    std::size_t first_stage_epochs = 60; // first shrink stage
    std::size_t later_stage_epochs = 5;  // subsequent stages
    std::size_t batch_size = 64;
    double lr = 0.05;
    double min_lr = 0.0;
    std::string schedule = "constant"; // "constant" | "cosine"
    double momentum = 0.9;
    InitPolicy init = InitPolicy::kaiming_normal;
    std::uint64_t seed = 1;

    void validate() const {
        if (first_stage_epochs < 1 || later_stage_epochs < 1)
            throw ConfigError("epoch counts must be >= 1");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (lr <= 0.0) throw ConfigError("learning rate must be > 0");
        if (schedule != "constant" && schedule != "cosine")
            throw ConfigError("unknown lr schedule: " + schedule);
    }
};

// Learning rate for the given epoch of a stage that lasts stage_epochs.
inline double scheduled_lr(const TrainConfig& cfg, std::size_t epoch_in_stage,
                           std::size_t stage_epochs) {
    if (cfg.schedule == "cosine" && stage_epochs > 1) {
        const double t = double(epoch_in_stage) / double(stage_epochs - 1);
        return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * t));
    }
    return cfg.lr;
}

struct EpochLog {
    std::uint64_t epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    std::size_t batches = 0;
    std::map<OperatorId, std::size_t> update_counts; // active-operator updates
};

namespace detail {

// Shared batch loop for supernet and standalone training. The provider
// yields the child trained on each batch.
template <typename ChildProvider>
EpochLog run_epoch(WeightStore& store, const ToyDataset& data, const TrainConfig& cfg, double lr,
                   ChildProvider&& next_child) {
    EpochLog log;
    log.epoch = store.epoch;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    store.train_rng.shuffle(order);
    double total_loss = 0.0;
    std::size_t total_correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t n = std::min(cfg.batch_size, order.size() - start);
        Matrix x(n, data.inputs.cols);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t src = order[start + i];
            for (std::size_t j = 0; j < x.cols; ++j) x(i, j) = data.inputs(src, j);
            labels[i] = data.labels[src];
        }
        const ChildModel child = next_child();
        const BatchStats stats = train_batch(child, store, x, labels, lr, cfg.momentum);
        total_loss += stats.loss * double(n);
        total_correct += stats.correct;
        ++log.batches;
        for (auto e : child.active_edges()) {
            const OperatorSpec& op = child.op_on(e);
            if (op.kind == OpKind::parametric) ++log.update_counts[op.id];
        }
    }
    log.mean_loss = total_loss / double(order.size());
    log.train_accuracy = double(total_correct) / double(order.size());
    ++store.epoch;
    return log;
}

} // namespace detail

// True when every weight-bearing operator of the space has a store entry;
// shrunk descendants of the store's original space keep this property.
inline bool store_covers(const WeightStore& store, const SupernetGraph& space) {
    for (const auto& e : space.edges())
        for (const auto& op : e.ops)
            if (op.weight_count() > 0 && store.ops.find(op.id) == store.ops.end()) return false;
    return true;
}

// One uniform-sampling epoch: each batch trains a freshly sampled valid
// child, updating only the weights that child touches.
inline EpochLog train_epoch(WeightStore& store, const SupernetGraph& space,
                            const ToyDataset& data, const TrainConfig& cfg,
                            std::size_t epoch_in_stage = 0, std::size_t stage_epochs = 1) {
    if (!store_covers(store, space)) throw Error("train_epoch: store does not cover the space");
    const double lr = scheduled_lr(cfg, epoch_in_stage, stage_epochs);
    return detail::run_epoch(store, data, cfg, lr,
                             [&]() { return sample_child(space, store.train_rng); });
}

// Standalone training of one fixed child for a full epoch.
inline EpochLog train_child_epoch(WeightStore& store, const ChildModel& child,
                                  const ToyDataset& data, const TrainConfig& cfg,
                                  std::size_t epoch_in_stage = 0, std::size_t stage_epochs = 1) {
    const double lr = scheduled_lr(cfg, epoch_in_stage, stage_epochs);
    return detail::run_epoch(store, data, cfg, lr, [&]() { return child; });
}

} // namespace anglenas
