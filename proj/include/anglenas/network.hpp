#pragma once

#include <map>
#include <optional>
#include <vector>

#include "anglenas/dataset.hpp"
#include "anglenas/graph.hpp"
#include "anglenas/matrix.hpp"
#include "anglenas/nnet.hpp"
#include "anglenas/weight_store.hpp"

namespace anglenas {

// Node values merge by summation; an edge computes
//   parametric: tanh(norm(x * W^T))      identity: x      pooling: avg_k(x)
// Only edges on a root-to-leaf path are executed, so "none" choices and the
// dead branches they create contribute nothing.

struct EdgeTrace {
    Matrix input;
    Matrix dense_out;
    NormCache norm_cache;
    Matrix act_out;
};

struct ForwardTrace {
    std::vector<std::uint32_t> active;
    std::vector<std::vector<std::uint32_t>> in_active; // per node, sorted
    std::vector<Matrix> node_values;
    std::map<std::uint32_t, EdgeTrace> edges;
    Matrix logits;
};

namespace detail {

struct StatAccumulator {
    std::size_t count = 0;
    std::vector<double> sum;
    std::vector<double> sumsq;
};

enum class NormBehavior { train, eval, collect };

inline void plan_active(const ChildModel& child, ForwardTrace& trace) {
    trace.active = child.active_edges();
    trace.in_active.assign(child.space->node_count(), {});
    for (auto e : trace.active) trace.in_active[child.space->edge(e).dst].push_back(e);
}

inline Matrix forward_impl(const ChildModel& child, WeightStore& store, const Matrix& x,
                           NormBehavior behavior,
                           const std::map<OperatorId, NormState>* norm_override,
                           ForwardTrace* trace,
                           std::map<OperatorId, StatAccumulator>* stat_accum) {
    const SupernetGraph& g = *child.space;
    if (x.rows == 0) throw Error("forward: empty batch");
    if (x.cols != g.input_dim()) throw ShapeMismatch("forward: input dimension");

    ForwardTrace local;
    ForwardTrace& t = trace ? *trace : local;
    plan_active(child, t);
    if (t.active.empty()) throw InvalidChild("child has no root-to-leaf path");

    t.node_values.assign(g.node_count(), Matrix());
    // stem projection into the root node
    {
        Matrix v;
        matmul_nt(x, store.stem_weight.value, v);
        for (std::size_t i = 0; i < v.rows; ++i)
            for (std::size_t j = 0; j < v.cols; ++j) v(i, j) += store.stem_bias.value(0, j);
        t.node_values[g.root()] = std::move(v);
    }

    for (std::uint32_t n = 1; n < g.node_count(); ++n) {
        if (t.in_active[n].empty()) continue;
        Matrix acc(x.rows, g.width());
        for (auto e : t.in_active[n]) {
            const OperatorSpec& op = child.op_on(e);
            const Matrix& src = t.node_values[g.edge(e).src];
            if (src.rows == 0) throw Error("forward: unevaluated source node");
            Matrix out;
            EdgeTrace et;
            switch (op.kind) {
            case OpKind::identity:
                out = src;
                break;
            case OpKind::pooling:
                out = pool_forward(src, op.pool_k);
                break;
            case OpKind::parametric: {
                if (src.cols != op.in_dim) throw ShapeMismatch("forward: operator input width");
                OperatorEntry& entry = store.entry(op.id);
                matmul_nt(src, entry.weight.value, et.dense_out);
                Matrix normed;
                if (behavior == NormBehavior::eval) {
                    const NormState* ns = &entry.norm;
                    if (norm_override) {
                        auto it = norm_override->find(op.id);
                        if (it != norm_override->end()) ns = &it->second;
                    }
                    NormState tmp = *ns; // eval never mutates running stats
                    normed = norm_forward(et.dense_out, entry.norm_scale, entry.norm_shift, tmp,
                                          RunMode::eval, nullptr);
                } else {
                    // batch statistics; train additionally folds them into the
                    // running stats, collect accumulates pooled raw moments
                    if (behavior == NormBehavior::collect) {
                        NormState scratch = entry.norm;
                        normed = norm_forward(et.dense_out, entry.norm_scale, entry.norm_shift,
                                              scratch, RunMode::train, nullptr);
                        auto& acc_stats = (*stat_accum)[op.id];
                        if (acc_stats.sum.empty()) {
                            acc_stats.sum.assign(op.out_dim, 0.0);
                            acc_stats.sumsq.assign(op.out_dim, 0.0);
                        }
                        acc_stats.count += et.dense_out.rows;
                        for (std::size_t i = 0; i < et.dense_out.rows; ++i)
                            for (std::size_t j = 0; j < et.dense_out.cols; ++j) {
                                const double v = et.dense_out(i, j);
                                acc_stats.sum[j] += v;
                                acc_stats.sumsq[j] += v * v;
                            }
                    } else {
                        normed = norm_forward(et.dense_out, entry.norm_scale, entry.norm_shift,
                                              entry.norm, RunMode::train,
                                              trace ? &et.norm_cache : nullptr);
                    }
                }
                out = tanh_forward(normed);
                et.act_out = out;
                et.input = src;
                break;
            }
            case OpKind::none:
                throw Error("forward: none operator on an active edge");
            }
            add_inplace(acc, out);
            if (trace) t.edges.emplace(e, std::move(et));
        }
        if (!acc.all_finite()) throw NumericalOverflow("activation became non-finite");
        t.node_values[n] = std::move(acc);
    }

    Matrix logits;
    matmul_nt(t.node_values[g.leaf()], store.cls_weight.value, logits);
    for (std::size_t i = 0; i < logits.rows; ++i)
        for (std::size_t j = 0; j < logits.cols; ++j) logits(i, j) += store.cls_bias.value(0, j);
    if (!logits.all_finite()) throw NumericalOverflow("logits became non-finite");
    if (trace) t.logits = logits;
    return logits;
}

} // namespace detail

// Train-mode forward: batch statistics, running stats updated in place.
inline Matrix forward_train(const ChildModel& child, WeightStore& store, const Matrix& x,
                            ForwardTrace* trace = nullptr) {
    return detail::forward_impl(child, store, x, detail::NormBehavior::train, nullptr, trace,
                                nullptr);
}

// Eval-mode forward: pure function of (weights, norm state, input).
inline Matrix forward_eval(const ChildModel& child, const WeightStore& store, const Matrix& x,
                           const std::map<OperatorId, NormState>* norm_override = nullptr) {
    return detail::forward_impl(child, const_cast<WeightStore&>(store), x,
                                detail::NormBehavior::eval, norm_override, nullptr, nullptr);
}

// Streams the training split through the child and recomputes each touched
// normalization's running mean/variance as pooled moments of the observed
// pre-normalization activations. Scale/shift stay untouched; the store is
// not modified.
inline std::map<OperatorId, NormState>
recalibrate_norm(const ChildModel& child, const WeightStore& store, const ToyDataset& train_data,
                 std::size_t batch_size = 64) {
    if (train_data.size() == 0) throw Error("recalibrate_norm: empty training data");
    std::map<OperatorId, detail::StatAccumulator> acc;
    for (std::size_t start = 0; start < train_data.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, train_data.size() - start);
        Matrix x(n, train_data.inputs.cols);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < x.cols; ++j) x(i, j) = train_data.inputs(start + i, j);
        detail::forward_impl(child, const_cast<WeightStore&>(store), x,
                             detail::NormBehavior::collect, nullptr, nullptr, &acc);
    }
    std::map<OperatorId, NormState> result;
    for (const auto& [id, a] : acc) {
        NormState ns = store.entry(id).norm;
        const double inv_n = 1.0 / double(a.count);
        for (std::size_t j = 0; j < a.sum.size(); ++j) {
            const double mean = a.sum[j] * inv_n;
            ns.running_mean[j] = mean;
            ns.running_var[j] = std::max(0.0, a.sumsq[j] * inv_n - mean * mean);
        }
        result.emplace(id, std::move(ns));
    }
    return result;
}

struct BatchStats {
    double loss = 0.0;
    std::size_t correct = 0;
};

// Forward + backward in train mode; gradients accumulate into the touched
// tensors and no update is applied. The returned trace identifies the
// touched edges.
inline BatchStats compute_gradients(const ChildModel& child, WeightStore& store, const Matrix& x,
                                    const std::vector<int>& labels, ForwardTrace& trace) {
    const SupernetGraph& g = *child.space;
    detail::forward_impl(child, store, x, detail::NormBehavior::train, nullptr, &trace, nullptr);
    LossResult loss = softmax_cross_entropy(trace.logits, labels);
    Matrix dlogits = softmax_cross_entropy_backward(loss, labels);

    std::vector<Matrix> d_node(g.node_count());
    const Matrix& leaf_value = trace.node_values[g.leaf()];
    accumulate_weight_grad(dlogits, leaf_value, store.cls_weight.grad);
    for (std::size_t i = 0; i < dlogits.rows; ++i)
        for (std::size_t j = 0; j < dlogits.cols; ++j)
            store.cls_bias.grad(0, j) += dlogits(i, j);
    d_node[g.leaf()] = Matrix(x.rows, g.width());
    accumulate_input_grad(dlogits, store.cls_weight.value, d_node[g.leaf()]);

    for (std::uint32_t n = std::uint32_t(g.node_count()); n-- > 1;) {
        if (d_node[n].rows == 0) continue;
        for (auto e : trace.in_active[n]) {
            const OperatorSpec& op = child.op_on(e);
            const std::uint32_t src = g.edge(e).src;
            Matrix d_src;
            switch (op.kind) {
            case OpKind::identity:
                d_src = d_node[n];
                break;
            case OpKind::pooling:
                d_src = pool_backward(d_node[n], op.pool_k);
                break;
            case OpKind::parametric: {
                OperatorEntry& entry = store.entry(op.id);
                EdgeTrace& et = trace.edges.at(e);
                Matrix d_norm_out = tanh_backward(d_node[n], et.act_out);
                Matrix d_dense = norm_backward(d_norm_out, et.norm_cache, entry.norm_scale,
                                               entry.norm_scale, entry.norm_shift);
                accumulate_weight_grad(d_dense, et.input, entry.weight.grad);
                d_src = Matrix(x.rows, op.in_dim);
                accumulate_input_grad(d_dense, entry.weight.value, d_src);
                break;
            }
            case OpKind::none:
                throw Error("backward: none operator on an active edge");
            }
            if (d_node[src].rows == 0)
                d_node[src] = std::move(d_src);
            else
                add_inplace(d_node[src], d_src);
        }
    }

    if (d_node[g.root()].rows != 0) {
        accumulate_weight_grad(d_node[g.root()], x, store.stem_weight.grad);
        for (std::size_t i = 0; i < d_node[g.root()].rows; ++i)
            for (std::size_t j = 0; j < d_node[g.root()].cols; ++j)
                store.stem_bias.grad(0, j) += d_node[g.root()](i, j);
    }
    return {loss.loss, loss.correct};
}

// Forward + backward + momentum-SGD update of exactly the parameters the
// child touches (its active operators, the stem and the classifier).
inline BatchStats train_batch(const ChildModel& child, WeightStore& store, const Matrix& x,
                              const std::vector<int>& labels, double lr, double momentum) {
    ForwardTrace trace;
    const BatchStats stats = compute_gradients(child, store, x, labels, trace);

    for (auto e : trace.active) {
        const OperatorSpec& op = child.op_on(e);
        if (op.kind != OpKind::parametric) continue;
        OperatorEntry& entry = store.entry(op.id);
        sgd_step(entry.weight, lr, momentum);
        sgd_step(entry.norm_scale, lr, momentum);
        sgd_step(entry.norm_shift, lr, momentum);
        entry.weight.zero_grad();
        entry.norm_scale.zero_grad();
        entry.norm_shift.zero_grad();
    }
    for (ParamTensor* p : {&store.stem_weight, &store.stem_bias, &store.cls_weight,
                           &store.cls_bias}) {
        sgd_step(*p, lr, momentum);
        p->zero_grad();
    }
    return stats;
}

// Loss of one batch without any update; used by finite-difference checks.
inline double loss_only(const ChildModel& child, WeightStore& store, const Matrix& x,
                        const std::vector<int>& labels) {
    ForwardTrace trace;
    // train-mode batch statistics, but keep running stats untouched
    std::map<OperatorId, NormState> saved;
    for (auto& [id, e] : store.ops)
        if (e.trainable) saved.emplace(id, e.norm);
    Matrix logits =
        detail::forward_impl(child, store, x, detail::NormBehavior::train, nullptr, &trace, nullptr);
    for (auto& [id, ns] : saved) store.entry(id).norm = ns;
    return softmax_cross_entropy(logits, labels).loss;
}

// Validation accuracy with inherited weights; with re_bn the normalization
// statistics are first recomputed on the training split.
inline double eval_child_accuracy(const ChildModel& child, const WeightStore& store,
                                  const DataBundle& data, bool re_bn,
                                  std::size_t batch_size = 64) {
    if (!child.is_valid()) throw InvalidChild("eval_child_accuracy: invalid child");
    std::map<OperatorId, NormState> recal;
    if (re_bn) recal = recalibrate_norm(child, store, data.train, batch_size);
    const ToyDataset& val = data.val;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < val.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, val.size() - start);
        Matrix x(n, val.inputs.cols);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < x.cols; ++j) x(i, j) = val.inputs(start + i, j);
        Matrix logits = forward_eval(child, store, x, re_bn ? &recal : nullptr);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t argmax = 0;
            for (std::size_t j = 1; j < logits.cols; ++j)
                if (logits(i, j) > logits(i, argmax)) argmax = j;
            if (int(argmax) == val.labels[start + i]) ++correct;
        }
    }
    return double(correct) / double(val.size());
}

} // namespace anglenas
