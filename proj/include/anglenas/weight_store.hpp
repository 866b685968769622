#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "anglenas/graph.hpp"
#include "anglenas/matrix.hpp"
#include "anglenas/nnet.hpp"
#include "anglenas/rng.hpp"

namespace anglenas {

enum class InitPolicy { kaiming_normal, xavier_uniform, orthogonal };

inline const char* to_string(InitPolicy p) {
    switch (p) {
    case InitPolicy::kaiming_normal: return "kaiming-normal";
    case InitPolicy::xavier_uniform: return "xavier-uniform";
    case InitPolicy::orthogonal: return "orthogonal";
    }
    return "?";
}

inline InitPolicy init_policy_from_string(const std::string& s) {
    if (s == "kaiming-normal") return InitPolicy::kaiming_normal;
    if (s == "xavier-uniform") return InitPolicy::xavier_uniform;
    if (s == "orthogonal") return InitPolicy::orthogonal;
    throw ConfigError("unknown init policy: " + s);
}

inline Matrix kaiming_normal(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    const double stddev = std::sqrt(2.0 / double(cols)); // fan-in = cols
    for (auto& v : m.data) v = rng.normal(0.0, stddev);
    return m;
}

inline Matrix xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    const double limit = std::sqrt(6.0 / double(rows + cols));
    for (auto& v : m.data) v = rng.uniform_real(-limit, limit);
    return m;
}

// (Semi-)orthogonal init: gaussian draw, then modified Gram-Schmidt over the
// shorter side. Square matrices come out orthogonal, W^T W = I.
inline Matrix orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng) {
    const bool by_rows = rows <= cols;
    const std::size_t k = by_rows ? rows : cols, len = by_rows ? cols : rows;
    std::vector<std::vector<double>> basis(k, std::vector<double>(len));
    for (auto& vec : basis)
        for (auto& v : vec) v = rng.normal();
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t p = 0; p < i; ++p) {
            double dot = 0.0;
            for (std::size_t t = 0; t < len; ++t) dot += basis[i][t] * basis[p][t];
            for (std::size_t t = 0; t < len; ++t) basis[i][t] -= dot * basis[p][t];
        }
        double norm = 0.0;
        for (double v : basis[i]) norm += v * v;
        norm = std::sqrt(norm);
        for (auto& v : basis[i]) v /= norm;
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = by_rows ? basis[i][j] : basis[j][i];
    return m;
}

inline Matrix draw_init(InitPolicy policy, std::size_t rows, std::size_t cols, Rng& rng) {
    switch (policy) {
    case InitPolicy::kaiming_normal: return kaiming_normal(rows, cols, rng);
    case InitPolicy::xavier_uniform: return xavier_uniform(rows, cols, rng);
    case InitPolicy::orthogonal: return orthogonal_init(rows, cols, rng);
    }
    throw Error("unreachable");
}

inline Matrix pooling_kernel(std::size_t k) {
    return Matrix(k, k, 1.0 / double(k * k));
}

// Parameters of one candidate operator. Pooling operators carry their fixed
// kernel and are never trained; identity and none own nothing and have no
// entry at all.
struct OperatorEntry {
    ParamTensor weight;
    ParamTensor norm_scale; // parametric only
    ParamTensor norm_shift; // parametric only
    NormState norm;
    bool trainable = false;
};

struct ResetEvent {
    std::uint64_t epoch = 0;
    std::uint64_t removed_total = 0;
};

// All learnable state of a supernet: per-operator tensors, the immutable
// initialization snapshot, and the resettable base snapshot the angle metric
// measures against.
class WeightStore {
public:
    std::map<OperatorId, OperatorEntry> ops;
    ParamTensor stem_weight, stem_bias;
    ParamTensor cls_weight, cls_bias;

    std::uint64_t space_hash = 0;
    std::uint64_t epoch = 0;
    std::vector<ResetEvent> reset_log;
    Rng train_rng;

    const std::map<OperatorId, Matrix>& init_snapshot() const { return init_; }
    const std::map<OperatorId, Matrix>& base_snapshot() const { return base_; }

    const Matrix& init_of(OperatorId id) const { return init_.at(id); }
    const Matrix& base_of(OperatorId id) const { return base_.at(id); }

    OperatorEntry& entry(OperatorId id) { return ops.at(id); }
    const OperatorEntry& entry(OperatorId id) const { return ops.at(id); }

    void take_snapshots() {
        init_.clear();
        base_.clear();
        for (const auto& [id, e] : ops) {
            init_.emplace(id, e.weight.value);
            base_.emplace(id, e.weight.value);
        }
    }

    // Base snapshot := current weights. The initialization snapshot is never
    // touched.
    void reset_base(std::uint64_t removed_total) {
        for (const auto& [id, e] : ops) base_[id] = e.weight.value;
        reset_log.push_back({epoch, removed_total});
    }

    void save_checkpoint(const std::filesystem::path& path) const;
    static WeightStore load_checkpoint(const std::filesystem::path& path,
                                       std::uint64_t expected_space_hash);

private:
    std::map<OperatorId, Matrix> init_;
    std::map<OperatorId, Matrix> base_;

    friend WeightStore init_supernet(const SupernetGraph&, InitPolicy, std::uint64_t);
};

inline WeightStore init_supernet(const SupernetGraph& space, InitPolicy policy,
                                 std::uint64_t seed) {
    WeightStore store;
    store.space_hash = space.hash();
    Rng rng(seed);
    const std::size_t width = space.width();
    for (const auto& e : space.edges()) {
        for (const auto& op : e.ops) {
            if (op.kind == OpKind::parametric) {
                OperatorEntry entry;
                entry.weight = ParamTensor(draw_init(policy, op.out_dim, op.in_dim, rng),
                                           ParamRole::operator_weight);
                entry.norm_scale = ParamTensor(Matrix(1, op.out_dim, 1.0), ParamRole::norm_scale);
                entry.norm_shift = ParamTensor(Matrix(1, op.out_dim, 0.0), ParamRole::norm_shift);
                entry.norm = NormState(op.out_dim);
                entry.trainable = true;
                store.ops.emplace(op.id, std::move(entry));
            } else if (op.kind == OpKind::pooling) {
                OperatorEntry entry;
                entry.weight = ParamTensor(pooling_kernel(op.pool_k), ParamRole::operator_weight);
                entry.trainable = false;
                store.ops.emplace(op.id, std::move(entry));
            }
        }
    }
    store.stem_weight =
        ParamTensor(draw_init(policy, width, space.input_dim(), rng), ParamRole::auxiliary);
    store.stem_bias = ParamTensor(Matrix(1, width, 0.0), ParamRole::auxiliary);
    store.cls_weight =
        ParamTensor(draw_init(policy, space.num_classes(), width, rng), ParamRole::auxiliary);
    store.cls_bias = ParamTensor(Matrix(1, space.num_classes(), 0.0), ParamRole::auxiliary);
    store.train_rng = Rng(Rng::mix(seed, 0x7261696eULL)); // training stream
    store.take_snapshots();
    return store;
}

inline void reset_base_weights(WeightStore& store, std::uint64_t removed_total = 0) {
    store.reset_base(removed_total);
}

// --- checkpoint I/O ----------------------------------------------------------

constexpr std::uint32_t kCheckpointMagic = 0x414e434b; // "ANCK"
constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_matrix(std::ostream& out, const Matrix& m) {
    const std::uint64_t r = m.rows, c = m.cols;
    out.write(reinterpret_cast<const char*>(&r), 8);
    out.write(reinterpret_cast<const char*>(&c), 8);
    out.write(reinterpret_cast<const char*>(m.data.data()),
              std::streamsize(m.data.size() * sizeof(double)));
}

inline Matrix read_matrix(std::istream& in) {
    std::uint64_t r = 0, c = 0;
    in.read(reinterpret_cast<char*>(&r), 8);
    in.read(reinterpret_cast<char*>(&c), 8);
    Matrix m(r, c);
    in.read(reinterpret_cast<char*>(m.data.data()), std::streamsize(m.data.size() * sizeof(double)));
    return m;
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

inline void write_vec(std::ostream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
}

inline std::vector<double> read_vec(std::istream& in) {
    std::vector<double> v(read_u64(in));
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
    return v;
}

} // namespace detail

inline void WeightStore::save_checkpoint(const std::filesystem::path& path) const {
    using namespace detail;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write checkpoint: " + path.string());
    out.write(reinterpret_cast<const char*>(&kCheckpointMagic), 4);
    out.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
    write_u64(out, space_hash);
    write_u64(out, epoch);
    write_u64(out, ops.size());
    for (const auto& [id, e] : ops) {
        write_u64(out, id.edge);
        write_u64(out, id.slot);
        const std::uint8_t trainable = e.trainable ? 1 : 0;
        out.write(reinterpret_cast<const char*>(&trainable), 1);
        write_matrix(out, e.weight.value);
        write_matrix(out, e.weight.velocity);
        if (e.trainable) {
            write_matrix(out, e.norm_scale.value);
            write_matrix(out, e.norm_scale.velocity);
            write_matrix(out, e.norm_shift.value);
            write_matrix(out, e.norm_shift.velocity);
            write_vec(out, e.norm.running_mean);
            write_vec(out, e.norm.running_var);
            out.write(reinterpret_cast<const char*>(&e.norm.momentum), 8);
            out.write(reinterpret_cast<const char*>(&e.norm.eps), 8);
        }
        write_matrix(out, init_.at(id));
        write_matrix(out, base_.at(id));
    }
    for (const ParamTensor* p : {&stem_weight, &stem_bias, &cls_weight, &cls_bias}) {
        write_matrix(out, p->value);
        write_matrix(out, p->velocity);
    }
    write_u64(out, reset_log.size());
    for (const auto& ev : reset_log) {
        write_u64(out, ev.epoch);
        write_u64(out, ev.removed_total);
    }
    const Rng::State st = train_rng.save_state();
    for (auto w : st.words) write_u64(out, w);
    const std::uint8_t has_spare = st.has_spare ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&has_spare), 1);
    out.write(reinterpret_cast<const char*>(&st.spare), 8);
    if (!out) throw IoFailure("short write on checkpoint: " + path.string());
}

inline WeightStore WeightStore::load_checkpoint(const std::filesystem::path& path,
                                                std::uint64_t expected_space_hash) {
    using namespace detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open checkpoint: " + path.string());
    std::uint32_t magic = 0, version = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    if (magic != kCheckpointMagic) throw IoFailure("not a checkpoint file: " + path.string());
    if (version != kCheckpointVersion) throw IoFailure("unsupported checkpoint version");
    WeightStore store;
    store.space_hash = read_u64(in);
    if (store.space_hash != expected_space_hash)
        throw IoFailure("checkpoint belongs to a different space");
    store.epoch = read_u64(in);
    const std::uint64_t n_ops = read_u64(in);
    for (std::uint64_t i = 0; i < n_ops; ++i) {
        OperatorId id{std::uint32_t(read_u64(in)), std::uint32_t(read_u64(in))};
        std::uint8_t trainable = 0;
        in.read(reinterpret_cast<char*>(&trainable), 1);
        OperatorEntry e;
        e.trainable = trainable != 0;
        e.weight.role = ParamRole::operator_weight;
        e.weight.value = read_matrix(in);
        e.weight.velocity = read_matrix(in);
        e.weight.grad = Matrix(e.weight.value.rows, e.weight.value.cols);
        if (e.trainable) {
            e.norm_scale.role = ParamRole::norm_scale;
            e.norm_scale.value = read_matrix(in);
            e.norm_scale.velocity = read_matrix(in);
            e.norm_scale.grad = Matrix(e.norm_scale.value.rows, e.norm_scale.value.cols);
            e.norm_shift.role = ParamRole::norm_shift;
            e.norm_shift.value = read_matrix(in);
            e.norm_shift.velocity = read_matrix(in);
            e.norm_shift.grad = Matrix(e.norm_shift.value.rows, e.norm_shift.value.cols);
            e.norm.running_mean = read_vec(in);
            e.norm.running_var = read_vec(in);
            in.read(reinterpret_cast<char*>(&e.norm.momentum), 8);
            in.read(reinterpret_cast<char*>(&e.norm.eps), 8);
        }
        store.init_.emplace(id, read_matrix(in));
        store.base_.emplace(id, read_matrix(in));
        store.ops.emplace(id, std::move(e));
    }
    for (ParamTensor* p : {&store.stem_weight, &store.stem_bias, &store.cls_weight,
                           &store.cls_bias}) {
        p->role = ParamRole::auxiliary;
        p->value = read_matrix(in);
        p->velocity = read_matrix(in);
        p->grad = Matrix(p->value.rows, p->value.cols);
    }
    const std::uint64_t n_resets = read_u64(in);
    for (std::uint64_t i = 0; i < n_resets; ++i) {
        ResetEvent ev;
        ev.epoch = read_u64(in);
        ev.removed_total = read_u64(in);
        store.reset_log.push_back(ev);
    }
    Rng::State st;
    for (auto& w : st.words) w = read_u64(in);
    std::uint8_t has_spare = 0;
    in.read(reinterpret_cast<char*>(&has_spare), 1);
    st.has_spare = has_spare != 0;
    in.read(reinterpret_cast<char*>(&st.spare), 8);
    store.train_rng.restore_state(st);
    if (!in) throw IoFailure("truncated checkpoint: " + path.string());
    return store;
}

} // namespace anglenas
