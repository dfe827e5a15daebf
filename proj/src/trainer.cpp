#include "hms/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include "hms/evaluation.hpp"
#include "hms/rng.hpp"

namespace hms {

std::pair<real, Array3> masked_mse_loss(const Array3& pred, const MaskedMap& gt) {
    if (pred.channels != 1 || pred.height != gt.height() || pred.width != gt.width())
        throw DimensionError("masked_mse_loss: prediction shape " + pred.shape_str() +
                             " vs ground truth " + gt.features.shape_str());
    std::size_t n = 0;
    for (const real m : gt.mask.data)
        if (m != real(0)) ++n;
    if (n == 0) throw EmptyGroundTruthError("masked_mse_loss: ground truth has no valid pixels");

    real loss = 0;
    Array3 d(1, pred.height, pred.width);
    const real inv_n = real(1) / real(n);
    for (int u = 0; u < pred.height; ++u) {
        const real* o = pred.row(0, u);
        const real* t = gt.features.row(0, u);
        const real* m = gt.mask.row(u);
        real* g = d.row(0, u);
        for (int v = 0; v < pred.width; ++v) {
            if (m[v] == real(0)) continue;
            const real e = o[v] - t[v];
            loss += e * e;
            g[v] = real(2) * e * inv_n;
        }
    }
    return {loss * inv_n, std::move(d)};
}

double poly_lr(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch > cfg.epochs)
        throw ConfigError("poly_lr: epoch " + std::to_string(epoch) + " outside [0," +
                          std::to_string(cfg.epochs) + "]");
    return cfg.lr0 * std::pow(1.0 - double(epoch) / double(cfg.epochs), cfg.poly_power);
}

void adam_step(ParamStore& store, double lr, const TrainConfig& cfg) {
    store.step += 1;
    const double t = double(store.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (ParamTensor& p : store.tensors()) {
        if (p.grad.size() != p.value.size() || p.adam_m.size() != p.value.size() ||
            p.adam_v.size() != p.value.size())
            throw IntegrityError("adam_step: buffer shapes diverged for '" + p.name + "'");
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = double(p.grad[i]);
            const double m = cfg.beta1 * double(p.adam_m[i]) + (1.0 - cfg.beta1) * g;
            const double v = cfg.beta2 * double(p.adam_v[i]) + (1.0 - cfg.beta2) * g * g;
            p.adam_m[i] = real(m);
            p.adam_v[i] = real(v);
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            p.value[i] = real(double(p.value[i]) - lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam));
            p.grad[i] = 0;
        }
        // Training state lives at float32 precision; see checkpoint format.
        snap_to_f32(p.value);
        snap_to_f32(p.adam_m);
        snap_to_f32(p.adam_v);
    }
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, std::uint32_t(v));
    put_u32(out, std::uint32_t(v >> 32));
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(path + ": truncated checkpoint");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    const std::uint64_t lo = get_u32(in, path);
    const std::uint64_t hi = get_u32(in, path);
    return lo | hi << 32;
}

double get_f64(std::istream& in, const std::string& path) {
    const std::uint64_t bits = get_u64(in, path);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void put_record(std::ostream& out, const std::string& name, const std::vector<int>& dims,
                const std::vector<real>& payload) {
    put_u32(out, std::uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    put_u32(out, std::uint32_t(dims.size()));
    for (const int d : dims) put_u32(out, std::uint32_t(d));
    for (const real v : payload) {
        const float f = float(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}

struct Record {
    std::string name;
    std::vector<int> dims;
    std::vector<real> payload;
};

Record get_record(std::istream& in, const std::string& path) {
    Record r;
    const std::uint32_t name_len = get_u32(in, path);
    if (name_len > 4096) throw FormatError(path + ": implausible record name length");
    r.name.resize(name_len);
    in.read(r.name.data(), std::streamsize(name_len));
    const std::uint32_t rank = get_u32(in, path);
    if (rank > 8) throw FormatError(path + ": implausible record rank");
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        r.dims.push_back(int(get_u32(in, path)));
        n *= std::size_t(r.dims.back());
    }
    r.payload.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = get_u32(in, path);
        float f;
        std::memcpy(&f, &bits, 4);
        r.payload[i] = real(f);
    }
    return r;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store, const TrainConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out.write("HMSN", 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, store.step);
    put_u32(out, std::uint32_t(cfg.epochs));
    put_f64(out, cfg.lr0);
    put_f64(out, cfg.poly_power);
    put_f64(out, cfg.beta1);
    put_f64(out, cfg.beta2);
    put_f64(out, cfg.eps_adam);
    put_u32(out, std::uint32_t(cfg.batch_size));
    put_u64(out, cfg.seed);
    put_u32(out, std::uint32_t(cfg.loss_floor_patience));

    put_u32(out, std::uint32_t(store.tensors().size()));
    for (const ParamTensor& t : store.tensors()) put_record(out, t.name, t.dims, t.value);
    put_u32(out, std::uint32_t(store.tensors().size() * 2));
    for (const ParamTensor& t : store.tensors()) {
        put_record(out, t.name + "#m", t.dims, t.adam_m);
        put_record(out, t.name + "#v", t.dims, t.adam_v);
    }
    if (!out) throw FormatError(path + ": write failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "HMSN", 4) != 0)
        throw FormatError(path + ": bad magic at byte 0 (want HMSN)");
    const std::uint32_t version = get_u32(in, path);
    if (version != kCheckpointVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    LoadedCheckpoint ck;
    ck.store.step = get_u64(in, path);
    ck.config.epochs = int(get_u32(in, path));
    ck.config.lr0 = get_f64(in, path);
    ck.config.poly_power = get_f64(in, path);
    ck.config.beta1 = get_f64(in, path);
    ck.config.beta2 = get_f64(in, path);
    ck.config.eps_adam = get_f64(in, path);
    ck.config.batch_size = int(get_u32(in, path));
    ck.config.seed = get_u64(in, path);
    ck.config.loss_floor_patience = int(get_u32(in, path));

    const std::uint32_t n_params = get_u32(in, path);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        Record r = get_record(in, path);
        ParamTensor& t = ck.store.add(r.name, r.dims);
        t.value = std::move(r.payload);
    }
    const std::uint32_t n_adam = get_u32(in, path);
    for (std::uint32_t i = 0; i < n_adam; ++i) {
        Record r = get_record(in, path);
        if (r.name.size() < 2 || r.name[r.name.size() - 2] != '#')
            throw FormatError(path + ": malformed Adam record name '" + r.name + "'");
        const char which = r.name.back();
        ParamTensor& t = ck.store.at(r.name.substr(0, r.name.size() - 2));
        if (r.payload.size() != t.size())
            throw FormatError(path + ": Adam record size mismatch for '" + r.name + "'");
        if (which == 'm')
            t.adam_m = std::move(r.payload);
        else if (which == 'v')
            t.adam_v = std::move(r.payload);
        else
            throw FormatError(path + ": unknown Adam record suffix '" + r.name + "'");
    }
    return ck;
}

std::pair<std::vector<int>, std::vector<int>> train_val_split(int n, double val_fraction,
                                                              std::uint64_t seed) {
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) idx[std::size_t(i)] = i;
    Rng rng(mix_seed(seed, 0x73706c74ULL));
    rng.shuffle(idx);
    int n_val = int(std::lround(val_fraction * n));
    n_val = std::clamp(n_val, val_fraction > 0 ? 1 : 0, std::max(0, n - 1));
    std::vector<int> val(idx.begin(), idx.begin() + n_val);
    std::vector<int> train(idx.begin() + n_val, idx.end());
    return {std::move(train), std::move(val)};
}

TrainSummary train(const HmsNet& net, ParamStore& store, const std::vector<DepthSample>& data,
                   const TrainConfig& cfg, const TrainOptions& opts) {
    if (data.empty()) throw ConfigError("train: empty dataset");
    if (cfg.epochs < 1 || cfg.lr0 < 0 || cfg.batch_size < 1)
        throw ConfigError("train: invalid config (epochs >= 1, lr0 >= 0, batch_size >= 1)");

    auto [train_idx, val_idx] = train_val_split(int(data.size()), opts.val_fraction, cfg.seed);
    if (train_idx.empty()) throw ConfigError("train: no training samples after split");

    const std::size_t steps_per_epoch =
        (train_idx.size() + std::size_t(cfg.batch_size) - 1) / std::size_t(cfg.batch_size);
    int start_epoch = 0;
    if (opts.resume) {
        if (store.step % steps_per_epoch != 0)
            throw IntegrityError("train: checkpoint step " + std::to_string(store.step) +
                                 " is not aligned to " + std::to_string(steps_per_epoch) +
                                 " steps per epoch");
        start_epoch = int(store.step / steps_per_epoch);
    }

    TrainSummary summary;
    double best_rmse = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        if (opts.max_epochs_this_run >= 0 && epoch - start_epoch >= opts.max_epochs_this_run)
            break;
        const double lr = poly_lr(epoch, cfg);
        std::vector<int> order = train_idx;
        Rng shuffle_rng(mix_seed(cfg.seed, 0x65706f00ULL + std::uint64_t(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_size)) {
            const std::size_t bend = std::min(order.size(), b + std::size_t(cfg.batch_size));
            const real inv_batch = real(1) / real(bend - b);
            double batch_loss = 0;
            for (std::size_t i = b; i < bend; ++i) {
                const DepthSample& s = data[std::size_t(order[i])];
                ForwardResult res = net.forward(s.input, store);
                auto [loss, d_pred] = masked_mse_loss(res.prediction, s.gt);
                if (!std::isfinite(double(loss))) {
                    double norm = 0;
                    for (const ParamTensor& t : store.tensors())
                        for (const real v : t.value) norm += double(v) * double(v);
                    throw TrainAbortError("train: non-finite loss at step " +
                                          std::to_string(store.step + 1) + ", lr " +
                                          std::to_string(lr) + ", param norm " +
                                          std::to_string(std::sqrt(norm)));
                }
                for (real& g : d_pred.data) g *= inv_batch;
                net.backward(res.tape, d_pred, store);
                batch_loss += double(loss) / double(bend - b);
            }
            adam_step(store, lr, cfg);
            epoch_loss += batch_loss;
            ++batches;
        }

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_loss = epoch_loss / double(batches);
        if (!val_idx.empty()) {
            MetricAccumulator acc;
            for (const int i : val_idx) {
                const DepthSample& s = data[std::size_t(i)];
                const ForwardResult res = net.forward(s.input, store);
                acc.add(res.prediction, s.gt, s.id);
            }
            const MetricReport rep = acc.report();
            log.val_rmse_mm = rep.rmse_mm;
            log.val_mae_mm = rep.mae_mm;
        }
        if (opts.log_stream)
            (*opts.log_stream) << log.epoch << "\t" << log.lr << "\t" << log.train_loss << "\t"
                               << log.val_rmse_mm << "\t" << log.val_mae_mm << "\n";
        summary.log.push_back(log);

        if (!opts.last_checkpoint_path.empty())
            save_checkpoint(opts.last_checkpoint_path, store, cfg);
        if (log.val_rmse_mm < best_rmse || val_idx.empty()) {
            best_rmse = log.val_rmse_mm;
            summary.best_val_rmse_mm = best_rmse;
            summary.best_epoch = epoch;
            since_best = 0;
            if (!opts.best_checkpoint_path.empty())
                save_checkpoint(opts.best_checkpoint_path, store, cfg);
        } else if (cfg.loss_floor_patience > 0 && ++since_best >= cfg.loss_floor_patience) {
            break;
        }
    }
    return summary;
}

}  // namespace hms
