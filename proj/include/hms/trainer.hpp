#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hms/data_io.hpp"
#include "hms/network.hpp"

namespace hms {

struct TrainConfig {
    int epochs = 50;
    double lr0 = 0.01;
    double poly_power = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    int batch_size = 4;
    std::uint64_t seed = 0;
    int loss_floor_patience = 0;  // epochs without val-RMSE improvement before early stop; 0 = off
};

// Mean squared error over the ground-truth validity set V, plus its
// gradient: 2(o - t)/|V| on V, zero elsewhere.
std::pair<real, Array3> masked_mse_loss(const Array3& pred, const MaskedMap& gt);

// lr0 * (1 - epoch/epochs)^power.
double poly_lr(int epoch, const TrainConfig& cfg);

// One Adam update with bias correction over every tensor in the store;
// gradients are zeroed afterwards and state is snapped to float32.
void adam_step(ParamStore& store, double lr, const TrainConfig& cfg);

// Checkpoint file: magic "HMSN", u32 version, u64 step, config echo,
// parameter records, then Adam moment records; all little-endian, float32
// payloads. See README for the exact layout.
void save_checkpoint(const std::string& path, const ParamStore& store, const TrainConfig& cfg);
struct LoadedCheckpoint {
    ParamStore store;
    TrainConfig config;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double val_rmse_mm = 0;
    double val_mae_mm = 0;
};

struct TrainOptions {
    double val_fraction = 0.2;
    std::string best_checkpoint_path;  // empty: do not write
    std::string last_checkpoint_path;  // empty: do not write
    std::ostream* log_stream = nullptr;
    bool resume = false;           // derive the start epoch from store.step
    int max_epochs_this_run = -1;  // stop after this many epochs (interruption); -1 = run out
};

struct TrainSummary {
    std::vector<EpochLog> log;
    double best_val_rmse_mm = 0;
    int best_epoch = -1;
};

// Deterministic epoch loop: seeded split and per-epoch shuffles, gradient
// averaging over each batch, polynomial LR decay, best-RMSE checkpointing.
TrainSummary train(const HmsNet& net, ParamStore& store, const std::vector<DepthSample>& data,
                   const TrainConfig& cfg, const TrainOptions& opts = {});

// The held-out split used by train(), exposed so evaluations can target it.
std::pair<std::vector<int>, std::vector<int>> train_val_split(int n, double val_fraction,
                                                              std::uint64_t seed);

}  // namespace hms
