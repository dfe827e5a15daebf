#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hms/si_ops.hpp"

namespace hms {

enum class LayerKind {
    input,
    si_conv,
    si_maxpool,
    si_upsample,
    si_average,
    si_concat_conv,
    relu_masked,
};

struct LayerSpec {
    LayerKind kind = LayerKind::input;
    std::string param;       // base name; set iff kind is si_conv / si_concat_conv
    std::vector<int> inputs; // producer node indices, all < own index
    int ext = -1;            // external input slot, kind == input only
    int window = 2;          // si_maxpool only
};

struct ParamDecl {
    enum Kind { conv, adaptive } kind = conv;
    std::string name;
    int out_ch = 0;
    int in_ch = 0;      // conv
    int c1 = 0, c2 = 0; // adaptive
    int half_width = 0; // conv
};

struct Graph {
    std::vector<LayerSpec> nodes;
    std::vector<ParamDecl> params;
    std::unordered_map<std::string, int> param_index;
    int output = -1;
    int num_external_inputs = 0;

    const ParamDecl& decl(const std::string& name) const;
    void validate() const;
};

// Named parameter array with its gradient and Adam moment buffers.
struct ParamTensor {
    std::string name;
    std::vector<int> dims;
    std::vector<real> value;
    std::vector<real> grad;
    std::vector<real> adam_m;
    std::vector<real> adam_v;

    std::size_t size() const { return value.size(); }
};

// Ordered, uniquely named collection of learnable tensors plus the Adam
// step counter. Values and moments are kept at float32 precision (snapped
// after init and each update) so checkpoints round-trip bit-exactly.
class ParamStore {
public:
    ParamTensor& add(const std::string& name, std::vector<int> dims);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    ParamTensor& at(const std::string& name);
    const ParamTensor& at(const std::string& name) const;
    std::vector<ParamTensor>& tensors() { return tensors_; }
    const std::vector<ParamTensor>& tensors() const { return tensors_; }

    void zero_grads();
    std::size_t scalar_count() const;
    std::uint64_t value_checksum() const;  // FNV-1a over value bytes

    std::uint64_t step = 0;

private:
    std::vector<ParamTensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Rounds every value through float32; no-op when real is float.
void snap_to_f32(std::vector<real>& v);

// One forward record per graph node. Inputs of a node are the recorded
// outputs of its producers, so the tape alone drives the backward pass.
struct TapeRecord {
    int node = -1;
    bool present = false;
    MaskedMap out;
};

struct ForwardTape {
    std::vector<TapeRecord> records;
    const MaskedMap& output_of(int node) const;
};

ForwardTape run_graph(const Graph& g, const std::vector<const MaskedMap*>& inputs,
                      const ParamStore& store);

// Reverse-order traversal of the tape; parameter gradients accumulate into
// the store, multi-consumer node gradients accumulate by summation.
void graph_backward(const Graph& g, const ForwardTape& tape, const Array3& d_output,
                    ParamStore& store);

// Recomputes every node from its recorded inputs and compares bit-for-bit.
bool verify_tape_replay(const Graph& g, const ForwardTape& tape, const ParamStore& store);

// Uniform init in +/- sqrt(1/fan_in), zero bias, one tensor pair/quad per decl.
void init_graph_params(const Graph& g, ParamStore& store, std::uint64_t seed);

// Verifies that the store carries a tensor of the right shape for every
// parameter the graph declares (e.g. after loading a checkpoint).
void check_params_match(const Graph& g, const ParamStore& store);

// Incremental graph construction; every helper returns the new node index.
class GraphBuilder {
public:
    int input();
    int si_conv(int src, const std::string& name, int out_ch, int in_ch, int half_width);
    int relu(int src);
    int maxpool(int src, int window = 2);
    int upsample(int src);
    int average(int a, int b);
    int concat_conv(int a, int b, const std::string& name, int out_ch, int c1, int c2);
    void set_output(int node) { g_.output = node; }
    Graph take();

private:
    int push(LayerSpec n);
    Graph g_;
};

enum class BlockKind { two_scale, three_scale };

// Which fusion edges the builder keeps. `baseline` is the single-scale
// upper path only (stacked full-resolution convolutions).
enum class NetVariant { full, up_only, down_only, no_mid_flow, baseline };

struct HmsNetConfig {
    std::vector<BlockKind> blocks{BlockKind::two_scale, BlockKind::three_scale,
                                  BlockKind::three_scale};
    int channels = 16;
    int conv_half_width = 2;  // 5x5
    NetVariant variant = NetVariant::full;
};

// Two-block configuration small enough to run on 8x8 inputs; used for
// whole-network gradient checking.
HmsNetConfig toy_net_config();

struct ForwardResult {
    Array3 prediction;      // 1 x H x W, zero where the final mask is zero
    Mask2 prediction_mask;
    ForwardTape tape;
};

// Depth completion network: stem convolution, a chain of multi-scale blocks
// each followed by max-pooling, matching upsampling stages, and a 1x1 head.
class HmsNet {
public:
    explicit HmsNet(HmsNetConfig cfg = {});

    const HmsNetConfig& config() const { return cfg_; }
    const Graph& graph() const { return graph_; }
    int spatial_divisor() const { return divisor_; }

    void init_params(ParamStore& store, std::uint64_t seed) const;
    ForwardResult forward(const MaskedMap& depth_in, const ParamStore& store) const;
    void backward(const ForwardTape& tape, const Array3& d_prediction, ParamStore& store) const;

private:
    HmsNetConfig cfg_;
    Graph graph_;
    int divisor_ = 1;
};

struct BlockResult {
    MaskedMap full;
    MaskedMap mid;
};

// Standalone block execution against pre-initialized parameters, sharing the
// emitter the network builder uses. mid_in may be null.
BlockResult run_two_scale_block(const MaskedMap& full_in, const ParamStore& store,
                                const std::string& prefix, int channels = 16,
                                int half_width = 2);
BlockResult run_three_scale_block(const MaskedMap& full_in, const MaskedMap* mid_in,
                                  const ParamStore& store, const std::string& prefix,
                                  int channels = 16, int half_width = 2);
void init_block_params(ParamStore& store, BlockKind kind, const std::string& prefix,
                       int channels, int half_width, std::uint64_t seed);

}  // namespace hms
