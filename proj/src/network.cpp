#include "hms/network.hpp"

#include <cmath>
#include <cstring>

#include "hms/rng.hpp"

namespace hms {

const ParamDecl& Graph::decl(const std::string& name) const {
    const auto it = param_index.find(name);
    if (it == param_index.end()) throw IntegrityError("graph: unknown parameter '" + name + "'");
    return params[std::size_t(it->second)];
}

void Graph::validate() const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const LayerSpec& n = nodes[i];
        for (const int in : n.inputs)
            if (in < 0 || in >= int(i))
                throw IntegrityError("graph: node " + std::to_string(i) +
                                     " references node " + std::to_string(in) +
                                     " that does not precede it");
        const bool parameterized =
            n.kind == LayerKind::si_conv || n.kind == LayerKind::si_concat_conv;
        if (parameterized != !n.param.empty())
            throw IntegrityError("graph: node " + std::to_string(i) +
                                 " parameter name mismatch with kind");
        if (n.kind == LayerKind::input && (n.ext < 0 || n.ext >= num_external_inputs))
            throw IntegrityError("graph: bad external input slot");
    }
    if (output < 0 || output >= int(nodes.size()))
        throw IntegrityError("graph: output node unset");
}

ParamTensor& ParamStore::add(const std::string& name, std::vector<int> dims) {
    if (index_.count(name)) throw IntegrityError("param store: duplicate name '" + name + "'");
    std::size_t n = 1;
    for (const int d : dims) n *= std::size_t(d);
    ParamTensor t;
    t.name = name;
    t.dims = std::move(dims);
    t.value.assign(n, real(0));
    t.grad.assign(n, real(0));
    t.adam_m.assign(n, real(0));
    t.adam_v.assign(n, real(0));
    index_[name] = tensors_.size();
    tensors_.push_back(std::move(t));
    return tensors_.back();
}

ParamTensor& ParamStore::at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw IntegrityError("param store: unknown name '" + name + "'");
    return tensors_[it->second];
}

const ParamTensor& ParamStore::at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw IntegrityError("param store: unknown name '" + name + "'");
    return tensors_[it->second];
}

void ParamStore::zero_grads() {
    for (ParamTensor& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), real(0));
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const ParamTensor& t : tensors_) n += t.size();
    return n;
}

std::uint64_t ParamStore::value_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const ParamTensor& t : tensors_)
        for (const real v : t.value) {
            unsigned char bytes[sizeof(real)];
            std::memcpy(bytes, &v, sizeof(real));
            for (const unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    return h;
}

void snap_to_f32(std::vector<real>& v) {
    if constexpr (!std::is_same_v<real, float>) {
        for (real& x : v) x = real(float(x));
    }
}

const MaskedMap& ForwardTape::output_of(int node) const {
    if (node < 0 || std::size_t(node) >= records.size() || !records[std::size_t(node)].present)
        throw IntegrityError("tape: missing record for node " + std::to_string(node));
    return records[std::size_t(node)].out;
}

namespace {

ConvKernel load_conv(const Graph& g, const ParamStore& store, const std::string& name) {
    const ParamDecl& d = g.decl(name);
    ConvKernel k = ConvKernel::zeros(d.out_ch, d.in_ch, d.half_width);
    k.weights = store.at(name + ".w").value;
    k.bias = store.at(name + ".b").value;
    return k;
}

AdaptiveKernel load_adaptive(const Graph& g, const ParamStore& store, const std::string& name) {
    const ParamDecl& d = g.decl(name);
    AdaptiveKernel k = AdaptiveKernel::zeros(d.out_ch, d.c1, d.c2);
    k.k1 = store.at(name + ".k1").value;
    k.k2 = store.at(name + ".k2").value;
    k.k3 = store.at(name + ".k3").value;
    k.bias = store.at(name + ".b").value;
    return k;
}

void accumulate(Array3& into, const Array3& g) {
    if (into.size() == 0) {
        into = g;
        return;
    }
    check_same_shape(into, g, "gradient accumulate");
    for (std::size_t i = 0; i < g.size(); ++i) into.data[i] += g.data[i];
}

void add_param_grad(ParamStore& store, const std::string& name, const std::vector<real>& g) {
    ParamTensor& t = store.at(name);
    if (t.grad.size() != g.size())
        throw IntegrityError("gradient size mismatch for '" + name + "'");
    for (std::size_t i = 0; i < g.size(); ++i) t.grad[i] += g[i];
}

}  // namespace

ForwardTape run_graph(const Graph& g, const std::vector<const MaskedMap*>& inputs,
                      const ParamStore& store) {
    if (int(inputs.size()) != g.num_external_inputs)
        throw DimensionError("run_graph: expected " + std::to_string(g.num_external_inputs) +
                             " inputs, got " + std::to_string(inputs.size()));
    ForwardTape tape;
    tape.records.resize(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const LayerSpec& n = g.nodes[i];
        MaskedMap out;
        switch (n.kind) {
            case LayerKind::input:
                out = *inputs[std::size_t(n.ext)];
                break;
            case LayerKind::si_conv:
                out = si_conv_forward(tape.output_of(n.inputs[0]), load_conv(g, store, n.param));
                break;
            case LayerKind::si_maxpool:
                out = si_maxpool(tape.output_of(n.inputs[0]), n.window);
                break;
            case LayerKind::si_upsample:
                out = si_upsample_forward(tape.output_of(n.inputs[0]));
                break;
            case LayerKind::si_average:
                out = si_average(tape.output_of(n.inputs[0]), tape.output_of(n.inputs[1]));
                break;
            case LayerKind::si_concat_conv:
                out = si_concat_conv_forward(tape.output_of(n.inputs[0]),
                                             tape.output_of(n.inputs[1]),
                                             load_adaptive(g, store, n.param));
                break;
            case LayerKind::relu_masked:
                out = relu_masked(tape.output_of(n.inputs[0]));
                break;
        }
        tape.records[i].node = int(i);
        tape.records[i].out = std::move(out);
        tape.records[i].present = true;
    }
    return tape;
}

void graph_backward(const Graph& g, const ForwardTape& tape, const Array3& d_output,
                    ParamStore& store) {
    if (tape.records.size() != g.nodes.size())
        throw IntegrityError("tape: record count " + std::to_string(tape.records.size()) +
                             " does not match node count " + std::to_string(g.nodes.size()));
    for (std::size_t i = 0; i < tape.records.size(); ++i)
        if (!tape.records[i].present || tape.records[i].node != int(i))
            throw IntegrityError("tape: record " + std::to_string(i) + " missing or relabeled");

    std::vector<Array3> grads(g.nodes.size());
    accumulate(grads[std::size_t(g.output)], d_output);

    for (int i = int(g.nodes.size()) - 1; i >= 0; --i) {
        const Array3& d = grads[std::size_t(i)];
        if (d.size() == 0) continue;  // node does not influence the output
        const LayerSpec& n = g.nodes[std::size_t(i)];
        switch (n.kind) {
            case LayerKind::input:
                break;
            case LayerKind::si_conv: {
                OpGrad og = si_conv_backward(tape.output_of(n.inputs[0]),
                                             load_conv(g, store, n.param), d);
                accumulate(grads[std::size_t(n.inputs[0])], og.d_inputs[0]);
                add_param_grad(store, n.param + ".w", og.d_weights);
                add_param_grad(store, n.param + ".b", og.d_bias);
                break;
            }
            case LayerKind::si_maxpool: {
                OpGrad og = si_maxpool_backward(tape.output_of(n.inputs[0]), n.window, d);
                accumulate(grads[std::size_t(n.inputs[0])], og.d_inputs[0]);
                break;
            }
            case LayerKind::si_upsample: {
                OpGrad og = si_upsample_backward(tape.output_of(n.inputs[0]), d);
                accumulate(grads[std::size_t(n.inputs[0])], og.d_inputs[0]);
                break;
            }
            case LayerKind::si_average: {
                OpGrad og = si_average_backward(tape.output_of(n.inputs[0]),
                                                tape.output_of(n.inputs[1]), d);
                accumulate(grads[std::size_t(n.inputs[0])], og.d_inputs[0]);
                accumulate(grads[std::size_t(n.inputs[1])], og.d_inputs[1]);
                break;
            }
            case LayerKind::si_concat_conv: {
                OpGrad og = si_concat_conv_backward(tape.output_of(n.inputs[0]),
                                                    tape.output_of(n.inputs[1]),
                                                    load_adaptive(g, store, n.param), d);
                accumulate(grads[std::size_t(n.inputs[0])], og.d_inputs[0]);
                accumulate(grads[std::size_t(n.inputs[1])], og.d_inputs[1]);
                add_param_grad(store, n.param + ".k1", og.d_k1);
                add_param_grad(store, n.param + ".k2", og.d_k2);
                add_param_grad(store, n.param + ".k3", og.d_k3);
                add_param_grad(store, n.param + ".b", og.d_bias);
                break;
            }
            case LayerKind::relu_masked: {
                OpGrad og = relu_masked_backward(tape.output_of(n.inputs[0]), d);
                accumulate(grads[std::size_t(n.inputs[0])], og.d_inputs[0]);
                break;
            }
        }
    }
}

bool verify_tape_replay(const Graph& g, const ForwardTape& tape, const ParamStore& store) {
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const LayerSpec& n = g.nodes[i];
        if (n.kind == LayerKind::input) continue;
        MaskedMap redo;
        switch (n.kind) {
            case LayerKind::si_conv:
                redo = si_conv_forward(tape.output_of(n.inputs[0]), load_conv(g, store, n.param));
                break;
            case LayerKind::si_maxpool:
                redo = si_maxpool(tape.output_of(n.inputs[0]), n.window);
                break;
            case LayerKind::si_upsample:
                redo = si_upsample_forward(tape.output_of(n.inputs[0]));
                break;
            case LayerKind::si_average:
                redo = si_average(tape.output_of(n.inputs[0]), tape.output_of(n.inputs[1]));
                break;
            case LayerKind::si_concat_conv:
                redo = si_concat_conv_forward(tape.output_of(n.inputs[0]),
                                              tape.output_of(n.inputs[1]),
                                              load_adaptive(g, store, n.param));
                break;
            case LayerKind::relu_masked:
                redo = relu_masked(tape.output_of(n.inputs[0]));
                break;
            default:
                break;
        }
        const MaskedMap& rec = tape.output_of(int(i));
        if (redo.features.data != rec.features.data || redo.mask.data != rec.mask.data)
            return false;
    }
    return true;
}

void init_graph_params(const Graph& g, ParamStore& store, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x70617261));
    const auto fill_uniform = [&](std::vector<real>& v, double bound) {
        for (real& x : v) x = real(rng.uniform(-bound, bound));
        snap_to_f32(v);
    };
    for (const ParamDecl& d : g.params) {
        if (d.kind == ParamDecl::conv) {
            const int K = 2 * d.half_width + 1;
            const double bound = std::sqrt(1.0 / (double(d.in_ch) * K * K));
            ParamTensor& w = store.add(d.name + ".w", {d.out_ch, d.in_ch, K, K});
            fill_uniform(w.value, bound);
            store.add(d.name + ".b", {d.out_ch});
        } else {
            const double bound = std::sqrt(1.0 / double(d.c1 + d.c2));
            for (const char* suffix : {".k1", ".k2", ".k3"}) {
                ParamTensor& k = store.add(d.name + suffix, {d.out_ch, d.c1 + d.c2, 1, 1});
                fill_uniform(k.value, bound);
            }
            store.add(d.name + ".b", {d.out_ch});
        }
    }
}

void check_params_match(const Graph& g, const ParamStore& store) {
    const auto expect = [&](const std::string& name, const std::vector<int>& dims) {
        if (!store.has(name))
            throw IntegrityError("parameter '" + name + "' missing from store");
        const ParamTensor& t = store.at(name);
        if (t.dims != dims) {
            std::string want, got;
            for (const int d : dims) want += std::to_string(d) + " ";
            for (const int d : t.dims) got += std::to_string(d) + " ";
            throw IntegrityError("parameter '" + name + "' shape [" + got + "] vs expected [" +
                                 want + "]");
        }
    };
    for (const ParamDecl& d : g.params) {
        if (d.kind == ParamDecl::conv) {
            const int K = 2 * d.half_width + 1;
            expect(d.name + ".w", {d.out_ch, d.in_ch, K, K});
            expect(d.name + ".b", {d.out_ch});
        } else {
            for (const char* s : {".k1", ".k2", ".k3"})
                expect(d.name + s, {d.out_ch, d.c1 + d.c2, 1, 1});
            expect(d.name + ".b", {d.out_ch});
        }
    }
}

int GraphBuilder::push(LayerSpec n) {
    g_.nodes.push_back(std::move(n));
    return int(g_.nodes.size()) - 1;
}

int GraphBuilder::input() {
    LayerSpec n;
    n.kind = LayerKind::input;
    n.ext = g_.num_external_inputs++;
    return push(std::move(n));
}

int GraphBuilder::si_conv(int src, const std::string& name, int out_ch, int in_ch,
                          int half_width) {
    ParamDecl d;
    d.kind = ParamDecl::conv;
    d.name = name;
    d.out_ch = out_ch;
    d.in_ch = in_ch;
    d.half_width = half_width;
    g_.param_index[name] = int(g_.params.size());
    g_.params.push_back(d);
    LayerSpec n;
    n.kind = LayerKind::si_conv;
    n.param = name;
    n.inputs = {src};
    return push(std::move(n));
}

int GraphBuilder::relu(int src) {
    LayerSpec n;
    n.kind = LayerKind::relu_masked;
    n.inputs = {src};
    return push(std::move(n));
}

int GraphBuilder::maxpool(int src, int window) {
    LayerSpec n;
    n.kind = LayerKind::si_maxpool;
    n.inputs = {src};
    n.window = window;
    return push(std::move(n));
}

int GraphBuilder::upsample(int src) {
    LayerSpec n;
    n.kind = LayerKind::si_upsample;
    n.inputs = {src};
    return push(std::move(n));
}

int GraphBuilder::average(int a, int b) {
    LayerSpec n;
    n.kind = LayerKind::si_average;
    n.inputs = {a, b};
    return push(std::move(n));
}

int GraphBuilder::concat_conv(int a, int b, const std::string& name, int out_ch, int c1,
                              int c2) {
    ParamDecl d;
    d.kind = ParamDecl::adaptive;
    d.name = name;
    d.out_ch = out_ch;
    d.c1 = c1;
    d.c2 = c2;
    g_.param_index[name] = int(g_.params.size());
    g_.params.push_back(d);
    LayerSpec n;
    n.kind = LayerKind::si_concat_conv;
    n.param = name;
    n.inputs = {a, b};
    return push(std::move(n));
}

Graph GraphBuilder::take() {
    g_.validate();
    return std::move(g_);
}

namespace {

struct BlockPorts {
    int full_out = -1;
    int mid_out = -1;
};

// Normative block wiring. Fusion edges, relative to which the ablation
// variants are defined:
//   down edge: pooled full-resolution features averaged into the incoming
//              mid-level flow (exists only when a mid flow arrives);
//   up edges:  upsampled coarser features averaged into the finer path.
BlockPorts emit_two_scale(GraphBuilder& b, int full_in, int mid_in, const std::string& prefix,
                          int ch, int k, NetVariant var) {
    const int upper = b.relu(b.si_conv(full_in, prefix + ".up", ch, ch, k));
    int mid_src = -1;
    if (mid_in >= 0 && var == NetVariant::up_only) {
        mid_src = mid_in;
    } else {
        mid_src = b.maxpool(full_in);
        if (mid_in >= 0) mid_src = b.average(mid_src, mid_in);
    }
    const int mid_feat = b.relu(b.si_conv(mid_src, prefix + ".down", ch, ch, k));
    BlockPorts ports;
    ports.mid_out = mid_feat;
    ports.full_out = var == NetVariant::down_only
                         ? upper
                         : b.average(upper, b.upsample(mid_feat));
    return ports;
}

BlockPorts emit_three_scale(GraphBuilder& b, int full_in, int mid_in, const std::string& prefix,
                            int ch, int k, NetVariant var) {
    const int upper = b.relu(b.si_conv(full_in, prefix + ".up", ch, ch, k));
    int mid_src = -1;
    if (mid_in >= 0 && var == NetVariant::up_only) {
        mid_src = mid_in;
    } else {
        mid_src = b.maxpool(full_in);
        if (mid_in >= 0) mid_src = b.average(mid_src, mid_in);
    }
    const int mid_feat = b.relu(b.si_conv(mid_src, prefix + ".mid", ch, ch, k));
    const int low_feat = b.relu(b.si_conv(b.maxpool(mid_src), prefix + ".low", ch, ch, k));
    const int mid_fused = var == NetVariant::down_only
                              ? mid_feat
                              : b.average(mid_feat, b.upsample(low_feat));
    BlockPorts ports;
    ports.mid_out = mid_fused;
    ports.full_out = var == NetVariant::down_only
                         ? upper
                         : b.average(upper, b.upsample(mid_fused));
    return ports;
}

BlockPorts emit_block(GraphBuilder& b, BlockKind kind, int full_in, int mid_in,
                      const std::string& prefix, int ch, int k, NetVariant var) {
    return kind == BlockKind::two_scale ? emit_two_scale(b, full_in, mid_in, prefix, ch, k, var)
                                        : emit_three_scale(b, full_in, mid_in, prefix, ch, k, var);
}

// Drops nodes that cannot reach the output (ablations leave some paths dead).
Graph prune_unreachable(Graph g) {
    std::vector<bool> keep(g.nodes.size(), false);
    std::vector<int> stack{g.output};
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        if (keep[std::size_t(i)]) continue;
        keep[std::size_t(i)] = true;
        for (const int in : g.nodes[std::size_t(i)].inputs) stack.push_back(in);
    }
    std::vector<int> remap(g.nodes.size(), -1);
    Graph out;
    out.num_external_inputs = g.num_external_inputs;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        if (!keep[i]) continue;
        LayerSpec n = g.nodes[i];
        for (int& in : n.inputs) in = remap[std::size_t(in)];
        remap[i] = int(out.nodes.size());
        out.nodes.push_back(std::move(n));
    }
    out.output = remap[std::size_t(g.output)];
    for (const ParamDecl& d : g.params) {
        bool used = false;
        for (const LayerSpec& n : out.nodes)
            if (n.param == d.name) {
                used = true;
                break;
            }
        if (used) {
            out.param_index[d.name] = int(out.params.size());
            out.params.push_back(d);
        }
    }
    out.validate();
    return out;
}

int compute_divisor(const HmsNetConfig& cfg) {
    int divisor = 1, scale = 1;
    const int n = int(cfg.blocks.size());
    for (int i = 0; i < n; ++i) {
        if (cfg.variant != NetVariant::baseline) {
            const int need =
                cfg.blocks[std::size_t(i)] == BlockKind::two_scale ? 2 * scale : 4 * scale;
            divisor = std::max(divisor, need);
            const bool chains = i + 1 < n && cfg.variant != NetVariant::no_mid_flow;
            if (chains) divisor = std::max(divisor, 4 * scale);  // mid flow pooled between blocks
        }
        divisor = std::max(divisor, 2 * scale);  // pool after the block
        scale *= 2;
    }
    return divisor;
}

Graph build_hmsnet_graph(const HmsNetConfig& cfg) {
    GraphBuilder b;
    const int ch = cfg.channels, k = cfg.conv_half_width;
    const int in0 = b.input();
    int x = b.relu(b.si_conv(in0, "stem", ch, 1, k));
    const int n = int(cfg.blocks.size());
    int mid_chain = -1;
    for (int i = 0; i < n; ++i) {
        // The baseline keeps only each block's upper conv; the main flow
        // still downsamples after every block, so it gradually loses
        // resolution with no multi-scale fusion to recover it.
        if (cfg.variant == NetVariant::baseline) {
            x = b.relu(b.si_conv(x, "block" + std::to_string(i + 1) + ".up", ch, ch, k));
        } else {
            const BlockPorts ports =
                emit_block(b, cfg.blocks[std::size_t(i)], x, mid_chain,
                           "block" + std::to_string(i + 1), ch, k, cfg.variant);
            x = ports.full_out;
            mid_chain = (i + 1 < n && cfg.variant != NetVariant::no_mid_flow)
                            ? b.maxpool(ports.mid_out)
                            : -1;
        }
        x = b.maxpool(x);
    }
    for (int i = 0; i < n; ++i) x = b.upsample(x);
    b.set_output(b.si_conv(x, "head", 1, ch, 0));
    return prune_unreachable(b.take());
}

}  // namespace

HmsNetConfig toy_net_config() {
    HmsNetConfig cfg;
    cfg.blocks = {BlockKind::two_scale, BlockKind::three_scale};
    return cfg;
}

HmsNet::HmsNet(HmsNetConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.blocks.empty()) throw ConfigError("hmsnet: at least one block required");
    graph_ = build_hmsnet_graph(cfg_);
    divisor_ = compute_divisor(cfg_);
}

void HmsNet::init_params(ParamStore& store, std::uint64_t seed) const {
    init_graph_params(graph_, store, seed);
}

ForwardResult HmsNet::forward(const MaskedMap& depth_in, const ParamStore& store) const {
    if (depth_in.channels() != 1)
        throw DimensionError("hmsnet: expected a 1-channel depth map, got " +
                             std::to_string(depth_in.channels()) + " channels");
    if (depth_in.height() % divisor_ != 0 || depth_in.width() % divisor_ != 0)
        throw DimensionError("hmsnet: spatial shape (" + std::to_string(depth_in.height()) +
                             "," + std::to_string(depth_in.width()) +
                             ") not divisible by " + std::to_string(divisor_));
    ForwardResult res;
    res.tape = run_graph(graph_, {&depth_in}, store);
    const MaskedMap& out = res.tape.output_of(graph_.output);
    res.prediction = out.features;
    res.prediction_mask = out.mask;

    // When every pooling cell of the input holds at least one valid point,
    // mask propagation guarantees a fully dense prediction.
    const int cell = 1 << int(cfg_.blocks.size());
    bool dense_cells = true;
    for (int cu = 0; cu < depth_in.height() && dense_cells; cu += cell)
        for (int cv = 0; cv < depth_in.width() && dense_cells; cv += cell) {
            bool any = false;
            for (int u = cu; u < cu + cell && !any; ++u)
                for (int v = cv; v < cv + cell; ++v)
                    if (depth_in.mask.at(u, v) != real(0)) {
                        any = true;
                        break;
                    }
            dense_cells = any;
        }
    if (dense_cells && res.prediction_mask.count_valid() != res.prediction_mask.data.size())
        throw IntegrityError("hmsnet: dense input cells but a sparse prediction mask");
    return res;
}

void HmsNet::backward(const ForwardTape& tape, const Array3& d_prediction,
                      ParamStore& store) const {
    graph_backward(graph_, tape, d_prediction, store);
}

namespace {

BlockResult run_block(BlockKind kind, const MaskedMap& full_in, const MaskedMap* mid_in,
                      const ParamStore& store, const std::string& prefix, int channels,
                      int half_width) {
    if (full_in.channels() != channels)
        throw ConfigError("block '" + prefix + "': expected " + std::to_string(channels) +
                          "-channel input, got " + std::to_string(full_in.channels()));
    GraphBuilder b;
    const int in0 = b.input();
    int mid_node = -1;
    if (mid_in) mid_node = b.input();
    const BlockPorts ports =
        emit_block(b, kind, in0, mid_node, prefix, channels, half_width, NetVariant::full);
    b.set_output(ports.full_out);
    const Graph g = b.take();
    std::vector<const MaskedMap*> inputs{&full_in};
    if (mid_in) inputs.push_back(mid_in);
    const ForwardTape tape = run_graph(g, inputs, store);
    BlockResult res;
    res.full = tape.output_of(ports.full_out);
    res.mid = tape.output_of(ports.mid_out);
    return res;
}

}  // namespace

BlockResult run_two_scale_block(const MaskedMap& full_in, const ParamStore& store,
                                const std::string& prefix, int channels, int half_width) {
    return run_block(BlockKind::two_scale, full_in, nullptr, store, prefix, channels, half_width);
}

BlockResult run_three_scale_block(const MaskedMap& full_in, const MaskedMap* mid_in,
                                  const ParamStore& store, const std::string& prefix,
                                  int channels, int half_width) {
    return run_block(BlockKind::three_scale, full_in, mid_in, store, prefix, channels,
                     half_width);
}

void init_block_params(ParamStore& store, BlockKind kind, const std::string& prefix,
                       int channels, int half_width, std::uint64_t seed) {
    GraphBuilder b;
    const int in0 = b.input();
    const int mid = b.input();
    const BlockPorts ports =
        emit_block(b, kind, in0, mid, prefix, channels, half_width, NetVariant::full);
    b.set_output(ports.full_out);
    init_graph_params(b.take(), store, seed);
}

}  // namespace hms
