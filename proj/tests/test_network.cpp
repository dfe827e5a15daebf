#include <cmath>

#include "doctest.h"
#include "hms/gradcheck.hpp"
#include "hms/network.hpp"
#include "test_util.hpp"

using namespace hms;
using namespace hms::test;

TEST_CASE("two-scale block equals its manual composition") {
    ParamStore store;
    init_block_params(store, BlockKind::two_scale, "b", 16, 2, 99);
    const MaskedMap input = random_masked_map(16, 8, 8, 0.5, 42);
    const BlockResult block = run_two_scale_block(input, store, "b");

    const auto conv = [&](const MaskedMap& x, const std::string& name) {
        ConvKernel k = ConvKernel::zeros(16, 16, 2);
        k.weights = store.at(name + ".w").value;
        k.bias = store.at(name + ".b").value;
        return si_conv_forward(x, k);
    };
    const MaskedMap upper = relu_masked(conv(input, "b.up"));
    const MaskedMap mid = relu_masked(conv(si_maxpool(input, 2), "b.down"));
    const MaskedMap manual = si_average(upper, si_upsample_forward(mid));
    CHECK(bitwise_equal(block.full, manual));
    CHECK(bitwise_equal(block.mid, mid));
}

TEST_CASE("three-scale block equals its manual composition, with mid chaining") {
    ParamStore store;
    init_block_params(store, BlockKind::three_scale, "t", 16, 2, 7);
    const MaskedMap input = random_masked_map(16, 8, 8, 0.6, 43);
    const MaskedMap mid_in = random_masked_map(16, 4, 4, 0.6, 44);
    const BlockResult block = run_three_scale_block(input, &mid_in, store, "t");

    const auto conv = [&](const MaskedMap& x, const std::string& name) {
        ConvKernel k = ConvKernel::zeros(16, 16, 2);
        k.weights = store.at(name + ".w").value;
        k.bias = store.at(name + ".b").value;
        return si_conv_forward(x, k);
    };
    const MaskedMap upper = relu_masked(conv(input, "t.up"));
    const MaskedMap mid_src = si_average(si_maxpool(input, 2), mid_in);
    const MaskedMap mid_feat = relu_masked(conv(mid_src, "t.mid"));
    const MaskedMap low_feat = relu_masked(conv(si_maxpool(mid_src, 2), "t.low"));
    const MaskedMap mid_fused = si_average(mid_feat, si_upsample_forward(low_feat));
    const MaskedMap manual = si_average(upper, si_upsample_forward(mid_fused));
    CHECK(bitwise_equal(block.full, manual));
    CHECK(bitwise_equal(block.mid, mid_fused));
}

TEST_CASE("three-scale block annihilates an all-invalid input") {
    ParamStore store;
    init_block_params(store, BlockKind::three_scale, "t", 16, 2, 8);
    const MaskedMap input = canonicalize(Array3(16, 8, 8), Mask2(8, 8));
    const BlockResult block = run_three_scale_block(input, nullptr, store, "t");
    CHECK(block.full.mask.count_valid() == 0);
    for (const real v : block.full.features.data) CHECK(v == real(0));
}

TEST_CASE("blocks reject wrong channel counts and indivisible shapes") {
    ParamStore store;
    init_block_params(store, BlockKind::three_scale, "t", 16, 2, 7);
    CHECK_THROWS_AS(run_three_scale_block(random_masked_map(8, 8, 8, 0.5, 1), nullptr, store, "t"),
                    ConfigError);
    CHECK_THROWS_AS(run_three_scale_block(random_masked_map(16, 6, 6, 0.5, 1), nullptr, store,
                                          "t"),
                    DimensionError);
}

TEST_CASE("all-invalid input propagates to an all-invalid block output") {
    ParamStore store;
    init_block_params(store, BlockKind::two_scale, "b", 16, 2, 5);
    const MaskedMap input = canonicalize(Array3(16, 8, 8), Mask2(8, 8));
    const BlockResult block = run_two_scale_block(input, store, "b");
    CHECK(block.full.mask.count_valid() == 0);
    for (const real v : block.full.features.data) CHECK(v == real(0));
    const MaskedMap dense = random_masked_map(16, 8, 8, 1.1, 6);
    CHECK(run_two_scale_block(dense, store, "b").full.mask.count_valid() == 64);
}

TEST_CASE("hmsnet forward: shape, finiteness, divisor checks") {
    const HmsNet net;  // default: two + three + three scale blocks
    CHECK(net.spatial_divisor() == 16);
    ParamStore store;
    net.init_params(store, 1);

    Array3 x(1, 16, 16);
    Mask2 m(16, 16);
    x.at(0, 7, 9) = 12;
    m.at(7, 9) = 1;  // single valid point
    const ForwardResult res = net.forward(canonicalize(x, m), store);
    CHECK(res.prediction.channels == 1);
    CHECK(res.prediction.height == 16);
    CHECK(res.prediction.width == 16);
    CHECK(res.prediction.all_finite());

    CHECK_THROWS_AS(net.forward(random_masked_map(1, 24, 24, 0.5, 1), store), DimensionError);
    CHECK_THROWS_AS(net.forward(random_masked_map(2, 16, 16, 0.5, 1), store), DimensionError);
}

TEST_CASE("hmsnet: every intermediate map is 16 channels wide") {
    const HmsNet net;
    ParamStore store;
    net.init_params(store, 2);
    const MaskedMap input = random_masked_map(1, 16, 16, 0.4, 3, 1.0, 40.0);
    const ForwardResult res = net.forward(input, store);
    const Graph& g = net.graph();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        if (g.nodes[i].kind == LayerKind::input) continue;
        if (int(i) == g.output) continue;
        CHECK(res.tape.records[i].out.features.channels == 16);
    }
}

TEST_CASE("hmsnet end-to-end mask-out invariance, bit identical") {
    const HmsNet net;
    ParamStore store;
    net.init_params(store, 11);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const MaskedMap input = random_masked_map(1, 16, 16, 0.15, s, 1.0, 60.0);
        const MaskedMap garbage = with_garbage(input, s);
        const Array3 a = net.forward(input, store).prediction;
        const Array3 b = net.forward(garbage, store).prediction;
        CHECK(a.data == b.data);
    }
}

TEST_CASE("hmsnet forward is deterministic") {
    const HmsNet net(toy_net_config());
    ParamStore store;
    net.init_params(store, 21);
    const MaskedMap input = random_masked_map(1, 16, 16, 0.2, 5, 1.0, 50.0);
    const Array3 a = net.forward(input, store).prediction;
    const Array3 b = net.forward(input, store).prediction;
    CHECK(a.data == b.data);
}

TEST_CASE("tape: replay reproduces outputs; missing records are detected") {
    const HmsNet net(toy_net_config());
    ParamStore store;
    net.init_params(store, 31);
    const MaskedMap input = random_masked_map(1, 8, 8, 0.4, 9, 1.0, 20.0);
    ForwardResult res = net.forward(input, store);
    CHECK(verify_tape_replay(net.graph(), res.tape, store));

    Array3 d(1, 8, 8, real(0.1));
    store.zero_grads();
    net.backward(res.tape, d, store);  // intact tape works

    ForwardTape broken = res.tape;
    broken.records[broken.records.size() / 2].present = false;
    CHECK_THROWS_AS(net.backward(broken, d, store), IntegrityError);
}

TEST_CASE("backward: zero upstream gradient leaves all parameter gradients zero") {
    const HmsNet net(toy_net_config());
    ParamStore store;
    net.init_params(store, 41);
    const MaskedMap input = random_masked_map(1, 8, 8, 0.4, 10, 1.0, 20.0);
    ForwardResult res = net.forward(input, store);
    net.backward(res.tape, Array3(1, 8, 8), store);
    for (const ParamTensor& t : store.tensors())
        for (const real v : t.grad) CHECK(v == real(0));
}

TEST_CASE("backward: a 3-pixel loss region still reaches the parameters") {
    const HmsNet net(toy_net_config());
    ParamStore store;
    net.init_params(store, 51);
    const MaskedMap input = random_masked_map(1, 8, 8, 0.5, 11, 1.0, 20.0);
    ForwardResult res = net.forward(input, store);
    Array3 d(1, 8, 8);
    d.at(0, 1, 1) = 1;
    d.at(0, 4, 6) = -2;
    d.at(0, 7, 3) = real(0.5);
    net.backward(res.tape, d, store);
    double total = 0;
    for (const ParamTensor& t : store.tensors())
        for (const real v : t.grad) total += std::abs(double(v));
    CHECK(total > 0);
}

TEST_CASE("whole toy network matches finite differences") {
    CHECK(gradcheck_network(1, 50).pass(1e-3));
}

TEST_CASE("ablation variants build and stay mask-out invariant") {
    for (const NetVariant variant : {NetVariant::up_only, NetVariant::down_only,
                                     NetVariant::no_mid_flow, NetVariant::baseline}) {
        HmsNetConfig cfg;
        cfg.variant = variant;
        const HmsNet net(cfg);
        ParamStore store;
        net.init_params(store, 61);
        const int size = net.spatial_divisor() * 2 > 16 ? 32 : 16;
        const MaskedMap input = random_masked_map(1, size, size, 0.2, 12, 1.0, 50.0);
        const MaskedMap garbage = with_garbage(input, 13);
        const Array3 a = net.forward(input, store).prediction;
        const Array3 b = net.forward(garbage, store).prediction;
        CHECK(a.data == b.data);
    }
}

TEST_CASE("baseline variant drops all multi-scale fusion but keeps the main flow") {
    HmsNetConfig cfg;
    cfg.variant = NetVariant::baseline;
    const HmsNet net(cfg);
    CHECK(net.spatial_divisor() == 8);  // the three main-flow pools remain
    int convs = 0, pools = 0, ups = 0;
    for (const LayerSpec& n : net.graph().nodes) {
        CHECK(n.kind != LayerKind::si_average);  // no fusion edges anywhere
        if (n.kind == LayerKind::si_conv) ++convs;
        if (n.kind == LayerKind::si_maxpool) ++pools;
        if (n.kind == LayerKind::si_upsample) ++ups;
    }
    CHECK(convs == 5);  // stem + one upper conv per block + head
    CHECK(pools == 3);
    CHECK(ups == 3);
    ParamStore store;
    net.init_params(store, 71);
    const MaskedMap input = random_masked_map(1, 16, 16, 0.3, 14, 1.0, 50.0);
    CHECK(net.forward(input, store).prediction.all_finite());
}

TEST_CASE("guided fusion graph: depth features joined with synthetic guidance") {
    GraphBuilder b;
    const int depth_in = b.input();
    const int guide_in = b.input();
    const int feat = b.relu(b.si_conv(depth_in, "enc", 4, 1, 2));
    const int fused = b.concat_conv(feat, guide_in, "fuse", 4, 4, 3);
    b.set_output(b.si_conv(fused, "head", 1, 4, 0));
    const Graph g = b.take();

    ParamStore store;
    init_graph_params(g, store, 81);
    const MaskedMap depth = random_masked_map(1, 8, 8, 0.3, 15, 1.0, 30.0);
    const MaskedMap guidance = random_masked_map(3, 8, 8, 0.7, 16);
    const ForwardTape tape = run_graph(g, {&depth, &guidance}, store);
    const MaskedMap& out = tape.output_of(g.output);
    CHECK(out.features.all_finite());
    CHECK(out.is_canonical());

    store.zero_grads();
    Array3 d(1, 8, 8, real(0.01));
    graph_backward(g, tape, d, store);
    double fuse_grad = 0;
    for (const char* n : {"fuse.k1", "fuse.k2", "fuse.k3"})
        for (const real v : store.at(n).grad) fuse_grad += std::abs(double(v));
    CHECK(fuse_grad > 0);
}

TEST_CASE("graph validation rejects malformed specs") {
    Graph g;
    LayerSpec bad;
    bad.kind = LayerKind::relu_masked;
    bad.inputs = {0};  // self-reference at index 0
    g.nodes.push_back(bad);
    g.output = 0;
    CHECK_THROWS_AS(g.validate(), IntegrityError);

    Graph g2;
    LayerSpec in;
    in.kind = LayerKind::input;
    in.ext = 0;
    g2.num_external_inputs = 1;
    g2.nodes.push_back(in);
    LayerSpec conv;
    conv.kind = LayerKind::si_conv;  // parameterized kind without a name
    conv.inputs = {0};
    g2.nodes.push_back(conv);
    g2.output = 1;
    CHECK_THROWS_AS(g2.validate(), IntegrityError);
}

TEST_CASE("backward pass is deterministic") {
    const HmsNet net(toy_net_config());
    ParamStore store;
    net.init_params(store, 91);
    const MaskedMap input = random_masked_map(1, 8, 8, 0.4, 19, 1.0, 20.0);
    ForwardResult res = net.forward(input, store);
    Rng rng(20);
    Array3 d(1, 8, 8);
    for (real& v : d.data) v = real(rng.uniform(-1, 1));

    store.zero_grads();
    net.backward(res.tape, d, store);
    std::vector<std::vector<real>> grads_a;
    for (const ParamTensor& t : store.tensors()) grads_a.push_back(t.grad);

    store.zero_grads();
    net.backward(res.tape, d, store);
    for (std::size_t i = 0; i < store.tensors().size(); ++i)
        CHECK(store.tensors()[i].grad == grads_a[i]);
}
