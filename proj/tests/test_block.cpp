#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "iwin/gradcheck.hpp"
#include "iwin/model.hpp"

using namespace iwin;

namespace {

void zero_branches(BlockWeights& w) {
    for (Tensor* t : {&w.attn.wq, &w.attn.wk, &w.attn.wv, &w.attn.wo, &w.attn.bq, &w.attn.bk,
                      &w.attn.bv, &w.attn.bo, &w.mlp.w1, &w.mlp.b1, &w.mlp.w2, &w.mlp.b2}) {
        *t = Tensor::zeros(t->shape());
    }
    if (w.conv.ksize > 0) {
        w.conv.kernel = Tensor::zeros(w.conv.kernel.shape());
        w.conv.bias = Tensor::zeros(w.conv.bias.shape());
    }
}

BlockConfig toy_config(BlockStructure s) {
    BlockConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.window = 2;
    cfg.kernel = 3;
    cfg.mlp_ratio = 2.0;
    cfg.structure = s;
    return cfg;
}

std::vector<Tensor> collect_block_tensors(const BlockWeights& w, bool has_conv, bool three_norms) {
    std::vector<Tensor> ps = {w.ln1.gamma, w.ln1.beta, w.ln2.gamma, w.ln2.beta,
                              w.attn.wq, w.attn.bq, w.attn.wk, w.attn.bk,
                              w.attn.wv, w.attn.bv, w.attn.wo, w.attn.bo,
                              w.mlp.w1, w.mlp.b1, w.mlp.w2, w.mlp.b2};
    if (three_norms) {
        ps.push_back(w.ln3.gamma);
        ps.push_back(w.ln3.beta);
    }
    if (has_conv) {
        ps.push_back(w.conv.kernel);
        ps.push_back(w.conv.bias);
    }
    return ps;
}

BlockWeights rebuild_block(const BlockWeights& proto, const std::vector<Tensor>& ps, bool has_conv,
                           bool three_norms) {
    BlockWeights w = proto;
    w.ln1.gamma = ps[0]; w.ln1.beta = ps[1];
    w.ln2.gamma = ps[2]; w.ln2.beta = ps[3];
    w.attn.wq = ps[4]; w.attn.bq = ps[5];
    w.attn.wk = ps[6]; w.attn.bk = ps[7];
    w.attn.wv = ps[8]; w.attn.bv = ps[9];
    w.attn.wo = ps[10]; w.attn.bo = ps[11];
    w.mlp.w1 = ps[12]; w.mlp.b1 = ps[13];
    w.mlp.w2 = ps[14]; w.mlp.b2 = ps[15];
    std::size_t next = 16;
    if (three_norms) {
        w.ln3.gamma = ps[next++];
        w.ln3.beta = ps[next++];
    }
    if (has_conv) {
        w.conv.kernel = ps[next++];
        w.conv.bias = ps[next++];
    }
    return w;
}

}  // namespace

TEST_CASE("zero branch weights make the block an identity map, all structures") {
    Rng rng(1);
    Tensor x = Tensor::randn({2, 4, 4, 8}, rng);
    for (BlockStructure s : {BlockStructure::S1, BlockStructure::S2, BlockStructure::S3}) {
        BlockConfig cfg = toy_config(s);
        Rng wrng(2);
        BlockWeights w = init_block(cfg, wrng);
        zero_branches(w);
        Tensor y = block_forward(x, cfg, w);
        INFO("structure ", structure_name(s));
        CHECK(max_abs_diff(y, x) == 0.0);
    }
}

TEST_CASE("block preserves shape (56x56x96)") {
    Rng rng(3);
    BlockConfig cfg;
    cfg.dim = 96;
    cfg.heads = 3;
    cfg.window = 7;
    cfg.kernel = 3;
    BlockWeights w = init_block(cfg, rng);
    Tensor x = Tensor::randn({1, 56, 56, 96}, rng);
    Tensor y = block_forward(x, cfg, w);
    CHECK(y.shape() == Shape{1, 56, 56, 96});
    CHECK(all_finite(y));
}

TEST_CASE("block rejects indivisible layouts and missing relative tables") {
    Rng rng(4);
    BlockConfig cfg = toy_config(BlockStructure::S1);
    BlockWeights w = init_block(cfg, rng);
    Tensor bad = Tensor::randn({1, 5, 4, 8}, rng);
    CHECK_THROWS_AS(block_forward(bad, cfg, w), LayoutError);

    BlockConfig relcfg = toy_config(BlockStructure::S1);
    relcfg.pos_mode = PositionMode::relative;
    Tensor x = Tensor::randn({1, 4, 4, 8}, rng);
    CHECK_THROWS_AS(block_forward(x, relcfg, w), ConfigError);  // table never built
}

namespace {

// Gradient checks run at O(1) weight scale: at the 0.02 init scale the key
// projection gradients sit below the finite-difference noise floor and the
// relative comparison is meaningless.
void rescale_for_gradcheck(BlockWeights& w, Rng& rng) {
    auto redraw = [&](Tensor& t, double mean, double std) {
        for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = mean + std * rng.normal();
    };
    for (Tensor* t : {&w.attn.wq, &w.attn.wk, &w.attn.wv, &w.attn.wo, &w.attn.bq, &w.attn.bk,
                      &w.attn.bv, &w.attn.bo, &w.mlp.w1, &w.mlp.b1, &w.mlp.w2, &w.mlp.b2}) {
        redraw(*t, 0.0, 0.4);
    }
    if (w.conv.ksize > 0) {
        redraw(w.conv.kernel, 0.0, 0.4);
        redraw(w.conv.bias, 0.0, 0.4);
    }
    for (LayerNormParams* ln : {&w.ln1, &w.ln2, &w.ln3}) {
        if (!ln->gamma.defined()) continue;
        redraw(ln->gamma, 1.0, 0.2);
        redraw(ln->beta, 0.0, 0.2);
    }
}

}  // namespace

TEST_CASE("block gradients pass finite differences for S1, S2, S3") {
    Rng rng(5);
    Tensor x = Tensor::randn({1, 8, 8, 8}, rng);
    for (BlockStructure s : {BlockStructure::S1, BlockStructure::S2, BlockStructure::S3}) {
        BlockConfig cfg = toy_config(s);
        Rng wrng(6);
        BlockWeights proto = init_block(cfg, wrng);
        rescale_for_gradcheck(proto, wrng);
        const bool three = block_norm_count(cfg) == 3;
        std::vector<Tensor> params = collect_block_tensors(proto, true, three);
        params.push_back(x);
        // mean-scaled loss keeps the finite-difference noise floor well below
        // the tolerance (the key bias has an exactly-zero true gradient)
        auto f = [&](const std::vector<Tensor>& ps) {
            BlockWeights w = rebuild_block(proto, ps, true, three);
            Tensor y = gelu(block_forward(ps.back(), cfg, w));
            return scale(sum_all(y), 1.0 / static_cast<double>(y.size()));
        };
        auto res = finite_diff_check(f, params);
        INFO("structure ", structure_name(s), " max_rel_err=", res.max_rel_err, " worst=", res.worst);
        CHECK(res.pass);
    }
}

TEST_CASE("permutation-free equivalence: reshape route equals index route, bit-exact") {
    Rng rng(7);
    BlockConfig cfg = toy_config(BlockStructure::S1);
    BlockWeights w = init_block(cfg, rng);
    Tensor x = Tensor::randn({1, 4, 4, 8}, rng);
    Tensor a = block_forward(x, cfg, w, PermPath::reshape);
    Tensor b = block_forward(x, cfg, w, PermPath::index_map);
    CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("variant table: T, S, B, L") {
    ModelConfig t = build_variant("T", 224);
    CHECK(t.depths == std::array<int, 4>{2, 2, 6, 2});
    CHECK(t.patch_dim == 96);
    CHECK(t.stage_dim(0) == 96);
    CHECK(t.stage_dim(3) == 768);
    CHECK(t.heads == std::array<int, 4>{3, 6, 12, 24});
    CHECK(t.window == 7);
    CHECK(t.kernels == std::array<int, 4>{3, 3, 3, 0});

    ModelConfig b = build_variant("B", 384);
    CHECK(b.patch_dim == 128);
    CHECK(b.stage_dim(3) == 1024);
    CHECK(b.window == 12);
    CHECK(b.depths == std::array<int, 4>{2, 2, 18, 2});

    ModelConfig l = build_variant("L", 224);
    CHECK(l.heads == std::array<int, 4>{6, 12, 24, 48});

    CHECK(build_variant("S", 1024).window == 16);
    CHECK(build_variant("B", 512).window == 16);
    CHECK_THROWS_AS(build_variant("XL", 224), ConfigError);
    CHECK_THROWS_AS(build_variant("T", 96), ConfigError);
}

TEST_CASE("stage maps of T at 224 descend 56/28/14/7") {
    ModelConfig t = build_variant("T", 224);
    auto rows = describe(t);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].output_size == 56);
    CHECK(rows[1].output_size == 28);
    CHECK(rows[2].output_size == 14);
    CHECK(rows[3].output_size == 7);
    CHECK(rows[0].dim == 96);
    CHECK(rows[3].dim == 768);
    CHECK(rows[3].kernel == 0);
    CHECK(t.num_classes == 1000);
}

TEST_CASE("tiny backbone: finite logits and a runnable backward pass") {
    ModelConfig cfg = build_variant("tiny-test", 64);
    ModelWeights w = init_weights(cfg, 42);
    Rng rng(8);
    Tensor img = Tensor::randn({2, 64, 64, 3}, rng);

    Tape tape;
    ModelWeights tracked = watch_weights(tape, w);
    Tensor logits = backbone_forward(img, cfg, tracked);
    CHECK(logits.shape() == Shape{2, 4});
    CHECK(all_finite(logits));
    Tensor loss = cross_entropy_logits(logits, {1, 3});
    tape.backward(loss);
    // at least one weight receives a nonzero gradient
    double total = 0.0;
    for_each_tensor(tracked, [&](const std::string&, Tensor& t) {
        Tensor g = tape.grad(t);
        for (std::int64_t i = 0; i < g.size(); ++i) total += std::abs(g.data()[i]);
    });
    CHECK(total > 0.0);
}

TEST_CASE("backbone forward is deterministic, bit for bit") {
    ModelConfig cfg = build_variant("tiny-test", 64);
    ModelWeights w = init_weights(cfg, 9);
    Rng rng(10);
    Tensor img = Tensor::randn({1, 64, 64, 3}, rng);
    Tensor a = backbone_forward(img, cfg, w);
    Tensor b = backbone_forward(img, cfg, w);
    CHECK(std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0);
}

TEST_CASE("the same weights run at 224 (M=7) and 448 (M=14) without any reshaping") {
    ModelConfig cfg;
    cfg.name = "narrow";
    cfg.patch_dim = 8;
    cfg.depths = {1, 1, 1, 1};
    cfg.heads = {1, 2, 4, 8};
    cfg.kernels = {3, 3, 3, 0};
    cfg.resolution = 224;
    cfg.window = 7;
    cfg.num_classes = 10;
    cfg.validate();
    ModelWeights w = init_weights(cfg, 11);

    std::vector<std::pair<std::string, Shape>> shapes_before;
    for_each_tensor(w, [&](const std::string& n, const Tensor& t) {
        shapes_before.emplace_back(n, t.shape());
    });

    Rng rng(12);
    Tensor img224 = Tensor::randn({1, 224, 224, 3}, rng);
    Tensor logits224 = backbone_forward(img224, cfg, w);
    CHECK(logits224.shape() == Shape{1, 10});

    ModelConfig cfg448 = cfg;
    cfg448.resolution = 448;
    cfg448.window = window_for_resolution(448);
    CHECK(cfg448.window == 14);
    Tensor img448 = Tensor::randn({1, 448, 448, 3}, rng);
    Tensor logits448 = backbone_forward(img448, cfg448, w);
    CHECK(logits448.shape() == Shape{1, 10});
    CHECK(all_finite(logits448));

    // no parameter was reshaped or replaced
    std::size_t i = 0;
    for_each_tensor(w, [&](const std::string& n, const Tensor& t) {
        CHECK(shapes_before[i].first == n);
        CHECK(shapes_before[i].second == t.shape());
        ++i;
    });
    CHECK(i == shapes_before.size());
}

TEST_CASE("instantiated parameter totals equal the analytic count exactly") {
    for (const char* name : {"tiny-test", "T"}) {
        const ModelConfig cfg = build_variant(name, name == std::string("T") ? 224 : 64);
        ModelWeights w = init_weights(cfg, 1);
        std::int64_t instantiated = 0;
        for_each_tensor(w, [&](const std::string&, const Tensor& t) { instantiated += t.size(); });
        INFO("variant ", name);
        CHECK(instantiated == count_params(cfg));
    }
}

TEST_CASE("analytic count also matches an instantiated ablation config") {
    ModelConfig cfg = build_variant("tiny-test", 64);
    cfg.pos_mode = PositionMode::relative;
    cfg.window = 2;
    ModelWeights w = init_weights(cfg, 2);
    std::int64_t instantiated = 0;
    for_each_tensor(w, [&](const std::string&, const Tensor& t) { instantiated += t.size(); });
    CHECK(instantiated == count_params(cfg));

    cfg.pos_mode = PositionMode::absolute;
    ModelWeights w2 = init_weights(cfg, 2);
    instantiated = 0;
    for_each_tensor(w2, [&](const std::string&, const Tensor& t) { instantiated += t.size(); });
    CHECK(instantiated == count_params(cfg));

    cfg.pos_mode = PositionMode::none;
    cfg.structure = BlockStructure::S3;
    ModelWeights w3 = init_weights(cfg, 2);
    instantiated = 0;
    for_each_tensor(w3, [&](const std::string&, const Tensor& t) { instantiated += t.size(); });
    CHECK(instantiated == count_params(cfg));
}

TEST_CASE("config JSON round trip is field-exact") {
    ModelConfig cfg = build_variant("B", 384);
    cfg.structure = BlockStructure::S3;
    const std::string text = config_to_json(cfg);
    ModelConfig back = config_from_json(text);
    CHECK(back.name == cfg.name);
    CHECK(back.patch_dim == cfg.patch_dim);
    CHECK(back.depths == cfg.depths);
    CHECK(back.heads == cfg.heads);
    CHECK(back.kernels == cfg.kernels);
    CHECK(back.window == cfg.window);
    CHECK(back.resolution == cfg.resolution);
    CHECK(back.num_classes == cfg.num_classes);
    CHECK(back.structure == cfg.structure);
    CHECK(back.pos_mode == cfg.pos_mode);
}

TEST_CASE("model archive round trip reproduces logits bit-exactly") {
    ModelConfig cfg = build_variant("tiny-test", 64);
    ModelWeights w = init_weights(cfg, 77);
    Rng rng(13);
    Tensor img = Tensor::randn({1, 64, 64, 3}, rng);
    Tensor logits = backbone_forward(img, cfg, w);

    const std::string path = "test_model_roundtrip.iwt";
    save_model(path, cfg, w);
    LoadedModel loaded = load_model(path);
    Tensor logits2 = backbone_forward(img, loaded.config, loaded.weights);
    CHECK(std::memcmp(logits.data(), logits2.data(),
                      static_cast<std::size_t>(logits.size()) * sizeof(double)) == 0);
    std::remove(path.c_str());
}
