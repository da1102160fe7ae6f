#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "oracles.hpp"
#include "stim/encoder.hpp"
#include "stim/error.hpp"
#include "stim/pipeline.hpp"

using namespace stim;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.frames = 6;
    c.height = 48;
    c.width = 48;
    c.patch_size = 16;
    c.channels = 32;
    c.layers = 4;
    c.heads = 4;
    return c;
}

Video random_video(const ModelConfig& c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Video v(c.frames, c.height, c.width);
    for (double& p : v.pixels) p = u(rng);
    return v;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("weights are deterministic per seed") {
    const ModelConfig c;
    CHECK(Encoder::build(c, 7).checksum() == Encoder::build(c, 7).checksum());
    CHECK(Encoder::build(c, 7).checksum() != Encoder::build(c, 8).checksum());
}

TEST_CASE("small model weights are finite and bounded") {
    ModelConfig c;
    c.channels = 64;
    c.layers = 2;
    c.heads = 4;
    const Encoder e = Encoder::build(c, 0);
    double worst = e.patch_embedding().cwiseAbs().maxCoeff();
    for (const LayerWeights& w : e.layers()) {
        for (const Matrix* m : {&w.temporal.wq, &w.temporal.wk, &w.spatial.wv, &w.spatial.wo, &w.mlp_in, &w.mlp_out}) {
            CHECK(m->allFinite());
            worst = std::max(worst, m->cwiseAbs().maxCoeff());
        }
    }
    CHECK(worst < 10.0);
}

TEST_CASE("invalid config is rejected at build time") {
    ModelConfig c;
    c.channels = 64;
    c.heads = 5;
    CHECK_THROWS_WITH_AS(Encoder::build(c, 0), "C not divisible by heads", ConfigError);
}

TEST_CASE("tokenization dims") {
    const Encoder e = Encoder::build(ModelConfig{}, 1);
    const TokenGrid g = e.tokenize(Video(16, 224, 224));
    CHECK(g.n_t == 16);
    CHECK(g.n_s == 196);
    CHECK(g.cls.has_value());

    ModelConfig c = small_config();
    c.frames = 8;
    c.height = 32;
    c.width = 32;
    c.tubelet = 2;
    const TokenGrid h = Encoder::build(c, 1).tokenize(Video(8, 32, 32));
    CHECK(h.n_t == 4);
    CHECK(h.n_s == 4);
    CHECK_THROWS_AS(Encoder::build(c, 1).tokenize(Video(8, 48, 32)), Error);
}

TEST_CASE("all-zero video tokenizes to the position codes") {
    const ModelConfig c = small_config();
    const Encoder e = Encoder::build(c, 3);
    const TokenGrid g = e.tokenize(Video(c.frames, c.height, c.width));
    for (int t = 0; t < g.n_t; ++t) {
        for (int s = 0; s < g.n_s; ++s) CHECK(g.token(t, s) == e.position_code(t, s));
    }
}

TEST_CASE("cls is optional") {
    ModelConfig c = small_config();
    c.cls_enabled = false;
    const Encoder e = Encoder::build(c, 3);
    const ForwardResult r = e.forward(e.tokenize(random_video(c, 1)), MergeSchedule::none(c.layers));
    CHECK_FALSE(r.output.cls.has_value());
    CHECK(r.output.all_finite());
}

TEST_CASE("no-op schedule keeps dims and identity provenance; attention rows are stochastic") {
    const ModelConfig c = small_config();
    const Encoder e = Encoder::build(c, 4);
    const TokenGrid in = e.tokenize(random_video(c, 2));
    const ForwardResult r = e.forward(in, MergeSchedule::none(c.layers));
    CHECK(r.output.n_t == in.n_t);
    CHECK(r.output.n_s == in.n_s);
    CHECK(r.provenance.is_identity());
    CHECK(r.output.all_finite());
    REQUIRE(r.artifacts.size() == static_cast<std::size_t>(c.layers));
    for (const AttentionArtifacts& a : r.artifacts) {
        CHECK(a.temporal_keys.size() == static_cast<std::size_t>(in.n_s));
        CHECK(a.spatial_keys.size() == static_cast<std::size_t>(in.n_t));
        CHECK(a.spatial_keys.front().rows() == in.n_s);
        CHECK(a.temporal_keys.front().cols() == c.head_dim());
        for (const Matrix& att : a.temporal_attention) {
            CHECK((att.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
            CHECK(att.minCoeff() >= 0.0);
        }
    }
}

TEST_CASE("forward is deterministic, independent of worker count") {
    const ModelConfig c = small_config();
    const Encoder e = Encoder::build(c, 5);
    const TokenGrid in = e.tokenize(random_video(c, 3));
    const MergeSchedule s = MergeSchedule::from_blocks(c.layers, {1, 2}, 1, {3, 4}, 2, 2);
    const ForwardResult a = e.forward(in, s, stim_hooks());
    setenv("STIM_NUM_THREADS", "3", 1);
    const ForwardResult b = e.forward(in, s, stim_hooks());
    unsetenv("STIM_NUM_THREADS");
    CHECK(a.output.data == b.output.data);
    CHECK(a.provenance == b.provenance);
}

TEST_CASE("single-frame temporal attention is the identity on values") {
    ModelConfig c = small_config();
    c.frames = 1;
    const Encoder e = Encoder::build(c, 6);
    const TokenGrid in = e.tokenize(random_video(c, 4));
    const ForwardResult r = e.forward(in, MergeSchedule::none(c.layers));
    for (const AttentionArtifacts& a : r.artifacts) {
        for (const Matrix& att : a.temporal_attention) CHECK(std::abs(att(0, 0) - 1.0) < 1e-9);
    }
}

TEST_CASE("dimension bookkeeping follows the schedule layer by layer") {
    ModelConfig c = small_config();
    c.frames = 8;
    c.layers = 5;
    const Encoder e = Encoder::build(c, 7);
    const TokenGrid in = e.tokenize(random_video(c, 5));
    const MergeSchedule s = MergeSchedule::from_blocks(c.layers, {1, 4}, 1, {2, 5}, 1, 2);
    const ForwardResult r = e.forward(in, s, stim_hooks());
    for (int l = 1; l <= c.layers; ++l) CHECK(r.layer_dims[static_cast<std::size_t>(l - 1)] == s.dims_after(l, 8, 9));
    CHECK(r.output.n_t == 4);
    CHECK(r.output.n_s == 5);
    CHECK_NOTHROW(r.provenance.validate_partition());
}

TEST_CASE("temporal 16 -> 5 and spatial 196 -> 52 through the forward pass") {
    ModelConfig c;
    c.channels = 16;
    c.heads = 2;
    const Encoder e = Encoder::build(c, 8);
    const TokenGrid in = e.tokenize(Video(16, 224, 224));
    const ForwardResult t = e.forward(in, MergeSchedule::from_blocks(12, {1, 11}, 1, {1, 0}, 0), stim_hooks());
    CHECK(t.output.n_t == 5);
    CHECK(t.output.n_s == 196);
    const ForwardResult s = e.forward(in, MergeSchedule::from_blocks(12, {1, 0}, 0, {1, 12}, 12, 2), stim_hooks());
    CHECK(s.output.n_t == 16);
    CHECK(s.output.n_s == 52);
}

TEST_CASE("forward errors: missing hook, bad hook, layer mismatch") {
    const ModelConfig c = small_config();
    const Encoder e = Encoder::build(c, 9);
    const TokenGrid in = e.tokenize(random_video(c, 6));
    const MergeSchedule s = MergeSchedule::from_blocks(c.layers, {1, 1}, 1, {1, 0}, 0);
    CHECK_THROWS_WITH_AS(e.forward(in, s), doctest::Contains("no temporal hook"), Error);
    MergeHooks bad;
    bad.temporal = [](const TokenGrid& g, const ProvenanceMap& p, const AttentionArtifacts&, const MergeContext&) {
        return MergeOutcome{g, p};
    };
    CHECK_THROWS_WITH_AS(e.forward(in, s, bad), "merge contract violation", Error);
    CHECK_THROWS_AS(e.forward(in, MergeSchedule::none(c.layers + 1)), ConfigError);
}

TEST_CASE("proportional attention changes merged runs but not unmerged ones") {
    const ModelConfig c = small_config();
    EncoderOptions prop;
    prop.proportional_attention = true;
    const Encoder plain = Encoder::build(c, 10);
    const Encoder scaled = Encoder::build(c, 10, prop);
    const TokenGrid in = plain.tokenize(random_video(c, 7));
    CHECK(plain.forward(in, MergeSchedule::none(c.layers)).output.data ==
          scaled.forward(in, MergeSchedule::none(c.layers)).output.data);
    const MergeSchedule s = MergeSchedule::from_blocks(c.layers, {1, 2}, 1, {2, 3}, 2, 2);
    CHECK(plain.forward(in, s, stim_hooks()).output.data != scaled.forward(in, s, stim_hooks()).output.data);
}

TEST_CASE("weights export and import round trip") {
    const ModelConfig c = small_config();
    const auto dir = std::filesystem::temp_directory_path() / "stim_weights_test";
    std::filesystem::remove_all(dir);
    const Encoder a = Encoder::build(c, 11);
    a.export_weights(dir / "a");
    Encoder b = Encoder::build(c, 99);
    b.import_weights(dir / "a");
    b.export_weights(dir / "b");
    for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
        CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
    }
    Encoder other = Encoder::build(c, 12);
    other.import_weights(dir / "a");
    CHECK(other.checksum() == b.checksum());

    ModelConfig wide = c;
    wide.channels = 64;
    Encoder mismatch = Encoder::build(wide, 1);
    CHECK_THROWS_AS(mismatch.import_weights(dir / "a"), Error);
    std::filesystem::remove_all(dir);
}
