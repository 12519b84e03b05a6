#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "prunekit/container.hpp"
#include "prunekit/io.hpp"

using namespace prunekit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "prunekit_test_container";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Container, RoundTripIsBitIdentical) {
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 10.0f);
    for (const auto& dims : std::vector<std::vector<std::uint32_t>>{{196, 768}, {512}, {2, 3, 4}, {1}}) {
        Tensor t;
        t.dims = dims;
        t.data.resize(t.element_count());
        for (auto& v : t.data) v = n(rng);
        const auto bytes = encode_container(t);
        EXPECT_EQ(bytes.size(), 8 + 4 * dims.size() + 4 * t.data.size() + 4);
        EXPECT_EQ(decode_container(bytes, "mem"), t);
        write_container(scratch("t.tpk"), t);
        EXPECT_EQ(read_container(scratch("t.tpk")), t);
    }
}

TEST(Container, HeaderLayout) {
    Tensor t{{2}, {1.0f, -2.0f}};
    const auto b = encode_container(t);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "TPK1");
    EXPECT_EQ(b[4], 1);  // version, little-endian u16
    EXPECT_EQ(b[5], 0);
    EXPECT_EQ(b[6], 1);  // f32
    EXPECT_EQ(b[7], 1);  // rank
    EXPECT_EQ(b[8], 2);
}

TEST(Container, CorruptionIsDetectedAndNamed) {
    Tensor t{{4}, {1, 2, 3, 4}};
    auto b = encode_container(t);
    b[14] ^= 0x40;
    try {
        decode_container(b, "tokens.tpk");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("tokens.tpk"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("CRC"), std::string::npos);
        EXPECT_EQ(e.code(), ExitCode::data);
    }
    EXPECT_THROW(decode_container({'T', 'P'}, "x"), DataError);
    auto bad_magic = encode_container(t);
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_container(bad_magic, "x"), DataError);
    EXPECT_THROW(encode_container(Tensor{{3}, {1, 2}}), DataError);
    EXPECT_THROW(read_container(scratch("missing.tpk")), DataError);
}

TEST(Container, MatrixConversion) {
    std::mt19937_64 rng(2);
    const Matrix m = oracle::random_matrix(rng, 3, 5).unaryExpr([](double v) { return double(float(v)); });
    EXPECT_EQ(to_matrix(to_tensor(m)), m);
    EXPECT_THROW(to_vector(to_tensor(m)), DataError);
    Tensor nan{{2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}};
    EXPECT_THROW(to_vector(nan), Error);
}

TEST(Manifest, ByteRoundTrip) {
    RunManifest m;
    m.command = "prune";
    m.config = Json{{"rho", 0.3}, {"mc_passes", 5}, {"signals", "text+unc"}};
    m.seeds = Json{{"seed", 0}, {"embed_seed", 7}};
    m.inputs = {"tokens.tpk"};
    m.outputs = {"retained.json", "alpha.tpk"};
    const auto text = emit_manifest(m);
    const auto back = parse_manifest(text);
    EXPECT_EQ(back, m);
    EXPECT_EQ(emit_manifest(back), text);
    EXPECT_THROW(parse_manifest("{"), DataError);
    EXPECT_THROW(parse_manifest("{\"command\": 1}"), DataError);
}

TEST(Pgm, RoundTrip) {
    const auto m = oracle::ring(20, 30, 10, 15, 3, 8);
    write_pgm(scratch("m.pgm"), m);
    EXPECT_EQ(read_pgm(scratch("m.pgm")), m);
    write_text(scratch("bad.pgm"), "P2\n1 1\n255\n0\n");
    EXPECT_THROW(read_pgm(scratch("bad.pgm")), DataError);
}

TEST(RouterFile, ReloadReproducesScores) {
    std::mt19937_64 rng(3);
    const auto w = quantize_f32(RouterWeights::init(12, 8, 5));
    save_router(scratch("router.tpk"), w, Json{{"epochs", 0}});
    const auto back = load_router(scratch("router.tpk"));
    EXPECT_EQ(back, w);
    const FusedTokens h{oracle::random_matrix(rng, 30, 12)};
    EXPECT_EQ(score(h, back), score(h, w));
    EXPECT_THROW(load_router(scratch("nothing.tpk")), DataError);
}
