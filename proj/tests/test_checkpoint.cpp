#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>

#include "comhom/checkpoint.hpp"
#include "comhom/error.hpp"
#include "comhom/rng.hpp"
#include "doctest.h"

using namespace comhom;
using nn::CheckpointMeta;
using nn::ParameterSet;
using nn::Tensor;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    const fs::path p = fs::temp_directory_path() / (std::string("comhom_ckpt_") + tag);
    fs::remove_all(p);
    return p;
}

ParameterSet sample_params() {
    ParameterSet params;
    RngStream rng(99, "ckpt");
    Tensor w({4, 3});
    for (float& v : w.values) v = static_cast<float>(rng.normal());
    Tensor b({4});
    for (float& v : b.values) v = static_cast<float>(rng.normal());
    params.add("enc.fc.w", std::move(w));
    params.add("enc.fc.b", std::move(b));
    params.add("op.scalarish", Tensor({1}, {0.125f}));
    return params;
}

}  // namespace

TEST_CASE("save and load round-trip bit-identically") {
    const fs::path dir = temp_dir("roundtrip");
    const ParameterSet params = sample_params();
    CheckpointMeta meta;
    meta.set("operator", "mlp");
    meta.set("note", "two words here");
    nn::save_checkpoint(dir.string(), params, meta);

    const auto loaded = nn::load_checkpoint(dir.string());
    CHECK(loaded.meta.require("operator") == "mlp");
    CHECK(loaded.meta.require("note") == "two words here");
    CHECK(loaded.params.size() == params.size());
    for (const auto& [name, entry] : params) {
        const Tensor& got = loaded.params.value(name);
        REQUIRE(got.shape == entry.value.shape);
        CHECK(std::memcmp(got.data(), entry.value.data(), got.numel() * sizeof(float)) == 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("truncated blob fails naming the file") {
    const fs::path dir = temp_dir("truncated");
    nn::save_checkpoint(dir.string(), sample_params(), {});
    fs::resize_file(dir / "enc.fc.w.bin", 5);
    try {
        nn::load_checkpoint(dir.string());
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("enc.fc.w.bin") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("missing blob fails naming the file") {
    const fs::path dir = temp_dir("missing");
    nn::save_checkpoint(dir.string(), sample_params(), {});
    fs::remove(dir / "op.scalarish.bin");
    try {
        nn::load_checkpoint(dir.string());
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("op.scalarish.bin") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("corrupt manifest header is rejected") {
    const fs::path dir = temp_dir("header");
    nn::save_checkpoint(dir.string(), sample_params(), {});
    std::ofstream(dir / "manifest.txt") << "not a checkpoint\n";
    CHECK_THROWS_AS(nn::load_checkpoint(dir.string()), LoadError);
    fs::remove_all(dir);
}

TEST_CASE("missing metadata key is reported by name") {
    CheckpointMeta meta;
    meta.set("present", "1");
    CHECK(meta.find("absent") == nullptr);
    try {
        meta.require("absent");
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("absent") != std::string::npos);
    }
}
