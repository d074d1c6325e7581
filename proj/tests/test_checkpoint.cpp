#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>

#include "json.hpp"

#include "illmtsc/checkpoint.hpp"

using namespace illmtsc;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/illmtsc_ckpt_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

NetworkWeights sample_weights() {
    NetworkWeights w = NetworkWeights::init(42);
    // awkward values that expose any lossy serialization
    w.policy.params()[0] = 0.1;
    w.policy.params()[1] = -1.0 / 3.0;
    w.policy.params()[2] = 1e-300;
    w.policy.params()[3] = 4.9406564584124654e-324;  // smallest subnormal
    w.value.params()[0] = 1e308;
    w.policy_m[5] = 1.2345678901234567e-8;
    w.value_v[3] = 0.30000000000000004;
    w.adam_step = 77;
    w.cfg.learning_rate = 3e-4;
    w.cfg.seed = 9;
    return w;
}

}  // namespace

TEST_CASE("save then load reproduces every bit") {
    TempFile f("roundtrip.json");
    const NetworkWeights w = sample_weights();
    save_checkpoint(w, f.path);
    const NetworkWeights r = load_checkpoint(f.path);
    CHECK(r.policy.params() == w.policy.params());
    CHECK(r.value.params() == w.value.params());
    CHECK(r.policy_m == w.policy_m);
    CHECK(r.policy_v == w.policy_v);
    CHECK(r.value_m == w.value_m);
    CHECK(r.value_v == w.value_v);
    CHECK(r.adam_step == 77);
    CHECK(r.cfg.learning_rate == 3e-4);
    CHECK(r.cfg.seed == 9);
}

TEST_CASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("/tmp/illmtsc_ckpt_does_not_exist.json"), CheckpointFormatError);
}

TEST_CASE("truncated file") {
    TempFile f("truncated.json");
    save_checkpoint(sample_weights(), f.path);
    std::ifstream in(f.path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(f.path, std::ios::trunc);
    out << content.substr(0, content.size() / 2);
    out.close();
    CHECK_THROWS_AS(load_checkpoint(f.path), CheckpointFormatError);
}

TEST_CASE("wrong version names expected and found") {
    TempFile f("version.json");
    save_checkpoint(sample_weights(), f.path);
    std::ifstream in(f.path);
    nlohmann::json doc = nlohmann::json::parse(in);
    in.close();
    doc["format_version"] = 9;
    std::ofstream out(f.path, std::ios::trunc);
    out << doc.dump();
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(f.path), "checkpoint format version 9, expected 1",
                         CheckpointVersionError);
}

TEST_CASE("architecture mismatch") {
    TempFile f("shape.json");
    save_checkpoint(sample_weights(), f.path);
    std::ifstream in(f.path);
    nlohmann::json doc = nlohmann::json::parse(in);
    in.close();
    doc["architecture"]["policy"] = {40, 32, 4};
    std::ofstream out(f.path, std::ios::trunc);
    out << doc.dump();
    out.close();
    CHECK_THROWS_AS(load_checkpoint(f.path), CheckpointShapeError);
}

TEST_CASE("weight array of the wrong length") {
    TempFile f("length.json");
    save_checkpoint(sample_weights(), f.path);
    std::ifstream in(f.path);
    nlohmann::json doc = nlohmann::json::parse(in);
    in.close();
    doc["policy_params"].erase(0);
    std::ofstream out(f.path, std::ios::trunc);
    out << doc.dump();
    out.close();
    CHECK_THROWS_AS(load_checkpoint(f.path), CheckpointShapeError);
}

TEST_CASE("non-finite entry is rejected") {
    TempFile f("nonfinite.json");
    save_checkpoint(sample_weights(), f.path);
    std::ifstream in(f.path);
    nlohmann::json doc = nlohmann::json::parse(in);
    in.close();
    doc["policy_params"][0] = "inf";
    std::ofstream out(f.path, std::ios::trunc);
    out << doc.dump();
    out.close();
    CHECK_THROWS_AS(load_checkpoint(f.path), CheckpointFormatError);
}
