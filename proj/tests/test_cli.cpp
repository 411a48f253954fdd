#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "ban/cli.hpp"
#include "ban/image_io.hpp"
#include "toy.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = ban::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::map<std::string, double> parse_report(std::istream& in) {
    std::map<std::string, double> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
    }
    return kv;
}

const fs::path kFixture = fs::path(BAN_SOURCE_DIR) / "tests" / "fixtures" / "eval";

}  // namespace

TEST_CASE("params reports the toy model sizes") {
    const Result r = run({"params", (fs::path(BAN_SOURCE_DIR) / "configs" / "toy.json").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("learnable 325010") != std::string::npos);
    CHECK(r.out.find("frozen 150464") != std::string::npos);
}

TEST_CASE("usage errors exit with status 2") {
    const Result unknown = run({"params", "--frobnicate"});
    CHECK(unknown.code == 2);
    CHECK_FALSE(unknown.err.empty());
    CHECK(run({"eval"}).code == 2);
    CHECK(run({"params", "/nonexistent/config.json"}).code == 2);
    CHECK(run({"--help"}).code == 0);
    CHECK(run({}).code == 2);
}

TEST_CASE("runtime failures exit with status 1") {
    const auto dir = toy::scratch("cli_bad");
    std::ofstream(dir / "c.json") << R"({"encoder": {"depthh": 2}})";
    const Result r = run({"params", (dir / "c.json").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("depthh") != std::string::npos);
}

TEST_CASE("metrics on identical prediction and label folders are perfect") {
    const auto dir = toy::scratch("cli_metrics");
    std::mt19937_64 rng(61);
    for (const char* sub : {"pred", "label"}) fs::create_directories(dir / sub);
    for (int i = 0; i < 3; ++i) {
        ban::metrics::LabelMap m(8, 8);
        for (auto& v : m.values) v = static_cast<int32_t>(rng() % 2);
        ban::io::save_mask(dir / "pred" / (std::to_string(i) + ".png"), m);
        ban::io::save_mask(dir / "label" / (std::to_string(i) + ".png"), m);
    }
    const Result r = run({"metrics", "--pred-dir", (dir / "pred").string(), "--label-dir", (dir / "label").string()});
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    const auto kv = parse_report(in);
    for (const char* key : {"f1_c", "iou_c", "iou_u", "oa", "precision_c", "recall_c"}) CHECK(kv.at(key) == 1.0);
    CHECK(kv.at("images") == 3);
}

TEST_CASE("eval reproduces the golden fixture report") {
    const auto dir = toy::scratch("cli_eval");
    const Result r = run({"eval", (kFixture / "config.json").string(), "--checkpoint",
                          (kFixture / "weights.safetensors").string(), "--split", "val", "--out",
                          (dir / "report.txt").string()});
    REQUIRE(r.code == 0);
    std::ifstream got_in(dir / "report.txt"), want_in(kFixture / "expected_report.txt");
    const auto got = parse_report(got_in), want = parse_report(want_in);
    REQUIRE(want.size() == 9);
    CHECK(got.size() == want.size());
    for (const auto& [key, value] : want) {
        INFO(key);
        REQUIRE(got.count(key));
        CHECK(std::abs(got.at(key) - value) < 1e-9);
    }
}

TEST_CASE("infer writes a mask of the input size") {
    const auto dir = toy::scratch("cli_infer");
    const fs::path val = kFixture / "data" / "val";
    const Result r = run({"infer", (kFixture / "config.json").string(), "--pair", (val / "t1" / "0000.png").string(),
                          (val / "t2" / "0000.png").string(), "--out", (dir / "m.png").string(), "--checkpoint",
                          (kFixture / "weights.safetensors").string(), "--binary255"});
    REQUIRE(r.code == 0);
    const auto mask = ban::io::load_mask(dir / "m.png");
    CHECK(mask.height == 32);
    CHECK(mask.width == 32);
    for (int32_t v : mask.values) CHECK((v == 0 || v == 255));
}
