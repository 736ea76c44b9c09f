#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "bccn/rng.hpp"
#include "bccn/serialize.hpp"
#include "bccn/tensor.hpp"

using namespace bccn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("bccn_serialize_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("tensor files round-trip bit-exactly") {
    const fs::path dir = temp_dir("roundtrip");
    Rng rng(99);

    // Values chosen to stress the byte path: subnormals, huge magnitudes,
    // negative zero, and plain randoms.
    std::vector<double> data = {0.0,
                                -0.0,
                                1.0,
                                -1.0 / 3.0,
                                std::numeric_limits<double>::denorm_min(),
                                std::numeric_limits<double>::min(),
                                std::numeric_limits<double>::max(),
                                -1e308,
                                6.02214076e23,
                                1.0 + std::numeric_limits<double>::epsilon(),
                                rng.uniform(-5, 5),
                                rng.uniform(-5, 5)};
    Tensor t = Tensor::from_data({3, 4}, data);
    write_tensor(dir / "t.tensor", "layer.weight", t);

    auto [name, back] = read_tensor(dir / "t.tensor");
    CHECK(name == "layer.weight");
    CHECK(back.shape() == std::vector<std::size_t>{3, 4});
    REQUIRE(back.numel() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint64_t a, b;
        std::memcpy(&a, &data[i], sizeof a);
        std::memcpy(&b, &back.data()[i], sizeof b);
        CHECK(a == b);
    }
    CHECK_FALSE(back.requires_grad());
    auto [_, grad_back] = read_tensor(dir / "t.tensor", /*requires_grad=*/true);
    CHECK(grad_back.requires_grad());
}

TEST_CASE("write_tensor rejects malformed parameter names") {
    const fs::path dir = temp_dir("badname");
    Tensor t = Tensor::scalar(1.0);
    CHECK_THROWS_AS(write_tensor(dir / "x.tensor", "", t), FormatError);
    CHECK_THROWS_AS(write_tensor(dir / "x.tensor", "has space", t), FormatError);
    CHECK_THROWS_AS(write_tensor(dir / "x.tensor", "sla/sh", t), FormatError);
    CHECK_NOTHROW(write_tensor(dir / "x.tensor", "ok.name_0-v2", t));
}

TEST_CASE("read_tensor detects truncation and header damage") {
    const fs::path dir = temp_dir("truncated");
    Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    write_tensor(dir / "t.tensor", "w", t);

    SECTION("payload cut short") {
        auto bytes = slurp(dir / "t.tensor");
        bytes.resize(bytes.size() - 8);
        std::ofstream out(dir / "cut.tensor", std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(read_tensor(dir / "cut.tensor"), FormatError);
    }
    SECTION("header is not JSON") {
        std::ofstream out(dir / "junk.tensor", std::ios::binary | std::ios::trunc);
        out << "not json\n";
        out.close();
        CHECK_THROWS_AS(read_tensor(dir / "junk.tensor"), FormatError);
    }
    SECTION("header lacks shape") {
        std::ofstream out(dir / "noshape.tensor", std::ios::binary | std::ios::trunc);
        out << "{\"name\": \"w\"}\n";
        out.close();
        CHECK_THROWS_AS(read_tensor(dir / "noshape.tensor"), FormatError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(read_tensor(dir / "absent.tensor"), FormatError);
    }
}

TEST_CASE("checkpoints round-trip config, step, and parameters") {
    const fs::path dir = temp_dir("checkpoint");
    Rng rng(7);

    Checkpoint ck;
    ck.config["variant"] = "bccn_full";
    ck.config["lr"] = 0.01;
    ck.config["nested"] = {{"epochs", 30}};
    ck.step = 1234;
    ck.params.push_back({"a.w", Tensor::uniform({4, 3}, 1.0, rng)});
    ck.params.push_back({"a.b", Tensor::from_data({3}, {0.5, -0.5, 0.0})});
    ck.params.push_back({"head.w", Tensor::uniform({3, 2, 2}, 0.3, rng)});
    save_checkpoint(dir / "ck", ck);

    Checkpoint back = load_checkpoint(dir / "ck");
    CHECK(back.step == 1234);
    CHECK(back.config["variant"] == "bccn_full");
    CHECK(back.config["lr"] == 0.01);
    CHECK(back.config["nested"]["epochs"] == 30);
    REQUIRE(back.params.size() == 3);
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        CHECK(back.params[i].name == ck.params[i].name);
        CHECK(back.params[i].tensor.shape() == ck.params[i].tensor.shape());
        CHECK(back.params[i].tensor.data() == ck.params[i].tensor.data());
    }
}

TEST_CASE("checkpoint loading cross-checks the manifest against tensor files") {
    const fs::path dir = temp_dir("crosscheck");
    Checkpoint ck;
    ck.params.push_back({"w", Tensor::from_data({2}, {1, 2})});
    save_checkpoint(dir / "ck", ck);

    SECTION("tensor file renamed out from under the manifest") {
        fs::remove(dir / "ck" / "w.tensor");
        CHECK_THROWS_AS(load_checkpoint(dir / "ck"), FormatError);
    }
    SECTION("tensor file holds a different name") {
        write_tensor(dir / "ck" / "w.tensor", "not_w", Tensor::from_data({2}, {1, 2}));
        CHECK_THROWS_AS(load_checkpoint(dir / "ck"), FormatError);
    }
    SECTION("manifest shape disagrees with payload") {
        write_tensor(dir / "ck" / "w.tensor", "w", Tensor::from_data({3}, {1, 2, 3}));
        CHECK_THROWS_AS(load_checkpoint(dir / "ck"), FormatError);
    }
    SECTION("manifest missing entirely") {
        CHECK_THROWS_AS(load_checkpoint(dir / "nothere"), FormatError);
    }
}

TEST_CASE("restore_parameters matches by name and validates shapes") {
    Rng rng(3);
    Tensor w = Tensor::uniform({2, 2}, 1.0, rng, /*requires_grad=*/true);
    Tensor b = Tensor::uniform({2}, 1.0, rng, /*requires_grad=*/true);
    std::vector<NamedParam> live = {{"w", w}, {"b", b}};

    Checkpoint ck;
    ck.params.push_back({"b", Tensor::from_data({2}, {9, 8})});
    ck.params.push_back({"w", Tensor::from_data({2, 2}, {1, 2, 3, 4})});

    SECTION("values land in the right tensors regardless of order") {
        restore_parameters(live, ck);
        CHECK(w.data() == std::vector<double>{1, 2, 3, 4});
        CHECK(b.data() == std::vector<double>{9, 8});
        CHECK(w.requires_grad());
    }
    SECTION("extra checkpoint entries are tolerated") {
        ck.params.push_back({"selector.lstm.w_i", Tensor::from_data({1}, {0.25})});
        restore_parameters(live, ck);
        CHECK(b.data() == std::vector<double>{9, 8});
    }
    SECTION("missing parameter is an error") {
        std::vector<NamedParam> bigger = live;
        bigger.push_back({"extra", Tensor::from_data({1}, {0.0})});
        CHECK_THROWS_AS(restore_parameters(bigger, ck), FormatError);
    }
    SECTION("shape mismatch is an error") {
        ck.params[1].tensor = Tensor::from_data({4}, {1, 2, 3, 4});
        CHECK_THROWS_AS(restore_parameters(live, ck), FormatError);
    }
}
