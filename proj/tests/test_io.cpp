#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "salmon/errors.hpp"
#include "salmon/io.hpp"
#include "salmon/simulator.hpp"

using namespace salmon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("salmon_test_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("shortest number text round-trips exactly") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> e(-300.0, 300.0), m(1.0, 10.0);
    for (int k = 0; k < 10000; ++k) {
        const double x = (k % 2 ? -1.0 : 1.0) * m(rng) * std::pow(10.0, e(rng));
        CHECK(io::parse_double(io::format_double(x), "x") == x);
    }
    CHECK(io::format_double(0.1) == "0.1");
    CHECK(io::format_double(1e-4) == "1e-04");
    CHECK(io::format_double(250.0) == "250");
    CHECK(io::parse_long("42", "n") == 42);
    CHECK_THROWS_AS(io::parse_double("abc", "x"), ValidationError);
    CHECK_THROWS_AS(io::parse_double("1.5x", "x"), ValidationError);
    CHECK_THROWS_AS(io::parse_long("1.5", "n"), ValidationError);
}

TEST_CASE("sha256 known vectors") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto dir = scratch("sha");
    io::write_text(dir / "f.txt", "abc");
    CHECK(io::sha256_file(dir / "f.txt") == io::sha256_hex("abc"));
    CHECK_THROWS_AS(io::sha256_file(dir / "missing.txt"), IoError);
}

TEST_CASE("csv tables") {
    const auto dir = scratch("csv");
    const io::CsvTable t{{"a", "b"}, {{"1", "x"}, {"2", "y"}}};
    io::write_csv(dir / "t.csv", t);
    CHECK(io::read_text(dir / "t.csv") == "a,b\n1,x\n2,y\n");
    const auto back = io::read_csv(dir / "t.csv");
    CHECK(back.header == t.header);
    CHECK(back.rows == t.rows);
    CHECK(back.column("b") == 1);
    CHECK_THROWS_AS(back.column("c"), ValidationError);
    io::write_text(dir / "ragged.csv", "a,b\n1\n");
    CHECK_THROWS_AS(io::read_csv(dir / "ragged.csv"), ValidationError);
    CHECK_THROWS_AS(io::read_csv(dir / "absent.csv"), IoError);
}

TEST_CASE("dataset bundle round-trips through the data files") {
    const auto res = sim::simulate(sim::make_demo("small"));
    const io::DataBundle b{res.data, res.rivers, res.traps, res.sites, res.m74, res.expert, res.external};
    const auto dir = scratch("bundle");
    io::write_bundle(dir / "a", b);
    const auto back = io::read_bundle(dir / "a");
    io::write_bundle(dir / "b", back);
    for (const auto& name : io::data_file_names())
        if (fs::exists(dir / "a" / name)) CHECK(io::read_text(dir / "a" / name) == io::read_text(dir / "b" / name));

    REQUIRE(back.data.catches.size() == b.data.catches.size());
    for (std::size_t k = 0; k < b.data.catches.size(); ++k) {
        CHECK(back.data.catches[k].effort == b.data.catches[k].effort);
        CHECK(back.data.catches[k].catch_obs == b.data.catches[k].catch_obs);
    }
    CHECK(back.data.tags.size() == b.data.tags.size());
    CHECK(back.data.spawners.size() == b.data.spawners.size());
    CHECK(back.traps.size() == b.traps.size());
    CHECK(back.sites.size() == b.sites.size());
    CHECK(back.m74.size() == b.m74.size());
    REQUIRE(back.expert.size() == b.expert.size());
    for (std::size_t k = 0; k < b.expert.size(); ++k) CHECK(back.expert[k].stock == b.expert[k].stock);
    CHECK(back.external.size() == b.external.size());
    CHECK(back.data.smolts.empty());
}

TEST_CASE("missing catch cells and missing files") {
    auto res = sim::simulate(sim::make_demo("small"));
    res.data.catches[3].catch_obs.reset();
    io::DataBundle b;
    b.data.catches = res.data.catches;
    const auto dir = scratch("missing");
    io::write_bundle(dir, b);
    CHECK(io::read_text(dir / "catch_effort.csv").find(",NA\n") != std::string::npos);
    const auto back = io::read_bundle(dir);
    CHECK_FALSE(back.data.catches[3].catch_obs.has_value());
    CHECK(back.data.tags.empty());
    CHECK(back.traps.empty());
    CHECK(back.expert.empty());

    io::write_text(dir / "catch_effort.csv", "fishery,year,effort\noffshore,2000,10\n");
    CHECK_THROWS_AS(io::read_bundle(dir), ValidationError);
    io::write_text(dir / "catch_effort.csv", "fishery,year,effort,catch\noffshore,2000,ten,1\n");
    CHECK_THROWS_AS(io::read_bundle(dir), ValidationError);
}

TEST_CASE("atomic text writes leave no temporary files") {
    const auto dir = scratch("atomic");
    io::write_text(dir / "nested" / "x.json", "{}\n");
    io::write_text(dir / "nested" / "x.json", "[]\n");
    CHECK(io::read_text(dir / "nested" / "x.json") == "[]\n");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "nested")) ++files;
    CHECK(files == 1);
}
