#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mgrl/errors.hpp"
#include "mgrl/microgrid.hpp"
#include "mgrl/profiles.hpp"
#include "test_util.hpp"

using namespace mgrl;
using doctest::Approx;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "mgrl_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_rows(const std::filesystem::path& path, int rows, int bad_row = -1) {
    std::ofstream out(path);
    out << "slot,pv_1,pv_2,pv_3,cons_1,cons_2,cons_3,consumer\n";
    for (int k = 0; k < rows; ++k) {
        const double c = k == bad_row ? -0.5 : 0.5;
        out << k << ",1.0,2.0,3.0," << c << ",0.6,0.7,3.0\n";
    }
}

ProfileError::Kind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const ProfileError& e) {
        return e.kind();
    }
    FAIL("expected ProfileError");
    return ProfileError::Kind::Io;
}

} // namespace

TEST_CASE("load_csv happy path") {
    const auto path = temp_file("good.csv");
    write_rows(path, 24);
    const auto p = load_csv(path, 3, 24);
    CHECK(p.slots() == 24);
    CHECK(p.num_prosumers() == 3);
    CHECK(p.pv(5, 2) == 3.0);
    CHECK(p.consumption(0, 1) == 0.6);
    CHECK(p.consumer[23] == 3.0);
}

TEST_CASE("load_csv diagnostics are distinct") {
    const auto neg = temp_file("neg.csv");
    write_rows(neg, 24, 7);
    CHECK(kind_of([&] { load_csv(neg, 3, 24); }) == ProfileError::Kind::NegativeValue);
    try {
        load_csv(neg, 3, 24);
    } catch (const ProfileError& e) {
        const std::string what = e.what();
        CHECK(what.find("cons_1") != std::string::npos);
        CHECK(what.find("row 7") != std::string::npos);
    }

    const auto short_file = temp_file("short.csv");
    write_rows(short_file, 23);
    CHECK(kind_of([&] { load_csv(short_file, 3, 24); }) == ProfileError::Kind::LengthMismatch);

    const auto good = temp_file("good4.csv");
    write_rows(good, 24);
    CHECK(kind_of([&] { load_csv(good, 4, 24); }) == ProfileError::Kind::MissingColumn);

    CHECK(kind_of([&] { load_csv(temp_file("absent.csv"), 3, 24); }) == ProfileError::Kind::Io);

    const auto junk = temp_file("junk.csv");
    {
        std::ofstream out(junk);
        out << "slot,pv_1,cons_1,consumer\n0,1.0,abc,2\n";
    }
    CHECK(kind_of([&] { load_csv(junk, 1, 1); }) == ProfileError::Kind::Parse);
}

TEST_CASE("save_csv and load_csv agree") {
    std::vector<ProsumerSpec> specs(3, testing::small_spec());
    SyntheticProfileParams params;
    params.prosumers.resize(3);
    const auto p = synth_profiles(params, specs, 24, 99);
    const auto path = temp_file("roundtrip.csv");
    save_csv(path, p);
    const auto q = load_csv(path, 3, 24);
    CHECK(q.pv == p.pv);
    CHECK(q.consumption == p.consumption);
    CHECK(q.consumer == p.consumer);
}

TEST_CASE("synth_pv half-sine") {
    const auto pv = synth_pv(4.0, 6, 18, 24);
    REQUIRE(pv.size() == 24);
    CHECK(pv[12] == Approx(4.0));
    CHECK(pv[3] == 0.0);
    CHECK(pv[6] == Approx(0.0));
    CHECK(pv[18] == Approx(0.0).epsilon(1e-12));
    CHECK(pv[20] == 0.0);
    CHECK(pv[9] == Approx(pv[15]));
    CHECK(pv.maxCoeff() == Approx(4.0));
    CHECK(synth_pv(0.0, 6, 18, 24).isZero());

    CHECK_THROWS_AS(synth_pv(4.0, 18, 6, 24), ContractViolation);
    CHECK_THROWS_AS(synth_pv(4.0, 6, 25, 24), ContractViolation);
    CHECK_THROWS_AS(synth_pv(4.0, -1, 6, 24), ContractViolation);
}

TEST_CASE("synth_load shape and determinism") {
    const auto a = synth_load(0.5, 1.5, 24, 1234);
    CHECK(a[19] >= 1.8);
    CHECK(a[19] <= 2.2);
    for (int k = 0; k < 24; ++k) {
        const double nominal = 0.5 + ((k >= 17 && k <= 21) ? 1.5 : 0.0);
        CHECK(std::abs(a[k] - nominal) <= 0.05 + 1e-12);
    }
    CHECK(synth_load(0.5, 1.5, 24, 1234) == a);
    CHECK(synth_load(0.5, 1.5, 24, 1235) != a);
    CHECK(synth_load(0.0, 0.0, 24, 5).isZero());
    CHECK_THROWS_AS(synth_load(-1.0, 0.0, 24, 5), ContractViolation);
}

TEST_CASE("synthetic profiles pass the shared validator") {
    std::vector<ProsumerSpec> specs(3, testing::small_spec());
    SyntheticProfileParams params;
    params.prosumers.resize(3);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto p = synth_profiles(params, specs, 24, seed);
        CHECK_NOTHROW(validate_profiles(p, 24, specs));
    }
    CHECK(synth_profiles(params, specs, 24, 3).consumption == synth_profiles(params, specs, 24, 3).consumption);
}

TEST_CASE("validator checks spec bounds") {
    std::vector<ProsumerSpec> specs(1, testing::small_spec());
    auto p = testing::constant_profiles(24, 1, 4.5, 1.0, 1.0);
    CHECK(kind_of([&] { validate_profiles(p, 24, specs); }) == ProfileError::Kind::BoundViolation);
    p = testing::constant_profiles(24, 1, 0.0, 4.5, 1.0);
    CHECK(kind_of([&] { validate_profiles(p, 24, specs); }) == ProfileError::Kind::BoundViolation);
}
