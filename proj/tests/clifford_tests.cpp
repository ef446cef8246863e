#include <array>
#include <cstdint>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "qdds/clifford.hpp"

using namespace qdds;
using Eigen::Matrix2cd;

TEST_SUITE("clifford") {

TEST_CASE("the group holds 24 pairwise-distinct elements") {
    const auto& g = CliffordGroup::instance();
    for (int a = 0; a < CliffordGroup::kSize; ++a) {
        for (int b = a + 1; b < CliffordGroup::kSize; ++b) {
            CHECK(phase_invariant_distance(g.element(a).unitary,
                                           g.element(b).unitary) > 1e-3);
        }
    }
}

TEST_CASE("composition table is a Latin square") {
    const auto& g = CliffordGroup::instance();
    for (int a = 0; a < CliffordGroup::kSize; ++a) {
        std::array<bool, CliffordGroup::kSize> row{}, col{};
        for (int b = 0; b < CliffordGroup::kSize; ++b) {
            row[g.compose(a, b)] = true;
            col[g.compose(b, a)] = true;
        }
        for (int i = 0; i < CliffordGroup::kSize; ++i) {
            CHECK(row[i]);
            CHECK(col[i]);
        }
    }
}

TEST_CASE("composition matches the unitary product") {
    const auto& g = CliffordGroup::instance();
    for (int a = 0; a < CliffordGroup::kSize; ++a) {
        for (int b = 0; b < CliffordGroup::kSize; ++b) {
            const Matrix2cd prod =
                g.element(b).unitary * g.element(a).unitary;
            CHECK(g.find(prod) == g.compose(a, b));
        }
    }
}

TEST_CASE("inverses close to the identity") {
    const auto& g = CliffordGroup::instance();
    const int id = g.identity_index();
    CHECK(phase_invariant_distance(g.element(id).unitary,
                                   Matrix2cd::Identity()) < 1e-12);
    for (int a = 0; a < CliffordGroup::kSize; ++a) {
        CHECK(g.compose(a, g.inverse(a)) == id);
        CHECK(g.compose(g.inverse(a), a) == id);
    }
}

TEST_CASE("decomposition averages exactly 1.875 primitives") {
    const auto& g = CliffordGroup::instance();
    int total = 0;
    for (int a = 0; a < CliffordGroup::kSize; ++a) {
        CHECK(!g.decomposition(a).empty());
        total += int(g.decomposition(a).size());
    }
    CHECK(total == 45);
    CHECK(g.total_primitive_count() == 45);
    CHECK(CliffordGroup::kMeanPrimitives == 1.875);
}

TEST_CASE("every decomposition reproduces its element") {
    const auto& g = CliffordGroup::instance();
    for (int a = 0; a < CliffordGroup::kSize; ++a) {
        Matrix2cd u = Matrix2cd::Identity();
        for (PrimitiveGate p : g.decomposition(a)) {
            u = primitive_unitary(p) * u;
        }
        CHECK(phase_invariant_distance(u, g.element(a).unitary) < 1e-12);
    }
}

TEST_CASE("recovery closes 10000 random sequences to the identity") {
    const auto& g = CliffordGroup::instance();
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const int m = 1 + int(s % 40);
        const RbSequence seq = generate_sequence(m, s);
        REQUIRE(int(seq.indices.size()) == m);
        Matrix2cd u = Matrix2cd::Identity();
        for (std::uint8_t idx : seq.indices) {
            u = g.element(idx).unitary * u;
        }
        u = g.element(seq.recovery).unitary * u;
        CHECK(phase_invariant_distance(u, Matrix2cd::Identity()) <= 1e-12);
    }
}

TEST_CASE("sequences are deterministic in (m, seed)") {
    const RbSequence a = generate_sequence(50, 1234);
    const RbSequence b = generate_sequence(50, 1234);
    const RbSequence c = generate_sequence(50, 1235);
    CHECK(a.indices == b.indices);
    CHECK(a.recovery == b.recovery);
    CHECK(a.indices != c.indices);
}

TEST_CASE("sequence primitives append the recovery decomposition") {
    const auto& g = CliffordGroup::instance();
    const RbSequence seq = generate_sequence(7, 42);
    const auto prog = sequence_primitives(seq);
    std::size_t expect = g.decomposition(seq.recovery).size();
    for (std::uint8_t idx : seq.indices) {
        expect += g.decomposition(idx).size();
    }
    CHECK(prog.size() == expect);
}

TEST_CASE("sequence json round-trips") {
    const RbSequence seq = generate_sequence(12, 99);
    const RbSequence back = RbSequence::from_json(seq.to_json());
    CHECK(back.seed == seq.seed);
    CHECK(back.m == seq.m);
    CHECK(back.indices == seq.indices);
    CHECK(back.recovery == seq.recovery);
}

TEST_CASE("primitive unitaries follow the drive convention") {
    // phase-0 pulses rotate about +x; phase-pi/2 pulses about -y
    Matrix2cd xh = primitive_unitary(PrimitiveGate::XHalf);
    const double r = 1.0 / std::sqrt(2.0);
    Matrix2cd expect;
    expect << r, std::complex<double>(0, -r), std::complex<double>(0, -r), r;
    CHECK((xh - expect).cwiseAbs().maxCoeff() < 1e-15);

    Matrix2cd yh = primitive_unitary(PrimitiveGate::YHalf);
    expect << r, r, -r, r;
    CHECK((yh - expect).cwiseAbs().maxCoeff() < 1e-15);

    CHECK(phase_invariant_distance(
              primitive_unitary(PrimitiveGate::Identity),
              Matrix2cd::Identity()) < 1e-15);
}

TEST_CASE("find rejects a matrix outside the group") {
    const auto& g = CliffordGroup::instance();
    Matrix2cd u;
    u << std::cos(0.3), std::complex<double>(0, -std::sin(0.3)),
        std::complex<double>(0, -std::sin(0.3)), std::cos(0.3);
    CHECK_THROWS_AS(g.find(u), std::invalid_argument);
}

}  // TEST_SUITE
