#include "qdds/clifford.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qdds {

using Eigen::Matrix2cd;
using std::complex;

namespace {
constexpr complex<double> kI{0.0, 1.0};

Matrix2cd rot_x(double theta) {
    // exp(-i theta sigma_x / 2): what a positive-amplitude phase-0 pulse does.
    Matrix2cd u;
    const double c = std::cos(theta / 2), s = std::sin(theta / 2);
    u << c, -kI * s, -kI * s, c;
    return u;
}

Matrix2cd rot_y_drive(double theta) {
    // exp(+i theta sigma_y / 2): what a positive-amplitude phase-pi/2 pulse
    // does under Omega = rabi * (I + iQ). The group is unchanged by the sign.
    Matrix2cd u;
    const double c = std::cos(theta / 2), s = std::sin(theta / 2);
    u << c, s, -s, c;
    return u;
}
}  // namespace

Matrix2cd primitive_unitary(PrimitiveGate g) {
    switch (g) {
        case PrimitiveGate::Identity: return Matrix2cd::Identity();
        case PrimitiveGate::XHalf: return rot_x(M_PI_2);
        case PrimitiveGate::XMinusHalf: return rot_x(-M_PI_2);
        case PrimitiveGate::XPi: return rot_x(M_PI);
        case PrimitiveGate::YHalf: return rot_y_drive(M_PI_2);
        case PrimitiveGate::YMinusHalf: return rot_y_drive(-M_PI_2);
        case PrimitiveGate::YPi: return rot_y_drive(M_PI);
    }
    throw std::invalid_argument("bad primitive");
}

double phase_invariant_distance(const Matrix2cd& u, const Matrix2cd& v) {
    return 1.0 - 0.5 * std::abs((u.adjoint() * v).trace());
}

Matrix2cd canonicalize(const Matrix2cd& u) {
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            if (std::abs(u(r, c)) > 1e-12) {
                return u * (std::conj(u(r, c)) / std::abs(u(r, c)));
            }
        }
    }
    throw std::invalid_argument("zero matrix has no canonical form");
}

CliffordGroup::CliffordGroup() {
    using G = PrimitiveGate;
    // Fixed decomposition: 45 primitives over 24 elements (mean 1.875).
    // Sequences apply left to right.
    const std::vector<std::vector<G>> words = {
        {G::Identity},
        {G::XPi},
        {G::YPi},
        {G::YPi, G::XPi},
        {G::XHalf, G::YHalf},
        {G::XHalf, G::YMinusHalf},
        {G::XMinusHalf, G::YHalf},
        {G::XMinusHalf, G::YMinusHalf},
        {G::YHalf, G::XHalf},
        {G::YHalf, G::XMinusHalf},
        {G::YMinusHalf, G::XHalf},
        {G::YMinusHalf, G::XMinusHalf},
        {G::XHalf},
        {G::XMinusHalf},
        {G::YHalf},
        {G::YMinusHalf},
        {G::XMinusHalf, G::YHalf, G::XHalf},
        {G::XMinusHalf, G::YMinusHalf, G::XHalf},
        {G::XPi, G::YHalf},
        {G::XPi, G::YMinusHalf},
        {G::YPi, G::XHalf},
        {G::YPi, G::XMinusHalf},
        {G::XHalf, G::YHalf, G::XHalf},
        {G::XMinusHalf, G::YHalf, G::XMinusHalf},
    };

    for (int i = 0; i < kSize; ++i) {
        Matrix2cd u = Matrix2cd::Identity();
        for (G g : words[i]) u = primitive_unitary(g) * u;
        elements_[i] = {i, canonicalize(u), words[i]};
    }
    // The table construction itself certifies the set: every pairwise
    // distance must be macroscopic and every product must land in the set.
    for (int a = 0; a < kSize; ++a) {
        for (int b = a + 1; b < kSize; ++b) {
            if (phase_invariant_distance(elements_[a].unitary,
                                         elements_[b].unitary) < 1e-6) {
                throw std::logic_error("clifford table has duplicate elements");
            }
        }
    }
    identity_ = 0;
    for (int a = 0; a < kSize; ++a) {
        for (int b = 0; b < kSize; ++b) {
            const Matrix2cd prod = elements_[b].unitary * elements_[a].unitary;
            table_[a][b] = static_cast<std::uint8_t>(find(prod, 1e-9));
        }
    }
    for (int a = 0; a < kSize; ++a) {
        bool found = false;
        for (int b = 0; b < kSize; ++b) {
            if (table_[a][b] == identity_) {
                inverse_[a] = static_cast<std::uint8_t>(b);
                found = true;
                break;
            }
        }
        if (!found) throw std::logic_error("clifford element with no inverse");
    }
}

const CliffordGroup& CliffordGroup::instance() {
    static const CliffordGroup group;
    return group;
}

int CliffordGroup::find(const Matrix2cd& u, double tol) const {
    int best = -1;
    double best_d = tol;
    for (int i = 0; i < kSize; ++i) {
        const double d = phase_invariant_distance(elements_[i].unitary, u);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    if (best < 0) throw std::invalid_argument("matrix is not a group element");
    return best;
}

int CliffordGroup::total_primitive_count() const {
    int n = 0;
    for (const auto& e : elements_) n += static_cast<int>(e.decomposition.size());
    return n;
}

nlohmann::json CliffordGroup::decomposition_table_json() const {
    nlohmann::json elems = nlohmann::json::array();
    for (const auto& e : elements_) {
        nlohmann::json decomp = nlohmann::json::array();
        for (auto g : e.decomposition) decomp.push_back(to_string(g));
        nlohmann::json u = nlohmann::json::array();
        for (int r = 0; r < 2; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < 2; ++c) {
                row.push_back({e.unitary(r, c).real(), e.unitary(r, c).imag()});
            }
            u.push_back(row);
        }
        elems.push_back({{"index", e.index},
                         {"decomposition", decomp},
                         {"unitary", u}});
    }
    nlohmann::json table = nlohmann::json::array();
    for (int a = 0; a < kSize; ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (int b = 0; b < kSize; ++b) row.push_back(table_[a][b]);
        table.push_back(row);
    }
    nlohmann::json inv = nlohmann::json::array();
    for (int a = 0; a < kSize; ++a) inv.push_back(inverse_[a]);
    return {{"elements", elems},
            {"composition_table", table},
            {"inverse", inv},
            {"total_primitives", total_primitive_count()}};
}

nlohmann::json RbSequence::to_json() const {
    return {{"seed", seed},
            {"m", m},
            {"indices", indices},
            {"recovery", recovery}};
}

RbSequence RbSequence::from_json(const nlohmann::json& j) {
    RbSequence s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.m = j.at("m").get<int>();
    s.indices = j.at("indices").get<std::vector<std::uint8_t>>();
    s.recovery = j.at("recovery").get<std::uint8_t>();
    return s;
}

RbSequence generate_sequence(int m, std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("sequence length must be >= 1");
    const auto& group = CliffordGroup::instance();
    RbSequence s;
    s.seed = seed;
    s.m = m;
    s.indices.resize(m);
    Rng rng(seed);
    int running = group.identity_index();
    for (int k = 0; k < m; ++k) {
        const int c = static_cast<int>(rng.below(CliffordGroup::kSize));
        s.indices[k] = static_cast<std::uint8_t>(c);
        running = group.compose(running, c);
    }
    s.recovery = static_cast<std::uint8_t>(group.inverse(running));
    return s;
}

std::vector<PrimitiveGate> sequence_primitives(const RbSequence& seq) {
    const auto& group = CliffordGroup::instance();
    std::vector<PrimitiveGate> prog;
    for (int idx : seq.indices) {
        const auto& d = group.decomposition(idx);
        prog.insert(prog.end(), d.begin(), d.end());
    }
    const auto& r = group.decomposition(seq.recovery);
    prog.insert(prog.end(), r.begin(), r.end());
    return prog;
}

}  // namespace qdds
