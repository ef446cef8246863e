#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "qdds/pulse.hpp"
#include "qdds/rng.hpp"

namespace qdds {

// 2x2 unitary for a primitive, in the same convention the pulse dynamics
// realize: a positive-amplitude phase-0 pulse of angle theta is
// exp(-i theta sigma_x / 2); a phase-pi/2 pulse is exp(+i theta sigma_y / 2).
Eigen::Matrix2cd primitive_unitary(PrimitiveGate g);

// 1 - |tr(U^dag V)| / 2: zero iff U and V agree up to global phase.
double phase_invariant_distance(const Eigen::Matrix2cd& u,
                                const Eigen::Matrix2cd& v);

// Canonical representative: divide by the phase of the first nonzero entry,
// so that entry becomes real positive. Deterministic element matching.
Eigen::Matrix2cd canonicalize(const Eigen::Matrix2cd& u);

struct CliffordElement {
    int index = 0;
    Eigen::Matrix2cd unitary;                    // canonical form
    std::vector<PrimitiveGate> decomposition;    // applied left to right
};

// The 24-element single-qubit group with a fixed primitive decomposition
// (45 primitives total over the 24 elements, mean 1.875) and a precomputed
// composition table.
class CliffordGroup {
  public:
    static const CliffordGroup& instance();

    static constexpr int kSize = 24;
    static constexpr double kMeanPrimitives = 1.875;  // 45/24 exactly

    const CliffordElement& element(int i) const { return elements_[i]; }
    int identity_index() const { return identity_; }

    // compose(a,b): element equal to applying a first, then b (U_b * U_a).
    int compose(int a, int b) const { return table_[a][b]; }
    int inverse(int a) const { return inverse_[a]; }

    // Index whose representative matches u up to global phase within tol;
    // throws std::invalid_argument if nothing matches.
    int find(const Eigen::Matrix2cd& u, double tol = 1e-9) const;

    const std::vector<PrimitiveGate>& decomposition(int i) const {
        return elements_[i].decomposition;
    }
    int total_primitive_count() const;

    nlohmann::json decomposition_table_json() const;

  private:
    CliffordGroup();
    std::array<CliffordElement, kSize> elements_;
    std::array<std::array<std::uint8_t, kSize>, kSize> table_{};
    std::array<std::uint8_t, kSize> inverse_{};
    int identity_ = 0;
};

struct RbSequence {
    std::uint64_t seed = 0;
    int m = 0;                                 // random Cliffords, >= 1
    std::vector<std::uint8_t> indices;         // the m random elements
    std::uint8_t recovery = 0;                 // closes product to identity

    nlohmann::json to_json() const;
    static RbSequence from_json(const nlohmann::json& j);
};

// m uniform draws from the group via the sequence's own substream; the
// recovery is the group inverse of the running product. Same (m, seed)
// always yields the same sequence.
RbSequence generate_sequence(int m, std::uint64_t seed);

// Primitive program for a sequence including the recovery gate.
std::vector<PrimitiveGate> sequence_primitives(const RbSequence& seq);

}  // namespace qdds
