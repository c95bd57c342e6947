#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpsc/algebra.hpp"
#include "dpsc/tm.hpp"

namespace dpsc {

enum class Kind { Zero, One, Two, H, C, D, VC, VD, VM };

struct AElem {
  Kind kind = Kind::Zero;
  bool bar = false;
  int i = 0, r = 0, s = 0;  // indexed elements only; s unused for M
};

// Element coding and the case tables of A'(T).  Indices:
//   0:0 1:1 2:2 3:H 4:C 5:D 6:~C 7:~D, then 20 per state i:
//   C(i,r,s) D(i,r,s) M(i,r) followed by the barred copies.
class APrime {
 public:
  explicit APrime(TuringMachine tm, bool omit_K = false);

  static constexpr Elem ZERO = 0, ONE = 1, TWO = 2, H = 3, C = 4, D = 5, bC = 6, bD = 7;

  const TuringMachine& machine() const { return tm_; }
  bool omit_K() const { return omit_K_; }
  int size() const { return 8 + 20 * tm_.state_count; }
  int states() const { return tm_.state_count; }

  Elem vC(int i, int r, int s, bool bar = false) const { return 8 + 20 * i + (bar ? 10 : 0) + 2 * r + s; }
  Elem vD(int i, int r, int s, bool bar = false) const { return 8 + 20 * i + (bar ? 10 : 0) + 4 + 2 * r + s; }
  Elem vM(int i, int r, bool bar = false) const { return 8 + 20 * i + (bar ? 10 : 0) + 8 + r; }

  const AElem& decode(Elem e) const { return dec_[e]; }
  std::string label(Elem e) const;
  Elem bar(Elem e) const { return bar_[e]; }  // -1 outside V u W
  bool in_V(Elem e) const { return e >= 8; }
  bool in_VW(Elem e) const { return e >= 4; }
  bool in_V0(Elem e) const { return e >= 8 && dec_[e].i == 0; }
  static bool precedes(Elem x, Elem y) {
    return (x == TWO && (y == TWO || y == H)) || (x == ONE && y == ONE);
  }

  Elem meet(Elem x, Elem y) const { return x == y ? x : ZERO; }
  Elem prod(Elem x, Elem y) const;
  Elem J(Elem x, Elem y, Elem z) const;
  Elem Jp(Elem x, Elem y, Elem z) const;
  Elem K(Elem x, Elem y, Elem z) const;
  Elem S0(Elem u, Elem x, Elem y, Elem z) const;
  Elem S1(Elem u, Elem x, Elem y, Elem z) const;
  Elem S2(Elem u, Elem v, Elem x, Elem y, Elem z) const;
  Elem T(Elem w, Elem x, Elem y, Elem z) const;
  Elem I(Elem x) const;

  // Machine operations.  F is identified by (instruction index, t).
  struct MachineOp {
    bool left = true;  // L or R, fixed by the instruction's direction
    int instr = 0;
    int t = 0;
    std::string name() const;
  };
  const std::vector<MachineOp>& machine_ops() const { return mops_; }
  Elem F(const MachineOp& f, Elem x, Elem y, Elem u) const;
  Elem U1(const MachineOp& f, Elem x, Elem y, Elem z, Elem u) const;
  Elem U0(const MachineOp& f, Elem x, Elem y, Elem z, Elem u) const;

  // Configuration element of A'(T)^window for a machine configuration.
  std::vector<Elem> encode(const Configuration& q, const Interval& window) const;

 private:
  Elem F_plain(const MachineOp& f, Elem x, Elem y, Elem u) const;
  TuringMachine tm_;
  bool omit_K_;
  std::vector<AElem> dec_;
  std::vector<Elem> bar_;
  std::vector<MachineOp> mops_;
};

// "L(i,r,t)" / "R(i,r,t)" for the operation's instruction and t.
std::string machine_op_label(const APrime& A, const APrime::MachineOp& f);

std::vector<std::pair<std::string, int>> aprime_signature(const TuringMachine& tm, bool omit_K = false);

std::shared_ptr<FiniteAlgebra> build_aprime(const TuringMachine& tm, bool omit_K = false);
std::shared_ptr<const APrime> aprime_of(const FiniteAlgebra& alg);  // null if not A'(T)

struct AbsorptionEntry {
  std::string op;
  int arity = 0;
  std::vector<bool> absorbing;  // per coordinate
  std::string method;
};
std::vector<AbsorptionEntry> classify_zero_absorbing(const FiniteAlgebra& alg);
// Coordinates (0-based) that are not 0-absorbing according to the theory.
std::vector<int> expected_non_absorbing(const std::string& op);

struct MeetCommuteReport {
  std::string op;
  bool commutes = true;
  std::string method;
  std::uint64_t checked = 0;
  std::vector<Elem> a, b;  // counterexample
};
MeetCommuteReport check_meet_commuting(const FiniteAlgebra& alg, int op,
                                       std::uint64_t samples = 2'000'000, std::uint64_t seed = 0);

}  // namespace dpsc
