#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpsc/algebra.hpp"
#include "dpsc/aprime.hpp"
#include "dpsc/tm.hpp"

namespace dpsc {

using Signature = std::vector<std::pair<std::string, int>>;

// states 2, the single instruction (μ1,0,1,R,μ0).
TuringMachine default_machine();

// S_n over {0,a1,b1,...,an,bn} in the given A'(T) signature.
std::shared_ptr<FiniteAlgebra> build_sequential(int n, const Signature& sig);

enum class SmallKind { TwoElt, ThreeElt, W, NotApplicable };
std::string to_string(SmallKind k);

// {0,C}, {0,H,M(1,0)} and <H,C>/Cg(M(1,0),0), built inside A'(tm).
std::shared_ptr<FiniteAlgebra> build_small_si(SmallKind kind, const TuringMachine& tm);

// e_i(n,x) = 0 for every i, n and x.
bool satisfies_e_zero(const FiniteAlgebra& alg);

struct SmallClassification {
  SmallKind kind = SmallKind::NotApplicable;
  std::string reason;
  std::vector<Elem> iso;  // alg element -> catalog element
};
SmallClassification classify_small_si(const FiniteAlgebra& alg, const TuringMachine& tm);

// ---------------------------------------------------------------- P_N

struct MachineSpec {
  TuringMachine tm;
  Interval N{0, 0};
  Interval window{0, 0};
  Configuration P;
  std::optional<std::vector<Configuration>> phi;  // default: reachability closure of P
};
MachineSpec parse_machine_spec(const TuringMachine& tm, std::string_view text);

std::string config_label(const Configuration& q, const Interval& window);

// The restricted configuration space Ω_N with its step graph.
struct OmegaSpace {
  std::vector<Configuration> configs;
  std::map<Configuration, int> index;
  std::vector<int> succ;  // -1 when the step stops or leaves Ω_N
  int find(const Configuration& q) const {
    auto it = index.find(q);
    return it == index.end() ? -1 : it->second;
  }
  bool leq(int p, int q) const;  // p ≤_N q
};
OmegaSpace build_omega(const TuringMachine& tm, const Interval& N, const Interval& window);

struct MachinePN {
  std::shared_ptr<FiniteAlgebra> alg;
  OmegaSpace omega;
  int a_offset = 1;   // a_n has index a_offset + (n - N.lo)
  int q_offset = 0;   // Ω_N configuration k has index q_offset + k
  Interval N{0, 0};
  Elem a(long n) const { return a_offset + static_cast<int>(n - N.lo); }
  Elem q(int k) const { return q_offset + k; }
};
MachinePN build_machine_PN(const MachineSpec& spec);

std::vector<Configuration> default_phi(const MachineSpec& spec, const OmegaSpace& omega);

struct PhiReport {
  bool ok[5] = {true, true, true, true, true};
  std::string detail[5];
  bool p_in_phi = true;
  bool all() const { return p_in_phi && ok[0] && ok[1] && ok[2] && ok[3] && ok[4]; }
};
PhiReport check_phi_conditions(const MachineSpec& spec, const OmegaSpace& omega,
                               const std::vector<Configuration>& phi);

class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ThetaResult {
  MachinePN pn;
  std::vector<Configuration> phi;
  PhiReport report;
  Partition theta;
  Quotient quotient;
  std::optional<Partition> monolith;  // on the quotient
};
// Throws PreconditionError when a Φ condition fails and NotCongruenceError
// when Θ_(Φ) does not respect the operations.
ThetaResult theta_phi_quotient(const MachineSpec& spec);

// ---------------------------------------------------------------- windows

std::vector<Elem> alpha_vector(long n, const Interval& window);
std::vector<Elem> beta_vector(long n, const Interval& window);

struct GammaWindowReport {
  Interval window{0, 0};
  std::shared_ptr<FiniteAlgebra> nowhere_zero;  // generated vectors without a 0 coordinate
  std::size_t sigma = 0;                        // outputs of L, R and I among them
  bool barred_free = true;
  bool k_is_meet = true;
  std::vector<std::pair<long, long>> beta_chain;  // (n, n+1) with α_n·β_{n+1} = β_n
  std::vector<std::string> notes;
};
GammaWindowReport build_gamma_window(const TuringMachine& tm, long W, std::size_t cap = 20000);

struct SimulationReport {
  int steps = 0;
  int matched = 0;
  bool halted = false;
  std::vector<std::string> log;
};
// Drives configuration elements of A'(T)^[-W,W] with machine operations
// applied to α vectors and compares each step with the simulator.
SimulationReport window_simulation(const TuringMachine& tm, long W, int steps, long start);

}  // namespace dpsc
