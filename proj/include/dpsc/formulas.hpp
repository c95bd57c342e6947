#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpsc/algebra.hpp"
#include "dpsc/catalog.hpp"

namespace dpsc {

// ---------------------------------------------------------------- AST

struct Term {
  enum class Kind { Var, Const, App };
  Kind kind = Kind::Var;
  int var = -1;
  Elem value = 0;
  int op = -1;
  std::vector<Term> args;

  static Term v(int slot) { return Term{Kind::Var, slot, 0, -1, {}}; }
  static Term c(Elem e) { return Term{Kind::Const, -1, e, -1, {}}; }
  static Term app(int op, std::vector<Term> args) { return Term{Kind::App, -1, 0, op, std::move(args)}; }
};

// A unary polynomial shape t(ȳ, x): each step applies one of the listed
// (operation, position of x) alternatives with fresh existential constants
// in the other positions.  An empty step list is the identity.
struct TermScheme {
  std::string name;
  std::vector<std::vector<std::pair<std::string, int>>> steps;
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  enum class Kind { True, False, Eq, And, Or, Not, Exists, Forall, Call, InCg, Image, Chain };
  Kind kind = Kind::True;
  std::vector<Term> terms;       // Eq: 2; Call: args; InCg: u v y z; Image: y z; Chain: w x y z
  std::vector<FormulaPtr> subs;  // And/Or/Not, quantifier and Image bodies
  std::vector<int> vars;         // quantified slots; Image: the two bound slots
  int def = -1;                  // Call target
  int scheme = -1;               // Image / Chain scheme
  int links = 0;                 // Chain: maximal number of links
};

struct Definition {
  std::string name;
  int params = 0;                  // slots 0..params-1
  std::vector<std::string> names;  // every slot
  FormulaPtr body;
};

// Named formulas over one algebra's signature.
class Library {
 public:
  explicit Library(AlgPtr alg);
  const FiniteAlgebra& alg() const { return *alg_; }
  AlgPtr alg_ptr() const { return alg_; }

  int add(Definition d);
  int find(const std::string& name) const;  // -1 if absent
  const Definition& def(int i) const { return defs_.at(i); }
  int size() const { return static_cast<int>(defs_.size()); }
  std::vector<std::string> names() const;

  struct ResolvedScheme {
    std::string name;
    std::vector<std::vector<std::pair<int, int>>> steps;
  };
  int add_scheme(const TermScheme& s);  // resolves op names
  const ResolvedScheme& scheme(int i) const { return schemes_.at(i); }

  std::string sexpr(int def) const;
  std::string sexpr(const Definition& d, const Formula& f) const;
  std::string sexpr(const Definition& d, const Term& t) const;

 private:
  AlgPtr alg_;
  std::vector<Definition> defs_;
  std::map<std::string, int> index_;
  std::vector<ResolvedScheme> schemes_;
};

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Brute-force satisfaction with memoised definitions.  Existentials run
// their variables in order and test each conjunct as soon as its slots
// are bound.
class FormulaEvaluator {
 public:
  explicit FormulaEvaluator(const Library& lib, std::uint64_t budget = 4'000'000'000ull);

  bool call(int def, const std::vector<Elem>& args);
  bool call(const std::string& name, const std::vector<Elem>& args);
  bool eval(const Definition& d, const Formula& f, std::vector<Elem>& env);
  Elem eval(const Term& t, const std::vector<Elem>& env) const;

  const Partition& cg(Elem y, Elem z);
  const std::vector<std::pair<Elem, Elem>>& image(int scheme, Elem y, Elem z);
  std::uint64_t work() const { return work_; }
  const Library& library() const { return lib_; }

 private:
  struct Plan {
    std::vector<std::vector<const Formula*>> at_level;  // conjuncts checked after binding var k-1
  };
  const Plan& plan(const Formula& ex);
  const std::vector<const Formula*>& disjuncts(const Formula& f);
  bool exists_rec(const Definition& d, const Formula& ex, const Plan& p, std::size_t level,
                  std::vector<Elem>& env);
  bool chain(int scheme, int links, Elem w, Elem x, Elem y, Elem z);
  void tick();

  const Library& lib_;
  std::uint64_t budget_;
  std::uint64_t work_ = 0;
  std::vector<std::unordered_map<std::uint64_t, bool>> memo_;
  std::unordered_map<std::uint64_t, Partition> cg_;
  std::unordered_map<std::uint64_t, std::vector<std::pair<Elem, Elem>>> images_;
  std::unordered_map<const Formula*, Plan> plans_;
  std::unordered_map<const Formula*, std::vector<const Formula*>> or_order_;
};

// Free-variable check and satisfaction of a parameterised definition under
// a named assignment.
bool eval_formula(const Library& lib, const std::string& name,
                  const std::map<std::string, Elem>& assignment);

// ---------------------------------------------------------------- e_i, M_i

Elem e_i(const FiniteAlgebra& alg, int i, const std::vector<Elem>& n, Elem x);
std::optional<std::vector<Elem>> in_class_Mi(const FiniteAlgebra& alg, int i);

struct JonssonResult {
  bool ok = true;
  std::string failed;     // identity that failed
  Elem x = 0, y = 0, z = 0;
};
JonssonResult jonsson_check(const FiniteAlgebra& alg, const std::vector<Elem>& n, int i);

// ---------------------------------------------------------------- term sets

struct ProductTerms {
  int N = 0;
  std::vector<int> per_algebra;  // n_C for each catalog entry (0 when skipped)
  std::vector<TermScheme> P;
};
// Throws std::invalid_argument on an empty catalog.
ProductTerms compute_product_terms_P(const std::vector<AlgPtr>& catalog);

struct MachineTerms {
  std::vector<TermScheme> S, T;
  int depth_S = 0, depth_T = 0;
  std::string report;
};
MachineTerms compute_machine_terms_ST(const TuringMachine& tm,
                                      const std::vector<const ThetaResult*>& machines);

// ---------------------------------------------------------------- library

enum class BaseStrategy { Semantic, Scheme };

struct LibraryOptions {
  BaseStrategy strategy = BaseStrategy::Semantic;
  int scheme_links = 3;  // Scheme strategy: chain length
  int scheme_depth = 2;  // Scheme strategy: translation depth
  std::vector<TermScheme> P, S, T;
  bool sentences = true;  // add zeta and sigma
};

Library build_library(AlgPtr alg, const LibraryOptions& opt);
// Catalog terms for the given algebras (P from the catalog, S = T = {id}).
LibraryOptions default_library_options(const std::vector<AlgPtr>& catalog);

// ---------------------------------------------------------------- DPSC

struct PiResult {
  bool ok = true;
  std::optional<std::pair<Elem, Elem>> missing;   // in Cg, formula false
  std::optional<std::pair<Elem, Elem>> spurious;  // formula true, not in Cg
};
PiResult pi_psi_semantic(FormulaEvaluator& ev, int psi, Elem c, Elem d);

struct DpscWitness {
  Elem c = 0, d = 0;
  std::string formula;
  std::vector<std::string> transcript;
};
DpscWitness dpsc_witness_jonsson(const AlgPtr& alg, Elem a, Elem b);

struct DpscEntry {
  Elem a = 0, b = 0, c = 0, d = 0;
  std::string branch;
};
struct DpscReport {
  bool ok = true;
  std::vector<DpscEntry> witnesses;
  std::optional<std::pair<Elem, Elem>> failed;
  std::string note;
};
DpscReport dpsc_check(FormulaEvaluator& ev, int gamma, int psi,
                      const std::vector<std::string>& branches = {});

}  // namespace dpsc
