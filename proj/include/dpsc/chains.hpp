#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpsc/algebra.hpp"
#include "dpsc/formulas.hpp"
#include "dpsc/tm.hpp"

namespace dpsc {

class ChainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- chains

struct ChainLink {
  UnaryPolynomial poly;
  bool forward = true;  // poly(c) = r_k, poly(d) = r_{k+1}; otherwise swapped
};

struct MaltsevChain {
  std::vector<Elem> elems;  // r_1 .. r_n
  std::vector<ChainLink> links;
  bool empty() const { return links.empty(); }
};

bool verify_chain(const FiniteAlgebra& alg, const MaltsevChain& ch, Elem c, Elem d);
// r_{k+1} < r_k for every link.
bool is_decreasing(const FiniteAlgebra& alg, const MaltsevChain& ch);
std::string describe(const FiniteAlgebra& alg, const MaltsevChain& ch);

// Breadth-first search over images of (c,d) under compositions of at most
// `depth` fundamental translations, then a path of at most `length` links.
std::optional<MaltsevChain> find_maltsev_chain(const FiniteAlgebra& alg, Elem c, Elem d, Elem r,
                                               Elem s, int depth, int length);

struct DecreasingPair {
  MaltsevChain down;  // r down to t
  MaltsevChain up;    // s down to t
  Elem t = 0;
};
DecreasingPair make_decreasing(const FiniteAlgebra& alg, const MaltsevChain& ch, Elem c, Elem d);

// ---------------------------------------------------------------- link forms

enum class Head { S, J, Jp, K };
std::string to_string(Head h);

struct EParams {
  int i = 0;
  std::vector<Elem> n;
};

// A link top -> bottom written as top = H(p,q,e(a_top)), bottom = H(p,q,e(a_bottom))
// where H is J(p,q,x), J'(p,q,x) or S_j(m,p,q,x) and e = e_i(n,.).  For S
// links the inner e_i also fixes c and d and (e(a_top), e(a_bottom)) lies
// in Cg(c,d).
struct LinkForm {
  Head head = Head::J;
  Elem top = 0, bottom = 0;
  Elem p = 0, q = 0;
  EParams outer;  // S heads: S_j with these parameters
  EParams inner;
  Elem a_top = 0, a_bottom = 0;
  std::optional<Term> poly;  // when present: poly(c) = top, poly(d) = bottom
  std::string origin;
};

Elem link_value(const FiniteAlgebra& alg, const LinkForm& l, Elem a);
Elem eval_unary(const FiniteAlgebra& alg, const Term& t, Elem x);
// Endpoint equations, the polynomial images and, for S heads, the side
// conditions.  With cg given, both endpoints must share its block.
bool verify_link(const FiniteAlgebra& alg, const LinkForm& l, Elem c, Elem d,
                 const Partition* cg = nullptr);
std::string describe(const FiniteAlgebra& alg, const LinkForm& l);

struct HeadShape {
  Head head = Head::S;
  EParams outer;  // S_j parameters for shape 1
  Elem p = 0, q = 0;
  UnaryPolynomial h, f;  // g' = f(H(p,q,h(x))) for shapes 2-4
  Term g;                // the normalised polynomial
  Elem top = 0, bottom = 0;
  std::string note;
};
// Throws ChainError when no shape verifies.
HeadShape head_normalize(const FiniteAlgebra& alg, const UnaryPolynomial& g, Elem c, Elem d);
std::vector<LinkForm> rewrite_link(const FiniteAlgebra& alg, const HeadShape& shape, Elem c,
                                   Elem d);

LinkForm collapse_J_run(const FiniteAlgebra& alg, const std::vector<LinkForm>& run, Elem c, Elem d);
std::vector<LinkForm> collapse_Jprime_run(const FiniteAlgebra& alg, const std::vector<LinkForm>& run,
                                          Elem c, Elem d);
std::vector<LinkForm> swap_J_Jprime(const FiniteAlgebra& alg, const LinkForm& j,
                                    const LinkForm& jp, Elem c, Elem d);

// ---------------------------------------------------------------- reduction

enum class ChainType { S, J, Jp, JpJ, JS, JpS, JpJS };
std::string to_string(ChainType t);
std::string psi_name(ChainType t);

struct ReduceResult {
  bool ok = false;
  ChainType type = ChainType::S;
  std::vector<LinkForm> links;
  std::vector<std::string> trace;
  std::string error;
  int rewrites = 0;
  bool psi_ok = false;
};
// The evaluator's library must contain the psi_X definitions of the
// algebra the chain lives in.
ReduceResult reduce_chain(FormulaEvaluator& ev, const MaltsevChain& ch, Elem c, Elem d);

// For algebras with e_i = 0 on c,d: r = f1(c), t = f1(d) = f2(c), s = f2(d)
// forces r = t or t = s.  Throws std::invalid_argument on a precondition
// breach.
bool check_no_chain_needed(const FiniteAlgebra& alg, Elem c, Elem d, const UnaryPolynomial& f1,
                           const UnaryPolynomial& f2);

// ---------------------------------------------------------------- corpus

struct ChainSample {
  AlgPtr alg;
  Elem c = 0, d = 0;
  MaltsevChain chain;
};

struct CorpusOptions {
  std::uint64_t seed = 0;
  int count = 1000;
  int max_size = 20;
  int max_length = 5;
  int max_depth = 3;
  int per_algebra = 10;
};
// Decreasing chains in subalgebras of A'(tm)^2 with c > d both fixed by
// some e_i(n,.).
std::vector<ChainSample> random_chain_corpus(const TuringMachine& tm, const CorpusOptions& opt);

}  // namespace dpsc
