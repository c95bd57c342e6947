#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "dpsc/aprime.hpp"
#include "dpsc/catalog.hpp"
#include "dpsc/chains.hpp"
#include "dpsc/formulas.hpp"
#include "dpsc/io.hpp"
#include "dpsc/suite.hpp"
#include "dpsc/tm.hpp"

using namespace dpsc;

namespace {

const char* kHalt = "states 2\n1 0 1 R 0\n";
const char* kLoop = "states 2\n1 0 0 R 1\n";
const char* kWalker = "states 2\n1 0 1 R 0\n1 1 1 L 1\n";

using Blocks = std::set<std::set<std::string>>;

AlgPtr aprime() {
  static AlgPtr a = build_aprime(parse_tm(kHalt));
  return a;
}

Signature sig() { return aprime_signature(parse_tm(kHalt)); }

Elem el(const FiniteAlgebra& A, const std::string& l) { return A.element(l); }

std::set<std::string> labels_of(const FiniteAlgebra& A, const std::vector<Elem>& es) {
  std::set<std::string> out;
  for (Elem e : es) out.insert(A.label(e));
  return out;
}

Blocks blocks_of(const FiniteAlgebra& A, const Partition& p) {
  Blocks out;
  for (auto& b : p.blocks())
    if (b.size() > 1) out.insert(labels_of(A, b));
  return out;
}

// Element of a quotient whose block label "[x|y|...]" contains l.
Elem member(const FiniteAlgebra& A, const std::string& l) {
  if (auto e = A.find(l)) return *e;
  for (Elem e = 0; e < A.size(); ++e) {
    std::string b = A.label(e);
    if (b.size() < 2 || b.front() != '[') continue;
    b = "|" + b.substr(1, b.size() - 2) + "|";
    if (b.find("|" + l + "|") != std::string::npos) return e;
  }
  FAIL("no element " << l);
  return -1;
}

// Reference closure over the full relation matrix, one pass per round over
// every operation, tuple and position.
Partition pair_closure(const FiniteAlgebra& A, Elem a, Elem b) {
  const int m = A.size();
  std::vector<std::vector<char>> R(m, std::vector<char>(m, 0));
  for (int i = 0; i < m; ++i) R[i][i] = 1;
  R[a][b] = R[b][a] = 1;
  for (bool changed = true; changed;) {
    changed = false;
    auto relate = [&](Elem u, Elem v) {
      if (!R[u][v]) R[u][v] = R[v][u] = 1, changed = true;
    };
    for (int op = 0; op < A.op_count(); ++op) {
      const int k = A.op(op).arity;
      if (k == 0) continue;
      std::vector<Elem> t(k);
      std::size_t total = 1;
      for (int i = 0; i < k; ++i) total *= m;
      for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rest = idx;
        for (int i = k - 1; i >= 0; --i) t[i] = static_cast<Elem>(rest % m), rest /= m;
        const Elem base = A.apply(op, t.data());
        for (int pos = 0; pos < k; ++pos) {
          const Elem keep = t[pos];
          for (Elem v = 0; v < m; ++v)
            if (v != keep && R[keep][v]) {
              t[pos] = v;
              relate(base, A.apply(op, t.data()));
            }
          t[pos] = keep;
        }
      }
    }
    for (int x = 0; x < m; ++x)
      for (int y = 0; y < m; ++y)
        if (R[x][y])
          for (int z = 0; z < m; ++z)
            if (R[y][z]) relate(x, z);
  }
  Partition p(m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (R[i][j]) p.unite(i, j);
  return p;
}

// Flat meet on {0,x,y}; no other operations.
std::shared_ptr<FiniteAlgebra> flat3() {
  auto A = std::make_shared<FiniteAlgebra>(std::vector<std::string>{"0", "x", "y"});
  A->add_table_op("zero", 0, {0});
  std::vector<Elem> meet(9, 0);
  for (int i = 0; i < 3; ++i) meet[i * 3 + i] = i;
  A->add_table_op("meet", 2, meet);
  return A;
}

// One-element algebra in the A'(T) signature.
std::shared_ptr<FiniteAlgebra> trivial() {
  auto A = std::make_shared<FiniteAlgebra>(std::vector<std::string>{"0"});
  for (auto& [name, arity] : sig()) A->add_table_op(name, arity, {0});
  return A;
}

bool same_tables(const FiniteAlgebra& a, const FiniteAlgebra& b, int max_arity) {
  if (a.labels() != b.labels() || a.signature() != b.signature()) return false;
  const int m = a.size();
  for (int op = 0; op < a.op_count(); ++op) {
    const int k = a.op(op).arity;
    if (k > max_arity) continue;
    std::vector<Elem> t(k);
    std::size_t total = 1;
    for (int i = 0; i < k; ++i) total *= m;
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t rest = idx;
      for (int i = k - 1; i >= 0; --i) t[i] = static_cast<Elem>(rest % m), rest /= m;
      if (a.apply(op, t.data()) != b.apply(op, t.data())) return false;
    }
  }
  return true;
}

std::string data_path(const std::string& name) { return std::string(DPSC_TEST_DATA) + "/" + name; }

}  // namespace

// ---------------------------------------------------------------- tm_core

TEST_SUITE("tm_core") {
  TEST_CASE("parse") {
    auto tm = parse_tm(kHalt);
    CHECK(tm.state_count == 2);
    REQUIRE(tm.instructions.size() == 1);
    CHECK(tm.instructions[0] == Instruction{1, 0, 1, Dir::R, 0});
    CHECK(parse_tm("# comment\nstates 2\n\n1 0 1 R 0\n").instructions.size() == 1);
    CHECK(parse_tm("states 3\n").instructions.empty());
    CHECK(format_tm(parse_tm(format_tm(tm))) == format_tm(tm));
  }

  TEST_CASE("parse errors") {
    try {
      parse_tm("states 2\n0 0 1 R 1\n");
      FAIL("instruction from the halting state accepted");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("instruction from halting state") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_tm("states 2\n1 0 1 R 0\n1 0 0 L 1\n"), ParseError);
    CHECK_THROWS_AS(parse_tm("states 2\n1 0 1 R 2\n"), ParseError);
    CHECK_THROWS_AS(parse_tm("states 2\n1 0 1 X 0\n"), ParseError);
  }

  TEST_CASE("step") {
    auto halt = parse_tm(kHalt), loop = parse_tm(kLoop);
    auto s = step(halt, Configuration{});
    CHECK(s.status == StepStatus::Moved);
    CHECK(s.next == parse_configuration("0@1:1"));
    CHECK(step(halt, s.next).status == StepStatus::Halted);
    CHECK(step(loop, parse_configuration("1@7:")).next == parse_configuration("1@8:"));
    CHECK(step(halt, parse_configuration("1@0:1")).status == StepStatus::Stuck);
  }

  TEST_CASE("configurations ignore stored zeros") {
    Configuration b;
    b.write(1, 1);
    b.write(5, 0);
    CHECK(b == parse_configuration("1@0:0100"));
    CHECK(parse_configuration("1@0:-2=101") == parse_configuration("1@0:-2=1010"));
    b.write(1, 0);
    CHECK(b.tape.empty());
  }

  TEST_CASE("run") {
    auto halt = parse_tm(kHalt), loop = parse_tm(kLoop);
    auto r = run(halt, Configuration{}, 10);
    CHECK(r.halted);
    CHECK(r.trace.size() == 2);
    auto l = run(loop, Configuration{}, 1000);
    CHECK_FALSE(l.halted);
    CHECK(l.trace.size() == 1001);
    auto z = run(loop, Configuration{}, 0);
    CHECK(z.trace.size() == 1);
    CHECK_FALSE(z.halted);
    CHECK(run(halt, parse_configuration("0@0:"), 0).halted);
  }

  TEST_CASE("leq_N") {
    auto tm = parse_tm(kHalt);
    const Interval N{0, 3};
    auto Q = parse_configuration("1@0:");
    CHECK(leq_N(tm, N, Q, Q, N));
    CHECK(leq_N(tm, N, parse_configuration("0@1:1"), Q, N));
    CHECK_FALSE(leq_N(tm, N, Q, parse_configuration("0@1:1"), N));
    CHECK_FALSE(leq_N(tm, N, parse_configuration("0@4:0001"), parse_configuration("1@3:"), Interval{0, 4}));
    CHECK_THROWS(leq_N(tm, N, Q, Q, Interval{0, 1}));
  }

  TEST_CASE("run touches only visited cells") {
    auto tm = parse_tm("states 3\n1 0 1 R 2\n2 0 1 L 1\n1 1 0 R 2\n2 1 1 R 0\n");
    auto q = parse_configuration("1@0:-3=1011001");
    auto r = run(tm, q, 30);
    std::set<long> seen;
    for (auto& c : r.trace) seen.insert(c.head);
    for (auto& c : r.trace)
      for (long k = -5; k <= 6; ++k)
        if (!seen.count(k)) CHECK(c.read(k) == q.read(k));
  }
}

// ---------------------------------------------------------------- algebra_core

TEST_SUITE("algebra_core") {
  TEST_CASE("subuniverses") {
    auto A = aprime();
    CHECK(labels_of(*A, generate_subuniverse(*A, {APrime::H, APrime::C})) ==
          std::set<std::string>{"0", "H", "C", "D", "M(1,0)"});
    CHECK(labels_of(*A, generate_subuniverse(*A, {})) == std::set<std::string>{"0"});
    auto S3 = build_sequential(3, sig());
    CHECK(labels_of(*S3, generate_subuniverse(*S3, {el(*S3, "a1"), el(*S3, "b3")})) ==
          std::set<std::string>{"0", "a1", "b3"});
  }

  TEST_CASE("subuniverse closure is monotone and idempotent") {
    auto A = aprime();
    auto small = generate_subuniverse(*A, {APrime::H});
    auto big = generate_subuniverse(*A, {APrime::H, APrime::C});
    CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
    CHECK(generate_subuniverse(*A, big) == big);
    CHECK(std::is_sorted(big.begin(), big.end()));
  }

  TEST_CASE("principal congruences") {
    auto S3 = build_sequential(3, sig());
    CHECK(principal_congruence(*S3, el(*S3, "a2"), el(*S3, "a2")).is_identity());
    CHECK(blocks_of(*S3, principal_congruence(*S3, el(*S3, "b2"), 0)) == Blocks{{"0", "b1", "b2"}});
    auto hc = generated_subalgebra(aprime(), {APrime::H, APrime::C}).alg;
    CHECK(blocks_of(*hc, principal_congruence(*hc, el(*hc, "M(1,0)"), el(*hc, "0"))) ==
          Blocks{{"0", "M(1,0)"}});
  }

  TEST_CASE("principal congruences agree with the reference closure") {
    auto tm = parse_tm(kHalt);
    std::vector<AlgPtr> algs = {build_sequential(2, sig()), build_sequential(3, sig()),
                                build_small_si(SmallKind::W, tm), flat3(),
                                generated_subalgebra(aprime(), {APrime::H, APrime::C}).alg};
    for (auto& A : algs)
      for (Elem a = 0; a < A->size(); ++a)
        for (Elem b = a + 1; b < A->size(); ++b)
          CHECK_MESSAGE(principal_congruence(*A, a, b) == pair_closure(*A, a, b),
                        A->label(a) << " " << A->label(b));
  }

  TEST_CASE("congruence lattices") {
    auto two = build_small_si(SmallKind::TwoElt, parse_tm(kHalt));
    CHECK(congruence_lattice(*two).size() == 2);
    CHECK(is_si(*two));
    CHECK(congruence_lattice(*trivial()).size() == 1);
    CHECK_THROWS_AS(congruence_lattice(*aprime(), 16), SizeGuardError);
  }

  TEST_CASE("S_2 has two atoms") {
    auto S2 = build_sequential(2, sig());
    auto lat = congruence_lattice(*S2);
    std::set<Blocks> atoms;
    for (auto& th : lat) {
      if (th.is_identity()) continue;
      bool atom = true;
      for (auto& o : lat)
        if (!o.is_identity() && o.leq(th) && !(o == th)) atom = false;
      if (atom) atoms.insert(blocks_of(*S2, th));
    }
    CHECK(atoms == std::set<Blocks>{Blocks{{"0", "b1"}}, Blocks{{"0", "a2"}}});
  }

  TEST_CASE("lattice members are congruences and quotients pull back") {
    auto W = build_small_si(SmallKind::W, parse_tm(kHalt));
    auto S3 = build_sequential(3, sig());
    for (AlgPtr A : {AlgPtr(W), AlgPtr(S3), AlgPtr(flat3())})
      for (auto& th : congruence_lattice(*A)) {
        CHECK_FALSE(check_congruence(*A, th).has_value());
        auto q = quotient(A, th);
        CHECK(q.alg->size() == th.block_count());
        CHECK(pullback(q, Partition(q.alg->size())) == th);
      }
  }

  TEST_CASE("monoliths") {
    auto S3 = build_sequential(3, sig());
    CHECK_FALSE(monolith(*S3).has_value());
    CHECK_FALSE(monolith(*flat3()).has_value());
    CHECK_FALSE(is_fsi(*flat3()));
    CHECK(is_fsi(*trivial()));
    auto three = build_small_si(SmallKind::ThreeElt, parse_tm(kHalt));
    auto mono = monolith(*three);
    REQUIRE(mono);
    CHECK(blocks_of(*three, *mono) == Blocks{{"0", "M(1,0)"}});
    CHECK(is_fsi(*three));
  }

  TEST_CASE("quotients") {
    auto hc = generated_subalgebra(aprime(), {APrime::H, APrime::C}).alg;
    auto q = quotient(hc, principal_congruence(*hc, el(*hc, "M(1,0)"), 0));
    CHECK(q.alg->size() == 4);
    CHECK(is_isomorphic(*quotient(hc, Partition(hc->size())).alg, *hc));
    Partition full(hc->size());
    for (Elem e = 1; e < hc->size(); ++e) full.unite(0, e);
    CHECK(quotient(hc, full).alg->size() == 1);
    Partition bad(hc->size());
    bad.unite(el(*hc, "H"), el(*hc, "C"));
    CHECK_THROWS_AS(quotient(hc, bad), NotCongruenceError);
  }

  TEST_CASE("isomorphism") {
    auto tm = parse_tm(kHalt);
    auto W = build_small_si(SmallKind::W, tm);
    CHECK(is_isomorphic(*W, *W));
    auto hc = generated_subalgebra(aprime(), {APrime::H, APrime::C}).alg;
    auto q = quotient(hc, principal_congruence(*hc, el(*hc, "M(1,0)"), 0)).alg;
    CHECK(is_isomorphic(*q, *W));
    CHECK_FALSE(is_isomorphic(*build_sequential(2, sig()), *build_sequential(3, sig())));
    CHECK_FALSE(is_isomorphic(*W, *build_small_si(SmallKind::TwoElt, tm)));
  }

  TEST_CASE("powers") {
    auto A = aprime();
    auto P1 = power_subalgebra(A, 1, {{APrime::H}, {APrime::C}});
    CHECK(P1->size() == 5);
    CHECK(is_isomorphic(*P1, *generated_subalgebra(A, {APrime::H, APrime::C}).alg));
    CHECK(power_subalgebra(A, 3, {})->size() == 1);
    CHECK_THROWS_AS(power_subalgebra(A, 3, {{APrime::ONE, APrime::TWO, APrime::H}}, 4), SizeGuardError);
    auto tm = parse_tm(kHalt);
    auto P = direct_product(build_small_si(SmallKind::TwoElt, tm), build_small_si(SmallKind::ThreeElt, tm));
    CHECK(P->size() == 6);
  }

  TEST_CASE("translations and polynomials") {
    auto S3 = build_sequential(3, sig());
    FundamentalTranslation f{S3->op_index("prod"), 1, {el(*S3, "a1")}};
    CHECK(f.apply(*S3, el(*S3, "b2")) == el(*S3, "b1"));
    UnaryPolynomial id;
    CHECK(id.is_identity());
    CHECK(id.apply(*S3, el(*S3, "a3")) == el(*S3, "a3"));
    UnaryPolynomial two{{f, FundamentalTranslation{S3->op_index("meet"), 0, {el(*S3, "b1")}}}};
    CHECK(two.apply(*S3, el(*S3, "b2")) == el(*S3, "b1"));
    CHECK(two.apply(*S3, el(*S3, "b3")) == 0);
  }
}

// ---------------------------------------------------------------- aprime

TEST_SUITE("aprime") {
  TEST_CASE("sizes") {
    auto A = aprime();
    CHECK(A->size() == 48);
    CHECK(A->op_count() == 17);
    CHECK(build_aprime(parse_tm(kHalt), true)->op_count() == 16);
    CHECK(build_aprime(parse_tm("states 2\n"))->op_count() == 11);
    auto B = build_aprime(parse_tm("states 3\n1 0 1 R 2\n2 1 0 L 0\n"));
    CHECK(B->size() == 68);
    CHECK(B->op_count() == 23);
  }

  TEST_CASE("labels and operation names") {
    auto A = aprime();
    const std::vector<std::string> head = {"0", "1", "2", "H", "C", "D", "~C", "~D"};
    for (int i = 0; i < 8; ++i) CHECK(A->label(i) == head[i]);
    for (auto l : {"C(1,0,1)", "D(0,1,1)", "M(1,1)", "~C(0,0,0)", "~M(1,0)"}) CHECK_MESSAGE(A->find(l), l);
    for (auto n : {"meet", "prod", "J", "Jp", "K", "S0", "S1", "S2", "T", "I", "R(1,0,0)", "R(1,0,1)",
                   "U1:R(1,0,0)", "U0:R(1,0,1)"})
      CHECK_MESSAGE(A->op_index(n) >= 0, n);
  }

  TEST_CASE("base operations") {
    auto A = aprime();
    auto ap = [&](const char* op, std::initializer_list<const char*> args) {
      std::vector<Elem> v;
      for (auto a : args) v.push_back(A->element(a));
      return A->label(A->apply(A->op_index(op), v.data()));
    };
    CHECK(ap("meet", {"C", "C"}) == "C");
    CHECK(ap("meet", {"C", "D"}) == "0");
    CHECK(ap("meet", {"0", "H"}) == "0");
    CHECK(ap("prod", {"H", "C"}) == "D");
    CHECK(ap("prod", {"2", "D"}) == "D");
    CHECK(ap("prod", {"1", "C"}) == "C");
    CHECK(ap("prod", {"2", "~D"}) == "~D");
    CHECK(ap("prod", {"C", "H"}) == "0");
    CHECK(ap("J", {"C", "C", "D"}) == "C");
    CHECK(ap("J", {"C", "~C", "C"}) == "C");
    CHECK(ap("J", {"C", "~C", "D"}) == "0");
    CHECK(ap("J", {"1", "2", "H"}) == "0");
    CHECK(ap("Jp", {"C", "C", "D"}) == "0");
    CHECK(ap("Jp", {"C", "~C", "D"}) == "C");
    CHECK(ap("Jp", {"H", "H", "H"}) == "H");
    CHECK(ap("K", {"~C", "C", "D"}) == "C");
    CHECK(ap("K", {"C", "C", "~C"}) == "~C");
    CHECK(ap("K", {"1", "1", "1"}) == "1");
    CHECK(ap("K", {"1", "2", "H"}) == "0");
    CHECK(ap("S1", {"1", "C", "D", "C"}) == "C");
    CHECK(ap("S1", {"H", "C", "C", "C"}) == "0");
    CHECK(ap("S2", {"C", "~C", "D", "D", "H"}) == "D");
    CHECK(ap("S2", {"1", "2", "D", "D", "D"}) == "0");
    CHECK(ap("S0", {"C(0,0,0)", "C", "C", "D"}) == "C");
    CHECK(ap("T", {"H", "C", "H", "C"}) == "D");
    CHECK(ap("T", {"2", "D", "H", "C"}) == "~D");
    CHECK(ap("T", {"1", "1", "1", "1"}) == "0");
    CHECK(ap("I", {"1"}) == "C(1,0,0)");
    CHECK(ap("I", {"H"}) == "M(1,0)");
    CHECK(ap("I", {"2"}) == "D(1,0,0)");
    CHECK(ap("I", {"C"}) == "0");
  }

  TEST_CASE("machine operations") {
    auto A = build_aprime(parse_tm("states 2\n1 0 1 L 0\n"));
    auto ap = [&](const std::string& op, std::initializer_list<const char*> args) {
      std::vector<Elem> v;
      for (auto a : args) v.push_back(A->element(a));
      const int o = A->op_index(op);
      REQUIRE_MESSAGE(o >= 0, op);
      return A->label(A->apply(o, v.data()));
    };
    CHECK(ap("L(1,0,0)", {"1", "1", "C(1,0,1)"}) == "C(0,0,1)");
    CHECK(ap("L(1,0,0)", {"H", "1", "C(1,0,0)"}) == "M(0,0)");
    CHECK(ap("L(1,0,0)", {"2", "H", "M(1,0)"}) == "D(0,0,1)");
    CHECK(ap("L(1,0,0)", {"1", "1", "~C(1,0,1)"}) == "~C(0,0,1)");
    int nonzero = 0;
    for (Elem u = 0; u < A->size(); ++u) {
      const Elem f = A->apply(A->op_index("L(1,0,0)"), {APrime::TWO, APrime::H, u});
      nonzero += f != 0;
      CHECK(A->apply(A->op_index("U1:L(1,0,0)"), {APrime::TWO, APrime::H, APrime::H, u}) == f);
      CHECK(A->apply(A->op_index("U1:L(1,0,0)"), {APrime::TWO, APrime::ONE, APrime::H, u}) == 0);
      CHECK(A->apply(A->op_index("U0:L(1,0,0)"), {APrime::TWO, APrime::TWO, APrime::H, u}) == f);
    }
    CHECK(nonzero > 0);
  }

  TEST_CASE("bar") {
    auto A = aprime();
    auto ap = aprime_of(*A);
    REQUIRE(ap);
    CHECK(A->label(ap->bar(APrime::C)) == "~C");
    CHECK(ap->bar(ap->bar(APrime::C)) == APrime::C);
    CHECK(ap->bar(APrime::H) < 0);
    CHECK(A->label(ap->bar(ap->vM(1, 0))) == "~M(1,0)");
    for (Elem e = 0; e < A->size(); ++e) {
      CHECK((ap->bar(e) >= 0) == ap->in_VW(e));
      if (ap->bar(e) >= 0) CHECK(ap->bar(ap->bar(e)) == e);
    }
    CHECK_FALSE(aprime_of(*build_sequential(2, sig())));
  }

  TEST_CASE("flat meet") {
    auto A = aprime();
    for (Elem x = 0; x < A->size(); ++x)
      for (Elem y = 0; y < A->size(); ++y) CHECK(A->meet(x, y) == (x == y ? x : 0));
  }

  TEST_CASE("precedes") {
    const Elem u[] = {APrime::ONE, APrime::TWO, APrime::H};
    std::set<std::pair<Elem, Elem>> got;
    for (Elem x : u)
      for (Elem y : u)
        if (APrime::precedes(x, y)) got.insert({x, y});
    CHECK(got == std::set<std::pair<Elem, Elem>>{
                     {APrime::TWO, APrime::TWO}, {APrime::TWO, APrime::H}, {APrime::ONE, APrime::ONE}});
  }

  TEST_CASE("zero absorption") {
    auto rep = classify_zero_absorbing(*aprime());
    CHECK(rep.size() == 16);
    for (auto& e : rep) {
      std::vector<int> non;
      for (int c = 0; c < e.arity; ++c)
        if (!e.absorbing[c]) non.push_back(c);
      CHECK_MESSAGE(non == expected_non_absorbing(e.op), e.op);
    }
    CHECK(expected_non_absorbing("J") == std::vector<int>{2});
    CHECK(expected_non_absorbing("S0") == std::vector<int>{2, 3});
    CHECK(expected_non_absorbing("S2") == std::vector<int>{3, 4});
    CHECK(expected_non_absorbing("T").empty());
  }

  TEST_CASE("meet commuting") {
    auto A = aprime();
    CHECK(check_meet_commuting(*A, A->op_index("meet")).commutes);
    CHECK(check_meet_commuting(*A, A->op_index("I")).commutes);
    CHECK(check_meet_commuting(*A, A->op_index("J")).checked > 0);
  }

  TEST_CASE("T on a repeated pair is the product") {
    auto A = aprime();
    const int T = A->op_index("T"), P = A->op_index("prod");
    for (Elem w = 0; w < A->size(); ++w)
      for (Elem x = 0; x < A->size(); ++x) CHECK(A->apply(T, {w, x, w, x}) == A->apply(P, {w, x}));
  }
}

// ---------------------------------------------------------------- si_catalog

TEST_SUITE("si_catalog") {
  TEST_CASE("sequential algebras") {
    auto S3 = build_sequential(3, sig());
    CHECK(S3->size() == 7);
    auto P = [&](const char* a, const char* b) {
      return S3->label(S3->apply(S3->op_index("prod"), {el(*S3, a), el(*S3, b)}));
    };
    CHECK(P("a1", "b2") == "b1");
    CHECK(P("a2", "b3") == "b2");
    CHECK(P("a1", "b3") == "0");
    auto S1 = build_sequential(1, sig());
    CHECK(S1->sparse(S1->op_index("prod")).count() == 0);
    CHECK(S1->sparse(S1->op_index("T")).count() == 0);
    auto S2 = build_sequential(2, sig());
    const Elem a1 = el(*S2, "a1"), b2 = el(*S2, "b2");
    CHECK(S2->label(S2->apply(S2->op_index("T"), {a1, b2, a1, b2})) == "b1");
    CHECK(satisfies_e_zero(*S2));
  }

  TEST_CASE("sequential algebras are not subdirectly irreducible") {
    for (int n = 1; n <= 5; ++n) {
      auto S = build_sequential(n, sig());
      const std::string an = "a" + std::to_string(n);
      auto ca = principal_congruence(*S, el(*S, an), 0);
      auto cb = principal_congruence(*S, el(*S, "b1"), 0);
      CHECK(blocks_of(*S, ca) == Blocks{{"0", an}});
      CHECK(blocks_of(*S, cb) == Blocks{{"0", "b1"}});
      CHECK(Partition::meet(ca, cb).is_identity());
      CHECK_FALSE(is_si(*S));
    }
  }

  TEST_CASE("S_2 sits in S_4 on the top indices") {
    auto S2 = build_sequential(2, sig()), S4 = build_sequential(4, sig());
    auto sub = generate_subuniverse(*S4, {el(*S4, "a3"), el(*S4, "b3"), el(*S4, "a4"), el(*S4, "b4")});
    CHECK(sub.size() == 5);
    CHECK(is_isomorphic(*subalgebra(S4, sub).alg, *S2));
  }

  TEST_CASE("small SIs") {
    auto tm = parse_tm(kHalt);
    auto W = build_small_si(SmallKind::W, tm);
    CHECK(W->size() == 4);
    CHECK(W->apply(W->op_index("T"), {member(*W, "H"), member(*W, "C"), member(*W, "H"), member(*W, "C")}) ==
          member(*W, "D"));
    auto three = build_small_si(SmallKind::ThreeElt, tm);
    CHECK(three->label(three->apply(three->op_index("I"), {el(*three, "H")})) == "M(1,0)");
    auto two = build_small_si(SmallKind::TwoElt, tm);
    // J, J' and K reduce to meets on {0,C}; everything else vanishes
    const Elem C = el(*two, "C");
    for (Elem x : {Elem(0), C})
      for (Elem y : {Elem(0), C})
        for (Elem z : {Elem(0), C}) {
          CHECK(two->apply("J", {x, y, z}) == two->meet(x, y));
          CHECK(two->apply("Jp", {x, y, z}) == two->meet(x, two->meet(y, z)));
          CHECK(two->apply("K", {x, y, z}) == two->meet(x, two->meet(y, z)));
        }
    for (int op = 0; op < two->op_count(); ++op) {
      const std::string& n = two->op(op).name;
      if (n != "meet" && n != "J" && n != "Jp" && n != "K") CHECK_MESSAGE(two->sparse(op).count() == 0, n);
    }
    for (auto A : {W, three, two}) {
      CHECK(is_si(*A));
      CHECK(satisfies_e_zero(*A));
    }
    CHECK(classify_small_si(*W, tm).kind == SmallKind::W);
    CHECK(classify_small_si(*three, tm).kind == SmallKind::ThreeElt);
    CHECK(classify_small_si(*two, tm).kind == SmallKind::TwoElt);
    auto s2 = classify_small_si(*build_sequential(2, sig()), tm);
    CHECK(s2.kind == SmallKind::NotApplicable);
    CHECK_FALSE(s2.reason.empty());
  }

  TEST_CASE("machine spec text") {
    auto tm = parse_tm(kHalt);
    auto ms = parse_machine_spec(tm, "N 0..3\nwindow -1..4\nP 1@0:\n");
    CHECK(ms.N == Interval{0, 3});
    CHECK(ms.window == Interval{-1, 4});
    CHECK(ms.P == parse_configuration("1@0:"));
    CHECK_FALSE(ms.phi.has_value());
    CHECK(parse_machine_spec(tm, "N 0..2\nP 1@0:\n").window == Interval{0, 2});
  }

  TEST_CASE("P_N") {
    MachineSpec spec;
    spec.tm = parse_tm(kLoop);
    spec.N = spec.window = Interval{0, 2};
    spec.P = parse_configuration("1@0:");
    auto pn = build_machine_PN(spec);
    const int q0 = pn.omega.find(parse_configuration("1@0:"));
    REQUIRE(q0 >= 0);
    CHECK(pn.alg->apply(pn.alg->op_index("I"), {pn.a(0)}) == pn.q(q0));
    for (int k = 0; k < static_cast<int>(pn.omega.configs.size()); ++k) {
      const Elem Q = pn.q(k);
      CHECK(pn.alg->apply(pn.alg->op_index("Jp"), {Q, Q, Q}) == Q);
    }
    // the step from head 2 leaves N, so R gives 0 whatever the a's are
    const int edge = pn.omega.find(parse_configuration("1@2:"));
    const int R = pn.alg->op_index("R(1,0,0)");
    REQUIRE(edge >= 0);
    REQUIRE(R >= 0);
    for (Elem x = 0; x < pn.alg->size(); ++x)
      for (Elem y = 0; y < pn.alg->size(); ++y) CHECK(pn.alg->apply(R, {x, y, pn.q(edge)}) == 0);
  }

  TEST_CASE("phi conditions") {
    auto tm = parse_tm(kWalker);
    MachineSpec spec;
    spec.tm = tm;
    spec.N = spec.window = Interval{0, 3};
    spec.P = parse_configuration("1@0:1111");
    auto om = build_omega(tm, spec.N, spec.window);
    auto phi = default_phi(spec, om);
    CHECK(check_phi_conditions(spec, om, phi).all());
    // 1@0:0111 reaches the halting configuration 0@1:1111 inside N
    auto bad = phi;
    bad.push_back(parse_configuration("1@0:0111"));
    CHECK_FALSE(check_phi_conditions(spec, om, bad).ok[3]);
    spec.N = spec.window = Interval{0, 0};
    spec.P = parse_configuration("1@0:1");
    auto om0 = build_omega(tm, spec.N, spec.window);
    CHECK_FALSE(check_phi_conditions(spec, om0, {spec.P}).ok[4]);
  }

  TEST_CASE("machine quotient") {
    auto tm = parse_tm(kWalker);
    auto spec = parse_machine_spec(tm, "N 0..3\nP 1@0:1111\n");
    auto res = theta_phi_quotient(spec);
    REQUIRE(res.monolith);
    CHECK(res.quotient.alg->size() == 9);
    CHECK(is_si(*res.quotient.alg));
    CHECK(res.quotient.alg->sparse(res.quotient.alg->op_index("S2")).count() == 0);
    spec.phi = res.phi;
    spec.phi->push_back(parse_configuration("1@0:0111"));
    CHECK_THROWS_AS(theta_phi_quotient(spec), PreconditionError);
  }

  TEST_CASE("window vectors") {
    const Interval w{-3, 3};
    auto a = alpha_vector(0, w);
    auto A = aprime();
    const std::vector<std::string> want = {"C(1,0,0)", "C(1,0,0)", "C(1,0,0)", "M(1,0)",
                                           "D(1,0,0)", "D(1,0,0)", "D(1,0,0)"};
    for (int k = 0; k < 7; ++k) CHECK(A->label(A->apply("I", {a[k]})) == want[k]);
    for (long n = -2; n <= 2; ++n)
      for (long m = -2; m <= 2; ++m) {
        if (n == m) continue;
        auto x = alpha_vector(n, w), y = alpha_vector(m, w);
        bool some_zero = false;
        for (int k = 0; k < 7; ++k) some_zero = some_zero || A->meet(x[k], y[k]) == 0;
        CHECK(some_zero);
      }
  }

  TEST_CASE("gamma window and simulation") {
    auto rep = build_gamma_window(parse_tm(kLoop), 3);
    CHECK(rep.barred_free);
    CHECK(rep.k_is_meet);
    CHECK(rep.sigma > 0);
    auto sim = window_simulation(parse_tm(kLoop), 6, 10, -5);
    CHECK(sim.steps == 10);
    CHECK(sim.matched == 10);
  }
}

// ---------------------------------------------------------------- formulas

TEST_SUITE("formulas") {
  TEST_CASE("e_i") {
    auto A = aprime();
    CHECK(e_i(*A, 1, {APrime::ONE}, APrime::C) == APrime::C);
    CHECK(e_i(*A, 1, {APrime::H}, APrime::C) == 0);
    CHECK(e_i(*A, 2, {APrime::C, APrime::bC}, APrime::D) == APrime::D);
    CHECK_THROWS(e_i(*A, 3, {APrime::C}, APrime::D));
  }

  TEST_CASE("M_i membership and Jonsson terms") {
    auto A = aprime();
    auto onec = generated_subalgebra(A, {APrime::ONE, APrime::C}).alg;
    auto w = in_class_Mi(*onec, 1);
    REQUIRE(w);
    CHECK(onec->label((*w)[0]) == "1");
    CHECK(jonsson_check(*onec, *w, 1).ok);
    // S_1(1,x,x,x) = x everywhere, H included
    auto wa = in_class_Mi(*A, 1);
    REQUIRE(wa);
    CHECK(A->label((*wa)[0]) == "1");
    CHECK(e_i(*A, 1, {APrime::ONE}, APrime::H) == APrime::H);
    CHECK_FALSE(in_class_Mi(*build_small_si(SmallKind::W, parse_tm(kHalt)), 1));
    CHECK(in_class_Mi(*trivial(), 1));
    CHECK(jonsson_check(*trivial(), {0}, 1).ok);
    auto bad = jonsson_check(*onec, {el(*onec, "C")}, 1);
    CHECK_FALSE(bad.ok);
    CHECK_FALSE(bad.failed.empty());
  }

  TEST_CASE("evaluator") {
    auto two = build_small_si(SmallKind::TwoElt, parse_tm(kHalt));
    Library lib(two);
    auto eq = [](int a, int b) {
      auto f = std::make_shared<Formula>();
      f->kind = Formula::Kind::Eq;
      f->terms = {Term::v(a), Term::v(b)};
      return f;
    };
    lib.add(Definition{"refl", 1, {"x"}, eq(0, 0)});
    auto conj = std::make_shared<Formula>();
    conj->kind = Formula::Kind::And;
    conj->subs = {eq(2, 0), eq(2, 1)};
    auto ex = std::make_shared<Formula>();
    ex->kind = Formula::Kind::Exists;
    ex->vars = {2};
    ex->subs = {conj};
    lib.add(Definition{"both", 2, {"a", "b", "t"}, ex});
    CHECK(eval_formula(lib, "refl", {{"x", 1}}));
    CHECK_FALSE(eval_formula(lib, "both", {{"a", 0}, {"b", 1}}));
    CHECK(eval_formula(lib, "both", {{"a", 1}, {"b", 1}}));
    CHECK_THROWS(eval_formula(lib, "refl", {}));
  }

  TEST_CASE("library shape") {
    auto W = build_small_si(SmallKind::W, parse_tm(kHalt));
    LibraryOptions lo;
    lo.sentences = false;
    Library lib = build_library(W, lo);
    for (auto n : {"psi_S", "psi_J", "psi_Jp", "psi_JpJ", "psi_JS", "psi_JpS", "psi_JpJS", "psi_1", "psi_2",
                   "psi_3", "psi_4", "psi", "Gamma_1", "Gamma_T", "Gamma_I", "Gamma", "Gamma_star"})
      CHECK_MESSAGE(lib.find(n) >= 0, n);
    const std::string psi1 = lib.sexpr(lib.find("psi_1"));
    for (auto n : {"psi_S", "psi_J", "psi_Jp", "psi_JpJ", "psi_JS", "psi_JpS", "psi_JpJS"})
      CHECK_MESSAGE(psi1.find(n) != std::string::npos, n);
    const std::string psi2 = lib.sexpr(lib.find("psi_2"));
    CHECK(psi2.find("psi_1") != std::string::npos);
    for (auto n : {"psi_2", "psi_3", "psi_4"}) CHECK(lib.sexpr(lib.find("psi")).find(n) != std::string::npos);
    for (auto n : {"Gamma_1", "Gamma_T", "Gamma_I"})
      CHECK(lib.sexpr(lib.find("Gamma")).find(n) != std::string::npos);
  }

  TEST_CASE("psi members are sound and psi_1 covers them") {
    auto tm = parse_tm(kHalt);
    LibraryOptions lo;
    lo.sentences = false;
    const char* members[] = {"psi_S", "psi_J", "psi_Jp", "psi_JpJ", "psi_JS", "psi_JpS", "psi_JpJS"};
    for (AlgPtr A : {AlgPtr(build_small_si(SmallKind::W, tm)), AlgPtr(build_sequential(2, sig())),
                     AlgPtr(build_small_si(SmallKind::ThreeElt, tm))}) {
      Library lib = build_library(A, lo);
      FormulaEvaluator ev(lib);
      const int m = A->size();
      for (Elem c = 0; c < m; ++c)
        for (Elem d = 0; d < m; ++d)
          for (Elem r = 0; r < m; ++r)
            for (Elem s = 0; s < m; ++s) {
              bool any = false;
              for (auto n : members) {
                const bool v = ev.call(n, {r, s, c, d});
                any = any || v;
                if (v) CHECK_MESSAGE(ev.cg(c, d).same(r, s), n);
              }
              if (any) CHECK(ev.call("psi_1", {r, s, c, d}));
            }
    }
  }

  TEST_CASE("Pi_psi") {
    auto two = build_small_si(SmallKind::TwoElt, parse_tm(kHalt));
    LibraryOptions lo;
    lo.sentences = false;
    Library lib = build_library(two, lo);
    FormulaEvaluator ev(lib);
    const int psi = lib.find("psi");
    CHECK(pi_psi_semantic(ev, psi, el(*two, "C"), 0).ok);
    for (Elem c = 0; c < two->size(); ++c) CHECK(pi_psi_semantic(ev, psi, c, c).ok);
  }

  TEST_CASE("Jonsson witness") {
    auto onec = generated_subalgebra(aprime(), {APrime::ONE, APrime::C}).alg;
    const Elem C = el(*onec, "C");
    auto w = dpsc_witness_jonsson(onec, C, 0);
    CHECK(w.c != w.d);
    CHECK(principal_congruence(*onec, C, 0).same(w.c, w.d));
    CHECK_THROWS(dpsc_witness_jonsson(onec, C, C));
    auto P = direct_product(onec, onec);
    P->brute_limit = 100'000'000;  // 36^5 tuples for S2
    const Elem a = P->element("(C,1)"), b = P->element("(0,1)");
    auto wp = dpsc_witness_jonsson(P, a, b);
    CHECK(wp.c != wp.d);
    CHECK(principal_congruence(*P, a, b).same(wp.c, wp.d));
    const std::string lc = P->label(wp.c), ld = P->label(wp.d);
    CHECK(lc.substr(lc.find(',')) == ld.substr(ld.find(',')));
  }

  TEST_CASE("product terms") {
    auto tm = parse_tm(kHalt);
    auto p3 = compute_product_terms_P({build_sequential(3, sig())});
    CHECK(p3.N == 4);
    CHECK(compute_product_terms_P({build_small_si(SmallKind::TwoElt, tm)}).N == 2);
    CHECK_THROWS_AS(compute_product_terms_P({}), std::invalid_argument);
  }

  TEST_CASE("machine terms") {
    auto tm = parse_tm(kWalker);
    auto none = compute_machine_terms_ST(tm, {});
    CHECK(none.S.size() == 1);
    CHECK(none.T.size() == 1);
    CHECK(none.S[0].steps.empty());
    auto res = theta_phi_quotient(parse_machine_spec(tm, "N 0..3\nP 1@0:1111\n"));
    auto mt = compute_machine_terms_ST(tm, {&res});
    CHECK(mt.T.front().steps.empty());
    CHECK(mt.S.size() > 1);
  }

  TEST_CASE("DPSC on small algebras") {
    auto tm = parse_tm(kHalt);
    std::vector<AlgPtr> cat = {build_small_si(SmallKind::TwoElt, tm), build_small_si(SmallKind::ThreeElt, tm),
                               build_small_si(SmallKind::W, tm), build_sequential(2, sig()),
                               build_sequential(3, sig())};
    auto opt = default_library_options(cat);
    opt.sentences = false;
    for (AlgPtr A : {cat[0], cat[2], AlgPtr(trivial()),
                     AlgPtr(generated_subalgebra(aprime(), {APrime::ONE, APrime::C}).alg)}) {
      Library lib = build_library(A, opt);
      FormulaEvaluator ev(lib);
      auto rep = dpsc_check(ev, lib.find("Gamma_star"), lib.find("psi"));
      CHECK(rep.ok);
      CHECK(rep.witnesses.size() == static_cast<std::size_t>(A->size() * (A->size() - 1)));
    }
  }
}

// ---------------------------------------------------------------- chains

namespace {

struct ChainFixture {
  AlgPtr alg;
  Elem c = 0, d = 0;
  MaltsevChain chain;
  std::string type;
};

ChainFixture load_fixture(const std::string& name) {
  auto j = nlohmann::json::parse(read_file(data_path(name)));
  ChainFixture f;
  f.alg = algebra_from_json(j["algebra"]);
  const FiniteAlgebra& B = *f.alg;
  f.c = B.element(j["c"].get<std::string>());
  f.d = B.element(j["d"].get<std::string>());
  for (auto& e : j["elems"]) f.chain.elems.push_back(B.element(e.get<std::string>()));
  for (auto& l : j["links"]) {
    ChainLink link;
    link.forward = l["forward"].get<bool>();
    for (auto& s : l["steps"]) {
      FundamentalTranslation t;
      t.op = B.op_index(s["op"].get<std::string>());
      t.pos = s["pos"].get<int>();
      for (auto& c : s["consts"]) t.consts.push_back(B.element(c.get<std::string>()));
      link.poly.steps.push_back(t);
    }
    f.chain.links.push_back(link);
  }
  f.type = j["type"].get<std::string>();
  return f;
}

Library chain_library(const AlgPtr& A) {
  LibraryOptions lo;
  lo.sentences = false;
  return build_library(A, lo);
}

}  // namespace

TEST_SUITE("chains") {
  TEST_CASE("find_maltsev_chain") {
    auto S3 = build_sequential(3, sig());
    const Elem b1 = el(*S3, "b1"), b2 = el(*S3, "b2");
    auto none = find_maltsev_chain(*S3, b2, 0, b1, b1, 2, 3);
    REQUIRE(none);
    CHECK(none->empty());
    auto same = find_maltsev_chain(*S3, b2, 0, b2, 0, 2, 3);
    REQUIRE(same);
    REQUIRE(same->links.size() == 1);
    CHECK(same->links[0].poly.is_identity());
    auto one = find_maltsev_chain(*S3, b2, 0, b1, 0, 2, 3);
    REQUIRE(one);
    REQUIRE(one->links.size() == 1);
    CHECK(verify_chain(*S3, *one, b2, 0));
    CHECK(one->links[0].poly.apply(*S3, b2) == b1);
    CHECK(one->links[0].poly.apply(*S3, 0) == 0);
    // (b2,0) is not in Cg(b1,0)
    CHECK_FALSE(find_maltsev_chain(*S3, b1, 0, b2, 0, 3, 3).has_value());
  }

  TEST_CASE("make_decreasing") {
    auto S3 = build_sequential(3, sig());
    const Elem b1 = el(*S3, "b1"), b2 = el(*S3, "b2");
    auto ch = find_maltsev_chain(*S3, b2, 0, b1, 0, 2, 3);
    REQUIRE(ch);
    auto dp = make_decreasing(*S3, *ch, b2, 0);
    CHECK(dp.t == 0);
    CHECK(dp.down.elems == ch->elems);
    CHECK(dp.up.empty());
    CHECK(is_decreasing(*S3, dp.down));

    // 0 up to b1 through a backward link
    MaltsevChain climb;
    climb.elems = {0, b1};
    climb.links = {ch->links[0]};
    climb.links[0].forward = false;
    REQUIRE(verify_chain(*S3, climb, b2, 0));
    auto dc = make_decreasing(*S3, climb, b2, 0);
    CHECK(dc.t == 0);
    CHECK(dc.down.empty());
    CHECK(dc.up.elems == std::vector<Elem>{b1, 0});
    CHECK(is_decreasing(*S3, dc.up));

    MaltsevChain single;
    single.elems = {b1};
    auto ds = make_decreasing(*S3, single, b2, 0);
    CHECK(ds.t == b1);
    CHECK(ds.down.empty());
    CHECK(ds.up.empty());
  }

  TEST_CASE("check_no_chain_needed") {
    auto S3 = build_sequential(3, sig());
    const Elem b1 = el(*S3, "b1"), b2 = el(*S3, "b2");
    UnaryPolynomial f1{{FundamentalTranslation{S3->op_index("prod"), 1, {el(*S3, "a1")}}}};
    UnaryPolynomial f2{{FundamentalTranslation{S3->op_index("meet"), 0, {b1}}}};
    CHECK(check_no_chain_needed(*S3, b2, 0, f1, f2));
    CHECK(check_no_chain_needed(*S3, b2, b2, f1, f1));
    CHECK_THROWS_AS(check_no_chain_needed(*S3, b2, 0, f1, f1), std::invalid_argument);
  }

  TEST_CASE("J chain fixture") {
    auto fx = load_fixture("chain_J.json");
    const FiniteAlgebra& B = *fx.alg;
    REQUIRE(verify_chain(B, fx.chain, fx.c, fx.d));
    REQUIRE(fx.chain.links.size() == 1);
    const Elem r = fx.chain.elems.front(), s = fx.chain.elems.back();
    auto shape = head_normalize(B, fx.chain.links[0].poly, fx.c, fx.d);
    CHECK(shape.head == Head::J);
    CHECK(shape.top == r);
    CHECK(shape.bottom == s);
    for (auto& l : rewrite_link(B, shape, fx.c, fx.d)) CHECK(verify_link(B, l, fx.c, fx.d));

    Library lib = chain_library(fx.alg);
    FormulaEvaluator ev(lib);
    auto res = reduce_chain(ev, fx.chain, fx.c, fx.d);
    REQUIRE(res.ok);
    CHECK(res.type == ChainType::J);
    CHECK(to_string(res.type) == fx.type);
    CHECK(res.psi_ok);
    CHECK(ev.call(psi_name(res.type), {r, s, fx.c, fx.d}));
    REQUIRE(res.links.size() == 1);
    CHECK(verify_link(B, res.links[0], fx.c, fx.d));

    auto once = collapse_J_run(B, res.links, fx.c, fx.d);
    CHECK(once.top == r);
    CHECK(once.bottom == s);
    CHECK(verify_link(B, once, fx.c, fx.d));
    auto twice = collapse_J_run(B, {once}, fx.c, fx.d);
    CHECK(twice.top == once.top);
    CHECK(twice.bottom == once.bottom);
    CHECK(twice.q == once.q);

    // a J' link with equal ends after the J link drops out
    const LinkForm& j = res.links[0];
    LinkForm flat;
    flat.head = Head::Jp;
    flat.top = flat.bottom = flat.p = flat.q = flat.a_top = flat.a_bottom = j.bottom;
    flat.inner = j.inner;
    auto out = swap_J_Jprime(B, j, flat, fx.c, fx.d);
    REQUIRE(out.size() == 1);
    CHECK(out[0].top == j.top);
    CHECK(out[0].bottom == j.bottom);
  }

  TEST_CASE("J' chain fixture") {
    auto fx = load_fixture("chain_Jp.json");
    const FiniteAlgebra& B = *fx.alg;
    REQUIRE(verify_chain(B, fx.chain, fx.c, fx.d));
    Library lib = chain_library(fx.alg);
    FormulaEvaluator ev(lib);
    auto res = reduce_chain(ev, fx.chain, fx.c, fx.d);
    REQUIRE(res.ok);
    CHECK(res.type == ChainType::Jp);
    CHECK(to_string(res.type) == fx.type);
    CHECK(res.psi_ok);
    REQUIRE(res.links.size() == 1);
    const LinkForm& jp = res.links[0];
    CHECK(jp.head == Head::Jp);
    CHECK(verify_link(B, jp, fx.c, fx.d));

    auto kept = collapse_Jprime_run(B, {jp}, fx.c, fx.d);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].top == jp.top);
    CHECK(kept[0].bottom == jp.bottom);

    // a J link with equal ends in front of the J' link drops out
    LinkForm flat;
    flat.head = Head::J;
    flat.top = flat.bottom = flat.p = flat.q = flat.a_top = flat.a_bottom = jp.top;
    flat.inner = jp.inner;
    auto front = swap_J_Jprime(B, flat, jp, fx.c, fx.d);
    REQUIRE(front.size() == 1);
    CHECK(front[0].head == Head::Jp);
    CHECK(front[0].bottom == jp.bottom);
    CHECK_THROWS_AS(swap_J_Jprime(B, jp, jp, fx.c, fx.d), ChainError);
  }
}

// ---------------------------------------------------------------- io

TEST_SUITE("io") {
  TEST_CASE("round trips") {
    auto tm = parse_tm(kHalt);
    auto A = aprime();
    CHECK(same_tables(*A, *algebra_from_json(algebra_to_json(*A)), 3));
    for (AlgPtr B : {AlgPtr(build_sequential(3, sig())), AlgPtr(build_small_si(SmallKind::W, tm)),
                     AlgPtr(flat3())})
      CHECK(same_tables(*B, *algebra_from_json(algebra_to_json(*B)), 5));
    auto fx = load_fixture("chain_J.json");
    CHECK(same_tables(*fx.alg, *algebra_from_json(algebra_to_json(*fx.alg)), 3));
  }

  TEST_CASE("bad documents") {
    CHECK_THROWS(algebra_from_json(nlohmann::json::parse(R"({"labels":["0"],"ops":[{"name":"f"}]})")));
    CHECK_THROWS_AS(read_file("/nonexistent/algebra.json"), FormatError);
  }
}

// ---------------------------------------------------------------- suite

TEST_SUITE("suite") {
  TEST_CASE("reports are reproducible" * doctest::skip(std::getenv("DPSC_SKIP_SLOW") != nullptr)) {
    SuiteOptions opt;
    auto tm = parse_tm(kHalt);
    const auto a = run_suite(tm, opt).text();
    const auto b = run_suite(tm, opt).text();
    CHECK(a == b);
    CHECK(a.find("SUMMARY") != std::string::npos);
  }
}
