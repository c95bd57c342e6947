#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dpsc {

using Elem = int;

using Evaluator = std::function<Elem(const Elem*)>;
using TupleSink = std::function<void(const Elem*, Elem)>;
// Must report (at least) every argument tuple whose value differs from the
// algebra's base element.  Extra tuples with the base value are dropped.
using Enumerator = std::function<void(const TupleSink&)>;

struct Operation {
  std::string name;
  int arity = 0;
  std::string rule;          // empty for table-backed operations
  std::vector<Elem> table;   // index-major, first argument most significant
  Evaluator eval;
  Enumerator enumerate;
};

// Argument tuples on which an operation leaves the base element, indexed by
// (position, element).
struct SparseOp {
  int arity = 0;
  std::vector<Elem> args;
  std::vector<Elem> out;
  std::vector<std::vector<std::uint32_t>> by_pos;  // [pos * m + e]

  std::size_t count() const { return out.size(); }
  const Elem* tuple(std::size_t i) const { return args.data() + i * arity; }
  const std::vector<std::uint32_t>& at(int pos, Elem e, int m) const { return by_pos[pos * m + e]; }
};

class SizeGuardError : public std::length_error {
 public:
  using std::length_error::length_error;
};

class FiniteAlgebra {
 public:
  explicit FiniteAlgebra(std::vector<std::string> labels);

  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(Elem e) const { return labels_.at(e); }
  std::optional<Elem> find(std::string_view label) const;
  Elem element(std::string_view label) const;  // throws std::out_of_range

  int add_table_op(std::string name, int arity, std::vector<Elem> table);
  int add_rule_op(std::string name, int arity, Evaluator f, std::string rule = {},
                  Enumerator en = {});
  // Fill tables for rule operations of arity <= 3 when m^arity <= limit.
  void materialize(std::size_t limit = 1u << 22);

  int op_count() const { return static_cast<int>(ops_.size()); }
  const Operation& op(int i) const { return ops_.at(i); }
  int op_index(std::string_view name) const;  // -1 if absent
  std::vector<std::pair<std::string, int>> signature() const;

  Elem apply(int op, const Elem* args) const {
    const Operation& o = ops_[op];
    if (!o.table.empty()) {
      std::size_t idx = 0;
      for (int i = 0; i < o.arity; ++i) idx = idx * labels_.size() + args[i];
      return o.table[idx];
    }
    return o.eval(args);
  }
  Elem apply(int op, std::initializer_list<Elem> args) const { return apply(op, std::data(args)); }
  Elem apply(std::string_view name, std::initializer_list<Elem> args) const;

  bool has_zero() const { return zero_op_ >= 0; }
  Elem base() const { return base_; }
  Elem meet(Elem a, Elem b) const;  // via the op named "meet"
  bool leq(Elem a, Elem b) const { return meet(a, b) == a; }

  const SparseOp& sparse(int op) const;
  std::size_t brute_limit = 60'000'000;

  // Optional provenance.
  std::vector<std::vector<Elem>> vectors;           // power algebras: coordinates
  std::shared_ptr<const FiniteAlgebra> factor;      // power algebras: the factor
  std::map<std::string, std::string> meta;
  std::shared_ptr<const void> payload;  // builder-specific data (see aprime_of)

 private:
  struct LazySparse {
    std::once_flag flag;
    SparseOp data;
  };
  void build_sparse(int op, SparseOp& out) const;
  int register_op(Operation o);

  std::vector<std::string> labels_;
  std::map<std::string, Elem, std::less<>> index_;
  std::vector<Operation> ops_;
  std::vector<std::shared_ptr<LazySparse>> sparse_;
  int zero_op_ = -1;
  int meet_op_ = -1;
  Elem base_ = 0;
};

using AlgPtr = std::shared_ptr<const FiniteAlgebra>;

class Partition {
 public:
  explicit Partition(int m = 0);
  int size() const { return static_cast<int>(parent_.size()); }
  int find(int x) const;
  bool unite(int a, int b);
  bool same(int a, int b) const { return find(a) == find(b); }
  std::vector<int> canonical() const;  // min element of each block
  std::vector<std::vector<int>> blocks() const;
  int block_count() const;
  bool is_identity() const { return block_count() == size(); }
  bool is_full() const { return block_count() <= 1; }
  bool leq(const Partition& o) const;
  static Partition meet(const Partition& a, const Partition& b);
  static Partition join(const Partition& a, const Partition& b);
  static Partition from_canonical(const std::vector<int>& canon);
  bool operator==(const Partition& o) const { return canonical() == o.canonical(); }
  std::string str(const FiniteAlgebra& alg) const;

 private:
  mutable std::vector<int> parent_;
};

struct Violation {
  int op = -1;
  int pos = -1;
  std::vector<Elem> args;  // tuple with u at pos
  Elem u = 0, v = 0;       // related pair
  Elem fu = 0, fv = 0;     // unrelated images
  std::string describe(const FiniteAlgebra& alg) const;
};

class NotCongruenceError : public std::runtime_error {
 public:
  NotCongruenceError(Violation v, const std::string& msg)
      : std::runtime_error(msg), violation(std::move(v)) {}
  Violation violation;
};

// Congruences.
Partition congruence_generated(const FiniteAlgebra& alg,
                               const std::vector<std::pair<Elem, Elem>>& pairs,
                               Partition start = Partition());
Partition principal_congruence(const FiniteAlgebra& alg, Elem a, Elem b);
std::optional<Violation> check_congruence(const FiniteAlgebra& alg, const Partition& p);
std::vector<Partition> principal_congruences(const FiniteAlgebra& alg, int guard = 64);
std::vector<Partition> congruence_lattice(const FiniteAlgebra& alg, int guard = 64,
                                          std::size_t cap = 200000);
// Congruences with a unique upper cover in the lattice.
std::vector<Partition> completely_meet_irreducibles(const std::vector<Partition>& lattice);
std::optional<Partition> monolith(const FiniteAlgebra& alg, int guard = 64);
bool is_si(const FiniteAlgebra& alg, int guard = 64);
bool is_fsi(const FiniteAlgebra& alg, int guard = 64);

// Subalgebras and quotients.
std::vector<Elem> generate_subuniverse(const FiniteAlgebra& alg, const std::vector<Elem>& gens);

struct Subalgebra {
  std::shared_ptr<FiniteAlgebra> alg;
  std::vector<Elem> elems;  // sub index -> parent element
  std::vector<int> index;   // parent element -> sub index or -1
};
Subalgebra subalgebra(const AlgPtr& parent, std::vector<Elem> elems);
Subalgebra generated_subalgebra(const AlgPtr& parent, const std::vector<Elem>& gens);

struct Quotient {
  std::shared_ptr<FiniteAlgebra> alg;
  std::vector<int> proj;  // parent element -> block index
  Partition theta;
};
Quotient quotient(const AlgPtr& parent, const Partition& theta);
// Congruence of the parent obtained by pulling back a congruence of the quotient.
Partition pullback(const Quotient& q, const Partition& onQuotient);

std::optional<std::vector<Elem>> is_isomorphic(const FiniteAlgebra& a, const FiniteAlgebra& b,
                                               int guard = 64);

// Subalgebra of alg^k generated by gens.  With nowhere_zero the closure is
// restricted to vectors without a base coordinate (and their images).
std::shared_ptr<FiniteAlgebra> power_subalgebra(const AlgPtr& alg, int k,
                                                const std::vector<std::vector<Elem>>& gens,
                                                std::size_t cap = 20000, bool nowhere_zero = false);
// Rebuilds a power algebra over an already closed list of vectors.
std::shared_ptr<FiniteAlgebra> power_from_vectors(const AlgPtr& alg,
                                                  std::vector<std::vector<Elem>> vectors);
std::shared_ptr<FiniteAlgebra> direct_product(const AlgPtr& a, const AlgPtr& b);

// Polynomials built from fundamental translations.
struct FundamentalTranslation {
  int op = -1;
  int pos = 0;
  std::vector<Elem> consts;  // arity - 1 constants
  Elem apply(const FiniteAlgebra& alg, Elem x) const;
  std::string str(const FiniteAlgebra& alg, const std::string& inner = "x") const;
};

struct UnaryPolynomial {
  std::vector<FundamentalTranslation> steps;  // applied first to last
  Elem apply(const FiniteAlgebra& alg, Elem x) const;
  bool is_identity() const { return steps.empty(); }
  std::string str(const FiniteAlgebra& alg) const;
};

}  // namespace dpsc
