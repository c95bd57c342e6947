#include "dpsc/algebra.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace dpsc {

// ---------------------------------------------------------------- algebra

FiniteAlgebra::FiniteAlgebra(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (int i = 0; i < size(); ++i)
    if (!index_.emplace(labels_[i], i).second)
      throw std::invalid_argument("duplicate element label: " + labels_[i]);
}

std::optional<Elem> FiniteAlgebra::find(std::string_view label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Elem FiniteAlgebra::element(std::string_view label) const {
  auto e = find(label);
  if (!e) throw std::out_of_range("unknown element label: " + std::string(label));
  return *e;
}

int FiniteAlgebra::register_op(Operation o) {
  if (op_index(o.name) >= 0) throw std::invalid_argument("duplicate operation: " + o.name);
  if (o.arity < 0) throw std::invalid_argument("negative arity");
  ops_.push_back(std::move(o));
  sparse_.push_back(std::make_shared<LazySparse>());
  int idx = op_count() - 1;
  if (ops_[idx].name == "zero" && ops_[idx].arity == 0) {
    zero_op_ = idx;
    base_ = apply(idx, nullptr);
  }
  if (ops_[idx].name == "meet" && ops_[idx].arity == 2) meet_op_ = idx;
  return idx;
}

int FiniteAlgebra::add_table_op(std::string name, int arity, std::vector<Elem> table) {
  double expect = std::pow(static_cast<double>(size()), arity);
  if (static_cast<double>(table.size()) != expect)
    throw std::invalid_argument("table size mismatch for " + name);
  for (Elem v : table)
    if (v < 0 || v >= size()) throw std::invalid_argument("table value out of range in " + name);
  Operation o;
  o.name = std::move(name);
  o.arity = arity;
  o.table = std::move(table);
  return register_op(std::move(o));
}

int FiniteAlgebra::add_rule_op(std::string name, int arity, Evaluator f, std::string rule,
                               Enumerator en) {
  Operation o;
  o.name = std::move(name);
  o.arity = arity;
  o.eval = std::move(f);
  o.rule = std::move(rule);
  o.enumerate = std::move(en);
  return register_op(std::move(o));
}

void FiniteAlgebra::materialize(std::size_t limit) {
  for (auto& o : ops_) {
    if (!o.table.empty() || o.arity > 3 || o.arity == 0) continue;
    double total = std::pow(static_cast<double>(size()), o.arity);
    if (total > static_cast<double>(limit)) continue;
    std::vector<Elem> t(static_cast<std::size_t>(total));
    std::vector<Elem> a(o.arity, 0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = o.eval(a.data());
      for (int p = o.arity - 1; p >= 0; --p) {
        if (++a[p] < size()) break;
        a[p] = 0;
      }
    }
    o.table = std::move(t);
  }
}

int FiniteAlgebra::op_index(std::string_view name) const {
  for (int i = 0; i < op_count(); ++i)
    if (ops_[i].name == name) return i;
  return -1;
}

std::vector<std::pair<std::string, int>> FiniteAlgebra::signature() const {
  std::vector<std::pair<std::string, int>> s;
  for (auto& o : ops_) s.emplace_back(o.name, o.arity);
  return s;
}

Elem FiniteAlgebra::apply(std::string_view name, std::initializer_list<Elem> args) const {
  int i = op_index(name);
  if (i < 0) throw std::out_of_range("unknown operation: " + std::string(name));
  if (static_cast<int>(args.size()) != ops_[i].arity)
    throw std::invalid_argument("arity mismatch for " + std::string(name));
  return apply(i, std::data(args));
}

Elem FiniteAlgebra::meet(Elem a, Elem b) const {
  if (meet_op_ < 0) throw std::logic_error("algebra has no meet operation");
  Elem args[2] = {a, b};
  return apply(meet_op_, args);
}

const SparseOp& FiniteAlgebra::sparse(int op) const {
  auto& lz = *sparse_.at(op);
  std::call_once(lz.flag, [&] { build_sparse(op, lz.data); });
  return lz.data;
}

void FiniteAlgebra::build_sparse(int opi, SparseOp& sp) const {
  const Operation& o = ops_[opi];
  const int m = size();
  const int k = o.arity;
  sp.arity = k;
  auto sink = [&](const Elem* a, Elem v) {
    if (v == base_) return;
    sp.args.insert(sp.args.end(), a, a + k);
    sp.out.push_back(v);
  };
  if (k == 0) {
    sink(nullptr, apply(opi, nullptr));
  } else if (!o.table.empty()) {
    std::vector<Elem> a(k, 0);
    for (std::size_t i = 0; i < o.table.size(); ++i) {
      sink(a.data(), o.table[i]);
      for (int p = k - 1; p >= 0; --p) {
        if (++a[p] < m) break;
        a[p] = 0;
      }
    }
  } else if (o.enumerate) {
    o.enumerate(sink);
  } else {
    double total = std::pow(static_cast<double>(m), k);
    if (total > static_cast<double>(brute_limit))
      throw SizeGuardError("operation " + o.name + " too large to enumerate");
    std::vector<Elem> a(k, 0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(total); ++i) {
      sink(a.data(), o.eval(a.data()));
      for (int p = k - 1; p >= 0; --p) {
        if (++a[p] < m) break;
        a[p] = 0;
      }
    }
  }
  sp.by_pos.assign(static_cast<std::size_t>(k) * m, {});
  for (std::size_t i = 0; i < sp.count(); ++i)
    for (int p = 0; p < k; ++p) sp.by_pos[p * m + sp.args[i * k + p]].push_back(static_cast<std::uint32_t>(i));
}

// ---------------------------------------------------------------- partition

Partition::Partition(int m) : parent_(m) { std::iota(parent_.begin(), parent_.end(), 0); }

int Partition::find(int x) const {
  int r = x;
  while (parent_[r] != r) r = parent_[r];
  while (parent_[x] != r) {
    int n = parent_[x];
    parent_[x] = r;
    x = n;
  }
  return r;
}

bool Partition::unite(int a, int b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (a < b) parent_[b] = a;
  else parent_[a] = b;
  return true;
}

std::vector<int> Partition::canonical() const {
  std::vector<int> c(size());
  for (int i = 0; i < size(); ++i) c[i] = find(i);  // roots are block minima
  return c;
}

std::vector<std::vector<int>> Partition::blocks() const {
  std::vector<std::vector<int>> out;
  std::vector<int> slot(size(), -1);
  for (int i = 0; i < size(); ++i) {
    int r = find(i);
    if (slot[r] < 0) {
      slot[r] = static_cast<int>(out.size());
      out.emplace_back();
    }
    out[slot[r]].push_back(i);
  }
  return out;
}

int Partition::block_count() const {
  int n = 0;
  for (int i = 0; i < size(); ++i) n += find(i) == i;
  return n;
}

bool Partition::leq(const Partition& o) const {
  for (int i = 0; i < size(); ++i)
    if (!o.same(i, find(i))) return false;
  return true;
}

Partition Partition::meet(const Partition& a, const Partition& b) {
  Partition p(a.size());
  std::map<std::pair<int, int>, int> first;
  for (int i = 0; i < a.size(); ++i) {
    auto [it, fresh] = first.emplace(std::make_pair(a.find(i), b.find(i)), i);
    if (!fresh) p.unite(it->second, i);
  }
  return p;
}

Partition Partition::join(const Partition& a, const Partition& b) {
  Partition p = a;
  for (int i = 0; i < b.size(); ++i) p.unite(i, b.find(i));
  return p;
}

Partition Partition::from_canonical(const std::vector<int>& canon) {
  Partition p(static_cast<int>(canon.size()));
  for (int i = 0; i < p.size(); ++i) p.unite(i, canon[i]);
  return p;
}

std::string Partition::str(const FiniteAlgebra& alg) const {
  std::ostringstream out;
  bool first = true;
  for (auto& b : blocks()) {
    if (b.size() < 2) continue;
    out << (first ? "" : " ") << '{';
    for (std::size_t i = 0; i < b.size(); ++i) out << (i ? "," : "") << alg.label(b[i]);
    out << '}';
    first = false;
  }
  return first ? "identity" : out.str();
}

std::string Violation::describe(const FiniteAlgebra& alg) const {
  std::ostringstream out;
  out << alg.op(op).name << '(';
  for (std::size_t i = 0; i < args.size(); ++i)
    out << (i ? "," : "") << (static_cast<int>(i) == pos ? "_" : alg.label(args[i]));
  out << ") maps related " << alg.label(u) << "~" << alg.label(v) << " to unrelated "
      << alg.label(fu) << "," << alg.label(fv);
  return out.str();
}

// ---------------------------------------------------------------- congruences

namespace {

// Visit every fundamental translation image pair (t(u), t(v)) where at least
// one side leaves the base element.
template <class Visit>
bool for_translation_images(const FiniteAlgebra& alg, Elem u, Elem v, std::vector<Elem>& buf,
                            Visit&& visit) {
  const int m = alg.size();
  for (int op = 0; op < alg.op_count(); ++op) {
    const int k = alg.op(op).arity;
    if (k == 0) continue;
    const SparseOp& sp = alg.sparse(op);
    for (int pos = 0; pos < k; ++pos)
      for (int side = 0; side < 2; ++side) {
        Elem src = side ? v : u, other = side ? u : v;
        for (std::uint32_t id : sp.at(pos, src, m)) {
          const Elem* t = sp.tuple(id);
          buf.assign(t, t + k);
          buf[pos] = other;
          Elem f1 = sp.out[id];
          Elem f2 = alg.apply(op, buf.data());
          if (!visit(op, pos, t, f1, f2)) return false;
        }
      }
  }
  return true;
}

}  // namespace

Partition congruence_generated(const FiniteAlgebra& alg,
                               const std::vector<std::pair<Elem, Elem>>& pairs, Partition start) {
  Partition p = start.size() == alg.size() ? std::move(start) : Partition(alg.size());
  std::vector<std::pair<Elem, Elem>> work;
  for (auto [a, b] : pairs)
    if (p.unite(a, b)) work.emplace_back(a, b);
  std::vector<Elem> buf;
  while (!work.empty()) {
    auto [u, v] = work.back();
    work.pop_back();
    for_translation_images(alg, u, v, buf, [&](int, int, const Elem*, Elem f1, Elem f2) {
      if (p.unite(f1, f2)) work.emplace_back(f1, f2);
      return true;
    });
  }
  return p;
}

Partition principal_congruence(const FiniteAlgebra& alg, Elem a, Elem b) {
  return congruence_generated(alg, {{a, b}});
}

std::optional<Violation> check_congruence(const FiniteAlgebra& alg, const Partition& p) {
  if (p.size() != alg.size()) throw std::invalid_argument("partition size mismatch");
  std::vector<Elem> buf;
  std::optional<Violation> bad;
  for (int u = 0; u < alg.size() && !bad; ++u) {
    Elem r = p.find(u);
    if (r == u) continue;
    for_translation_images(alg, u, r, buf, [&](int op, int pos, const Elem* t, Elem f1, Elem f2) {
      if (p.same(f1, f2)) return true;
      Violation v;
      v.op = op;
      v.pos = pos;
      v.args.assign(t, t + alg.op(op).arity);
      v.u = u;
      v.v = r;
      v.fu = f1;
      v.fv = f2;
      bad = v;
      return false;
    });
  }
  return bad;
}

static void guard_size(const FiniteAlgebra& alg, int guard) {
  if (alg.size() > guard)
    throw SizeGuardError("algebra has " + std::to_string(alg.size()) + " elements, guard is " +
                         std::to_string(guard));
}

std::vector<Partition> principal_congruences(const FiniteAlgebra& alg, int guard) {
  guard_size(alg, guard);
  std::vector<Partition> out;
  std::set<std::vector<int>> seen;
  for (int a = 0; a < alg.size(); ++a)
    for (int b = a + 1; b < alg.size(); ++b) {
      Partition p = principal_congruence(alg, a, b);
      if (seen.insert(p.canonical()).second) out.push_back(std::move(p));
    }
  return out;
}

std::vector<Partition> congruence_lattice(const FiniteAlgebra& alg, int guard, std::size_t cap) {
  auto principals = principal_congruences(alg, guard);
  std::set<std::vector<int>> seen;
  std::vector<Partition> all;
  Partition id(alg.size());
  seen.insert(id.canonical());
  all.push_back(id);
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (auto& pr : principals) {
      Partition j = Partition::join(all[i], pr);
      if (seen.insert(j.canonical()).second) {
        all.push_back(std::move(j));
        if (all.size() > cap) throw SizeGuardError("congruence lattice exceeds cap");
      }
    }
  }
  std::sort(all.begin(), all.end(), [](const Partition& a, const Partition& b) {
    int ca = a.block_count(), cb = b.block_count();
    if (ca != cb) return ca > cb;
    return a.canonical() < b.canonical();
  });
  return all;
}

std::vector<Partition> completely_meet_irreducibles(const std::vector<Partition>& lattice) {
  std::vector<Partition> out;
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    // upper covers: minimal elements strictly above lattice[i]
    std::vector<std::size_t> above;
    for (std::size_t j = 0; j < lattice.size(); ++j)
      if (j != i && lattice[i].leq(lattice[j]) && !(lattice[i] == lattice[j])) above.push_back(j);
    int covers = 0;
    for (std::size_t j : above) {
      bool minimal = true;
      for (std::size_t k : above)
        if (k != j && lattice[k].leq(lattice[j]) && !(lattice[k] == lattice[j])) {
          minimal = false;
          break;
        }
      covers += minimal;
    }
    if (covers == 1) out.push_back(lattice[i]);
  }
  return out;
}

std::optional<Partition> monolith(const FiniteAlgebra& alg, int guard) {
  if (alg.size() < 2) return std::nullopt;
  auto principals = principal_congruences(alg, guard);
  Partition m = principals.front();
  for (auto& p : principals) {
    m = Partition::meet(m, p);
    if (m.is_identity()) return std::nullopt;
  }
  return m;
}

bool is_si(const FiniteAlgebra& alg, int guard) { return monolith(alg, guard).has_value(); }

bool is_fsi(const FiniteAlgebra& alg, int guard) {
  if (alg.size() < 2) return true;
  auto principals = principal_congruences(alg, guard);
  std::vector<Partition> minimal;
  for (auto& p : principals) {
    bool min = true;
    for (auto& q : principals)
      if (q.leq(p) && !(q == p)) {
        min = false;
        break;
      }
    if (min) minimal.push_back(p);
  }
  for (std::size_t i = 0; i < minimal.size(); ++i)
    for (std::size_t j = i + 1; j < minimal.size(); ++j)
      if (Partition::meet(minimal[i], minimal[j]).is_identity()) return false;
  return true;
}

// ---------------------------------------------------------------- subuniverses

std::vector<Elem> generate_subuniverse(const FiniteAlgebra& alg, const std::vector<Elem>& gens) {
  const int m = alg.size();
  std::vector<char> in(m, 0);
  std::vector<Elem> work;
  auto add = [&](Elem e) {
    if (!in[e]) {
      in[e] = 1;
      work.push_back(e);
    }
  };
  for (Elem g : gens) {
    if (g < 0 || g >= m) throw std::out_of_range("generator out of range");
    add(g);
  }
  for (int op = 0; op < alg.op_count(); ++op)
    if (alg.op(op).arity == 0) add(alg.apply(op, nullptr));
  std::vector<std::size_t> within;  // per op, sparse tuples fully inside, for the base check
  while (!work.empty()) {
    Elem e = work.back();
    work.pop_back();
    for (int op = 0; op < alg.op_count(); ++op) {
      const int k = alg.op(op).arity;
      if (k == 0) continue;
      const SparseOp& sp = alg.sparse(op);
      for (int pos = 0; pos < k; ++pos)
        for (std::uint32_t id : sp.at(pos, e, m)) {
          const Elem* t = sp.tuple(id);
          bool ok = true;
          for (int i = 0; i < k && ok; ++i) ok = in[t[i]];
          if (ok) add(sp.out[id]);
        }
    }
  }
  // The base element arises from any tuple outside the sparse lists.
  bool any = std::any_of(in.begin(), in.end(), [](char c) { return c; });
  if (any && !in[alg.base()]) {
    std::size_t n = std::count(in.begin(), in.end(), 1);
    for (int op = 0; op < alg.op_count() && !in[alg.base()]; ++op) {
      const int k = alg.op(op).arity;
      if (k == 0) continue;
      const SparseOp& sp = alg.sparse(op);
      std::size_t inside = 0;
      for (std::size_t id = 0; id < sp.count(); ++id) {
        const Elem* t = sp.tuple(id);
        bool ok = true;
        for (int i = 0; i < k && ok; ++i) ok = in[t[i]];
        inside += ok;
      }
      if (static_cast<double>(inside) < std::pow(static_cast<double>(n), k)) {
        in[alg.base()] = 1;
        // the base may unlock more elements
        std::vector<Elem> cur;
        for (int i = 0; i < m; ++i)
          if (in[i]) cur.push_back(i);
        return generate_subuniverse(alg, cur);
      }
    }
  }
  std::vector<Elem> out;
  for (int i = 0; i < m; ++i)
    if (in[i]) out.push_back(i);
  return out;
}

Subalgebra subalgebra(const AlgPtr& parent, std::vector<Elem> elems) {
  std::sort(elems.begin(), elems.end());
  elems.erase(std::unique(elems.begin(), elems.end()), elems.end());
  Subalgebra s;
  s.elems = elems;
  s.index.assign(parent->size(), -1);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < elems.size(); ++i) {
    s.index[elems[i]] = static_cast<int>(i);
    labels.push_back(parent->label(elems[i]));
  }
  auto sub = std::make_shared<FiniteAlgebra>(std::move(labels));
  auto elemsp = std::make_shared<std::vector<Elem>>(s.elems);
  auto indexp = std::make_shared<std::vector<int>>(s.index);
  const double subm = static_cast<double>(elems.size());
  for (int op = 0; op < parent->op_count(); ++op) {
    const int k = parent->op(op).arity;
    Evaluator f = [parent, elemsp, indexp, op, k](const Elem* a) {
      Elem buf[16];
      for (int i = 0; i < k; ++i) buf[i] = (*elemsp)[a[i]];
      int r = (*indexp)[parent->apply(op, buf)];
      if (r < 0) throw std::logic_error("subset is not closed under " + parent->op(op).name);
      return r;
    };
    Enumerator en;
    if (k > 0 && std::pow(subm, k) > 4e5) {
      en = [parent, elemsp, indexp, op, k](const TupleSink& sink) {
        const SparseOp& sp = parent->sparse(op);
        Elem buf[16];
        for (std::size_t id = 0; id < sp.count(); ++id) {
          const Elem* t = sp.tuple(id);
          bool ok = true;
          for (int i = 0; i < k && ok; ++i) ok = (buf[i] = (*indexp)[t[i]]) >= 0;
          if (ok) sink(buf, (*indexp)[sp.out[id]]);
        }
      };
    }
    sub->add_rule_op(parent->op(op).name, k, std::move(f), {}, std::move(en));
  }
  sub->materialize();
  sub->meta["parent_size"] = std::to_string(parent->size());
  s.alg = sub;
  return s;
}

Subalgebra generated_subalgebra(const AlgPtr& parent, const std::vector<Elem>& gens) {
  return subalgebra(parent, generate_subuniverse(*parent, gens));
}

Quotient quotient(const AlgPtr& parent, const Partition& theta) {
  if (auto v = check_congruence(*parent, theta))
    throw NotCongruenceError(*v, "not a congruence: " + v->describe(*parent));
  Quotient q;
  q.theta = theta;
  auto blocks = theta.blocks();
  q.proj.assign(parent->size(), -1);
  std::vector<std::string> labels;
  auto reps = std::make_shared<std::vector<Elem>>();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (Elem e : blocks[b]) q.proj[e] = static_cast<int>(b);
    reps->push_back(blocks[b].front());
    if (blocks[b].size() == 1) {
      labels.push_back(parent->label(blocks[b].front()));
    } else {
      std::string l = "[";
      for (std::size_t i = 0; i < blocks[b].size(); ++i)
        l += (i ? "|" : "") + parent->label(blocks[b][i]);
      labels.push_back(l + "]");
    }
  }
  auto projp = std::make_shared<std::vector<int>>(q.proj);
  auto alg = std::make_shared<FiniteAlgebra>(std::move(labels));
  const double qm = static_cast<double>(blocks.size());
  for (int op = 0; op < parent->op_count(); ++op) {
    const int k = parent->op(op).arity;
    Evaluator f = [parent, reps, projp, op, k](const Elem* a) {
      Elem buf[16];
      for (int i = 0; i < k; ++i) buf[i] = (*reps)[a[i]];
      return (*projp)[parent->apply(op, buf)];
    };
    Enumerator en;
    if (k > 0 && std::pow(qm, k) > 4e5) {
      en = [parent, reps, projp, op, k](const TupleSink& sink) {
        const SparseOp& sp = parent->sparse(op);
        Elem buf[16];
        for (std::size_t id = 0; id < sp.count(); ++id) {
          const Elem* t = sp.tuple(id);
          bool ok = true;
          for (int i = 0; i < k && ok; ++i) {
            int b = (*projp)[t[i]];
            ok = (*reps)[b] == t[i];
            buf[i] = b;
          }
          if (ok) sink(buf, (*projp)[sp.out[id]]);
        }
      };
    }
    alg->add_rule_op(parent->op(op).name, k, std::move(f), {}, std::move(en));
  }
  alg->materialize();
  q.alg = alg;
  return q;
}

Partition pullback(const Quotient& q, const Partition& onQuotient) {
  Partition p(static_cast<int>(q.proj.size()));
  std::vector<int> first(onQuotient.size(), -1);
  for (int e = 0; e < p.size(); ++e) {
    int r = onQuotient.find(q.proj[e]);
    if (first[r] < 0) first[r] = e;
    else p.unite(first[r], e);
  }
  return p;
}

// ---------------------------------------------------------------- isomorphism

namespace {

struct IsoSearch {
  const FiniteAlgebra& a;
  const FiniteAlgebra& b;
  std::vector<int> opmap;  // a op -> b op
  std::vector<std::vector<long>> fa, fb;
  std::vector<Elem> order;
  std::vector<Elem> phi, inv;

  std::vector<long> fingerprint(const FiniteAlgebra& alg, const std::vector<int>& ops, Elem e) {
    std::vector<long> f;
    const int m = alg.size();
    for (int op : ops) {
      const SparseOp& sp = alg.sparse(op);
      long outs = 0;
      for (Elem v : sp.out) outs += v == e;
      f.push_back(outs);
      for (int p = 0; p < sp.arity; ++p) f.push_back(static_cast<long>(sp.at(p, e, m).size()));
    }
    f.push_back(e == alg.base() && alg.has_zero());
    return f;
  }

  bool partial_ok(Elem x) {
    // unary and binary operations among assigned elements
    for (int op = 0; op < a.op_count(); ++op) {
      int k = a.op(op).arity;
      if (k == 1) {
        Elem y = a.apply(op, {x});
        if (phi[y] >= 0 && b.apply(opmap[op], {phi[x]}) != phi[y]) return false;
      } else if (k == 2) {
        for (Elem z = 0; z < a.size(); ++z) {
          if (phi[z] < 0) continue;
          Elem y1 = a.apply(op, {x, z}), y2 = a.apply(op, {z, x});
          if (phi[y1] >= 0 && b.apply(opmap[op], {phi[x], phi[z]}) != phi[y1]) return false;
          if (phi[y2] >= 0 && b.apply(opmap[op], {phi[z], phi[x]}) != phi[y2]) return false;
        }
      }
    }
    return true;
  }

  bool full_ok() {
    Elem buf[16];
    for (int op = 0; op < a.op_count(); ++op) {
      const SparseOp& sa = a.sparse(op);
      const SparseOp& sb = b.sparse(opmap[op]);
      if (sa.count() != sb.count()) return false;
      for (std::size_t id = 0; id < sa.count(); ++id) {
        const Elem* t = sa.tuple(id);
        for (int i = 0; i < sa.arity; ++i) buf[i] = phi[t[i]];
        if (b.apply(opmap[op], buf) != phi[sa.out[id]]) return false;
      }
    }
    return true;
  }

  bool rec(std::size_t depth) {
    if (depth == order.size()) return full_ok();
    Elem x = order[depth];
    for (Elem y = 0; y < b.size(); ++y) {
      if (inv[y] >= 0 || fa[x] != fb[y]) continue;
      phi[x] = y;
      inv[y] = x;
      if (partial_ok(x) && rec(depth + 1)) return true;
      phi[x] = -1;
      inv[y] = -1;
    }
    return false;
  }
};

}  // namespace

std::optional<std::vector<Elem>> is_isomorphic(const FiniteAlgebra& a, const FiniteAlgebra& b,
                                               int guard) {
  guard_size(a, guard);
  guard_size(b, guard);
  auto sa = a.signature(), sb = b.signature();
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa != sb) throw std::invalid_argument("signature mismatch");
  if (a.size() != b.size()) return std::nullopt;
  if (a.has_zero() != b.has_zero())
    return std::nullopt;
  if (!a.has_zero()) {
    // without a distinguished base the sparse comparison is not conclusive
    for (int op = 0; op < a.op_count(); ++op)
      if (std::pow(static_cast<double>(a.size()), a.op(op).arity) > 1e7)
        throw SizeGuardError("isomorphism check needs a zero constant for large operations");
  }
  IsoSearch s{a, b, {}, {}, {}, {}, {}, {}};
  std::vector<int> opsA, opsB;
  for (int op = 0; op < a.op_count(); ++op) {
    s.opmap.push_back(b.op_index(a.op(op).name));
    opsA.push_back(op);
    opsB.push_back(s.opmap.back());
  }
  // sparse lists are relative to the base element, so fingerprints are only
  // invariant when both algebras carry the zero constant
  for (Elem e = 0; e < a.size(); ++e)
    s.fa.push_back(a.has_zero() ? s.fingerprint(a, opsA, e) : std::vector<long>{});
  for (Elem e = 0; e < b.size(); ++e)
    s.fb.push_back(b.has_zero() ? s.fingerprint(b, opsB, e) : std::vector<long>{});
  {
    auto x = s.fa, y = s.fb;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    if (x != y) return std::nullopt;
  }
  // rarest fingerprints first
  std::map<std::vector<long>, int> freq;
  for (auto& f : s.fa) ++freq[f];
  for (Elem e = 0; e < a.size(); ++e) s.order.push_back(e);
  std::stable_sort(s.order.begin(), s.order.end(),
                   [&](Elem x, Elem y) { return freq[s.fa[x]] < freq[s.fa[y]]; });
  s.phi.assign(a.size(), -1);
  s.inv.assign(b.size(), -1);
  if (!a.has_zero()) {
    bool ok = false;
    std::function<bool(std::size_t)> brute = [&](std::size_t depth) -> bool {
      if (depth == s.order.size()) {
        for (int op = 0; op < a.op_count(); ++op) {
          int k = a.op(op).arity;
          std::vector<Elem> t(k, 0), u(k);
          std::size_t total = static_cast<std::size_t>(std::pow(a.size(), k));
          for (std::size_t i = 0; i < total; ++i) {
            for (int j = 0; j < k; ++j) u[j] = s.phi[t[j]];
            if (b.apply(s.opmap[op], u.data()) != s.phi[a.apply(op, t.data())]) return false;
            for (int p = k - 1; p >= 0; --p) {
              if (++t[p] < a.size()) break;
              t[p] = 0;
            }
          }
        }
        return true;
      }
      Elem x = s.order[depth];
      for (Elem y = 0; y < b.size(); ++y) {
        if (s.inv[y] >= 0) continue;
        s.phi[x] = y;
        s.inv[y] = x;
        if (s.partial_ok(x) && brute(depth + 1)) return true;
        s.phi[x] = -1;
        s.inv[y] = -1;
      }
      return false;
    };
    ok = brute(0);
    if (!ok) return std::nullopt;
    return s.phi;
  }
  if (!s.rec(0)) return std::nullopt;
  return s.phi;
}

// ---------------------------------------------------------------- powers

namespace {

std::uint64_t pack(const Elem* t, int len) {
  std::uint64_t key = static_cast<std::uint64_t>(len);
  for (int i = 0; i < len; ++i) key = key * 1315423911ull + static_cast<std::uint64_t>(t[i] + 1);
  return key;
}

// For each op and prefix length, the set of prefixes of tuples leaving base.
struct PrefixIndex {
  std::vector<std::vector<std::unordered_set<std::uint64_t>>> sets;  // [op][len]
  explicit PrefixIndex(const FiniteAlgebra& f) {
    sets.resize(f.op_count());
    for (int op = 0; op < f.op_count(); ++op) {
      const int k = f.op(op).arity;
      const SparseOp& sp = f.sparse(op);
      sets[op].resize(k + 1);
      for (std::size_t id = 0; id < sp.count(); ++id)
        for (int len = 1; len <= k; ++len) sets[op][len].insert(pack(sp.tuple(id), len));
    }
  }
  bool alive(int op, const Elem* t, int len) const { return sets[op][len].count(pack(t, len)) > 0; }
};

// Depth-first enumeration of tuples over element vectors with per-coordinate
// pruning: a coordinate is alive while its column prefix can still leave
// base.  need_all: every coordinate must stay alive; otherwise at least one.
struct PowerWalker {
  const FiniteAlgebra& f;
  const PrefixIndex& px;
  const std::vector<std::vector<Elem>>& vecs;
  int width;
  bool need_all;

  template <class Sink>
  void walk(int op, std::size_t limit, std::size_t new_from, Sink&& sink) const {
    const int k = f.op(op).arity;
    std::vector<int> idx(k);
    std::vector<Elem> col(static_cast<std::size_t>(width) * k);
    std::vector<std::vector<char>> alive(k + 1, std::vector<char>(width, 1));
    rec(op, k, 0, false, limit, new_from, idx, col, alive, sink);
  }

  template <class Sink>
  void rec(int op, int k, int pos, bool has_new, std::size_t limit, std::size_t new_from,
           std::vector<int>& idx, std::vector<Elem>& col, std::vector<std::vector<char>>& alive,
           Sink& sink) const {
    if (pos == k) {
      if (!has_new) return;
      sink(idx, alive[k]);
      return;
    }
    std::size_t start = 0;
    if (pos == k - 1 && !has_new) start = new_from;
    for (std::size_t e = start; e < limit; ++e) {
      const auto& v = vecs[e];
      int live = 0;
      for (int c = 0; c < width; ++c) {
        char a = 0;
        if (alive[pos][c]) {
          Elem* column = col.data() + static_cast<std::size_t>(c) * k;
          column[pos] = v[c];
          a = px.alive(op, column, pos + 1);
        }
        alive[pos + 1][c] = a;
        live += a;
        if (need_all && !a) break;
      }
      if (need_all ? live < width : live == 0) continue;
      idx[pos] = static_cast<int>(e);
      rec(op, k, pos + 1, has_new || e >= new_from, limit, new_from, idx, col, alive, sink);
    }
  }
};

std::string vec_label(const FiniteAlgebra& f, const std::vector<Elem>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f.label(v[i]);
  return s + ")";
}

struct VecHash {
  std::size_t operator()(const std::vector<Elem>& v) const {
    return static_cast<std::size_t>(pack(v.data(), static_cast<int>(v.size())));
  }
};

std::shared_ptr<FiniteAlgebra> assemble_power(const AlgPtr& f, int width,
                                              std::vector<std::vector<Elem>> vecs,
                                              std::shared_ptr<PrefixIndex> px) {
  std::vector<std::string> labels;
  for (auto& v : vecs) labels.push_back(vec_label(*f, v));
  auto alg = std::make_shared<FiniteAlgebra>(std::move(labels));
  auto vp = std::make_shared<std::vector<std::vector<Elem>>>(vecs);
  auto lookup = std::make_shared<std::unordered_map<std::vector<Elem>, int, VecHash>>();
  for (std::size_t i = 0; i < vecs.size(); ++i) (*lookup)[vecs[i]] = static_cast<int>(i);
  for (int op = 0; op < f->op_count(); ++op) {
    const int k = f->op(op).arity;
    Evaluator ev = [f, vp, lookup, op, k, width](const Elem* a) {
      std::vector<Elem> out(width);
      Elem buf[16];
      for (int c = 0; c < width; ++c) {
        for (int i = 0; i < k; ++i) buf[i] = (*vp)[a[i]][c];
        out[c] = f->apply(op, buf);
      }
      auto it = lookup->find(out);
      if (it == lookup->end()) throw std::logic_error("power subset not closed");
      return it->second;
    };
    Enumerator en;
    if (k > 0 && f->has_zero()) {
      en = [f, vp, lookup, px, op, k, width](const TupleSink& sink) {
        PowerWalker w{*f, *px, *vp, width, false};
        std::vector<Elem> out(width);
        Elem buf[16];
        Elem tup[16];
        w.walk(op, vp->size(), 0, [&](const std::vector<int>& idx, const std::vector<char>&) {
          for (int c = 0; c < width; ++c) {
            for (int i = 0; i < k; ++i) buf[i] = (*vp)[idx[i]][c];
            out[c] = f->apply(op, buf);
          }
          for (int i = 0; i < k; ++i) tup[i] = idx[i];
          sink(tup, lookup->at(out));
        });
      };
    }
    alg->add_rule_op(f->op(op).name, k, std::move(ev), {}, std::move(en));
  }
  alg->vectors = std::move(vecs);
  alg->factor = f;
  alg->materialize(1u << 20);
  return alg;
}

}  // namespace

std::shared_ptr<FiniteAlgebra> power_subalgebra(const AlgPtr& f, int k,
                                                const std::vector<std::vector<Elem>>& gens,
                                                std::size_t cap, bool nowhere_zero) {
  if (k < 1) throw std::invalid_argument("power width must be positive");
  if (!f->has_zero()) throw std::invalid_argument("power closure needs a zero constant");
  auto px = std::make_shared<PrefixIndex>(*f);
  std::vector<std::vector<Elem>> vecs;
  std::unordered_map<std::vector<Elem>, int, VecHash> seen;
  const Elem z = f->base();
  auto is_nowhere_zero = [&](const std::vector<Elem>& v) {
    return std::none_of(v.begin(), v.end(), [&](Elem e) { return e == z; });
  };
  auto add = [&](std::vector<Elem> v) {
    if (nowhere_zero && !is_nowhere_zero(v)) return;
    if (seen.emplace(v, static_cast<int>(vecs.size())).second) {
      vecs.push_back(std::move(v));
      if (vecs.size() > cap) throw SizeGuardError("power subalgebra exceeds element cap");
    }
  };
  for (auto& g : gens) {
    if (static_cast<int>(g.size()) != k) throw std::invalid_argument("generator width mismatch");
    add(g);
  }
  if (!nowhere_zero) add(std::vector<Elem>(k, z));
  for (int op = 0; op < f->op_count(); ++op)
    if (f->op(op).arity == 0) add(std::vector<Elem>(k, f->apply(op, nullptr)));
  std::size_t new_from = 0;
  std::vector<Elem> out(k);
  Elem buf[16];
  while (new_from < vecs.size()) {
    std::size_t limit = vecs.size();
    for (int op = 0; op < f->op_count(); ++op) {
      const int a = f->op(op).arity;
      if (a == 0) continue;
      PowerWalker w{*f, *px, vecs, k, nowhere_zero};
      std::vector<std::vector<Elem>> fresh;
      w.walk(op, limit, new_from, [&](const std::vector<int>& idx, const std::vector<char>& alive) {
        for (int c = 0; c < k; ++c) {
          if (!alive[c]) {
            out[c] = z;
            continue;
          }
          for (int i = 0; i < a; ++i) buf[i] = vecs[idx[i]][c];
          out[c] = f->apply(op, buf);
        }
        if (!seen.count(out)) fresh.push_back(out);
      });
      for (auto& v : fresh) add(std::move(v));
    }
    new_from = limit;
  }
  if (nowhere_zero) {
    // The nowhere-zero part is not closed; return it as a bare labelled set.
    std::vector<std::string> labels;
    for (auto& v : vecs) labels.push_back(vec_label(*f, v));
    auto alg = std::make_shared<FiniteAlgebra>(std::move(labels));
    alg->vectors = std::move(vecs);
    alg->factor = f;
    return alg;
  }
  return assemble_power(f, k, std::move(vecs), px);
}

std::shared_ptr<FiniteAlgebra> power_from_vectors(const AlgPtr& f,
                                                  std::vector<std::vector<Elem>> vectors) {
  if (vectors.empty()) throw std::invalid_argument("power algebra needs at least one vector");
  if (!f->has_zero()) throw std::invalid_argument("power algebra needs a zero constant");
  const int k = static_cast<int>(vectors.front().size());
  for (auto& v : vectors) {
    if (static_cast<int>(v.size()) != k) throw std::invalid_argument("vector width mismatch");
    for (Elem e : v)
      if (e < 0 || e >= f->size()) throw std::invalid_argument("vector coordinate out of range");
  }
  return assemble_power(f, k, std::move(vectors), std::make_shared<PrefixIndex>(*f));
}

std::shared_ptr<FiniteAlgebra> direct_product(const AlgPtr& a, const AlgPtr& b) {
  auto sa = a->signature(), sb = b->signature();
  if (sa != sb) throw std::invalid_argument("product factors need identical signatures");
  std::vector<std::string> labels;
  for (int x = 0; x < a->size(); ++x)
    for (int y = 0; y < b->size(); ++y) labels.push_back("(" + a->label(x) + "," + b->label(y) + ")");
  auto alg = std::make_shared<FiniteAlgebra>(std::move(labels));
  const int mb = b->size();
  for (int op = 0; op < a->op_count(); ++op) {
    const int k = a->op(op).arity;
    alg->add_rule_op(a->op(op).name, k, [a, b, op, k, mb](const Elem* t) {
      Elem x[16], y[16];
      for (int i = 0; i < k; ++i) {
        x[i] = t[i] / mb;
        y[i] = t[i] % mb;
      }
      return a->apply(op, x) * mb + b->apply(op, y);
    });
  }
  for (int x = 0; x < a->size(); ++x)
    for (int y = 0; y < b->size(); ++y) alg->vectors.push_back({x, y});
  alg->meta["product"] = "2";
  alg->materialize();
  return alg;
}

// ---------------------------------------------------------------- polynomials

Elem FundamentalTranslation::apply(const FiniteAlgebra& alg, Elem x) const {
  Elem buf[16];
  const int k = alg.op(op).arity;
  for (int i = 0, j = 0; i < k; ++i) buf[i] = i == pos ? x : consts[j++];
  return alg.apply(op, buf);
}

std::string FundamentalTranslation::str(const FiniteAlgebra& alg, const std::string& inner) const {
  std::string s = alg.op(op).name + "(";
  const int k = alg.op(op).arity;
  for (int i = 0, j = 0; i < k; ++i) s += (i ? "," : "") + (i == pos ? inner : alg.label(consts[j++]));
  return s + ")";
}

Elem UnaryPolynomial::apply(const FiniteAlgebra& alg, Elem x) const {
  for (auto& t : steps) x = t.apply(alg, x);
  return x;
}

std::string UnaryPolynomial::str(const FiniteAlgebra& alg) const {
  std::string s = "x";
  for (auto& t : steps) s = t.str(alg, s);
  return s;
}

}  // namespace dpsc
