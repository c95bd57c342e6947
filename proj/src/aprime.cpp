#include "dpsc/aprime.hpp"

#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace dpsc {

APrime::APrime(TuringMachine tm, bool omit_K) : tm_(std::move(tm)), omit_K_(omit_K) {
  tm_.validate();
  const int m = size();
  dec_.resize(m);
  bar_.assign(m, -1);
  dec_[ONE].kind = Kind::One;
  dec_[TWO].kind = Kind::Two;
  dec_[H].kind = Kind::H;
  dec_[C].kind = Kind::C;
  dec_[D].kind = Kind::D;
  dec_[bC] = {Kind::C, true};
  dec_[bD] = {Kind::D, true};
  bar_[C] = bC;
  bar_[bC] = C;
  bar_[D] = bD;
  bar_[bD] = D;
  for (int i = 0; i < tm_.state_count; ++i)
    for (int b = 0; b < 2; ++b)
      for (int r = 0; r < 2; ++r) {
        for (int s = 0; s < 2; ++s) {
          dec_[vC(i, r, s, b)] = {Kind::VC, b == 1, i, r, s};
          dec_[vD(i, r, s, b)] = {Kind::VD, b == 1, i, r, s};
          bar_[vC(i, r, s, b)] = vC(i, r, s, !b);
          bar_[vD(i, r, s, b)] = vD(i, r, s, !b);
        }
        dec_[vM(i, r, b)] = {Kind::VM, b == 1, i, r, 0};
        bar_[vM(i, r, b)] = vM(i, r, !b);
      }
  for (std::size_t k = 0; k < tm_.instructions.size(); ++k)
    for (int t = 0; t < 2; ++t)
      mops_.push_back({tm_.instructions[k].dir == Dir::L, static_cast<int>(k), t});
}

std::string APrime::MachineOp::name() const { return std::string(left ? "L" : "R"); }

std::string APrime::label(Elem e) const {
  static const char* fixed[] = {"0", "1", "2", "H", "C", "D", "~C", "~D"};
  if (e < 8) return fixed[e];
  const AElem& a = dec_[e];
  std::ostringstream out;
  if (a.bar) out << '~';
  switch (a.kind) {
    case Kind::VC: out << "C(" << a.i << ',' << a.r << ',' << a.s << ')'; break;
    case Kind::VD: out << "D(" << a.i << ',' << a.r << ',' << a.s << ')'; break;
    default: out << "M(" << a.i << ',' << a.r << ')'; break;
  }
  return out.str();
}

Elem APrime::prod(Elem x, Elem y) const {
  if ((x == TWO && y == D) || (x == H && y == C)) return D;
  if (x == ONE && y == C) return C;
  if ((x == TWO && y == bD) || (x == H && y == bC)) return bD;
  if (x == ONE && y == bC) return bC;
  return ZERO;
}

Elem APrime::J(Elem x, Elem y, Elem z) const {
  if (x == y) return x;
  if (bar_[y] >= 0 && x == bar_[y]) return meet(x, z);
  return ZERO;
}

Elem APrime::Jp(Elem x, Elem y, Elem z) const {
  if (x == y) return meet(x, z);
  if (bar_[y] >= 0 && x == bar_[y]) return x;
  return ZERO;
}

Elem APrime::K(Elem x, Elem y, Elem z) const {
  if (bar_[y] >= 0 && x == bar_[y]) return y;
  if (x == y && bar_[z] >= 0 && x == bar_[z]) return z;
  return x == y && y == z ? x : ZERO;
}

// (x∧y)∨(x∧z) under a selector; both joinands are x or 0.
static Elem select_join(bool sel, Elem x, Elem y, Elem z) {
  if (!sel || x == APrime::ZERO) return APrime::ZERO;
  return (x == y || x == z) ? x : APrime::ZERO;
}

Elem APrime::S0(Elem u, Elem x, Elem y, Elem z) const { return select_join(in_V0(u), x, y, z); }
Elem APrime::S1(Elem u, Elem x, Elem y, Elem z) const {
  return select_join(u == ONE || u == TWO, x, y, z);
}
Elem APrime::S2(Elem u, Elem v, Elem x, Elem y, Elem z) const {
  return select_join(bar_[v] >= 0 && u == bar_[v], x, y, z);
}

Elem APrime::T(Elem w, Elem x, Elem y, Elem z) const {
  Elem p = prod(w, x);
  if (p == ZERO || p != prod(y, z)) return ZERO;
  if (w == y && x == z) return p;
  return bar_[p];
}

Elem APrime::I(Elem x) const {
  if (tm_.state_count < 2) return ZERO;
  if (x == ONE) return vC(1, 0, 0);
  if (x == H) return vM(1, 0);
  if (x == TWO) return vD(1, 0, 0);
  return ZERO;
}

Elem APrime::F_plain(const MachineOp& f, Elem x, Elem y, Elem u) const {
  if (u < 8) return ZERO;
  const AElem& a = dec_[u];
  if (a.bar) return ZERO;
  const Instruction& ins = tm_.instructions[f.instr];
  const int i = ins.state, r = ins.read, s = ins.write, j = ins.next, t = f.t;
  if (a.i != i || a.r != r) return ZERO;
  if (f.left) {
    if (x == ONE && y == ONE && a.kind == Kind::VC) return vC(j, t, a.s);
    if (x == H && y == ONE && a.kind == Kind::VC && a.s == t) return vM(j, t);
    if (x == TWO && y == H && a.kind == Kind::VM) return vD(j, t, s);
    if (x == TWO && y == TWO && a.kind == Kind::VD) return vD(j, t, a.s);
  } else {
    if (x == ONE && y == ONE && a.kind == Kind::VC) return vC(j, t, a.s);
    if (x == H && y == ONE && a.kind == Kind::VM) return vC(j, t, s);
    if (x == TWO && y == H && a.kind == Kind::VD && a.s == t) return vM(j, t);
    if (x == TWO && y == TWO && a.kind == Kind::VD) return vD(j, t, a.s);
  }
  return ZERO;
}

Elem APrime::F(const MachineOp& f, Elem x, Elem y, Elem u) const {
  Elem v = F_plain(f, x, y, u);
  if (v != ZERO) return v;
  if (in_V(u)) {
    Elem w = F_plain(f, x, y, bar_[u]);
    if (in_V(w)) return bar_[w];
  }
  return ZERO;
}

Elem APrime::U1(const MachineOp& f, Elem x, Elem y, Elem z, Elem u) const {
  if (!precedes(x, z)) return ZERO;
  Elem v = F(f, x, y, u);
  if (v == ZERO) return ZERO;
  return y == z ? v : bar_[v];
}

Elem APrime::U0(const MachineOp& f, Elem x, Elem y, Elem z, Elem u) const {
  if (!precedes(x, z)) return ZERO;
  Elem v = F(f, y, z, u);
  if (v == ZERO) return ZERO;
  return x == y ? v : bar_[v];
}

std::vector<Elem> APrime::encode(const Configuration& q, const Interval& window) const {
  std::vector<Elem> v;
  const int r = q.read(q.head);
  for (long k = window.lo; k <= window.hi; ++k) {
    if (k < q.head) v.push_back(vC(q.state, r, q.read(k)));
    else if (k == q.head) v.push_back(vM(q.state, r));
    else v.push_back(vD(q.state, r, q.read(k)));
  }
  return v;
}

std::string machine_op_label(const APrime& A, const APrime::MachineOp& f) {
  const Instruction& ins = A.machine().instructions[f.instr];
  return f.name() + "(" + std::to_string(ins.state) + "," + std::to_string(ins.read) + "," +
         std::to_string(f.t) + ")";
}

std::vector<std::pair<std::string, int>> aprime_signature(const TuringMachine& tm, bool omit_K) {
  std::vector<std::pair<std::string, int>> sig = {
      {"zero", 0}, {"meet", 2}, {"prod", 2}, {"J", 3}, {"Jp", 3}, {"K", 3},
      {"S0", 4},   {"S1", 4},   {"S2", 5},   {"T", 4}, {"I", 1}};
  if (omit_K) sig.erase(sig.begin() + 5);
  APrime A(tm, omit_K);
  for (auto& f : A.machine_ops()) sig.emplace_back(machine_op_label(A, f), 3);
  for (auto& f : A.machine_ops()) {
    sig.emplace_back("U1:" + machine_op_label(A, f), 4);
    sig.emplace_back("U0:" + machine_op_label(A, f), 4);
  }
  return sig;
}

std::shared_ptr<const APrime> aprime_of(const FiniteAlgebra& alg) {
  auto it = alg.meta.find("builtin");
  if (it == alg.meta.end() || it->second != "aprime") return nullptr;
  return std::static_pointer_cast<const APrime>(alg.payload);
}

std::shared_ptr<FiniteAlgebra> build_aprime(const TuringMachine& tm, bool omit_K) {
  auto A = std::make_shared<const APrime>(tm, omit_K);
  std::vector<std::string> labels;
  for (Elem e = 0; e < A->size(); ++e) labels.push_back(A->label(e));
  auto alg = std::make_shared<FiniteAlgebra>(std::move(labels));
  const int m = A->size();
  auto rule = [](const std::string& n) { return "aprime:" + n; };

  alg->add_rule_op("zero", 0, [](const Elem*) { return APrime::ZERO; }, rule("zero"));
  alg->add_rule_op("meet", 2, [A](const Elem* a) { return A->meet(a[0], a[1]); }, rule("meet"));
  alg->add_rule_op("prod", 2, [A](const Elem* a) { return A->prod(a[0], a[1]); }, rule("prod"));
  alg->add_rule_op("J", 3, [A](const Elem* a) { return A->J(a[0], a[1], a[2]); }, rule("J"));
  alg->add_rule_op("Jp", 3, [A](const Elem* a) { return A->Jp(a[0], a[1], a[2]); }, rule("Jp"));
  if (!omit_K)
    alg->add_rule_op("K", 3, [A](const Elem* a) { return A->K(a[0], a[1], a[2]); }, rule("K"));

  // S0/S1: selector u, then x nonzero with y = x or z = x.
  auto sel_enum = [A, m](std::function<bool(Elem)> sel) {
    return [A, m, sel](const TupleSink& sink) {
      Elem t[4];
      for (Elem u = 0; u < m; ++u) {
        if (!sel(u)) continue;
        t[0] = u;
        for (Elem x = 1; x < m; ++x) {
          t[1] = x;
          for (Elem y = 0; y < m; ++y)
            for (Elem z = 0; z < m; ++z) {
              if (y != x && z != x) continue;
              t[2] = y;
              t[3] = z;
              sink(t, x);
            }
        }
      }
    };
  };
  alg->add_rule_op("S0", 4, [A](const Elem* a) { return A->S0(a[0], a[1], a[2], a[3]); },
                   rule("S0"), sel_enum([A](Elem u) { return A->in_V0(u); }));
  alg->add_rule_op("S1", 4, [A](const Elem* a) { return A->S1(a[0], a[1], a[2], a[3]); },
                   rule("S1"), sel_enum([](Elem u) { return u == APrime::ONE || u == APrime::TWO; }));
  alg->add_rule_op(
      "S2", 5, [A](const Elem* a) { return A->S2(a[0], a[1], a[2], a[3], a[4]); }, rule("S2"),
      [A, m](const TupleSink& sink) {
        Elem t[5];
        for (Elem v = 0; v < m; ++v) {
          if (A->bar(v) < 0) continue;
          t[0] = A->bar(v);
          t[1] = v;
          for (Elem x = 1; x < m; ++x) {
            t[2] = x;
            for (Elem y = 0; y < m; ++y)
              for (Elem z = 0; z < m; ++z) {
                if (y != x && z != x) continue;
                t[3] = y;
                t[4] = z;
                sink(t, x);
              }
          }
        }
      });
  alg->add_rule_op(
      "T", 4, [A](const Elem* a) { return A->T(a[0], a[1], a[2], a[3]); }, rule("T"),
      [A, m](const TupleSink& sink) {
        std::vector<std::pair<Elem, Elem>> nz;
        for (Elem w = 0; w < m; ++w)
          for (Elem x = 0; x < m; ++x)
            if (A->prod(w, x) != APrime::ZERO) nz.emplace_back(w, x);
        Elem t[4];
        for (auto [w, x] : nz)
          for (auto [y, z] : nz) {
            t[0] = w;
            t[1] = x;
            t[2] = y;
            t[3] = z;
            sink(t, A->T(w, x, y, z));
          }
      });
  alg->add_rule_op("I", 1, [A](const Elem* a) { return A->I(a[0]); }, rule("I"));

  for (auto& f : A->machine_ops()) {
    std::string n = machine_op_label(*A, f);
    alg->add_rule_op(n, 3, [A, f](const Elem* a) { return A->F(f, a[0], a[1], a[2]); }, rule(n));
  }
  const std::pair<Elem, Elem> prec[] = {{APrime::TWO, APrime::TWO},
                                        {APrime::TWO, APrime::H},
                                        {APrime::ONE, APrime::ONE}};
  for (auto& f : A->machine_ops()) {
    std::string n = machine_op_label(*A, f);
    for (int kind = 1; kind >= 0; --kind) {
      std::string un = (kind ? "U1:" : "U0:") + n;
      Evaluator ev;
      if (kind) ev = [A, f](const Elem* a) { return A->U1(f, a[0], a[1], a[2], a[3]); };
      else ev = [A, f](const Elem* a) { return A->U0(f, a[0], a[1], a[2], a[3]); };
      alg->add_rule_op(un, 4, ev, rule(un), [ev, m, prec](const TupleSink& sink) {
        Elem t[4];
        for (auto [x, z] : prec)
          for (Elem y = 0; y < m; ++y)
            for (Elem u = 0; u < m; ++u) {
              t[0] = x;
              t[1] = y;
              t[2] = z;
              t[3] = u;
              sink(t, ev(t));
            }
      });
    }
  }
  alg->materialize();
  alg->meta["builtin"] = "aprime";
  alg->meta["machine"] = format_tm(tm);
  alg->meta["omit_K"] = omit_K ? "1" : "0";
  alg->payload = A;
  return alg;
}

// ---------------------------------------------------------------- reports

std::vector<int> expected_non_absorbing(const std::string& op) {
  if (op == "J" || op == "Jp" || op == "K") return {2};
  if (op == "S0" || op == "S1") return {2, 3};
  if (op == "S2") return {3, 4};
  return {};
}

std::vector<AbsorptionEntry> classify_zero_absorbing(const FiniteAlgebra& alg) {
  if (!alg.has_zero()) throw std::invalid_argument("0-absorption needs the zero constant");
  std::vector<AbsorptionEntry> out;
  const Elem z = alg.base();
  const int m = alg.size();
  for (int op = 0; op < alg.op_count(); ++op) {
    const int k = alg.op(op).arity;
    if (k == 0) continue;
    AbsorptionEntry e{alg.op(op).name, k, std::vector<bool>(k, true), "exhaustive"};
    // every tuple off the sparse list evaluates to 0, so a coordinate is
    // absorbing iff no listed tuple carries 0 there
    const SparseOp& sp = alg.sparse(op);
    for (int p = 0; p < k; ++p) e.absorbing[p] = sp.at(p, z, m).empty();
    out.push_back(std::move(e));
  }
  return out;
}

MeetCommuteReport check_meet_commuting(const FiniteAlgebra& alg, int op, std::uint64_t samples,
                                       std::uint64_t seed) {
  MeetCommuteReport rep;
  rep.op = alg.op(op).name;
  const int k = alg.op(op).arity;
  const int m = alg.size();
  const Elem z = alg.base();
  if (k == 0) {
    rep.method = "constant";
    return rep;
  }
  auto meetv = [&](const std::vector<Elem>& a, const std::vector<Elem>& b) {
    std::vector<Elem> c(k);
    for (int i = 0; i < k; ++i) c[i] = alg.meet(a[i], b[i]);
    return c;
  };
  if (std::pow(static_cast<double>(m), k) * (1u << k) <= 1.5e8) {
    // Group pairs by the set D of positions where they differ.  For a fixed
    // meet c (0 on D), every tuple agreeing with c off D must satisfy the
    // identity against every tuple differing from it on all of D.
    rep.method = "exhaustive";
    std::vector<Elem> c(k), a(k);
    for (unsigned D = 1; D < (1u << k); ++D) {
      std::vector<int> off, on;
      for (int i = 0; i < k; ++i) (D >> i & 1 ? on : off).push_back(i);
      std::vector<Elem> offv(off.size(), 0);
      while (true) {
        for (std::size_t i = 0; i < off.size(); ++i) c[off[i]] = offv[i];
        for (int i : on) c[i] = z;
        Elem fc = alg.apply(op, c.data());
        std::map<Elem, std::vector<std::vector<Elem>>> groups;
        std::vector<Elem> onv(on.size(), 0);
        bool bad = false;
        while (!bad) {
          a = c;
          for (std::size_t i = 0; i < on.size(); ++i) a[on[i]] = onv[i];
          Elem fa = alg.apply(op, a.data());
          ++rep.checked;
          if (fc != z) {
            if (fa != fc) {
              // pick any b differing on all of D
              std::vector<Elem> b = a;
              for (int i : on) b[i] = a[i] == 0 ? 1 : 0;
              if (alg.meet(fa, alg.apply(op, b.data())) != alg.apply(op, meetv(a, b).data())) {
                rep.a = a;
                rep.b = b;
              } else {
                for (int i : on) b[i] = a[i] == 0 ? (m > 2 ? 2 : 1) : 0;
                rep.a = a;
                rep.b = b;
              }
              bad = true;
            }
          } else if (fa != z) {
            auto& g = groups[fa];
            for (auto& other : g) {
              bool all = true;
              for (int i : on) all = all && other[i] != a[i];
              if (all) {
                rep.a = other;
                rep.b = a;
                bad = true;
                break;
              }
            }
            g.push_back(a);
          }
          std::size_t p = 0;
          for (; p < on.size(); ++p) {
            if (++onv[p] < m) break;
            onv[p] = 0;
          }
          if (p == on.size()) break;
        }
        if (bad) {
          // confirm the recorded pair really violates the identity
          Elem lhs = alg.meet(alg.apply(op, rep.a.data()), alg.apply(op, rep.b.data()));
          Elem rhs = alg.apply(op, meetv(rep.a, rep.b).data());
          if (lhs != rhs) {
            rep.commutes = false;
            return rep;
          }
          // fall back to a direct search within this group
          rep.a.clear();
          rep.b.clear();
        }
        std::size_t p = 0;
        for (; p < off.size(); ++p) {
          if (++offv[p] < m) break;
          offv[p] = 0;
        }
        if (p == off.size()) break;
      }
    }
    return rep;
  }
  rep.method = "sampled";
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, m - 1);
  std::vector<Elem> a(k), b(k);
  for (std::uint64_t n = 0; n < samples; ++n) {
    for (int i = 0; i < k; ++i) {
      a[i] = pick(rng);
      b[i] = (rng() & 1) ? a[i] : pick(rng);  // share coordinates half the time
    }
    ++rep.checked;
    Elem lhs = alg.meet(alg.apply(op, a.data()), alg.apply(op, b.data()));
    if (lhs != alg.apply(op, meetv(a, b).data())) {
      rep.commutes = false;
      rep.a = a;
      rep.b = b;
      return rep;
    }
  }
  return rep;
}

}  // namespace dpsc
