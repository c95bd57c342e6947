#include "dpsc/formulas.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <sstream>

namespace dpsc {

namespace {

using Mask = std::uint64_t;

Mask term_mask(const Term& t) {
  switch (t.kind) {
    case Term::Kind::Var: return Mask{1} << t.var;
    case Term::Kind::Const: return 0;
    case Term::Kind::App: {
      Mask m = 0;
      for (auto& a : t.args) m |= term_mask(a);
      return m;
    }
  }
  return 0;
}

Mask free_mask(const Formula& f) {
  Mask m = 0;
  for (auto& t : f.terms) m |= term_mask(t);
  for (auto& s : f.subs) m |= free_mask(*s);
  if (f.kind == Formula::Kind::Exists || f.kind == Formula::Kind::Forall ||
      f.kind == Formula::Kind::Image)
    for (int v : f.vars) m &= ~(Mask{1} << v);
  return m;
}

double static_cost(const Library& lib, const Formula& f, double m) {
  constexpr double cap = 1e15;
  double c = 0;
  switch (f.kind) {
    case Formula::Kind::True:
    case Formula::Kind::False: return 0;
    case Formula::Kind::Eq:
    case Formula::Kind::InCg: return 1;
    case Formula::Kind::Image:
    case Formula::Kind::Chain: return 50 + (f.subs.empty() ? 0 : m * static_cost(lib, *f.subs[0], m));
    case Formula::Kind::And:
    case Formula::Kind::Or:
    case Formula::Kind::Not:
      for (auto& s : f.subs) c += static_cost(lib, *s, m);
      return std::min(c, cap);
    case Formula::Kind::Exists:
    case Formula::Kind::Forall:
      return std::min(cap, std::pow(m, static_cast<double>(f.vars.size())) *
                               std::max(1.0, static_cast<double>(static_cost(lib, *f.subs[0], m))));
    case Formula::Kind::Call:
      return 2 + static_cost(lib, *lib.def(f.def).body, m);
  }
  return c;
}

}  // namespace

// ---------------------------------------------------------------- Library

Library::Library(AlgPtr alg) : alg_(std::move(alg)) {}

int Library::add(Definition d) {
  if (index_.count(d.name)) throw std::invalid_argument("duplicate definition " + d.name);
  if (d.names.size() > 63) throw std::invalid_argument("too many variables in " + d.name);
  int id = static_cast<int>(defs_.size());
  index_[d.name] = id;
  defs_.push_back(std::move(d));
  return id;
}

int Library::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

std::vector<std::string> Library::names() const {
  std::vector<std::string> out;
  for (auto& d : defs_) out.push_back(d.name);
  return out;
}

int Library::add_scheme(const TermScheme& s) {
  ResolvedScheme r;
  r.name = s.name;
  for (auto& step : s.steps) {
    std::vector<std::pair<int, int>> alts;
    for (auto& [name, pos] : step) {
      int op = alg_->op_index(name);
      if (op < 0) continue;
      if (pos < 0 || pos >= alg_->op(op).arity)
        throw std::invalid_argument("scheme " + s.name + ": bad position for " + name);
      alts.emplace_back(op, pos);
    }
    if (alts.empty()) throw std::invalid_argument("scheme " + s.name + ": no operation available");
    r.steps.push_back(std::move(alts));
  }
  schemes_.push_back(std::move(r));
  return static_cast<int>(schemes_.size()) - 1;
}

std::string Library::sexpr(const Definition& d, const Term& t) const {
  switch (t.kind) {
    case Term::Kind::Var: return d.names.at(t.var);
    case Term::Kind::Const: return "'" + alg_->label(t.value);
    case Term::Kind::App: {
      std::string s = "(" + alg_->op(t.op).name;
      for (auto& a : t.args) s += " " + sexpr(d, a);
      return s + ")";
    }
  }
  return "?";
}

std::string Library::sexpr(const Definition& d, const Formula& f) const {
  auto list = [&](const char* head) {
    std::string s = std::string("(") + head;
    for (auto& x : f.subs) s += " " + sexpr(d, *x);
    return s + ")";
  };
  auto vars = [&] {
    std::string s = "(";
    for (std::size_t i = 0; i < f.vars.size(); ++i) s += (i ? " " : "") + d.names.at(f.vars[i]);
    return s + ")";
  };
  auto terms = [&](std::size_t from, std::size_t to) {
    std::string s;
    for (std::size_t i = from; i < to && i < f.terms.size(); ++i) s += " " + sexpr(d, f.terms[i]);
    return s;
  };
  switch (f.kind) {
    case Formula::Kind::True: return "true";
    case Formula::Kind::False: return "false";
    case Formula::Kind::Eq: return "(=" + terms(0, 2) + ")";
    case Formula::Kind::And: return list("and");
    case Formula::Kind::Or: return list("or");
    case Formula::Kind::Not: return list("not");
    case Formula::Kind::Exists: return "(exists " + vars() + " " + sexpr(d, *f.subs[0]) + ")";
    case Formula::Kind::Forall: return "(forall " + vars() + " " + sexpr(d, *f.subs[0]) + ")";
    case Formula::Kind::Call: return "(" + defs_.at(f.def).name + terms(0, f.terms.size()) + ")";
    case Formula::Kind::InCg: return "(in-cg" + terms(0, 4) + ")";
    case Formula::Kind::Image:
      if (f.vars.empty())
        return "(in-image " + schemes_.at(f.scheme).name + terms(0, 4) + ")";
      return "(exists-image " + schemes_.at(f.scheme).name + terms(0, 2) + " " + vars() + " " +
             sexpr(d, *f.subs[0]) + ")";
    case Formula::Kind::Chain:
      return "(scheme-chain " + schemes_.at(f.scheme).name + " " + std::to_string(f.links) +
             terms(0, 4) + ")";
  }
  return "?";
}

std::string Library::sexpr(int id) const {
  const Definition& d = defs_.at(id);
  std::string s = "(define (" + d.name;
  for (int i = 0; i < d.params; ++i) s += " " + d.names[i];
  return s + ") " + sexpr(d, *d.body) + ")";
}

// ---------------------------------------------------------------- evaluator

FormulaEvaluator::FormulaEvaluator(const Library& lib, std::uint64_t budget)
    : lib_(lib), budget_(budget), memo_(lib.size()) {}

void FormulaEvaluator::tick() {
  if (++work_ > budget_) throw BudgetExceeded("formula evaluation budget exceeded");
}

Elem FormulaEvaluator::eval(const Term& t, const std::vector<Elem>& env) const {
  switch (t.kind) {
    case Term::Kind::Var: return env[t.var];
    case Term::Kind::Const: return t.value;
    case Term::Kind::App: {
      Elem args[8];
      for (std::size_t i = 0; i < t.args.size(); ++i) args[i] = eval(t.args[i], env);
      return lib_.alg().apply(t.op, args);
    }
  }
  return 0;
}

bool FormulaEvaluator::call(const std::string& name, const std::vector<Elem>& args) {
  int id = lib_.find(name);
  if (id < 0) throw std::invalid_argument("unknown formula " + name);
  return call(id, args);
}

bool FormulaEvaluator::call(int id, const std::vector<Elem>& args) {
  const Definition& d = lib_.def(id);
  if (static_cast<int>(args.size()) != d.params)
    throw std::invalid_argument(d.name + ": expected " + std::to_string(d.params) + " arguments");
  if (memo_.size() < static_cast<std::size_t>(lib_.size())) memo_.resize(lib_.size());
  const unsigned bits = std::bit_width(static_cast<unsigned>(lib_.alg().size()));
  const bool memoise = d.params > 0 && bits * d.params <= 64;
  std::uint64_t key = 0;
  if (memoise) {
    for (Elem a : args) key = (key << bits) | static_cast<std::uint64_t>(a);
    auto it = memo_[id].find(key);
    if (it != memo_[id].end()) return it->second;
  }
  std::vector<Elem> env(d.names.size(), 0);
  std::copy(args.begin(), args.end(), env.begin());
  bool r = eval(d, *d.body, env);
  if (memoise) memo_[id][key] = r;
  return r;
}

const FormulaEvaluator::Plan& FormulaEvaluator::plan(const Formula& ex) {
  auto it = plans_.find(&ex);
  if (it != plans_.end()) return it->second;
  Plan p;
  p.at_level.resize(ex.vars.size() + 1);
  std::vector<const Formula*> conj;
  const Formula& body = *ex.subs[0];
  if (body.kind == Formula::Kind::And)
    for (auto& s : body.subs) conj.push_back(s.get());
  else
    conj.push_back(&body);
  const double m = lib_.alg().size();
  std::vector<std::pair<double, const Formula*>> tagged;
  for (auto* c : conj) tagged.emplace_back(static_cost(lib_, *c, m), c);
  std::stable_sort(tagged.begin(), tagged.end(),
                   [](auto& a, auto& b) { return a.first < b.first; });
  for (auto& [cost, c] : tagged) {
    Mask fm = free_mask(*c);
    std::size_t level = 0;
    for (std::size_t k = 0; k < ex.vars.size(); ++k)
      if (fm & (Mask{1} << ex.vars[k])) level = k + 1;
    p.at_level[level].push_back(c);
  }
  return plans_.emplace(&ex, std::move(p)).first->second;
}

const std::vector<const Formula*>& FormulaEvaluator::disjuncts(const Formula& f) {
  auto it = or_order_.find(&f);
  if (it != or_order_.end()) return it->second;
  const double m = lib_.alg().size();
  std::vector<std::pair<double, const Formula*>> tagged;
  for (auto& s : f.subs) tagged.emplace_back(static_cost(lib_, *s, m), s.get());
  std::stable_sort(tagged.begin(), tagged.end(),
                   [](auto& a, auto& b) { return a.first < b.first; });
  std::vector<const Formula*> order;
  for (auto& t : tagged) order.push_back(t.second);
  return or_order_.emplace(&f, std::move(order)).first->second;
}

bool FormulaEvaluator::exists_rec(const Definition& d, const Formula& ex, const Plan& p,
                                  std::size_t level, std::vector<Elem>& env) {
  for (auto* c : p.at_level[level])
    if (!eval(d, *c, env)) return false;
  if (level == ex.vars.size()) return true;
  const int m = lib_.alg().size();
  const int v = ex.vars[level];
  for (Elem e = 0; e < m; ++e) {
    tick();
    env[v] = e;
    if (exists_rec(d, ex, p, level + 1, env)) return true;
  }
  return false;
}

const Partition& FormulaEvaluator::cg(Elem y, Elem z) {
  std::uint64_t key = (static_cast<std::uint64_t>(y) << 32) | static_cast<std::uint32_t>(z);
  auto it = cg_.find(key);
  if (it != cg_.end()) return it->second;
  return cg_.emplace(key, principal_congruence(lib_.alg(), y, z)).first->second;
}

const std::vector<std::pair<Elem, Elem>>& FormulaEvaluator::image(int scheme, Elem y, Elem z) {
  const int m = lib_.alg().size();
  std::uint64_t key = ((static_cast<std::uint64_t>(scheme) * m + y) * m) + z;
  auto it = images_.find(key);
  if (it != images_.end()) return it->second;
  const auto& sch = lib_.scheme(scheme);
  const FiniteAlgebra& alg = lib_.alg();
  std::vector<std::pair<Elem, Elem>> cur = {{y, z}};
  std::vector<char> seen(static_cast<std::size_t>(m) * m);
  for (auto& step : sch.steps) {
    std::fill(seen.begin(), seen.end(), 0);
    std::vector<std::pair<Elem, Elem>> next;
    for (auto [op, pos] : step) {
      const int ar = alg.op(op).arity;
      std::vector<Elem> a(ar, 0), b(ar, 0);
      std::size_t combos = 1;
      for (int k = 1; k < ar; ++k) combos *= m;
      for (std::size_t idx = 0; idx < combos; ++idx) {
        std::size_t rest = idx;
        for (int k = ar - 1; k >= 0; --k) {
          if (k == pos) continue;
          a[k] = b[k] = static_cast<Elem>(rest % m);
          rest /= m;
        }
        for (auto [u, v] : cur) {
          tick();
          a[pos] = u;
          b[pos] = v;
          Elem fu = alg.apply(op, a.data()), fv = alg.apply(op, b.data());
          auto& s = seen[static_cast<std::size_t>(fu) * m + fv];
          if (!s) {
            s = 1;
            next.emplace_back(fu, fv);
          }
        }
      }
    }
    cur = std::move(next);
  }
  std::sort(cur.begin(), cur.end());
  return images_.emplace(key, std::move(cur)).first->second;
}

bool FormulaEvaluator::chain(int scheme, int links, Elem w, Elem x, Elem y, Elem z) {
  if (w == x) return true;
  const int m = lib_.alg().size();
  const auto& img = image(scheme, y, z);
  std::vector<std::vector<Elem>> adj(m);
  for (auto [u, v] : img)
    if (u != v) {
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
  std::vector<int> dist(m, -1);
  std::deque<Elem> q{w};
  dist[w] = 0;
  while (!q.empty()) {
    Elem u = q.front();
    q.pop_front();
    if (dist[u] >= links) continue;
    for (Elem v : adj[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        if (v == x) return true;
        q.push_back(v);
      }
  }
  return false;
}

bool FormulaEvaluator::eval(const Definition& d, const Formula& f, std::vector<Elem>& env) {
  switch (f.kind) {
    case Formula::Kind::True: return true;
    case Formula::Kind::False: return false;
    case Formula::Kind::Eq: return eval(f.terms[0], env) == eval(f.terms[1], env);
    case Formula::Kind::And:
      for (auto& s : f.subs)
        if (!eval(d, *s, env)) return false;
      return true;
    case Formula::Kind::Or:
      for (auto* s : disjuncts(f))
        if (eval(d, *s, env)) return true;
      return false;
    case Formula::Kind::Not: return !eval(d, *f.subs[0], env);
    case Formula::Kind::Exists: return exists_rec(d, f, plan(f), 0, env);
    case Formula::Kind::Forall: {
      const int m = lib_.alg().size();
      std::vector<Elem> idx(f.vars.size(), 0);
      for (;;) {
        tick();
        for (std::size_t k = 0; k < idx.size(); ++k) env[f.vars[k]] = idx[k];
        if (!eval(d, *f.subs[0], env)) return false;
        std::size_t k = 0;
        while (k < idx.size() && ++idx[k] == m) idx[k++] = 0;
        if (k == idx.size()) return true;
      }
    }
    case Formula::Kind::Call: {
      std::vector<Elem> args(f.terms.size());
      for (std::size_t i = 0; i < args.size(); ++i) args[i] = eval(f.terms[i], env);
      return call(f.def, args);
    }
    case Formula::Kind::InCg: {
      Elem u = eval(f.terms[0], env), v = eval(f.terms[1], env);
      return u == v || cg(eval(f.terms[2], env), eval(f.terms[3], env)).same(u, v);
    }
    case Formula::Kind::Image: {
      const auto& img = image(f.scheme, eval(f.terms[0], env), eval(f.terms[1], env));
      if (f.vars.empty()) {
        std::pair<Elem, Elem> p{eval(f.terms[2], env), eval(f.terms[3], env)};
        return std::binary_search(img.begin(), img.end(), p);
      }
      for (auto [g1, g2] : img) {
        env[f.vars[0]] = g1;
        env[f.vars[1]] = g2;
        if (eval(d, *f.subs[0], env)) return true;
      }
      return false;
    }
    case Formula::Kind::Chain:
      return chain(f.scheme, f.links, eval(f.terms[0], env), eval(f.terms[1], env),
                   eval(f.terms[2], env), eval(f.terms[3], env));
  }
  return false;
}

bool eval_formula(const Library& lib, const std::string& name,
                  const std::map<std::string, Elem>& assignment) {
  int id = lib.find(name);
  if (id < 0) throw std::invalid_argument("unknown formula " + name);
  const Definition& d = lib.def(id);
  std::vector<Elem> args;
  for (int i = 0; i < d.params; ++i) {
    auto it = assignment.find(d.names[i]);
    if (it == assignment.end()) throw std::invalid_argument("unbound variable " + d.names[i]);
    args.push_back(it->second);
  }
  FormulaEvaluator ev(lib);
  return ev.call(id, args);
}

// ---------------------------------------------------------------- e_i, M_i

namespace {

int s_op(const FiniteAlgebra& alg, int i) {
  static const char* names[] = {"S0", "S1", "S2"};
  if (i < 0 || i > 2) throw std::invalid_argument("e_i: i must be 0, 1 or 2");
  return alg.op_index(names[i]);
}

int n_arity(int i) { return i == 2 ? 2 : 1; }

// All n̄ of the right arity in enumeration order.
template <class F>
bool for_each_n(int m, int i, F&& f) {
  std::vector<Elem> n(n_arity(i), 0);
  for (;;) {
    if (f(n)) return true;
    std::size_t k = n.size();
    while (k-- > 0) {
      if (++n[k] < m) break;
      n[k] = 0;
      if (k == 0) return false;
    }
  }
}

}  // namespace

Elem e_i(const FiniteAlgebra& alg, int i, const std::vector<Elem>& n, Elem x) {
  int op = s_op(alg, i);
  if (op < 0) throw std::invalid_argument("algebra has no S" + std::to_string(i));
  if (static_cast<int>(n.size()) != n_arity(i))
    throw std::invalid_argument("e_" + std::to_string(i) + ": wrong number of parameters");
  if (i == 2) return alg.apply(op, {n[0], n[1], x, x, x});
  return alg.apply(op, {n[0], x, x, x});
}

std::optional<std::vector<Elem>> in_class_Mi(const FiniteAlgebra& alg, int i) {
  if (s_op(alg, i) < 0) return std::nullopt;
  const int m = alg.size();
  std::optional<std::vector<Elem>> found;
  for_each_n(m, i, [&](const std::vector<Elem>& n) {
    for (Elem x = 0; x < m; ++x)
      if (e_i(alg, i, n, x) != x) return false;
    found = n;
    return true;
  });
  return found;
}

JonssonResult jonsson_check(const FiniteAlgebra& alg, const std::vector<Elem>& n, int i) {
  int op = s_op(alg, i);
  if (op < 0) throw std::invalid_argument("algebra has no S" + std::to_string(i));
  auto S = [&](Elem x, Elem y, Elem z) {
    return i == 2 ? alg.apply(op, {n.at(0), n.at(1), x, y, z}) : alg.apply(op, {n.at(0), x, y, z});
  };
  auto p = [&](int j, Elem x, Elem y, Elem z) -> Elem {
    switch (j) {
      case 0: return x;
      case 1: return S(x, y, z);
      case 2: return alg.meet(x, z);
      case 3: return S(z, y, x);
      default: return z;
    }
  };
  JonssonResult r;
  const int m = alg.size();
  for (Elem x = 0; x < m; ++x)
    for (Elem y = 0; y < m; ++y)
      for (Elem z = 0; z < m; ++z) {
        for (int j = 0; j <= 4; ++j)
          if (p(j, x, y, x) != x) {
            r = {false, "p" + std::to_string(j) + "(x,y,x) = x", x, y, z};
            return r;
          }
        for (int j = 0; j < 4; ++j) {
          bool ok = j % 2 == 0 ? p(j, x, x, z) == p(j + 1, x, x, z)
                               : p(j, x, z, z) == p(j + 1, x, z, z);
          if (!ok) {
            std::string s = std::to_string(j), t = std::to_string(j + 1);
            r = {false,
                 j % 2 == 0 ? "p" + s + "(x,x,z) = p" + t + "(x,x,z)"
                            : "p" + s + "(x,z,z) = p" + t + "(x,z,z)",
                 x, y, z};
            return r;
          }
        }
      }
  return r;
}

// ---------------------------------------------------------------- term sets

ProductTerms compute_product_terms_P(const std::vector<AlgPtr>& catalog) {
  if (catalog.empty()) throw std::invalid_argument("compute_product_terms_P: empty catalog");
  ProductTerms out;
  out.N = 1;
  for (auto& a : catalog) {
    const FiniteAlgebra& alg = *a;
    int prod = alg.op_index("prod"), s1 = alg.op_index("S1");
    int nc = 0;
    bool e1_zero = s1 >= 0;
    for (Elem n = 0; e1_zero && n < alg.size(); ++n)
      for (Elem x = 0; x < alg.size(); ++x)
        if (alg.apply(s1, {n, x, x, x}) != alg.base()) {
          e1_zero = false;
          break;
        }
    if (prod >= 0 && e1_zero) {
      std::vector<char> cur(alg.size(), 1);
      for (int k = 1; k <= alg.size() + 1; ++k) {
        int nonzero = 0;
        for (Elem e = 0; e < alg.size(); ++e) nonzero += cur[e] && e != alg.base();
        if (nonzero == 0) {
          nc = k;
          break;
        }
        std::vector<char> next(alg.size(), 0);
        for (Elem y = 0; y < alg.size(); ++y)
          for (Elem v = 0; v < alg.size(); ++v)
            if (cur[v]) next[alg.apply(prod, {y, v})] = 1;
        cur = std::move(next);
      }
      if (nc == 0) throw std::runtime_error("compute_product_terms_P: product is not nilpotent");
    }
    out.per_algebra.push_back(nc);
    out.N = std::max(out.N, nc);
  }
  for (int M = 0; M < out.N; ++M) {
    TermScheme f{"f" + std::to_string(M), {}};
    for (int k = 0; k < M; ++k) f.steps.push_back({{"prod", 1}});
    out.P.push_back(std::move(f));
  }
  for (int M = 1; M < out.N; ++M) {
    TermScheme g{"g" + std::to_string(M), {{{"prod", 0}}}};
    for (int k = 1; k < M; ++k) g.steps.push_back({{"prod", 1}});
    out.P.push_back(std::move(g));
  }
  return out;
}

MachineTerms compute_machine_terms_ST(const TuringMachine& tm,
                                      const std::vector<const ThetaResult*>& machines) {
  MachineTerms out;
  out.S.push_back({"id", {}});
  out.T.push_back({"id", {}});
  if (machines.empty()) {
    out.report = "no machine-type catalog entries; S = T = {id}";
    return out;
  }
  for (auto* th : machines) {
    int cycle = 0;
    if (th->monolith) {
      for (auto& b : th->monolith->blocks())
        if (b.size() > 1) cycle = std::max(cycle, static_cast<int>(b.size()) - 2);
    }
    out.depth_S = std::max<int>(out.depth_S, static_cast<int>(th->pn.N.size()) + cycle);
    out.depth_T = std::max(out.depth_T, cycle);
  }
  std::vector<std::pair<std::string, int>> all, orbit;
  for (auto& [name, arity] : aprime_signature(tm)) {
    bool machine = name.rfind("L(", 0) == 0 || name.rfind("R(", 0) == 0;
    bool u = name.rfind("U1:", 0) == 0 || name.rfind("U0:", 0) == 0;
    if (!machine && !u) continue;
    for (int pos = 0; pos < arity; ++pos) all.emplace_back(name, pos);
    if (machine) orbit.emplace_back(name, 2);
  }
  for (int d = 1; d <= out.depth_S; ++d)
    out.S.push_back({"S" + std::to_string(d), std::vector(d, all)});
  for (int d = 1; d <= out.depth_T; ++d)
    out.T.push_back({"G" + std::to_string(d), std::vector(d, orbit)});
  std::ostringstream os;
  os << machines.size() << " machine catalog entries; S depth " << out.depth_S << ", T depth "
     << out.depth_T;
  out.report = os.str();
  return out;
}

// ---------------------------------------------------------------- library

namespace {

struct Builder {
  const FiniteAlgebra& alg;
  Definition d;

  Builder(const FiniteAlgebra& a, std::string name, std::vector<std::string> params) : alg(a) {
    d.name = std::move(name);
    d.params = static_cast<int>(params.size());
    d.names = std::move(params);
  }
  int fresh(const std::string& base) {
    d.names.push_back(base + "#" + std::to_string(d.names.size()));
    return static_cast<int>(d.names.size()) - 1;
  }
  static Term V(int s) { return Term::v(s); }
  Term op(const char* name, std::vector<Term> args) const {
    int o = alg.op_index(name);
    if (o < 0) throw std::invalid_argument(std::string("library needs operation ") + name);
    return Term::app(o, std::move(args));
  }
  Term e(int i, const std::vector<int>& n, const Term& x) const {
    std::vector<Term> a;
    for (int s : n) a.push_back(V(s));
    a.insert(a.end(), {x, x, x});
    return op(i == 0 ? "S0" : i == 1 ? "S1" : "S2", std::move(a));
  }
  Term S(int j, const std::vector<int>& m, Term a, Term b, Term c) const {
    std::vector<Term> args;
    for (int s : m) args.push_back(V(s));
    args.insert(args.end(), {std::move(a), std::move(b), std::move(c)});
    return op(j == 0 ? "S0" : j == 1 ? "S1" : "S2", std::move(args));
  }
  std::vector<int> params(int i, const std::string& base) {
    std::vector<int> n;
    for (int k = 0; k < n_arity(i); ++k) n.push_back(fresh(base));
    return n;
  }
};

FormulaPtr mk(Formula f) { return std::make_shared<const Formula>(std::move(f)); }
FormulaPtr eq(Term a, Term b) {
  Formula f;
  f.kind = Formula::Kind::Eq;
  f.terms = {std::move(a), std::move(b)};
  return mk(std::move(f));
}
FormulaPtr junction(Formula::Kind k, std::vector<FormulaPtr> subs) {
  if (subs.size() == 1) return subs[0];
  Formula f;
  f.kind = k;
  f.subs = std::move(subs);
  return mk(std::move(f));
}
FormulaPtr all(std::vector<FormulaPtr> s) { return junction(Formula::Kind::And, std::move(s)); }
FormulaPtr any(std::vector<FormulaPtr> s) { return junction(Formula::Kind::Or, std::move(s)); }
FormulaPtr neg(FormulaPtr s) {
  Formula f;
  f.kind = Formula::Kind::Not;
  f.subs = {std::move(s)};
  return mk(std::move(f));
}
FormulaPtr quant(Formula::Kind k, std::vector<int> vars, FormulaPtr body) {
  Formula f;
  f.kind = k;
  f.vars = std::move(vars);
  f.subs = {std::move(body)};
  return mk(std::move(f));
}
FormulaPtr ex(std::vector<int> vars, FormulaPtr body) {
  return quant(Formula::Kind::Exists, std::move(vars), std::move(body));
}
FormulaPtr fa(std::vector<int> vars, FormulaPtr body) {
  return quant(Formula::Kind::Forall, std::move(vars), std::move(body));
}
FormulaPtr call(int def, std::vector<Term> args) {
  Formula f;
  f.kind = Formula::Kind::Call;
  f.def = def;
  f.terms = std::move(args);
  return mk(std::move(f));
}
FormulaPtr in_image(int scheme, Term y, Term z, Term w, Term x) {
  Formula f;
  f.kind = Formula::Kind::Image;
  f.scheme = scheme;
  f.terms = {std::move(y), std::move(z), std::move(w), std::move(x)};
  return mk(std::move(f));
}
FormulaPtr exists_image(int scheme, Term y, Term z, int g1, int g2, FormulaPtr body) {
  Formula f;
  f.kind = Formula::Kind::Image;
  f.scheme = scheme;
  f.terms = {std::move(y), std::move(z)};
  f.vars = {g1, g2};
  f.subs = {std::move(body)};
  return mk(std::move(f));
}

const std::vector<std::string> kWXYZ = {"w", "x", "y", "z"};

}  // namespace

Library build_library(AlgPtr algp, const LibraryOptions& opt) {
  Library lib(algp);
  const FiniteAlgebra& alg = *algp;
  using B = Builder;
  const Term w = B::V(0), x = B::V(1), y = B::V(2), z = B::V(3);

  // psi_0 / Gamma_0
  int psi0, gamma0;
  {
    B b(alg, "psi_0", kWXYZ), g(alg, "Gamma_0", kWXYZ);
    if (opt.strategy == BaseStrategy::Semantic) {
      Formula f;
      f.kind = Formula::Kind::InCg;
      f.terms = {w, x, y, z};
      b.d.body = mk(f);
      g.d.body = mk(f);
    } else {
      TermScheme all_tr{"translations" + std::to_string(opt.scheme_depth), {}};
      std::vector<std::pair<std::string, int>> alts;
      for (int o = 0; o < alg.op_count(); ++o)
        for (int p = 0; p < alg.op(o).arity; ++p) alts.emplace_back(alg.op(o).name, p);
      std::vector<FormulaPtr> links, single;
      for (int dpt = 0; dpt <= opt.scheme_depth; ++dpt) {
        TermScheme s{"tr" + std::to_string(dpt), std::vector(dpt, alts)};
        int id = lib.add_scheme(s);
        Formula f;
        f.kind = Formula::Kind::Chain;
        f.scheme = id;
        f.links = opt.scheme_links;
        f.terms = {w, x, y, z};
        links.push_back(mk(f));
        single.push_back(in_image(id, y, z, w, x));
        single.push_back(in_image(id, y, z, x, w));
      }
      b.d.body = any(std::move(links));
      g.d.body = any(std::move(single));
    }
    psi0 = lib.add(b.d);
    gamma0 = lib.add(g.d);
  }

  // psi_S: coupled S_j link over an e_i image.
  int psiS;
  {
    B b(alg, "psi_S", kWXYZ);
    std::vector<FormulaPtr> outer;
    for (int i = 0; i <= 2; ++i) {
      auto n = b.params(i, "n");
      Term ew = b.e(i, n, w), exx = b.e(i, n, x);
      std::vector<FormulaPtr> inner;
      for (int j = 0; j <= 2; ++j) {
        auto mm = b.params(j, "m");
        inner.push_back(ex(mm, all({eq(w, b.S(j, mm, w, x, ew)), eq(x, b.S(j, mm, w, x, exx))})));
      }
      outer.push_back(ex(n, all({eq(y, b.e(i, n, y)), eq(z, b.e(i, n, z)),
                                 call(psi0, {ew, exx, y, z}), any(std::move(inner))})));
    }
    b.d.body = any(std::move(outer));
    psiS = lib.add(b.d);
  }

  int psiJ;
  {
    B b(alg, "psi_J", kWXYZ);
    int q = b.fresh("b");
    Term ew = b.op("S2", {w, B::V(q), w, w, w}), exx = b.op("S2", {w, B::V(q), x, x, x});
    b.d.body = ex({q}, all({call(psiS, {ew, exx, y, z}), eq(w, b.op("J", {w, B::V(q), ew})),
                            eq(x, b.op("J", {w, B::V(q), exx}))}));
    psiJ = lib.add(b.d);
  }

  int psiJp;
  {
    B b(alg, "psi_Jp", kWXYZ);
    std::vector<FormulaPtr> cases;
    for (int i = 0; i <= 2; ++i) {
      auto n = b.params(i, "n");
      int a = b.fresh("a"), q = b.fresh("b");
      Term ew = b.e(i, n, w), exx = b.e(i, n, x);
      std::vector<int> vars = n;
      vars.insert(vars.end(), {a, q});
      cases.push_back(ex(vars, all({call(psiS, {ew, exx, y, z}),
                                    eq(w, b.op("Jp", {B::V(a), B::V(q), ew})),
                                    eq(x, b.op("Jp", {B::V(a), B::V(q), exx}))})));
    }
    b.d.body = any(std::move(cases));
    psiJp = lib.add(b.d);
  }

  const std::vector<std::string> kTWXYZ = {"t", "w", "x", "y", "z"};
  int alpha, beta;
  {
    B b(alg, "alpha_JpJ", kTWXYZ);
    const Term t = B::V(0), w1 = B::V(1), x1 = B::V(2), y1 = B::V(3), z1 = B::V(4);
    std::vector<FormulaPtr> cases;
    for (int i = 0; i <= 2; ++i) {
      auto n = b.params(i, "n");
      int a = b.fresh("a");
      Term ew = b.e(i, n, w1), exx = b.e(i, n, x1);
      std::vector<int> vars = n;
      vars.push_back(a);
      cases.push_back(ex(vars, all({call(psiS, {ew, exx, y1, z1}),
                                    eq(w1, b.op("Jp", {w1, B::V(a), ew})),
                                    eq(t, b.op("Jp", {w1, B::V(a), exx}))})));
    }
    b.d.body = any(std::move(cases));
    alpha = lib.add(b.d);
  }
  {
    B b(alg, "beta_JpJ", kTWXYZ);
    const Term t = B::V(0), w1 = B::V(1), x1 = B::V(2), y1 = B::V(3), z1 = B::V(4);
    int q = b.fresh("b");
    Term ew = b.op("S2", {w1, B::V(q), w1, w1, w1}), exx = b.op("S2", {w1, B::V(q), x1, x1, x1});
    b.d.body = ex({q}, all({call(psiS, {ew, exx, y1, z1}), eq(t, b.op("J", {t, B::V(q), ew})),
                            eq(x1, b.op("J", {t, B::V(q), exx}))}));
    beta = lib.add(b.d);
  }
  int psiJpJ;
  {
    B b(alg, "psi_JpJ", kWXYZ);
    int t = b.fresh("t");
    b.d.body = ex({t}, all({call(alpha, {B::V(t), w, x, y, z}), call(beta, {B::V(t), w, x, y, z})}));
    psiJpJ = lib.add(b.d);
  }
  auto compose_S = [&](const char* name, int first) {
    B b(alg, name, kWXYZ);
    int t = b.fresh("t");
    b.d.body = ex({t}, all({call(first, {w, B::V(t), y, z}), call(psiS, {B::V(t), x, y, z})}));
    return lib.add(b.d);
  };
  int psiJS = compose_S("psi_JS", psiJ);
  int psiJpS = compose_S("psi_JpS", psiJp);
  int psiJpJS = compose_S("psi_JpJS", psiJpJ);

  int psi1;
  {
    B b(alg, "psi_1", kWXYZ);
    std::vector<FormulaPtr> parts;
    for (int id : {psiS, psiJ, psiJp, psiJpJ, psiJS, psiJpS, psiJpJS})
      parts.push_back(call(id, {w, x, y, z}));
    parts.push_back(eq(w, x));
    b.d.body = any(std::move(parts));
    psi1 = lib.add(b.d);
  }
  auto symmetrize = [&](const char* name, int inner) {
    B b(alg, name, kWXYZ);
    int t = b.fresh("t");
    b.d.body = ex({t}, all({call(inner, {w, B::V(t), y, z}), call(inner, {x, B::V(t), y, z})}));
    return lib.add(b.d);
  };
  int psi2 = symmetrize("psi_2", psi1);

  int gamma1;
  {
    B b(alg, "Gamma_1", kWXYZ);
    std::vector<FormulaPtr> cases;
    for (int j = 0; j <= 2; ++j) {
      auto n = b.params(j, "n");
      cases.push_back(ex(n, call(gamma0, {w, x, b.e(j, n, y), b.e(j, n, z)})));
    }
    b.d.body = any(std::move(cases));
    gamma1 = lib.add(b.d);
  }

  auto image_union = [&](const char* name, const std::vector<TermScheme>& schemes) {
    B b(alg, name, kWXYZ);
    std::vector<FormulaPtr> parts;
    bool has_id = false;
    for (auto& s : schemes) has_id |= s.steps.empty();
    if (!has_id) parts.push_back(in_image(lib.add_scheme({"id", {}}), y, z, w, x));
    for (auto& s : schemes) parts.push_back(in_image(lib.add_scheme(s), y, z, w, x));
    b.d.body = any(std::move(parts));
    return lib.add(b.d);
  };
  int gammaDot = image_union("Gamma_dot", opt.P);

  int psiDot;
  {
    B b(alg, "psi_dot", kWXYZ);
    int t = b.fresh("t");
    b.d.body = any({ex({t}, all({eq(w, b.op("Jp", {w, B::V(t), y})), eq(x, b.op("Jp", {w, B::V(t), z}))})),
                    eq(w, x)});
    psiDot = lib.add(b.d);
  }
  int psi3 = symmetrize("psi_3", psiDot);

  int gammaT = image_union("Gamma_T", opt.S.empty() ? std::vector<TermScheme>{{"id", {}}} : opt.S);

  int psiT;
  {
    B b(alg, "psi_T", kWXYZ);
    int t = b.fresh("t"), g1 = b.fresh("g"), g2 = b.fresh("g");
    std::vector<TermScheme> T = opt.T.empty() ? std::vector<TermScheme>{{"id", {}}} : opt.T;
    std::vector<FormulaPtr> orbit;
    for (auto& s : T)
      orbit.push_back(exists_image(lib.add_scheme(s), y, z, g1, g2,
                                   all({eq(w, b.op("Jp", {w, B::V(t), B::V(g1)})),
                                        eq(x, b.op("Jp", {w, B::V(t), B::V(g2)}))})));
    b.d.body = any({ex({t}, any(std::move(orbit))), eq(w, x)});
    psiT = lib.add(b.d);
  }
  int psi4 = symmetrize("psi_4", psiT);

  int gammaI;
  {
    B b(alg, "Gamma_I", kWXYZ);
    b.d.body = call(gammaDot, {w, x, b.op("I", {y}), b.op("I", {z})});
    gammaI = lib.add(b.d);
  }
  int gamma;
  {
    B b(alg, "Gamma", kWXYZ);
    b.d.body = any({call(gamma1, {w, x, y, z}), call(gammaDot, {w, x, y, z}),
                    call(gammaT, {w, x, y, z}), call(gammaI, {w, x, y, z})});
    gamma = lib.add(b.d);
  }
  // The b <= a normalisation applied to an arbitrary pair.
  int gammaStar;
  {
    B b(alg, "Gamma_star", kWXYZ);
    int u = b.fresh("u");
    const Term U = B::V(u);
    b.d.body = ex({u}, all({eq(U, b.op("meet", {y, z})),
                            any({call(gamma, {w, x, y, U}), call(gamma, {w, x, z, U})})}));
    gammaStar = lib.add(b.d);
  }
  int psi;
  {
    B b(alg, "psi", kWXYZ);
    b.d.body = any({call(psi2, {w, x, y, z}), call(psi3, {w, x, y, z}), call(psi4, {w, x, y, z})});
    psi = lib.add(b.d);
  }

  if (opt.sentences) {
    {
      B b(alg, "sigma", {});
      int r = b.fresh("r"), s = b.fresh("s"), a = b.fresh("a"), bb = b.fresh("b"),
          c = b.fresh("c"), d = b.fresh("d");
      auto V = B::V;
      b.d.body = ex({r, s}, all({neg(eq(V(r), V(s))),
                                 fa({a, bb}, any({eq(V(a), V(bb)),
                                                  ex({c, d}, all({call(gammaStar, {V(c), V(d), V(a), V(bb)}),
                                                                  call(psi, {V(r), V(s), V(c), V(d)})}))}))}));
      lib.add(b.d);
    }
    {
      B b(alg, "zeta", {});
      auto V = B::V;
      int a = b.fresh("a"), bb = b.fresh("b"), a2 = b.fresh("a'"), b2 = b.fresh("b'");
      int c = b.fresh("c"), d = b.fresh("d"), c2 = b.fresh("c'"), d2 = b.fresh("d'");
      int r = b.fresh("r"), s = b.fresh("s");
      FormulaPtr rs = ex({r, s}, all({neg(eq(V(r), V(s))), call(psi, {V(r), V(s), V(c), V(d)}),
                                      call(psi, {V(r), V(s), V(c2), V(d2)})}));
      FormulaPtr body = ex({c, d, c2, d2}, all({call(gammaStar, {V(c), V(d), V(a), V(bb)}),
                                                call(gammaStar, {V(c2), V(d2), V(a2), V(b2)}), rs}));
      b.d.body = fa({a, bb, a2, b2}, any({eq(V(a), V(bb)), eq(V(a2), V(b2)), body}));
      lib.add(b.d);
    }
  }
  return lib;
}

LibraryOptions default_library_options(const std::vector<AlgPtr>& catalog) {
  LibraryOptions opt;
  opt.P = compute_product_terms_P(catalog).P;
  opt.S = {{"id", {}}};
  opt.T = {{"id", {}}};
  return opt;
}

// ---------------------------------------------------------------- DPSC

PiResult pi_psi_semantic(FormulaEvaluator& ev, int psi, Elem c, Elem d) {
  PiResult r;
  const Partition& cg = ev.cg(c, d);
  const int m = cg.size();
  for (Elem u = 0; u < m; ++u)
    for (Elem v = 0; v < m; ++v) {
      bool f = ev.call(psi, {u, v, c, d});
      bool in = cg.same(u, v);
      if (f == in) continue;
      r.ok = false;
      if (in)
        r.missing = {u, v};
      else
        r.spurious = {u, v};
      return r;
    }
  return r;
}

DpscWitness dpsc_witness_jonsson(const AlgPtr& algp, Elem a, Elem b) {
  const FiniteAlgebra& alg = *algp;
  if (a == b) throw std::invalid_argument("dpsc_witness_jonsson: a = b");
  std::optional<std::vector<Elem>> mbar;
  int which = -1;
  for (int i = 0; i <= 2 && !mbar; ++i)
    if ((mbar = in_class_Mi(alg, i))) which = i;
  if (!mbar) throw std::invalid_argument("dpsc_witness_jonsson: algebra is in no M_i");

  DpscWitness w;
  auto lab = [&](Elem e) { return alg.label(e); };
  {
    std::string s = "M_" + std::to_string(which) + " witness m =";
    for (Elem e : *mbar) s += " " + lab(e);
    w.transcript.push_back(s);
  }
  auto lattice = congruence_lattice(alg);
  auto cmi = completely_meet_irreducibles(lattice);
  const Partition* best = nullptr;
  for (auto& th : cmi)
    if (!th.same(a, b) && (!best || th.block_count() > best->block_count())) best = &th;
  if (!best) throw std::logic_error("dpsc_witness_jonsson: no separating meet-irreducible");
  w.transcript.push_back("factor kernel " + best->str(alg) + " (" +
                         std::to_string(best->block_count()) + " blocks)");

  std::vector<Elem> gens = {a, b};
  gens.insert(gens.end(), mbar->begin(), mbar->end());
  auto canon = best->canonical();
  for (Elem e = 0; e < alg.size(); ++e)
    if (canon[e] == e) gens.push_back(e);
  Subalgebra C = generated_subalgebra(algp, gens);
  Partition ker(C.alg->size());
  for (int i = 0; i < C.alg->size(); ++i)
    for (int j = i + 1; j < C.alg->size(); ++j)
      if (best->same(C.elems[i], C.elems[j])) ker.unite(i, j);
  w.transcript.push_back("subalgebra C of size " + std::to_string(C.alg->size()));

  auto clat = congruence_lattice(*C.alg);
  std::optional<Partition> alpha;
  for (auto& th : clat)
    if (!th.leq(ker)) alpha = alpha ? Partition::meet(*alpha, th) : th;
  if (!alpha) throw std::logic_error("dpsc_witness_jonsson: every congruence of C is below the kernel");
  for (int u = 0; u < C.alg->size(); ++u)
    for (int v = 0; v < C.alg->size(); ++v)
      if (u != v && alpha->same(u, v) && !ker.same(u, v)) {
        w.c = C.elems[u];
        w.d = C.elems[v];
        w.formula = "Gamma_0";
        w.transcript.push_back("alpha " + alpha->str(*C.alg) + " generated by (" + lab(w.c) + "," +
                               lab(w.d) + ")");
        if (!principal_congruence(alg, a, b).same(w.c, w.d))
          throw std::logic_error("dpsc_witness_jonsson: witness outside Cg(a,b)");
        return w;
      }
  throw std::logic_error("dpsc_witness_jonsson: alpha has no pair outside the kernel");
}

DpscReport dpsc_check(FormulaEvaluator& ev, int gamma, int psi,
                      const std::vector<std::string>& branches) {
  DpscReport rep;
  const int m = ev.cg(0, 0).size();
  std::unordered_map<std::uint64_t, bool> pi;
  auto pi_ok = [&](Elem c, Elem d) {
    std::uint64_t key = static_cast<std::uint64_t>(c) * m + d;
    auto it = pi.find(key);
    if (it != pi.end()) return it->second;
    bool r = pi_psi_semantic(ev, psi, c, d).ok;
    pi[key] = r;
    return r;
  };
  std::vector<std::string> names = branches;
  if (names.empty())
    for (const char* n : {"Gamma_1", "Gamma_dot", "Gamma_T", "Gamma_I"})
      if (ev.library().find(n) >= 0) names.push_back(n);
  for (Elem a = 0; a < m; ++a)
    for (Elem b = 0; b < m; ++b) {
      if (a == b) continue;
      bool found = false;
      for (Elem c = 0; c < m && !found; ++c)
        for (Elem d = 0; d < m && !found; ++d) {
          if (c == d || !ev.call(gamma, {c, d, a, b})) continue;
          if (!pi_ok(c, d)) continue;
          DpscEntry e{a, b, c, d, {}};
          const Elem ab = ev.library().alg().meet(a, b);
          for (auto& br : names)
            if (ev.call(br, {c, d, a, ab}) || ev.call(br, {c, d, b, ab})) {
              e.branch = br;
              break;
            }
          rep.witnesses.push_back(e);
          found = true;
        }
      if (!found) {
        rep.ok = false;
        rep.failed = {a, b};
        return rep;
      }
    }
  return rep;
}

}  // namespace dpsc
