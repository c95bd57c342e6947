#include "dpsc/chains.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "dpsc/aprime.hpp"

namespace dpsc {

namespace {

int need_op(const FiniteAlgebra& alg, const char* name) {
  int i = alg.op_index(name);
  if (i < 0) throw std::invalid_argument(std::string("algebra has no operation ") + name);
  return i;
}

struct Ctx {
  const FiniteAlgebra& A;
  Elem c, d;
  int J, Jp, K, meet, S[3];
  std::vector<EParams> all;  // every (i, n)
  std::vector<EParams> cd;   // those with e_i(n,c) = c and e_i(n,d) = d
  const Partition* cg = nullptr;
  FormulaEvaluator* ev = nullptr;
  int psiS = -1;
  std::vector<std::string>* trace = nullptr;

  Ctx(const FiniteAlgebra& a, Elem c_, Elem d_) : A(a), c(c_), d(d_) {
    J = need_op(a, "J");
    Jp = need_op(a, "Jp");
    K = need_op(a, "K");
    meet = need_op(a, "meet");
    S[0] = need_op(a, "S0");
    S[1] = need_op(a, "S1");
    S[2] = need_op(a, "S2");
    const int m = a.size();
    for (int i = 0; i < 2; ++i)
      for (Elem x = 0; x < m; ++x) all.push_back({i, {x}});
    for (Elem x = 0; x < m; ++x)
      for (Elem y = 0; y < m; ++y) all.push_back({2, {x, y}});
    for (auto& p : all)
      if (e(p, c) == c && e(p, d) == d) cd.push_back(p);
  }

  Elem e(const EParams& p, Elem x) const {
    if (p.i == 2) return A.apply(S[2], {p.n[0], p.n[1], x, x, x});
    return A.apply(S[p.i], {p.n[0], x, x, x});
  }
  Elem s(const EParams& o, Elem p, Elem q, Elem x) const {
    if (o.i == 2) return A.apply(S[2], {o.n[0], o.n[1], p, q, x});
    return A.apply(S[o.i], {o.n[0], p, q, x});
  }
  Elem j(Elem a, Elem b, Elem x) const { return A.apply(J, {a, b, x}); }
  Elem jp(Elem a, Elem b, Elem x) const { return A.apply(Jp, {a, b, x}); }
  Elem k(Elem a, Elem b, Elem x) const { return A.apply(K, {a, b, x}); }
  Elem e2(Elem a, Elem b, Elem x) const { return e({2, {a, b}}, x); }
  bool leq(Elem a, Elem b) const { return A.leq(a, b); }

  Term te(const EParams& p, const Term& x) const {
    std::vector<Term> args;
    for (Elem n : p.n) args.push_back(Term::c(n));
    args.insert(args.end(), {x, x, x});
    return Term::app(S[p.i], std::move(args));
  }
  Term ts(const EParams& o, Elem p, Elem q, const Term& x) const {
    std::vector<Term> args;
    for (Elem n : o.n) args.push_back(Term::c(n));
    args.insert(args.end(), {Term::c(p), Term::c(q), x});
    return Term::app(S[o.i], std::move(args));
  }
  Term t3(int op, Elem p, Elem q, const Term& x) const {
    return Term::app(op, {Term::c(p), Term::c(q), x});
  }

  bool in_cg(Elem a, Elem b) const { return !cg || cg->same(a, b); }
  bool psi_s(Elem a, Elem b) const {
    if (!ev || psiS < 0) return true;
    return ev->call(psiS, {a, b, c, d});
  }
  void note(const std::string& s) const {
    if (trace) trace->push_back(s);
  }

  std::vector<Elem> cands(std::initializer_list<Elem> hints) const {
    return cands(std::vector<Elem>(hints));
  }
  std::vector<Elem> cands(const std::vector<Elem>& hints) const {
    std::vector<Elem> out;
    std::vector<char> seen(A.size(), 0);
    for (Elem h : hints)
      if (h >= 0 && h < A.size() && !seen[h]) seen[h] = 1, out.push_back(h);
    for (Elem x = 0; x < A.size(); ++x)
      if (!seen[x]) out.push_back(x);
    return out;
  }
};

Term term_of(const FiniteAlgebra& alg, const UnaryPolynomial& g, Term x = Term::v(0)) {
  for (auto& st : g.steps) {
    std::vector<Term> args;
    const int k = alg.op(st.op).arity;
    for (int i = 0, j = 0; i < k; ++i) args.push_back(i == st.pos ? x : Term::c(st.consts[j++]));
    x = Term::app(st.op, std::move(args));
  }
  return x;
}

Term substitute(const Term& t, const Term& x) {
  if (t.kind == Term::Kind::Var) return x;
  if (t.kind == Term::Kind::Const) return t;
  std::vector<Term> args;
  for (auto& a : t.args) args.push_back(substitute(a, x));
  return Term::app(t.op, std::move(args));
}

bool absorbing_step(const FiniteAlgebra& alg, const FundamentalTranslation& st) {
  auto bad = expected_non_absorbing(alg.op(st.op).name);
  return std::find(bad.begin(), bad.end(), st.pos) == bad.end();
}

// Acceptance of a finished link beyond its endpoint equations: the inner
// pair must satisfy psi_S as the final formulas demand.
bool accept_inner(const Ctx& x, const LinkForm& l) {
  if (l.head == Head::S) return true;
  return x.psi_s(x.e(l.inner, l.a_top), x.e(l.inner, l.a_bottom));
}

// ---------------------------------------------------------------- labelling

// u = J(u,q,e2(base,q,atop)), v = J(u,q,e2(base,q,abot)); g maps c,d to atop,abot.
std::optional<LinkForm> label_J(const Ctx& x, Elem u, Elem v, Elem base, Elem atop, Elem abot,
                                const std::vector<Elem>& hints, const Term* g, bool need_psi) {
  for (Elem q : x.cands(hints)) {
    if (x.j(u, q, x.e2(base, q, atop)) != u || x.j(u, q, x.e2(base, q, abot)) != v) continue;
    LinkForm l;
    l.head = Head::J;
    l.top = u, l.bottom = v, l.p = u, l.q = q;
    l.inner = {2, {base, q}};
    l.a_top = atop, l.a_bottom = abot;
    if (need_psi && !accept_inner(x, l)) continue;
    if (g) l.poly = x.t3(x.J, u, q, x.te(l.inner, *g));
    return l;
  }
  return std::nullopt;
}

std::optional<LinkForm> label_Jp(const Ctx& x, Elem u, Elem v, Elem atop, Elem abot,
                                 const std::vector<Elem>& hints, const Term* g, bool need_psi,
                                 const std::vector<EParams>* ep_hints = nullptr) {
  std::vector<const EParams*> eps;
  if (ep_hints)
    for (auto& p : *ep_hints) eps.push_back(&p);
  for (auto& p : x.all) eps.push_back(&p);
  auto cs = x.cands(hints);
  for (const EParams* ep : eps) {
    Elem et = x.e(*ep, atop), eb = x.e(*ep, abot);
    for (Elem q : cs) {
      if (x.jp(u, q, et) != u || x.jp(u, q, eb) != v) continue;
      LinkForm l;
      l.head = Head::Jp;
      l.top = u, l.bottom = v, l.p = u, l.q = q;
      l.inner = *ep;
      l.a_top = atop, l.a_bottom = abot;
      if (need_psi && !accept_inner(x, l)) break;  // independent of q
      if (g) l.poly = x.t3(x.Jp, u, q, x.te(*ep, *g));
      return l;
    }
  }
  return std::nullopt;
}

std::optional<LinkForm> label_S(const Ctx& x, Elem u, Elem v, const Term* g,
                                const std::vector<EParams>& outer_hints = {}) {
  for (auto& ip : x.cd) {
    Elem eu = x.e(ip, u), ev = x.e(ip, v);
    if (!x.in_cg(eu, ev)) continue;
    auto try_outer = [&](const EParams& op) -> std::optional<LinkForm> {
      if (x.s(op, u, v, eu) != u || x.s(op, u, v, ev) != v) return std::nullopt;
      LinkForm l;
      l.head = Head::S;
      l.top = u, l.bottom = v, l.p = u, l.q = v;
      l.outer = op, l.inner = ip;
      l.a_top = u, l.a_bottom = v;
      if (g) l.poly = x.ts(op, u, v, x.te(ip, *g));
      return l;
    };
    for (auto& op : outer_hints)
      if (auto l = try_outer(op)) return l;
    for (auto& op : x.all)
      if (auto l = try_outer(op)) return l;
  }
  return std::nullopt;
}

// A J'-J pair from w down to s in the alpha/beta shape, or a single link
// when the intermediate element coincides with an endpoint.
std::optional<std::vector<LinkForm>> search_JpJ(const Ctx& x, Elem w, Elem s,
                                                const std::vector<Elem>& hints, bool need_psi) {
  auto cs = x.cands(hints);
  for (auto& ep : x.all) {
    Elem ew = x.e(ep, w), es = x.e(ep, s);
    if (need_psi && !x.psi_s(ew, es)) continue;
    for (Elem a : cs) {
      if (x.jp(w, a, ew) != w) continue;
      Elem t = x.jp(w, a, es);
      if (!x.leq(s, t) || !x.in_cg(w, t)) continue;
      LinkForm l;
      l.head = Head::Jp;
      l.top = w, l.bottom = t, l.p = w, l.q = a, l.inner = ep;
      l.a_top = w, l.a_bottom = s;
      l.origin = "search";
      if (t == s) return std::vector<LinkForm>{l};
      if (auto lj = label_J(x, t, s, w, w, s, {a}, nullptr, need_psi)) {
        lj->origin = "search";
        if (t == w) return std::vector<LinkForm>{*lj};
        return std::vector<LinkForm>{l, *lj};
      }
    }
  }
  return std::nullopt;
}

// Single link or a two-link split for the pair (r,s) with g(c) = r, g(d) = s.
std::optional<std::vector<LinkForm>> search_link(const Ctx& x, Elem r, Elem s, const Term& g,
                                                 const std::vector<Elem>& hints) {
  for (bool need : {true, false}) {
    if (!need && !x.ev) break;
    if (auto l = label_J(x, r, s, r, r, s, hints, &g, need)) return std::vector<LinkForm>{*l};
    if (auto l = label_Jp(x, r, s, r, s, hints, &g, need)) return std::vector<LinkForm>{*l};
  }
  // J then J'
  for (Elem q : x.cands(hints)) {
    if (x.j(r, q, x.e2(r, q, r)) != r) continue;
    Elem t = x.j(r, q, x.e2(r, q, s));
    if (t == r || t == s || !x.leq(s, t) || !x.in_cg(r, t)) continue;
    auto l1 = label_J(x, r, t, r, r, s, {q}, &g, false);
    auto l2 = label_Jp(x, t, s, r, s, hints, &g, false);
    if (l1 && l2) return std::vector<LinkForm>{*l1, *l2};
  }
  // J' then J
  auto cs = x.cands(hints);
  for (auto& ep : x.all) {
    Elem er = x.e(ep, r), es = x.e(ep, s);
    for (Elem a : cs) {
      if (x.jp(r, a, er) != r) continue;
      Elem t = x.jp(r, a, es);
      if (t == r || t == s || !x.leq(s, t) || !x.in_cg(r, t)) continue;
      auto l2 = label_J(x, t, s, r, r, s, hints, &g, false);
      if (!l2) continue;
      LinkForm l1;
      l1.head = Head::Jp;
      l1.top = r, l1.bottom = t, l1.p = r, l1.q = a, l1.inner = ep;
      l1.a_top = r, l1.a_bottom = s;
      l1.poly = x.t3(x.Jp, r, a, x.te(ep, g));
      return std::vector<LinkForm>{l1, *l2};
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- head shapes

std::optional<HeadShape> normalize_rec(const Ctx& x, const UnaryPolynomial& g, Elem c, Elem d,
                                       const std::vector<EParams>& eps, int depth) {
  const FiniteAlgebra& A = x.A;
  const Elem gc = g.apply(A, c), gd = g.apply(A, d);
  const Term gt = term_of(A, g);
  auto check = [&](const Term& t) {
    return eval_unary(A, t, c) == gc && eval_unary(A, t, d) == gd;
  };
  for (auto& ep : eps) {
    if (x.e(ep, gc) != gc || x.e(ep, gd) != gd) continue;
    HeadShape sh;
    sh.head = Head::S;
    sh.outer = ep;
    sh.p = gc, sh.q = gd;
    sh.g = x.ts(ep, gc, gd, x.te(ep, gt));
    sh.top = gc, sh.bottom = gd;
    sh.note = "images in e_" + std::to_string(ep.i) + " range";
    if (check(sh.g)) return sh;
  }
  std::size_t k = 0;
  while (k < g.steps.size() && absorbing_step(A, g.steps[k])) ++k;
  if (k == g.steps.size()) return std::nullopt;
  const auto& F = g.steps[k];
  UnaryPolynomial h, f;
  h.steps.assign(g.steps.begin(), g.steps.begin() + k);
  f.steps.assign(g.steps.begin() + k + 1, g.steps.end());
  const std::string& name = A.op(F.op).name;
  if (name == "J" || name == "Jp" || name == "K") {
    HeadShape sh;
    sh.head = name == "J" ? Head::J : name == "Jp" ? Head::Jp : Head::K;
    sh.p = F.consts[0], sh.q = F.consts[1];
    sh.h = h, sh.f = f;
    sh.g = gt;
    sh.top = gc, sh.bottom = gd;
    sh.note = "first non-absorbing step " + F.str(A);
    return sh;
  }
  const int j = name == "S0" ? 0 : name == "S1" ? 1 : name == "S2" ? 2 : -1;
  if (j < 0 || depth > 8) return std::nullopt;
  const std::size_t np = j == 2 ? 2 : 1;
  EParams ep{j, std::vector<Elem>(F.consts.begin(), F.consts.begin() + np)};
  const Elem y = F.consts[np], z = F.consts[np + 1];
  const Term ht = term_of(A, h);
  bool f_abs = std::all_of(f.steps.begin(), f.steps.end(),
                           [&](const FundamentalTranslation& st) { return absorbing_step(A, st); });
  if (f_abs) {
    HeadShape sh;
    sh.head = Head::S;
    sh.outer = ep;
    sh.p = gc, sh.q = gd;
    sh.h = h;
    sh.h.steps.insert(sh.h.steps.end(), f.steps.begin(), f.steps.end());
    sh.g = x.ts(ep, gc, gd, term_of(A, f, ht));
    sh.top = gc, sh.bottom = gd;
    sh.note = "S_" + std::to_string(j) + " commuted past a 0-absorbing tail";
    if (check(sh.g)) return sh;
  }
  const Elem hc = h.apply(A, c), hd = h.apply(A, d);
  const Elem c0 = x.s(ep, y, z, hc), d0 = x.s(ep, y, z, hd);
  if (c0 == d0) return std::nullopt;
  auto sub = normalize_rec(x, f, c0, d0, {ep}, depth + 1);
  if (!sub) return std::nullopt;
  const Term inner = x.ts(ep, y, z, ht);
  HeadShape sh = *sub;
  sh.g = substitute(sub->g, inner);
  UnaryPolynomial pre = h;
  pre.steps.push_back(F);
  pre.steps.insert(pre.steps.end(), sub->h.steps.begin(), sub->h.steps.end());
  sh.h = pre;
  sh.top = gc, sh.bottom = gd;
  sh.note = "through " + F.str(A) + ": " + sub->note;
  if (!check(sh.g)) return std::nullopt;
  return sh;
}

std::vector<LinkForm> rewrite_impl(const Ctx& x, const HeadShape& sh) {
  const Elem r = sh.top, s = sh.bottom;
  const Term& g = sh.g;
  const Elem p = sh.p, q = sh.q;
  if (sh.head == Head::S) {
    if (auto l = label_S(x, r, s, &g, {sh.outer})) {
      l->origin = "template";
      return {*l};
    }
  } else if (sh.head == Head::J) {
    for (bool need : {true, false})
      if (auto l = label_J(x, r, s, r, r, s, {q, x.j(q, p, q), x.k(r, p, q)}, &g, need)) {
        l->origin = "template";
        return {*l};
      }
  } else if (sh.head == Head::Jp) {
    for (bool need : {true, false})
      if (auto l = label_Jp(x, r, s, r, s, {q, x.jp(q, p, q)}, &g, need)) {
        l->origin = "template";
        return {*l};
      }
  } else {
    const Term ht = term_of(x.A, sh.h);
    const Elem rho = x.k(r, p, q);
    Term g1 = x.t3(x.J, r, rho, Term::app(x.S[2], {Term::c(r), Term::c(rho), Term::c(r),
                                                    Term::c(s), ht}));
    const Elem t1 = eval_unary(x.A, g1, x.d);
    if (eval_unary(x.A, g1, x.c) == r && x.leq(s, t1) && x.leq(t1, r) && x.in_cg(r, t1)) {
      const Elem rho2 = x.k(t1, p, q);
      Term g2 = x.t3(x.Jp, t1, rho2, ht);
      if (eval_unary(x.A, g2, x.c) == t1 && eval_unary(x.A, g2, x.d) == s) {
        std::vector<LinkForm> out;
        bool ok = true;
        if (t1 != r) {
          auto l1 = label_J(x, r, t1, r, r, t1, {rho}, &g1, false);
          if (l1) out.push_back(*l1);
          else ok = false;
        }
        if (ok && t1 != s) {
          auto l2 = label_Jp(x, t1, s, t1, s, {rho2}, &g2, false);
          if (l2) out.push_back(*l2);
          else ok = false;
        }
        if (ok && !out.empty()) {
          for (auto& l : out) l.origin = "template";
          return out;
        }
      }
    }
  }
  auto hints = std::vector<Elem>{q, p, x.k(r, p, q), x.j(q, p, q), x.jp(q, p, q)};
  if (auto v = search_link(x, r, s, g, hints)) {
    for (auto& l : *v) l.origin = "search";
    return *v;
  }
  if (sh.head != Head::S)
    if (auto l = label_S(x, r, s, &g)) {
      l->origin = "search";
      return {*l};
    }
  throw ChainError("no J/J' rewrite for link " + x.A.label(r) + " -> " + x.A.label(s));
}

// ---------------------------------------------------------------- collapses

void assert_segment(const Ctx& x, const std::vector<LinkForm>& out, Elem top, Elem bottom,
                    const char* what) {
  if (out.empty()) {
    if (top != bottom) throw ChainError(std::string(what) + ": empty output for a proper segment");
    return;
  }
  if (out.front().top != top || out.back().bottom != bottom)
    throw ChainError(std::string(what) + ": endpoints not preserved");
  for (std::size_t i = 0; i + 1 < out.size(); ++i)
    if (out[i].bottom != out[i + 1].top) throw ChainError(std::string(what) + ": broken chain");
  for (auto& l : out)
    if (!verify_link(x.A, l, x.c, x.d, x.cg))
      throw ChainError(std::string(what) + ": link fails verification: " + describe(x.A, l));
}

LinkForm collapse_J_impl(const Ctx& x, const std::vector<LinkForm>& run) {
  if (run.empty()) throw ChainError("collapse_J_run: empty run");
  const Elem r = run.front().top, s = run.back().bottom;
  for (auto& l : run)
    if (x.j(l.p, l.q, l.top) != l.top || x.j(l.p, l.q, l.bottom) != l.bottom)
      throw ChainError("collapse_J_run: link is not J-headed: " + describe(x.A, l));
  std::vector<Elem> hints;
  hints.push_back(run[0].q);
  Elem rho = x.j(run[0].q, run[0].p, run[0].q);
  for (std::size_t i = 1; i < run.size(); ++i) rho = x.k(r, rho, x.j(run[i].q, run[i].p, run[i].q));
  hints.push_back(rho);
  Elem plain = run[0].q;
  for (std::size_t i = 1; i < run.size(); ++i) plain = x.k(r, plain, run[i].q);
  hints.push_back(plain);
  std::vector<Elem> consts;
  for (auto& l : run) consts.insert(consts.end(), {l.p, l.q, x.j(l.q, l.p, l.q)});
  for (Elem a : consts)
    for (Elem b : consts) hints.push_back(x.k(r, a, b));
  if (r == s) hints.insert(hints.begin(), r);
  for (bool need : {true, false}) {
    if (!need && !x.ev) break;
    if (auto l = label_J(x, r, s, r, r, s, hints, nullptr, need)) {
      l->origin = run.size() == 1 && l->q == run[0].q ? "base" : "K-template";
      if (std::find(hints.begin(), hints.begin() + 3, l->q) == hints.begin() + 3)
        l->origin = "search";
      if (run.size() == 1 && run[0].poly && run[0].q == l->q && run[0].inner.n == l->inner.n &&
          run[0].a_top == r)
        l->poly = run[0].poly;
      return *l;
    }
  }
  throw ChainError("collapse_J_run: no constant rho for " + x.A.label(r) + " -> " + x.A.label(s));
}

std::vector<LinkForm> collapse_Jp_impl(const Ctx& x, const std::vector<LinkForm>& run) {
  if (run.empty()) throw ChainError("collapse_Jprime_run: empty run");
  const Elem r = run.front().top, s = run.back().bottom;
  if (r == s) return {};
  if (run.size() == 1) return run;
  const LinkForm& f = run.front();
  std::vector<Elem> hints;
  for (auto& l : run) hints.insert(hints.end(), {l.q, x.jp(l.q, l.p, l.q), x.k(r, f.q, l.q)});
  for (bool need : {true, false}) {
    if (!need && !x.ev) break;
    // t = J'(r, q_1, e_{j1}(n_1, s))
    if (x.jp(r, f.q, x.e(f.inner, r)) == r) {
      Elem t = x.jp(r, f.q, x.e(f.inner, s));
      if (x.leq(s, t) && x.in_cg(r, t)) {
        LinkForm l1 = f;
        l1.bottom = t, l1.p = r, l1.a_top = r, l1.a_bottom = s, l1.poly.reset();
        l1.origin = "template";
        if (!need || accept_inner(x, l1)) {
          if (t == s) return {l1};
          if (auto l2 = label_J(x, t, s, r, r, s, hints, nullptr, need)) {
            l2->origin = "template";
            if (t == r) return {*l2};
            return {l1, *l2};
          }
        }
      }
    }
    if (auto v = search_JpJ(x, r, s, hints, need)) return *v;
  }
  throw ChainError("collapse_Jprime_run: no J'-J pair for " + x.A.label(r) + " -> " +
                   x.A.label(s));
}

std::vector<LinkForm> swap_impl(const Ctx& x, const LinkForm& lj, const LinkForm& ljp) {
  const Elem r = lj.top, t = lj.bottom, s = ljp.bottom;
  if (t != ljp.top) throw ChainError("swap_J_Jprime: links do not meet");
  if (r == t) return {ljp};
  if (t == s) return {lj};
  const Elem q1 = x.j(lj.p, lj.q, lj.p), q2 = x.jp(ljp.p, ljp.q, ljp.p);
  std::vector<Elem> rhos = {x.k(r, q1, q2), x.k(r, lj.q, ljp.q)};
  for (Elem a : {lj.q, q1, ljp.q, q2, lj.p, ljp.p})
    for (Elem b : {lj.q, q1, ljp.q, q2, lj.p, ljp.p}) rhos.push_back(x.k(r, a, b));
  for (bool need : {true, false}) {
    if (!need && !x.ev) break;
    for (Elem rho : rhos) {
      const EParams& ep = ljp.inner;
      if (x.jp(r, rho, x.e(ep, r)) != r) continue;
      const Elem u = x.jp(r, rho, x.e(ep, s));
      if (!x.leq(s, u) || !x.in_cg(r, u)) continue;
      LinkForm l1;
      l1.head = Head::Jp;
      l1.top = r, l1.bottom = u, l1.p = r, l1.q = rho, l1.inner = ep;
      l1.a_top = r, l1.a_bottom = s;
      l1.origin = "template";
      if (need && !accept_inner(x, l1)) continue;
      if (u == s) return {l1};
      auto l2 = label_J(x, u, s, r, r, s, {rho}, nullptr, need);
      if (!l2) continue;
      l2->origin = "template";
      if (u == r) return {*l2};
      return {l1, *l2};
    }
    if (auto v = search_JpJ(x, r, s, rhos, need)) return *v;
  }
  throw ChainError("swap_J_Jprime: no J'-J pair for " + x.A.label(r) + " -> " + x.A.label(s));
}

// The finished J'-J prefix must use the overall top inside both e-terms.
std::optional<std::vector<LinkForm>> finish_prefix(const Ctx& x, const std::vector<LinkForm>& seq) {
  if (seq.empty()) return seq;
  const Elem w = seq.front().top, s = seq.back().bottom;
  std::vector<Elem> hints;
  for (auto& l : seq) hints.push_back(l.q);
  if (seq.size() == 1 && seq[0].head == Head::J) {
    for (bool need : {true, false})
      if (auto l = label_J(x, w, s, w, w, s, hints, nullptr, need)) return std::vector<LinkForm>{*l};
    return std::nullopt;
  }
  if (seq.size() == 1 && seq[0].head == Head::Jp) {
    std::vector<EParams> eh = {seq[0].inner};
    for (bool need : {true, false})
      if (auto l = label_Jp(x, w, s, w, s, hints, nullptr, need, &eh)) return std::vector<LinkForm>{*l};
    return std::nullopt;
  }
  if (seq.size() == 2 && seq[0].head == Head::Jp && seq[1].head == Head::J) {
    const Elem t = seq[0].bottom;
    const LinkForm& a = seq[0];
    for (bool need : {true, false}) {
      if (x.jp(w, a.q, x.e(a.inner, w)) == w && x.jp(w, a.q, x.e(a.inner, s)) == t) {
        LinkForm l1 = a;
        l1.p = w, l1.a_top = w, l1.a_bottom = s, l1.poly.reset();
        if (!need || accept_inner(x, l1))
          if (auto l2 = label_J(x, t, s, w, w, s, hints, nullptr, need))
            return std::vector<LinkForm>{l1, *l2};
      }
      if (auto v = search_JpJ(x, w, s, hints, need)) return v;
    }
    return std::nullopt;
  }
  return std::nullopt;
}

std::string pattern(const std::vector<LinkForm>& seq) {
  std::string p;
  for (auto& l : seq) p += (p.empty() ? "" : "-") + to_string(l.head);
  return p.empty() ? "()" : p;
}

}  // namespace

// ---------------------------------------------------------------- public

Elem eval_unary(const FiniteAlgebra& alg, const Term& t, Elem x) {
  switch (t.kind) {
    case Term::Kind::Var: return x;
    case Term::Kind::Const: return t.value;
    case Term::Kind::App: {
      Elem buf[16];
      for (std::size_t i = 0; i < t.args.size(); ++i) buf[i] = eval_unary(alg, t.args[i], x);
      return alg.apply(t.op, buf);
    }
  }
  return x;
}

bool verify_chain(const FiniteAlgebra& alg, const MaltsevChain& ch, Elem c, Elem d) {
  if (ch.elems.empty()) return ch.links.empty();
  if (ch.links.size() + 1 != ch.elems.size()) return false;
  for (std::size_t k = 0; k < ch.links.size(); ++k) {
    Elem a = ch.links[k].poly.apply(alg, c), b = ch.links[k].poly.apply(alg, d);
    if (!ch.links[k].forward) std::swap(a, b);
    if (a != ch.elems[k] || b != ch.elems[k + 1]) return false;
  }
  return true;
}

bool is_decreasing(const FiniteAlgebra& alg, const MaltsevChain& ch) {
  for (std::size_t k = 0; k + 1 < ch.elems.size(); ++k)
    if (ch.elems[k + 1] == ch.elems[k] || !alg.leq(ch.elems[k + 1], ch.elems[k])) return false;
  return true;
}

std::string describe(const FiniteAlgebra& alg, const MaltsevChain& ch) {
  std::ostringstream os;
  for (std::size_t k = 0; k < ch.elems.size(); ++k) {
    if (k) {
      const auto& l = ch.links[k - 1];
      os << " -[" << l.poly.str(alg) << (l.forward ? "" : " rev") << "]- ";
    }
    os << alg.label(ch.elems[k]);
  }
  return os.str();
}

std::optional<MaltsevChain> find_maltsev_chain(const FiniteAlgebra& alg, Elem c, Elem d, Elem r,
                                               Elem s, int depth, int length) {
  MaltsevChain out;
  out.elems.push_back(r);
  if (r == s) return out;
  const int m = alg.size();
  auto key = [m](Elem a, Elem b) { return static_cast<long>(a) * m + b; };
  struct Node {
    long parent;
    FundamentalTranslation step;
  };
  std::map<long, Node> seen;
  seen[key(c, d)] = {-1, {}};
  std::vector<std::pair<Elem, Elem>> frontier = {{c, d}};
  for (int lvl = 0; lvl < depth && !frontier.empty(); ++lvl) {
    std::vector<std::pair<Elem, Elem>> next;
    for (auto [u, v] : frontier) {
      if (u == v) continue;
      for (int op = 0; op < alg.op_count(); ++op) {
        const int k = alg.op(op).arity;
        if (k == 0) continue;
        for (int pos = 0; pos < k; ++pos) {
          std::vector<Elem> cs(k - 1, 0);
          while (true) {
            FundamentalTranslation st{op, pos, cs};
            Elem a = st.apply(alg, u), b = st.apply(alg, v);
            if (a != b && !seen.count(key(a, b))) {
              seen[key(a, b)] = {key(u, v), st};
              next.push_back({a, b});
            }
            int i = 0;
            while (i < k - 1 && ++cs[i] == m) cs[i++] = 0;
            if (i == k - 1) break;
          }
        }
      }
    }
    frontier = std::move(next);
  }
  auto poly_of = [&](long kk) {
    UnaryPolynomial g;
    while (seen.at(kk).parent >= 0) {
      g.steps.push_back(seen.at(kk).step);
      kk = seen.at(kk).parent;
    }
    std::reverse(g.steps.begin(), g.steps.end());
    return g;
  };
  // Path search over the image graph.
  std::map<Elem, std::vector<std::pair<Elem, std::pair<long, bool>>>> adj;
  for (auto& [kk, node] : seen) {
    Elem a = static_cast<Elem>(kk / m), b = static_cast<Elem>(kk % m);
    if (a == b) continue;
    adj[a].push_back({b, {kk, true}});
    adj[b].push_back({a, {kk, false}});
  }
  std::map<Elem, std::pair<Elem, std::pair<long, bool>>> prev;
  std::map<Elem, int> dist;
  std::deque<Elem> q = {r};
  dist[r] = 0;
  while (!q.empty()) {
    Elem u = q.front();
    q.pop_front();
    if (u == s || dist[u] >= length) continue;
    for (auto& [v, lk] : adj[u])
      if (!dist.count(v)) {
        dist[v] = dist[u] + 1;
        prev[v] = {u, lk};
        q.push_back(v);
      }
  }
  if (!dist.count(s)) return std::nullopt;
  std::vector<Elem> path = {s};
  std::vector<ChainLink> links;
  for (Elem v = s; v != r; v = prev[v].first) {
    links.push_back({poly_of(prev[v].second.first), prev[v].second.second});
    path.push_back(prev[v].first);
  }
  std::reverse(path.begin(), path.end());
  std::reverse(links.begin(), links.end());
  out.elems = path;
  out.links = links;
  return out;
}

DecreasingPair make_decreasing(const FiniteAlgebra& alg, const MaltsevChain& ch, Elem c, Elem d) {
  if (!verify_chain(alg, ch, c, d)) throw std::invalid_argument("make_decreasing: chain does not verify");
  DecreasingPair out;
  if (ch.elems.empty()) return out;
  const int meet = need_op(alg, "meet");
  const std::size_t n = ch.elems.size();
  // Walks the chain in the given direction keeping running meets.
  auto walk = [&](bool reverse) {
    MaltsevChain m;
    auto at = [&](std::size_t i) { return reverse ? ch.elems[n - 1 - i] : ch.elems[i]; };
    Elem t = at(0);
    m.elems.push_back(t);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const ChainLink& l = reverse ? ch.links[n - 2 - i] : ch.links[i];
      Elem nt = alg.meet(t, at(i + 1));
      if (nt == t) continue;
      ChainLink nl = l;
      if (reverse) nl.forward = !nl.forward;
      Elem a = l.poly.apply(alg, c), b = l.poly.apply(alg, d);
      if (!nl.forward) std::swap(a, b);
      if (a != t || b != nt) nl.poly.steps.push_back({meet, 0, {t}});
      m.elems.push_back(nt);
      m.links.push_back(nl);
      t = nt;
    }
    return m;
  };
  out.down = walk(false);
  out.up = walk(true);
  out.t = out.down.elems.back();
  if (!verify_chain(alg, out.down, c, d) || !verify_chain(alg, out.up, c, d) ||
      out.up.elems.back() != out.t)
    throw ChainError("make_decreasing: meet chains fail verification");
  return out;
}

std::string to_string(Head h) {
  switch (h) {
    case Head::S: return "S";
    case Head::J: return "J";
    case Head::Jp: return "J'";
    case Head::K: return "K";
  }
  return "?";
}

Elem link_value(const FiniteAlgebra& alg, const LinkForm& l, Elem a) {
  Ctx x(alg, 0, 0);
  Elem ea = x.e(l.inner, a);
  switch (l.head) {
    case Head::S: return x.s(l.outer, l.p, l.q, ea);
    case Head::J: return x.j(l.p, l.q, ea);
    case Head::Jp: return x.jp(l.p, l.q, ea);
    case Head::K: return x.k(l.p, l.q, ea);
  }
  return a;
}

namespace {
bool verify_link_ctx(const Ctx& x, const LinkForm& l) {
  auto val = [&](Elem a) {
    Elem ea = x.e(l.inner, a);
    switch (l.head) {
      case Head::S: return x.s(l.outer, l.p, l.q, ea);
      case Head::J: return x.j(l.p, l.q, ea);
      case Head::Jp: return x.jp(l.p, l.q, ea);
      case Head::K: return x.k(l.p, l.q, ea);
    }
    return a;
  };
  if (val(l.a_top) != l.top || val(l.a_bottom) != l.bottom) return false;
  if (!x.leq(l.bottom, l.top)) return false;
  if (l.poly && (eval_unary(x.A, *l.poly, x.c) != l.top || eval_unary(x.A, *l.poly, x.d) != l.bottom))
    return false;
  if (l.head == Head::S) {
    if (x.e(l.inner, x.c) != x.c || x.e(l.inner, x.d) != x.d) return false;
    if (!x.in_cg(x.e(l.inner, l.a_top), x.e(l.inner, l.a_bottom))) return false;
  }
  return x.in_cg(l.top, l.bottom);
}
}  // namespace

bool verify_link(const FiniteAlgebra& alg, const LinkForm& l, Elem c, Elem d, const Partition* cg) {
  Ctx x(alg, c, d);
  x.cg = cg;
  return verify_link_ctx(x, l);
}

std::string describe(const FiniteAlgebra& alg, const LinkForm& l) {
  auto ps = [&](const EParams& e) {
    std::string s = "e" + std::to_string(e.i) + "(";
    for (std::size_t i = 0; i < e.n.size(); ++i) s += (i ? "," : "") + alg.label(e.n[i]);
    return s + ",";
  };
  std::ostringstream os;
  os << alg.label(l.top) << " -> " << alg.label(l.bottom) << " : " << to_string(l.head);
  if (l.head == Head::S) os << "_" << l.outer.i;
  os << "(p=" << alg.label(l.p) << ", q=" << alg.label(l.q) << ", " << ps(l.inner)
     << alg.label(l.a_top) << "|" << alg.label(l.a_bottom) << "))";
  if (!l.origin.empty()) os << " [" << l.origin << "]";
  return os.str();
}

HeadShape head_normalize(const FiniteAlgebra& alg, const UnaryPolynomial& g, Elem c, Elem d) {
  Ctx x(alg, c, d);
  if (x.cd.empty()) throw ChainError("head_normalize: c, d not in a common e_i range");
  const Elem gc = g.apply(alg, c), gd = g.apply(alg, d);
  if (gc == gd || !alg.leq(gd, gc)) throw ChainError("head_normalize: need g(d) < g(c)");
  auto sh = normalize_rec(x, g, c, d, x.cd, 0);
  if (!sh) throw ChainError("head_normalize: no shape verifies for " + g.str(alg));
  return *sh;
}

std::vector<LinkForm> rewrite_link(const FiniteAlgebra& alg, const HeadShape& shape, Elem c, Elem d) {
  Ctx x(alg, c, d);
  Partition cg = principal_congruence(alg, c, d);
  x.cg = &cg;
  auto out = rewrite_impl(x, shape);
  assert_segment(x, out, shape.top, shape.bottom, "rewrite_link");
  return out;
}

LinkForm collapse_J_run(const FiniteAlgebra& alg, const std::vector<LinkForm>& run, Elem c, Elem d) {
  Ctx x(alg, c, d);
  auto out = collapse_J_impl(x, run);
  assert_segment(x, {out}, run.front().top, run.back().bottom, "collapse_J_run");
  return out;
}

std::vector<LinkForm> collapse_Jprime_run(const FiniteAlgebra& alg, const std::vector<LinkForm>& run,
                                          Elem c, Elem d) {
  Ctx x(alg, c, d);
  auto out = collapse_Jp_impl(x, run);
  assert_segment(x, out, run.front().top, run.back().bottom, "collapse_Jprime_run");
  return out;
}

std::vector<LinkForm> swap_J_Jprime(const FiniteAlgebra& alg, const LinkForm& j,
                                    const LinkForm& jp, Elem c, Elem d) {
  Ctx x(alg, c, d);
  auto out = swap_impl(x, j, jp);
  assert_segment(x, out, j.top, jp.bottom, "swap_J_Jprime");
  return out;
}

std::string to_string(ChainType t) {
  switch (t) {
    case ChainType::S: return "S";
    case ChainType::J: return "J";
    case ChainType::Jp: return "J'";
    case ChainType::JpJ: return "J'-J";
    case ChainType::JS: return "J-S";
    case ChainType::JpS: return "J'-S";
    case ChainType::JpJS: return "J'-J-S";
  }
  return "?";
}

std::string psi_name(ChainType t) {
  switch (t) {
    case ChainType::S: return "psi_S";
    case ChainType::J: return "psi_J";
    case ChainType::Jp: return "psi_Jp";
    case ChainType::JpJ: return "psi_JpJ";
    case ChainType::JS: return "psi_JS";
    case ChainType::JpS: return "psi_JpS";
    case ChainType::JpJS: return "psi_JpJS";
  }
  return "?";
}

ReduceResult reduce_chain(FormulaEvaluator& ev, const MaltsevChain& ch, Elem c, Elem d) {
  const FiniteAlgebra& alg = ev.library().alg();
  ReduceResult res;
  Ctx x(alg, c, d);
  x.ev = &ev;
  x.cg = &ev.cg(c, d);
  x.psiS = ev.library().find("psi_S");
  x.trace = &res.trace;
  auto fail = [&](std::string msg) {
    res.ok = false;
    res.error = std::move(msg);
    return res;
  };
  if (x.psiS < 0) return fail("library lacks psi_S");
  if (x.cd.empty()) return fail("c, d not in a common e_i range");
  if (!alg.leq(d, c) || c == d) return fail("need d < c");
  if (!verify_chain(alg, ch, c, d)) return fail("chain does not verify");
  if (!is_decreasing(alg, ch)) return fail("chain is not decreasing");
  if (ch.links.empty()) return fail("empty chain");
  const std::size_t n = ch.links.size();
  const Elem r = ch.elems.front(), s = ch.elems.back();
  for (Elem e : ch.elems)
    if (!x.cg->same(e, r)) return fail("chain element outside the Cg(c,d) block");

  std::vector<std::optional<LinkForm>> slab(n);
  std::vector<std::optional<std::vector<LinkForm>>> jlab(n);
  std::size_t lemma_tail = n;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& lk = ch.links[k];
    if (!lk.forward) return fail("link " + std::to_string(k) + " runs against the order");
    const Elem u = ch.elems[k], v = ch.elems[k + 1];
    const Term gt = term_of(alg, lk.poly);
    std::optional<HeadShape> sh;
    try {
      sh = head_normalize(alg, lk.poly, c, d);
      x.note("link " + std::to_string(k) + ": shape " + to_string(sh->head) + " (" + sh->note + ")");
    } catch (const ChainError& e) {
      x.note("link " + std::to_string(k) + ": " + e.what());
    }
    std::vector<EParams> oh;
    if (sh && sh->head == Head::S) oh.push_back(sh->outer);
    if (sh && sh->head == Head::S && lemma_tail == n) lemma_tail = k;
    slab[k] = label_S(x, u, v, sh ? &sh->g : &gt, oh);
    try {
      HeadShape use = sh ? *sh : HeadShape{};
      if (!sh) {
        use.head = Head::K;  // no template: straight to the search
        use.g = gt, use.top = u, use.bottom = v, use.p = use.q = alg.base();
      }
      if (use.head == Head::S) {
        // S-shaped links may still carry a J/J' label for the prefix.
        if (auto v2 = search_link(x, u, v, use.g, {})) jlab[k] = *v2;
      } else {
        auto out = rewrite_impl(x, use);
        if (!out.empty() && out[0].head != Head::S) jlab[k] = out;
      }
      if (jlab[k]) assert_segment(x, *jlab[k], u, v, "rewrite_link");
    } catch (const ChainError& e) {
      x.note("link " + std::to_string(k) + ": " + e.what());
    }
    if (!slab[k] && !jlab[k]) return fail("link " + std::to_string(k) + " admits no S, J or J' form");
  }

  // Tail start: every later link S-labelled; earlier ones need J/J' labels.
  // The split the lemma prescribes comes first, then every other option.
  std::size_t first_tail = n;
  while (first_tail > 0 && slab[first_tail - 1]) --first_tail;
  std::vector<std::size_t> order;
  if (lemma_tail >= first_tail) order.push_back(lemma_tail);
  for (std::size_t k0 = first_tail; k0 <= n; ++k0)
    if (k0 != lemma_tail) order.push_back(k0);
  std::string last_error = "no tail split works";
  for (std::size_t k0 : order) {
    bool prefix_ok = true;
    for (std::size_t k = 0; k < k0; ++k) prefix_ok = prefix_ok && jlab[k].has_value();
    if (!prefix_ok) continue;
    res.trace.push_back("tail from link " + std::to_string(k0));
    std::optional<LinkForm> tail;
    const Elem mid = ch.elems[k0];
    if (k0 < n) {
      std::vector<EParams> oh;
      for (std::size_t k = k0; k < n; ++k) oh.push_back(slab[k]->outer);
      tail = label_S(x, mid, s, nullptr, oh);
      if (!tail) {
        last_error = "S tail does not collapse";
        continue;
      }
      tail->origin = "S-collapse";
      x.note("S tail: " + describe(alg, *tail));
    }
    std::vector<LinkForm> seq;
    for (std::size_t k = 0; k < k0; ++k) seq.insert(seq.end(), jlab[k]->begin(), jlab[k]->end());
    try {
      int iter = 0;
      const int cap = 4 * static_cast<int>(std::max<std::size_t>(1, seq.size()));
      while (true) {
        std::string pat = pattern(seq);
        if (pat == "()" || pat == "J" || pat == "J'" || pat == "J'-J") break;
        if (++iter > cap) throw ChainError("rewrite cap reached at " + pat);
        std::size_t i = 0;
        bool done = false;
        // Runs of J' first, then J-J' swaps, then runs of J.
        for (i = 0; i < seq.size() && !done; ++i) {
          std::size_t e = i;
          while (e < seq.size() && seq[e].head == Head::Jp) ++e;
          if (e - i >= 2) {
            std::vector<LinkForm> run(seq.begin() + i, seq.begin() + e);
            auto out = collapse_Jp_impl(x, run);
            assert_segment(x, out, run.front().top, run.back().bottom, "collapse_Jprime_run");
            seq.erase(seq.begin() + i, seq.begin() + e);
            seq.insert(seq.begin() + i, out.begin(), out.end());
            x.note(pat + " => " + pattern(seq) + " (J' run)");
            done = true;
          }
        }
        for (i = 0; i + 1 < seq.size() && !done; ++i)
          if (seq[i].head == Head::J && seq[i + 1].head == Head::Jp) {
            auto out = swap_impl(x, seq[i], seq[i + 1]);
            assert_segment(x, out, seq[i].top, seq[i + 1].bottom, "swap_J_Jprime");
            seq.erase(seq.begin() + i, seq.begin() + i + 2);
            seq.insert(seq.begin() + i, out.begin(), out.end());
            x.note(pat + " => " + pattern(seq) + " (swap)");
            done = true;
          }
        for (i = 0; i < seq.size() && !done; ++i) {
          std::size_t e = i;
          while (e < seq.size() && seq[e].head == Head::J) ++e;
          if (e - i >= 2) {
            std::vector<LinkForm> run(seq.begin() + i, seq.begin() + e);
            LinkForm out = collapse_J_impl(x, run);
            assert_segment(x, {out}, run.front().top, run.back().bottom, "collapse_J_run");
            seq.erase(seq.begin() + i, seq.begin() + e);
            seq.insert(seq.begin() + i, out);
            x.note(pat + " => " + pattern(seq) + " (J run)");
            done = true;
          }
        }
        if (!done) throw ChainError("no rewrite applies to " + pat);
        ++res.rewrites;
      }
    } catch (const ChainError& e) {
      last_error = e.what();
      continue;
    }
    auto fin = finish_prefix(x, seq);
    if (!fin) {
      last_error = "prefix " + pattern(seq) + " has no final form";
      continue;
    }
    std::vector<LinkForm> links = *fin;
    if (tail) links.push_back(*tail);
    try {
      assert_segment(x, links, r, s, "reduce_chain");
    } catch (const ChainError& e) {
      last_error = e.what();
      continue;
    }
    std::string pat = pattern(*fin);
    ChainType type;
    if (pat == "()") type = ChainType::S;
    else if (pat == "J") type = tail ? ChainType::JS : ChainType::J;
    else if (pat == "J'") type = tail ? ChainType::JpS : ChainType::Jp;
    else type = tail ? ChainType::JpJS : ChainType::JpJ;
    res.type = type;
    res.links = links;
    res.psi_ok = ev.call(psi_name(type), {r, s, c, d});
    x.note("type " + to_string(type) + ", " + psi_name(type) + (res.psi_ok ? " true" : " false"));
    if (res.psi_ok) {
      res.ok = true;
      return res;
    }
    last_error = psi_name(type) + " false on the reduced chain";
  }
  return fail(last_error);
}

bool check_no_chain_needed(const FiniteAlgebra& alg, Elem c, Elem d, const UnaryPolynomial& f1,
                           const UnaryPolynomial& f2) {
  if (!alg.leq(d, c)) throw std::invalid_argument("check_no_chain_needed: need d <= c");
  Ctx x(alg, c, d);
  for (auto& ep : x.all)
    if (x.e(ep, c) != x.e(ep, d))
      throw std::invalid_argument("check_no_chain_needed: e_" + std::to_string(ep.i) +
                                  " separates c and d");
  const Elem r = f1.apply(alg, c), t = f1.apply(alg, d), t2 = f2.apply(alg, c), s = f2.apply(alg, d);
  if (t != t2) throw std::invalid_argument("check_no_chain_needed: f1(d) != f2(c)");
  return r == t || t == s;
}

// ---------------------------------------------------------------- corpus

std::vector<ChainSample> random_chain_corpus(const TuringMachine& tm, const CorpusOptions& opt) {
  AlgPtr A = build_aprime(tm);
  std::mt19937_64 rng(opt.seed);
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  std::vector<ChainSample> out;
  std::set<std::vector<std::vector<Elem>>> tried;
  long attempts = 0;
  while (static_cast<int>(out.size()) < opt.count) {
    if (++attempts > 200000) throw ChainError("corpus: too few small subalgebras found");
    // Half of the coordinates come from the constants 1, 2, H, C, D and
    // their bars; mixed generators are where J and J' links show up.
    std::vector<std::vector<Elem>> gens(1 + pick(2), std::vector<Elem>(2));
    for (auto& g : gens)
      for (auto& e : g) e = pick(2) ? 1 + pick(7) : pick(A->size());
    if (gens.size() == 2 && pick(2)) {
      // (u1, v), (u2, v) with constants u1, u2
      const int side = pick(2);
      gens[0][side] = 1 + pick(7);
      gens[1][side] = 1 + pick(7);
      gens[1][1 - side] = gens[0][1 - side];
    }
    std::sort(gens.begin(), gens.end());
    if (!tried.insert(gens).second) continue;
    std::shared_ptr<FiniteAlgebra> B;
    try {
      B = power_subalgebra(A, 2, gens, opt.max_size);
    } catch (const SizeGuardError&) {
      continue;
    }
    const int m = B->size();
    if (m < 5 || m > opt.max_size) continue;
    B->materialize(1u << 18);
    AlgPtr Bp = B;
    std::vector<std::pair<Elem, Elem>> pairs;
    for (Elem c = 0; c < m; ++c)
      for (Elem d = 0; d < m; ++d)
        if (c != d && B->leq(d, c) && !Ctx(*B, c, d).cd.empty()) pairs.push_back({c, d});
    if (pairs.empty()) continue;
    // Pairs with a single J, J' or K step whose images leave the e_i ranges
    // fixing c and d; algebras without any are kept only now and then.
    std::vector<std::pair<Elem, Elem>> rich_pairs;
    {
      const int hs[3] = {B->op_index("J"), B->op_index("Jp"), B->op_index("K")};
      for (auto [c, d] : pairs) {
        const Ctx cx(*B, c, d);
        bool found = false;
        for (int h = 0; h < 3 && !found; ++h)
          for (Elem p = 0; p < m && !found; ++p)
            for (Elem q = 0; q < m && !found; ++q) {
              Elem a = B->apply(hs[h], {p, q, c}), b = B->apply(hs[h], {p, q, d});
              if (a == b) continue;
              found = true;
              for (auto& ep : cx.cd)
                if (cx.e(ep, a) == a && cx.e(ep, b) == b) {
                  found = false;
                  break;
                }
            }
        if (found) rich_pairs.push_back({c, d});
      }
    }
    if (rich_pairs.empty() && pick(3)) continue;
    std::vector<int> ops, lattice;
    for (int op = 0; op < B->op_count(); ++op) {
      if (B->op(op).arity == 0) continue;
      ops.push_back(op);
      const std::string& nm = B->op(op).name;
      if (nm == "meet" || nm == "J" || nm == "Jp" || nm == "K" || nm[0] == 'S') lattice.push_back(op);
    }
    const int heads[3] = {B->op_index("J"), B->op_index("Jp"), B->op_index("K")};
    int made = 0;
    for (int tries = 0; tries < 40 * opt.per_algebra && made < opt.per_algebra &&
                        static_cast<int>(out.size()) < opt.count;
         ++tries) {
      const auto& from = !rich_pairs.empty() && pick(4) ? rich_pairs : pairs;
      auto [c, d] = from[pick(static_cast<int>(from.size()))];
      // Links whose images leave every e_i range fixing c and d.
      const Ctx cx(*B, c, d);
      auto is_rich = [&](Elem a, Elem b) {
        for (auto& ep : cx.cd)
          if (cx.e(ep, a) == a && cx.e(ep, b) == b) return false;
        return true;
      };
      // Edge pool from random polynomials.
      std::vector<std::pair<UnaryPolynomial, std::pair<Elem, Elem>>> pool;
      for (int i = 0; i < 40; ++i) {
        UnaryPolynomial g;
        const int depth = 1 + pick(opt.max_depth);
        Elem cur = c;  // image of c so far; flat meets vanish unless constants agree with it
        Elem before_last = c;
        for (int sdx = 0; sdx < depth; ++sdx) {
          before_last = cur;
          FundamentalTranslation st;
          st.op = pick(2) ? lattice[pick(static_cast<int>(lattice.size()))]
                          : ops[pick(static_cast<int>(ops.size()))];
          st.pos = pick(B->op(st.op).arity);
          st.consts.resize(B->op(st.op).arity - 1);
          for (auto& e : st.consts) e = pick(2) ? cur : pick(m);
          cur = st.apply(*B, cur);
          g.steps.push_back(st);
        }
        // Every other polynomial ends in a J, J' or K step.
        if (i % 2) {
          FundamentalTranslation st;
          st.op = heads[pick(3)];
          st.pos = 2;
          g.steps.back() = st;
          std::vector<std::vector<Elem>> good;
          for (Elem p = 0; p < m; ++p)
            for (Elem q = 0; q < m; ++q) {
              g.steps.back().consts = {p, q};
              Elem a = g.apply(*B, c), b = g.apply(*B, d);
              if (a != b && is_rich(a, b)) good.push_back({p, q});
            }
          g.steps.back().consts = good.empty() ? std::vector<Elem>{before_last, static_cast<Elem>(pick(m))}
                                               : good[pick(static_cast<int>(good.size()))];
        }
        Elem a = g.apply(*B, c), b = g.apply(*B, d);
        if (a != b) pool.push_back({g, {a, b}});
      }
      if (pool.empty()) continue;
      std::vector<char> rich(pool.size());
      for (std::size_t i = 0; i < pool.size(); ++i)
        rich[i] = is_rich(pool[i].second.first, pool[i].second.second);
      auto choose = [&](const std::vector<std::pair<int, bool>>& opts) {
        std::vector<std::pair<int, bool>> r;
        for (auto& o : opts)
          if (rich[o.first]) r.push_back(o);
        const auto& from = !r.empty() && pick(4) ? r : opts;
        return from[pick(static_cast<int>(from.size()))];
      };
      std::vector<std::pair<int, bool>> all_edges;
      for (int i = 0; i < static_cast<int>(pool.size()); ++i) all_edges.push_back({i, true});
      MaltsevChain ch;
      const auto& first = pool[choose(all_edges).first];
      ch.elems = {first.second.first, first.second.second};
      ch.links.push_back({first.first, true});
      const int len = 1 + pick(opt.max_length);
      while (static_cast<int>(ch.links.size()) < len) {
        std::vector<std::pair<int, bool>> next;
        for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
          if (pool[i].second.first == ch.elems.back()) next.push_back({i, true});
          if (pool[i].second.second == ch.elems.back()) next.push_back({i, false});
        }
        if (next.empty()) break;
        auto [i, fw] = choose(next);
        ch.elems.push_back(fw ? pool[i].second.second : pool[i].second.first);
        ch.links.push_back({pool[i].first, fw});
      }
      auto dp = make_decreasing(*B, ch, c, d);
      for (const MaltsevChain* mc : {&dp.down, &dp.up}) {
        if (mc->links.empty() || static_cast<int>(out.size()) >= opt.count) continue;
        out.push_back({Bp, c, d, *mc});
        ++made;
      }
    }
  }
  return out;
}

}  // namespace dpsc
