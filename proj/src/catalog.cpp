#include "dpsc/catalog.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace dpsc {

TuringMachine default_machine() { return parse_tm("states 2\n1 0 1 R 0\n"); }

// ---------------------------------------------------------------- S_n

std::shared_ptr<FiniteAlgebra> build_sequential(int n, const Signature& sig) {
  if (n < 1) throw std::invalid_argument("S_n needs n >= 1");
  std::vector<std::string> labels = {"0"};
  for (int i = 1; i <= n; ++i) {
    labels.push_back("a" + std::to_string(i));
    labels.push_back("b" + std::to_string(i));
  }
  auto alg = std::make_shared<FiniteAlgebra>(std::move(labels));
  const int m = 2 * n + 1;
  // a_i = 2i-1, b_i = 2i
  auto prod = [n](Elem x, Elem y) -> Elem {
    if (x % 2 == 1 && y % 2 == 0 && y > 0) {
      int i = (x + 1) / 2, j = y / 2;
      if (j == i + 1 && j <= n) return 2 * i;
    }
    return 0;
  };
  auto meet = [](Elem x, Elem y) { return x == y ? x : 0; };
  for (auto& [name, k] : sig) {
    if (name == "zero") {
      alg->add_rule_op(name, 0, [](const Elem*) { return 0; });
    } else if (name == "meet") {
      alg->add_rule_op(name, 2, [meet](const Elem* a) { return meet(a[0], a[1]); });
    } else if (name == "prod") {
      alg->add_rule_op(name, 2, [prod](const Elem* a) { return prod(a[0], a[1]); });
    } else if (name == "J") {
      alg->add_rule_op(name, 3, [meet](const Elem* a) { return meet(a[0], a[1]); });
    } else if (name == "Jp" || name == "K") {
      alg->add_rule_op(name, 3, [meet](const Elem* a) { return meet(meet(a[0], a[1]), a[2]); });
    } else if (name == "T") {
      alg->add_rule_op(
          name, 4, [prod, meet](const Elem* a) { return meet(prod(a[0], a[1]), prod(a[2], a[3])); },
          {},
          [prod, m](const TupleSink& sink) {
            Elem t[4];
            for (Elem w = 0; w < m; ++w)
              for (Elem x = 0; x < m; ++x) {
                if (!prod(w, x)) continue;
                t[0] = t[2] = w;
                t[1] = t[3] = x;
                sink(t, prod(w, x));
              }
          });
    } else {
      alg->add_rule_op(name, k, [](const Elem*) { return 0; }, {}, [](const TupleSink&) {});
    }
  }
  alg->materialize();
  alg->meta["builtin"] = "sequential";
  alg->meta["n"] = std::to_string(n);
  return alg;
}

// ---------------------------------------------------------------- small SIs

std::string to_string(SmallKind k) {
  switch (k) {
    case SmallKind::TwoElt: return "TwoElt";
    case SmallKind::ThreeElt: return "ThreeElt";
    case SmallKind::W: return "W";
    default: return "NotApplicable";
  }
}

std::shared_ptr<FiniteAlgebra> build_small_si(SmallKind kind, const TuringMachine& tm) {
  if (tm.state_count < 2) throw std::invalid_argument("small SIs need state mu_1");
  AlgPtr A = build_aprime(tm);
  auto ap = aprime_of(*A);
  const Elem M = ap->vM(1, 0);
  std::shared_ptr<FiniteAlgebra> out;
  switch (kind) {
    case SmallKind::TwoElt: out = subalgebra(A, {APrime::ZERO, APrime::C}).alg; break;
    case SmallKind::ThreeElt: out = subalgebra(A, {APrime::ZERO, APrime::H, M}).alg; break;
    case SmallKind::W: {
      Subalgebra hc = generated_subalgebra(A, {APrime::H, APrime::C});
      Partition th = principal_congruence(*hc.alg, hc.index[M], hc.index[APrime::ZERO]);
      out = quotient(hc.alg, th).alg;
      break;
    }
    default: throw std::invalid_argument("no catalog algebra for NotApplicable");
  }
  out->meta["builtin"] = "small:" + to_string(kind);
  out->meta["machine"] = format_tm(tm);
  return out;
}

bool satisfies_e_zero(const FiniteAlgebra& alg) {
  const int s0 = alg.op_index("S0"), s1 = alg.op_index("S1"), s2 = alg.op_index("S2");
  if (s0 < 0 || s1 < 0 || s2 < 0 || !alg.has_zero())
    throw std::invalid_argument("e_i needs S0, S1, S2 and the zero constant");
  const int m = alg.size();
  const Elem z = alg.base();
  for (Elem n = 0; n < m; ++n)
    for (Elem x = 0; x < m; ++x) {
      if (alg.apply(s0, {n, x, x, x}) != z || alg.apply(s1, {n, x, x, x}) != z) return false;
      for (Elem n2 = 0; n2 < m; ++n2)
        if (alg.apply(s2, {n, n2, x, x, x}) != z) return false;
    }
  return true;
}

SmallClassification classify_small_si(const FiniteAlgebra& alg, const TuringMachine& tm) {
  SmallClassification c;
  if (!is_si(alg, std::max(64, alg.size()))) {
    c.reason = "not subdirectly irreducible";
    return c;
  }
  if (!satisfies_e_zero(alg)) {
    c.reason = "some e_i is not identically 0";
    return c;
  }
  for (SmallKind k : {SmallKind::TwoElt, SmallKind::ThreeElt, SmallKind::W}) {
    auto ref = build_small_si(k, tm);
    if (ref->size() != alg.size()) continue;
    if (auto iso = is_isomorphic(alg, *ref)) {
      c.kind = k;
      c.iso = *iso;
      c.reason = "isomorphic to " + to_string(k);
      return c;
    }
  }
  c.reason = "no isomorph";
  return c;
}

// ---------------------------------------------------------------- P_N

std::string config_label(const Configuration& q, const Interval& window) {
  std::string s = std::to_string(q.state) + "@" + std::to_string(q.head) + ":";
  if (window.lo != 0) s += std::to_string(window.lo) + "=";
  for (long k = window.lo; k <= window.hi; ++k) s += q.read(k) ? '1' : '0';
  return s;
}

MachineSpec parse_machine_spec(const TuringMachine& tm, std::string_view text) {
  MachineSpec spec;
  spec.tm = tm;
  bool haveN = false, haveW = false, haveP = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto hash = raw.find('#');
    std::istringstream ls(raw.substr(0, hash));
    std::string key, val;
    if (!(ls >> key)) continue;
    if (!(ls >> val)) throw ParseError(lineno, "missing value for '" + key + "'");
    if (key == "N") spec.N = parse_interval(val), haveN = true;
    else if (key == "window") spec.window = parse_interval(val), haveW = true;
    else if (key == "P") spec.P = parse_configuration(val), haveP = true;
    else if (key == "phi") {
      if (!spec.phi) spec.phi.emplace();
      spec.phi->push_back(parse_configuration(val));
    } else throw ParseError(lineno, "unknown key '" + key + "'");
  }
  if (!haveN || !haveP) throw ParseError(lineno, "machine spec needs N and P");
  if (!haveW) spec.window = spec.N;
  return spec;
}

bool OmegaSpace::leq(int p, int q) const {
  for (std::size_t steps = 0; q >= 0 && steps <= configs.size(); ++steps) {
    if (q == p) return true;
    q = succ[q];
  }
  return false;
}

OmegaSpace build_omega(const TuringMachine& tm, const Interval& N, const Interval& window) {
  OmegaSpace om;
  om.configs = enumerate_omega(tm, N, window, 1u << 20);
  for (std::size_t i = 0; i < om.configs.size(); ++i) om.index[om.configs[i]] = static_cast<int>(i);
  om.succ.assign(om.configs.size(), -1);
  for (std::size_t i = 0; i < om.configs.size(); ++i) {
    auto s = step(tm, om.configs[i]);
    if (s.status == StepStatus::Moved && N.contains(s.next.head)) om.succ[i] = om.find(s.next);
  }
  return om;
}

MachinePN build_machine_PN(const MachineSpec& spec) {
  if (!spec.window.contains(spec.N)) throw std::invalid_argument("window must contain N");
  MachinePN pn;
  pn.N = spec.N;
  pn.omega = build_omega(spec.tm, spec.N, spec.window);
  std::vector<std::string> labels = {"0"};
  for (long n = spec.N.lo; n <= spec.N.hi; ++n) labels.push_back("a" + std::to_string(n));
  pn.a_offset = 1;
  pn.q_offset = 1 + static_cast<int>(spec.N.size());
  for (auto& q : pn.omega.configs) labels.push_back(config_label(q, spec.window));
  auto alg = std::make_shared<FiniteAlgebra>(std::move(labels));
  const int m = alg->size();

  // shared read-only state for the evaluators
  struct Ctx {
    TuringMachine tm;
    Interval N;
    OmegaSpace omega;
    int aoff, qoff, m;
    std::vector<APrime::MachineOp> mops;
    bool is_a(Elem x) const { return x >= aoff && x < qoff; }
    bool is_q(Elem x) const { return x >= qoff && x < m; }
    long n_of(Elem x) const { return N.lo + (x - aoff); }
    // F(a_n, a_{n+1}, Q) for the machine operation f
    Elem F(const APrime::MachineOp& f, long n, int qi) const {
      if (!N.contains(n) || !N.contains(n + 1)) return 0;
      const Instruction& ins = tm.instructions[f.instr];
      const Configuration& Q = omega.configs[qi];
      if (Q.state != ins.state) return 0;
      long head = f.left ? n + 1 : n;
      long other = f.left ? n : n + 1;
      if (Q.head != head || Q.read(head) != ins.read || Q.read(other) != f.t) return 0;
      int nx = omega.succ[qi];
      return nx < 0 ? 0 : qoff + nx;
    }
    Elem Fxyz(const APrime::MachineOp& f, Elem x, Elem y, Elem z) const {
      if (!is_a(x) || !is_a(y) || !is_q(z) || y != x + 1) return 0;
      return F(f, n_of(x), z - qoff);
    }
  };
  APrime ap(spec.tm);
  auto ctx = std::make_shared<Ctx>(
      Ctx{spec.tm, spec.N, pn.omega, pn.a_offset, pn.q_offset, m, ap.machine_ops()});
  auto meet = [](Elem x, Elem y) { return x == y ? x : 0; };
  auto zero_enum = [](const TupleSink&) {};

  for (auto& [name, k] : aprime_signature(spec.tm)) {
    if (name == "zero") {
      alg->add_rule_op(name, 0, [](const Elem*) { return 0; });
    } else if (name == "meet") {
      alg->add_rule_op(name, 2, [meet](const Elem* a) { return meet(a[0], a[1]); });
    } else if (name == "J") {
      alg->add_rule_op(name, 3, [meet](const Elem* a) { return meet(a[0], a[1]); }, {},
                       [m](const TupleSink& sink) {
                         Elem t[3];
                         for (Elem x = 1; x < m; ++x)
                           for (Elem z = 0; z < m; ++z) {
                             t[0] = t[1] = x;
                             t[2] = z;
                             sink(t, x);
                           }
                       });
    } else if (name == "Jp" || name == "K") {
      alg->add_rule_op(name, 3, [meet](const Elem* a) { return meet(meet(a[0], a[1]), a[2]); }, {},
                       [m](const TupleSink& sink) {
                         Elem t[3];
                         for (Elem x = 1; x < m; ++x) {
                           t[0] = t[1] = t[2] = x;
                           sink(t, x);
                         }
                       });
    } else if (name == "I") {
      alg->add_rule_op(name, 1, [ctx](const Elem* a) -> Elem {
        if (!ctx->is_a(a[0]) || ctx->tm.state_count < 2) return 0;
        Configuration q;
        q.head = ctx->n_of(a[0]);
        q.state = 1;
        int qi = ctx->omega.find(q);
        return qi < 0 ? 0 : ctx->qoff + qi;
      });
    } else if (name[0] == 'L' || name[0] == 'R' || name.rfind("U", 0) == 0) {
      std::string base = name[0] == 'U' ? name.substr(3) : name;
      int fi = -1;
      for (std::size_t i = 0; i < ctx->mops.size(); ++i)
        if (machine_op_label(ap, ctx->mops[i]) == base) fi = static_cast<int>(i);
      if (fi < 0) throw std::logic_error("unknown machine operation " + name);
      auto enum_F = [ctx, fi, k](const TupleSink& sink, int kind) {
        const auto& f = ctx->mops[fi];
        Elem t[4];
        for (long n = ctx->N.lo; n < ctx->N.hi; ++n)
          for (std::size_t qi = 0; qi < ctx->omega.configs.size(); ++qi) {
            Elem v = ctx->F(f, n, static_cast<int>(qi));
            if (!v) continue;
            Elem an = ctx->aoff + static_cast<int>(n - ctx->N.lo), an1 = an + 1;
            Elem q = ctx->qoff + static_cast<int>(qi);
            if (kind == 0) t[0] = an, t[1] = an1, t[2] = q;
            else if (kind == 1) t[0] = an, t[1] = an1, t[2] = an1, t[3] = q;
            else t[0] = an, t[1] = an, t[2] = an1, t[3] = q;
            sink(t, v);
          }
        (void)k;
      };
      if (name[0] != 'U') {
        alg->add_rule_op(name, 3,
                         [ctx, fi](const Elem* a) { return ctx->Fxyz(ctx->mops[fi], a[0], a[1], a[2]); },
                         {}, [enum_F](const TupleSink& s) { enum_F(s, 0); });
      } else if (name[1] == '1') {
        alg->add_rule_op(
            name, 4,
            [ctx, fi](const Elem* a) {
              return a[1] == a[2] ? ctx->Fxyz(ctx->mops[fi], a[0], a[1], a[3]) : 0;
            },
            {}, [enum_F](const TupleSink& s) { enum_F(s, 1); });
      } else {
        alg->add_rule_op(
            name, 4,
            [ctx, fi](const Elem* a) {
              return a[0] == a[1] ? ctx->Fxyz(ctx->mops[fi], a[1], a[2], a[3]) : 0;
            },
            {}, [enum_F](const TupleSink& s) { enum_F(s, 2); });
      }
    } else {
      // prod, S0, S1, S2, T
      alg->add_rule_op(name, k, [](const Elem*) { return 0; }, {}, zero_enum);
    }
  }
  alg->materialize();
  alg->meta["builtin"] = "PN";
  alg->meta["machine"] = format_tm(spec.tm);
  pn.alg = alg;
  return pn;
}

std::vector<Configuration> default_phi(const MachineSpec& spec, const OmegaSpace& omega) {
  int p = omega.find(spec.P);
  if (p < 0) throw PreconditionError("P is not in the restricted configuration space");
  std::vector<int> halting;
  for (std::size_t i = 0; i < omega.configs.size(); ++i)
    if (omega.configs[i].state == 0) halting.push_back(static_cast<int>(i));
  std::vector<Configuration> phi;
  for (std::size_t q = 0; q < omega.configs.size(); ++q) {
    if (!omega.leq(p, static_cast<int>(q))) continue;
    bool doomed = std::any_of(halting.begin(), halting.end(),
                              [&](int h) { return omega.leq(h, static_cast<int>(q)); });
    if (!doomed) phi.push_back(omega.configs[q]);
  }
  return phi;
}

PhiReport check_phi_conditions(const MachineSpec& spec, const OmegaSpace& omega,
                               const std::vector<Configuration>& phi) {
  PhiReport r;
  const Interval& win = spec.window;
  std::set<int> in_phi;
  for (auto& q : phi) {
    int i = omega.find(q);
    if (i < 0) {
      r.ok[0] = false;
      r.detail[0] = config_label(q, win) + " is outside the configuration space";
      continue;
    }
    in_phi.insert(i);
  }
  int p = omega.find(spec.P);
  r.p_in_phi = p >= 0 && in_phi.count(p);
  if (p < 0) {
    for (auto& ok : r.ok) ok = false;
    r.detail[0] = "P is outside the configuration space";
    return r;
  }
  for (int q : in_phi)
    if (r.ok[0] && !omega.leq(p, q)) {
      r.ok[0] = false;
      r.detail[0] = "P is not reachable from " + config_label(omega.configs[q], win);
    }
  for (int q : in_phi) {
    int t = omega.succ[q];
    if (r.ok[1] && t >= 0 && omega.leq(p, t) && !in_phi.count(t)) {
      r.ok[1] = false;
      r.detail[1] = "successor of " + config_label(omega.configs[q], win) + " missing from phi";
    }
  }
  for (std::size_t q = 0; q < omega.configs.size(); ++q) {
    const Configuration& c = omega.configs[q];
    if (r.ok[2] && c.state == 1 && c.tape.empty() && omega.leq(p, static_cast<int>(q)) &&
        !in_phi.count(static_cast<int>(q))) {
      r.ok[2] = false;
      r.detail[2] = "initial configuration " + config_label(c, win) + " missing from phi";
    }
  }
  for (int q : in_phi)
    for (std::size_t h = 0; h < omega.configs.size() && r.ok[3]; ++h)
      if (omega.configs[h].state == 0 && omega.leq(static_cast<int>(h), q)) {
        r.ok[3] = false;
        r.detail[3] = config_label(omega.configs[q], win) + " reaches halting configuration " +
                      config_label(omega.configs[h], win);
      }
  if (spec.N.size() <= 1) {
    r.ok[4] = false;
    r.detail[4] = "|N| must exceed 1";
  } else {
    for (long n = spec.N.lo; n <= spec.N.hi && r.ok[4]; ++n) {
      bool covered = false;
      for (int q : in_phi) covered = covered || omega.configs[q].head == n;
      if (!covered) {
        r.ok[4] = false;
        r.detail[4] = "no configuration in phi with head " + std::to_string(n);
      }
    }
  }
  return r;
}

ThetaResult theta_phi_quotient(const MachineSpec& spec) {
  ThetaResult res;
  res.pn = build_machine_PN(spec);
  const OmegaSpace& om = res.pn.omega;
  res.phi = spec.phi ? *spec.phi : default_phi(spec, om);
  res.report = check_phi_conditions(spec, om, res.phi);
  if (!res.report.all()) {
    std::string why = res.report.p_in_phi ? "" : "P not in phi; ";
    for (int i = 0; i < 5; ++i)
      if (!res.report.ok[i]) why += "(" + std::to_string(i + 1) + ") " + res.report.detail[i] + "; ";
    throw PreconditionError("phi conditions fail: " + why);
  }
  std::set<int> in_phi;
  for (auto& q : res.phi) in_phi.insert(om.find(q));
  Partition theta(res.pn.alg->size());
  for (std::size_t q = 0; q < om.configs.size(); ++q)
    if (!in_phi.count(static_cast<int>(q))) theta.unite(0, res.pn.q(static_cast<int>(q)));
  res.theta = theta;
  res.quotient = quotient(res.pn.alg, theta);
  res.monolith = monolith(*res.quotient.alg, std::max(64, res.quotient.alg->size()));
  return res;
}

// ---------------------------------------------------------------- windows

std::vector<Elem> alpha_vector(long n, const Interval& w) {
  std::vector<Elem> v;
  for (long k = w.lo; k <= w.hi; ++k) v.push_back(k < n ? APrime::ONE : k == n ? APrime::H : APrime::TWO);
  return v;
}

std::vector<Elem> beta_vector(long n, const Interval& w) {
  std::vector<Elem> v;
  for (long k = w.lo; k <= w.hi; ++k) v.push_back(k < n ? APrime::C : APrime::D);
  return v;
}

namespace {
std::vector<Elem> pointwise(const FiniteAlgebra& A, int op, std::initializer_list<const std::vector<Elem>*> args) {
  const std::size_t w = (*args.begin())->size();
  std::vector<Elem> out(w);
  Elem buf[8];
  for (std::size_t c = 0; c < w; ++c) {
    int i = 0;
    for (auto* v : args) buf[i++] = (*v)[c];
    out[c] = A.apply(op, buf);
  }
  return out;
}
bool nowhere_zero(const std::vector<Elem>& v) {
  return std::none_of(v.begin(), v.end(), [](Elem e) { return e == APrime::ZERO; });
}
}  // namespace

GammaWindowReport build_gamma_window(const TuringMachine& tm, long W, std::size_t cap) {
  if (W < 2) throw std::invalid_argument("window half-width must be at least 2");
  GammaWindowReport rep;
  rep.window = {-W, W};
  AlgPtr A = build_aprime(tm);
  auto ap = aprime_of(*A);
  std::vector<std::vector<Elem>> gens;
  for (long n = -W + 1; n <= W - 1; ++n) {
    gens.push_back(alpha_vector(n, rep.window));
    gens.push_back(beta_vector(n, rep.window));
  }
  const int width = static_cast<int>(rep.window.size());
  rep.nowhere_zero = power_subalgebra(A, width, gens, cap, true);
  const auto& vecs = rep.nowhere_zero->vectors;
  std::set<std::vector<Elem>> all(vecs.begin(), vecs.end());

  for (auto& v : vecs)
    for (Elem e : v)
      if (e == APrime::bC || e == APrime::bD || (e >= 8 && ap->decode(e).bar)) rep.barred_free = false;

  // Σ: nowhere-zero outputs of I and of the machine operations
  std::vector<const std::vector<Elem>*> ctrl, data;
  for (auto& v : vecs) {
    bool c = std::all_of(v.begin(), v.end(), [](Elem e) { return e >= 1 && e <= 3; });
    bool d = std::all_of(v.begin(), v.end(), [&](Elem e) { return ap->in_V(e); });
    if (c) ctrl.push_back(&v);
    if (d) data.push_back(&v);
  }
  std::set<std::vector<Elem>> sigma;
  const int iop = A->op_index("I");
  for (auto* v : ctrl) {
    auto r = pointwise(*A, iop, {v});
    if (nowhere_zero(r)) sigma.insert(r);
  }
  for (auto& f : ap->machine_ops()) {
    const int op = A->op_index(machine_op_label(*ap, f));
    for (auto* x : ctrl)
      for (auto* y : ctrl)
        for (auto* z : data) {
          auto r = pointwise(*A, op, {x, y, z});
          if (nowhere_zero(r)) sigma.insert(r);
        }
  }
  rep.sigma = sigma.size();
  for (auto& s : sigma)
    if (!all.count(s)) rep.notes.push_back("sigma element outside the generated set");

  const int kop = A->op_index("K"), mop = A->op_index("meet");
  if (kop >= 0) {
    const std::size_t n = vecs.size();
    const std::size_t stride = n > 120 ? n / 120 + 1 : 1;  // thin the cube on large windows
    if (stride > 1) rep.notes.push_back("K check sampled with stride " + std::to_string(stride));
    for (std::size_t a = 0; a < n && rep.k_is_meet; a += stride)
      for (std::size_t b = 0; b < n && rep.k_is_meet; b += stride)
        for (std::size_t c = 0; c < n; c += stride) {
          auto k = pointwise(*A, kop, {&vecs[a], &vecs[b], &vecs[c]});
          auto ab = pointwise(*A, mop, {&vecs[a], &vecs[b]});
          if (k != pointwise(*A, mop, {&ab, &vecs[c]})) {
            rep.k_is_meet = false;
            break;
          }
        }
  }
  const int pop = A->op_index("prod");
  for (long n = -W; n < W; ++n) {
    auto an = alpha_vector(n, rep.window);
    auto bn1 = beta_vector(n + 1, rep.window);
    if (pointwise(*A, pop, {&an, &bn1}) == beta_vector(n, rep.window)) rep.beta_chain.emplace_back(n, n + 1);
  }
  return rep;
}

SimulationReport window_simulation(const TuringMachine& tm, long W, int steps, long start) {
  SimulationReport rep;
  Interval win{-W, W};
  if (!win.contains(start)) throw std::invalid_argument("start head outside the window");
  AlgPtr A = build_aprime(tm);
  auto ap = aprime_of(*A);
  Configuration q;
  q.head = start;
  q.state = 1;
  auto a0 = alpha_vector(start, win);
  auto cur = pointwise(*A, A->op_index("I"), {&a0});
  if (cur != ap->encode(q, win)) {
    rep.log.push_back("I(alpha) does not encode the initial configuration");
    return rep;
  }
  for (int s = 0; s < steps; ++s) {
    auto st = step(tm, q);
    if (st.status != StepStatus::Moved) {
      rep.halted = st.status == StepStatus::Halted;
      rep.log.push_back("simulator stopped at step " + std::to_string(s));
      break;
    }
    if (!win.contains(st.next.head)) {
      rep.log.push_back("head leaves the window at step " + std::to_string(s));
      break;
    }
    // every machine operation at every α pair; keep the nowhere-zero results
    std::vector<std::pair<std::string, std::vector<Elem>>> found;
    for (auto& f : ap->machine_ops()) {
      const int op = A->op_index(machine_op_label(*ap, f));
      for (long n = win.lo; n < win.hi; ++n) {
        auto x = alpha_vector(n, win), y = alpha_vector(n + 1, win);
        auto r = pointwise(*A, op, {&x, &y, &cur});
        if (nowhere_zero(r))
          found.emplace_back(machine_op_label(*ap, f) + "@" + std::to_string(n), std::move(r));
      }
    }
    ++rep.steps;
    auto expect = ap->encode(st.next, win);
    if (found.size() == 1 && found[0].second == expect) {
      ++rep.matched;
      rep.log.push_back("step " + std::to_string(s + 1) + " " + found[0].first + " -> " +
                        st.next.str());
    } else {
      rep.log.push_back("step " + std::to_string(s + 1) + " mismatch: " +
                        std::to_string(found.size()) + " candidate(s)");
      break;
    }
    cur = expect;
    q = st.next;
    if (q.state == 0) {
      rep.halted = true;
      break;
    }
  }
  return rep;
}

}  // namespace dpsc
