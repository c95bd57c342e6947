#include "dpsc/suite.hpp"

#include <algorithm>
#include <cstdio>
#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "dpsc/aprime.hpp"
#include "dpsc/catalog.hpp"
#include "dpsc/formulas.hpp"

namespace dpsc {

using nlohmann::json;

std::string to_string(Status s) {
  switch (s) {
    case Status::Pass: return "PASS";
    case Status::Fail: return "FAIL";
    default: return "SKIP";
  }
}

bool SuiteReport::ok() const {
  return std::none_of(checks.begin(), checks.end(),
                      [](const CheckResult& c) { return c.status == Status::Fail; });
}

std::string SuiteReport::text(bool timing, bool trace) const {
  std::ostringstream out;
  for (auto& h : header) out << "# " << h << "\n";
  for (auto& c : checks) {
    out << "CHECK " << c.id << " " << to_string(c.status) << " " << c.detail;
    if (timing) out << " [" << std::to_string(c.seconds) << "s]";
    out << "\n";
    if (trace)
      for (auto& t : c.trace) out << "  " << t << "\n";
  }
  out << "SUMMARY " << (ok() ? "PASS" : "FAIL") << " "
      << std::count_if(checks.begin(), checks.end(),
                       [](const CheckResult& c) { return c.status == Status::Fail; })
      << " failed of " << checks.size() << "\n";
  return out.str();
}

json SuiteReport::json(bool timing, bool trace) const {
  nlohmann::json doc;
  doc["header"] = header;
  doc["ok"] = ok();
  nlohmann::json arr = nlohmann::json::array();
  for (auto& c : checks) {
    nlohmann::json j = {{"id", c.id}, {"status", to_string(c.status)}, {"detail", c.detail}};
    if (!c.payload.is_null()) j["payload"] = c.payload;
    if (timing) j["seconds"] = c.seconds;
    if (trace && !c.trace.empty()) j["trace"] = c.trace;
    arr.push_back(std::move(j));
  }
  doc["checks"] = std::move(arr);
  return doc;
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

CheckResult verdict(std::string id, bool ok, std::string detail) {
  CheckResult r;
  r.id = std::move(id);
  r.status = ok ? Status::Pass : Status::Fail;
  r.detail = std::move(detail);
  return r;
}

// Runs f(chunk) for chunk in [0, chunks) on up to `workers` threads.  The
// chunking is fixed, so results never depend on the worker count.
template <class F>
void parallel_chunks(int chunks, int workers, F&& f) {
  workers = std::max(1, std::min(workers, chunks));
  if (workers == 1) {
    for (int c = 0; c < chunks; ++c) f(c);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex mu;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int c; (c = next++) < chunks;) {
        try {
          f(c);
        } catch (...) {
          std::lock_guard<std::mutex> lk(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

std::string tuple_str(const FiniteAlgebra& A, std::initializer_list<Elem> t) {
  std::string s = "(";
  bool first = true;
  for (Elem e : t) {
    s += (first ? "" : ",") + A.label(e);
    first = false;
  }
  return s + ")";
}

// ---------------------------------------------------------------- oracles

// The lattice expressions of J, J', K and the S_i, computed from element
// labels alone: ~X is the bar of X, indexed labels carry their state.
class LatticeOracle {
 public:
  explicit LatticeOracle(const FiniteAlgebra& A) : m_(A.size()) {
    bar_.assign(m_, -1);
    v0_.assign(m_, 0);
    ctrl_.assign(m_, 0);
    zero_ = A.element("0");
    for (Elem e = 0; e < m_; ++e) {
      const std::string& l = A.label(e);
      if (l == "1" || l == "2") ctrl_[e] = 1;
      if (l.size() > 1 && l[0] == '~') {
        Elem b = A.element(l.substr(1));
        bar_[e] = b;
        bar_[b] = e;
      }
      std::string core = l[0] == '~' ? l.substr(1) : l;
      if (core.size() > 3 && core[1] == '(' && core.compare(2, 2, "0,") == 0) v0_[e] = 1;
    }
  }

  Elem meet(Elem a, Elem b) const { return a == b ? a : zero_; }
  Elem meet(Elem a, Elem b, Elem c) const { return meet(meet(a, b), c); }
  Elem d(Elem y) const { return bar_[y] < 0 ? zero_ : bar_[y]; }
  // Flat join of joinands of which at most one is nonzero.
  Elem join(std::initializer_list<Elem> xs) const {
    Elem out = zero_;
    for (Elem x : xs) {
      if (x == zero_) continue;
      if (out != zero_ && out != x) throw std::logic_error("flat join with two nonzero joinands");
      out = x;
    }
    return out;
  }

  Elem J(Elem x, Elem y, Elem z) const { return join({meet(x, d(y), z), meet(x, y)}); }
  Elem Jp(Elem x, Elem y, Elem z) const { return join({meet(x, y, z), meet(x, d(y))}); }
  Elem K(Elem x, Elem y, Elem z) const {
    return join({meet(d(x), y), meet(d(x), d(y), z), meet(x, y, z)});
  }
  Elem S(bool sel, Elem x, Elem y, Elem z) const {
    return sel ? join({meet(x, y), meet(x, z)}) : zero_;
  }
  Elem S0(Elem u, Elem x, Elem y, Elem z) const { return S(v0_[u], x, y, z); }
  Elem S1(Elem u, Elem x, Elem y, Elem z) const { return S(ctrl_[u], x, y, z); }
  Elem S2(Elem u, Elem v, Elem x, Elem y, Elem z) const {
    return S(bar_[v] >= 0 && u == bar_[v], x, y, z);
  }
  bool in_dom(Elem e) const { return bar_[e] >= 0; }
  Elem zero() const { return zero_; }

 private:
  int m_;
  Elem zero_;
  std::vector<Elem> bar_;
  std::vector<char> v0_, ctrl_;
};

// Principal congruence by naive pair closure: compatible images of every
// related pair under every fundamental translation, then symmetric and
// transitive closure, to a fixpoint.
Partition naive_cg(const FiniteAlgebra& A, Elem a, Elem b) {
  const int m = A.size();
  std::vector<std::vector<char>> R(m, std::vector<char>(m, 0));
  for (int i = 0; i < m; ++i) R[i][i] = 1;
  std::vector<std::pair<Elem, Elem>> work;
  auto add = [&](Elem u, Elem v) {
    if (R[u][v]) return;
    R[u][v] = R[v][u] = 1;
    work.emplace_back(u, v);
  };
  add(a, b);
  std::vector<Elem> t;
  while (!work.empty()) {
    while (!work.empty()) {
      auto [u, v] = work.back();
      work.pop_back();
      for (int op = 0; op < A.op_count(); ++op) {
        const int k = A.op(op).arity;
        if (k == 0) continue;
        t.assign(k, 0);
        std::size_t total = 1;
        for (int i = 0; i < k - 1; ++i) total *= m;
        for (int pos = 0; pos < k; ++pos)
          for (std::size_t idx = 0; idx < total; ++idx) {
            std::size_t rest = idx;
            for (int i = 0; i < k; ++i) {
              if (i == pos) continue;
              t[i] = static_cast<Elem>(rest % m);
              rest /= m;
            }
            t[pos] = u;
            Elem fu = A.apply(op, t.data());
            t[pos] = v;
            Elem fv = A.apply(op, t.data());
            add(fu, fv);
          }
      }
    }
    for (int k = 0; k < m; ++k)
      for (int i = 0; i < m; ++i)
        if (R[i][k])
          for (int j = 0; j < m; ++j)
            if (R[k][j] && !R[i][j]) add(i, j);
  }
  Partition p(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (R[i][j]) p.unite(i, j);
  return p;
}

// Every tuple of every operation of arity <= max_arity maps related
// arguments to related values.
bool respects(const FiniteAlgebra& A, const Partition& th, std::string* why) {
  const int m = A.size();
  auto canon = th.canonical();
  for (int op = 0; op < A.op_count(); ++op) {
    const int k = A.op(op).arity;
    if (k == 0) continue;
    std::size_t total = 1;
    for (int i = 0; i < k - 1; ++i) total *= m;
    std::vector<Elem> t(k);
    for (int pos = 0; pos < k; ++pos)
      for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rest = idx;
        for (int i = 0; i < k; ++i) {
          if (i == pos) continue;
          t[i] = static_cast<Elem>(rest % m);
          rest /= m;
        }
        for (Elem u = 0; u < m; ++u) {
          Elem v = canon[u];
          if (u == v) continue;
          t[pos] = u;
          Elem fu = A.apply(op, t.data());
          t[pos] = v;
          Elem fv = A.apply(op, t.data());
          if (canon[fu] != canon[fv]) {
            if (why) *why = A.op(op).name + " at position " + std::to_string(pos);
            return false;
          }
        }
      }
  }
  return true;
}

TuringMachine loop_machine() { return parse_tm("states 2\n1 0 0 R 1\n"); }

// ---------------------------------------------------------------- tm_core

CheckResult check_tm_deterministic(const TuringMachine& tm, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int runs = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Configuration q;
    q.state = 1 + static_cast<int>(rng() % std::max(1, tm.state_count - 1));
    q.head = static_cast<long>(rng() % 7) - 3;
    for (long k = -4; k <= 4; ++k)
      if (rng() % 2) q.write(k, 1);
    auto a = run(tm, q, 40), b = run(tm, q, 40);
    if (a.trace != b.trace || a.halted != b.halted)
      return verdict("tm.deterministic", false, "runs differ from " + q.str());
    // cells never under the head keep their initial contents
    std::set<long> visited;
    for (auto& c : a.trace) visited.insert(c.head);
    for (auto& c : a.trace)
      for (long k = -12; k <= 12; ++k)
        if (!visited.count(k) && c.read(k) != q.read(k))
          return verdict("tm.deterministic", false, "unvisited cell " + std::to_string(k) + " changed");
    ++runs;
  }
  return verdict("tm.deterministic", true, std::to_string(runs) + " random runs repeat exactly");
}

CheckResult check_tm_leq(const TuringMachine& tm) {
  Interval N{0, 2};
  auto om = build_omega(tm, N, N);
  const int n = static_cast<int>(om.configs.size());
  std::vector<std::vector<char>> leq(n, std::vector<char>(n));
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) leq[p][q] = om.leq(p, q);
  for (int p = 0; p < n; ++p)
    if (!leq[p][p]) return verdict("tm.leq_N", false, "not reflexive at " + om.configs[p].str());
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      if (leq[p][q])
        for (int r = 0; r < n; ++r)
          if (leq[q][r] && !leq[p][r])
            return verdict("tm.leq_N", false, "not transitive through " + om.configs[q].str());
  // spot check against the standalone search
  for (int p = 0; p < n; p += 7)
    for (int q = 0; q < n; q += 5)
      if (leq[p][q] != leq_N(tm, N, om.configs[p], om.configs[q], N))
        return verdict("tm.leq_N", false, "graph and search disagree");
  return verdict("tm.leq_N", true,
                 "reflexive and transitive on " + std::to_string(n) + " configurations, N=[0,2]");
}

// ---------------------------------------------------------------- algebra_core

std::vector<std::pair<std::string, AlgPtr>> small_algebras(const TuringMachine& tm) {
  std::vector<std::pair<std::string, AlgPtr>> out;
  auto sig = aprime_signature(tm);
  out.emplace_back("TwoElt", build_small_si(SmallKind::TwoElt, tm));
  out.emplace_back("ThreeElt", build_small_si(SmallKind::ThreeElt, tm));
  out.emplace_back("W", build_small_si(SmallKind::W, tm));
  out.emplace_back("S2", build_sequential(2, sig));
  out.emplace_back("S3", build_sequential(3, sig));
  AlgPtr A = build_aprime(tm);
  out.emplace_back("<1,C>", generated_subalgebra(A, {APrime::ONE, APrime::C}).alg);
  out.emplace_back("<H,C>", generated_subalgebra(A, {APrime::H, APrime::C}).alg);
  return out;
}

CheckResult check_cg_oracle(const TuringMachine& tm) {
  int pairs = 0;
  for (auto& [name, A] : small_algebras(tm)) {
    if (A->size() > 12) continue;
    for (Elem a = 0; a < A->size(); ++a)
      for (Elem b = a; b < A->size(); ++b) {
        if (!(principal_congruence(*A, a, b) == naive_cg(*A, a, b)))
          return verdict("alg.cg_oracle", false,
                         name + ": Cg" + tuple_str(*A, {a, b}) + " differs from the pair closure");
        ++pairs;
      }
  }
  return verdict("alg.cg_oracle", true, std::to_string(pairs) + " principal congruences agree");
}

CheckResult check_lattice_invariants(const TuringMachine& tm) {
  int congs = 0;
  for (auto& [name, A] : small_algebras(tm)) {
    if (A->size() > 12) continue;
    auto lat = congruence_lattice(*A);
    bool has_id = false, has_full = false;
    for (auto& th : lat) {
      has_id = has_id || th.is_identity();
      has_full = has_full || th.is_full();
      std::string why;
      if (!respects(*A, th, &why))
        return verdict("alg.lattice", false, name + ": " + th.str(*A) + " fails " + why);
      Quotient q = quotient(A, th);
      if (!(pullback(q, Partition(q.alg->size())) == th))
        return verdict("alg.lattice", false, name + ": pullback of the quotient differs");
      ++congs;
    }
    if (!has_id || !has_full) return verdict("alg.lattice", false, name + ": lattice lacks a bound");
    if (monolith(*A) && !is_fsi(*A)) return verdict("alg.lattice", false, name + ": SI but not FSI");
  }
  return verdict("alg.lattice", true,
                 std::to_string(congs) + " congruences compatible, quotient pullbacks exact");
}

CheckResult check_subuniverse(const TuringMachine& tm, std::uint64_t seed) {
  AlgPtr A = build_aprime(tm);
  std::mt19937_64 rng(seed);
  const int m = A->size();
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Elem> g1;
    const int k = 1 + static_cast<int>(rng() % 2);
    for (int i = 0; i < k; ++i) g1.push_back(static_cast<Elem>(rng() % m));
    auto g2 = g1;
    g2.push_back(static_cast<Elem>(rng() % m));
    auto s1 = generate_subuniverse(*A, g1), s2 = generate_subuniverse(*A, g2);
    std::set<Elem> big(s2.begin(), s2.end());
    for (Elem e : s1)
      if (!big.count(e)) return verdict("alg.subuniverse", false, "not monotone");
    auto again = generate_subuniverse(*A, s1);
    if (std::set<Elem>(again.begin(), again.end()) != std::set<Elem>(s1.begin(), s1.end()))
      return verdict("alg.subuniverse", false, "not idempotent");
  }
  auto hc = generate_subuniverse(*A, {APrime::H, APrime::C});
  std::set<std::string> labels;
  for (Elem e : hc) labels.insert(A->label(e));
  if (labels != std::set<std::string>{"0", "H", "C", "D", "M(1,0)"})
    return verdict("alg.subuniverse", false, "<H,C> has the wrong elements");
  return verdict("alg.subuniverse", true, "monotone and idempotent on 40 random generator sets");
}

// ---------------------------------------------------------------- aprime

struct CountCase {
  TuringMachine tm;
  std::string name;
};

CheckResult check_counts(const std::vector<CountCase>& cases) {
  auto t0 = Clock::now();
  std::string detail;
  double slowest = 0;
  for (auto& c : cases) {
    const int n1 = c.tm.state_count;
    const int m = static_cast<int>(c.tm.instructions.size());
    auto tb = Clock::now();
    auto A = build_aprime(c.tm);
    slowest = std::max(slowest, since(tb));
    auto A16 = build_aprime(c.tm, true);
    if (A->size() != 8 + 20 * n1 || A->op_count() != 11 + 6 * m || A16->op_count() != 10 + 6 * m)
      return verdict("aprime.counts", false,
                     c.name + ": " + std::to_string(A->size()) + " elements, " +
                         std::to_string(A->op_count()) + " operations");
    if (!detail.empty()) detail += ", ";
    detail += c.name + " " + std::to_string(A->size()) + "/" + std::to_string(A->op_count());
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "; slowest build %.3fs", slowest);
  // the time only shows up on failure so that passing reports stay reproducible
  auto r = verdict("aprime.counts", slowest < 1.0, detail + (slowest < 1.0 ? "; every build under 1s" : buf));
  r.payload["slowest_build_seconds"] = slowest;
  r.seconds = since(t0);
  return r;
}

std::vector<CountCase> count_cases(const TuringMachine& tm, std::uint64_t seed) {
  std::vector<CountCase> out = {{tm, "given"},
                                {default_machine(), "halting-1"},
                                {parse_tm("states 2\n"), "empty"},
                                {parse_tm("states 3\n1 0 1 R 2\n2 1 0 L 0\n"), "3-state"}};
  std::mt19937_64 rng(seed);
  for (int t = 0; t < 6; ++t) {
    TuringMachine r;
    r.state_count = 2 + static_cast<int>(rng() % 4);
    for (int s = 1; s < r.state_count; ++s)
      for (int b = 0; b < 2; ++b)
        if (rng() % 3)
          r.instructions.push_back({s, b, static_cast<int>(rng() % 2), rng() % 2 ? Dir::L : Dir::R,
                                    static_cast<int>(rng() % r.state_count)});
    out.push_back({r, "random-" + std::to_string(t)});
  }
  return out;
}

CheckResult check_flat_bar(const TuringMachine& tm) {
  AlgPtr A = build_aprime(tm);
  auto ap = aprime_of(*A);
  const int m = A->size();
  for (Elem x = 0; x < m; ++x)
    for (Elem y = 0; y < m; ++y) {
      Elem r = A->meet(x, y);
      if ((x == y && r != x) || (x != y && r != APrime::ZERO))
        return verdict("aprime.flat_bar", false, "meet" + tuple_str(*A, {x, y}) + " not flat");
    }
  int dom = 0;
  for (Elem x = 0; x < m; ++x) {
    Elem b = ap->bar(x);
    bool in_dom = x >= APrime::C;
    if ((b >= 0) != in_dom) return verdict("aprime.flat_bar", false, "bar domain wrong at " + A->label(x));
    if (b >= 0) {
      ++dom;
      if (b == x || ap->bar(b) != x)
        return verdict("aprime.flat_bar", false, "bar not an involution at " + A->label(x));
      if (A->label(b) != (A->label(x)[0] == '~' ? A->label(x).substr(1) : "~" + A->label(x)))
        return verdict("aprime.flat_bar", false, "bar label mismatch at " + A->label(x));
    }
  }
  return verdict("aprime.flat_bar", true,
                 "meet flat on " + std::to_string(m) + " elements; bar an involution on " +
                     std::to_string(dom));
}

CheckResult check_lattice_expressions(const TuringMachine& tm, std::uint64_t samples5,
                                      std::uint64_t seed, int workers) {
  auto t0 = Clock::now();
  AlgPtr A = build_aprime(tm);
  LatticeOracle L(*A);
  const int m = A->size();
  const int J = A->op_index("J"), Jp = A->op_index("Jp"), K = A->op_index("K");
  const int S0 = A->op_index("S0"), S1 = A->op_index("S1"), S2 = A->op_index("S2");
  std::uint64_t checked = 0;
  auto fail = [&](const std::string& what) {
    auto r = verdict("aprime.lattice_expr", false, what);
    r.seconds = since(t0);
    return r;
  };
  for (Elem x = 0; x < m; ++x)
    for (Elem y = 0; y < m; ++y)
      for (Elem z = 0; z < m; ++z) {
        if (A->apply(J, {x, y, z}) != L.J(x, y, z)) return fail("J" + tuple_str(*A, {x, y, z}));
        if (A->apply(Jp, {x, y, z}) != L.Jp(x, y, z)) return fail("Jp" + tuple_str(*A, {x, y, z}));
        if (K >= 0 && A->apply(K, {x, y, z}) != L.K(x, y, z)) return fail("K" + tuple_str(*A, {x, y, z}));
        checked += 3;
      }
  std::atomic<bool> bad{false};
  std::mutex mu;
  std::string where;
  parallel_chunks(m, workers, [&](int u) {
    for (Elem x = 0; x < m && !bad; ++x)
      for (Elem y = 0; y < m; ++y)
        for (Elem z = 0; z < m; ++z) {
          bool b0 = A->apply(S0, {u, x, y, z}) != L.S0(u, x, y, z);
          bool b1 = A->apply(S1, {u, x, y, z}) != L.S1(u, x, y, z);
          if (b0 || b1) {
            std::lock_guard<std::mutex> lk(mu);
            bad = true;
            where = (b0 ? "S0" : "S1") + tuple_str(*A, {u, x, y, z});
            return;
          }
        }
  });
  if (bad) return fail(where);
  checked += 2ull * m * m * m * m;
  // S_2 on the part of its domain where the selector can fire
  std::uint64_t dom5 = 0;
  for (Elem v = 0; v < m; ++v) {
    if (!L.in_dom(v)) continue;
    for (Elem u = 0; u < m; ++u)
      for (Elem x = 0; x < m; ++x)
        for (Elem y = 0; y < m; ++y)
          for (Elem z = 0; z < m; ++z)
            if (u == L.d(v) || (x == 0 && y == 0)) {
              if (A->apply(S2, {u, v, x, y, z}) != L.S2(u, v, x, y, z))
                return fail("S2" + tuple_str(*A, {u, v, x, y, z}));
              ++dom5;
            }
  }
  checked += dom5;
  // uniformly sampled arity-5 tuples, fixed chunks
  const int chunks = 64;
  std::vector<std::uint64_t> done(chunks, 0);
  parallel_chunks(chunks, workers, [&](int c) {
    std::mt19937_64 rng(seed * 1000003ull + static_cast<std::uint64_t>(c));
    std::uniform_int_distribution<int> pick(0, m - 1);
    const std::uint64_t n = samples5 / chunks + (static_cast<std::uint64_t>(c) < samples5 % chunks);
    for (std::uint64_t i = 0; i < n && !bad; ++i) {
      Elem t[5];
      for (auto& e : t) e = pick(rng);
      if (A->apply(S2, t) != L.S2(t[0], t[1], t[2], t[3], t[4])) {
        std::lock_guard<std::mutex> lk(mu);
        bad = true;
        where = "S2" + tuple_str(*A, {t[0], t[1], t[2], t[3], t[4]});
      }
      ++done[c];
    }
  });
  if (bad) return fail(where);
  std::uint64_t sampled = 0;
  for (auto d : done) sampled += d;
  checked += sampled;
  auto r = verdict("aprime.lattice_expr", true,
                   "0 mismatches; exhaustive J,Jp,K,S0,S1, " + std::to_string(dom5) +
                       " S2 tuples on its selector domain, " + std::to_string(sampled) +
                       " uniform S2 samples (" + std::to_string(checked) + " evaluations)");
  r.seconds = since(t0);
  return r;
}

CheckResult check_e2_T(const TuringMachine& tm) {
  AlgPtr A = build_aprime(tm);
  LatticeOracle L(*A);
  const int m = A->size();
  const int S2 = A->op_index("S2"), T = A->op_index("T"), P = A->op_index("prod");
  for (Elem x = 0; x < m; ++x)
    for (Elem y = 0; y < m; ++y)
      for (Elem z = 0; z < m; ++z) {
        Elem want = (L.in_dom(y) && x == L.d(y)) ? z : APrime::ZERO;
        if (A->apply(S2, {x, y, z, z, z}) != want)
          return verdict("aprime.e2_T", false, "e_2" + tuple_str(*A, {x, y, z}));
      }
  for (Elem w = 0; w < m; ++w)
    for (Elem x = 0; x < m; ++x)
      if (A->apply(T, {w, x, w, x}) != A->apply(P, {w, x}))
        return verdict("aprime.e2_T", false, "T" + tuple_str(*A, {w, x, w, x}) + " != w.x");
  return verdict("aprime.e2_T", true, "e_2(x,y,z) = z exactly when x = ~y; T(w,x,w,x) = w.x");
}

CheckResult check_machine_totality(const TuringMachine& tm) {
  AlgPtr A = build_aprime(tm);
  auto ap = aprime_of(*A);
  const int m = A->size();
  std::uint64_t n = 0;
  for (int op = 0; op < A->op_count(); ++op) {
    const std::string& name = A->op(op).name;
    if (name[0] != 'L' && name[0] != 'R' && name[0] != 'U') continue;
    const int k = A->op(op).arity;
    std::vector<Elem> t(k, 0);
    std::size_t total = 1;
    for (int i = 0; i < k; ++i) total *= m;
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t rest = idx;
      for (int i = k - 1; i >= 0; --i) {
        t[i] = static_cast<Elem>(rest % m);
        rest /= m;
      }
      Elem r = A->apply(op, t.data());
      if (r < 0 || r >= m || (r != APrime::ZERO && !ap->in_V(r)))
        return verdict("aprime.machine_ops", false, name + " leaves 0 u V");
      ++n;
    }
  }
  return verdict("aprime.machine_ops", true,
                 std::to_string(n) + " machine-operation evaluations land in 0 u V");
}

CheckResult check_zero_absorbing(const TuringMachine& tm) {
  auto t0 = Clock::now();
  AlgPtr A = build_aprime(tm);
  const std::map<std::string, std::vector<int>> expected = {
      {"J", {2}}, {"Jp", {2}}, {"K", {2}}, {"S0", {2, 3}}, {"S1", {2, 3}}, {"S2", {3, 4}}};
  auto rep = classify_zero_absorbing(*A);
  json payload = json::object();
  for (auto& e : rep) {
    std::vector<int> non;
    for (int c = 0; c < e.arity; ++c)
      if (!e.absorbing[c]) non.push_back(c);
    auto it = expected.find(e.op);
    std::vector<int> want = it == expected.end() ? std::vector<int>{} : it->second;
    payload[e.op] = non;
    if (non != want) {
      auto r = verdict("aprime.zero_absorbing", false, e.op + " has non-absorbing coordinates " +
                                                           json(non).dump() + ", expected " +
                                                           json(want).dump());
      r.payload = payload;
      return r;
    }
  }
  auto r = verdict("aprime.zero_absorbing", true,
                   "only J,Jp,K (last) and S_j (last two) fail to absorb 0; " +
                       std::to_string(rep.size()) + " operations scanned");
  r.seconds = since(t0);
  return r;
}

CheckResult check_meet_commuting_report(const TuringMachine& tm, std::uint64_t seed) {
  AlgPtr A = build_aprime(tm);
  std::string detail;
  json payload = json::object();
  bool ok = true;
  for (const char* name : {"meet", "I", "prod", "J", "Jp", "K"}) {
    int op = A->op_index(name);
    if (op < 0) continue;
    auto r = check_meet_commuting(*A, op, 200000, seed);
    payload[name] = r.commutes;
    if ((std::string(name) == "meet" || std::string(name) == "I") && !r.commutes) ok = false;
    detail += std::string(detail.empty() ? "" : " ") + name + "=" + (r.commutes ? "yes" : "no");
  }
  auto r = verdict("aprime.meet_commuting", ok, detail);
  r.payload = payload;
  return r;
}

// ---------------------------------------------------------------- si_catalog

CheckResult check_sequential(int max_n) {
  auto t0 = Clock::now();
  auto sig = aprime_signature(default_machine());
  std::string detail;
  bool ok = true;
  for (int n = 1; n <= max_n; ++n) {
    auto S = build_sequential(n, sig);
    auto mono = monolith(*S);
    std::string what;
    if (!mono) {
      // name two disjoint atoms to show why
      auto lat = congruence_lattice(*S);
      std::vector<std::string> atoms;
      for (Elem a = 1; a < S->size(); ++a) {
        auto cg = principal_congruence(*S, a, 0);
        bool atom = true;
        for (auto& th : lat)
          if (!th.is_identity() && th.leq(cg) && !(th == cg)) atom = false;
        if (atom && atoms.size() < 2) atoms.push_back(cg.str(*S));
      }
      what = "not SI";
      for (auto& s : atoms) what += " " + s;
      ok = false;
    } else {
      auto blocks = mono->blocks();
      std::vector<std::vector<int>> nontriv;
      for (auto& b : blocks)
        if (b.size() > 1) nontriv.push_back(b);
      bool good = nontriv.size() == 1 && nontriv[0] == std::vector<int>{0, S->element("b1")};
      what = good ? "monolith {b1,0}" : "monolith " + mono->str(*S);
      ok = ok && good;
    }
    detail += (detail.empty() ? "" : "; ") + std::string("S_") + std::to_string(n) + ": " + what;
  }
  auto r = verdict("si.sequential", ok, detail);
  r.seconds = since(t0);
  return r;
}

CheckResult check_sequential_embedding(int max_n) {
  auto sig = aprime_signature(default_machine());
  int pairs = 0;
  for (int n = 1; n <= max_n; ++n) {
    auto Sn = build_sequential(n, sig);
    for (int mm = 1; mm <= n; ++mm) {
      auto Sm = build_sequential(mm, sig);
      const int shift = n - mm;
      std::vector<Elem> f(Sm->size());
      f[0] = 0;
      for (int i = 1; i <= mm; ++i) {
        f[Sm->element("a" + std::to_string(i))] = Sn->element("a" + std::to_string(i + shift));
        f[Sm->element("b" + std::to_string(i))] = Sn->element("b" + std::to_string(i + shift));
      }
      const int m = Sm->size();
      for (int op = 0; op < Sm->op_count(); ++op) {
        const int k = Sm->op(op).arity;
        std::vector<Elem> t(k, 0), ft(k);
        std::size_t total = 1;
        for (int i = 0; i < k; ++i) total *= m;
        for (std::size_t idx = 0; idx < total; ++idx) {
          std::size_t rest = idx;
          for (int i = k - 1; i >= 0; --i) {
            t[i] = static_cast<Elem>(rest % m);
            rest /= m;
            ft[i] = f[t[i]];
          }
          if (f[Sm->apply(op, t.data())] != Sn->apply(op, ft.data()))
            return verdict("si.embedding", false,
                           "S_" + std::to_string(mm) + " -> S_" + std::to_string(n) + " fails at " +
                               Sm->op(op).name);
        }
      }
      ++pairs;
    }
  }
  return verdict("si.embedding", true,
                 std::to_string(pairs) + " index-shift embeddings S_m -> S_n are homomorphisms");
}

// J = x^y and J' = K = x^y^z wherever S_2 vanishes.
bool k_on_large_si(const FiniteAlgebra& B, std::string* why) {
  const int s2 = B.op_index("S2");
  if (s2 < 0 || B.sparse(s2).count() > 0) return true;  // premise fails, nothing to check
  const int J = B.op_index("J"), Jp = B.op_index("Jp"), K = B.op_index("K");
  const int m = B.size();
  for (Elem x = 0; x < m; ++x)
    for (Elem y = 0; y < m; ++y) {
      Elem xy = B.meet(x, y);
      for (Elem z = 0; z < m; ++z) {
        Elem xyz = B.meet(xy, z);
        bool ok = B.apply(J, {x, y, z}) == xy && B.apply(Jp, {x, y, z}) == xyz &&
                  (K < 0 || B.apply(K, {x, y, z}) == xyz);
        if (!ok) {
          if (why) *why = tuple_str(B, {x, y, z});
          return false;
        }
      }
    }
  return true;
}

struct MachineCase {
  std::shared_ptr<ThetaResult> theta;
  std::string spec;
  std::string detail;
  bool ok = false;
};

// First P (initial configurations first) whose default Φ passes conditions
// (1)-(5) on N, or nothing.
MachineCase machine_si(const TuringMachine& tm, Interval N) {
  MachineCase mc;
  auto om = build_omega(tm, N, N);
  std::vector<int> order;
  for (std::size_t i = 0; i < om.configs.size(); ++i)
    if (om.configs[i].state == 1 && om.configs[i].tape.empty()) order.push_back(static_cast<int>(i));
  for (std::size_t i = 0; i < om.configs.size(); ++i)
    if (!(om.configs[i].state == 1 && om.configs[i].tape.empty())) order.push_back(static_cast<int>(i));
  for (int p : order) {
    MachineSpec spec;
    spec.tm = tm;
    spec.N = N;
    spec.window = N;
    spec.P = om.configs[p];
    auto phi = default_phi(spec, om);
    if (!check_phi_conditions(spec, om, phi).all()) continue;
    mc.spec = "P=" + config_label(spec.P, N);
    try {
      mc.theta = std::make_shared<ThetaResult>(theta_phi_quotient(spec));
    } catch (const NotCongruenceError& e) {
      mc.detail = mc.spec + ": Theta not a congruence: " + e.what();
      return mc;
    }
    mc.ok = mc.theta->monolith.has_value();
    mc.detail = mc.spec + ", |phi|=" + std::to_string(mc.theta->phi.size()) + ", quotient " +
                std::to_string(mc.theta->quotient.alg->size()) + " elements, " +
                (mc.ok ? "SI" : "not SI");
    return mc;
  }
  mc.detail = "no P in the configuration space satisfies conditions (1)-(5)";
  return mc;
}

// A Φ that breaks condition (4) and nothing else: the full reachability
// closure of a P that runs into a halting configuration.
std::optional<std::string> rejects_condition4(const TuringMachine& tm, Interval N) {
  auto om = build_omega(tm, N, N);
  const int n = static_cast<int>(om.configs.size());
  for (int p = 0; p < n; ++p) {
    if (om.configs[p].state == 0) continue;
    MachineSpec spec;
    spec.tm = tm;
    spec.N = N;
    spec.window = N;
    spec.P = om.configs[p];
    std::vector<Configuration> phi;
    for (int q = 0; q < n; ++q)
      if (om.leq(p, q)) phi.push_back(om.configs[q]);
    auto rep = check_phi_conditions(spec, om, phi);
    if (rep.ok[3] || !rep.p_in_phi || !rep.ok[0] || !rep.ok[1] || !rep.ok[2] || !rep.ok[4])
      continue;
    spec.phi = phi;
    try {
      theta_phi_quotient(spec);
      return std::nullopt;
    } catch (const PreconditionError& e) {
      return "closure of P=" + config_label(spec.P, N) + " rejected: " + rep.detail[3];
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- formulas

const std::vector<std::string> kPsiMembers = {"psi_S",  "psi_J",  "psi_Jp",  "psi_JpJ",
                                              "psi_JS", "psi_JpS", "psi_JpJS"};

LibraryOptions chain_library_options() {
  LibraryOptions lo;
  lo.sentences = false;
  return lo;
}

CheckResult check_psi_soundness_small(const TuringMachine& tm) {
  int checked = 0;
  for (auto& [name, A] : small_algebras(tm)) {
    if (A->size() > 7) continue;
    Library lib = build_library(A, chain_library_options());
    FormulaEvaluator ev(lib);
    const int m = A->size();
    for (Elem c = 0; c < m; ++c)
      for (Elem d = 0; d < m; ++d) {
        const Partition& cg = ev.cg(c, d);
        for (Elem r = 0; r < m; ++r)
          for (Elem s = 0; s < m; ++s) {
            bool any = false;
            for (auto& p : kPsiMembers) {
              bool v = ev.call(p, {r, s, c, d});
              any = any || v;
              if (v && !cg.same(r, s))
                return verdict("formulas.soundness", false,
                               name + ": " + p + tuple_str(*A, {r, s, c, d}) + " outside Cg");
              ++checked;
            }
            if (any && !ev.call("psi_1", {r, s, c, d}))
              return verdict("formulas.soundness", false, name + ": psi_1 misses a member");
          }
      }
    // psi(-,-,c,c) defines the identity exactly when Pi_psi(c,c) holds
    int psi = lib.find("psi");
    for (Elem c = 0; c < m; ++c) {
      bool ident = true;
      for (Elem u = 0; u < m; ++u)
        for (Elem v = 0; v < m; ++v) ident = ident && (ev.call(psi, {u, v, c, c}) == (u == v));
      if (pi_psi_semantic(ev, psi, c, c).ok != ident)
        return verdict("formulas.soundness", false, name + ": Pi_psi(c,c) disagrees at " + A->label(c));
    }
  }
  return verdict("formulas.soundness", true,
                 std::to_string(checked) + " psi_X evaluations sound, psi_1 covers its members");
}

CheckResult check_e_image_closure(const TuringMachine& tm) {
  AlgPtr A = build_aprime(tm);
  const int m = A->size();
  int images = 0;
  auto test = [&](int i, const std::vector<Elem>& n) {
    bool nonzero = false, zero = false;
    for (Elem x = 0; x < m; ++x) {
      Elem e = e_i(*A, i, n, x);
      nonzero = nonzero || e != APrime::ZERO;
      zero = zero || e == APrime::ZERO;
    }
    ++images;
    return !nonzero || zero;
  };
  for (int i = 0; i < 2; ++i)
    for (Elem n = 0; n < m; ++n)
      if (!test(i, {n})) return verdict("formulas.e_image", false, "e_" + std::to_string(i) + " range misses 0");
  for (Elem a = 0; a < m; ++a)
    for (Elem b = 0; b < m; ++b)
      if (!test(2, {a, b})) return verdict("formulas.e_image", false, "e_2 range misses 0");
  // e_i(n, .) is idempotent, so every image element is fixed
  for (Elem n = 0; n < m; ++n)
    for (Elem x = 0; x < m; ++x) {
      Elem e = e_i(*A, 1, {n}, x);
      if (e_i(*A, 1, {n}, e) != e) return verdict("formulas.e_image", false, "e_1 not idempotent");
    }
  return verdict("formulas.e_image", true,
                 std::to_string(images) + " e_i ranges closed downwards in the flat order");
}

CheckResult check_jonsson(const TuringMachine& tm) {
  AlgPtr A = build_aprime(tm);
  auto onec = generated_subalgebra(A, {APrime::ONE, APrime::C}).alg;
  auto w = in_class_Mi(*onec, 1);
  if (!w) return verdict("formulas.jonsson", false, "<1,C> not in M_1");
  auto j = jonsson_check(*onec, *w, 1);
  if (!j.ok) return verdict("formulas.jonsson", false, "identity " + j.failed + " fails on <1,C>");
  // S_1(1,x,x,x) = x on all of A'(T)
  auto wa = in_class_Mi(*A, 1);
  if (!wa || A->label((*wa)[0]) != "1") return verdict("formulas.jonsson", false, "A'(T) not in M_1 via m=1");
  auto ja = jonsson_check(*A, *wa, 1);
  if (!ja.ok) return verdict("formulas.jonsson", false, "identity " + ja.failed + " fails on A'(T)");
  auto wit = dpsc_witness_jonsson(onec, onec->element("C"), onec->element("0"));
  if (wit.c == wit.d || !principal_congruence(*onec, onec->element("C"), 0).same(wit.c, wit.d))
    return verdict("formulas.jonsson", false, "bad witness");
  return verdict("formulas.jonsson", true,
                 "<1,C> and A'(T) in M_1 with m=" + onec->label((*w)[0]) + ", Jonsson identities hold, witness " +
                     tuple_str(*onec, {wit.c, wit.d}));
}

struct DpscCase {
  std::string name;
  AlgPtr alg;
};

std::vector<DpscCase> dpsc_cases(const TuringMachine& tm, bool products) {
  auto sig = aprime_signature(tm);
  std::vector<DpscCase> base = {{"TwoElt", build_small_si(SmallKind::TwoElt, tm)},
                                {"ThreeElt", build_small_si(SmallKind::ThreeElt, tm)},
                                {"W", build_small_si(SmallKind::W, tm)},
                                {"S2", build_sequential(2, sig)},
                                {"S3", build_sequential(3, sig)}};
  std::vector<DpscCase> out = base;
  if (products)
    for (std::size_t i = 0; i < base.size(); ++i)
      for (std::size_t j = i; j < base.size(); ++j)
        if (base[i].alg->size() * base[j].alg->size() <= 12)
          out.push_back({base[i].name + "x" + base[j].name, direct_product(base[i].alg, base[j].alg)});
  return out;
}

CheckResult check_dpsc(const TuringMachine& tm, bool products, int workers) {
  auto t0 = Clock::now();
  auto cases = dpsc_cases(tm, products);
  std::vector<AlgPtr> catalog;
  for (std::size_t i = 0; i < 5; ++i) catalog.push_back(cases[i].alg);
  const LibraryOptions opt = default_library_options(catalog);
  std::vector<std::string> lines(cases.size());
  std::vector<char> ok(cases.size(), 0);
  parallel_chunks(static_cast<int>(cases.size()), workers, [&](int i) {
    auto& c = cases[i];
    auto t1 = Clock::now();
    Library lib = build_library(c.alg, opt);
    FormulaEvaluator ev(lib);
    auto rep = dpsc_check(ev, lib.find("Gamma_star"), lib.find("psi"));
    std::map<std::string, int> br;
    for (auto& w : rep.witnesses) br[w.branch.empty() ? "-" : w.branch]++;
    std::string s = c.name + "(" + std::to_string(c.alg->size()) + ")";
    if (rep.ok) {
      s += " ok";
      for (auto& [b, n] : br) s += " " + b + ":" + std::to_string(n);
    } else {
      s += " FAILS at " + tuple_str(*c.alg, {rep.failed->first, rep.failed->second});
    }
    (void)t1;
    lines[i] = s;
    ok[i] = rep.ok;
  });
  bool all = std::all_of(ok.begin(), ok.end(), [](char c) { return c; });
  std::string detail = std::to_string(cases.size()) + " algebras";
  CheckResult r = verdict("formulas.dpsc", all, detail);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    r.trace.push_back(lines[i]);
    if (!ok[i]) r.detail += "; " + lines[i];
  }
  if (all) r.detail += " pass dpsc_check with (Gamma_star, psi)";
  r.seconds = since(t0);
  return r;
}

// ---------------------------------------------------------------- chains

struct CorpusRun {
  std::vector<ChainSample> samples;
  std::map<std::string, int> types;
  int failures = 0;
  std::string first_failure;
  double gen_seconds = 0, reduce_seconds = 0;
  std::vector<std::string> trace;
};

bool in_common_e_range(const FiniteAlgebra& A, Elem c, Elem d) {
  const int m = A.size();
  for (int i = 0; i < 2; ++i)
    for (Elem n = 0; n < m; ++n)
      if (e_i(A, i, {n}, c) == c && e_i(A, i, {n}, d) == d) return true;
  for (Elem a = 0; a < m; ++a)
    for (Elem b = 0; b < m; ++b)
      if (e_i(A, 2, {a, b}, c) == c && e_i(A, 2, {a, b}, d) == d) return true;
  return false;
}

CorpusRun run_corpus(const TuringMachine& tm, int count, std::uint64_t seed, bool trace) {
  CorpusRun cr;
  auto t0 = Clock::now();
  CorpusOptions co;
  co.seed = seed;
  co.count = count;
  cr.samples = random_chain_corpus(tm, co);
  cr.gen_seconds = since(t0);
  auto t1 = Clock::now();
  std::map<const FiniteAlgebra*, std::pair<std::unique_ptr<Library>, std::unique_ptr<FormulaEvaluator>>> libs;
  for (std::size_t k = 0; k < cr.samples.size(); ++k) {
    auto& s = cr.samples[k];
    const FiniteAlgebra& A = *s.alg;
    auto fail = [&](const std::string& why) {
      if (!cr.failures++) cr.first_failure = "sample " + std::to_string(k) + ": " + why;
    };
    if (A.size() > 20 || s.chain.links.size() > 5 || !verify_chain(A, s.chain, s.c, s.d) ||
        !is_decreasing(A, s.chain) || !in_common_e_range(A, s.c, s.d)) {
      fail("corpus sample breaks its own preconditions");
      continue;
    }
    auto& slot = libs[s.alg.get()];
    if (!slot.first) {
      slot.first = std::make_unique<Library>(build_library(s.alg, chain_library_options()));
      slot.second = std::make_unique<FormulaEvaluator>(*slot.first);
    }
    FormulaEvaluator& ev = *slot.second;
    auto res = reduce_chain(ev, s.chain, s.c, s.d);
    if (!res.ok) {
      fail(res.error);
      continue;
    }
    const Elem r = s.chain.elems.front(), t = s.chain.elems.back();
    const Partition& cg = ev.cg(s.c, s.d);
    bool seg = res.links.empty() ? r == t : (res.links.front().top == r && res.links.back().bottom == t);
    for (std::size_t i = 0; i < res.links.size() && seg; ++i) {
      seg = verify_link(A, res.links[i], s.c, s.d, &cg) && cg.same(res.links[i].top, res.links[i].bottom);
      if (i + 1 < res.links.size()) seg = seg && res.links[i].bottom == res.links[i + 1].top;
    }
    if (!seg) {
      fail("endpoint preservation fails after reduction");
      continue;
    }
    if (!res.psi_ok || !ev.call(psi_name(res.type), {r, t, s.c, s.d})) {
      fail(psi_name(res.type) + " false on the reduced chain");
      continue;
    }
    cr.types[to_string(res.type)]++;
    if (trace) {
      cr.trace.push_back("chain " + std::to_string(k) + " " + describe(A, s.chain) + " c=" +
                         A.label(s.c) + " d=" + A.label(s.d) + " -> " + to_string(res.type));
      for (auto& l : res.links) cr.trace.push_back("  " + describe(A, l));
    }
  }
  cr.reduce_seconds = since(t1);
  return cr;
}

CheckResult corpus_check(const CorpusRun& cr, int want) {
  std::string types;
  for (auto& [t, n] : cr.types) types += " " + t + ":" + std::to_string(n);
  bool ok = cr.failures == 0 && static_cast<int>(cr.samples.size()) >= want;
  std::string detail = std::to_string(cr.samples.size()) + " chains, " +
                       std::to_string(cr.failures) + " failures; types" + types;
  if (cr.failures) detail += "; first: " + cr.first_failure;
  auto r = verdict("chains.reduce", ok, detail);
  r.seconds = cr.gen_seconds + cr.reduce_seconds;
  r.trace = cr.trace;
  return r;
}

// Every true psi_X(u,v,c,d) over the corpus' (c,d) pairs lies in Cg(c,d).
CheckResult corpus_soundness(const CorpusRun& cr, int workers) {
  auto t0 = Clock::now();
  std::map<const FiniteAlgebra*, std::vector<std::pair<Elem, Elem>>> jobs;
  std::map<const FiniteAlgebra*, AlgPtr> owner;
  for (auto& s : cr.samples) {
    auto& v = jobs[s.alg.get()];
    if (std::find(v.begin(), v.end(), std::make_pair(s.c, s.d)) == v.end()) v.emplace_back(s.c, s.d);
    owner[s.alg.get()] = s.alg;
  }
  std::vector<const FiniteAlgebra*> keys;
  for (auto& [k, v] : jobs) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), [&](auto a, auto b) { return a->labels() < b->labels(); });
  std::vector<std::uint64_t> trues(keys.size(), 0), evals(keys.size(), 0);
  std::vector<std::string> bad(keys.size());
  parallel_chunks(static_cast<int>(keys.size()), workers, [&](int i) {
    AlgPtr A = owner[keys[i]];
    Library lib = build_library(A, chain_library_options());
    FormulaEvaluator ev(lib);
    std::vector<int> ids;
    for (auto& p : kPsiMembers) ids.push_back(lib.find(p));
    const int m = A->size();
    for (auto [c, d] : jobs[keys[i]]) {
      const Partition& cg = ev.cg(c, d);
      for (Elem u = 0; u < m; ++u)
        for (Elem v = 0; v < m; ++v)
          for (std::size_t p = 0; p < ids.size(); ++p) {
            ++evals[i];
            if (!ev.call(ids[p], {u, v, c, d})) continue;
            ++trues[i];
            if (!cg.same(u, v) && bad[i].empty())
              bad[i] = kPsiMembers[p] + tuple_str(*A, {u, v, c, d});
          }
    }
  });
  std::uint64_t t = 0, e = 0, violations = 0;
  std::string first;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    t += trues[i];
    e += evals[i];
    if (!bad[i].empty()) {
      ++violations;
      if (first.empty()) first = bad[i];
    }
  }
  std::size_t pairs = 0;
  for (auto& [k, v] : jobs) pairs += v.size();
  auto r = verdict("chains.soundness", violations == 0,
                   std::to_string(e) + " psi_X evaluations over " + std::to_string(pairs) +
                       " (c,d) pairs in " + std::to_string(keys.size()) + " algebras, " +
                       std::to_string(t) + " true, " + std::to_string(violations) + " violations" +
                       (first.empty() ? "" : "; first " + first));
  r.seconds = since(t0);
  return r;
}

// ---------------------------------------------------------------- small SIs

struct SmallSurvey {
  int subuniverses = 0;
  int si_quotients = 0;
  int e_zero = 0;
  std::map<std::string, int> kinds;
  std::vector<std::string> problems;
  std::vector<AlgPtr> quotients;  // every SI quotient found
};

SmallSurvey survey_small_si(const TuringMachine& tm, int workers) {
  SmallSurvey sv;
  AlgPtr A = build_aprime(tm);
  const int m = A->size();
  std::set<std::vector<Elem>> seen;
  std::vector<std::vector<Elem>> subs;
  for (Elem a = 0; a < m; ++a)
    for (Elem b = a; b < m; ++b) {
      auto u = generate_subuniverse(*A, a == b ? std::vector<Elem>{a} : std::vector<Elem>{a, b});
      std::sort(u.begin(), u.end());
      if (seen.insert(u).second) subs.push_back(u);
    }
  for (auto& g : {std::vector<Elem>{}}) {
    auto u = generate_subuniverse(*A, g);
    std::sort(u.begin(), u.end());
    if (seen.insert(u).second) subs.push_back(u);
  }
  sv.subuniverses = static_cast<int>(subs.size());
  std::vector<AlgPtr> refs = {build_small_si(SmallKind::TwoElt, tm),
                              build_small_si(SmallKind::ThreeElt, tm),
                              build_small_si(SmallKind::W, tm)};
  const char* names[] = {"TwoElt", "ThreeElt", "W"};
  struct Out {
    int si = 0, ez = 0;
    std::map<std::string, int> kinds;
    std::vector<std::string> problems;
    std::vector<AlgPtr> quotients;
  };
  std::vector<Out> outs(subs.size());
  parallel_chunks(static_cast<int>(subs.size()), workers, [&](int i) {
    Out& o = outs[i];
    auto sub = subalgebra(A, subs[i]).alg;
    auto lat = congruence_lattice(*sub, std::max(64, sub->size()));
    for (auto& th : completely_meet_irreducibles(lat)) {
      auto q = quotient(sub, th).alg;
      if (q->size() < 2 || !is_si(*q, std::max(64, q->size()))) continue;
      ++o.si;
      o.quotients.push_back(q);
      if (!satisfies_e_zero(*q)) continue;
      ++o.ez;
      int matches = 0;
      std::string kind;
      for (int k = 0; k < 3; ++k)
        if (refs[k]->size() == q->size() && is_isomorphic(*q, *refs[k])) {
          ++matches;
          kind = names[k];
        }
      if (matches != 1) {
        std::string gens;
        for (Elem e : subs[i]) gens += " " + A->label(e);
        o.problems.push_back("quotient of {" + gens + " } matches " + std::to_string(matches) +
                             " catalog algebras");
      } else {
        o.kinds[kind]++;
      }
    }
  });
  for (auto& o : outs) {
    sv.si_quotients += o.si;
    sv.e_zero += o.ez;
    for (auto& [k, n] : o.kinds) sv.kinds[k] += n;
    sv.problems.insert(sv.problems.end(), o.problems.begin(), o.problems.end());
    sv.quotients.insert(sv.quotients.end(), o.quotients.begin(), o.quotients.end());
  }
  return sv;
}

CheckResult small_si_check(const SmallSurvey& sv) {
  bool all3 = sv.kinds.size() == 3;
  bool ok = sv.problems.empty() && all3;
  std::string detail = std::to_string(sv.subuniverses) + " subalgebras on <= 2 generators, " +
                       std::to_string(sv.si_quotients) + " SI quotients, " +
                       std::to_string(sv.e_zero) + " with e_i = 0:";
  for (auto& [k, n] : sv.kinds) detail += " " + k + ":" + std::to_string(n);
  if (!all3) detail += "; not all three catalog algebras arise";
  if (!sv.problems.empty()) detail += "; " + sv.problems.front();
  return verdict("si.small", ok, detail);
}

CheckResult k_large_check(const std::vector<std::pair<std::string, AlgPtr>>& algs) {
  int premise = 0;
  for (auto& [name, B] : algs) {
    const int s2 = B->op_index("S2");
    if (s2 >= 0 && B->sparse(s2).count() == 0) ++premise;
    std::string why;
    if (!k_on_large_si(*B, &why))
      return verdict("si.K_large", false, name + ": J/Jp/K not meets at " + why);
  }
  return verdict("si.K_large", true,
                 std::to_string(algs.size()) + " algebras, " + std::to_string(premise) +
                     " with S_2 = 0; J = x^y, J' = K = x^y^z in all of those");
}

CheckResult gamma_window_check(const TuringMachine& tm, long W) {
  auto t0 = Clock::now();
  auto rep = build_gamma_window(tm, W);
  bool ok = rep.barred_free && rep.k_is_meet;
  for (auto& n : rep.notes)
    if (n.find("outside") != std::string::npos) ok = false;
  // I(α_0) coordinates
  AlgPtr A = build_aprime(tm);
  auto a0 = alpha_vector(0, rep.window);
  std::string img;
  for (std::size_t k = 0; k < a0.size(); ++k) img += A->label(A->apply("I", {a0[k]})) + " ";
  bool ialpha = true;
  for (long k = rep.window.lo; k <= rep.window.hi; ++k) {
    std::string want = k < 0 ? "C(1,0,0)" : k == 0 ? "M(1,0)" : "D(1,0,0)";
    ialpha = ialpha && A->label(A->apply("I", {a0[k - rep.window.lo]})) == want;
  }
  ok = ok && ialpha;
  auto r = verdict("si.gamma_window", ok,
                   "W=" + std::to_string(W) + ": " + std::to_string(rep.nowhere_zero->size()) +
                       " nowhere-zero elements, sigma " + std::to_string(rep.sigma) +
                       (rep.barred_free ? ", no barred coordinates" : ", BARRED coordinates") +
                       (rep.k_is_meet ? ", K = meet" : ", K differs from meet") +
                       (ialpha ? ", I(alpha_0) encodes the start" : ", I(alpha_0) wrong") +
                       ", beta chain links " + std::to_string(rep.beta_chain.size()));
  for (auto& n : rep.notes) r.trace.push_back(n);
  r.seconds = since(t0);
  return r;
}

CheckResult simulation_check(const TuringMachine& tm, long W, int steps, long start, int need) {
  auto t0 = Clock::now();
  auto rep = window_simulation(tm, W, steps, start);
  // A machine that stops early is held to the steps the simulator made.
  const int want = rep.halted || rep.steps < steps ? rep.steps : need;
  bool ok = rep.matched == rep.steps && rep.matched >= std::min(want, need) &&
            (rep.steps > 0 || rep.halted || !rep.log.empty());
  auto r = verdict("si.simulation", ok,
                   "W=" + std::to_string(W) + ", " + std::to_string(rep.matched) + "/" +
                       std::to_string(rep.steps) + " steps match the simulator" +
                       (rep.halted ? " (halted)" : ""));
  r.trace = rep.log;
  r.seconds = since(t0);
  return r;
}

}  // namespace

// ---------------------------------------------------------------- suite

SuiteReport run_suite(const TuringMachine& tm, const SuiteOptions& opt) {
  tm.validate();
  SuiteReport rep;
  rep.header.push_back("dpsc suite level=" + std::string(opt.full ? "full" : "quick") +
                       " seed=" + std::to_string(opt.seed));
  {
    std::string t = format_tm(tm);
    std::replace(t.begin(), t.end(), '\n', ';');
    rep.header.push_back("machine " + t);
  }
  auto add = [&](auto&& fn) {
    auto t0 = Clock::now();
    CheckResult r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.status = Status::Fail;
      r.detail = std::string("exception: ") + e.what();
    }
    if (r.seconds == 0) r.seconds = since(t0);
    if (opt.progress) opt.progress(r);
    rep.checks.push_back(std::move(r));
    return rep.checks.back();
  };
  auto named = [](CheckResult r, const std::string& id) {
    r.id = id;
    return r;
  };

  add([&] { return check_tm_deterministic(tm, opt.seed); });
  add([&] { return check_tm_leq(tm); });
  add([&] { return check_cg_oracle(tm); });
  add([&] { return check_lattice_invariants(tm); });
  add([&] { return check_subuniverse(tm, opt.seed); });
  add([&] { return check_counts(count_cases(tm, opt.seed)); });
  add([&] { return check_flat_bar(tm); });
  add([&] { return check_lattice_expressions(tm, opt.full ? 10'000'000 : 200'000, opt.seed, opt.workers); });
  add([&] { return check_e2_T(tm); });
  add([&] { return check_machine_totality(tm); });
  add([&] { return check_zero_absorbing(tm); });
  add([&] { return check_meet_commuting_report(tm, opt.seed); });
  add([&] { return check_sequential(opt.full ? 6 : 4); });
  add([&] { return check_sequential_embedding(opt.full ? 6 : 4); });

  std::vector<std::pair<std::string, AlgPtr>> si_algs;
  for (int n = 1; n <= 5; ++n)
    si_algs.emplace_back("S_" + std::to_string(n), build_sequential(n, aprime_signature(tm)));
  if (opt.full) {
    SmallSurvey sv;
    add([&] {
      sv = survey_small_si(tm, opt.workers);
      return small_si_check(sv);
    });
    for (std::size_t i = 0; i < sv.quotients.size(); ++i)
      si_algs.emplace_back("small-" + std::to_string(i), sv.quotients[i]);
  }
  MachineCase mc;
  add([&] {
    mc = machine_si(tm, Interval{0, 3});
    if (!mc.theta) {
      CheckResult r = verdict("si.machine", true, mc.detail);
      r.status = Status::Skip;
      return r;
    }
    return verdict("si.machine", mc.ok, mc.detail);
  });
  if (mc.theta) si_algs.emplace_back("machine", mc.theta->quotient.alg);
  add([&] { return k_large_check(si_algs); });
  add([&] { return gamma_window_check(tm, opt.full ? 3 : 2); });
  add([&] { return simulation_check(tm, 6, 12, -5, 10); });

  add([&] { return check_e_image_closure(tm); });
  add([&] { return check_jonsson(tm); });
  add([&] { return check_psi_soundness_small(tm); });
  add([&] { return check_dpsc(tm, opt.full, opt.workers); });

  CorpusRun cr;
  add([&] {
    cr = run_corpus(tm, opt.full ? 1000 : 100, opt.seed, opt.trace);
    return corpus_check(cr, opt.full ? 1000 : 100);
  });
  add([&] { return named(corpus_soundness(cr, opt.workers), "chains.soundness"); });
  return rep;
}

// ---------------------------------------------------------------- acceptance

struct AcceptanceContext {
  AcceptanceOptions opt;
  TuringMachine halting = default_machine();
  std::optional<SmallSurvey> survey;
  std::optional<MachineCase> machine;
  std::optional<CorpusRun> corpus;
};

std::shared_ptr<AcceptanceContext> make_acceptance_context(const AcceptanceOptions& opt) {
  auto ctx = std::make_shared<AcceptanceContext>();
  ctx->opt = opt;
  return ctx;
}

double acceptance_time_limit(int k) {
  static const double limits[] = {0, 10, 120, 60, 600, 60, 600, 120, 120, 900, 900, 1800};
  return k >= 1 && k <= kAcceptanceCriteria ? limits[k] : 0;
}

namespace {

// Halting 2-state machine for the machine-SI criterion: it walks left over
// 1s and halts on the first blank.
TuringMachine walker() { return parse_tm("states 2\n1 0 1 R 0\n1 1 1 L 1\n"); }

MachineCase& machine_case(AcceptanceContext& ctx) {
  if (!ctx.machine) ctx.machine = machine_si(walker(), Interval{0, 3});
  return *ctx.machine;
}

SmallSurvey& survey(AcceptanceContext& ctx) {
  if (!ctx.survey) ctx.survey = survey_small_si(ctx.halting, ctx.opt.workers);
  return *ctx.survey;
}

CorpusRun& corpus(AcceptanceContext& ctx) {
  if (!ctx.corpus) ctx.corpus = run_corpus(ctx.halting, ctx.opt.corpus, ctx.opt.seed, false);
  return *ctx.corpus;
}

CheckResult criterion(AcceptanceContext& ctx, int k) {
  const TuringMachine& tm = ctx.halting;
  switch (k) {
    case 1: {
      auto r = check_counts(count_cases(tm, ctx.opt.seed));
      char buf[64];
      std::snprintf(buf, sizeof buf, " (slowest %.3fs)", r.payload.value("slowest_build_seconds", 0.0));
      r.detail += buf;
      return r;
    }
    case 2: return check_lattice_expressions(tm, ctx.opt.samples5, ctx.opt.seed, ctx.opt.workers);
    case 3: return check_zero_absorbing(tm);
    case 4: {
      auto t0 = Clock::now();
      auto r = small_si_check(survey(ctx));
      r.seconds = since(t0);
      return r;
    }
    case 5: return check_sequential(5);
    case 6: {
      std::vector<std::pair<std::string, AlgPtr>> algs;
      for (int n = 1; n <= 5; ++n)
        algs.emplace_back("S_" + std::to_string(n), build_sequential(n, aprime_signature(tm)));
      auto& sv = survey(ctx);
      for (std::size_t i = 0; i < sv.quotients.size(); ++i)
        algs.emplace_back("small-" + std::to_string(i), sv.quotients[i]);
      auto& mc = machine_case(ctx);
      if (mc.theta) algs.emplace_back("machine", mc.theta->quotient.alg);
      return k_large_check(algs);
    }
    case 7: {
      auto t0 = Clock::now();
      auto& mc = machine_case(ctx);
      bool ok = mc.ok && mc.theta;
      std::string detail = "halting 2-state machine, N=[0,3]: " + mc.detail;
      if (mc.theta) {
        auto why = rejects_condition4(walker(), Interval{0, 3});
        ok = ok && why.has_value();
        detail += why ? "; condition (4) violation " + *why : "; no condition (4) rejection";
      }
      auto r = verdict("si.machine", ok, detail);
      r.seconds = since(t0);
      return r;
    }
    case 8: return simulation_check(loop_machine(), 6, 12, -5, 10);
    case 9: return corpus_check(corpus(ctx), ctx.opt.corpus);
    case 10: return corpus_soundness(corpus(ctx), ctx.opt.workers);
    case 11: return check_dpsc(tm, true, ctx.opt.workers);
    default: throw std::out_of_range("no acceptance criterion " + std::to_string(k));
  }
}

}  // namespace

CheckResult acceptance_criterion(AcceptanceContext& ctx, int k) {
  auto t0 = Clock::now();
  CheckResult r;
  try {
    r = criterion(ctx, k);
  } catch (const std::exception& e) {
    r.status = Status::Fail;
    r.detail = std::string("exception: ") + e.what();
  }
  r.id = "criterion-" + std::to_string(k);
  r.seconds = since(t0);
  return r;
}

}  // namespace dpsc
