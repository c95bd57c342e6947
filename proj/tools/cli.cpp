#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dpsc/aprime.hpp"
#include "dpsc/catalog.hpp"
#include "dpsc/formulas.hpp"
#include "dpsc/io.hpp"
#include "dpsc/suite.hpp"
#include "dpsc/tm.hpp"

using namespace dpsc;

namespace {

constexpr int kOk = 0, kCheckFailed = 1, kUsage = 2;

// Exceptions that mean the input was bad rather than a check failing.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TuringMachine load_tm(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const FormatError& e) {
    throw InputError(e.what());
  }
  try {
    return parse_tm(text);
  } catch (const ParseError& e) {
    throw InputError(path + ": " + e.what());
  }
}

TuringMachine tm_of(const FiniteAlgebra& alg) {
  auto it = alg.meta.find("machine");
  return it == alg.meta.end() ? default_machine() : parse_tm(it->second);
}

// seq:<n>, small:<TwoElt|ThreeElt|W>, aprime[:<tm file>], or a JSON file.
AlgPtr resolve_alg(const std::string& spec) {
  auto colon = spec.find(':');
  std::string kind = spec.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  try {
    if (kind == "seq") {
      int n = std::stoi(arg);
      if (n < 1) throw InputError("seq:<n> needs n >= 1");
      return build_sequential(n, aprime_signature(default_machine()));
    }
    if (kind == "small") {
      for (auto k : {SmallKind::TwoElt, SmallKind::ThreeElt, SmallKind::W})
        if (to_string(k) == arg) return build_small_si(k, default_machine());
      throw InputError("unknown small SI '" + arg + "' (TwoElt, ThreeElt or W)");
    }
    if (kind == "aprime") return build_aprime(arg.empty() ? default_machine() : load_tm(arg));
    return load_algebra(spec);
  } catch (const FormatError& e) {
    throw InputError(e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError("bad algebra spec '" + spec + "'");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;  // labels of product elements contain commas inside parentheses
  for (char ch : s) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch == sep && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

Elem resolve_label(const FiniteAlgebra& alg, const std::string& l) {
  if (auto e = alg.find(l)) return *e;
  // quotient elements are labelled [x|y|...]; any member names the block
  for (Elem e = 0; e < alg.size(); ++e) {
    const std::string& b = alg.label(e);
    if (b.size() < 2 || b.front() != '[' || b.back() != ']') continue;
    for (auto& part : split(b.substr(1, b.size() - 2), '|'))
      if (part == l) return e;
  }
  throw InputError("unknown label '" + l + "'");
}

void write_json(const nlohmann::json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(1) << "\n";
    return;
  }
  std::ofstream f(out);
  if (!f) throw InputError("cannot write " + out);
  f << j.dump(1) << "\n";
}

void print_check(const std::string& id, bool ok, const std::string& detail) {
  std::cout << "CHECK " << id << " " << (ok ? "PASS" : "FAIL") << " " << detail << "\n";
}

std::vector<AlgPtr> default_catalog(const TuringMachine& tm) {
  auto sig = aprime_signature(tm);
  return {build_small_si(SmallKind::TwoElt, tm), build_small_si(SmallKind::ThreeElt, tm),
          build_small_si(SmallKind::W, tm), build_sequential(2, sig), build_sequential(3, sig)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Definable principal subcongruences for the algebras A'(T)"};
  app.require_subcommand(1);

  // build
  auto* build = app.add_subcommand("build", "build A'(T) and write it as JSON");
  std::string tm_path, out_path;
  bool omit_K = false;
  build->add_option("tm", tm_path, "machine file")->required();
  build->add_option("-o,--out", out_path, "output file (default stdout)");
  build->add_flag("--omit-K", omit_K, "leave out the operation K");

  // cg
  auto* cg = app.add_subcommand("cg", "principal congruence Cg(a,b)");
  std::string alg_spec = "aprime";
  std::string la, lb;
  cg->add_option("--alg", alg_spec, "algebra: JSON file, seq:<n>, small:<name>, aprime[:<tm>]");
  cg->add_option("a", la)->required();
  cg->add_option("b", lb)->required();

  // si
  auto* si = app.add_subcommand("si", "subdirect irreducibility and monolith");
  si->add_option("--alg", alg_spec, "algebra")->required();

  // quotient
  auto* quot = app.add_subcommand("quotient", "quotient by Cg(a,b) or by a machine Theta_phi");
  std::vector<std::string> pair;
  std::string spec_path;
  quot->add_option("--alg", alg_spec, "algebra for --pair");
  quot->add_option("--pair", pair, "generating pair a b")->expected(2);
  quot->add_option("--tm", tm_path, "machine file for --spec");
  quot->add_option("--spec", spec_path, "machine spec: N a..b, window a..b, P s@h:bits, phi ...");
  quot->add_option("-o,--out", out_path, "write the quotient as JSON");

  // suite
  auto* suite = app.add_subcommand("suite", "run the property suite on a machine");
  std::string level = "quick";
  bool trace = false, as_json = false, timing = false;
  std::uint64_t seed = 0;
  int workers = 1;
  suite->add_option("tm", tm_path, "machine file")->required();
  suite->add_option("--level", level)->check(CLI::IsMember({"quick", "full"}));
  suite->add_flag("--trace", trace, "include chain transcripts and notes");
  suite->add_flag("--json", as_json, "JSON report");
  suite->add_flag("--timing", timing, "include timings (breaks byte-identical reports)");
  suite->add_option("--seed", seed, "random seed");
  suite->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

  // gamma
  auto* gamma = app.add_subcommand("gamma", "Gamma-window experiment and simulation check");
  long width = 6, start = -5;
  int steps = 12;
  gamma->add_option("tm", tm_path, "machine file")->required();
  gamma->add_option("--width", width, "window half-width W")->check(CLI::PositiveNumber);
  gamma->add_option("--steps", steps, "simulation steps");
  gamma->add_option("--start", start, "start coordinate of the simulation");

  // formula
  auto* formula = app.add_subcommand("formula", "congruence formula library");
  formula->require_subcommand(1);
  auto* feval = formula->add_subcommand("eval", "evaluate a formula");
  auto* fdump = formula->add_subcommand("dump", "print formula definitions");
  std::string fname, fargs;
  bool no_sentences = false;
  for (auto* sc : {feval, fdump}) {
    sc->add_option("--alg", alg_spec, "algebra");
    sc->add_flag("--no-sentences", no_sentences, "leave out sigma and zeta");
  }
  feval->add_option("--name", fname, "definition name")->required();
  feval->add_option("--args", fargs, "comma separated labels")->required();
  fdump->add_option("--name", fname, "only this definition");

  // tm
  auto* tmc = app.add_subcommand("tm", "Turing machine utilities");
  tmc->require_subcommand(1);
  auto* trun = tmc->add_subcommand("run", "run from a configuration");
  auto* tcheck = tmc->add_subcommand("check", "parse, validate and print a machine");
  std::string config = "1@0:";
  long max_steps = 50;
  trun->add_option("tm", tm_path)->required();
  trun->add_option("--config", config, "start configuration state@head:bits");
  trun->add_option("--steps", max_steps, "step bound");
  tcheck->add_option("tm", tm_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*build) {
      auto A = build_aprime(load_tm(tm_path), omit_K);
      write_json(algebra_to_json(*A), out_path);
      std::cerr << A->size() << " elements, " << A->op_count() << " operations\n";
      return kOk;
    }
    if (*cg) {
      auto A = resolve_alg(alg_spec);
      Elem a = resolve_label(*A, la), b = resolve_label(*A, lb);
      auto th = principal_congruence(*A, a, b);
      std::cout << th.str(*A) << "\n";
      if (th.is_identity()) std::cout << "identity\n";
      else if (th.is_full()) std::cout << "full collapse\n";
      else {
        auto blocks = th.blocks();
        std::cout << blocks.size() << " classes:";
        for (auto& b : blocks) {
          std::cout << " {";
          for (std::size_t i = 0; i < b.size(); ++i) std::cout << (i ? "," : "") << A->label(b[i]);
          std::cout << "}";
        }
        std::cout << "\n";
      }
      return kOk;
    }
    if (*si) {
      auto A = resolve_alg(alg_spec);
      auto mono = monolith(*A);
      std::cout << A->size() << " elements\n";
      if (mono) std::cout << "monolith " << mono->str(*A) << "\n";
      bool fsi = is_fsi(*A);
      print_check("si", mono.has_value(), mono ? "subdirectly irreducible" : "not subdirectly irreducible");
      print_check("fsi", fsi, fsi ? "finitely subdirectly irreducible" : "not finitely subdirectly irreducible");
      if (A->op_index("S2") >= 0 && A->size() <= 12) {
        auto cls = classify_small_si(*A, tm_of(*A));
        std::cout << "small SI: " << to_string(cls.kind) << " (" << cls.reason << ")\n";
      }
      return mono ? kOk : kCheckFailed;
    }
    if (*quot) {
      if (!spec_path.empty()) {
        if (tm_path.empty()) throw InputError("--spec needs --tm");
        auto tm = load_tm(tm_path);
        MachineSpec ms;
        try {
          ms = parse_machine_spec(tm, read_file(spec_path));
        } catch (const std::exception& e) {
          throw InputError(spec_path + ": " + e.what());
        }
        try {
          auto res = theta_phi_quotient(ms);
          for (int i = 0; i < 5; ++i)
            print_check("phi.condition" + std::to_string(i + 1), res.report.ok[i], res.report.detail[i]);
          std::cout << "phi:";
          for (auto& q : res.phi) std::cout << " " << config_label(q, ms.window);
          std::cout << "\nP_N " << res.pn.alg->size() << " elements, quotient "
                    << res.quotient.alg->size() << " elements\n";
          print_check("quotient.si", res.monolith.has_value(),
                      res.monolith ? "monolith " + res.monolith->str(*res.quotient.alg) : "not SI");
          if (!out_path.empty()) write_json(algebra_to_json(*res.quotient.alg), out_path);
          return res.monolith ? kOk : kCheckFailed;
        } catch (const PreconditionError& e) {
          print_check("phi.conditions", false, e.what());
          return kCheckFailed;
        } catch (const NotCongruenceError& e) {
          print_check("theta.congruence", false, e.what());
          return kCheckFailed;
        }
      }
      if (pair.size() != 2) throw InputError("quotient needs --pair a b or --tm with --spec");
      auto A = resolve_alg(alg_spec);
      auto th = principal_congruence(*A, resolve_label(*A, pair[0]), resolve_label(*A, pair[1]));
      auto q = quotient(A, th);
      std::cout << th.str(*A) << "\nquotient " << q.alg->size() << " elements\n";
      if (!out_path.empty()) write_json(algebra_to_json(*q.alg), out_path);
      return kOk;
    }
    if (*suite) {
      auto tm = load_tm(tm_path);
      SuiteOptions opt;
      opt.full = level == "full";
      opt.seed = seed;
      opt.workers = workers;
      opt.trace = trace;
      if (!as_json)
        opt.progress = [](const CheckResult& r) { std::cerr << "  " << r.id << " done\n"; };
      auto rep = run_suite(tm, opt);
      if (as_json) std::cout << rep.json(timing, trace).dump(1) << "\n";
      else std::cout << rep.text(timing, trace);
      return rep.ok() ? kOk : kCheckFailed;
    }
    if (*gamma) {
      auto tm = load_tm(tm_path);
      auto rep = build_gamma_window(tm, width);
      std::cout << "window " << rep.window.lo << ".." << rep.window.hi << ", "
                << rep.nowhere_zero->size() << " nowhere-zero elements, sigma " << rep.sigma << "\n";
      for (auto& n : rep.notes) std::cout << "  " << n << "\n";
      print_check("gamma.barred_free", rep.barred_free, "");
      print_check("gamma.K_meet", rep.k_is_meet, "");
      auto sim = window_simulation(tm, width, steps, start);
      for (auto& l : sim.log) std::cout << "  " << l << "\n";
      bool ok = sim.matched == sim.steps;
      print_check("gamma.simulation", ok,
                  std::to_string(sim.matched) + "/" + std::to_string(sim.steps) + " steps match" +
                      (sim.halted ? " (halted)" : ""));
      return ok && rep.barred_free && rep.k_is_meet ? kOk : kCheckFailed;
    }
    if (*formula) {
      auto A = resolve_alg(alg_spec);
      LibraryOptions lo = default_library_options(default_catalog(tm_of(*A)));
      lo.sentences = !no_sentences;
      Library lib = build_library(A, lo);
      if (*fdump) {
        for (int i = 0; i < lib.size(); ++i) {
          if (!fname.empty() && lib.def(i).name != fname) continue;
          std::cout << lib.sexpr(i) << "\n";
        }
        return kOk;
      }
      int id = lib.find(fname);
      if (id < 0) throw InputError("no formula named '" + fname + "'");
      std::vector<Elem> args;
      for (auto& l : split(fargs, ',')) args.push_back(resolve_label(*A, l));
      if (static_cast<int>(args.size()) != lib.def(id).params)
        throw InputError(fname + " takes " + std::to_string(lib.def(id).params) + " arguments");
      FormulaEvaluator ev(lib);
      std::cout << (ev.call(id, args) ? "true" : "false") << "\n";
      return kOk;
    }
    if (*tmc) {
      auto tm = load_tm(tm_path);
      if (*tcheck) {
        std::cout << format_tm(tm);
        return kOk;
      }
      Configuration q;
      try {
        q = parse_configuration(config);
      } catch (const std::exception& e) {
        throw InputError(e.what());
      }
      auto r = run(tm, q, max_steps);
      for (auto& c : r.trace) std::cout << c.str() << "\n";
      std::cout << (r.halted ? "halted" : r.stuck ? "stuck" : "step bound reached") << "\n";
      return kOk;
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
