#include "dpsc/io.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "dpsc/aprime.hpp"
#include "dpsc/tm.hpp"

namespace dpsc {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "dpsc-algebra/1";
constexpr std::size_t kTableLimit = 1u << 12;  // larger operations are stored sparsely

std::size_t table_size(int m, int arity) {
  std::size_t n = 1;
  for (int i = 0; i < arity; ++i) {
    n *= static_cast<std::size_t>(m);
    if (n > kTableLimit) return kTableLimit + 1;
  }
  return n;
}

std::vector<Elem> full_table(const FiniteAlgebra& alg, int op) {
  const Operation& o = alg.op(op);
  if (!o.table.empty()) return o.table;
  const int m = alg.size();
  const std::size_t n = table_size(m, o.arity);
  std::vector<Elem> table(n);
  std::vector<Elem> args(o.arity, 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t rest = idx;
    for (int i = o.arity - 1; i >= 0; --i) {
      args[i] = static_cast<Elem>(rest % m);
      rest /= m;
    }
    table[idx] = alg.apply(op, args.data());
  }
  return table;
}

bool is_aprime(const FiniteAlgebra& alg) {
  auto it = alg.meta.find("builtin");
  return it != alg.meta.end() && it->second == "aprime" && aprime_of(alg) != nullptr;
}

void check_signature(const FiniteAlgebra& alg, const json& ops) {
  if (static_cast<int>(ops.size()) != alg.op_count())
    throw FormatError("operation count does not match the builtin algebra");
  for (int i = 0; i < alg.op_count(); ++i) {
    if (ops[i].at("name").get<std::string>() != alg.op(i).name)
      throw FormatError("operation " + std::to_string(i) + " does not match the builtin algebra");
  }
}

void check_labels(const FiniteAlgebra& alg, const std::vector<std::string>& labels) {
  if (alg.labels() != labels) throw FormatError("labels do not match the rebuilt algebra");
}

std::uint64_t tuple_key(const Elem* t, int k, int m) {
  std::uint64_t key = 0;
  for (int i = 0; i < k; ++i) key = key * static_cast<std::uint64_t>(m) + static_cast<std::uint64_t>(t[i]);
  return key;
}

void add_sparse_op(FiniteAlgebra& alg, const std::string& name, const json& o) {
  const int m = alg.size();
  const int k = o.at("arity").get<int>();
  const Elem base = o.at("base").get<Elem>();
  if (k < 1 || k > 12 || base < 0 || base >= m)
    throw FormatError("operation " + name + ": bad sparse header");
  auto rows = std::make_shared<std::vector<std::vector<Elem>>>(
      o.at("entries").get<std::vector<std::vector<Elem>>>());
  auto lookup = std::make_shared<std::unordered_map<std::uint64_t, Elem>>();
  for (auto& r : *rows) {
    if (static_cast<int>(r.size()) != k + 1)
      throw FormatError("operation " + name + ": sparse entry has the wrong length");
    for (Elem e : r)
      if (e < 0 || e >= m) throw FormatError("operation " + name + ": value out of range");
    (*lookup)[tuple_key(r.data(), k, m)] = r[k];
  }
  Evaluator ev = [lookup, k, m, base](const Elem* a) {
    auto it = lookup->find(tuple_key(a, k, m));
    return it == lookup->end() ? base : it->second;
  };
  Enumerator en = [rows](const TupleSink& sink) {
    for (auto& r : *rows) sink(r.data(), r.back());
  };
  alg.add_rule_op(name, k, std::move(ev), {}, std::move(en));
}

}  // namespace

json algebra_to_json(const FiniteAlgebra& alg) {
  json doc;
  doc["format"] = kFormat;
  doc["labels"] = alg.labels();
  if (!alg.meta.empty()) doc["meta"] = alg.meta;
  json ops = json::array();
  if (is_aprime(alg)) {
    doc["machine"] = alg.meta.at("machine");
    doc["omit_K"] = alg.meta.count("omit_K") && alg.meta.at("omit_K") == "1";
    for (int i = 0; i < alg.op_count(); ++i)
      ops.push_back({{"name", alg.op(i).name},
                     {"arity", alg.op(i).arity},
                     {"rule", "builtin:aprime:" + alg.op(i).name}});
  } else if (alg.factor && !alg.vectors.empty() && alg.op_count() > 0) {
    doc["power"] = {{"factor", algebra_to_json(*alg.factor)}, {"vectors", alg.vectors}};
    for (int i = 0; i < alg.op_count(); ++i)
      ops.push_back({{"name", alg.op(i).name},
                     {"arity", alg.op(i).arity},
                     {"rule", "builtin:power:" + alg.op(i).name}});
  } else {
    for (int i = 0; i < alg.op_count(); ++i) {
      const Operation& o = alg.op(i);
      json op = {{"name", o.name}, {"arity", o.arity}};
      if (table_size(alg.size(), o.arity) <= kTableLimit) {
        op["table"] = full_table(alg, i);
      } else {
        const SparseOp& sp = alg.sparse(i);
        json entries = json::array();
        for (std::size_t t = 0; t < sp.count(); ++t) {
          std::vector<Elem> row(sp.tuple(t), sp.tuple(t) + o.arity);
          row.push_back(sp.out[t]);
          entries.push_back(std::move(row));
        }
        op["base"] = alg.base();
        op["entries"] = std::move(entries);
      }
      ops.push_back(std::move(op));
    }
  }
  doc["ops"] = std::move(ops);
  return doc;
}

AlgPtr algebra_from_json(const json& doc) {
  try {
    if (doc.contains("format") && doc.at("format") != kFormat)
      throw FormatError("unsupported format " + doc.at("format").dump());
    auto labels = doc.at("labels").get<std::vector<std::string>>();
    const json& ops = doc.at("ops");
    if (!ops.is_array()) throw FormatError("ops must be an array");

    std::shared_ptr<FiniteAlgebra> alg;
    if (doc.contains("machine")) {
      TuringMachine tm = parse_tm(doc.at("machine").get<std::string>());
      alg = build_aprime(tm, doc.value("omit_K", false));
      check_labels(*alg, labels);
      check_signature(*alg, ops);
    } else if (doc.contains("power")) {
      AlgPtr factor = algebra_from_json(doc.at("power").at("factor"));
      auto vecs = doc.at("power").at("vectors").get<std::vector<std::vector<Elem>>>();
      alg = power_from_vectors(factor, std::move(vecs));
      check_labels(*alg, labels);
      check_signature(*alg, ops);
    } else {
      alg = std::make_shared<FiniteAlgebra>(labels);
      const int m = alg->size();
      for (const json& o : ops) {
        auto name = o.at("name").get<std::string>();
        if (o.contains("rule"))
          throw FormatError("operation " + name + ": rule " + o.at("rule").dump() +
                            " needs a machine or power section");
        if (o.contains("entries")) {
          add_sparse_op(*alg, name, o);
          continue;
        }
        auto table = o.at("table").get<std::vector<Elem>>();
        int arity = o.contains("arity") ? o.at("arity").get<int>() : -1;
        if (arity < 0) {
          arity = 0;
          for (std::size_t n = 1; n < table.size(); n *= m) ++arity;
        }
        if (table.size() != table_size(m, arity))
          throw FormatError("operation " + name + ": table has the wrong length");
        for (Elem e : table)
          if (e < 0 || e >= m) throw FormatError("operation " + name + ": value out of range");
        alg->add_table_op(name, arity, std::move(table));
      }
      alg->materialize();
    }
    if (doc.contains("meta"))
      for (auto& [k, v] : doc.at("meta").items()) alg->meta.emplace(k, v.get<std::string>());
    return alg;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed algebra document: ") + e.what());
  } catch (const ParseError& e) {
    throw FormatError(std::string("machine text: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_algebra(const FiniteAlgebra& alg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << algebra_to_json(alg).dump(1) << "\n";
}

AlgPtr load_algebra(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  return algebra_from_json(doc);
}

}  // namespace dpsc
