#pragma once

#include <string>

#include "json.hpp"

#include "dpsc/algebra.hpp"

namespace dpsc {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// {"format":"dpsc-algebra/1","labels":[...],"ops":[...]}.  A'(T) operations
// are written as "builtin:aprime:<op>" next to the machine text, power
// algebras as "builtin:power:<op>" next to their factor and vectors, and
// everything else as index-major tables.
nlohmann::json algebra_to_json(const FiniteAlgebra& alg);
AlgPtr algebra_from_json(const nlohmann::json& doc);

void save_algebra(const FiniteAlgebra& alg, const std::string& path);
AlgPtr load_algebra(const std::string& path);

std::string read_file(const std::string& path);  // throws FormatError

}  // namespace dpsc
