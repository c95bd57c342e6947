#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpsc/chains.hpp"
#include "dpsc/tm.hpp"

namespace dpsc {

enum class Status { Pass, Fail, Skip };
std::string to_string(Status s);

struct CheckResult {
  std::string id;
  Status status = Status::Pass;
  std::string detail;
  double seconds = 0;
  nlohmann::json payload;  // counterexample or extra data
  std::vector<std::string> trace;
};

struct SuiteReport {
  std::vector<std::string> header;
  std::vector<CheckResult> checks;
  bool ok() const;
  // Timing is left out unless asked for so that reports are reproducible.
  std::string text(bool timing = false, bool trace = false) const;
  nlohmann::json json(bool timing = false, bool trace = false) const;
};

struct SuiteOptions {
  bool full = false;
  std::uint64_t seed = 0;
  int workers = 1;
  bool trace = false;
  std::function<void(const CheckResult&)> progress;  // called after each check
};

SuiteReport run_suite(const TuringMachine& tm, const SuiteOptions& opt);

// The numbered acceptance criteria.  State shared between criteria (the
// chain corpus, catalogued SIs) is cached in the context.
struct AcceptanceContext;
struct AcceptanceOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  int corpus = 1000;
  std::uint64_t samples5 = 10'000'000;
};
std::shared_ptr<AcceptanceContext> make_acceptance_context(const AcceptanceOptions& opt);
CheckResult acceptance_criterion(AcceptanceContext& ctx, int k);
constexpr int kAcceptanceCriteria = 11;
double acceptance_time_limit(int k);  // seconds

}  // namespace dpsc
