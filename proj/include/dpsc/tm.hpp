#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dpsc {

enum class Dir { L, R };

struct Instruction {
  int state = 0;
  int read = 0;
  int write = 0;
  Dir dir = Dir::R;
  int next = 0;
  bool operator==(const Instruction&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct TuringMachine {
  int state_count = 1;  // states 0..state_count-1, state 0 halts, state 1 starts
  std::vector<Instruction> instructions;

  const Instruction* find(int state, int bit) const;
  void validate() const;  // throws ParseError(0, ...) on violations
};

TuringMachine parse_tm(std::string_view text);
std::string format_tm(const TuringMachine& tm);

struct Interval {
  long lo = 0;
  long hi = 0;
  bool contains(long k) const { return lo <= k && k <= hi; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
  long size() const { return hi - lo + 1; }
  bool operator==(const Interval&) const = default;
};

Interval parse_interval(std::string_view s);  // "a..b"

struct Configuration {
  std::map<long, int> tape;  // only cells holding 1
  long head = 0;
  int state = 1;

  int read(long k) const;
  void write(long k, int bit);
  bool supported_in(const Interval& w) const;
  bool operator==(const Configuration& o) const;
  bool operator<(const Configuration& o) const;
  std::string str() const;  // state@head:{cells}
};

// "state@head:bits" where bits is a 0/1 string starting at cell 0, or
// "state@head:start=bits" to anchor elsewhere.  Empty bits = blank tape.
Configuration parse_configuration(std::string_view s);

enum class StepStatus { Moved, Halted, Stuck };

struct StepResult {
  StepStatus status;
  Configuration next;  // equals the input unless status == Moved
};

StepResult step(const TuringMachine& tm, const Configuration& q);

struct RunResult {
  std::vector<Configuration> trace;
  bool halted = false;
  bool stuck = false;
};

RunResult run(const TuringMachine& tm, const Configuration& q0, long max_steps);

// P <=_N Q: P is reached from Q by steps that keep every head in N and
// every tape inside window.
bool leq_N(const TuringMachine& tm, const Interval& N, const Configuration& P,
           const Configuration& Q, const Interval& window);

// All configurations with head in N, tape supported in window, any state.
std::vector<Configuration> enumerate_omega(const TuringMachine& tm, const Interval& N,
                                           const Interval& window, std::size_t cap = 1u << 22);

}  // namespace dpsc
