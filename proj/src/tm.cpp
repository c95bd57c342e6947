#include "dpsc/tm.hpp"

#include <set>
#include <sstream>

namespace dpsc {

const Instruction* TuringMachine::find(int state, int bit) const {
  for (const auto& ins : instructions)
    if (ins.state == state && ins.read == bit) return &ins;
  return nullptr;
}

void TuringMachine::validate() const {
  if (state_count < 1) throw ParseError(0, "state count must be positive");
  std::set<std::pair<int, int>> seen;
  for (const auto& ins : instructions) {
    if (ins.state < 0 || ins.state >= state_count || ins.next < 0 || ins.next >= state_count)
      throw ParseError(0, "state index out of range");
    if (ins.state == 0) throw ParseError(0, "instruction from halting state");
    if (!seen.insert({ins.state, ins.read}).second)
      throw ParseError(0, "duplicate instruction for state/read pair");
  }
}

static std::string strip_comment(std::string_view line) {
  auto pos = line.find('#');
  std::string s(line.substr(0, pos));
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

TuringMachine parse_tm(std::string_view text) {
  TuringMachine tm;
  bool have_states = false;
  std::set<std::pair<int, int>> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = strip_comment(raw);
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (!have_states) {
      std::string kw;
      int n = 0;
      if (!(ls >> kw >> n) || kw != "states") throw ParseError(lineno, "expected 'states <count>'");
      if (n < 1) throw ParseError(lineno, "state count must be positive");
      std::string rest;
      if (ls >> rest) throw ParseError(lineno, "trailing text after state count");
      tm.state_count = n;
      have_states = true;
      continue;
    }
    Instruction ins;
    std::string d, rest;
    if (!(ls >> ins.state >> ins.read >> ins.write >> d >> ins.next) || (ls >> rest))
      throw ParseError(lineno, "expected '<s> <r> <w> <L|R> <t>'");
    if (d == "L") ins.dir = Dir::L;
    else if (d == "R") ins.dir = Dir::R;
    else throw ParseError(lineno, "direction must be L or R");
    if ((ins.read != 0 && ins.read != 1) || (ins.write != 0 && ins.write != 1))
      throw ParseError(lineno, "tape symbols must be 0 or 1");
    if (ins.state < 0 || ins.state >= tm.state_count || ins.next < 0 || ins.next >= tm.state_count)
      throw ParseError(lineno, "state index out of range");
    if (ins.state == 0) throw ParseError(lineno, "instruction from halting state");
    if (!seen.insert({ins.state, ins.read}).second)
      throw ParseError(lineno, "duplicate instruction for state/read pair");
    tm.instructions.push_back(ins);
  }
  if (!have_states) throw ParseError(lineno, "missing 'states' line");
  return tm;
}

std::string format_tm(const TuringMachine& tm) {
  std::ostringstream out;
  out << "states " << tm.state_count << "\n";
  for (const auto& i : tm.instructions)
    out << i.state << ' ' << i.read << ' ' << i.write << ' ' << (i.dir == Dir::L ? 'L' : 'R') << ' '
        << i.next << "\n";
  return out.str();
}

Interval parse_interval(std::string_view s) {
  auto pos = s.find("..");
  if (pos == std::string_view::npos) throw std::invalid_argument("interval must look like lo..hi");
  Interval iv{std::stol(std::string(s.substr(0, pos))), std::stol(std::string(s.substr(pos + 2)))};
  if (iv.lo > iv.hi) throw std::invalid_argument("empty interval");
  return iv;
}

int Configuration::read(long k) const { return tape.count(k) ? 1 : 0; }

void Configuration::write(long k, int bit) {
  if (bit) tape[k] = 1;
  else tape.erase(k);
}

bool Configuration::supported_in(const Interval& w) const {
  return tape.empty() || (w.contains(tape.begin()->first) && w.contains(tape.rbegin()->first));
}

bool Configuration::operator==(const Configuration& o) const {
  return head == o.head && state == o.state && tape == o.tape;
}

bool Configuration::operator<(const Configuration& o) const {
  if (state != o.state) return state < o.state;
  if (head != o.head) return head < o.head;
  return tape < o.tape;
}

std::string Configuration::str() const {
  std::ostringstream out;
  out << state << '@' << head << ":{";
  bool first = true;
  for (auto& [k, v] : tape) {
    out << (first ? "" : ",") << k;
    first = false;
  }
  out << '}';
  return out.str();
}

Configuration parse_configuration(std::string_view s) {
  auto at = s.find('@');
  auto colon = s.find(':');
  if (at == std::string_view::npos || colon == std::string_view::npos || colon < at)
    throw std::invalid_argument("configuration must look like state@head:bits");
  Configuration q;
  q.state = std::stoi(std::string(s.substr(0, at)));
  q.head = std::stol(std::string(s.substr(at + 1, colon - at - 1)));
  std::string_view bits = s.substr(colon + 1);
  long start = 0;
  if (auto eq = bits.find('='); eq != std::string_view::npos) {
    start = std::stol(std::string(bits.substr(0, eq)));
    bits = bits.substr(eq + 1);
  }
  for (std::size_t k = 0; k < bits.size(); ++k) {
    if (bits[k] == '1') q.write(start + static_cast<long>(k), 1);
    else if (bits[k] != '0') throw std::invalid_argument("tape bits must be 0/1");
  }
  return q;
}

StepResult step(const TuringMachine& tm, const Configuration& q) {
  if (q.state == 0) return {StepStatus::Halted, q};
  const Instruction* ins = tm.find(q.state, q.read(q.head));
  if (!ins) return {StepStatus::Stuck, q};
  Configuration n = q;
  n.write(q.head, ins->write);
  n.head += ins->dir == Dir::L ? -1 : 1;
  n.state = ins->next;
  return {StepStatus::Moved, n};
}

RunResult run(const TuringMachine& tm, const Configuration& q0, long max_steps) {
  if (max_steps < 0) throw std::invalid_argument("max_steps must be non-negative");
  RunResult r;
  r.trace.push_back(q0);
  r.halted = q0.state == 0;
  for (long i = 0; i < max_steps && !r.halted; ++i) {
    auto s = step(tm, r.trace.back());
    if (s.status == StepStatus::Stuck) {
      r.stuck = true;
      break;
    }
    r.trace.push_back(s.next);
    r.halted = s.next.state == 0;
  }
  return r;
}

bool leq_N(const TuringMachine& tm, const Interval& N, const Configuration& P,
           const Configuration& Q, const Interval& window) {
  if (!window.contains(N)) throw std::invalid_argument("window must contain N");
  if (!N.contains(P.head) || !N.contains(Q.head) || !P.supported_in(window) ||
      !Q.supported_in(window))
    return false;
  // deterministic: follow the unique orbit until it leaves, stops or cycles
  std::set<Configuration> seen;
  Configuration cur = Q;
  while (true) {
    if (cur == P) return true;
    if (!seen.insert(cur).second) return false;
    auto s = step(tm, cur);
    if (s.status != StepStatus::Moved) return false;
    if (!N.contains(s.next.head) || !s.next.supported_in(window)) return false;
    cur = std::move(s.next);
  }
}

std::vector<Configuration> enumerate_omega(const TuringMachine& tm, const Interval& N,
                                           const Interval& window, std::size_t cap) {
  if (!window.contains(N)) throw std::invalid_argument("window must contain N");
  long w = window.size();
  if (w > 24) throw std::length_error("window too wide to enumerate");
  std::size_t total = static_cast<std::size_t>(tm.state_count) * N.size() * (std::size_t{1} << w);
  if (total > cap) throw std::length_error("configuration space exceeds cap");
  std::vector<Configuration> out;
  out.reserve(total);
  for (int st = 0; st < tm.state_count; ++st)
    for (long h = N.lo; h <= N.hi; ++h)
      for (unsigned long mask = 0; mask < (1ul << w); ++mask) {
        Configuration q;
        q.state = st;
        q.head = h;
        for (long k = 0; k < w; ++k)
          if (mask >> k & 1) q.write(window.lo + k, 1);
        out.push_back(std::move(q));
      }
  return out;
}

}  // namespace dpsc
