// One line per acceptance criterion.  Exit status is nonzero if any fails.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "CLI11.hpp"
#include "dpsc/suite.hpp"

int main(int argc, char** argv) {
  CLI::App app{"dpsc acceptance criteria"};
  dpsc::AcceptanceOptions opt;
  opt.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<int> only;
  app.add_option("--seed", opt.seed, "random seed");
  app.add_option("--workers", opt.workers, "worker threads");
  app.add_option("--corpus", opt.corpus, "chain corpus size");
  app.add_option("--samples", opt.samples5, "uniform samples for the arity-5 check");
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, dpsc::kAcceptanceCriteria));
  CLI11_PARSE(app, argc, argv);

  auto ctx = dpsc::make_acceptance_context(opt);
  int failed = 0;
  for (int k = 1; k <= dpsc::kAcceptanceCriteria; ++k) {
    if (!only.empty() && std::find(only.begin(), only.end(), k) == only.end()) continue;
    auto r = dpsc::acceptance_criterion(*ctx, k);
    const double limit = dpsc::acceptance_time_limit(k);
    bool pass = r.status == dpsc::Status::Pass && r.seconds <= limit;
    if (r.status == dpsc::Status::Pass && !pass) r.detail += "; over the time limit";
    failed += !pass;
    std::printf("criterion %2d %s %.2fs/%.0fs %s\n", k, pass ? "PASS" : "FAIL", r.seconds, limit,
                r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria failed\n", failed, only.empty() ? dpsc::kAcceptanceCriteria
                                                                  : static_cast<int>(only.size()));
  return failed ? EXIT_FAILURE : EXIT_SUCCESS;
}
