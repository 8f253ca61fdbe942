// Acceptance harness: runs every verification suite and prints one
// pass/fail line per criterion. Exits nonzero if any non-skipped suite
// fails.

#include <cstdio>
#include <thread>

#include "lgmjoint/verify.hpp"

int main() {
  using namespace lgmjoint;
  int threads = static_cast<int>(std::max(2u, std::thread::hardware_concurrency()));
  bool all_pass = true;
  for (const auto& name : verify::suite_names()) {
    verify::SuiteResult res;
    try {
      res = verify::run_suite(name, threads);
    } catch (const std::exception& e) {
      res.name = name;
      res.pass = false;
      res.details = std::string("exception: ") + e.what();
    }
    const char* mark = res.skipped ? "SKIP" : (res.pass ? "PASS" : "FAIL");
    std::printf("[%s] %-24s (%.1fs) %s\n", mark, res.name.c_str(), res.seconds,
                res.details.c_str());
    std::fflush(stdout);
    if (!res.pass && !res.skipped) all_pass = false;
  }
  return all_pass ? 0 : 1;
}
