// Acceptance checks. One PASS/FAIL line per criterion.
//   acceptance fast      criteria 1-4, 7-10
//   acceptance transfer  criteria 5 and 6 (long: four 20k-iteration trainings)
//   acceptance all
// Environment overrides for the transfer run (defaults are the acceptance
// protocol): MATXFER_ACC_RES, MATXFER_ACC_SPP, MATXFER_ACC_ITERS,
// MATXFER_ACC_DIR (work directory), MATXFER_ACC_REUSE=1 (reuse checkpoints).

#include "acceptance_checks.hpp"

#include <cstring>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "fast";
    if (mode != "fast" && mode != "transfer" && mode != "all") {
        std::cerr << "usage: acceptance [fast|transfer|all]\n";
        return 2;
    }
    acc::Report report;
    try {
        if (mode == "fast" || mode == "all") acc::run_fast(report);
        if (mode == "transfer" || mode == "all") acc::run_transfer(report);
    } catch (const std::exception& e) {
        std::cout << "FAIL aborted: " << e.what() << "\n";
        return 1;
    }
    return report.failures == 0 ? 0 : 1;
}
