#pragma once

#include <string>

namespace hiertraj::acceptance {

struct Verdict {
  bool pass = false;
  std::string detail;
};

Verdict gradient_integrity();       // 1
Verdict filter_correctness();       // 2
Verdict normalization();            // 3
Verdict equivariance();             // 4
Verdict overfit();                  // 5
Verdict ablations();                // 6
Verdict adaptation();               // 7
Verdict transfer();                 // 8
Verdict insertion_accuracy();       // 9
Verdict baselines();                // 10
Verdict end_to_end(const std::string& cli, const std::string& work_dir);  // 11

}  // namespace hiertraj::acceptance
