#pragma once

#include <string>
#include <vector>

#include "nlb/train_eval.hpp"

namespace nlb {

// Key=value lines written as `# key=value` above the CSV body, so every
// report carries its seed, config and dataset hash.
using ReportHeader = std::vector<std::pair<std::string, std::string>>;

void write_report_csv(const std::string& path, const EvalReport& report,
                      const ReportHeader& header);

void write_sweep_csv(const std::string& path, const std::string& axis_name,
                     const std::vector<std::pair<double, EvalReport>>& rows,
                     const ReportHeader& header);

std::string format_report_table(const EvalReport& report);

}  // namespace nlb
