#include "nlb/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace nlb {

namespace {

void write_header(std::ofstream& out, const ReportHeader& header) {
  for (const auto& [k, v] : header) out << "# " << k << "=" << v << "\n";
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::string& path, const EvalReport& report,
                      const ReportHeader& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_header(out, header);
  out << "auc,ap,mrr,f1,positives,train_epoch_s,test_s,inference_latency_s\n";
  out << fmt(report.auc) << ',' << fmt(report.ap) << ',' << fmt(report.mrr)
      << ',' << fmt(report.f1) << ',' << report.positives << ','
      << fmt(report.train_epoch_seconds) << ',' << fmt(report.test_seconds)
      << ',' << fmt(report.inference_latency_seconds) << "\n";
}

void write_sweep_csv(const std::string& path, const std::string& axis_name,
                     const std::vector<std::pair<double, EvalReport>>& rows,
                     const ReportHeader& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_header(out, header);
  out << axis_name
      << ",auc,ap,mrr,positives,train_epoch_s,test_s,inference_latency_s\n";
  for (const auto& [value, r] : rows) {
    out << fmt(value) << ',' << fmt(r.auc) << ',' << fmt(r.ap) << ','
        << fmt(r.mrr) << ',' << r.positives << ','
        << fmt(r.train_epoch_seconds) << ',' << fmt(r.test_seconds) << ','
        << fmt(r.inference_latency_seconds) << "\n";
  }
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream out;
  out << "  metric              value\n"
      << "  ------------------  ----------\n"
      << "  auc                 " << fmt(report.auc) << "\n"
      << "  ap                  " << fmt(report.ap) << "\n"
      << "  mrr                 " << fmt(report.mrr) << "\n"
      << "  f1                  " << fmt(report.f1) << "\n"
      << "  positives           " << report.positives << "\n"
      << "  train epoch (s)     " << fmt(report.train_epoch_seconds) << "\n"
      << "  test (s)            " << fmt(report.test_seconds) << "\n"
      << "  inference lat. (s)  " << fmt(report.inference_latency_seconds)
      << "\n";
  return out.str();
}

}  // namespace nlb
