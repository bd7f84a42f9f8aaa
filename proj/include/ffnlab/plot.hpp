#pragma once

#include <string>
#include <vector>

#include "ffnlab/trainer.hpp"

namespace ffnlab {

struct RunCurve {
  std::string name;
  std::vector<StepLog> steps;
};

// Parses a run.csv produced by the trainer (step,tokens,loss,lr,wall_ms
// header line, one row per logged step).
RunCurve load_run_csv(const std::string& path, const std::string& name);

void write_run_csv(const RunRecord& record, const std::string& path,
                   int log_stride = 1);

// Long-format merge: run,step,tokens,loss,lr,wall_ms.
void write_merged_csv(const std::vector<RunCurve>& curves,
                      const std::string& path);

// Loss-vs-tokens curves with a logarithmic loss axis; one polyline per run,
// legend from run names. The svg carries data-yscale="log" plus tick labels
// so the scale is checkable without rasterizing.
void write_loss_svg(const std::vector<RunCurve>& curves,
                    const std::string& path);

}  // namespace ffnlab
