#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "vista/dataforge.hpp"
#include "vista/retrieval.hpp"
#include "vista/runconfig.hpp"
#include "vista/train.hpp"

namespace vista {

// High-level run drivers shared by the CLI and the test suites. Every
// driver works inside cfg.out: gen-data writes manifests there, train
// reads them and writes checkpoints there, eval/ablate write reports.

struct DataCounts {
    std::map<std::string, int> per_file;  // manifest file -> record count
    bool filtered = false;
    FilterReport filter;
};

// Generate the two task datasets plus stage-1 pairs and the vocabulary.
// If filter_checkpoint is non-empty, instructed-edit records whose
// caption/image cosine falls in the lowest cfg.data_filter_drop fraction
// are rejected (rejection rate is logged).
DataCounts run_gen_data(const RunConfig& cfg, const std::string& filter_checkpoint,
                        std::ostream& log);

enum class Stage2Task { It2i, T2it, Dual };
const char* to_string(Stage2Task t);
Stage2Task stage2_task_from_string(const std::string& s);

struct TrainOutcome {
    std::string checkpoint_path;  // final checkpoint of the stage
    int steps = 0;
    double final_loss = 0.0;
};

// Run one full training stage. `resume` may name a checkpoint: a
// mid-stage checkpoint (optimizer present, 0 < step < total_steps)
// continues bit-exactly from that step; any other checkpoint only seeds
// the initial weights. Training logs go to `log` and to a per-stage log
// file in cfg.out.
TrainOutcome run_train(const RunConfig& cfg, Stage stage, Stage2Task task,
                       const std::string& resume, bool use_hard_negatives,
                       std::ostream& log);

// Evaluate a checkpoint on one task ("it2i" | "t2it") and split; writes
// report_<task>_<split>.json into cfg.out.
EvalReport run_eval(const RunConfig& cfg, const std::string& task, const std::string& split,
                    const std::string& checkpoint, std::ostream& log);

struct AblateRow {
    std::string variant;
    uint64_t seed = 0;
    std::string token_order;
    double it2i_r5 = 0.0;
    double t2it_r5 = 0.0;
    double avg = 0.0;
    bool ok = false;
    std::string error;
};

struct AblateResult {
    std::vector<AblateRow> rows;
    std::string table;  // rendered text table, also written to ablation.txt
};

// Training-configuration grid: stage1-only, it2i (with and without hard
// negatives), t2it, dual, plus a score-fusion read-out of the dual
// checkpoint. One sub-directory per seed under cfg.out. A failed leg is
// recorded in its row; completed legs are preserved.
AblateResult run_ablate(const RunConfig& cfg, const std::vector<uint64_t>& seeds,
                        bool both_orders, std::ostream& log);

}  // namespace vista
