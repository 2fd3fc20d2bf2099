#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vista/checkpoint.hpp"
#include "vista/errors.hpp"
#include "vista/pipeline.hpp"

using namespace vista;

namespace {

struct CommonOpts {
    std::string config;
    std::string out;
    int64_t seed = -1;
    std::string fusion;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "key=value run configuration file");
    cmd->add_option("--out", o.out, "output directory (overrides config)");
    cmd->add_option("--seed", o.seed, "random seed (overrides config)");
    cmd->add_option("--fusion", o.fusion, "interleaved|score_fusion|pseudo_token")
        ->check(CLI::IsMember({"interleaved", "score_fusion", "pseudo_token"}));
}

RunConfig resolve(const CommonOpts& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : parse_run_config(o.config);
    if (!o.out.empty()) cfg.out = o.out;
    if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
    if (!o.fusion.empty()) cfg.fusion = fusion_from_string(o.fusion);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vista: universal multi-modal embedding testbed"};
    app.require_subcommand(1);

    CommonOpts gen_o, train_o, eval_o, abl_o;
    std::string gen_filter_ckpt;
    auto* gen = app.add_subcommand("gen-data", "generate datasets and vocabulary");
    add_common(gen, gen_o);
    gen->add_option("--checkpoint", gen_filter_ckpt,
                    "model used for similarity filtering (optional)");

    int train_stage = 1;
    std::string train_task = "dual";
    std::string train_resume;
    bool train_no_hardneg = false;
    auto* train = app.add_subcommand("train", "run one training stage");
    add_common(train, train_o);
    train->add_option("--stage", train_stage, "1, 2, or finetune stage (3)")
        ->check(CLI::Range(1, 3));
    train->add_option("--task", train_task, "stage-2 task: it2i|t2it|dual");
    train->add_option("--checkpoint", train_resume, "checkpoint to resume / initialize from");
    train->add_flag("--no-hard-negatives", train_no_hardneg,
                    "train stage 2 without hard negatives");

    std::string eval_task = "it2i", eval_split = "test", eval_ckpt;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, eval_o);
    eval->add_option("--task", eval_task, "it2i|t2it");
    eval->add_option("--split", eval_split, "train|dev|test");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required();

    std::vector<uint64_t> abl_seeds;
    bool abl_both_orders = false;
    auto* abl = app.add_subcommand("ablate", "run the training-configuration grid");
    add_common(abl, abl_o);
    abl->add_option("--seeds", abl_seeds, "seeds to sweep (default: config seed)");
    abl->add_flag("--both-orders", abl_both_orders,
                  "also run with the opposite token order");

    std::string insp_ckpt;
    auto* insp = app.add_subcommand("inspect-checkpoint", "print checkpoint metadata");
    insp->add_option("--checkpoint", insp_ckpt, "checkpoint file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            run_gen_data(resolve(gen_o), gen_filter_ckpt, std::cout);
        } else if (train->parsed()) {
            Stage stage = train_stage == 1   ? Stage::Stage1
                          : train_stage == 2 ? Stage::Stage2
                                             : Stage::Finetune;
            run_train(resolve(train_o), stage, stage2_task_from_string(train_task),
                      train_resume, !train_no_hardneg, std::cout);
        } else if (eval->parsed()) {
            run_eval(resolve(eval_o), eval_task, eval_split, eval_ckpt, std::cout);
        } else if (abl->parsed()) {
            RunConfig cfg = resolve(abl_o);
            if (abl_seeds.empty()) abl_seeds.push_back(cfg.seed);
            run_ablate(cfg, abl_seeds, abl_both_orders, std::cout);
        } else if (insp->parsed()) {
            std::cout << checkpoint_metadata(insp_ckpt) << "\n"
                      << "digest: " << checkpoint_digest(insp_ckpt) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
