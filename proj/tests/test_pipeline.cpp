#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vista/checkpoint.hpp"
#include "vista/pipeline.hpp"

using namespace vista;
namespace fs = std::filesystem;

namespace {

RunConfig small_config(const std::string& out, uint64_t seed) {
    RunConfig cfg;
    cfg.model.d_model = 16;
    cfg.model.n_text_layers = 1;
    cfg.model.n_vit_layers = 1;
    cfg.model.n_heads = 2;
    cfg.model.max_seq_len = 48;
    cfg.model.max_text_len = 24;
    cfg.model.vocab_size = 256;
    cfg.model.image_size = 16;
    cfg.model.patch_size = 8;
    cfg.data_groups = 30;
    cfg.data_docs = 30;
    cfg.train.total_steps = 6;
    cfg.train.batch_size = 4;
    cfg.train.lr_init = 1e-3;
    cfg.checkpoint_every = 3;
    cfg.seed = seed;
    cfg.out = out;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("gen-data writes complete, reproducible manifests") {
    TempDir a("vista_gen_a"), b("vista_gen_b");
    std::ostringstream log;
    auto ca = run_gen_data(small_config(a.path.string(), 3), "", log);
    run_gen_data(small_config(b.path.string(), 3), "", log);

    const char* files[] = {"pairs_train.jsonl",        "vocab.txt",
                           "it2i_queries_train.jsonl", "it2i_corpus_train.jsonl",
                           "it2i_qrels_train.txt",     "it2i_queries_dev.jsonl",
                           "t2it_queries_train.jsonl", "t2it_corpus_train.jsonl",
                           "t2it_qrels_train.txt",     "t2it_queries_test.jsonl"};
    for (const char* f : files) {
        CAPTURE(f);
        REQUIRE(fs::exists(a.path / f));
        CHECK(slurp((a.path / f).string()) == slurp((b.path / f).string()));
    }
    // run_config.txt embeds the output directory, so only check presence
    REQUIRE(fs::exists(a.path / "run_config.txt"));
    CHECK(ca.per_file.at("it2i_queries_train.jsonl") > 0);
    CHECK(ca.per_file.at("pairs_train.jsonl") > 0);

    // train/dev/test qrels all point at existing records
    for (const char* task : {"it2i", "t2it"})
        for (const char* split : {"train", "dev", "test"}) {
            auto queries = read_manifest(
                (a.path / (std::string(task) + "_queries_" + split + ".jsonl")).string());
            auto qrels =
                read_qrels((a.path / (std::string(task) + "_qrels_" + split + ".txt")).string());
            CHECK(qrels.size() == queries.size());
        }
}

TEST_CASE("similarity filtering reports a rejection rate and keeps pairs consistent") {
    TempDir dir("vista_gen_filter");
    RunConfig cfg = small_config(dir.path.string(), 5);
    std::ostringstream log;
    run_gen_data(cfg, "", log);
    // quick stage-1 checkpoint to drive the filter
    cfg.train.total_steps = 4;
    auto t = run_train(cfg, Stage::Stage1, Stage2Task::It2i, "", true, log);

    RunConfig filtered = cfg;
    filtered.out = (dir.path / "filtered").string();
    filtered.data_filter_drop = 0.2;
    auto counts = run_gen_data(filtered, t.checkpoint_path, log);
    CHECK(counts.filtered);
    CHECK(counts.filter.rejection_rate >= 0.2);
    CHECK(counts.filter.rejection_rate < 1.0);
    CHECK(log.str().find("rejected") != std::string::npos);
}

TEST_CASE("training logs the documented line format and saves checkpoints") {
    TempDir dir("vista_train_log");
    RunConfig cfg = small_config(dir.path.string(), 7);
    std::ostringstream log;
    run_gen_data(cfg, "", log);
    auto outcome = run_train(cfg, Stage::Stage1, Stage2Task::It2i, "", true, log);
    CHECK(outcome.steps == 6);
    CHECK(fs::exists(outcome.checkpoint_path));
    CHECK(fs::exists(dir.path / "stage1_step000003.bin"));

    std::string tlog = slurp((dir.path / "train_stage1.log").string());
    CHECK(tlog.find("step 0 cross_modal lr ") != std::string::npos);
    CHECK(tlog.find(" loss ") != std::string::npos);
    int lines = 0;
    for (char c : tlog) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 6);
}

TEST_CASE("interrupted training resumes to a byte-identical final checkpoint") {
    TempDir one("vista_resume_one"), two("vista_resume_two");
    std::ostringstream log;

    RunConfig ca = small_config(one.path.string(), 11);
    run_gen_data(ca, "", log);
    auto full = run_train(ca, Stage::Stage1, Stage2Task::It2i, "", true, log);

    RunConfig cb = small_config(two.path.string(), 11);
    run_gen_data(cb, "", log);
    run_train(cb, Stage::Stage1, Stage2Task::It2i, "", true, log);
    // restart from the mid-run checkpoint written at step 3
    auto resumed = run_train(cb, Stage::Stage1, Stage2Task::It2i,
                             (two.path / "stage1_step000003.bin").string(), true, log);

    CHECK(checkpoint_digest(full.checkpoint_path) == checkpoint_digest(resumed.checkpoint_path));
}

TEST_CASE("stage-2 training runs for all tasks and eval produces a report") {
    TempDir dir("vista_stage2");
    RunConfig cfg = small_config(dir.path.string(), 13);
    std::ostringstream log;
    run_gen_data(cfg, "", log);
    auto s1 = run_train(cfg, Stage::Stage1, Stage2Task::It2i, "", true, log);
    auto s2 = run_train(cfg, Stage::Stage2, Stage2Task::Dual, s1.checkpoint_path, true, log);
    CHECK(fs::exists(s2.checkpoint_path));
    CHECK(log.str().find(" it2i lr ") != std::string::npos);
    CHECK(log.str().find(" t2it lr ") != std::string::npos);

    EvalReport r = run_eval(cfg, "it2i", "dev", s2.checkpoint_path, log);
    CHECK(r.query_count > 0);
    CHECK(r.corpus_size > 0);
    CHECK(!r.checkpoint_id.empty());
    for (int k : {1, 5, 10, 20}) {
        CHECK(r.recall_at.at(k) >= 0.0);
        CHECK(r.recall_at.at(k) <= 1.0);
    }
    CHECK(fs::exists(dir.path / "report_it2i_dev.json"));

    // the text encoder stays frozen through stages 1 and 2
    auto fresh = Model<float>([&] {
        ModelConfig mc = cfg.model;
        mc.seed = cfg.seed;
        return mc;
    }());
    auto trained = load_checkpoint(s2.checkpoint_path);
    TokenSequence probe;
    probe.ids = {1, 2, 3};
    auto before = fresh.encode_text(probe);
    auto after = trained.model->encode_text(probe);
    for (size_t i = 0; i < before.emb.size(); ++i)
        CHECK(std::abs(static_cast<double>(before.emb.data[i]) - after.emb.data[i]) < 1e-12);
}

TEST_CASE("fine-tuning updates the text encoder") {
    TempDir dir("vista_finetune");
    RunConfig cfg = small_config(dir.path.string(), 17);
    std::ostringstream log;
    run_gen_data(cfg, "", log);
    auto s1 = run_train(cfg, Stage::Stage1, Stage2Task::It2i, "", true, log);
    auto ft = run_train(cfg, Stage::Finetune, Stage2Task::It2i, s1.checkpoint_path, true, log);

    auto base = load_checkpoint(s1.checkpoint_path);
    auto tuned = load_checkpoint(ft.checkpoint_path);
    TokenSequence probe;
    probe.ids = {1, 2, 3};
    auto a = base.model->encode_text(probe);
    auto b = tuned.model->encode_text(probe);
    CHECK(a.emb.data != b.emb.data);
}

TEST_CASE("eval supports the fusion baselines end to end") {
    TempDir dir("vista_fusion_eval");
    RunConfig cfg = small_config(dir.path.string(), 19);
    std::ostringstream log;
    run_gen_data(cfg, "", log);
    auto s1 = run_train(cfg, Stage::Stage1, Stage2Task::It2i, "", true, log);

    for (FusionMethod f :
         {FusionMethod::Interleaved, FusionMethod::ScoreFusion, FusionMethod::PseudoToken}) {
        RunConfig ec = cfg;
        ec.fusion = f;
        EvalReport r = run_eval(ec, "it2i", "dev", s1.checkpoint_path, log);
        CAPTURE(to_string(f));
        CHECK(r.recall_at.at(5) >= 0.0);
        CHECK(r.recall_at.at(5) <= 1.0);
        CHECK(r.fusion == to_string(f));
    }
}
