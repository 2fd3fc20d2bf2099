#include "vista/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "vista/checkpoint.hpp"
#include "vista/errors.hpp"
#include "vista/scene.hpp"
#include "vista/tokenizer.hpp"

namespace fs = std::filesystem;

namespace vista {

const char* to_string(Stage2Task t) {
    switch (t) {
        case Stage2Task::It2i: return "it2i";
        case Stage2Task::T2it: return "t2it";
        case Stage2Task::Dual: return "dual";
    }
    return "?";
}

Stage2Task stage2_task_from_string(const std::string& s) {
    if (s == "it2i") return Stage2Task::It2i;
    if (s == "t2it") return Stage2Task::T2it;
    if (s == "dual") return Stage2Task::Dual;
    throw ConfigError("unknown stage-2 task '" + s + "' (expected it2i|t2it|dual)");
}

namespace {

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_out_dir(const RunConfig& cfg) {
    fs::create_directories(cfg.out);
    std::ofstream os(join(cfg.out, "run_config.txt"));
    if (!os) throw IoError("cannot write " + join(cfg.out, "run_config.txt"));
    os << render_run_config(cfg);
}

// Deterministic per-group split assignment, independent of record order.
std::string split_of(uint64_t seed, const std::string& group) {
    double r = Rng(seed, "split." + group).next_double();
    if (r < 0.90) return "train";
    if (r < 0.95) return "dev";
    return "test";
}

ManifestRecord make_record(std::string id, std::string kind, std::string text,
                           std::string image, std::string group, std::string split) {
    ManifestRecord r;
    r.id = std::move(id);
    r.kind = std::move(kind);
    r.text = std::move(text);
    r.image = std::move(image);
    r.group_id = std::move(group);
    r.split = std::move(split);
    return r;
}

void write_counted(std::vector<ManifestRecord> records, const std::string& path,
                   DataCounts& counts) {
    write_manifest(records, path);
    counts.per_file[fs::path(path).filename().string()] = static_cast<int>(records.size());
}

struct LoadedCheckpoint {
    CheckpointData data;
    std::string digest;
};

LoadedCheckpoint load_ckpt(const std::string& path) {
    LoadedCheckpoint lc{load_checkpoint(path), checkpoint_digest(path)};
    return lc;
}

// ---- stage-2 batch assembly -------------------------------------------

struct It2iTrainData {
    // group -> indices into `queries`; query i pairs with `targets[i]`.
    std::vector<ManifestRecord> queries;
    std::vector<ManifestRecord> targets;
    std::vector<std::string> group_ids;              // sorted unique
    std::map<std::string, std::vector<int>> groups;  // group -> query indices
};

It2iTrainData load_it2i_train(const std::string& dir) {
    It2iTrainData d;
    d.queries = read_manifest(join(dir, "it2i_queries_train.jsonl"));
    auto corpus = read_manifest(join(dir, "it2i_corpus_train.jsonl"));
    Qrels qrels = read_qrels(join(dir, "it2i_qrels_train.txt"));
    std::map<std::string, const ManifestRecord*> by_id;
    for (const auto& r : corpus) by_id[r.id] = &r;
    d.targets.reserve(d.queries.size());
    for (size_t i = 0; i < d.queries.size(); ++i) {
        const auto& q = d.queries[i];
        auto qit = qrels.find(q.id);
        if (qit == qrels.end() || qit->second.empty())
            throw InputError("it2i train data: no relevant target for query " + q.id);
        auto tit = by_id.find(*qit->second.begin());
        if (tit == by_id.end())
            throw InputError("it2i train data: target missing from corpus for " + q.id);
        d.targets.push_back(*tit->second);
        d.groups[q.group_id].push_back(static_cast<int>(i));
    }
    for (const auto& [g, idx] : d.groups) d.group_ids.push_back(g);
    if (d.group_ids.empty()) throw InputError("it2i train data: empty");
    return d;
}

struct T2itTrainData {
    std::vector<ManifestRecord> queries;
    std::vector<ManifestRecord> docs;  // aligned with queries
};

T2itTrainData load_t2it_train(const std::string& dir) {
    T2itTrainData d;
    d.queries = read_manifest(join(dir, "t2it_queries_train.jsonl"));
    auto corpus = read_manifest(join(dir, "t2it_corpus_train.jsonl"));
    Qrels qrels = read_qrels(join(dir, "t2it_qrels_train.txt"));
    std::map<std::string, const ManifestRecord*> by_id;
    for (const auto& r : corpus) by_id[r.id] = &r;
    for (const auto& q : d.queries) {
        auto qit = qrels.find(q.id);
        if (qit == qrels.end() || qit->second.empty())
            throw InputError("t2it train data: no relevant doc for query " + q.id);
        auto dit = by_id.find(*qit->second.begin());
        if (dit == by_id.end())
            throw InputError("t2it train data: doc missing from corpus for " + q.id);
        d.docs.push_back(*dit->second);
    }
    if (d.queries.empty()) throw InputError("t2it train data: empty");
    return d;
}

TrainItem to_item(const ManifestRecord& r, const Vocab& vocab, const ModelConfig& mc) {
    TrainItem it;
    it.id = r.id;
    if (r.kind == "text") {
        it.kind = TrainItem::Kind::Text;
        it.tokens = tokenize_text(r.text, vocab, mc.max_text_len);
    } else if (r.kind == "image") {
        it.kind = TrainItem::Kind::Image;
        it.image = render(SceneSpec::parse(r.image), mc.image_size, mc.channels);
    } else if (r.kind == "image_text") {
        it.kind = TrainItem::Kind::ImageText;
        it.tokens = tokenize_text(r.text, vocab, mc.max_text_len);
        it.image = render(SceneSpec::parse(r.image), mc.image_size, mc.channels);
    } else {
        throw InputError("train item " + r.id + ": unknown kind '" + r.kind + "'");
    }
    return it;
}

TrainingBatch make_it2i_batch(const It2iTrainData& d, const Vocab& vocab,
                              const ModelConfig& mc, const TrainConfig& tc, int step,
                              bool use_hard_negatives) {
    Rng rng(tc.seed, "batch.it2i", static_cast<uint64_t>(step));
    const int n_groups = static_cast<int>(d.group_ids.size());
    const int b = std::min(tc.batch_size, n_groups);
    TrainingBatch batch;
    batch.task_tag = TaskTag::It2i;
    for (int gi : rng.sample_without_replacement(n_groups, b)) {
        const auto& members = d.groups.at(d.group_ids[static_cast<size_t>(gi)]);
        const int pick = static_cast<int>(rng.next_below(members.size()));
        const int qi = members[static_cast<size_t>(pick)];
        batch.queries.push_back(to_item(d.queries[static_cast<size_t>(qi)], vocab, mc));
        batch.candidates.push_back(to_item(d.targets[static_cast<size_t>(qi)], vocab, mc));
        std::vector<TrainItem> negs;
        if (use_hard_negatives && tc.hard_negatives_per_query > 0) {
            std::vector<int> others;
            for (int m : members)
                if (m != qi) others.push_back(m);
            rng.shuffle(others);
            const int take =
                std::min<int>(tc.hard_negatives_per_query, static_cast<int>(others.size()));
            for (int t = 0; t < take; ++t)
                negs.push_back(to_item(d.targets[static_cast<size_t>(others[static_cast<size_t>(t)])],
                                       vocab, mc));
        }
        batch.hard_negative_groups.push_back(std::move(negs));
    }
    return batch;
}

TrainingBatch make_t2it_batch(const T2itTrainData& d, const Vocab& vocab,
                              const ModelConfig& mc, const TrainConfig& tc, int step,
                              bool use_hard_negatives) {
    Rng rng(tc.seed, "batch.t2it", static_cast<uint64_t>(step));
    const int n = static_cast<int>(d.queries.size());
    const int b = std::min(tc.batch_size, n);
    TrainingBatch batch;
    batch.task_tag = TaskTag::T2it;
    std::vector<int> chosen = rng.sample_without_replacement(n, b);
    for (int qi : chosen) {
        batch.queries.push_back(to_item(d.queries[static_cast<size_t>(qi)], vocab, mc));
        batch.candidates.push_back(to_item(d.docs[static_cast<size_t>(qi)], vocab, mc));
        std::vector<TrainItem> negs;
        if (use_hard_negatives && tc.hard_negatives_per_query > 0 && n > 1) {
            const int want = std::min(tc.hard_negatives_per_query, n - 1);
            std::vector<int> seen{qi};
            while (static_cast<int>(negs.size()) < want) {
                int c = static_cast<int>(rng.next_below(n));
                if (std::find(seen.begin(), seen.end(), c) != seen.end()) continue;
                seen.push_back(c);
                negs.push_back(to_item(d.docs[static_cast<size_t>(c)], vocab, mc));
            }
        }
        batch.hard_negative_groups.push_back(std::move(negs));
    }
    return batch;
}

// ---- eval manifest loading ----------------------------------------------

TaskSpec load_task(const std::string& dir, const std::string& task, const std::string& split) {
    if (task != "it2i" && task != "t2it")
        throw ConfigError("unknown eval task '" + task + "' (expected it2i|t2it)");
    if (split != "train" && split != "dev" && split != "test")
        throw ConfigError("unknown split '" + split + "' (expected train|dev|test)");
    TaskSpec spec;
    spec.name = task + "_" + split;
    spec.queries = read_manifest(join(dir, task + "_queries_" + split + ".jsonl"));
    spec.corpus = read_manifest(join(dir, task + "_corpus_" + split + ".jsonl"));
    spec.qrels = read_qrels(join(dir, task + "_qrels_" + split + ".txt"));
    spec.validate();
    return spec;
}

std::vector<ImageGrid> load_pair_images(const std::string& dir, const ModelConfig& mc) {
    std::vector<ImageGrid> images;
    for_each_manifest_record(join(dir, "pairs_train.jsonl"), [&](const ManifestRecord& r) {
        images.push_back(render(SceneSpec::parse(r.image), mc.image_size, mc.channels));
    });
    return images;
}

PseudoTokenMap<float> fit_pseudo_map(const RunConfig& cfg, const Model<float>& model,
                                     const Vocab& vocab) {
    TrainConfig tc = cfg.train;
    tc.stage = Stage::Stage1;
    tc.total_steps = std::max(50, std::min(tc.total_steps, 200));
    tc.seed = cfg.seed;
    auto images = load_pair_images(cfg.out, model.cfg);
    if (images.empty()) throw InputError("pseudo-token map: pairs_train.jsonl is empty");
    return train_pseudo_token_map(model, vocab, images, tc).map;
}

std::string fmt9(double v) {
    std::ostringstream os;
    os << std::setprecision(9) << v;
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------------
// gen-data

DataCounts run_gen_data(const RunConfig& cfg, const std::string& filter_checkpoint,
                        std::ostream& log) {
    cfg.validate();
    ensure_out_dir(cfg);
    DataCounts counts;

    const int bg = Palette::index_of(cfg.data_background);
    auto it2i = make_it2i_groups(cfg.data_groups, cfg.data_edits_per_group, cfg.seed, bg,
                                 cfg.data_max_objects);

    if (!filter_checkpoint.empty()) {
        auto lc = load_ckpt(filter_checkpoint);
        const Model<float>& m = *lc.data.model;
        const Vocab& v = lc.data.vocab;
        auto score = [&](const It2iRecord& r) {
            auto et = m.encode_text(tokenize_text(r.target_caption, v, m.cfg.max_text_len));
            auto ei = m.encode_image(render(r.target, m.cfg.image_size, m.cfg.channels));
            return kernels::dot(et.emb.ptr(), ei.emb.ptr(), m.cfg.d_model);
        };
        std::vector<double> scores(it2i.size());
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
        for (size_t i = 0; i < it2i.size(); ++i) scores[i] = score(it2i[i]);
        const double thr = threshold_for_drop_fraction(scores, cfg.data_filter_drop);
        std::map<std::string, double> score_by_id;
        for (size_t i = 0; i < it2i.size(); ++i) score_by_id[it2i[i].id] = scores[i];
        it2i = similarity_filter(
            it2i, [&](const It2iRecord& r) { return score_by_id.at(r.id); }, thr,
            &counts.filter);
        counts.filtered = true;
        log << "similarity filter: threshold " << fmt9(thr) << ", rejected "
            << (counts.filter.input_count - counts.filter.kept_count) << "/"
            << counts.filter.input_count << " (rate " << fmt9(counts.filter.rejection_rate)
            << ")\n";
    }

    auto t2it = generate_t2it(cfg.data_docs, cfg.seed, bg, cfg.data_max_objects);

    // --- splits, keyed by group so edits of one scene never straddle them
    std::map<std::string, std::vector<ManifestRecord>> it2i_q, it2i_c;
    std::map<std::string, Qrels> it2i_r, t2it_r;
    std::map<std::string, std::vector<ManifestRecord>> t2it_q, t2it_c;
    std::vector<ManifestRecord> pairs;
    std::vector<std::string> vocab_corpus;

    std::string last_group;
    for (const auto& r : it2i) {
        const std::string split = split_of(cfg.seed, r.group_id);
        it2i_q[split].push_back(make_record(r.id, "image_text", r.instruction,
                                            r.source.serialize(), r.group_id, split));
        it2i_c[split].push_back(make_record(r.id + "_t", "image", "", r.target.serialize(),
                                            r.group_id, split));
        it2i_r[split][r.id].insert(r.id + "_t");
        if (split == "train") {
            pairs.push_back(make_record(r.id + "_pair", "image_text", r.target_caption,
                                        r.target.serialize(), r.group_id, split));
            if (r.group_id != last_group) {
                pairs.push_back(make_record(r.group_id + "_src_pair", "image_text",
                                            r.source_caption, r.source.serialize(), r.group_id,
                                            split));
                last_group = r.group_id;
            }
            vocab_corpus.push_back(r.instruction);
            vocab_corpus.push_back(r.target_caption);
            vocab_corpus.push_back(r.source_caption);
        }
    }
    for (const auto& r : t2it) {
        const std::string split = split_of(cfg.seed, r.id);
        t2it_q[split].push_back(make_record(r.id, "text", r.query, "", r.id, split));
        t2it_c[split].push_back(make_record(r.id + "_d", "image_text", r.doc_text,
                                            r.doc_image.serialize(), r.id, split));
        t2it_r[split][r.id].insert(r.id + "_d");
        if (split == "train") {
            pairs.push_back(make_record(r.id + "_pair", "image_text", caption(r.doc_image),
                                        r.doc_image.serialize(), r.id, split));
            vocab_corpus.push_back(r.query);
            vocab_corpus.push_back(r.doc_text);
            vocab_corpus.push_back(caption(r.doc_image));
        }
    }

    // --- vocabulary: trained on the train split only; scene and prompt
    // words are reserved so captions of unseen scenes stay in-vocabulary.
    std::vector<std::string> reserved = {"a", "photo", "of"};
    for (const char* n : Palette::names()) reserved.push_back(n);
    for (ShapeKind s : {ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle})
        reserved.push_back(shape_name(s));
    for (const char* w : {"top", "bottom", "upper", "lower", "left", "right", "mid"})
        reserved.push_back(w);
    Vocab vocab = Vocab::build(vocab_corpus, cfg.model.vocab_size, reserved);
    vocab.save(join(cfg.out, "vocab.txt"));
    counts.per_file["vocab.txt"] = vocab.size();

    write_counted(pairs, join(cfg.out, "pairs_train.jsonl"), counts);
    for (const char* split : {"train", "dev", "test"}) {
        write_counted(it2i_q[split], join(cfg.out, std::string("it2i_queries_") + split + ".jsonl"),
                      counts);
        write_counted(it2i_c[split], join(cfg.out, std::string("it2i_corpus_") + split + ".jsonl"),
                      counts);
        write_qrels(it2i_r[split], join(cfg.out, std::string("it2i_qrels_") + split + ".txt"));
        write_counted(t2it_q[split], join(cfg.out, std::string("t2it_queries_") + split + ".jsonl"),
                      counts);
        write_counted(t2it_c[split], join(cfg.out, std::string("t2it_corpus_") + split + ".jsonl"),
                      counts);
        write_qrels(t2it_r[split], join(cfg.out, std::string("t2it_qrels_") + split + ".txt"));
    }
    for (const auto& [file, n] : counts.per_file) log << file << ": " << n << " records\n";
    return counts;
}

// ---------------------------------------------------------------------
// train

TrainOutcome run_train(const RunConfig& cfg, Stage stage, Stage2Task task,
                       const std::string& resume, bool use_hard_negatives,
                       std::ostream& log) {
    cfg.validate();
    ensure_out_dir(cfg);

    TrainConfig tc = cfg.train;
    tc.stage = stage;
    tc.seed = cfg.seed;
    tc.validate();

    const std::string tag =
        stage == Stage::Stage1
            ? "stage1"
            : (stage == Stage::Stage2 ? std::string("stage2_") + to_string(task)
                                      : std::string("finetune_") + to_string(task));

    Vocab vocab = Vocab::load(join(cfg.out, "vocab.txt"));

    std::unique_ptr<Model<float>> model;
    AdamW<float> opt;
    int start_step = 0;
    if (!resume.empty()) {
        auto ck = load_checkpoint(resume);
        model = std::move(ck.model);
        vocab = std::move(ck.vocab);
        if (ck.has_optimizer && ck.step > 0 && ck.step < tc.total_steps) {
            opt = std::move(ck.optimizer);
            start_step = ck.step;
            log << "resuming " << tag << " at step " << start_step << "\n";
        } else {
            log << "initializing " << tag << " from checkpoint weights (step " << ck.step
                << ")\n";
        }
    } else {
        ModelConfig mc = cfg.model;
        mc.seed = cfg.seed;
        if (vocab.size() > mc.vocab_size)
            throw ConfigError("train: vocabulary larger than model.vocab_size");
        model = std::make_unique<Model<float>>(mc);
    }
    const ModelConfig& mc = model->cfg;

    // Data for the requested stage.
    std::vector<TokenSequence> pair_texts;
    std::vector<ImageGrid> pair_images;
    It2iTrainData it2i;
    T2itTrainData t2it;
    if (stage == Stage::Stage1) {
        for_each_manifest_record(join(cfg.out, "pairs_train.jsonl"),
                                 [&](const ManifestRecord& r) {
                                     pair_texts.push_back(
                                         tokenize_text(r.text, vocab, mc.max_text_len));
                                     pair_images.push_back(render(SceneSpec::parse(r.image),
                                                                  mc.image_size, mc.channels));
                                 });
        if (static_cast<int>(pair_texts.size()) < 2)
            throw InputError("stage 1: pairs_train.jsonl needs at least two pairs");
    } else {
        if (task == Stage2Task::It2i || task == Stage2Task::Dual)
            it2i = load_it2i_train(cfg.out);
        if (task == Stage2Task::T2it || task == Stage2Task::Dual)
            t2it = load_t2it_train(cfg.out);
    }

    Trainer<float> trainer(*model, tc);
    trainer.optimizer() = std::move(opt);

    std::ofstream flog(join(cfg.out, "train_" + tag + ".log"),
                       start_step > 0 ? std::ios::app : std::ios::trunc);
    if (!flog) throw IoError("cannot write training log in " + cfg.out);

    const int n_pairs = static_cast<int>(pair_texts.size());
    double loss = 0.0;
    for (int step = start_step; step < tc.total_steps; ++step) {
        TaskTag tag_of_step = TaskTag::CrossModal;
        if (stage == Stage::Stage1) {
            const int b = std::min(tc.batch_size, n_pairs);
            std::vector<TokenSequence> bt;
            std::vector<ImageGrid> bi;
            for (int idx : Rng(tc.seed, "batch", static_cast<uint64_t>(step))
                               .sample_without_replacement(n_pairs, b)) {
                bt.push_back(pair_texts[static_cast<size_t>(idx)]);
                bi.push_back(pair_images[static_cast<size_t>(idx)]);
            }
            loss = trainer.stage1_step(bt, bi, step);
        } else {
            Stage2Task st = task;
            if (task == Stage2Task::Dual)
                st = step % 2 == 0 ? Stage2Task::It2i : Stage2Task::T2it;
            TrainingBatch batch =
                st == Stage2Task::It2i
                    ? make_it2i_batch(it2i, vocab, mc, tc, step, use_hard_negatives)
                    : make_t2it_batch(t2it, vocab, mc, tc, step, use_hard_negatives);
            tag_of_step = batch.task_tag;
            loss = stage == Stage::Stage2 ? trainer.stage2_step(batch, step)
                                          : trainer.finetune_step(batch, step);
        }
        std::ostringstream line;
        line << "step " << step << " " << to_string(tag_of_step) << " lr "
             << fmt9(lr_at(step, tc)) << " loss " << fmt9(loss);
        flog << line.str() << "\n";
        log << line.str() << "\n";

        if ((step + 1) % cfg.checkpoint_every == 0 && step + 1 < tc.total_steps) {
            std::ostringstream name;
            name << tag << "_step" << std::setw(6) << std::setfill('0') << step + 1 << ".bin";
            save_checkpoint(join(cfg.out, name.str()), *model, vocab, step + 1,
                            &trainer.optimizer());
        }
    }

    TrainOutcome out;
    out.checkpoint_path = join(cfg.out, tag + "_final.bin");
    out.steps = tc.total_steps - start_step;
    out.final_loss = loss;
    save_checkpoint(out.checkpoint_path, *model, vocab, tc.total_steps, &trainer.optimizer());
    log << "saved " << out.checkpoint_path << "\n";
    return out;
}

// ---------------------------------------------------------------------
// eval

EvalReport run_eval(const RunConfig& cfg, const std::string& task, const std::string& split,
                    const std::string& checkpoint, std::ostream& log) {
    cfg.validate();
    ensure_out_dir(cfg);
    auto lc = load_ckpt(checkpoint);
    const Model<float>& model = *lc.data.model;
    const Vocab& vocab = lc.data.vocab;

    TaskSpec spec = load_task(cfg.out, task, split);

    PseudoTokenMap<float> pmap;
    const PseudoTokenMap<float>* pmap_ptr = nullptr;
    if (cfg.fusion == FusionMethod::PseudoToken) {
        pmap = fit_pseudo_map(cfg, model, vocab);
        pmap_ptr = &pmap;
    }

    EvalReport report =
        evaluate_task(spec, model, vocab, cfg.fusion, cfg.model.token_order, {1, 5, 10, 20},
                      pmap_ptr);
    report.checkpoint_id = lc.digest;
    report.seed = cfg.seed;

    const std::string path = join(cfg.out, "report_" + task + "_" + split + ".json");
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << report.to_json() << "\n";
    log << report.to_json() << "\n";
    return report;
}

// ---------------------------------------------------------------------
// ablate

namespace {

AblateRow eval_leg(const RunConfig& leg_cfg, const std::string& variant, uint64_t seed,
                   const std::string& ckpt, FusionMethod fusion, std::ostream& log) {
    AblateRow row;
    row.variant = variant;
    row.seed = seed;
    row.token_order = to_string(leg_cfg.model.token_order);
    try {
        RunConfig ec = leg_cfg;
        ec.fusion = fusion;
        EvalReport it2i = run_eval(ec, "it2i", "test", ckpt, log);
        EvalReport t2it = run_eval(ec, "t2it", "test", ckpt, log);
        row.it2i_r5 = it2i.recall_at.at(5);
        row.t2it_r5 = t2it.recall_at.at(5);
        row.avg = 0.5 * (row.it2i_r5 + row.t2it_r5);
        row.ok = true;
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

std::string render_table(const std::vector<AblateRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(18) << "variant" << std::setw(8) << "seed" << std::setw(14)
       << "order" << std::right << std::setw(10) << "it2i_r5" << std::setw(10) << "t2it_r5"
       << std::setw(10) << "avg" << "\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(18) << r.variant << std::setw(8) << r.seed
           << std::setw(14) << r.token_order << std::right << std::fixed
           << std::setprecision(4);
        if (r.ok)
            os << std::setw(10) << r.it2i_r5 << std::setw(10) << r.t2it_r5 << std::setw(10)
               << r.avg << "\n";
        else
            os << "  FAILED: " << r.error << "\n";
        os.unsetf(std::ios::fixed);
    }
    return os.str();
}

}  // namespace

AblateResult run_ablate(const RunConfig& cfg, const std::vector<uint64_t>& seeds,
                        bool both_orders, std::ostream& log) {
    cfg.validate();
    ensure_out_dir(cfg);
    AblateResult result;

    for (uint64_t seed : seeds) {
        std::vector<TokenOrder> orders = {cfg.model.token_order};
        if (both_orders)
            orders.push_back(cfg.model.token_order == TokenOrder::VisualFirst
                                 ? TokenOrder::TextFirst
                                 : TokenOrder::VisualFirst);
        for (TokenOrder order : orders) {
            RunConfig base = cfg;
            base.seed = seed;
            base.model.token_order = order;
            base.out = join(cfg.out, "seed" + std::to_string(seed) +
                                         (order == cfg.model.token_order
                                              ? ""
                                              : std::string("_") + to_string(order)));
            log << "== ablation seed " << seed << " order " << to_string(order) << " ==\n";

            std::string stage1_ckpt;
            try {
                run_gen_data(base, "", log);
                stage1_ckpt = run_train(base, Stage::Stage1, Stage2Task::It2i, "", true, log)
                                  .checkpoint_path;
            } catch (const std::exception& e) {
                AblateRow row;
                row.variant = "stage1";
                row.seed = seed;
                row.token_order = to_string(order);
                row.error = e.what();
                result.rows.push_back(row);
                continue;
            }

            result.rows.push_back(eval_leg(base, "stage1", seed, stage1_ckpt,
                                           FusionMethod::Interleaved, log));

            struct Leg {
                const char* name;
                Stage2Task task;
                bool hard_negatives;
            };
            const Leg legs[] = {{"it2i", Stage2Task::It2i, true},
                                {"it2i_no_hardneg", Stage2Task::It2i, false},
                                {"t2it", Stage2Task::T2it, true},
                                {"dual", Stage2Task::Dual, true}};
            std::string dual_ckpt;
            for (const Leg& leg : legs) {
                RunConfig lc = base;
                lc.out = join(base.out, leg.name);
                // stage-2 leg reads manifests generated above
                try {
                    fs::create_directories(lc.out);
                    for (const auto& entry : fs::directory_iterator(base.out))
                        if (entry.is_regular_file())
                            fs::copy_file(entry.path(),
                                          fs::path(lc.out) / entry.path().filename(),
                                          fs::copy_options::overwrite_existing);
                    TrainOutcome to = run_train(lc, Stage::Stage2, leg.task, stage1_ckpt,
                                                leg.hard_negatives, log);
                    if (std::string(leg.name) == "dual") dual_ckpt = to.checkpoint_path;
                    result.rows.push_back(eval_leg(lc, leg.name, seed, to.checkpoint_path,
                                                   FusionMethod::Interleaved, log));
                } catch (const std::exception& e) {
                    AblateRow row;
                    row.variant = leg.name;
                    row.seed = seed;
                    row.token_order = to_string(order);
                    row.error = e.what();
                    result.rows.push_back(row);
                }
            }
            if (!dual_ckpt.empty()) {
                RunConfig lc = base;
                lc.out = join(base.out, "dual");
                result.rows.push_back(eval_leg(lc, "score_fusion", seed, dual_ckpt,
                                               FusionMethod::ScoreFusion, log));
            }
        }
    }

    result.table = render_table(result.rows);
    log << result.table;
    {
        std::ofstream os(join(cfg.out, "ablation.txt"));
        os << result.table;
    }
    {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& r : result.rows) {
            nlohmann::ordered_json o;
            o["variant"] = r.variant;
            o["seed"] = r.seed;
            o["token_order"] = r.token_order;
            o["ok"] = r.ok;
            if (r.ok) {
                o["it2i_r5"] = r.it2i_r5;
                o["t2it_r5"] = r.t2it_r5;
                o["avg"] = r.avg;
            } else {
                o["error"] = r.error;
            }
            j.push_back(o);
        }
        std::ofstream os(join(cfg.out, "ablation.json"));
        os << j.dump(2) << "\n";
    }
    return result;
}

}  // namespace vista
