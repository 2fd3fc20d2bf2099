#include "vista/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vista/errors.hpp"
#include "vista/exec.hpp"
#include "vista/kernels.hpp"

namespace vista {

void RetrievalIndex::validate() const {
    const int n = static_cast<int>(ids.size());
    if (matrix.rows() != n) throw InputError("index: |ids| != row count");
    std::set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) throw InputError("index: duplicate id " + id);
    const int d = matrix.cols();
    for (int i = 0; i < n; ++i) {
        double norm = std::sqrt(kernels::dot(matrix.row(i), matrix.row(i), d));
        if (std::abs(norm - 1.0) > 1e-6)
            throw InputError("index: row for " + ids[static_cast<size_t>(i)] +
                             " is not unit-norm");
    }
}

void TaskSpec::validate() const {
    std::set<std::string> qids, cids;
    for (const auto& r : queries) qids.insert(r.id);
    for (const auto& r : corpus) cids.insert(r.id);
    for (const auto& [q, rel] : qrels) {
        if (!qids.count(q)) throw InputError("qrels: unknown query id " + q);
        for (const auto& c : rel)
            if (!cids.count(c)) throw InputError("qrels: unknown candidate id " + c);
    }
}

namespace {

Tensor<float> encode_record(const ManifestRecord& r, const Model<float>& model,
                            const Vocab& vocab, FusionMethod fusion, TokenOrder order,
                            const PseudoTokenMap<float>* pseudo_map) {
    try {
        if (r.kind == "text") {
            return model.encode_text(tokenize_text(r.text, vocab, model.cfg.max_text_len)).emb;
        }
        if (r.kind == "image") {
            SceneSpec scene = SceneSpec::parse(r.image);
            return model.encode_image(render(scene, model.cfg.image_size, model.cfg.channels))
                .emb;
        }
        if (r.kind == "image_text") {
            SceneSpec scene = SceneSpec::parse(r.image);
            ImageGrid img = render(scene, model.cfg.image_size, model.cfg.channels);
            TokenSequence toks = tokenize_text(r.text, vocab, model.cfg.max_text_len);
            switch (fusion) {
                case FusionMethod::Interleaved:
                    return model.encode_interleaved(img, toks, order).emb;
                case FusionMethod::ScoreFusion:
                    return score_fusion_encode(model, toks, img);
                case FusionMethod::PseudoToken:
                    if (!pseudo_map)
                        throw InputError("pseudo_token fusion requires a trained map");
                    return pseudo_token_encode(model, *pseudo_map, toks, img);
            }
        }
        throw InputError("unknown kind: " + r.kind);
    } catch (const Error& e) {
        throw Error("encode failure for item " + r.id + ": " + e.what());
    }
}

}  // namespace

RetrievalIndex encode_corpus(const std::vector<ManifestRecord>& records,
                             const Model<float>& model, const Vocab& vocab,
                             FusionMethod fusion, TokenOrder order,
                             const PseudoTokenMap<float>* pseudo_map) {
    RetrievalIndex index;
    const int n = static_cast<int>(records.size());
    const int d = model.cfg.d_model;
    index.ids.resize(static_cast<size_t>(n));
    index.matrix = Tensor<float>({n, d});
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
    for (int i = 0; i < n; ++i) {
        index.ids[static_cast<size_t>(i)] = records[static_cast<size_t>(i)].id;
        Tensor<float> e = encode_record(records[static_cast<size_t>(i)], model, vocab, fusion,
                                        order, pseudo_map);
        std::copy(e.data.begin(), e.data.end(), index.matrix.row(i));
    }
    return index;
}

std::vector<ScoredId> search(const RetrievalIndex& index, const float* query_embedding,
                             int d, int k) {
    if (index.ids.empty()) throw InputError("search: empty index");
    if (k < 1) throw InputError("search: k must be >= 1");
    const int n = static_cast<int>(index.ids.size());
    std::vector<int> order(static_cast<size_t>(n));
    std::vector<double> scores(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        order[static_cast<size_t>(i)] = i;
        scores[static_cast<size_t>(i)] = kernels::dot(index.matrix.row(i), query_embedding, d);
    }
    auto better = [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return index.ids[static_cast<size_t>(a)] < index.ids[static_cast<size_t>(b)];
    };
    const int kk = std::min(k, n);
    std::partial_sort(order.begin(), order.begin() + kk, order.end(), better);
    std::vector<ScoredId> out;
    out.reserve(static_cast<size_t>(kk));
    for (int i = 0; i < kk; ++i)
        out.push_back({index.ids[static_cast<size_t>(order[static_cast<size_t>(i)])],
                       scores[static_cast<size_t>(order[static_cast<size_t>(i)])]});
    return out;
}

namespace {

const std::set<std::string>& relevant_for(
    const Qrels& qrels, const std::string& qid) {
    auto it = qrels.find(qid);
    if (it == qrels.end()) throw InputError("query missing from qrels: " + qid);
    return it->second;
}

}  // namespace

double recall_at_k(const std::vector<std::pair<std::string, std::vector<std::string>>>& rankings,
                   const Qrels& qrels, int k) {
    if (rankings.empty()) return 0.0;
    int hits = 0;
    for (const auto& [qid, ranked] : rankings) {
        const auto& rel = relevant_for(qrels, qid);
        for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i)
            if (rel.count(ranked[static_cast<size_t>(i)])) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double mrr_at_k(const std::vector<std::pair<std::string, std::vector<std::string>>>& rankings,
                const Qrels& qrels, int k) {
    if (rankings.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [qid, ranked] : rankings) {
        const auto& rel = relevant_for(qrels, qid);
        for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i)
            if (rel.count(ranked[static_cast<size_t>(i)])) {
                sum += 1.0 / (i + 1);
                break;
            }
    }
    return sum / static_cast<double>(rankings.size());
}

EvalReport evaluate_task(const TaskSpec& task, const Model<float>& model, const Vocab& vocab,
                         FusionMethod fusion, TokenOrder order, const std::vector<int>& ks,
                         const PseudoTokenMap<float>* pseudo_map) {
    task.validate();
    RetrievalIndex index = encode_corpus(task.corpus, model, vocab, fusion, order, pseudo_map);
    RetrievalIndex qindex = encode_corpus(task.queries, model, vocab, fusion, order, pseudo_map);

    int kmax = 10;
    for (int k : ks) kmax = std::max(kmax, k);
    const int d = model.cfg.d_model;
    const int nq = static_cast<int>(task.queries.size());
    std::vector<std::pair<std::string, std::vector<std::string>>> rankings(
        static_cast<size_t>(nq));
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
    for (int i = 0; i < nq; ++i) {
        auto ranked = search(index, qindex.matrix.row(i), d, kmax);
        std::vector<std::string> ids;
        ids.reserve(ranked.size());
        for (const auto& s : ranked) ids.push_back(s.id);
        rankings[static_cast<size_t>(i)] = {qindex.ids[static_cast<size_t>(i)],
                                            std::move(ids)};
    }

    EvalReport report;
    report.task = task.name;
    for (int k : ks) report.recall_at[k] = recall_at_k(rankings, task.qrels, k);
    report.mrr_at_10 = mrr_at_k(rankings, task.qrels, 10);
    report.query_count = nq;
    report.corpus_size = static_cast<int>(task.corpus.size());
    report.fusion = to_string(fusion);
    report.token_order = to_string(order);
    report.seed = model.cfg.seed;
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["task"] = task;
    for (const auto& [k, v] : recall_at) j["recall_at_" + std::to_string(k)] = v;
    j["mrr_at_10"] = mrr_at_10;
    j["query_count"] = query_count;
    j["corpus_size"] = corpus_size;
    j["checkpoint_id"] = checkpoint_id;
    j["fusion"] = fusion;
    j["token_order"] = token_order;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

void write_qrels(const Qrels& qrels, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write qrels: " + path);
    for (const auto& [q, rels] : qrels)
        for (const auto& c : rels) out << q << " " << c << " 1\n";
}

Qrels read_qrels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read qrels: " + path);
    Qrels qrels;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string q, c;
        int rel;
        if (!(ss >> q >> c >> rel) || (rel != 0 && rel != 1))
            throw IoError(path + ": line " + std::to_string(lineno) + ": malformed qrel");
        if (rel == 1) qrels[q].insert(c);
    }
    return qrels;
}

std::vector<ManifestRecord> dedup_by_id(const std::vector<ManifestRecord>& records) {
    std::vector<ManifestRecord> out;
    std::set<std::string> seen;
    for (const auto& r : records)
        if (seen.insert(r.id).second) out.push_back(r);
    return out;
}

}  // namespace vista
