#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "vista/dataforge.hpp"
#include "vista/fusion.hpp"
#include "vista/model.hpp"
#include "vista/tokenizer.hpp"

namespace vista {

// Row-per-candidate unit-norm embedding matrix with aligned ids.
struct RetrievalIndex {
    std::vector<std::string> ids;
    Tensor<float> matrix;  // (N, d)

    void validate() const;
};

struct ScoredId {
    std::string id;
    double score;
};

using Qrels = std::map<std::string, std::set<std::string>>;

struct TaskSpec {
    std::string name;
    std::vector<ManifestRecord> queries;
    std::vector<ManifestRecord> corpus;
    Qrels qrels;

    void validate() const;  // every qrel id exists in its manifest
};

struct EvalReport {
    std::string task;
    std::map<int, double> recall_at;  // K in {1,5,10,20}
    double mrr_at_10 = 0.0;
    int query_count = 0;
    int corpus_size = 0;
    std::string checkpoint_id;
    std::string fusion;
    std::string token_order;
    uint64_t seed = 0;

    std::string to_json() const;  // stable key order
};

// Encode every manifest item into one unit-norm row, order-preserving.
// image_text items are routed through the selected fusion method.
RetrievalIndex encode_corpus(const std::vector<ManifestRecord>& records,
                             const Model<float>& model, const Vocab& vocab,
                             FusionMethod fusion, TokenOrder order,
                             const PseudoTokenMap<float>* pseudo_map = nullptr);

// Exact top-k by dot product (cosine under unit norms), descending score,
// ties broken by ascending id.
std::vector<ScoredId> search(const RetrievalIndex& index, const float* query_embedding,
                             int d, int k);

// Fraction of queries with at least one relevant id in the top k.
double recall_at_k(const std::vector<std::pair<std::string, std::vector<std::string>>>& rankings,
                   const Qrels& qrels, int k);

// Mean reciprocal rank of the first relevant id within the top k.
double mrr_at_k(const std::vector<std::pair<std::string, std::vector<std::string>>>& rankings,
                const Qrels& qrels, int k = 10);

EvalReport evaluate_task(const TaskSpec& task, const Model<float>& model, const Vocab& vocab,
                         FusionMethod fusion, TokenOrder order,
                         const std::vector<int>& ks = {1, 5, 10, 20},
                         const PseudoTokenMap<float>* pseudo_map = nullptr);

// Qrels file: one line per (query_id, candidate_id, relevance in {0,1}).
void write_qrels(const Qrels& qrels, const std::string& path);
Qrels read_qrels(const std::string& path);

// Id-level deduplication for mixed corpora: keeps the first occurrence.
std::vector<ManifestRecord> dedup_by_id(const std::vector<ManifestRecord>& records);

}  // namespace vista
