#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vista/rng.hpp"
#include "vista/scene.hpp"

namespace vista {

// Composed image-text query record: edit k of one source scene. Records
// sharing group_id are hard negatives for each other.
struct It2iRecord {
    std::string id;
    std::string group_id;
    SceneSpec source;
    std::string source_caption;
    std::string instruction;
    std::string target_caption;
    SceneSpec target;
};

// Multi-modal document record: text query against an (image, passage)
// candidate.
struct T2itRecord {
    std::string id;
    std::string query;
    SceneSpec doc_image;
    std::string doc_text;
};

// Line record of the on-disk manifest (JSONL, one object per line).
struct ManifestRecord {
    std::string id;
    std::string kind;  // text | image | image_text
    std::string text;
    std::string image;  // SceneSpec serialization, empty for text items
    std::string group_id;
    std::string split;  // train | dev | test
};

// Random scene with 1..max_objects objects; every object gets a distinct
// cell and a distinct (color, shape) pair, and never the background color.
SceneSpec random_scene(Rng& rng, int background, int max_objects);

struct Edit {
    std::string instruction;
    SceneSpec target;
};

// k distinct single-attribute edits (color / shape / move / add / remove)
// with templated instructions and pairwise-distinct targets. Throws after
// bounded resampling if the source admits no further legal edit.
std::vector<Edit> generate_edits(const SceneSpec& source, int k, Rng& rng);

// n groups of k edits each; group g is derived from sub-stream (seed, g)
// so generation is order-independent and parallelizable.
std::vector<It2iRecord> make_it2i_groups(int n_groups, int edits_per_group, uint64_t seed,
                                         int background, int max_objects);

// n documents with a 20-60 word subtopic passage and a <=20 word query
// grounded in the document's own attributes.
std::vector<T2itRecord> generate_t2it(int n, uint64_t seed, int background, int max_objects);

// ---- manifests --------------------------------------------------------

void write_manifest(const std::vector<ManifestRecord>& records, const std::string& path);
std::vector<ManifestRecord> read_manifest(const std::string& path);

// Streaming variant: records are visited one line at a time.
void for_each_manifest_record(const std::string& path,
                              const std::function<void(const ManifestRecord&)>& fn);

// ---- similarity filter --------------------------------------------------

struct FilterReport {
    size_t input_count = 0;
    size_t kept_count = 0;
    size_t dropped_low_similarity = 0;
    size_t dropped_group_shrunk = 0;
    double rejection_rate = 0.0;
};

// Keep a record iff score(record) >= threshold; groups shrunk below two
// members are dropped entirely. The scorer is supplied by the caller
// (cosine between the encoded target caption and target image).
std::vector<It2iRecord> similarity_filter(
    const std::vector<It2iRecord>& records,
    const std::function<double(const It2iRecord&)>& score, double threshold,
    FilterReport* report = nullptr);

// Threshold that drops the lowest `drop_fraction` of the scores.
double threshold_for_drop_fraction(std::vector<double> scores, double drop_fraction);

}  // namespace vista
