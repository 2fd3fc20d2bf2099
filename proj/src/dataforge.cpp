#include "vista/dataforge.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vista/errors.hpp"
#include "vista/exec.hpp"

namespace vista {

namespace {

std::string object_phrase(const SceneObject& o) {
    return std::string(Palette::names()[static_cast<size_t>(o.color)]) + " " +
           shape_name(o.shape);
}

bool cell_free(const SceneSpec& s, int row, int col) {
    for (const auto& o : s.objects)
        if (o.row == row && o.col == col) return false;
    return true;
}

bool pair_taken(const SceneSpec& s, int color, ShapeKind shape, int skip = -1) {
    for (size_t i = 0; i < s.objects.size(); ++i) {
        if (static_cast<int>(i) == skip) continue;
        if (s.objects[i].color == color && s.objects[i].shape == shape) return true;
    }
    return false;
}

ShapeKind shape_at(int i) { return static_cast<ShapeKind>(i); }

}  // namespace

SceneSpec random_scene(Rng& rng, int background, int max_objects) {
    if (background < 0 || background >= Palette::kSize)
        throw InputError("random_scene: background out of palette");
    SceneSpec s;
    s.background = background;
    const int count = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(max_objects)));
    int guard = 0;
    while (static_cast<int>(s.objects.size()) < count) {
        if (++guard > 200) break;
        SceneObject o;
        o.shape = shape_at(static_cast<int>(rng.next_below(3)));
        o.color = static_cast<int>(rng.next_below(Palette::kSize));
        o.row = static_cast<int>(rng.next_below(kGridCells));
        o.col = static_cast<int>(rng.next_below(kGridCells));
        o.large = rng.next_below(2) == 0;
        if (o.color == background) continue;
        if (!cell_free(s, o.row, o.col)) continue;
        if (pair_taken(s, o.color, o.shape)) continue;
        s.objects.push_back(o);
    }
    s.validate();
    return s;
}

std::vector<Edit> generate_edits(const SceneSpec& source, int k, Rng& rng) {
    if (k < 2) throw InputError("generate_edits: k must be >= 2");
    source.validate();
    if (source.objects.empty()) throw InputError("generate_edits: source has no objects");

    std::vector<Edit> edits;
    std::set<std::string> used_instructions;
    std::set<std::string> used_targets;
    used_targets.insert(source.serialize());

    int attempts = 0;
    while (static_cast<int>(edits.size()) < k) {
        if (++attempts > 500)
            throw Error("generate_edits: no further legal edit after bounded retries");
        const int kind = static_cast<int>(rng.next_below(5));
        const int oi = static_cast<int>(rng.next_below(source.objects.size()));
        const SceneObject& obj = source.objects[static_cast<size_t>(oi)];
        SceneSpec target = source;
        std::string instruction;

        switch (kind) {
            case 0: {  // change color
                int nc = static_cast<int>(rng.next_below(Palette::kSize));
                if (nc == obj.color || nc == source.background ||
                    pair_taken(source, nc, obj.shape, oi))
                    continue;
                target.objects[static_cast<size_t>(oi)].color = nc;
                instruction = "change the " + object_phrase(obj) + " to " +
                              Palette::names()[static_cast<size_t>(nc)];
                break;
            }
            case 1: {  // change shape
                ShapeKind ns = shape_at(static_cast<int>(rng.next_below(3)));
                if (ns == obj.shape || pair_taken(source, obj.color, ns, oi)) continue;
                target.objects[static_cast<size_t>(oi)].shape = ns;
                instruction = "turn the " + object_phrase(obj) + " into a " + shape_name(ns);
                break;
            }
            case 2: {  // move
                int nr = static_cast<int>(rng.next_below(kGridCells));
                int ncol = static_cast<int>(rng.next_below(kGridCells));
                if ((nr == obj.row && ncol == obj.col) || !cell_free(source, nr, ncol))
                    continue;
                target.objects[static_cast<size_t>(oi)].row = nr;
                target.objects[static_cast<size_t>(oi)].col = ncol;
                instruction = "move the " + object_phrase(obj) + " to the " +
                              position_phrase(nr, ncol);
                break;
            }
            case 3: {  // add
                if (source.objects.size() >= 4) continue;
                SceneObject add;
                add.shape = shape_at(static_cast<int>(rng.next_below(3)));
                add.color = static_cast<int>(rng.next_below(Palette::kSize));
                add.row = static_cast<int>(rng.next_below(kGridCells));
                add.col = static_cast<int>(rng.next_below(kGridCells));
                add.large = rng.next_below(2) == 0;
                if (add.color == source.background || !cell_free(source, add.row, add.col) ||
                    pair_taken(source, add.color, add.shape))
                    continue;
                target.objects.push_back(add);
                instruction = "add a " + std::string(add.large ? "large" : "small") + " " +
                              object_phrase(add) + " in the " +
                              position_phrase(add.row, add.col);
                break;
            }
            default: {  // remove
                if (source.objects.size() < 2) continue;
                target.objects.erase(target.objects.begin() + oi);
                instruction = "remove the " + object_phrase(obj);
                break;
            }
        }

        const std::string tkey = target.serialize();
        if (used_targets.count(tkey) || used_instructions.count(instruction)) continue;
        used_targets.insert(tkey);
        used_instructions.insert(instruction);
        edits.push_back({instruction, std::move(target)});
    }
    return edits;
}

std::vector<It2iRecord> make_it2i_groups(int n_groups, int edits_per_group, uint64_t seed,
                                         int background, int max_objects) {
    std::vector<It2iRecord> records(
        static_cast<size_t>(n_groups) * static_cast<size_t>(edits_per_group));
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
    for (int g = 0; g < n_groups; ++g) {
        Rng rng(seed, "it2i.group", static_cast<uint64_t>(g));
        SceneSpec source = random_scene(rng, background, max_objects);
        auto edits = generate_edits(source, edits_per_group, rng);
        for (int e = 0; e < edits_per_group; ++e) {
            It2iRecord& r =
                records[static_cast<size_t>(g) * edits_per_group + static_cast<size_t>(e)];
            r.group_id = "g" + std::to_string(g);
            r.id = r.group_id + "e" + std::to_string(e);
            r.source = source;
            r.source_caption = caption(source);
            r.instruction = edits[static_cast<size_t>(e)].instruction;
            r.target = edits[static_cast<size_t>(e)].target;
            r.target_caption = caption(r.target);
        }
    }
    return records;
}

namespace {

const std::vector<std::string>& topic_bank() {
    static const std::vector<std::string> topics = {
        "astronomy",  "gardening", "pottery",    "sailing",   "geology",  "weaving",
        "chess",      "baking",    "cycling",    "origami",   "falconry", "calligraphy",
        "beekeeping", "archery",   "astrology",  "carpentry", "fishing",  "juggling",
        "knitting",   "lacquer",   "masonry",    "navigation", "orchards", "printing",
        "quilting",   "robotics",  "smithing",   "tapestry",  "uptown",   "volcanoes",
        "wetlands",   "xylography", "yodeling",  "zoology",   "meteors",  "fossils",
        "harbors",    "lanterns",  "windmills",  "glaciers"};
    return topics;
}

const std::vector<std::string>& filler_bank() {
    static const std::vector<std::string> fillers = {
        "the collection was assembled over several seasons by volunteers",
        "visitors often remark on how carefully each item is kept",
        "records of this kind were once stored in paper ledgers",
        "curators rotate the display twice every calendar year",
        "a short guide accompanies every catalogued entry",
        "most entries were photographed under controlled lighting",
        "the catalogue follows a numbering scheme from older archives",
        "related material can be requested from the reading room",
        "each entry lists its provenance where that is known",
        "the display hall keeps a steady temperature throughout the year",
        "labels are reviewed annually for accuracy and wording",
        "donations arrive from members of the regional society"};
    return fillers;
}

size_t word_count(const std::string& s) {
    std::istringstream ss(s);
    std::string w;
    size_t n = 0;
    while (ss >> w) ++n;
    return n;
}

}  // namespace

std::vector<T2itRecord> generate_t2it(int n, uint64_t seed, int background, int max_objects) {
    std::vector<T2itRecord> records(static_cast<size_t>(n));
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
    for (int i = 0; i < n; ++i) {
        Rng rng(seed, "t2it.record", static_cast<uint64_t>(i));
        T2itRecord& r = records[static_cast<size_t>(i)];
        r.id = "d" + std::to_string(i);
        r.doc_image = random_scene(rng, background, max_objects);
        const auto& topics = topic_bank();
        const std::string& topic =
            topics[static_cast<size_t>(rng.next_below(topics.size()))];
        const SceneObject& focus =
            r.doc_image.objects[static_cast<size_t>(rng.next_below(r.doc_image.objects.size()))];

        std::ostringstream doc;
        doc << "notes on " << topic << " describe a " << (focus.large ? "large" : "small")
            << " " << object_phrase(focus) << " in the "
            << position_phrase(focus.row, focus.col) << " of the exhibit";
        const auto& fillers = filler_bank();
        const size_t target_words = 20 + rng.next_below(25);
        while (word_count(doc.str()) < target_words) {
            const std::string& f =
                fillers[static_cast<size_t>(rng.next_below(fillers.size()))];
            if (word_count(doc.str()) + word_count(f) > 60) break;
            doc << " . " << f;
        }
        r.doc_text = doc.str();

        r.query = "which " + topic + " exhibit shows a " + object_phrase(focus) +
                  " in the " + position_phrase(focus.row, focus.col);
    }
    return records;
}

// ---- manifests ----------------------------------------------------------

void write_manifest(const std::vector<ManifestRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest: " + path);
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (r.id.empty()) throw IoError("manifest record with empty id: " + path);
        if (!ids.insert(r.id).second) throw IoError("duplicate manifest id: " + r.id);
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["kind"] = r.kind;
        j["text"] = r.text;
        j["image"] = r.image;
        j["group_id"] = r.group_id;
        j["split"] = r.split;
        out << j.dump() << "\n";
    }
}

void for_each_manifest_record(const std::string& path,
                              const std::function<void(const ManifestRecord&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest: " + path);
    std::string line;
    size_t lineno = 0;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + ": line " + std::to_string(lineno) + ": " + e.what());
        }
        ManifestRecord r;
        for (const char* req : {"id", "kind"})
            if (!j.contains(req) || !j[req].is_string() || j[req].get<std::string>().empty())
                throw IoError(path + ": line " + std::to_string(lineno) +
                              ": missing required field " + req);
        r.id = j["id"].get<std::string>();
        r.kind = j["kind"].get<std::string>();
        if (r.kind != "text" && r.kind != "image" && r.kind != "image_text")
            throw IoError(path + ": line " + std::to_string(lineno) + ": unknown kind " +
                          r.kind);
        r.text = j.value("text", "");
        r.image = j.value("image", "");
        r.group_id = j.value("group_id", "");
        r.split = j.value("split", "");
        if (!ids.insert(r.id).second)
            throw IoError(path + ": line " + std::to_string(lineno) + ": duplicate id " + r.id);
        fn(r);
    }
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
    std::vector<ManifestRecord> out;
    for_each_manifest_record(path, [&](const ManifestRecord& r) { out.push_back(r); });
    return out;
}

// ---- similarity filter ----------------------------------------------------

std::vector<It2iRecord> similarity_filter(
    const std::vector<It2iRecord>& records,
    const std::function<double(const It2iRecord&)>& score, double threshold,
    FilterReport* report) {
    std::vector<char> keep(records.size(), 0);
    std::vector<double> scores(records.size(), 0.0);
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
    for (int i = 0; i < static_cast<int>(records.size()); ++i) {
        scores[static_cast<size_t>(i)] = score(records[static_cast<size_t>(i)]);
        keep[static_cast<size_t>(i)] = scores[static_cast<size_t>(i)] >= threshold ? 1 : 0;
    }

    size_t dropped_low = 0;
    std::map<std::string, int> group_sizes;
    for (size_t i = 0; i < records.size(); ++i) {
        if (keep[i])
            group_sizes[records[i].group_id]++;
        else
            ++dropped_low;
    }

    std::vector<It2iRecord> kept;
    size_t dropped_group = 0;
    for (size_t i = 0; i < records.size(); ++i) {
        if (!keep[i]) continue;
        if (group_sizes[records[i].group_id] < 2) {
            ++dropped_group;
            continue;
        }
        kept.push_back(records[i]);
    }

    if (report) {
        report->input_count = records.size();
        report->kept_count = kept.size();
        report->dropped_low_similarity = dropped_low;
        report->dropped_group_shrunk = dropped_group;
        report->rejection_rate =
            records.empty() ? 0.0
                            : 1.0 - static_cast<double>(kept.size()) / records.size();
    }
    return kept;
}

double threshold_for_drop_fraction(std::vector<double> scores, double drop_fraction) {
    if (scores.empty()) return -1.0;
    if (drop_fraction <= 0.0) return -1.0;
    std::sort(scores.begin(), scores.end());
    size_t idx = static_cast<size_t>(drop_fraction * scores.size());
    if (idx >= scores.size()) idx = scores.size() - 1;
    return scores[idx];
}

}  // namespace vista
