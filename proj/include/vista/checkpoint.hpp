#pragma once

#include <memory>
#include <string>

#include "vista/model.hpp"
#include "vista/tokenizer.hpp"
#include "vista/train.hpp"

namespace vista {

// Checkpoint archive: "VSTA" magic, version, a UTF-8 JSON metadata
// document (config, vocab, step, table of contents), then raw
// little-endian float32 arrays in row-major order. Save -> load is
// bit-exact, including optimizer moments, so training resumes
// byte-identically.
struct CheckpointData {
    ModelConfig config;
    Vocab vocab;
    int step = 0;
    std::unique_ptr<Model<float>> model;
    AdamW<float> optimizer;
    bool has_optimizer = false;
};

void save_checkpoint(const std::string& path, const Model<float>& model, const Vocab& vocab,
                     int step, const AdamW<float>* optimizer = nullptr);

CheckpointData load_checkpoint(const std::string& path);

// Content hash of the checkpoint file (FNV-1a 64, hex).
std::string checkpoint_digest(const std::string& path);

// Human-readable metadata (the JSON document) for inspect-checkpoint.
std::string checkpoint_metadata(const std::string& path);

}  // namespace vista
