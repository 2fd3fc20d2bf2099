#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vista/types.hpp"

namespace vista {

// Word-level vocabulary over the synthetic corpus. Id 0 is reserved for
// unknown words.
class Vocab {
public:
    static constexpr int kUnkId = 0;

    Vocab();

    // Most frequent words first, capped at max_size (including [UNK]).
    // `reserved` words are always admitted ahead of frequency order.
    static Vocab build(const std::vector<std::string>& corpus, int max_size,
                       const std::vector<std::string>& reserved = {});

    int id_of(const std::string& word) const;  // kUnkId if absent
    const std::string& word_of(int id) const;
    int size() const { return static_cast<int>(words_.size()); }
    const std::vector<std::string>& words() const { return words_; }

    void add(const std::string& word);

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

// Lowercase, strip punctuation, split on whitespace.
std::vector<std::string> normalize_words(const std::string& text);

// Deterministic id sequence; unknown words map to [UNK]; truncated to
// max_text_len with the truncation flag set. Empty input (after
// normalization) is an error.
TokenSequence tokenize_text(const std::string& text, const Vocab& vocab,
                            int max_text_len);

}  // namespace vista
