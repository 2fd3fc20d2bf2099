#include "vista/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "vista/errors.hpp"

namespace vista {

Vocab::Vocab() { add("[UNK]"); }

void Vocab::add(const std::string& word) {
    if (index_.count(word)) return;
    index_[word] = static_cast<int>(words_.size());
    words_.push_back(word);
}

int Vocab::id_of(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocab::word_of(int id) const {
    if (id < 0 || id >= size()) throw InputError("token id out of range");
    return words_[static_cast<size_t>(id)];
}

Vocab Vocab::build(const std::vector<std::string>& corpus, int max_size,
                   const std::vector<std::string>& reserved) {
    std::map<std::string, long> counts;  // ordered map: deterministic ties
    for (const auto& text : corpus)
        for (const auto& w : normalize_words(text)) counts[w]++;

    Vocab v;
    for (const auto& w : reserved) {
        if (v.size() >= max_size) break;
        v.add(w);
    }
    std::vector<std::pair<long, std::string>> ranked;
    ranked.reserve(counts.size());
    for (const auto& [w, c] : counts) ranked.emplace_back(c, w);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [c, w] : ranked) {
        if (v.size() >= max_size) break;
        v.add(w);
    }
    return v;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocab: " + path);
    for (const auto& w : words_) out << w << "\n";
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocab: " + path);
    Vocab v;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            if (line != "[UNK]") throw IoError("vocab file must start with [UNK]: " + path);
            first = false;
            continue;
        }
        if (!line.empty()) v.add(line);
    }
    return v;
}

std::vector<std::string> normalize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

TokenSequence tokenize_text(const std::string& text, const Vocab& vocab,
                            int max_text_len) {
    auto words = normalize_words(text);
    if (words.empty()) throw InputError("tokenize_text: empty input");
    TokenSequence seq;
    if (static_cast<int>(words.size()) > max_text_len) {
        words.resize(static_cast<size_t>(max_text_len));
        seq.truncated = true;
    }
    seq.ids.reserve(words.size());
    for (const auto& w : words) seq.ids.push_back(vocab.id_of(w));
    return seq;
}

}  // namespace vista
