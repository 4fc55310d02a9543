#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace debias {

/**
 * Word-level vocabulary shared by the model backends.
 *
 * Token ids 0 and 1 are reserved for <bos> and <unk>. Encoding splits on
 * ASCII whitespace; unknown words map to <unk>. Word tokenization is
 * concatenative, so the ids of "context text" are exactly the ids of the
 * context followed by the ids of the text.
 */
class Vocabulary {
public:
    static constexpr int kBos = 0;
    static constexpr int kUnk = 1;

    Vocabulary();
    explicit Vocabulary(const std::vector<std::string>& words);

    // Adds a word if absent, returns its id.
    int add(const std::string& word);

    int size() const { return static_cast<int>(tokens_.size()); }
    int id_of(const std::string& word) const;  // kUnk when absent
    const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    // Whitespace-split encoding, no specials added.
    std::vector<int> encode(const std::string& text) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

std::vector<std::string> split_words(const std::string& text);

}  // namespace debias
