#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lookuplm {

inline constexpr int kBosId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kNumReservedIds = 3;
inline constexpr const char* kBosToken = "<s>";
inline constexpr const char* kEosToken = "</s>";
inline constexpr const char* kUnkToken = "<unk>";

// Fixed word vocabulary with dense ids in [0, V). Ids 0..2 are reserved for
// BOS/EOS/UNK. Read-only after construction.
class Vocab {
 public:
  // Keeps the max_size-3 most frequent corpus words, ties broken by first
  // occurrence. max_size < 4 or an unreadable corpus is an error.
  static Vocab build(const std::string& corpus_path, std::size_t max_size);

  // tokens must start with the three reserved surface forms.
  static Vocab from_tokens(std::vector<std::string> tokens);

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }

  // kUnkId for out-of-vocabulary words.
  int id_of(std::string_view token) const;

  const std::string& token_of(int id) const;

  // BOS + word ids + EOS; OOV words map to UNK.
  std::vector<int> encode(std::string_view text) const;

  // Inverse of encode on in-vocabulary text; reserved BOS/EOS are omitted,
  // UNK keeps its surface form.
  std::string decode(std::span<const int> ids) const;

 private:
  Vocab() = default;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Whitespace tokenization shared by every text-consuming operation.
std::vector<std::string> split_words(std::string_view text);

// Reads a whole file as lines. Handles \n and \r\n uniformly; a trailing
// newline does not produce an empty final line.
std::vector<std::string> read_lines(const std::string& path);

// Emits each distinct sentence appearing k times ceil(ln k) times (once for
// k = 1), grouped in first-occurrence order.
void frequency_rescale_corpus(const std::string& corpus_path, const std::string& out_path);

}  // namespace lookuplm
