#include "lookuplm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace lookuplm {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

Vocab Vocab::build(const std::string& corpus_path, std::size_t max_size) {
  if (max_size < 4) throw std::invalid_argument("vocab max_size must be at least 4");

  std::unordered_map<std::string, std::size_t> first_seen;
  std::vector<std::pair<std::string, std::uint64_t>> counts;  // in first-occurrence order
  for (const std::string& line : read_lines(corpus_path)) {
    for (std::string& word : split_words(line)) {
      auto [it, inserted] = first_seen.emplace(std::move(word), counts.size());
      if (inserted) {
        counts.emplace_back(it->first, 1);
      } else {
        ++counts[it->second].second;
      }
    }
  }

  std::vector<std::size_t> order(counts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return counts[a].second > counts[b].second;
  });

  std::vector<std::string> tokens = {kBosToken, kEosToken, kUnkToken};
  const std::size_t keep = std::min(order.size(), max_size - kNumReservedIds);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(counts[order[i]].first);
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumReservedIds || tokens[0] != kBosToken || tokens[1] != kEosToken ||
      tokens[2] != kUnkToken) {
    throw std::invalid_argument("vocab must start with the reserved tokens <s> </s> <unk>");
  }
  Vocab v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate token in vocab: " + v.tokens_[i]);
    }
  }
  return v;
}

Vocab Vocab::load(const std::string& path) { return from_tokens(read_lines(path)); }

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const std::string& token : tokens_) out << token << '\n';
  if (!out) throw std::runtime_error("failed writing vocab: " + path);
}

int Vocab::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids = {kBosId};
  for (const std::string& word : split_words(text)) ids.push_back(id_of(word));
  ids.push_back(kEosId);
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kBosId || id == kEosId) continue;
    const std::string& token = token_of(id);
    if (!out.empty()) out += ' ';
    out += token;
  }
  return out;
}

void frequency_rescale_corpus(const std::string& corpus_path, const std::string& out_path) {
  std::unordered_map<std::string, std::size_t> first_seen;
  std::vector<std::pair<std::string, std::uint64_t>> sentences;
  for (std::string& line : read_lines(corpus_path)) {
    auto [it, inserted] = first_seen.emplace(std::move(line), sentences.size());
    if (inserted) {
      sentences.emplace_back(it->first, 1);
    } else {
      ++sentences[it->second].second;
    }
  }

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + out_path);
  for (const auto& [sentence, count] : sentences) {
    std::uint64_t repeats = 1;
    if (count > 1) {
      repeats = static_cast<std::uint64_t>(std::ceil(std::log(static_cast<double>(count))));
    }
    for (std::uint64_t r = 0; r < repeats; ++r) out << sentence << '\n';
  }
  if (!out) throw std::runtime_error("failed writing corpus: " + out_path);
}

}  // namespace lookuplm
