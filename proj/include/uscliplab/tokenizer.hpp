#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace usclip {

enum class TextEncoderKind { contrastive, clinical };

const char* text_encoder_kind_name(TextEncoderKind k);
TextEncoderKind parse_text_encoder_kind(const std::string& name);

// Sequence caps per encoder family: contrastive-style 77, clinical-style 128.
int token_cap(TextEncoderKind kind);

// Whitespace word-to-id vocabulary with four special tokens. Words are
// lowercased and stripped of leading/trailing punctuation before lookup.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;

  std::unordered_map<std::string, int> word_to_id;
  std::vector<std::string> id_to_word;  // [<pad>, <start>, <end>, <unk>, ...]

  static Vocabulary build(const std::vector<std::string>& captions);
  int size() const { return static_cast<int>(id_to_word.size()); }
  int lookup(const std::string& word) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
};

std::vector<std::string> caption_words(const std::string& caption);

struct TokenSequence {
  std::vector<int> ids;        // length == cap, padded with kPad
  std::vector<uint8_t> mask;   // 1 for real tokens (including start/end)
  int cap = 0;

  int real_length() const;
};

// [<start>, words..., <end>] padded to cap. Over-long captions keep the
// leading start token, truncate the words and append the end token so that
// the sequence length is exactly cap. Empty captions are an error.
TokenSequence tokenize(const std::string& caption, int cap, const Vocabulary& vocab);

}  // namespace usclip
