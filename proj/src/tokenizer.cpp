#include "uscliplab/tokenizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "uscliplab/common.hpp"

namespace usclip {

using nlohmann::json;
using nlohmann::ordered_json;

const char* text_encoder_kind_name(TextEncoderKind k) {
  return k == TextEncoderKind::contrastive ? "contrastive" : "clinical";
}

TextEncoderKind parse_text_encoder_kind(const std::string& name) {
  if (name == "contrastive") return TextEncoderKind::contrastive;
  if (name == "clinical") return TextEncoderKind::clinical;
  throw ConfigError("unknown text encoder kind '" + name + "' (expected contrastive or clinical)");
}

int token_cap(TextEncoderKind kind) {
  return kind == TextEncoderKind::contrastive ? 77 : 128;
}

std::vector<std::string> caption_words(const std::string& caption) {
  std::vector<std::string> words;
  std::istringstream ss(caption);
  std::string tok;
  while (ss >> tok) {
    size_t b = 0, e = tok.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(tok[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(tok[e - 1]))) --e;
    if (b >= e) continue;
    words.push_back(to_lower(tok.substr(b, e - b)));
  }
  return words;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions) {
  std::set<std::string> words;
  for (const auto& cap : captions) {
    for (auto& w : caption_words(cap)) words.insert(std::move(w));
  }
  Vocabulary v;
  v.id_to_word = {"<pad>", "<start>", "<end>", "<unk>"};
  for (const auto& w : words) v.id_to_word.push_back(w);
  for (int i = 0; i < static_cast<int>(v.id_to_word.size()); ++i) {
    v.word_to_id[v.id_to_word[i]] = i;
  }
  return v;
}

int Vocabulary::lookup(const std::string& word) const {
  auto it = word_to_id.find(word);
  return it == word_to_id.end() ? kUnk : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  ordered_json j;
  j["tokens"] = id_to_word;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path.string());
  out << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path.string());
  json j;
  in >> j;
  Vocabulary v;
  v.id_to_word = j.at("tokens").get<std::vector<std::string>>();
  if (v.id_to_word.size() < 4) throw std::runtime_error("vocabulary file lacks special tokens");
  for (int i = 0; i < static_cast<int>(v.id_to_word.size()); ++i) {
    v.word_to_id[v.id_to_word[i]] = i;
  }
  return v;
}

int TokenSequence::real_length() const {
  int n = 0;
  for (uint8_t m : mask) n += m;
  return n;
}

TokenSequence tokenize(const std::string& caption, int cap, const Vocabulary& vocab) {
  if (cap < 3) throw std::invalid_argument("tokenize: cap must fit start, end and one word");
  auto words = caption_words(caption);
  if (words.empty()) throw std::invalid_argument("tokenize: empty caption");

  if (static_cast<int>(words.size()) > cap - 2) words.resize(cap - 2);

  TokenSequence seq;
  seq.cap = cap;
  seq.ids.assign(cap, Vocabulary::kPad);
  seq.mask.assign(cap, 0);
  int pos = 0;
  seq.ids[pos] = Vocabulary::kStart;
  seq.mask[pos++] = 1;
  for (const auto& w : words) {
    seq.ids[pos] = vocab.lookup(w);
    seq.mask[pos++] = 1;
  }
  seq.ids[pos] = Vocabulary::kEnd;
  seq.mask[pos++] = 1;
  return seq;
}

}  // namespace usclip
