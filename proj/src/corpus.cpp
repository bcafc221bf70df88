#include "spantag/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "spantag/unicode.hpp"

namespace spantag {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string Document::slice(std::size_t start, std::size_t end) const {
  return unicode::encode_utf8(std::u32string_view(chars).substr(start, end - start));
}

Document make_document(std::string id, std::string lang, std::string text) {
  if (id.empty()) throw Error("document id must be non-empty");
  Document doc;
  try {
    doc.chars = unicode::decode_utf8(text);
  } catch (const std::invalid_argument& e) {
    throw Error("document " + id + ": " + e.what());
  }
  doc.id = std::move(id);
  doc.lang = std::move(lang);
  doc.text = std::move(text);
  return doc;
}

bool operator==(const EntitySpan& a, const EntitySpan& b) {
  return a.doc_id == b.doc_id && a.entity_type == b.entity_type && a.start == b.start &&
         a.end == b.end;
}

bool span_less(const EntitySpan& a, const EntitySpan& b) {
  return std::tie(a.doc_id, a.start, a.end, a.entity_type) <
         std::tie(b.doc_id, b.start, b.end, b.entity_type);
}

char label_char(Label l) {
  switch (l) {
    case Label::B: return 'B';
    case Label::I: return 'I';
    case Label::O: return 'O';
  }
  return '?';
}

std::string labels_to_string(std::span<const Label> labels) {
  std::string s;
  s.reserve(labels.size());
  for (Label l : labels) s.push_back(label_char(l));
  return s;
}

LabelSeq labels_from_string(std::string_view s) {
  LabelSeq out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case 'B': out.push_back(Label::B); break;
      case 'I': out.push_back(Label::I); break;
      case 'O': out.push_back(Label::O); break;
      case ' ': break;
      default: throw Error(std::string("bad label character '") + c + "'");
    }
  }
  return out;
}

TokenizedDocument tokenize(const Document& doc) {
  TokenizedDocument out{&doc, {}};
  const auto& cs = doc.chars;
  std::size_t i = 0;
  while (i < cs.size()) {
    if (unicode::is_space(cs[i])) {
      ++i;
    } else if (unicode::is_alnum(cs[i])) {
      std::size_t j = i + 1;
      while (j < cs.size() && unicode::is_alnum(cs[j])) ++j;
      out.tokens.push_back({i, j});
      i = j;
    } else {
      out.tokens.push_back({i, i + 1});
      ++i;
    }
  }
  return out;
}

void validate_tokens(const Document& doc, std::span<const Token> tokens) {
  std::size_t prev_end = 0;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const Token& t = tokens[k];
    if (t.start >= t.end || t.end > doc.length() || t.start < prev_end) {
      throw Error("document " + doc.id + ": token " + std::to_string(k) + " [" +
                  std::to_string(t.start) + "," + std::to_string(t.end) +
                  ") is empty, out of bounds or overlaps its predecessor");
    }
    prev_end = t.end;
  }
}

LabelSeq project_bio(const TokenizedDocument& tdoc, std::span<const EntitySpan> spans) {
  const std::size_t doc_len = tdoc.doc ? tdoc.doc->length() : 0;
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > doc_len) {
      throw Error("span " + (s.origin.empty() ? s.doc_id : s.origin) + " [" +
                  std::to_string(s.start) + "," + std::to_string(s.end) +
                  ") is outside document bounds");
    }
    if (s.entity_type != spans.front().entity_type) {
      throw Error("project_bio expects spans of a single entity type");
    }
  }

  // Priority order: longer first, then earlier start.
  std::vector<std::size_t> order(spans.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (spans[a].length() != spans[b].length()) return spans[a].length() > spans[b].length();
    return spans[a].start < spans[b].start;
  });

  const auto& toks = tdoc.tokens;
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(toks.size(), kNone);
  std::vector<std::size_t> first_token(spans.size(), kNone);
  for (std::size_t k : order) {
    const auto& s = spans[k];
    auto it = std::lower_bound(toks.begin(), toks.end(), s.start,
                               [](const Token& t, std::size_t pos) { return t.end <= pos; });
    for (; it != toks.end() && it->start < s.end; ++it) {
      const auto t = static_cast<std::size_t>(it - toks.begin());
      if (first_token[k] == kNone) first_token[k] = t;
      if (owner[t] == kNone) owner[t] = k;
    }
  }

  LabelSeq labels(toks.size(), Label::O);
  for (std::size_t t = 0; t < toks.size(); ++t) {
    if (owner[t] == kNone) continue;
    labels[t] = first_token[owner[t]] == t ? Label::B : Label::I;
  }
  return labels;
}

std::string canonical_entity_type(std::string_view type) {
  if (type == "DISEASE") return "DISORDER";
  return std::string(type);
}

bool is_entity_type_alias(std::string_view type) { return type == "DISEASE"; }

const Document* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &docs[it->second];
}

void Corpus::reindex() {
  index_.clear();
  for (std::size_t k = 0; k < docs.size(); ++k) {
    if (!index_.emplace(docs[k].id, k).second) {
      throw Error("duplicate document id " + docs[k].id);
    }
  }
}

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

template <typename F>
void for_each_json_line(const fs::path& path, F&& f) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(where(path, lineno) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) throw Error(where(path, lineno) + ": expected a JSON object");
    try {
      f(obj, lineno);
    } catch (const json::exception& e) {
      throw Error(where(path, lineno) + ": " + e.what());
    }
  }
}

std::size_t offset_field(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw Error(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

std::vector<Document> read_documents_jsonl(const fs::path& path) {
  std::vector<Document> docs;
  for_each_json_line(path, [&](const json& obj, std::size_t lineno) {
    try {
      docs.push_back(make_document(obj.at("id").get<std::string>(),
                                   obj.at("lang").get<std::string>(),
                                   obj.at("text").get<std::string>()));
    } catch (const Error& e) {
      throw Error(where(path, lineno) + ": " + e.what());
    }
  });
  return docs;
}

void write_documents_jsonl(const fs::path& path, std::span<const Document> docs) {
  auto out = open_output(path);
  for (const auto& d : docs) {
    out << json{{"id", d.id}, {"lang", d.lang}, {"text", d.text}}.dump() << '\n';
  }
}

std::vector<EntitySpan> read_spans_jsonl(const fs::path& path) {
  std::vector<EntitySpan> spans;
  for_each_json_line(path, [&](const json& obj, std::size_t lineno) {
    EntitySpan s;
    try {
      s.doc_id = obj.at("doc_id").get<std::string>();
      s.entity_type = obj.at("type").get<std::string>();
      s.start = offset_field(obj, "start");
      s.end = offset_field(obj, "end");
    } catch (const Error& e) {
      throw Error(where(path, lineno) + ": " + e.what());
    }
    if (auto it = obj.find("surface"); it != obj.end() && !it->is_null()) {
      s.surface = it->get<std::string>();
    }
    s.origin = where(path, lineno);
    spans.push_back(std::move(s));
  });
  return spans;
}

void write_spans_jsonl(const fs::path& path, std::span<const EntitySpan> spans,
                       const Corpus& docs) {
  auto out = open_output(path);
  for (const auto& s : spans) {
    std::string surface;
    if (s.surface) {
      surface = *s.surface;
    } else if (const Document* d = docs.find(s.doc_id)) {
      surface = d->slice(s.start, s.end);
    }
    json obj{{"doc_id", s.doc_id}, {"type", s.entity_type}, {"start", s.start},
             {"end", s.end}, {"surface", surface}};
    out << obj.dump() << '\n';
  }
}

std::vector<EntitySpan> read_brat(std::istream& in, const std::string& doc_id,
                                  const std::string& source_name) {
  std::vector<EntitySpan> spans;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] != 'T') continue;
    const std::string loc = source_name + ":" + std::to_string(lineno);
    const auto tab1 = line.find('\t');
    if (tab1 == std::string::npos) throw Error(loc + ": missing tab after annotation id");
    const auto tab2 = line.find('\t', tab1 + 1);
    const std::string id = line.substr(0, tab1);
    const std::string body =
        line.substr(tab1 + 1, tab2 == std::string::npos ? std::string::npos : tab2 - tab1 - 1);
    if (body.find(';') != std::string::npos) {
      throw Error(loc + ": discontinuous span in " + id + " is not supported");
    }
    std::istringstream fields(body);
    EntitySpan s;
    long long start = -1;
    long long end = -1;
    std::string rest;
    if (!(fields >> s.entity_type >> start >> end) || (fields >> rest) || start < 0 || end < 0) {
      throw Error(loc + ": expected '<TYPE> <start> <end>' in " + id);
    }
    s.doc_id = doc_id;
    s.start = static_cast<std::size_t>(start);
    s.end = static_cast<std::size_t>(end);
    if (tab2 != std::string::npos) s.surface = line.substr(tab2 + 1);
    s.origin = loc + " " + id;
    spans.push_back(std::move(s));
  }
  return spans;
}

std::vector<EntitySpan> read_brat_path(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ann") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::vector<EntitySpan> spans;
  for (const auto& f : files) {
    auto in = open_input(f);
    auto part = read_brat(in, f.stem().string(), f.filename().string());
    spans.insert(spans.end(), std::make_move_iterator(part.begin()),
                 std::make_move_iterator(part.end()));
  }
  return spans;
}

void validate_spans(const Corpus& corpus, std::span<const EntitySpan> spans) {
  for (const auto& s : spans) {
    const std::string name = s.origin.empty() ? "span in " + s.doc_id : s.origin;
    const Document* doc = corpus.find(s.doc_id);
    if (!doc) throw Error(name + ": unknown document " + s.doc_id);
    if (s.start >= s.end || s.end > doc->length()) {
      throw Error(name + ": offsets [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                  ") out of bounds for document " + s.doc_id + " of length " +
                  std::to_string(doc->length()));
    }
    if (s.surface && *s.surface != doc->slice(s.start, s.end)) {
      throw Error(name + ": surface \"" + *s.surface + "\" does not match text \"" +
                  doc->slice(s.start, s.end) + "\"");
    }
  }
}

std::vector<EntitySpan> read_annotations(const fs::path& path) {
  if (fs::is_directory(path) || path.extension() == ".ann") return read_brat_path(path);
  return read_spans_jsonl(path);
}

Corpus load_corpus(const fs::path& docs_path, const fs::path& anns_path) {
  Corpus corpus;
  corpus.docs = read_documents_jsonl(docs_path);
  corpus.reindex();
  corpus.spans = read_annotations(anns_path);
  validate_spans(corpus, corpus.spans);
  return corpus;
}

std::vector<EntitySpan> spans_of_type(std::span<const EntitySpan> spans, std::string_view type) {
  const std::string want = canonical_entity_type(type);
  std::vector<EntitySpan> out;
  for (const auto& s : spans) {
    if (canonical_entity_type(s.entity_type) == want) out.push_back(s);
  }
  return out;
}

}  // namespace spantag
