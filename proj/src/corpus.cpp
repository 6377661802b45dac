#include "modaudit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace modaudit {

using nlohmann::json;

const char* to_string(GoldLabel label) {
  return label == GoldLabel::benign ? "benign" : "toxic";
}

LabelAliases default_label_aliases() {
  // Unifies the label vocabularies of common toxicity datasets (hate speech /
  // offensive / toxic and their negations) onto {benign, toxic}.
  return LabelAliases{
      {"benign", GoldLabel::benign},     {"non-toxic", GoldLabel::benign},
      {"nontoxic", GoldLabel::benign},   {"non_toxic", GoldLabel::benign},
      {"not_offensive", GoldLabel::benign}, {"non-offensive", GoldLabel::benign},
      {"not_hate", GoldLabel::benign},   {"safe", GoldLabel::benign},
      {"normal", GoldLabel::benign},     {"neutral", GoldLabel::benign},
      {"0", GoldLabel::benign},          {"false", GoldLabel::benign},
      {"toxic", GoldLabel::toxic},       {"hate", GoldLabel::toxic},
      {"hate_speech", GoldLabel::toxic}, {"hateful", GoldLabel::toxic},
      {"offensive", GoldLabel::toxic},   {"abusive", GoldLabel::toxic},
      {"1", GoldLabel::toxic},           {"true", GoldLabel::toxic},
  };
}

namespace {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim_ascii(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& what) {
  throw CorpusError(path + ":" + std::to_string(line) + ": " + what);
}

GoldLabel map_label(const std::string& raw, const LabelAliases& aliases, const std::string& path,
                    std::size_t line) {
  auto it = aliases.find(to_lower(trim_ascii(raw)));
  if (it == aliases.end()) fail(path, line, "unknown label value '" + raw + "'");
  return it->second;
}

std::string default_source(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

void check_record(LabeledComment& rec, const std::string& path, std::size_t line) {
  if (rec.id.empty()) fail(path, line, "record has empty id");
  if (chunk_count(rec.text) == 0) fail(path, line, "record text is empty");
  if (rec.offensive_terms) {
    for (auto& term : *rec.offensive_terms) {
      term = trim_ascii(term);
      if (term.empty()) fail(path, line, "offensive_terms contains an empty entry");
    }
  }
}

std::vector<LabeledComment> load_jsonl(const std::string& path, const LabelAliases& aliases) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  std::vector<LabeledComment> out;
  std::string line;
  std::size_t line_no = 0;
  const std::string source = default_source(path);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_ascii(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      fail(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) fail(path, line_no, "record is not a JSON object");
    LabeledComment rec;
    try {
      const auto& id = obj.at("id");
      if (id.is_string()) {
        rec.id = id.get<std::string>();
      } else if (id.is_number_integer()) {
        rec.id = std::to_string(id.get<long long>());
      } else {
        fail(path, line_no, "id must be a string or integer");
      }
      const auto& text = obj.at("text");
      if (!text.is_string()) fail(path, line_no, "text must be a string");
      rec.text = text.get<std::string>();
      const auto& label = obj.at("label");
      std::string label_str;
      if (label.is_string()) {
        label_str = label.get<std::string>();
      } else if (label.is_boolean()) {
        label_str = label.get<bool>() ? "true" : "false";
      } else if (label.is_number_integer()) {
        label_str = std::to_string(label.get<long long>());
      } else {
        fail(path, line_no, "label must be a string, boolean, or integer");
      }
      rec.gold_label = map_label(label_str, aliases, path, line_no);
      if (obj.contains("offensive_terms")) {
        const auto& terms = obj.at("offensive_terms");
        if (!terms.is_array()) fail(path, line_no, "offensive_terms must be an array");
        std::vector<std::string> list;
        for (const auto& t : terms) {
          if (!t.is_string()) fail(path, line_no, "offensive_terms entries must be strings");
          list.push_back(t.get<std::string>());
        }
        rec.offensive_terms = std::move(list);
      }
      rec.source = obj.value("source", source);
    } catch (const json::out_of_range& e) {
      fail(path, line_no, std::string("missing required field: ") + e.what());
    }
    check_record(rec, path, line_no);
    out.push_back(std::move(rec));
  }
  return out;
}

// RFC 4180 field scanner: handles quoted fields, doubled quotes, and
// newlines inside quotes. Returns one row per record.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // Reads one record; false on clean EOF. Tracks the starting line number.
  bool next(std::vector<std::string>& row, std::size_t& start_line) {
    row.clear();
    int c = in_.get();
    while (c == '\n') {  // skip blank lines
      ++line_;
      c = in_.get();
    }
    if (c == EOF) return false;
    start_line = line_;
    std::string field;
    bool quoted = false;
    for (;; c = in_.get()) {
      if (quoted) {
        if (c == EOF) throw CorpusError("unterminated quoted CSV field starting at line " +
                                        std::to_string(start_line));
        if (c == '"') {
          int peek = in_.peek();
          if (peek == '"') {
            field.push_back('"');
            in_.get();
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(static_cast<char>(c));
        }
        continue;
      }
      if (c == '"' && field.empty()) {
        quoted = true;
      } else if (c == ',') {
        row.push_back(std::move(field));
        field.clear();
      } else if (c == '\n' || c == EOF) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        row.push_back(std::move(field));
        if (c == '\n') ++line_;
        return true;
      } else {
        field.push_back(static_cast<char>(c));
      }
    }
  }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

std::vector<LabeledComment> load_csv(const std::string& path, const LabelAliases& aliases) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  CsvReader reader(in);
  std::vector<std::string> row;
  std::size_t line_no = 0;
  if (!reader.next(row, line_no)) return {};  // empty file

  int id_col = -1, text_col = -1, label_col = -1;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const std::string name = to_lower(trim_ascii(row[i]));
    if (name == "id") id_col = static_cast<int>(i);
    if (name == "text") text_col = static_cast<int>(i);
    if (name == "label") label_col = static_cast<int>(i);
  }
  if (id_col < 0 || text_col < 0 || label_col < 0)
    fail(path, line_no, "CSV header must contain id, text, and label columns");

  std::vector<LabeledComment> out;
  const std::string source = default_source(path);
  const std::size_t width = row.size();
  while (reader.next(row, line_no)) {
    if (row.size() != width)
      fail(path, line_no, "expected " + std::to_string(width) + " fields, got " +
                              std::to_string(row.size()));
    LabeledComment rec;
    rec.id = row[static_cast<std::size_t>(id_col)];
    rec.text = row[static_cast<std::size_t>(text_col)];
    rec.gold_label = map_label(row[static_cast<std::size_t>(label_col)], aliases, path, line_no);
    rec.source = source;
    check_record(rec, path, line_no);
    out.push_back(std::move(rec));
  }
  return out;
}

void reject_duplicate_ids(const std::vector<LabeledComment>& corpus, const std::string& path) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(corpus.size());
  for (const auto& rec : corpus) {
    if (!seen.insert(rec.id).second)
      throw CorpusError(path + ": duplicate id '" + rec.id + "'");
  }
}

bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680:
    case 0x2000: case 0x2001: case 0x2002: case 0x2003: case 0x2004:
    case 0x2005: case 0x2006: case 0x2007: case 0x2008: case 0x2009:
    case 0x200A: case 0x2028: case 0x2029: case 0x202F: case 0x205F:
    case 0x3000:
      return true;
    default:
      return false;
  }
}

// Decodes the next UTF-8 codepoint; malformed bytes come back as-is so they
// count as ordinary (non-space) characters.
char32_t next_codepoint(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return b0;
  }
  if (i + len > s.size()) {
    ++i;
    return b0;
  }
  for (std::size_t k = 1; k < len; ++k) {
    unsigned char bk = byte(i + k);
    if ((bk & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (bk & 0x3F);
  }
  i += len;
  return cp;
}

// Unbiased uniform draw from [0, n) via rejection; deterministic across
// platforms for a fixed engine state.
std::size_t bounded_rand(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

}  // namespace

std::vector<LabeledComment> load_corpus(const std::string& path, CorpusFormat format,
                                        const LabelAliases& aliases) {
  auto corpus = format == CorpusFormat::jsonl ? load_jsonl(path, aliases) : load_csv(path, aliases);
  reject_duplicate_ids(corpus, path);
  return corpus;
}

std::size_t chunk_count(std::string_view text) {
  std::size_t count = 0;
  bool in_chunk = false;
  std::size_t i = 0;
  while (i < text.size()) {
    const bool space = is_unicode_space(next_codepoint(text, i));
    if (!space && !in_chunk) ++count;
    in_chunk = !space;
  }
  return count;
}

std::vector<std::size_t> seeded_sample_indices(std::size_t population, std::size_t sample_size,
                                               std::uint64_t seed) {
  if (sample_size >= population) {
    std::vector<std::size_t> all(population);
    for (std::size_t i = 0; i < population; ++i) all[i] = i;
    return all;
  }
  std::vector<std::size_t> pool(population);
  for (std::size_t i = 0; i < population; ++i) pool[i] = i;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first sample_size slots become the sample.
  for (std::size_t i = 0; i < sample_size; ++i) {
    std::size_t j = i + bounded_rand(rng, population - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(sample_size);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<LabeledComment> filter_cohort(const std::vector<LabeledComment>& corpus,
                                          const CohortFilter& filter) {
  if (filter.max_chunks && *filter.max_chunks < 1)
    throw std::invalid_argument("CohortFilter.max_chunks must be >= 1");
  if (filter.max_size && *filter.max_size < 1)
    throw std::invalid_argument("CohortFilter.max_size must be >= 1");
  if (filter.require_no_offensive_terms) {
    for (const auto& rec : corpus) {
      if (!rec.offensive_terms)
        throw CorpusError("record '" + rec.id +
                          "' has no offensive-term annotation but the filter requires one");
    }
  }

  std::vector<std::size_t> matched;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& rec = corpus[i];
    if (filter.require_benign && rec.gold_label != GoldLabel::benign) continue;
    if (filter.require_no_offensive_terms && !rec.offensive_terms->empty()) continue;
    if (filter.max_chunks && chunk_count(rec.text) >= *filter.max_chunks) continue;
    matched.push_back(i);
  }

  if (filter.max_size && matched.size() > *filter.max_size) {
    auto picks = seeded_sample_indices(matched.size(), *filter.max_size, filter.seed);
    std::vector<std::size_t> sampled;
    sampled.reserve(picks.size());
    for (std::size_t p : picks) sampled.push_back(matched[p]);
    matched = std::move(sampled);
  }

  std::vector<LabeledComment> out;
  out.reserve(matched.size());
  for (std::size_t i : matched) out.push_back(corpus[i]);
  return out;
}

void write_cohort_manifest(const std::string& path, const std::vector<LabeledComment>& cohort,
                           const CohortFilter& filter, std::size_t input_size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write cohort manifest: " + path);
  json header = {
      {"filter",
       {{"require_benign", filter.require_benign},
        {"require_no_offensive_terms", filter.require_no_offensive_terms},
        {"max_chunks", filter.max_chunks ? json(*filter.max_chunks) : json()},
        {"max_size", filter.max_size ? json(*filter.max_size) : json()}}},
      {"seed", filter.seed},
      {"counts", {{"input", input_size}, {"returned", cohort.size()}}},
  };
  out << header.dump() << "\n";
  for (const auto& rec : cohort) out << json{{"id", rec.id}}.dump() << "\n";
}

CohortManifest read_cohort_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open cohort manifest: " + path);
  CohortManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_ascii(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      fail(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (line_no == 1 && obj.contains("counts")) {
      manifest.seed = obj.value("seed", 0ULL);
      manifest.input_size = obj["counts"].value("input", 0ULL);
      continue;
    }
    manifest.ids.push_back(obj.at("id").get<std::string>());
  }
  return manifest;
}

std::vector<LabeledComment> select_by_ids(const std::vector<LabeledComment>& corpus,
                                          const std::vector<std::string>& ids) {
  std::unordered_map<std::string_view, const LabeledComment*> by_id;
  by_id.reserve(corpus.size());
  for (const auto& rec : corpus) by_id.emplace(rec.id, &rec);
  std::vector<LabeledComment> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw CorpusError("id not present in corpus: " + id);
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace modaudit
