#include "hce/phono/phono.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "hce/common/utf8.hpp"

namespace hce::phono {

namespace {

constexpr std::string_view kOnsets[] = {"ng", "gw", "kw", "b", "p", "m", "f", "d", "t", "n",
                                        "l",  "g",  "k",  "h", "w", "z", "c", "s", "j"};
constexpr std::string_view kCodas[] = {"ng", "m", "n", "p", "t", "k"};

bool is_vowel_string(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
  });
}

bool is_syllabic_nasal(std::string_view s) { return s == "m" || s == "ng"; }

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace

std::string Syllable::joined() const {
  std::string out;
  if (onset != kNull) out += onset;
  out += nucleus;
  if (coda != kNull) out += coda;
  return out;
}

std::string Syllable::spaced() const { return onset + " " + nucleus + " " + coda; }

std::span<const std::string_view> onset_inventory() { return kOnsets; }
std::span<const std::string_view> coda_inventory() { return kCodas; }

std::string_view strip_tone(std::string_view s) {
  if (!s.empty() && s.back() >= '1' && s.back() <= '6') s.remove_suffix(1);
  return s;
}

Syllable segment_jyutping(std::string_view raw) {
  const std::string_view s = strip_tone(raw);
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; })) {
    throw SegmentationError("malformed jyutping syllable '" + std::string(raw) + "'");
  }
  if (is_syllabic_nasal(s)) return {std::string(kNull), std::string(s), std::string(kNull)};

  Syllable out{std::string(kNull), "", std::string(kNull)};
  std::string_view rest = s;
  for (auto o : kOnsets) {
    if (rest.size() > o.size() && rest.substr(0, o.size()) == o) {
      out.onset = o;
      rest.remove_prefix(o.size());
      break;
    }
  }
  for (auto k : kCodas) {
    if (rest.size() > k.size() && rest.substr(rest.size() - k.size()) == k) {
      out.coda = k;
      rest.remove_suffix(k.size());
      break;
    }
  }
  if (!is_vowel_string(rest) && !is_syllabic_nasal(rest)) {
    throw SegmentationError("cannot segment jyutping syllable '" + std::string(raw) +
                            "': nucleus '" + std::string(rest) + "' is not a vowel or syllabic nasal");
  }
  out.nucleus = rest;
  return out;
}

ReadingMap parse_unihan_field(std::istream& in, std::string_view field, ParseStats* stats) {
  ReadingMap out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 3) {
      if (stats) ++stats->malformed_lines;
      continue;
    }
    if (cols[1] != field) continue;
    char32_t cp = 0;
    if (!utf8::parse_ucs_notation(cols[0], cp)) {
      if (stats) ++stats->malformed_lines;
      continue;
    }
    auto& list = out[cp];
    for (auto v : split_on(cols[2], ' ')) {
      if (!v.empty()) list.emplace_back(v);
    }
  }
  return out;
}

ReadingMap parse_unihan_readings(const std::filesystem::path& path, ParseStats* stats) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open UniHan readings '" + path.string() + "'");
  return parse_unihan_field(in, "kCantonese", stats);
}

const std::string& pick_reading(std::span<const std::string> readings, Rng& rng) {
  if (readings.empty()) throw DataError("cannot pick a reading from an empty list");
  return readings[rng.uniform_index(readings.size())];
}

void VariantMap::rebuild_index() {
  simplified_forms.clear();
  for (const auto& [t, forms] : simplified) {
    for (char32_t s : forms) {
      if (s != t) simplified_forms.insert(s);
    }
  }
}

VariantMap parse_unihan_variants(std::istream& in, ParseStats* stats) {
  VariantMap vm;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 3) {
      if (stats) ++stats->malformed_lines;
      continue;
    }
    const bool simp = cols[1] == "kSimplifiedVariant";
    const bool trad = cols[1] == "kTraditionalVariant";
    if (!simp && !trad) continue;
    char32_t cp = 0;
    if (!utf8::parse_ucs_notation(cols[0], cp)) {
      if (stats) ++stats->malformed_lines;
      continue;
    }
    std::vector<char32_t> targets;
    for (auto v : split_on(cols[2], ' ')) {
      v = v.substr(0, v.find('<'));  // drop "<kSource" annotations
      char32_t t = 0;
      if (utf8::parse_ucs_notation(v, t)) targets.push_back(t);
      else if (stats) ++stats->malformed_lines;
    }
    (simp ? vm.simplified : vm.traditional)[cp] = std::move(targets);
  }
  vm.rebuild_index();
  return vm;
}

VariantMap load_unihan_variants(const std::filesystem::path& path, ParseStats* stats) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open UniHan variants '" + path.string() + "'");
  return parse_unihan_variants(in, stats);
}

const char* to_string(ScriptClass c) {
  switch (c) {
    case ScriptClass::kTraditional: return "traditional";
    case ScriptClass::kSimplified: return "simplified";
    case ScriptClass::kShared: return "shared";
  }
  return "?";
}

ScriptClass classify_script(char32_t ch, const VariantMap& variants) {
  if (variants.simplified_forms.count(ch)) return ScriptClass::kSimplified;
  auto it = variants.simplified.find(ch);
  if (it != variants.simplified.end() &&
      std::any_of(it->second.begin(), it->second.end(), [ch](char32_t s) { return s != ch; })) {
    return ScriptClass::kTraditional;
  }
  return ScriptClass::kShared;
}

std::vector<PronEntry> build_corpus(const ReadingMap& readings, const VariantMap& variants,
                                    std::uint64_t seed, CorpusStats* stats) {
  Rng rng(seed);
  std::vector<PronEntry> out;
  out.reserve(readings.size());
  for (const auto& [ch, list] : readings) {
    if (list.empty()) continue;
    const std::string& pick = pick_reading(list, rng);
    try {
      out.push_back(PronEntry{ch, segment_jyutping(pick), classify_script(ch, variants)});
    } catch (const SegmentationError&) {
      if (stats) ++stats->dropped_readings;
    }
  }
  if (stats) stats->characters = out.size();
  return out;
}

ScenarioSizes table_sizes(int scenario) {
  switch (scenario) {
    case 1:
    case 2: return {16000, 2400, 2400};
    case 3: return {2302, 200, 2400};
  }
  throw ValidationError("scenario must be 1, 2 or 3 (got " + std::to_string(scenario) + ")");
}

const char* to_string(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kValidation: return "validation";
    case Partition::kTest: return "test";
  }
  return "?";
}

Partition parse_partition(std::string_view s) {
  if (s == "train") return Partition::kTrain;
  if (s == "validation" || s == "valid" || s == "dev") return Partition::kValidation;
  if (s == "test") return Partition::kTest;
  throw ValidationError("unknown partition '" + std::string(s) + "'");
}

const std::vector<PronEntry>& DatasetSplit::part(Partition p) const {
  switch (p) {
    case Partition::kTrain: return train;
    case Partition::kValidation: return validation;
    case Partition::kTest: return test;
  }
  return train;
}

char32_t traditional_counterpart(char32_t simplified, const VariantMap& variants) {
  if (auto it = variants.traditional.find(simplified); it != variants.traditional.end()) {
    for (char32_t t : it->second) {
      if (t != simplified) return t;
    }
  }
  for (const auto& [t, forms] : variants.simplified) {  // ordered by codepoint
    if (t != simplified && std::find(forms.begin(), forms.end(), simplified) != forms.end()) return t;
  }
  return 0;
}

namespace {

void require(std::size_t have, std::size_t need, const std::string& what) {
  if (have < need) {
    throw DataError("insufficient characters for " + what + ": need " + std::to_string(need) +
                    ", have " + std::to_string(have));
  }
}

}  // namespace

DatasetSplit build_scenario(std::span<const PronEntry> corpus, int scenario, ScenarioSizes sizes,
                            std::uint64_t seed, const VariantMap& variants) {
  table_sizes(scenario);  // validates the scenario id
  DatasetSplit split;
  split.scenario = scenario;
  split.seed = seed;
  Rng rng(seed);

  auto take = [](std::vector<PronEntry>& pool, std::size_t& cursor, std::size_t n) {
    std::vector<PronEntry> out(pool.begin() + static_cast<std::ptrdiff_t>(cursor),
                               pool.begin() + static_cast<std::ptrdiff_t>(cursor + n));
    cursor += n;
    return out;
  };

  if (scenario == 1) {
    std::vector<PronEntry> pool(corpus.begin(), corpus.end());
    require(pool.size(), sizes.test + sizes.validation + 1, "scenario 1");
    rng.shuffle(std::span(pool));
    std::size_t cur = 0;
    split.test = take(pool, cur, sizes.test);
    split.validation = take(pool, cur, sizes.validation);
    split.train = take(pool, cur, std::min(sizes.train, pool.size() - cur));
  } else if (scenario == 2) {
    std::vector<PronEntry> simp, rest;
    for (const auto& e : corpus) (e.script == ScriptClass::kSimplified ? simp : rest).push_back(e);
    require(simp.size(), sizes.test, "scenario 2 simplified test set");
    require(rest.size(), sizes.validation + 1, "scenario 2 non-simplified train/validation");
    rng.shuffle(std::span(simp));
    rng.shuffle(std::span(rest));
    std::size_t cs = 0, cr = 0;
    split.test = take(simp, cs, sizes.test);
    split.validation = take(rest, cr, sizes.validation);
    split.train = take(rest, cr, std::min(sizes.train, rest.size() - cr));
  } else {
    std::map<char32_t, const PronEntry*> by_char;
    for (const auto& e : corpus) by_char[e.ch] = &e;
    std::vector<PronEntry> simp;
    std::set<char32_t> trad_chars;
    for (const auto& e : corpus) {
      if (e.script != ScriptClass::kSimplified) continue;
      const char32_t t = traditional_counterpart(e.ch, variants);
      auto it = by_char.find(t);
      if (t == 0 || it == by_char.end() || it->second->script == ScriptClass::kSimplified) continue;
      simp.push_back(e);
      trad_chars.insert(t);
    }
    std::vector<PronEntry> trad;
    for (char32_t t : trad_chars) trad.push_back(*by_char.at(t));
    require(simp.size(), sizes.test, "scenario 3 simplified test set");
    require(trad.size(), sizes.validation + 1, "scenario 3 traditional train/validation");
    rng.shuffle(std::span(simp));
    rng.shuffle(std::span(trad));
    std::size_t cs = 0, ct = 0;
    split.test = take(simp, cs, sizes.test);
    split.validation = take(trad, ct, sizes.validation);
    split.train = take(trad, ct, std::min(sizes.train, trad.size() - ct));
  }
  return split;
}

void write_split_csv(std::ostream& out, const DatasetSplit& split) {
  out << "char,onset,nucleus,coda,partition\n";
  for (Partition p : {Partition::kTrain, Partition::kValidation, Partition::kTest}) {
    for (const auto& e : split.part(p)) {
      out << utf8::encode(e.ch) << ',' << e.pron.onset << ',' << e.pron.nucleus << ',' << e.pron.coda
          << ',' << to_string(p) << '\n';
    }
  }
}

void write_split_csv(const std::filesystem::path& path, const DatasetSplit& split) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split '" + path.string() + "'");
  write_split_csv(out, split);
}

DatasetSplit read_split_csv(std::istream& in) {
  DatasetSplit split;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "char,onset,nucleus,coda,partition") {
        throw DataError("split CSV must start with header 'char,onset,nucleus,coda,partition'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto cols = split_on(line, ',');
    if (cols.size() != 5) {
      throw DataError("split CSV line " + std::to_string(lineno) + ": expected 5 columns");
    }
    PronEntry e;
    try {
      e.ch = utf8::decode_one(cols[0]);
    } catch (const ParseError&) {
      throw DataError("split CSV line " + std::to_string(lineno) + ": first column must be one character");
    }
    e.pron = Syllable{std::string(cols[1]), std::string(cols[2]), std::string(cols[3])};
    switch (parse_partition(cols[4])) {
      case Partition::kTrain: split.train.push_back(std::move(e)); break;
      case Partition::kValidation: split.validation.push_back(std::move(e)); break;
      case Partition::kTest: split.test.push_back(std::move(e)); break;
    }
  }
  if (lineno == 0) throw DataError("split CSV is empty");
  return split;
}

DatasetSplit read_split_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split '" + path.string() + "'");
  return read_split_csv(in);
}

}  // namespace hce::phono
