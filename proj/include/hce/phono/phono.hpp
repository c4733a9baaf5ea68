#pragma once

// Cantonese readings from UniHan: parsing, onset/nucleus/coda segmentation,
// traditional/simplified classification and the three train/test scenarios.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hce/common/error.hpp"
#include "hce/common/rng.hpp"

namespace hce::phono {

/// Empty onset or coda.
inline constexpr std::string_view kNull = "#";

struct Syllable {
  std::string onset;
  std::string nucleus;
  std::string coda;

  /// Concatenation without null markers, i.e. the toneless jyutping.
  std::string joined() const;
  /// "f ui #"
  std::string spaced() const;

  friend bool operator==(const Syllable&, const Syllable&) = default;
};

class SegmentationError : public DataError {
 public:
  using DataError::DataError;
};

std::span<const std::string_view> onset_inventory();
std::span<const std::string_view> coda_inventory();

/// Removes a trailing tone digit (1-6) if present.
std::string_view strip_tone(std::string_view s);

/// Splits one jyutping syllable. Onsets use maximal munch ("ng", "gw", "kw"
/// first); glides stay in the nucleus; "m"/"ng" alone are syllabic nuclei.
Syllable segment_jyutping(std::string_view s);

using ReadingMap = std::map<char32_t, std::vector<std::string>>;

struct ParseStats {
  std::size_t malformed_lines = 0;
};

/// Reads `U+XXXX<TAB>field<TAB>values` lines keeping only `field`.
ReadingMap parse_unihan_field(std::istream& in, std::string_view field, ParseStats* stats = nullptr);
ReadingMap parse_unihan_readings(const std::filesystem::path& path, ParseStats* stats = nullptr);

/// Uniform pick; throws DataError on an empty list.
const std::string& pick_reading(std::span<const std::string> readings, Rng& rng);

struct VariantMap {
  std::map<char32_t, std::vector<char32_t>> simplified;   // kSimplifiedVariant
  std::map<char32_t, std::vector<char32_t>> traditional;  // kTraditionalVariant
  /// Characters listed as a differing simplified variant of some character.
  std::set<char32_t> simplified_forms;

  void rebuild_index();
};

VariantMap parse_unihan_variants(std::istream& in, ParseStats* stats = nullptr);
VariantMap load_unihan_variants(const std::filesystem::path& path, ParseStats* stats = nullptr);

enum class ScriptClass { kTraditional, kSimplified, kShared };

const char* to_string(ScriptClass c);

ScriptClass classify_script(char32_t ch, const VariantMap& variants);

struct PronEntry {
  char32_t ch = 0;
  Syllable pron;
  ScriptClass script = ScriptClass::kShared;

  friend bool operator==(const PronEntry&, const PronEntry&) = default;
};

struct CorpusStats {
  std::size_t characters = 0;
  std::size_t dropped_readings = 0;  // unsegmentable picks
};

/// One entry per character: a seeded random reading, segmented and classified.
std::vector<PronEntry> build_corpus(const ReadingMap& readings, const VariantMap& variants,
                                    std::uint64_t seed, CorpusStats* stats = nullptr);

struct ScenarioSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// Table sizes: 1 → 16000/2400/2400, 2 → 16000/2400/2400, 3 → 2302/200/2400.
ScenarioSizes table_sizes(int scenario);

enum class Partition { kTrain, kValidation, kTest };
const char* to_string(Partition p);
Partition parse_partition(std::string_view s);

struct DatasetSplit {
  int scenario = 1;
  std::uint64_t seed = 0;
  std::vector<PronEntry> train;
  std::vector<PronEntry> validation;
  std::vector<PronEntry> test;

  const std::vector<PronEntry>& part(Partition p) const;
};

/// Traditional counterpart used for scenario 3 pairing: the first differing
/// kTraditionalVariant, else the lowest codepoint listing `simplified` as its
/// kSimplifiedVariant. Returns 0 if none.
char32_t traditional_counterpart(char32_t simplified, const VariantMap& variants);

/// Scenario 1: random mixed split. Scenario 2: test drawn from simplified
/// characters, train/validation from the rest. Scenario 3: test drawn from
/// simplified characters with a traditional counterpart in the corpus;
/// train/validation are those counterparts. Validation and test sizes are
/// honoured exactly; train takes up to `sizes.train` of what remains.
DatasetSplit build_scenario(std::span<const PronEntry> corpus, int scenario, ScenarioSizes sizes,
                            std::uint64_t seed, const VariantMap& variants);

/// CSV with header `char,onset,nucleus,coda,partition`.
void write_split_csv(std::ostream& out, const DatasetSplit& split);
void write_split_csv(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_split_csv(std::istream& in);
DatasetSplit read_split_csv(const std::filesystem::path& path);

}  // namespace hce::phono
