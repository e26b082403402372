#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acsr/ctc.hpp"
#include "acsr/model.hpp"
#include "acsr/segmentation.hpp"

namespace acsr {

struct ManifestEntry {
  std::string id;
  std::string split = "train";
  std::filesystem::path landmarks;   // may be empty when streams are given
  std::filesystem::path streams;     // precomputed stream bundle (JSON), optional
  std::filesystem::path annotation;  // manual segmentation TSV, optional
  std::vector<std::string> phones;
  std::vector<std::string> words;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Paths are absolute (resolved against the manifest's directory) in memory
/// and relative to the manifest's directory on disk.
struct Manifest {
  std::vector<ManifestEntry> utterances;

  std::vector<const ManifestEntry*> split(const std::string& name) const;
  const ManifestEntry* find(const std::string& id) const;
  /// Unique ids, known splits, a landmark or stream file per utterance.
  void validate() const;
};

Manifest manifest_from_json(const nlohmann::json& doc, const std::filesystem::path& base);
nlohmann::json to_json(const Manifest& m, const std::filesystem::path& base);
/// Throws MalformedInput on a bad document or when a referenced file is missing.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

LabelSequence encode_phones(const std::vector<std::string>& symbols, const PhoneInventory& inventory);
std::vector<std::string> decode_phones(const LabelSequence& labels, const PhoneInventory& inventory);

/// Per-utterance transcripts: JSON lines {"id", "phones": [...], "words": [...]}.
struct Transcript {
  std::vector<std::string> phones;
  std::vector<std::string> words;
};
using TranscriptSet = std::map<std::string, Transcript>;
TranscriptSet read_transcripts_jsonl(const std::filesystem::path& path);
void write_transcripts_jsonl(const std::vector<std::pair<std::string, Transcript>>& rows,
                             const std::filesystem::path& path);

/// Heat map with time on the horizontal axis (x = query frame i, y = key
/// frame j), darker cells for higher scores, path cells outlined and one tick
/// per onset along the time axis.
std::string render_attention_svg(const AttentionMap& map, const AttentionPath& path, const std::vector<Onset>& onsets);

/// Two aligned tracks (automatic above, manual below). Automatic segments
/// that overlap a manual segment of the same phone are filled orange and the
/// overlapping spans are drawn between the tracks.
std::string render_segmentation_svg(const Segmentation& automatic, const Segmentation& manual,
                                    const PhoneInventory* inventory = nullptr);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace acsr
