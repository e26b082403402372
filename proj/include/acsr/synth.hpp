#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "acsr/ctc.hpp"
#include "acsr/features.hpp"
#include "acsr/segmentation.hpp"

namespace acsr {

/// Parameters of the synthetic cued-speech corpus. Hand gestures start
/// `anticipation` frames before the matching lip gesture.
struct SynthConfig {
  int phone_count = 36;
  int train_utterances = 200;
  int test_utterances = 40;
  double frames_per_phone = 10.0;
  double frames_per_phone_jitter = 3.0;
  double anticipation = 6.0;  // frames
  double anticipation_jitter = 2.0;
  double noise_sigma = 0.3;
  double rate = kDefaultFrameRate;
  int vocabulary_size = 60;
  double homophone_fraction = 0.2;
  int successors_per_word = 6;
  double end_probability = 0.25;
  int transition_frames = 2;  // hand-position frames coded as a transition state
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
/// Missing fields keep their defaults.
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SynthUtterance {
  std::string id;
  std::string split;  // "train" or "test"
  StreamBundle streams;
  LabelSequence phones;
  std::vector<std::string> words;
  Segmentation lips_truth;
  Segmentation hand_truth;  // hand_shape modality
  LandmarkSequence landmarks;  // irregularly sampled rendering of the same utterance
};

/// Word-level bigram generator behind the corpus, also exported as ARPA.
struct SynthLanguage {
  std::vector<std::string> words;
  std::map<std::string, LabelSequence> pronunciations;
  /// successors[context] -> (word or "</s>", probability); context "<s>" starts a sentence.
  std::map<std::string, std::vector<std::pair<std::string, double>>> successors;
};

struct SynthCorpus {
  SynthConfig config;
  PhoneInventory inventory;
  SynthLanguage language;
  std::vector<SynthUtterance> utterances;
};

SynthCorpus synth_corpus(const SynthConfig& config);

/// Backoff bigram in ARPA text: the generator's transitions discounted by
/// `discount`, with unigram backoff estimated from the training sentences.
std::string synth_arpa(const SynthCorpus& corpus, double discount = 0.05);
/// Lexicon lines `word<TAB>phone phone ...`.
std::string synth_lexicon(const SynthCorpus& corpus);
/// Manual-annotation style TSV (`tier start_ms end_ms label`) for one utterance.
std::string synth_annotation_tsv(const SynthUtterance& utt, const PhoneInventory& inventory, double rate);

/// 36 French phone symbols (or generic names for other sizes).
PhoneInventory default_inventory(int phone_count);

}  // namespace acsr
