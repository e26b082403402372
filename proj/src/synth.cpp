#include "acsr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "acsr/error.hpp"
#include "acsr/rng.hpp"

namespace acsr {

namespace {

constexpr int kLipFeatures = 20;
constexpr int kHandFeatures = 20;
constexpr int kPositionCodes = 8;  // 5 hand positions + 3 transition states
constexpr int kHandPositions = 5;
constexpr int kMaxSentenceWords = 12;

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sigma = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = sigma * rng.normal();
  return m;
}

int sample_index(Rng& rng, const std::vector<std::pair<std::string, double>>& dist) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    acc += dist[i].second;
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(dist.size()) - 1;
}

/// Fixed lifts from feature space to landmark coordinates.
struct LandmarkRenderer {
  Eigen::MatrixXd lip_map, hand_map;
  Eigen::VectorXd lip_base, hand_base;
  Eigen::MatrixXd position_centroids;  // kPositionCodes x 2

  explicit LandmarkRenderer(Rng& rng) {
    lip_map = gaussian(rng, kLipDim, kLipFeatures, 0.004);
    hand_map = gaussian(rng, kHandDim, kHandFeatures, 0.006);
    lip_base.resize(kLipDim);
    for (int p = 0; p < kLipPoints; ++p) {
      const double a = 2.0 * M_PI * p / kLipPoints;
      lip_base.segment<2>(2 * p) << 0.5 + 0.06 * std::cos(a), 0.72 + 0.025 * std::sin(a);
    }
    hand_base = gaussian(rng, kHandDim, 1, 0.04);
    position_centroids.resize(kPositionCodes, 2);
    // Side, cheek, chin, throat, mouth, then three in-between transition zones.
    position_centroids << 0.80, 0.70, 0.62, 0.62, 0.50, 0.86, 0.50, 1.05, 0.56, 0.74, 0.71, 0.66, 0.56, 0.95,
        0.65, 0.85;
  }
};

}  // namespace

void SynthConfig::validate() const {
  if (phone_count < 2 || train_utterances < 1 || test_utterances < 0 || vocabulary_size < 2)
    throw InvalidConfig("synthetic corpus needs >= 2 phones, >= 1 training utterance and >= 2 words");
  if (!(frames_per_phone >= 1) || !(frames_per_phone_jitter >= 0) || frames_per_phone_jitter >= frames_per_phone)
    throw InvalidConfig("frames per phone must be >= 1 and exceed its jitter");
  if (!(anticipation >= 0) || !(anticipation_jitter >= 0)) throw InvalidConfig("anticipation must be >= 0");
  if (!(noise_sigma >= 0) || !(rate > 0)) throw InvalidConfig("noise must be >= 0 and rate > 0");
  if (!(homophone_fraction >= 0 && homophone_fraction < 1)) throw InvalidConfig("homophone fraction must be in [0, 1)");
  if (successors_per_word < 1 || successors_per_word > vocabulary_size)
    throw InvalidConfig("successors per word must be in [1, vocabulary size]");
  if (!(end_probability > 0 && end_probability < 1)) throw InvalidConfig("end probability must be in (0, 1)");
  if (transition_frames < 0) throw InvalidConfig("transition frames must be >= 0");
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"phone_count", c.phone_count},
          {"train_utterances", c.train_utterances},
          {"test_utterances", c.test_utterances},
          {"frames_per_phone", c.frames_per_phone},
          {"frames_per_phone_jitter", c.frames_per_phone_jitter},
          {"anticipation", c.anticipation},
          {"anticipation_jitter", c.anticipation_jitter},
          {"noise_sigma", c.noise_sigma},
          {"rate", c.rate},
          {"vocabulary_size", c.vocabulary_size},
          {"homophone_fraction", c.homophone_fraction},
          {"successors_per_word", c.successors_per_word},
          {"end_probability", c.end_probability},
          {"transition_frames", c.transition_frames},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.phone_count = j.value("phone_count", c.phone_count);
    c.train_utterances = j.value("train_utterances", c.train_utterances);
    c.test_utterances = j.value("test_utterances", c.test_utterances);
    c.frames_per_phone = j.value("frames_per_phone", c.frames_per_phone);
    c.frames_per_phone_jitter = j.value("frames_per_phone_jitter", c.frames_per_phone_jitter);
    c.anticipation = j.value("anticipation", c.anticipation);
    c.anticipation_jitter = j.value("anticipation_jitter", c.anticipation_jitter);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.rate = j.value("rate", c.rate);
    c.vocabulary_size = j.value("vocabulary_size", c.vocabulary_size);
    c.homophone_fraction = j.value("homophone_fraction", c.homophone_fraction);
    c.successors_per_word = j.value("successors_per_word", c.successors_per_word);
    c.end_probability = j.value("end_probability", c.end_probability);
    c.transition_frames = j.value("transition_frames", c.transition_frames);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

PhoneInventory default_inventory(int phone_count) {
  static const std::vector<std::string> kFrench = {
      "a", "e", "E", "i", "o", "O", "u", "y", "2", "9", "@", "a~", "o~", "e~", "9~", "j", "w", "H",
      "p", "b", "t", "d", "k", "g", "f", "v", "s", "z", "S", "Z", "m", "n", "J", "N", "l", "R"};
  PhoneInventory inv;
  if (phone_count == static_cast<int>(kFrench.size())) {
    inv.phones = kFrench;
  } else {
    for (int i = 0; i < phone_count; ++i) {
      std::ostringstream name;
      name << 'p' << std::setw(2) << std::setfill('0') << i;
      inv.phones.push_back(name.str());
    }
  }
  return inv;
}

SynthCorpus synth_corpus(const SynthConfig& config) {
  config.validate();
  SynthCorpus corpus;
  corpus.config = config;
  corpus.inventory = default_inventory(config.phone_count);

  Rng root(config.seed);
  Rng proto_rng = root.split(1);
  Rng lang_rng = root.split(2);
  Rng render_rng = root.split(3);

  const int n_phones = config.phone_count;
  const Eigen::MatrixXd lip_proto = gaussian(proto_rng, n_phones, kLipFeatures);
  const Eigen::MatrixXd hand_proto = gaussian(proto_rng, n_phones, kHandFeatures);
  auto position_of = [](int phone_class) { return (phone_class - 1) % kHandPositions; };
  const LandmarkRenderer renderer(render_rng);

  // Vocabulary: random pronunciations (no immediate phone repeats), some homophones.
  auto& lang = corpus.language;
  const int homophones = static_cast<int>(std::round(config.homophone_fraction * config.vocabulary_size));
  std::set<LabelSequence> used;
  for (int w = 0; w < config.vocabulary_size; ++w) {
    std::ostringstream name;
    name << 'w' << std::setw(3) << std::setfill('0') << w;
    lang.words.push_back(name.str());
    LabelSequence pron;
    if (w >= config.vocabulary_size - homophones && w > 0) {
      pron = lang.pronunciations.at(lang.words[lang_rng.below(static_cast<std::uint64_t>(config.vocabulary_size - homophones))]);
    } else {
      do {
        pron.clear();
        const int len = 2 + static_cast<int>(lang_rng.below(3));
        while (static_cast<int>(pron.size()) < len) {
          const int p = 1 + static_cast<int>(lang_rng.below(static_cast<std::uint64_t>(n_phones)));
          if (pron.empty() || pron.back() != p) pron.push_back(p);
        }
      } while (!used.insert(pron).second);
    }
    lang.pronunciations[lang.words.back()] = pron;
  }
  auto make_successors = [&](bool allow_end) {
    std::vector<int> picks;
    while (static_cast<int>(picks.size()) < config.successors_per_word) {
      const int w = static_cast<int>(lang_rng.below(static_cast<std::uint64_t>(config.vocabulary_size)));
      if (std::find(picks.begin(), picks.end(), w) == picks.end()) picks.push_back(w);
    }
    std::sort(picks.begin(), picks.end());
    std::vector<double> weights;
    for (std::size_t i = 0; i < picks.size(); ++i) weights.push_back(lang_rng.uniform(0.5, 1.5));
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    const double mass = allow_end ? 1.0 - config.end_probability : 1.0;
    std::vector<std::pair<std::string, double>> dist;
    for (std::size_t i = 0; i < picks.size(); ++i)
      dist.emplace_back(lang.words[static_cast<std::size_t>(picks[i])], mass * weights[i] / total);
    if (allow_end) dist.emplace_back("</s>", config.end_probability);
    return dist;
  };
  lang.successors["<s>"] = make_successors(false);
  for (const auto& w : lang.words) lang.successors[w] = make_successors(true);

  const int total = config.train_utterances + config.test_utterances;
  for (int u = 0; u < total; ++u) {
    Rng rng = root.split(1000 + static_cast<std::uint64_t>(u));
    SynthUtterance utt;
    std::ostringstream id;
    id << (u < config.train_utterances ? "train" : "test") << '_' << std::setw(4) << std::setfill('0') << u;
    utt.id = id.str();
    utt.split = u < config.train_utterances ? "train" : "test";

    std::string ctx = "<s>";
    while (static_cast<int>(utt.words.size()) < kMaxSentenceWords) {
      const auto& dist = lang.successors.at(ctx);
      const std::string next = dist[static_cast<std::size_t>(sample_index(rng, dist))].first;
      if (next == "</s>") break;
      utt.words.push_back(next);
      ctx = next;
    }
    for (const auto& w : utt.words)
      for (int p : lang.pronunciations.at(w)) utt.phones.push_back(p);

    const auto n = utt.phones.size();
    std::vector<Eigen::Index> lip_start(n), hand_start(n);
    Eigen::Index t = 0;
    for (std::size_t k = 0; k < n; ++k) {
      lip_start[k] = t;
      const double d = config.frames_per_phone + rng.uniform(-config.frames_per_phone_jitter, config.frames_per_phone_jitter);
      t += std::max<Eigen::Index>(2, std::llround(d));
    }
    const Eigen::Index T = t;
    for (std::size_t k = 0; k < n; ++k) {
      const double a = std::max(0.0, config.anticipation + rng.uniform(-config.anticipation_jitter, config.anticipation_jitter));
      Eigen::Index h = std::max<Eigen::Index>(0, lip_start[k] - std::llround(a));
      if (k > 0) h = std::max(h, hand_start[k - 1] + 1);
      hand_start[k] = std::min(h, lip_start[k]);
    }

    utt.lips_truth = {{}, Stream::kLips, T};
    utt.hand_truth = {{}, Stream::kHandShape, T};
    for (std::size_t k = 0; k < n; ++k) {
      const int ph = utt.phones[k];
      utt.lips_truth.segments.push_back({ph, lip_start[k], k + 1 < n ? lip_start[k + 1] : T});
      utt.hand_truth.segments.push_back({ph, hand_start[k], k + 1 < n ? hand_start[k + 1] : T});
    }

    StreamBundle& b = utt.streams;
    b.utterance_id = utt.id;
    b.lips = {Eigen::MatrixXd(T, kLipFeatures), config.rate};
    b.hand_shape = {Eigen::MatrixXd(T, kHandFeatures), config.rate};
    b.hand_position = {Eigen::MatrixXd::Zero(T, kPositionCodes), config.rate};
    std::vector<int> position_code(static_cast<std::size_t>(T));
    auto fill = [&](const Segmentation& truth, const Eigen::MatrixXd& proto, Eigen::MatrixXd& out, bool hand) {
      for (std::size_t k = 0; k < truth.segments.size(); ++k) {
        const auto& seg = truth.segments[k];
        const int ph = seg.phone;
        const bool repeat = k > 0 && truth.segments[k - 1].phone == ph;
        for (Eigen::Index f = seg.start; f < seg.end; ++f) {
          // A repeated phone is re-articulated: its first frame is a partial release.
          const double gain = (repeat && f == seg.start) ? 0.3 : 1.0;
          for (Eigen::Index c = 0; c < out.cols(); ++c) out(f, c) = gain * proto(ph - 1, c) + config.noise_sigma * rng.normal();
          if (hand) {
            int code = position_of(ph);
            const int prev = k > 0 ? position_of(truth.segments[k - 1].phone) : code;
            if (prev != code && f - seg.start < config.transition_frames) code = kHandPositions + (prev + code) % 3;
            position_code[static_cast<std::size_t>(f)] = code;
          }
        }
      }
    };
    fill(utt.lips_truth, lip_proto, b.lips.values, false);
    fill(utt.hand_truth, hand_proto, b.hand_shape.values, true);
    for (Eigen::Index f = 0; f < T; ++f) b.hand_position.values(f, position_code[static_cast<std::size_t>(f)]) = 1.0;

    // Landmark rendering on a jittered clock with occasional dropped frames.
    for (Eigen::Index f = 0; f < T; ++f) {
      const bool endpoint = f == 0 || f == T - 1;
      if (!endpoint && rng.uniform() < 0.03) continue;
      LandmarkFrame lf;
      lf.t = (static_cast<double>(f) + (endpoint ? 0.0 : rng.uniform(-0.1, 0.1))) / config.rate;
      lf.lips = renderer.lip_base + renderer.lip_map * b.lips.values.row(f).transpose();
      lf.anchor = renderer.position_centroids.row(position_code[static_cast<std::size_t>(f)]).transpose();
      lf.anchor += Eigen::Vector2d(0.004 * rng.normal(), 0.004 * rng.normal());
      lf.hand = renderer.hand_base + renderer.hand_map * b.hand_shape.values.row(f).transpose();
      for (int p = 0; p < kHandPoints; ++p) lf.hand.segment<2>(2 * p) += lf.anchor;
      utt.landmarks.frames.push_back(std::move(lf));
    }
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

std::string synth_arpa(const SynthCorpus& corpus, double discount) {
  const auto& lang = corpus.language;
  // Unigram distribution from training sentences (add-one), including </s> and <unk>.
  std::map<std::string, double> counts;
  for (const auto& w : lang.words) counts[w] = 1.0;
  counts["</s>"] = 1.0;
  counts["<unk>"] = 1.0;
  for (const auto& u : corpus.utterances) {
    if (u.split != "train") continue;
    for (const auto& w : u.words) counts[w] += 1.0;
    counts["</s>"] += 1.0;
  }
  double total = 0.0;
  for (const auto& [w, c] : counts) total += c;
  std::map<std::string, double> unigram;
  for (const auto& [w, c] : counts) unigram[w] = c / total;

  std::ostringstream bigrams;
  std::map<std::string, double> backoff;
  std::size_t n_bigrams = 0;
  bigrams << std::setprecision(10);
  for (const auto& [ctx, dist] : lang.successors) {
    double covered = 0.0;
    for (const auto& [w, p] : dist) {
      bigrams << std::log10((1.0 - discount) * p) << '\t' << ctx << ' ' << w << '\n';
      ++n_bigrams;
      covered += unigram.count(w) ? unigram.at(w) : 0.0;
    }
    // <s> is never predicted, so its unigram mass is excluded from the backoff denominator.
    backoff[ctx] = discount / (1.0 - covered);
  }

  std::ostringstream out;
  out << std::setprecision(10);
  out << "\\data\\\n"
      << "ngram 1=" << unigram.size() + 1 << '\n'
      << "ngram 2=" << n_bigrams << "\n\n\\1-grams:\n";
  out << "-99\t<s>\t" << std::log10(backoff.at("<s>")) << '\n';
  for (const auto& [w, p] : unigram) {
    out << std::log10(p) << '\t' << w;
    if (backoff.count(w)) out << '\t' << std::log10(backoff.at(w));
    out << '\n';
  }
  out << "\n\\2-grams:\n" << bigrams.str() << "\n\\end\\\n";
  return out.str();
}

std::string synth_lexicon(const SynthCorpus& corpus) {
  std::ostringstream out;
  for (const auto& w : corpus.language.words) {
    out << w << '\t';
    const auto& pron = corpus.language.pronunciations.at(w);
    for (std::size_t i = 0; i < pron.size(); ++i) out << (i ? " " : "") << corpus.inventory.symbol(pron[i]);
    out << '\n';
  }
  return out.str();
}

std::string synth_annotation_tsv(const SynthUtterance& utt, const PhoneInventory& inventory, double rate) {
  std::ostringstream out;
  out << std::setprecision(10);
  for (const Segmentation* seg : {&utt.lips_truth, &utt.hand_truth})
    for (const auto& s : seg->segments)
      out << stream_name(seg->modality) << '\t' << static_cast<double>(s.start) * 1000.0 / rate << '\t'
          << static_cast<double>(s.end) * 1000.0 / rate << '\t' << inventory.symbol(s.phone) << '\n';
  return out.str();
}

}  // namespace acsr
