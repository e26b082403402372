// acsr: command-line driver for the cued-speech recognition and segmentation pipeline.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "acsr/ctc.hpp"
#include "acsr/features.hpp"
#include "acsr/metrics.hpp"
#include "acsr/model.hpp"
#include "acsr/pipeline.hpp"
#include "acsr/search.hpp"
#include "acsr/segmentation.hpp"
#include "acsr/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace acsr;

namespace {

constexpr int kValidationExit = 1;
constexpr int kRuntimeExit = 2;

struct Common {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
};

json config_section(const Common& c, const std::string& key) {
  if (c.config.empty()) return json::object();
  const json doc = read_json(c.config);
  if (!doc.is_object()) throw InvalidConfig("config must be a JSON object");
  if (!doc.contains(key)) return json::object();
  if (!doc.at(key).is_object()) throw InvalidConfig("config section '" + key + "' must be an object");
  return doc.at(key);
}

void write_summary(const Common& c, const std::string& command, json inputs, json config, json outputs, json metrics) {
  json s{{"command", command},
         {"inputs", std::move(inputs)},
         {"config", std::move(config)},
         {"outputs", std::move(outputs)},
         {"metrics", std::move(metrics)}};
  write_text(fs::path(c.out) / (command + ".summary.json"), s.dump(2) + "\n");
}

StreamBundle load_bundle(const ManifestEntry& e) {
  if (e.streams.empty()) throw MalformedInput(e.id + ": no stream features; run featurize first");
  auto b = stream_bundle_from_json(read_json(e.streams));
  b.utterance_id = e.id;
  return b;
}

std::vector<const ManifestEntry*> select(const Manifest& m, const std::string& split) {
  if (split == "all") {
    std::vector<const ManifestEntry*> out;
    for (const auto& u : m.utterances) out.push_back(&u);
    return out;
  }
  if (split != "train" && split != "test") throw InvalidConfig("split must be train, test or all");
  return m.split(split);
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Common common;
  bool landmarks = false;
};

int run_synth(const SynthArgs& a) {
  SynthConfig cfg = synth_config_from_json(config_section(a.common, "synth"));
  if (a.common.seed) cfg.seed = *a.common.seed;
  const auto corpus = synth_corpus(cfg);
  const fs::path out(a.common.out);
  fs::create_directories(out);

  write_inventory(corpus.inventory, (out / "inventory.txt").string());
  write_text(out / "lexicon.txt", synth_lexicon(corpus));
  write_text(out / "lm.arpa", synth_arpa(corpus));

  Manifest manifest;
  long frames = 0;
  double lead_sum = 0.0;
  long lead_n = 0;
  for (const auto& u : corpus.utterances) {
    ManifestEntry e;
    e.id = u.id;
    e.split = u.split;
    e.streams = out / "streams" / (u.id + ".json");
    write_text(e.streams, to_json(u.streams).dump() + "\n");
    e.annotation = out / "annotations" / (u.id + ".tsv");
    write_text(e.annotation, synth_annotation_tsv(u, corpus.inventory, cfg.rate));
    if (a.landmarks) {
      e.landmarks = out / "landmarks" / (u.id + ".jsonl");
      fs::create_directories(e.landmarks.parent_path());
      write_landmarks_jsonl(u.landmarks, e.landmarks.string());
    }
    e.phones = decode_phones(u.phones, corpus.inventory);
    e.words = u.words;
    manifest.utterances.push_back(std::move(e));
    frames += u.streams.frames();
    const auto prof = asynchrony_profile(u.lips_truth, u.hand_truth, cfg.rate);
    for (double d : prof.delays_ms) lead_sum += d, ++lead_n;
  }
  write_manifest(manifest, out / "manifest.json");

  json outputs{"inventory.txt", "lexicon.txt", "lm.arpa", "manifest.json", "streams/", "annotations/"};
  if (a.landmarks) outputs.push_back("landmarks/");
  write_summary(a.common, "synth", json::object(), {{"synth", to_json(cfg)}}, outputs,
                {{"utterances", corpus.utterances.size()},
                 {"train_utterances", cfg.train_utterances},
                 {"test_utterances", cfg.test_utterances},
                 {"frames", frames},
                 {"words", corpus.language.words.size()},
                 {"mean_hand_lead_ms", lead_n ? lead_sum / static_cast<double>(lead_n) : 0.0}});
  return 0;
}

// ---------------------------------------------------------------- featurize

struct FeaturizeArgs {
  Common common;
  std::string manifest;
  std::string models;
  int pca_dims = 20;
  int clusters = 8;
  double rate = kDefaultFrameRate;
};

int run_featurize(const FeaturizeArgs& a) {
  const Manifest in = read_manifest(a.manifest);
  const std::uint64_t seed = a.common.seed.value_or(1);
  const fs::path out(a.common.out);
  std::map<std::string, LandmarkSequence> seqs;
  for (const auto& u : in.utterances) {
    if (u.landmarks.empty()) throw MalformedInput(u.id + ": no landmark file");
    seqs[u.id] = resample_landmarks(read_landmarks_jsonl(u.landmarks.string()), a.rate);
  }

  FeatureModels models;
  if (!a.models.empty()) {
    models = feature_models_from_json(read_json(a.models));
  } else {
    std::vector<Eigen::MatrixXd> lips, hands, anchors;
    Eigen::Index rows = 0;
    for (const auto* u : in.split("train")) {
      const auto& s = seqs.at(u->id);
      lips.push_back(lip_matrix(s));
      hands.push_back(hand_shape_matrix(s));
      anchors.push_back(anchor_matrix(s));
      rows += lips.back().rows();
    }
    if (rows == 0) throw InsufficientData("no training landmarks to fit features on");
    auto stack = [rows](const std::vector<Eigen::MatrixXd>& parts) {
      Eigen::MatrixXd m(rows, parts.front().cols());
      Eigen::Index r = 0;
      for (const auto& p : parts) {
        m.middleRows(r, p.rows()) = p;
        r += p.rows();
      }
      return m;
    };
    models.lips = fit_pca(stack(lips), a.pca_dims);
    models.hand = fit_pca(stack(hands), a.pca_dims);
    models.positions = fit_position_clusters(stack(anchors), a.clusters, seed);
  }
  write_text(out / "features.json", to_json(models).dump() + "\n");

  Manifest result = in;
  long frames = 0;
  for (auto& u : result.utterances) {
    const auto bundle = build_streams(seqs.at(u.id), models.lips, models.hand, models.positions, a.rate, u.id);
    u.streams = out / "streams" / (u.id + ".json");
    write_text(u.streams, to_json(bundle).dump() + "\n");
    frames += bundle.frames();
  }
  write_manifest(result, out / "manifest.json");

  write_summary(a.common, "featurize", {{"manifest", a.manifest}, {"models", a.models}},
                {{"pca_dims", a.pca_dims}, {"clusters", a.clusters}, {"rate", a.rate}, {"seed", seed}},
                {"features.json", "manifest.json", "streams/"},
                {{"utterances", result.utterances.size()},
                 {"frames", frames},
                 {"lips_explained_variance", models.lips.explained_variance_ratio.sum()},
                 {"hand_explained_variance", models.hand.explained_variance_ratio.sum()},
                 {"kmeans_inertia", models.positions.inertia_history.empty() ? 0.0 : models.positions.inertia_history.back()}});
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string manifest;
  std::string inventory;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<int> batch_size;
  std::optional<int> hidden;
  std::optional<int> d_k;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  TrainingConfig cfg = training_config_from_json(config_section(a.common, "train"));
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.learning_rate) cfg.learning_rate = *a.learning_rate;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.common.seed) cfg.seed = *a.common.seed;
  cfg.validate();
  ModelDims dims = model_dims_from_json(config_section(a.common, "model"));
  if (a.hidden) dims.hidden = *a.hidden;
  if (a.d_k) dims.d_k = *a.d_k;

  const auto inventory = read_inventory(a.inventory);
  const Manifest manifest = read_manifest(a.manifest);
  std::vector<TrainingSample> samples;
  for (const auto* u : manifest.split("train")) samples.push_back({load_bundle(*u), encode_phones(u->phones, inventory)});
  if (samples.empty()) throw InsufficientData("manifest has no training utterances");
  dims.lips_dim = samples.front().streams.lips.dims();
  dims.hand_dim = samples.front().streams.hand_shape.dims();
  dims.position_dim = samples.front().streams.hand_position.dims();
  dims = model_dims_from_json(to_json(dims));

  auto model = AcsrModel::initialized(dims, inventory, cfg.seed);
  const auto result = train(std::move(model), samples, cfg, [&](const EpochRecord& r, const AcsrModel&) {
    if (!a.quiet) std::cerr << "epoch " << r.epoch << " loss " << r.mean_loss << " lr " << r.learning_rate << '\n';
  });
  const fs::path out(a.common.out);
  fs::create_directories(out);
  save_model(result.model, (out / "model.json").string());
  write_training_log(result.history, (out / "training_log.csv").string());

  write_summary(a.common, "train", {{"manifest", a.manifest}, {"inventory", a.inventory}},
                {{"train", to_json(cfg)}, {"model", to_json(dims)}}, {"model.json", "training_log.csv"},
                {{"utterances", samples.size()},
                 {"parameters", result.model.parameter_count()},
                 {"epochs", result.history.size()},
                 {"initial_loss", result.history.front().mean_loss},
                 {"final_loss", result.history.back().mean_loss},
                 {"final_learning_rate", result.history.back().learning_rate}});
  return 0;
}

// ---------------------------------------------------------------- decode

struct DecodeArgs {
  Common common;
  std::string manifest;
  std::string model;
  std::string posteriors;
  std::string inventory;
  std::string split = "test";
  bool beam = false;
  std::string lexicon;
  std::string lm;
  bool rescore = false;
  std::string scorer_command;
  bool oracle = false;
  std::optional<std::size_t> beam_width;
  std::optional<double> lm_weight;
  std::optional<double> word_score;
  std::optional<std::size_t> nbest;
  std::string name = "hypotheses";
};

struct DecodeInput {
  std::string id;
  Posteriorgram post;
  std::vector<std::string> reference_words;
};

std::vector<DecodeInput> posteriors_from_file(const std::string& path) {
  json doc = read_json(path);
  if (!doc.is_array()) doc = json::array({doc});
  std::vector<DecodeInput> out;
  try {
    for (const auto& j : doc) {
      DecodeInput in;
      in.id = j.at("id").get<std::string>();
      const auto& rows = j.at("probs");
      if (!rows.is_array() || rows.empty()) throw MalformedInput(in.id + ": probs must be a non-empty matrix");
      const auto cols = rows.at(0).size();
      in.post.probs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != cols) throw MalformedInput(in.id + ": ragged probs");
        for (std::size_t c = 0; c < cols; ++c)
          in.post.probs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t][c].get<double>();
      }
      in.post.validate();
      out.push_back(std::move(in));
    }
  } catch (const json::exception& e) {
    throw MalformedInput(path + ": " + e.what());
  }
  return out;
}

int run_decode(const DecodeArgs& a) {
  DecodeConfig cfg = decode_config_from_json(config_section(a.common, "decode"));
  if (a.beam_width) cfg.beam_width = *a.beam_width;
  if (a.lm_weight) cfg.lm_weight = *a.lm_weight;
  if (a.word_score) cfg.word_score = *a.word_score;
  if (a.nbest) cfg.n_best = *a.nbest;
  cfg.validate();
  if (a.posteriors.empty() == (a.manifest.empty() || a.model.empty()))
    throw InvalidConfig("give either --posteriors or both --manifest and --model");
  if (!a.beam && (a.rescore || a.oracle || !a.lexicon.empty())) throw InvalidConfig("--rescore, --oracle and --lexicon need --beam");
  if (a.beam && a.lexicon.empty()) throw InvalidConfig("--beam needs --lexicon");
  if (a.rescore && a.lm.empty() && a.scorer_command.empty()) throw InvalidConfig("--rescore needs --lm or --scorer-command");
  if (a.oracle && a.manifest.empty()) throw InvalidConfig("--oracle needs reference words from --manifest");

  PhoneInventory inventory;
  std::vector<DecodeInput> inputs;
  if (!a.posteriors.empty()) {
    if (a.inventory.empty()) throw InvalidConfig("--posteriors needs --inventory");
    inventory = read_inventory(a.inventory);
    inputs = posteriors_from_file(a.posteriors);
    for (const auto& in : inputs)
      if (in.post.classes() != inventory.classes()) throw MalformedInput(in.id + ": class count differs from the inventory");
  } else {
    const auto model = load_model(a.model);
    inventory = model.inventory();
    const Manifest manifest = read_manifest(a.manifest);
    for (const auto* u : select(manifest, a.split))
      inputs.push_back({u->id, model_forward(model, load_bundle(*u)).posteriorgram, u->words});
  }

  std::optional<Lexicon> lexicon;
  std::optional<NGramModel> lm;
  if (!a.lexicon.empty()) lexicon = load_lexicon(a.lexicon, inventory);
  if (!a.lm.empty()) lm = load_arpa(a.lm);
  std::unique_ptr<LMScorer> scorer;
  if (a.rescore) {
    if (!a.scorer_command.empty()) scorer = std::make_unique<ProcessScorer>(a.scorer_command);
    else scorer = std::make_unique<NGramScorer>(*lm);
  }

  const fs::path out(a.common.out);
  std::vector<std::pair<std::string, Transcript>> hyps, oracles;
  std::ostringstream nbest_lines;
  long empty = 0, fallbacks = 0;
  for (const auto& in : inputs) {
    Transcript t;
    t.phones = decode_phones(ctc_greedy_decode(in.post), inventory);
    if (a.beam) {
      std::vector<NBestEntry> nbest;
      try {
        nbest = beam_search(in.post, *lexicon, lm ? &*lm : nullptr, cfg);
      } catch (const EmptyDecode&) {
        ++empty;
      }
      std::vector<double> ppl;
      if (!nbest.empty()) {
        t.words = nbest.front().words;
        if (scorer) {
          const auto r = rescore_topk(nbest, *scorer);
          t.words = r.words;
          ppl = r.perplexities;
          if (r.fallback) {
            ++fallbacks;
            std::cerr << in.id << ": rescoring fell back to the beam 1-best: " << r.error << '\n';
          }
        }
        if (a.oracle) {
          const auto o = oracle_best(nbest, in.reference_words);
          oracles.emplace_back(in.id, Transcript{t.phones, o.words});
        }
      } else if (a.oracle) {
        oracles.emplace_back(in.id, Transcript{t.phones, {}});
      }
      write_nbest_jsonl(nbest_lines, in.id, nbest, scorer ? &ppl : nullptr);
    }
    hyps.emplace_back(in.id, std::move(t));
  }

  json outputs = json::array();
  write_transcripts_jsonl(hyps, out / (a.name + ".jsonl"));
  outputs.push_back(a.name + ".jsonl");
  if (a.beam) {
    write_text(out / (a.name + ".nbest.jsonl"), nbest_lines.str());
    outputs.push_back(a.name + ".nbest.jsonl");
  }
  if (a.oracle) {
    write_transcripts_jsonl(oracles, out / (a.name + ".oracle.jsonl"));
    outputs.push_back(a.name + ".oracle.jsonl");
  }
  json config{{"mode", a.beam ? "beam" : "greedy"}, {"split", a.split}, {"rescore", a.rescore}};
  if (a.beam) config["decode"] = to_json(cfg);
  write_summary(a.common, "decode." + a.name,
                {{"manifest", a.manifest}, {"model", a.model}, {"posteriors", a.posteriors},
                 {"lexicon", a.lexicon}, {"lm", a.lm}, {"scorer_command", a.scorer_command}},
                config, outputs,
                {{"utterances", inputs.size()}, {"empty_decodes", empty}, {"rescore_fallbacks", fallbacks}});
  return 0;
}

// ---------------------------------------------------------------- segment

struct SegmentArgs {
  Common common;
  std::string manifest;
  std::string model;
  std::string split = "test";
  std::optional<long> band;
  bool svg = false;
};

int run_segment(const SegmentArgs& a) {
  const json section = config_section(a.common, "segment");
  long band = section.value("band", kDefaultBand);
  if (a.band) band = *a.band;
  if (band < 0) throw InvalidConfig("band must be >= 0");
  const auto model = load_model(a.model);
  const auto& inventory = model.inventory();
  const Manifest manifest = read_manifest(a.manifest);
  const fs::path out(a.common.out);

  std::ostringstream seg_lines, onset_lines;
  std::map<std::string, long> onset_counts;
  std::vector<double> lead_ms;
  long skipped = 0, utterances = 0;
  for (const auto* u : select(manifest, a.split)) {
    const auto bundle = load_bundle(*u);
    const auto fr = model_forward(model, bundle);
    const auto phones = ctc_greedy_decode(fr.posteriorgram);
    if (phones.empty() || static_cast<Eigen::Index>(phones.size()) > bundle.frames()) {
      ++skipped;
      continue;
    }
    ++utterances;
    std::map<Stream, Segmentation> segs;
    for (Stream s : kAllStreams) {
      const auto& map = fr.maps[static_cast<std::size_t>(s)];
      const auto path = attention_path(map.scores, band);
      const auto onsets = detect_onsets(path);
      segs[s] = assign_boundaries(onsets, phones, bundle.frames(), s);
      onset_counts[stream_name(s)] += static_cast<long>(onsets.size());
      json frames = json::array(), runs = json::array();
      for (const auto& o : onsets) frames.push_back(o.frame), runs.push_back(o.run_length);
      onset_lines << json{{"id", u->id}, {"modality", stream_name(s)}, {"frames", frames}, {"run_lengths", runs}}.dump()
                  << '\n';
      for (const auto& seg : segs[s].segments)
        seg_lines << json{{"id", u->id},
                          {"modality", stream_name(s)},
                          {"phone", inventory.symbol(seg.phone)},
                          {"start_frame", seg.start},
                          {"end_frame", seg.end},
                          {"frames", bundle.frames()}}
                         .dump()
                  << '\n';
      if (a.svg) {
        write_text(out / "svg" / (u->id + "." + stream_name(s) + ".attention.svg"), render_attention_svg(map, path, onsets));
        if (!u->annotation.empty()) {
          for (const auto& truth : read_annotation_tsv(u->annotation.string(), inventory, bundle.lips.rate, bundle.frames()))
            if (truth.modality == s)
              write_text(out / "svg" / (u->id + "." + stream_name(s) + ".segmentation.svg"),
                         render_segmentation_svg(segs[s], truth, &inventory));
        }
      }
    }
    const auto prof = asynchrony_profile(segs[Stream::kLips], segs[Stream::kHandShape], bundle.lips.rate);
    lead_ms.insert(lead_ms.end(), prof.delays_ms.begin(), prof.delays_ms.end());
  }
  write_text(out / "segmentation.jsonl", seg_lines.str());
  write_text(out / "onsets.jsonl", onset_lines.str());

  double mean = 0.0;
  for (double d : lead_ms) mean += d;
  if (!lead_ms.empty()) mean /= static_cast<double>(lead_ms.size());
  json outputs{"segmentation.jsonl", "onsets.jsonl"};
  if (a.svg) outputs.push_back("svg/");
  write_summary(a.common, "segment", {{"manifest", a.manifest}, {"model", a.model}}, {{"band", band}, {"split", a.split}},
                outputs,
                {{"utterances", utterances},
                 {"skipped", skipped},
                 {"onsets", onset_counts},
                 {"mean_hand_lead_ms", mean}});
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::string manifest;
  std::string ref;
  std::string hyp;
  std::string segmentation;
  std::string onsets;
  std::string inventory;
  double rate = kDefaultFrameRate;
  long tolerance = 5;
  double confidence = 95.0;
  std::string name = "report";
};

struct SegmentationFileEntry {
  Eigen::Index frames = 0;
  std::map<Stream, Segmentation> by_stream;
};

std::map<std::string, SegmentationFileEntry> read_segmentation_file(const std::string& path, const PhoneInventory& inv) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open " + path);
  std::map<std::string, SegmentationFileEntry> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      auto& e = out[j.at("id").get<std::string>()];
      e.frames = j.at("frames").get<Eigen::Index>();
      const Stream s = stream_from_name(j.at("modality").get<std::string>());
      auto& seg = e.by_stream[s];
      seg.modality = s;
      seg.frames = e.frames;
      const int phone = inv.class_of(j.at("phone").get<std::string>());
      if (phone < 0) throw MalformedInput(path + ":" + std::to_string(n) + ": unknown phone");
      seg.segments.push_back({phone, j.at("start_frame").get<Eigen::Index>(), j.at("end_frame").get<Eigen::Index>()});
    } catch (const json::exception& ex) {
      throw MalformedInput(path + ":" + std::to_string(n) + ": " + ex.what());
    }
  }
  for (auto& [id, e] : out)
    for (auto& [s, seg] : e.by_stream) seg.validate();
  return out;
}

int run_eval(const EvalArgs& a) {
  if (a.hyp.empty() && a.segmentation.empty()) throw InvalidConfig("nothing to evaluate: give --hyp and/or --segmentation");
  if (a.tolerance < 0) throw InvalidConfig("tolerance must be >= 0");
  std::optional<Manifest> manifest;
  if (!a.manifest.empty()) manifest = read_manifest(a.manifest);
  json metrics = json::object();
  json outputs = json::array();
  std::vector<std::pair<std::string, ScoreReport>> table;

  if (!a.hyp.empty()) {
    TranscriptSet ref;
    if (!a.ref.empty()) {
      ref = read_transcripts_jsonl(a.ref);
    } else if (manifest) {
      for (const auto& u : manifest->utterances) ref[u.id] = Transcript{u.phones, u.words};
    } else {
      throw InvalidConfig("--hyp needs references from --ref or --manifest");
    }
    const auto hyp = read_transcripts_jsonl(a.hyp);
    EditAlignment phones, words;
    long scored_words = 0;
    for (const auto& [id, h] : hyp) {
      const auto it = ref.find(id);
      if (it == ref.end()) throw MalformedInput("hypothesis '" + id + "' has no reference");
      phones += edit_align(it->second.phones, h.phones);
      if (!it->second.words.empty() || !h.words.empty()) {
        words += edit_align(it->second.words, h.words);
        ++scored_words;
      }
    }
    metrics["utterances"] = hyp.size();
    if (phones.n > 0) {
      const auto r = score_report(phones, a.confidence);
      metrics["phone"] = to_json(r);
      table.emplace_back("phone", r);
    }
    if (scored_words > 0 && words.n > 0) {
      const auto r = score_report(words, a.confidence);
      metrics["word"] = to_json(r);
      table.emplace_back("word", r);
    }
  }

  if (!a.segmentation.empty()) {
    if (!manifest) throw InvalidConfig("--segmentation needs --manifest for the manual annotations");
    if (a.inventory.empty()) throw InvalidConfig("--segmentation needs --inventory");
    const auto inv = read_inventory(a.inventory);
    const auto predicted = read_segmentation_file(a.segmentation, inv);
    std::map<std::string, std::map<Stream, std::vector<Eigen::Index>>> onsets;
    if (!a.onsets.empty()) {
      std::ifstream in(a.onsets);
      if (!in) throw MalformedInput("cannot open " + a.onsets);
      std::string line;
      while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          const auto j = json::parse(line);
          onsets[j.at("id").get<std::string>()][stream_from_name(j.at("modality").get<std::string>())] =
              j.at("frames").get<std::vector<Eigen::Index>>();
        } catch (const json::exception& ex) {
          throw MalformedInput(a.onsets + ": " + ex.what());
        }
      }
    }
    std::map<Stream, double> tiou_sum;
    std::map<Stream, long> tiou_n, detected, hits;
    for (const auto& [id, entry] : predicted) {
      const auto* u = manifest->find(id);
      if (!u) throw MalformedInput("segmentation for unknown utterance '" + id + "'");
      if (u->annotation.empty()) continue;
      for (const auto& truth : read_annotation_tsv(u->annotation.string(), inv, a.rate, entry.frames)) {
        const auto it = entry.by_stream.find(truth.modality);
        if (it == entry.by_stream.end()) continue;
        tiou_sum[truth.modality] += tiou(truth, it->second).mean;
        ++tiou_n[truth.modality];
        const auto oit = onsets.find(id);
        if (oit == onsets.end() || !oit->second.count(truth.modality)) continue;
        for (Eigen::Index f : oit->second.at(truth.modality)) {
          ++detected[truth.modality];
          for (const auto& seg : truth.segments)
            if (std::abs(seg.start - f) <= a.tolerance) {
              ++hits[truth.modality];
              break;
            }
        }
      }
    }
    json seg = json::object();
    for (const auto& [s, n] : tiou_n) {
      json m{{"utterances", n}, {"mean_tiou", tiou_sum[s] / static_cast<double>(n)}};
      if (detected[s] > 0) {
        m["onsets"] = detected[s];
        m["onsets_within_tolerance"] = hits[s];
        m["onset_hit_rate"] = static_cast<double>(hits[s]) / static_cast<double>(detected[s]);
      }
      seg[stream_name(s)] = m;
    }
    metrics["segmentation"] = seg;
  }

  const fs::path out(a.common.out);
  write_text(out / (a.name + ".json"), metrics.dump(2) + "\n");
  outputs.push_back(a.name + ".json");
  if (!table.empty()) {
    write_text(out / (a.name + ".txt"), render_score_table(table));
    outputs.push_back(a.name + ".txt");
    std::cout << render_score_table(table);
  }
  write_summary(a.common, "eval." + a.name,
                {{"manifest", a.manifest}, {"ref", a.ref}, {"hyp", a.hyp}, {"segmentation", a.segmentation},
                 {"onsets", a.onsets}},
                {{"confidence", a.confidence}, {"tolerance", a.tolerance}, {"rate", a.rate}}, outputs, metrics);
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seed", c.seed, "random seed");
}

bool is_validation(const acsr::Error& e) {
  const auto& k = e.kind();
  return k == "MalformedInput" || k == "InvalidConfig" || k == "InsufficientData" || k == "UndefinedScore";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cued-speech recognition, decoding and attention-based segmentation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic corpus with injected hand anticipation");
  add_common(s, synth.common);
  s->add_flag("--landmarks", synth.landmarks, "also write landmark renderings");

  FeaturizeArgs feat;
  auto* f = app.add_subcommand("featurize", "landmarks to lips / hand-shape / hand-position streams");
  add_common(f, feat.common);
  f->add_option("--manifest", feat.manifest)->required()->check(CLI::ExistingFile);
  f->add_option("--models", feat.models, "reuse fitted feature models")->check(CLI::ExistingFile);
  f->add_option("--pca-dims", feat.pca_dims)->check(CLI::PositiveNumber);
  f->add_option("--clusters", feat.clusters)->check(CLI::PositiveNumber);
  f->add_option("--rate", feat.rate)->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the recognizer with CTC");
  add_common(t, tr.common);
  t->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
  t->add_option("--inventory", tr.inventory)->required()->check(CLI::ExistingFile);
  t->add_option("--epochs", tr.epochs);
  t->add_option("--lr", tr.learning_rate);
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--hidden", tr.hidden);
  t->add_option("--dk", tr.d_k);
  t->add_flag("--quiet", tr.quiet);

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "greedy phone decoding or lexicon beam search");
  add_common(d, dec.common);
  d->add_option("--manifest", dec.manifest)->check(CLI::ExistingFile);
  d->add_option("--model", dec.model)->check(CLI::ExistingFile);
  d->add_option("--posteriors", dec.posteriors, "posteriorgram JSON instead of a model")->check(CLI::ExistingFile);
  d->add_option("--inventory", dec.inventory)->check(CLI::ExistingFile);
  d->add_option("--split", dec.split, "train, test or all");
  auto* greedy = d->add_flag("--greedy", "greedy phone decoding (default)");
  d->add_flag("--beam", dec.beam, "lexicon-constrained beam search")->excludes(greedy);
  d->add_option("--lexicon", dec.lexicon)->check(CLI::ExistingFile);
  d->add_option("--lm", dec.lm)->check(CLI::ExistingFile);
  d->add_flag("--rescore", dec.rescore, "re-rank the n-best list by perplexity");
  d->add_option("--scorer-command", dec.scorer_command, "external rescoring process");
  d->add_flag("--oracle", dec.oracle, "also write the best n-best entry against the reference");
  d->add_option("--beam-width", dec.beam_width);
  d->add_option("--lm-weight", dec.lm_weight);
  d->add_option("--word-score", dec.word_score);
  d->add_option("--nbest", dec.nbest);
  d->add_option("--name", dec.name, "output file stem");

  SegmentArgs seg;
  auto* g = app.add_subcommand("segment", "attention-path segmentation of lips and hand");
  add_common(g, seg.common);
  g->add_option("--manifest", seg.manifest)->required()->check(CLI::ExistingFile);
  g->add_option("--model", seg.model)->required()->check(CLI::ExistingFile);
  g->add_option("--split", seg.split, "train, test or all");
  g->add_option("--band", seg.band, "Sakoe-Chiba band in frames");
  g->add_flag("--svg", seg.svg, "write attention and segmentation figures");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Corr/Acc with Wilson intervals and segmentation tIoU");
  add_common(e, ev.common);
  e->add_option("--manifest", ev.manifest)->check(CLI::ExistingFile);
  e->add_option("--ref", ev.ref)->check(CLI::ExistingFile);
  e->add_option("--hyp", ev.hyp)->check(CLI::ExistingFile);
  e->add_option("--segmentation", ev.segmentation)->check(CLI::ExistingFile);
  e->add_option("--onsets", ev.onsets)->check(CLI::ExistingFile);
  e->add_option("--inventory", ev.inventory)->check(CLI::ExistingFile);
  e->add_option("--rate", ev.rate)->check(CLI::PositiveNumber);
  e->add_option("--tolerance", ev.tolerance, "onset tolerance in frames");
  e->add_option("--confidence", ev.confidence);
  e->add_option("--name", ev.name, "output file stem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kValidationExit;
  }

  try {
    if (*s) return run_synth(synth);
    if (*f) return run_featurize(feat);
    if (*t) return run_train(tr);
    if (*d) return run_decode(dec);
    if (*g) return run_segment(seg);
    if (*e) return run_eval(ev);
  } catch (const acsr::Error& err) {
    std::cerr << "acsr: " << err.what() << '\n';
    return is_validation(err) ? kValidationExit : kRuntimeExit;
  } catch (const std::exception& err) {
    std::cerr << "acsr: " << err.what() << '\n';
    return kRuntimeExit;
  }
  return kValidationExit;
}
