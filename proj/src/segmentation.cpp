#include "acsr/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace acsr {

std::vector<Onset> detect_onsets(const AttentionPath& path) {
  std::vector<Onset> onsets;
  const auto& s = path.steps;
  std::size_t k = 1;
  while (k < s.size()) {
    const bool diagonal = s[k].i != s[k - 1].i && s[k].j != s[k - 1].j;
    if (diagonal) {
      ++k;
      continue;
    }
    const std::size_t first = k - 1;  // cell where the run departs
    while (k < s.size() && !(s[k].i != s[k - 1].i && s[k].j != s[k - 1].j)) ++k;
    const std::size_t last = k - 1;   // cell where the run ends
    onsets.push_back({s[first + (last - first) / 2].i, static_cast<Eigen::Index>(last - first)});
  }
  return onsets;
}

void Segmentation::validate() const {
  Eigen::Index prev_end = 0;
  for (const auto& seg : segments) {
    if (seg.start >= seg.end) throw MalformedInput("segment with start >= end");
    if (seg.start < prev_end) throw MalformedInput("segments overlap or are out of order");
    if (seg.start < 0 || seg.end > frames) throw MalformedInput("segment outside [0, T)");
    prev_end = seg.end;
  }
}

LabelSequence Segmentation::phones() const {
  LabelSequence out;
  for (const auto& seg : segments) out.push_back(seg.phone);
  return out;
}

std::vector<Eigen::Index> Segmentation::boundaries() const {
  std::vector<Eigen::Index> out;
  for (const auto& seg : segments)
    if (seg.start > 0) out.push_back(seg.start);
  return out;
}

Segmentation assign_boundaries(std::span<const Onset> onsets, const LabelSequence& phones, Eigen::Index frames,
                               Stream modality) {
  if (phones.empty()) throw MalformedInput("cannot assign boundaries to an empty phone sequence");
  const auto n = static_cast<Eigen::Index>(phones.size());
  if (frames < n) throw MalformedInput("fewer frames than phones");

  std::vector<Onset> usable;
  for (const auto& o : onsets)
    if (o.frame > 0 && o.frame < frames) usable.push_back(o);
  std::stable_sort(usable.begin(), usable.end(), [](const Onset& a, const Onset& b) {
    if (a.run_length != b.run_length) return a.run_length > b.run_length;
    return a.frame < b.frame;
  });
  std::vector<Eigen::Index> cuts;
  for (const auto& o : usable) {
    if (static_cast<Eigen::Index>(cuts.size()) == n - 1) break;
    if (std::find(cuts.begin(), cuts.end(), o.frame) == cuts.end()) cuts.push_back(o.frame);
  }
  std::sort(cuts.begin(), cuts.end());

  // Even split of the tail for phones left without a boundary; merge back
  // from the end while the tail is too short to split.
  auto pieces = [&] { return n - static_cast<Eigen::Index>(cuts.size()); };
  while (!cuts.empty() && frames - cuts.back() < pieces()) cuts.pop_back();
  const Eigen::Index tail_start = cuts.empty() ? 0 : cuts.back();
  const Eigen::Index tail = frames - tail_start;
  const Eigen::Index p = pieces();
  if (!cuts.empty()) cuts.pop_back();
  std::vector<Eigen::Index> starts{0};
  for (Eigen::Index c : cuts) starts.push_back(c);
  if (tail_start > 0) starts.push_back(tail_start);
  Eigen::Index pos = tail_start;
  for (Eigen::Index q = 0; q + 1 < p; ++q) {
    pos += tail / p + (q < tail % p ? 1 : 0);
    starts.push_back(pos);
  }

  Segmentation out;
  out.modality = modality;
  out.frames = frames;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const Eigen::Index end = k + 1 < starts.size() ? starts[k + 1] : frames;
    out.segments.push_back({phones[k], starts[k], end});
  }
  out.validate();
  return out;
}

SegmentationEval tiou(const Segmentation& truth, const Segmentation& predicted) {
  if (truth.frames != predicted.frames) throw MalformedInput("segmentations cover different frame counts");
  if (truth.modality != predicted.modality) throw MalformedInput("segmentations are for different modalities");
  if (truth.segments.empty()) throw MalformedInput("no true segments to evaluate");
  SegmentationEval eval;
  for (const auto& t : truth.segments) {
    Eigen::Index best_overlap = -1;
    const Segment* match = nullptr;
    for (const auto& p : predicted.segments) {
      const Eigen::Index overlap = std::max<Eigen::Index>(0, std::min(t.end, p.end) - std::max(t.start, p.start));
      if (overlap > best_overlap) {
        best_overlap = overlap;
        match = &p;
      }
    }
    double iou = 0.0;
    if (match) {
      const Eigen::Index uni = (t.end - t.start) + (match->end - match->start) - best_overlap;
      iou = static_cast<double>(best_overlap) / static_cast<double>(uni);
    }
    eval.iou.push_back(iou);
  }
  eval.mean = std::accumulate(eval.iou.begin(), eval.iou.end(), 0.0) / static_cast<double>(eval.iou.size());
  return eval;
}

AsynchronyProfile asynchrony_profile(const Segmentation& lips, const Segmentation& hand, double rate) {
  if (!(rate > 0)) throw InvalidConfig("rate must be positive");
  if (lips.phones() != hand.phones()) throw MalformedInput("lip and hand segmentations carry different phones");
  AsynchronyProfile prof;
  for (std::size_t k = 0; k < lips.segments.size(); ++k)
    prof.delays_ms.push_back(static_cast<double>(lips.segments[k].start - hand.segments[k].start) * 1000.0 / rate);
  if (prof.delays_ms.empty()) return prof;
  const double n = static_cast<double>(prof.delays_ms.size());
  prof.mean_ms = std::accumulate(prof.delays_ms.begin(), prof.delays_ms.end(), 0.0) / n;
  double var = 0.0;
  for (double d : prof.delays_ms) var += (d - prof.mean_ms) * (d - prof.mean_ms);
  prof.stddev_ms = std::sqrt(var / n);
  return prof;
}

void write_segmentation_jsonl(std::span<const Segmentation> segs, const PhoneInventory& inventory,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MalformedInput("cannot write " + path);
  for (const auto& seg : segs)
    for (const auto& s : seg.segments)
      out << nlohmann::json{{"modality", stream_name(seg.modality)},
                            {"phone", inventory.symbol(s.phone)},
                            {"start_frame", s.start},
                            {"end_frame", s.end}}
                 .dump()
          << '\n';
}

namespace {

std::vector<Segmentation> group_by_modality(std::map<Stream, std::vector<Segment>> by_stream, Eigen::Index frames) {
  std::vector<Segmentation> out;
  for (Stream s : kAllStreams) {
    auto it = by_stream.find(s);
    if (it == by_stream.end()) continue;
    Segmentation seg;
    seg.modality = s;
    seg.frames = frames;
    seg.segments = std::move(it->second);
    std::stable_sort(seg.segments.begin(), seg.segments.end(),
                     [](const Segment& a, const Segment& b) { return a.start < b.start; });
    seg.validate();
    out.push_back(std::move(seg));
  }
  return out;
}

int phone_class(const PhoneInventory& inventory, const std::string& label, const std::string& where) {
  const int cls = inventory.class_of(label);
  if (cls < 0) throw MalformedInput(where + ": unknown phone '" + label + "'");
  return cls;
}

}  // namespace

std::vector<Segmentation> read_segmentation_jsonl(const std::string& path, const PhoneInventory& inventory,
                                                  Eigen::Index frames) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open segmentation file " + path);
  std::map<Stream, std::vector<Segment>> by_stream;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      Segment s;
      const auto& phone = j.at("phone");
      s.phone = phone.is_number_integer() ? phone.get<int>() : phone_class(inventory, phone.get<std::string>(), where);
      s.start = j.at("start_frame").get<Eigen::Index>();
      s.end = j.at("end_frame").get<Eigen::Index>();
      by_stream[stream_from_name(j.at("modality").get<std::string>())].push_back(s);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedInput(where + ": " + e.what());
    }
  }
  return group_by_modality(std::move(by_stream), frames);
}

std::vector<Segmentation> read_annotation_tsv(const std::string& path, const PhoneInventory& inventory, double rate,
                                              Eigen::Index frames) {
  if (!(rate > 0)) throw InvalidConfig("rate must be positive");
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open annotation file " + path);
  std::map<Stream, std::vector<Segment>> by_stream;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 4) throw MalformedInput(where + ": expected tier, start_ms, end_ms, label");
    double start_ms = 0, end_ms = 0;
    try {
      start_ms = std::stod(fields[1]);
      end_ms = std::stod(fields[2]);
    } catch (const std::exception&) {
      throw MalformedInput(where + ": times must be numbers");
    }
    Segment s;
    s.phone = phone_class(inventory, fields[3], where);
    s.start = std::clamp<Eigen::Index>(std::llround(start_ms * rate / 1000.0), 0, frames);
    s.end = std::clamp<Eigen::Index>(std::llround(end_ms * rate / 1000.0), 0, frames);
    if (s.end <= s.start) continue;  // shorter than a frame after rounding
    by_stream[stream_from_name(fields[0])].push_back(s);
  }
  return group_by_modality(std::move(by_stream), frames);
}

}  // namespace acsr
