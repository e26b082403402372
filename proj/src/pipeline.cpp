#include "acsr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace acsr {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path raw(p);
  return (raw.is_absolute() ? raw : base / raw).lexically_normal();
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  if (p.empty()) return {};
  const fs::path abs = fs::absolute(p).lexically_normal();
  const fs::path rel = abs.lexically_relative(fs::absolute(base).lexically_normal());
  return rel.empty() ? abs.generic_string() : rel.generic_string();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string gray(double v) {
  const int g = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", g, g, g);
  return buf;
}

}  // namespace

std::vector<const ManifestEntry*> Manifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& u : utterances)
    if (u.split == name) out.push_back(&u);
  return out;
}

const ManifestEntry* Manifest::find(const std::string& id) const {
  for (const auto& u : utterances)
    if (u.id == id) return &u;
  return nullptr;
}

void Manifest::validate() const {
  std::set<std::string> ids;
  for (const auto& u : utterances) {
    if (u.id.empty()) throw MalformedInput("manifest: utterance without id");
    if (!ids.insert(u.id).second) throw MalformedInput("manifest: duplicate id '" + u.id + "'");
    if (u.split != "train" && u.split != "test") throw MalformedInput("manifest: " + u.id + ": split must be train or test");
    if (u.landmarks.empty() && u.streams.empty())
      throw MalformedInput("manifest: " + u.id + ": needs a landmark or stream file");
  }
}

Manifest manifest_from_json(const nlohmann::json& doc, const fs::path& base) {
  Manifest m;
  try {
    for (const auto& j : doc.at("utterances")) {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.split = j.value("split", "train");
      e.landmarks = resolve(base, j.value("landmarks", ""));
      e.streams = resolve(base, j.value("streams", ""));
      e.annotation = resolve(base, j.value("annotation", ""));
      e.phones = j.value("phones", std::vector<std::string>{});
      e.words = j.value("words", std::vector<std::string>{});
      m.utterances.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

nlohmann::json to_json(const Manifest& m, const fs::path& base) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& u : m.utterances) {
    nlohmann::json j{{"id", u.id}, {"split", u.split}};
    if (!u.landmarks.empty()) j["landmarks"] = relative_to(u.landmarks, base);
    if (!u.streams.empty()) j["streams"] = relative_to(u.streams, base);
    if (!u.annotation.empty()) j["annotation"] = relative_to(u.annotation, base);
    j["phones"] = u.phones;
    j["words"] = u.words;
    list.push_back(std::move(j));
  }
  return {{"version", 1}, {"utterances", std::move(list)}};
}

Manifest read_manifest(const fs::path& path) {
  const auto base = fs::absolute(path).parent_path();
  Manifest m = manifest_from_json(read_json(path), base);
  for (const auto& u : m.utterances)
    for (const fs::path* p : {&u.landmarks, &u.streams, &u.annotation})
      if (!p->empty() && !fs::exists(*p)) throw MalformedInput("manifest: " + u.id + ": missing file " + p->string());
  return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  m.validate();
  write_text(path, to_json(m, fs::absolute(path).parent_path()).dump(2) + "\n");
}

LabelSequence encode_phones(const std::vector<std::string>& symbols, const PhoneInventory& inventory) {
  LabelSequence out;
  for (const auto& s : symbols) {
    const int c = inventory.class_of(s);
    if (c < 0) throw MalformedInput("unknown phone '" + s + "'");
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> decode_phones(const LabelSequence& labels, const PhoneInventory& inventory) {
  std::vector<std::string> out;
  for (int c : labels) out.push_back(inventory.symbol(c));
  return out;
}

TranscriptSet read_transcripts_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open " + path.string());
  TranscriptSet out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto id = j.at("id").get<std::string>();
      Transcript t{j.value("phones", std::vector<std::string>{}), j.value("words", std::vector<std::string>{})};
      if (!out.emplace(id, std::move(t)).second) throw MalformedInput(path.string() + ":" + std::to_string(n) + ": duplicate id");
    } catch (const nlohmann::json::exception& e) {
      throw MalformedInput(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_transcripts_jsonl(const std::vector<std::pair<std::string, Transcript>>& rows, const fs::path& path) {
  std::ostringstream out;
  for (const auto& [id, t] : rows) out << nlohmann::json{{"id", id}, {"phones", t.phones}, {"words", t.words}}.dump() << '\n';
  write_text(path, out.str());
}

std::string render_attention_svg(const AttentionMap& map, const AttentionPath& path, const std::vector<Onset>& onsets) {
  constexpr int kCell = 8;
  constexpr int kTick = 10;
  const auto T = map.scores.rows();
  if (map.scores.cols() != T) throw MalformedInput("attention map must be square");
  for (const auto& s : path.steps)
    if (s.i < 0 || s.j < 0 || s.i >= T || s.j >= T) throw MalformedInput("path leaves the attention map");
  const double top = T > 0 ? map.scores.maxCoeff() : 1.0;
  const int side = static_cast<int>(T) * kCell;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side << "\" height=\"" << side + kTick + 2
    << "\" viewBox=\"0 0 " << side << ' ' << side + kTick + 2 << "\">\n";
  o << "<title>" << stream_name(map.stream) << " attention</title>\n<g shape-rendering=\"crispEdges\">\n";
  for (Eigen::Index j = 0; j < T; ++j)
    for (Eigen::Index i = 0; i < T; ++i)
      o << "<rect x=\"" << i * kCell << "\" y=\"" << j * kCell << "\" width=\"" << kCell << "\" height=\"" << kCell
        << "\" fill=\"" << gray(top > 0 ? map.scores(i, j) / top : 0.0) << "\"/>\n";
  o << "</g>\n<g fill=\"none\" stroke=\"#d62728\" stroke-width=\"1\">\n";
  for (const auto& s : path.steps)
    o << "<rect x=\"" << s.i * kCell << ".5\" y=\"" << s.j * kCell << ".5\" width=\"" << kCell - 1 << "\" height=\""
      << kCell - 1 << "\"/>\n";
  o << "</g>\n<g stroke=\"#1f77b4\" stroke-width=\"2\">\n";
  for (const auto& on : onsets) {
    const auto x = on.frame * kCell + kCell / 2;
    o << "<line x1=\"" << x << "\" y1=\"" << side + 2 << "\" x2=\"" << x << "\" y2=\"" << side + 2 + kTick << "\"/>\n";
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

std::string render_segmentation_svg(const Segmentation& automatic, const Segmentation& manual,
                                    const PhoneInventory* inventory) {
  if (automatic.frames != manual.frames) throw MalformedInput("segmentations cover different frame counts");
  constexpr int kFrame = 6;
  constexpr int kTrack = 24;
  constexpr int kGap = 12;
  constexpr int kLabel = 60;
  const int width = kLabel + static_cast<int>(automatic.frames) * kFrame;
  const int height = 2 * kTrack + kGap;
  auto label = [&](int phone) { return inventory ? inventory->symbol(phone) : std::to_string(phone); };
  auto overlaps = [&](const Segment& a) {
    for (const auto& m : manual.segments)
      if (m.phone == a.phone && std::min(a.end, m.end) > std::max(a.start, m.start)) return true;
    return false;
  };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
    << width << ' ' << height << "\" font-family=\"monospace\" font-size=\"10\">\n";
  o << "<text x=\"2\" y=\"" << kTrack / 2 + 4 << "\">auto</text>\n";
  o << "<text x=\"2\" y=\"" << kTrack + kGap + kTrack / 2 + 4 << "\">manual</text>\n";
  auto track = [&](const Segmentation& s, int y, bool is_auto) {
    for (const auto& seg : s.segments) {
      const auto x = kLabel + seg.start * kFrame;
      const auto w = (seg.end - seg.start) * kFrame;
      const char* fill = is_auto && overlaps(seg) ? "#ff7f0e" : "#d9d9d9";
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << kTrack << "\" fill=\"" << fill
        << "\" stroke=\"#404040\"/>\n";
      o << "<text x=\"" << x + 2 << "\" y=\"" << y + kTrack / 2 + 4 << "\">" << xml_escape(label(seg.phone)) << "</text>\n";
    }
  };
  track(automatic, 0, true);
  track(manual, kTrack + kGap, false);
  o << "<g fill=\"#ff7f0e\">\n";
  for (const auto& a : automatic.segments)
    for (const auto& m : manual.segments) {
      const auto lo = std::max(a.start, m.start), hi = std::min(a.end, m.end);
      if (a.phone != m.phone || hi <= lo) continue;
      o << "<rect x=\"" << kLabel + lo * kFrame << "\" y=\"" << kTrack + 2 << "\" width=\"" << (hi - lo) * kFrame
        << "\" height=\"" << kGap - 4 << "\"/>\n";
    }
  o << "</g>\n</svg>\n";
  return o.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MalformedInput("cannot write " + path.string());
  out << text;
  if (!out) throw MalformedInput("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(path.string() + ": " + e.what());
  }
}

}  // namespace acsr
