#include "tal/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tal {

using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "training";
    case Split::val: return "validation";
    case Split::test: return "testing";
  }
  return "?";
}

namespace {

Split split_from_name(const std::string& name, const std::string& video) {
  if (name == "training") return Split::train;
  if (name == "validation") return Split::val;
  if (name == "testing") return Split::test;
  throw DataError("annotations: unknown subset '" + name + "' in video " +
                  video);
}

std::string class_name(int label) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "class_%02d", label);
  return buf;
}

}  // namespace

std::vector<Segment> Dataset::gt_segments(const VideoRecord& v) const {
  std::vector<Segment> out;
  out.reserve(v.annotations.size());
  for (const auto& [seg, label] : v.annotations) out.push_back(seg);
  return out;
}

std::pair<Dataset, std::map<std::string, FeatureSequence>> generate_synthetic(
    const SynthConfig& cfg) {
  if (cfg.num_videos < 1 || cfg.classes < 1 || cfg.feature_dim < 1 ||
      cfg.num_snippets < 1 || cfg.segments_min < 1 || !(cfg.snr > 0.0))
    throw DataError("synth: counts must be >= 1 and snr > 0");
  std::mt19937_64 rng(cfg.seed);

  // Fixed per-class signatures and boundary onset directions.
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_unit = [&](int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = normal(rng);
    return (v / v.norm()).eval();
  };
  std::vector<Eigen::VectorXd> signatures;
  for (int c = 0; c < cfg.classes; ++c)
    signatures.push_back(random_unit(cfg.feature_dim));
  const Eigen::VectorXd onset_start = random_unit(cfg.feature_dim);
  const Eigen::VectorXd onset_end = random_unit(cfg.feature_dim);

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double log_min = std::log(cfg.length_min);
  const double log_max = std::log(cfg.length_max);

  Dataset ds;
  for (int c = 0; c < cfg.classes; ++c) ds.labels.push_back(class_name(c));
  std::map<std::string, FeatureSequence> feats;

  for (int v = 0; v < cfg.num_videos; ++v) {
    VideoRecord rec;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "video_%04d", v);
      rec.id = buf;
    }
    rec.split = (v >= cfg.num_videos - cfg.num_val) ? Split::val : Split::train;
    rec.duration = cfg.duration_min +
                   (cfg.duration_max - cfg.duration_min) * u01(rng);
    const double step = rec.duration / cfg.num_snippets;
    const double spf = step / cfg.frames_per_snippet;
    const int video_class =
        std::uniform_int_distribution<int>(0, cfg.classes - 1)(rng);
    const int n_segments = std::uniform_int_distribution<int>(
        cfg.segments_min, cfg.segments_max)(rng);

    // Non-overlapping placement with bounded retries at two levels:
    // per-segment position draws and whole-video redraws.
    bool placed_all = false;
    for (int video_try = 0; video_try < 20 && !placed_all; ++video_try) {
      rec.annotations.clear();
      placed_all = true;
      for (int s = 0; s < n_segments; ++s) {
        double len = std::exp(log_min + (log_max - log_min) * u01(rng));
        len = std::clamp(len, spf, 0.9 * rec.duration);
        bool ok = false;
        for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
          const double start = (rec.duration - len) * u01(rng);
          const Segment cand{start, start + len};
          ok = true;
          for (const auto& [seg, lab] : rec.annotations)
            if (cand.start < seg.end && cand.end > seg.start) {
              ok = false;
              break;
            }
          if (ok) rec.annotations.emplace_back(cand, video_class);
        }
        if (!ok) {
          placed_all = false;
          break;
        }
      }
    }
    if (!placed_all)
      throw DataError("synth: infeasible packing for " + rec.id);
    std::sort(rec.annotations.begin(), rec.annotations.end(),
              [](const auto& a, const auto& b) {
                return a.first.start < b.first.start;
              });

    FeatureSequence f;
    f.step = step;
    f.values = Eigen::MatrixXd::Zero(cfg.feature_dim, cfg.num_snippets);
    for (const auto& [seg, lab] : rec.annotations) {
      for (int k = 0; k < cfg.num_snippets; ++k) {
        const double t = k * step;
        // Fractional coverage of the snippet cell centred at t.
        const double lo = std::max(seg.start, t - 0.5 * step);
        const double hi = std::min(seg.end, t + 0.5 * step);
        const double coverage = std::max(0.0, hi - lo) / step;
        if (coverage > 0.0) f.values.col(k) += coverage * signatures[lab];
        // Triangular onset bumps around each boundary.
        const double ws = std::max(0.0, 1.0 - std::abs(t - seg.start) / step);
        const double we = std::max(0.0, 1.0 - std::abs(t - seg.end) / step);
        if (ws > 0.0) f.values.col(k) += ws * onset_start;
        if (we > 0.0) f.values.col(k) += we * onset_end;
      }
    }
    const double noise_std = 1.0 / cfg.snr;
    for (int k = 0; k < cfg.num_snippets; ++k)
      for (int d = 0; d < cfg.feature_dim; ++d)
        f.values(d, k) += noise_std * normal(rng);
    // Quantize to the float32 interchange precision so files round-trip.
    for (int k = 0; k < cfg.num_snippets; ++k)
      for (int d = 0; d < cfg.feature_dim; ++d)
        f.values(d, k) = static_cast<double>(static_cast<float>(f.values(d, k)));

    feats.emplace(rec.id, std::move(f));
    ds.videos.push_back(std::move(rec));
  }
  return {std::move(ds), std::move(feats)};
}

// --- annotations -------------------------------------------------------

void save_annotations(const std::string& path, const Dataset& dataset) {
  json db = json::object();
  for (const auto& v : dataset.videos) {
    json anns = json::array();
    for (const auto& [seg, label] : v.annotations) {
      anns.push_back({{"segment", {seg.start, seg.end}},
                      {"label", dataset.labels.at(label)}});
    }
    db[v.id] = {{"duration", v.duration},
                {"subset", split_name(v.split)},
                {"annotations", anns}};
  }
  json root = {{"version", "taldet-annotations-v1"}, {"database", db}};
  atomic_write_text(path, root.dump(2) + "\n");
}

Dataset load_annotations(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("annotations: cannot open " + path);
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw DataError("annotations: malformed JSON in " + path + ": " +
                    e.what());
  }
  if (!root.contains("version") || !root.contains("database"))
    throw DataError("annotations: missing version or database in " + path);

  // First pass collects the vocabulary so ids are stable and sorted.
  std::set<std::string> names;
  for (const auto& [vid, body] : root["database"].items())
    for (const auto& ann : body.at("annotations"))
      names.insert(ann.at("label").is_string()
                       ? ann.at("label").get<std::string>()
                       : class_name(ann.at("label").get<int>()));
  Dataset ds;
  ds.labels.assign(names.begin(), names.end());
  auto label_id = [&](const std::string& name) {
    return static_cast<int>(
        std::lower_bound(ds.labels.begin(), ds.labels.end(), name) -
        ds.labels.begin());
  };

  for (const auto& [vid, body] : root["database"].items()) {
    VideoRecord rec;
    rec.id = vid;
    try {
      rec.duration = body.at("duration").get<double>();
      rec.split = split_from_name(body.at("subset").get<std::string>(), vid);
      for (const auto& ann : body.at("annotations")) {
        const auto& seg = ann.at("segment");
        Segment s{seg.at(0).get<double>(), seg.at(1).get<double>()};
        const std::string name =
            ann.at("label").is_string() ? ann.at("label").get<std::string>()
                                        : class_name(ann.at("label").get<int>());
        rec.annotations.emplace_back(s, label_id(name));
      }
    } catch (const json::exception& e) {
      throw DataError("annotations: malformed record for video " + vid + ": " +
                      e.what());
    }
    if (!(rec.duration > 0.0))
      throw DataError("annotations: non-positive duration in video " + vid);
    for (const auto& [seg, label] : rec.annotations) {
      if (!seg.valid())
        throw DataError("annotations: invalid segment in video " + vid);
      if (seg.end > rec.duration)
        throw DataError("annotations: segment past duration in video " + vid);
    }
    ds.videos.push_back(std::move(rec));
  }
  std::sort(ds.videos.begin(), ds.videos.end(),
            [](const VideoRecord& a, const VideoRecord& b) {
              return a.id < b.id;
            });
  return ds;
}

// --- detections ---------------------------------------------------------

void save_detections(const std::string& path,
                     const std::vector<Detection>& dets) {
  json results = json::object();
  for (const auto& d : dets) {
    results[d.video].push_back({{"segment", {d.segment.start, d.segment.end}},
                                {"score", d.score},
                                {"label", d.label}});
  }
  json root = {{"version", "taldet-detections-v1"}, {"results", results}};
  atomic_write_text(path, root.dump(2) + "\n");
}

std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("detections: cannot open " + path);
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw DataError("detections: malformed JSON in " + path + ": " + e.what());
  }
  if (!root.contains("results"))
    throw DataError("detections: missing results in " + path);
  std::vector<Detection> out;
  for (const auto& [vid, list] : root["results"].items()) {
    for (const auto& item : list) {
      Detection d;
      d.video = vid;
      try {
        d.segment = {item.at("segment").at(0).get<double>(),
                     item.at("segment").at(1).get<double>()};
        d.score = item.at("score").get<double>();
        d.label = item.at("label").get<int>();
      } catch (const json::exception& e) {
        throw DataError("detections: malformed entry for video " + vid + ": " +
                        e.what());
      }
      if (!d.segment.valid())
        throw DataError("detections: invalid segment for video " + vid);
      out.push_back(std::move(d));
    }
  }
  return out;
}

// --- features -----------------------------------------------------------

namespace {
constexpr char kFeatureMagic[8] = {'C', 'T', 'A', 'L', 'F', 'E', 'A', 'T'};
}

void save_features(const std::string& path, const FeatureSequence& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("features: cannot open " + path + " for writing");
  os.write(kFeatureMagic, sizeof(kFeatureMagic));
  const std::uint32_t version = 1;
  const std::uint32_t d = static_cast<std::uint32_t>(f.dim());
  const std::uint32_t ts = static_cast<std::uint32_t>(f.length());
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  os.write(reinterpret_cast<const char*>(&d), sizeof(d));
  os.write(reinterpret_cast<const char*>(&ts), sizeof(ts));
  os.write(reinterpret_cast<const char*>(&f.step), sizeof(f.step));
  for (int r = 0; r < f.dim(); ++r)
    for (int c = 0; c < f.length(); ++c) {
      const float v = static_cast<float>(f.values(r, c));
      os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  if (!os) throw DataError("features: write failed for " + path);
}

FeatureSequence load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("features: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0)
    throw DataError("features: bad magic in " + path);
  std::uint32_t version = 0, d = 0, ts = 0;
  double step = 0.0;
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  is.read(reinterpret_cast<char*>(&d), sizeof(d));
  is.read(reinterpret_cast<char*>(&ts), sizeof(ts));
  is.read(reinterpret_cast<char*>(&step), sizeof(step));
  if (!is) throw DataError("features: truncated header in " + path);
  if (version != 1)
    throw DataError("features: unsupported version in " + path);
  if (d < 1 || ts < 1 || !(step > 0.0))
    throw DataError("features: invalid header in " + path);
  FeatureSequence f;
  f.step = step;
  f.values.resize(d, ts);
  for (std::uint32_t r = 0; r < d; ++r)
    for (std::uint32_t c = 0; c < ts; ++c) {
      float v = 0.0f;
      is.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!is) throw DataError("features: truncated data in " + path);
      f.values(r, c) = static_cast<double>(v);
    }
  return f;
}

// --- class scores --------------------------------------------------------

void save_class_scores(const std::string& path, const ClassScores& scores) {
  json s = json::object();
  for (const auto& [vid, per_class] : scores) {
    json row = json::object();
    for (const auto& [label, score] : per_class) row[label] = score;
    s[vid] = row;
  }
  json root = {{"version", "taldet-class-scores-v1"}, {"scores", s}};
  atomic_write_text(path, root.dump(2) + "\n");
}

ClassScores load_class_scores(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("class scores: cannot open " + path);
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw DataError("class scores: malformed JSON in " + path + ": " +
                    e.what());
  }
  if (!root.contains("scores"))
    throw DataError("class scores: missing scores in " + path);
  ClassScores out;
  for (const auto& [vid, row] : root["scores"].items())
    for (const auto& [label, score] : row.items())
      out[vid][label] = score.get<double>();
  return out;
}

namespace {

template <class Cfg, class Fn>
void visit_synth_fields(Cfg& c, Fn&& fn) {
  fn("num_videos", c.num_videos);
  fn("num_val", c.num_val);
  fn("classes", c.classes);
  fn("duration_min", c.duration_min);
  fn("duration_max", c.duration_max);
  fn("segments_min", c.segments_min);
  fn("segments_max", c.segments_max);
  fn("length_min", c.length_min);
  fn("length_max", c.length_max);
  fn("feature_dim", c.feature_dim);
  fn("num_snippets", c.num_snippets);
  fn("snr", c.snr);
  fn("frames_per_snippet", c.frames_per_snippet);
  fn("seed", c.seed);
}

}  // namespace

SynthConfig load_synth_config(const std::string& path,
                              const SynthConfig& base) {
  std::ifstream is(path);
  if (!is) throw DataError("synth config: cannot open " + path);
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw DataError("synth config: malformed JSON in " + path + ": " +
                    e.what());
  }
  SynthConfig cfg = base;
  std::set<std::string> known;
  visit_synth_fields(cfg, [&](const char* key, auto& field) {
    known.insert(key);
    if (root.contains(key)) {
      try {
        field = root.at(key).get<std::decay_t<decltype(field)>>();
      } catch (const json::exception& e) {
        throw DataError(std::string("synth config: bad value for '") + key +
                        "': " + e.what());
      }
    }
  });
  for (const auto& [key, value] : root.items())
    if (!known.count(key))
      throw DataError("synth config: unknown key '" + key + "' in " + path);
  return cfg;
}

std::string synth_config_to_json(const SynthConfig& cfg) {
  json root;
  visit_synth_fields(const_cast<SynthConfig&>(cfg),
                     [&](const char* key, auto& field) { root[key] = field; });
  return root.dump(2) + "\n";
}

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot open " + tmp + " for writing");
    os << content;
    if (!os) throw DataError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tal
