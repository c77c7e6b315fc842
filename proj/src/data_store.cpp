// SPDX-License-Identifier: Apache-2.0
#include "nsnet/data_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "nsnet/error.hpp"

namespace nsnet {

namespace {

constexpr char kFeatureMagic[4] = {'N', 'S', 'F', '1'};
constexpr const char* kManifestMagic = "NSM1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string feature_bytes(const Array& matrix) {
  if (matrix.rank() < 1 || matrix.rank() > 2) {
    throw ShapeError("feature files hold matrices, got " + shape_str(matrix.shape()));
  }
  const std::size_t n = matrix.rows(), d = matrix.cols();
  if (n == 0 || d == 0) throw ContractError("feature matrix must have N, D >= 1");
  std::string out;
  out.reserve(12 + 4 * n * d);
  out.append(kFeatureMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : matrix.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Array unit_gaussian_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Array out({rows, dim});
  for (std::size_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& v : out.row(r)) {
        v = normal(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (auto& v : out.row(r)) v /= norm;
  }
  return out;
}

double row_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Background centroids at least `min_gap` away from every class centroid in both spaces.
std::pair<Array, Array> background_pool(const Array& light_c, const Array& guide_c, std::size_t count, Rng& rng) {
  constexpr double min_gap = 0.5;
  Array light({count, light_c.cols()}), guide({count, guide_c.cols()});
  for (std::size_t b = 0; b < count; ++b) {
    for (int attempt = 0;; ++attempt) {
      Array l = unit_gaussian_rows(1, light_c.cols(), rng);
      Array g = unit_gaussian_rows(1, guide_c.cols(), rng);
      bool ok = true;
      for (std::size_t c = 0; c < light_c.rows() && ok; ++c) {
        ok = row_distance(l.row(0), light_c.row(c)) >= min_gap && row_distance(g.row(0), guide_c.row(c)) >= min_gap;
      }
      if (ok || attempt >= 1000) {
        std::copy(l.data().begin(), l.data().end(), light.row(b).begin());
        std::copy(g.data().begin(), g.data().end(), guide.row(b).begin());
        break;
      }
    }
  }
  return {std::move(light), std::move(guide)};
}

}  // namespace

void VideoRecord::validate(std::size_t num_classes) const {
  const std::size_t n = light_features.rows();
  require(n >= 1, video_id + ": a video needs at least one frame");
  require(light_features.rank() == 2 && guiding_features.rank() == 2 && recognizer_logits.rank() == 2,
          video_id + ": per-frame arrays must be matrices");
  require(guiding_features.rows() == n && recognizer_logits.rows() == n,
          video_id + ": per-frame arrays disagree on frame count");
  require(label < num_classes, video_id + ": label " + std::to_string(label) + " outside [0, " +
                                   std::to_string(num_classes) + ")");
  require(recognizer_logits.cols() == num_classes, video_id + ": logits width does not match class count");
  if (saliency_mask) {
    require(saliency_mask->size() == n, video_id + ": mask length does not match frame count");
    for (double m : saliency_mask->data()) require(m == 0.0 || m == 1.0, video_id + ": mask entries must be 0 or 1");
  }
}

void atomic_write(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_feature_file(const fs::path& path, const Array& matrix) { atomic_write(path, feature_bytes(matrix)); }

Array read_feature_file(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 12) {
    throw FormatError(path.string() + ": header truncated, expected at least 12 bytes, got " +
                      std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) throw FormatError(path.string() + ": bad magic, not an NSF1 file");
  const std::size_t n = get_u32(bytes, 4), d = get_u32(bytes, 8);
  const std::size_t expected = 12 + 4 * n * d;
  if (bytes.size() != expected) {
    throw FormatError(path.string() + ": length error, expected " + std::to_string(expected) + ", got " +
                      std::to_string(bytes.size()));
  }
  Array out({n, d});
  for (std::size_t i = 0; i < n * d; ++i)
    out[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, 12 + 4 * i)));
  return out;
}

DatasetManifest read_manifest(const fs::path& path) {
  std::istringstream in(read_file_bytes(path));
  DatasetManifest m;
  m.base_dir = path.parent_path();
  m.split = path.stem().string();
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty manifest");
  if (line.rfind(std::string(kManifestMagic) + " C=", 0) != 0) {
    throw FormatError(path.string() + ": missing 'NSM1 C=<int>' header");
  }
  try {
    m.num_classes = std::stoul(line.substr(7));
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": unreadable class count in header");
  }
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 5 && cols.size() != 6) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 5 or 6 tab-separated fields");
    }
    ManifestEntry e;
    e.video_id = cols[0];
    try {
      e.label = std::stoul(cols[1]);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad label '" + cols[1] + "'");
    }
    if (e.label >= m.num_classes) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": label outside [0, C)");
    }
    if (!seen.insert(e.video_id).second) {
      throw FormatError(path.string() + ": duplicate video_id '" + e.video_id + "'");
    }
    e.light_path = cols[2];
    e.guiding_path = cols[3];
    e.logits_path = cols[4];
    if (cols.size() == 6) e.mask_path = fs::path(cols[5]);
    m.records.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::ostringstream out;
  out << kManifestMagic << " C=" << manifest.num_classes << '\n';
  for (const auto& e : manifest.records) {
    out << e.video_id << '\t' << e.label << '\t' << e.light_path.generic_string() << '\t'
        << e.guiding_path.generic_string() << '\t' << e.logits_path.generic_string();
    if (e.mask_path) out << '\t' << e.mask_path->generic_string();
    out << '\n';
  }
  atomic_write(path, out.str());
}

std::vector<VideoRecord> load_records(const DatasetManifest& manifest) {
  std::vector<VideoRecord> out;
  out.reserve(manifest.records.size());
  std::size_t dl = 0, dg = 0;
  for (const auto& e : manifest.records) {
    VideoRecord r;
    r.video_id = e.video_id;
    r.label = e.label;
    r.light_features = read_feature_file(manifest.resolve(e.light_path));
    r.guiding_features = read_feature_file(manifest.resolve(e.guiding_path));
    r.recognizer_logits = read_feature_file(manifest.resolve(e.logits_path));
    if (e.mask_path) {
      Array m = read_feature_file(manifest.resolve(*e.mask_path));
      r.saliency_mask = Array({m.size()}, m.data());
    }
    r.validate(manifest.num_classes);
    if (out.empty()) {
      dl = r.light_features.cols();
      dg = r.guiding_features.cols();
    } else if (r.light_features.cols() != dl || r.guiding_features.cols() != dg) {
      throw FormatError(e.video_id + ": feature dimensions disagree with the rest of the manifest");
    }
    out.push_back(std::move(r));
  }
  return out;
}

DatasetManifest write_dataset(const fs::path& dir, const std::string& split, std::size_t num_classes,
                              const std::vector<VideoRecord>& records) {
  DatasetManifest m;
  m.split = split;
  m.num_classes = num_classes;
  m.base_dir = dir;
  for (const auto& r : records) {
    r.validate(num_classes);
    ManifestEntry e;
    e.video_id = r.video_id;
    e.label = r.label;
    const fs::path rel = fs::path(split) / r.video_id;
    e.light_path = rel.string() + ".light.nsf";
    e.guiding_path = rel.string() + ".guide.nsf";
    e.logits_path = rel.string() + ".logits.nsf";
    write_feature_file(dir / e.light_path, r.light_features);
    write_feature_file(dir / e.guiding_path, r.guiding_features);
    write_feature_file(dir / e.logits_path, r.recognizer_logits);
    if (r.saliency_mask) {
      e.mask_path = fs::path(rel.string() + ".mask.nsf");
      write_feature_file(dir / *e.mask_path, Array({r.saliency_mask->size(), 1}, r.saliency_mask->data()));
    }
    m.records.push_back(std::move(e));
  }
  write_manifest(dir / (split + ".nsm"), m);
  return m;
}

std::vector<std::size_t> presample_indices(std::size_t n, const PresampleConfig& cfg, Rng* rng) {
  require(n >= 1, "presample needs at least one frame");
  require(cfg.num_frames >= 1, "presample needs T >= 1");
  const std::size_t t = cfg.num_frames;
  std::vector<std::size_t> idx(t);
  if (n < t) {
    for (std::size_t i = 0; i < t; ++i) idx[i] = i % n;
    return idx;
  }
  std::size_t offset = 0;
  if (cfg.shift_augment && rng != nullptr) {
    std::uniform_int_distribution<std::size_t> dist(0, n / t);
    offset = dist(*rng);
  }
  for (std::size_t i = 0; i < t; ++i) idx[i] = std::min(n - 1, (2 * i + 1) * n / (2 * t) + offset);
  return idx;
}

VideoRecord gather_frames(const VideoRecord& record, const std::vector<std::size_t>& indices) {
  VideoRecord out;
  out.video_id = record.video_id;
  out.label = record.label;
  out.light_features = record.light_features.gather_rows(indices);
  out.guiding_features = record.guiding_features.gather_rows(indices);
  out.recognizer_logits = record.recognizer_logits.gather_rows(indices);
  if (record.saliency_mask) out.saliency_mask = record.saliency_mask->gather_rows(indices);
  return out;
}

VideoRecord presample(const VideoRecord& record, const PresampleConfig& cfg, Rng* rng) {
  return gather_frames(record, presample_indices(record.num_frames(), cfg, rng));
}

void SyntheticConfig::validate() const {
  require(num_classes >= 2, "synthetic data needs C >= 2");
  require(salient_fraction > 0.0 && salient_fraction <= 1.0, "salient_fraction must lie in (0, 1]");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "noise_sigma must be finite and >= 0");
  require(num_frames >= 1, "synthetic videos need N >= 1");
  require(light_dim >= 1 && guiding_dim >= 1, "feature dimensions must be >= 1");
  require(videos_per_class >= 1, "videos_per_class must be >= 1");
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng = rng_stream(cfg.seed, "data");
  const std::size_t c_count = cfg.num_classes, n = cfg.num_frames;
  SyntheticDataset ds;
  ds.light_centroids = unit_gaussian_rows(c_count, cfg.light_dim, rng);
  ds.guiding_centroids = unit_gaussian_rows(c_count, cfg.guiding_dim, rng);
  auto [bg_light, bg_guide] = background_pool(ds.light_centroids, ds.guiding_centroids, c_count, rng);

  const auto planted =
      static_cast<std::size_t>(std::ceil(cfg.salient_fraction * static_cast<double>(n) - 1e-9));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_bg(0, c_count - 1);

  auto make_video = [&](const std::string& id, std::size_t label) {
    VideoRecord r;
    r.video_id = id;
    r.label = label;
    r.light_features = Array({n, cfg.light_dim});
    r.guiding_features = Array({n, cfg.guiding_dim});
    r.recognizer_logits = Array({n, c_count});
    r.saliency_mask = Array({n});
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = 0; i < planted; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, n - 1);
      std::swap(order[i], order[d(rng)]);
      (*r.saliency_mask)[order[i]] = 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const bool salient = (*r.saliency_mask)[i] == 1.0;
      const std::size_t b = salient ? 0 : pick_bg(rng);
      auto lc = salient ? ds.light_centroids.row(label) : bg_light.row(b);
      auto gc = salient ? ds.guiding_centroids.row(label) : bg_guide.row(b);
      auto lr = r.light_features.row(i);
      for (std::size_t j = 0; j < lr.size(); ++j) lr[j] = lc[j] + cfg.noise_sigma * normal(rng);
      auto gr = r.guiding_features.row(i);
      for (std::size_t j = 0; j < gr.size(); ++j) gr[j] = gc[j] + cfg.noise_sigma * normal(rng);
      for (std::size_t c = 0; c < c_count; ++c)
        r.recognizer_logits.at(i, c) = -row_distance(gr, ds.guiding_centroids.row(c));
    }
    return r;
  };

  auto make_split = [&](const std::string& split, std::size_t per_class, std::vector<VideoRecord>& out) {
    for (std::size_t c = 0; c < c_count; ++c) {
      for (std::size_t v = 0; v < per_class; ++v) {
        std::ostringstream id;
        id << split << "_c" << std::setw(3) << std::setfill('0') << c << "_v" << std::setw(4) << v;
        out.push_back(make_video(id.str(), c));
      }
    }
  };
  make_split("train", cfg.videos_per_class, ds.train);
  make_split("val", cfg.val_videos_per_class, ds.val);
  return ds;
}

}  // namespace nsnet
