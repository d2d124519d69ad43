#pragma once

// Point cloud to bag-of-visual-words front-end: voxel-grid keypoints,
// spin-image descriptors around PCA normals, a k-means dictionary and
// nearest-centroid encoding.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "localhdp/binary_io.hpp"
#include "localhdp/corpus.hpp"
#include "localhdp/errors.hpp"

namespace localhdp::features {

using Point = Eigen::Vector3d;

struct PointCloud {
  std::vector<Point> points;
  std::vector<Point> normals;  // empty, or one unit normal per point

  bool has_normals() const noexcept { return !normals.empty(); }

  void validate() const {
    if (points.empty()) throw ValidationError("point cloud is empty");
    if (!normals.empty()) {
      if (normals.size() != points.size()) throw ValidationError("normal count differs from point count");
      for (std::size_t i = 0; i < normals.size(); ++i)
        if (std::abs(normals[i].norm() - 1.0) > 1e-6)
          throw ValidationError("normal " + std::to_string(i) + " is not unit length");
    }
  }
};

struct FeatureParams {
  double voxel_size = 0.03;
  std::size_t image_width = 4;
  double support_length = 0.1;

  void validate() const {
    if (!(voxel_size > 0.0)) throw ParameterError("voxel size must be > 0");
    if (image_width < 2) throw ParameterError("image width must be >= 2");
    if (!(support_length > 0.0)) throw ParameterError("support length must be > 0");
  }

  std::size_t descriptor_length() const { return image_width * image_width; }
  bool operator==(const FeatureParams&) const = default;
};

struct SpinImageDescriptor {
  std::vector<double> values;  // image_width² bins, row = β bin, column = α bin
  Point keypoint = Point::Zero();
};

struct Dictionary {
  std::vector<std::vector<double>> centroids;
  FeatureParams params;

  std::size_t size() const noexcept { return centroids.size(); }
  std::size_t descriptor_length() const noexcept { return centroids.empty() ? 0 : centroids.front().size(); }
  bool operator==(const Dictionary&) const = default;
};

// ---------------------------------------------------------------- keypoints

/// Indices of the points nearest to each occupied voxel's center, ordered by
/// voxel coordinate. Ties go to the lower point index.
inline std::vector<std::size_t> select_keypoint_indices(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw ParameterError("voxel size must be > 0");
  if (cloud.points.empty()) throw ValidationError("point cloud is empty");
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  std::map<Key, std::pair<std::size_t, double>> best;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    const Eigen::Array3d cell = (p.array() / voxel_size).floor();
    const Key key{static_cast<std::int64_t>(cell[0]), static_cast<std::int64_t>(cell[1]),
                  static_cast<std::int64_t>(cell[2])};
    const Point center = ((cell + 0.5) * voxel_size).matrix();
    const double d = (p - center).squaredNorm();
    auto [it, inserted] = best.try_emplace(key, i, d);
    if (!inserted && d < it->second.second) it->second = {i, d};
  }
  std::vector<std::size_t> out;
  out.reserve(best.size());
  for (const auto& [_, v] : best) out.push_back(v.first);
  return out;
}

inline std::vector<Point> select_keypoints(const PointCloud& cloud, double voxel_size) {
  std::vector<Point> out;
  for (auto i : select_keypoint_indices(cloud, voxel_size)) out.push_back(cloud.points[i]);
  return out;
}

// ---------------------------------------------------------------- normals

/// PCA normal over the k nearest neighbours (the point itself included),
/// oriented toward the sensor origin.
inline Point estimate_normal(const PointCloud& cloud, const Point& at, std::size_t k = 10) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) dist.emplace_back((cloud.points[i] - at).squaredNorm(), i);
  const auto n = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(n), dist.end());
  if (n < 3) throw DescriptorError("fewer than 3 neighbours for normal estimation");

  Point mean = Point::Zero();
  for (std::size_t i = 0; i < n; ++i) mean += cloud.points[dist[i].second];
  mean /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Point d = cloud.points[dist[i].second] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  const auto& ev = solver.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2])
    throw DescriptorError("degenerate neighbourhood: normal undefined");
  Point normal = solver.eigenvectors().col(0).normalized();
  if (normal.dot(-at) < 0.0) normal = -normal;
  return normal;
}

// ---------------------------------------------------------------- spin images

/// Spin image around an oriented point. α is the radial distance from the
/// normal axis, β the signed height along it; points with α > SL or |β| > SL
/// and points coincident with the keypoint are dropped.
inline SpinImageDescriptor spin_image(const PointCloud& cloud, const Point& keypoint, const Point& normal,
                                      const FeatureParams& params) {
  params.validate();
  if (!(normal.norm() > 0.0) || !normal.allFinite()) throw DescriptorError("zero or non-finite keypoint normal");
  const Point n = normal.normalized();
  const auto iw = params.image_width;
  const double sl = params.support_length;
  SpinImageDescriptor d;
  d.keypoint = keypoint;
  d.values.assign(iw * iw, 0.0);
  for (const auto& p : cloud.points) {
    const Point diff = p - keypoint;
    const double sq = diff.squaredNorm();
    if (sq == 0.0) continue;
    const double beta = n.dot(diff);
    const double alpha = std::sqrt(std::max(sq - beta * beta, 0.0));
    if (alpha > sl || std::abs(beta) > sl) continue;
    const auto col = std::min(static_cast<std::size_t>(alpha / sl * static_cast<double>(iw)), iw - 1);
    const auto row = std::min(static_cast<std::size_t>((beta + sl) / (2.0 * sl) * static_cast<double>(iw)), iw - 1);
    d.values[row * iw + col] += 1.0;
  }
  return d;
}

/// Uses the cloud's own normal at `index` when present, otherwise estimates one.
inline SpinImageDescriptor spin_image(const PointCloud& cloud, std::size_t index, const FeatureParams& params) {
  const Point& p = cloud.points.at(index);
  const Point normal = cloud.has_normals() ? cloud.normals[index] : estimate_normal(cloud, p);
  return spin_image(cloud, p, normal, params);
}

struct CloudDescription {
  std::vector<SpinImageDescriptor> descriptors;  // in keypoint order
  std::vector<std::size_t> skipped;              // keypoint indices with undefined normals
};

inline CloudDescription describe_cloud(const PointCloud& cloud, const FeatureParams& params) {
  params.validate();
  cloud.validate();
  CloudDescription out;
  for (auto idx : select_keypoint_indices(cloud, params.voxel_size)) {
    try {
      out.descriptors.push_back(spin_image(cloud, idx, params));
    } catch (const DescriptorError&) {
      out.skipped.push_back(idx);
    }
  }
  return out;
}

// ---------------------------------------------------------------- dictionary

namespace detail {

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

/// Index of the nearest centroid; ties go to the lowest index.
inline std::size_t nearest_centroid(const std::vector<double>& x, const std::vector<std::vector<double>>& centroids,
                                    double* squared_dist = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = detail::squared_distance(x, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (squared_dist) *squared_dist = best_d;
  return best;
}

struct KMeansResult {
  Dictionary dictionary;
  std::vector<double> sse_history;  // within-cluster SSE after each assignment step
};

struct KMeansOptions {
  int max_iters = 100;
  double rel_tol = 1e-6;
};

/// k-means with k-means++ seeding. Empty clusters are re-seeded from the
/// point farthest from its current centroid.
inline KMeansResult build_dictionary(const std::vector<std::vector<double>>& data, std::size_t vocabulary_size,
                                     std::uint64_t seed, const FeatureParams& params = {},
                                     const KMeansOptions& opts = {}) {
  if (vocabulary_size < 1) throw ParameterError("dictionary size must be >= 1");
  if (data.size() < vocabulary_size)
    throw ParameterError("only " + std::to_string(data.size()) + " descriptors for a dictionary of " +
                         std::to_string(vocabulary_size) + " words; use V <= " + std::to_string(data.size()));
  const auto dim = data.front().size();
  for (const auto& x : data)
    if (x.size() != dim) throw ParameterError("descriptors have differing lengths");

  const auto n = data.size();
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> centroids;
  centroids.reserve(vocabulary_size);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  centroids.push_back(data[first]);
  chosen[first] = true;
  while (centroids.size() < vocabulary_size) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], detail::squared_distance(data[i], centroids.back()));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && acc >= r) {
          pick = i;
          break;
        }
      }
      if (pick == n)  // rounding at the tail
        for (std::size_t i = n; i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
    } else {
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) free.push_back(i);
      pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    chosen[pick] = true;
    centroids.push_back(data[pick]);
  }

  KMeansResult result;
  std::vector<std::size_t> assign(n);
  std::vector<double> dist(n);
  for (int iter = 0;; ++iter) {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = nearest_centroid(data[i], centroids, &dist[i]);
      sse += dist[i];
    }
    const bool converged =
        !result.sse_history.empty() && (result.sse_history.back() - sse) <= opts.rel_tol * result.sse_history.back();
    result.sse_history.push_back(sse);
    if (converged || sse == 0.0 || iter >= opts.max_iters) break;

    std::vector<std::vector<double>> sums(vocabulary_size, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> sizes(vocabulary_size, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[assign[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[assign[i]][j] += data[i][j];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < vocabulary_size; ++c) {
      if (sizes[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) centroids[c][j] = sums[c][j] / static_cast<double>(sizes[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      taken[far] = true;
      centroids[c] = data[far];
    }
  }
  result.dictionary.centroids = std::move(centroids);
  result.dictionary.params = params;
  return result;
}

inline KMeansResult build_dictionary(const std::vector<SpinImageDescriptor>& descriptors, std::size_t vocabulary_size,
                                     std::uint64_t seed, const FeatureParams& params = {},
                                     const KMeansOptions& opts = {}) {
  std::vector<std::vector<double>> data;
  data.reserve(descriptors.size());
  for (const auto& d : descriptors) data.push_back(d.values);
  return build_dictionary(data, vocabulary_size, seed, params, opts);
}

inline BowDocument encode_bow(const std::vector<SpinImageDescriptor>& descriptors, const Dictionary& dict,
                              std::string source_id = {}) {
  std::vector<WordId> words;
  words.reserve(descriptors.size());
  for (const auto& d : descriptors) {
    if (d.values.size() != dict.descriptor_length())
      throw EncodingError("descriptor length " + std::to_string(d.values.size()) +
                          " does not match dictionary length " + std::to_string(dict.descriptor_length()));
    words.push_back(static_cast<WordId>(nearest_centroid(d.values, dict.centroids)));
  }
  return BowDocument::from_words(words, std::move(source_id));
}

// ---------------------------------------------------------------- persistence

inline void write_dictionary(io::ByteWriter& w, const Dictionary& d) {
  w.u64(d.size());
  w.u64(d.descriptor_length());
  w.f64(d.params.voxel_size);
  w.u64(d.params.image_width);
  w.f64(d.params.support_length);
  for (const auto& c : d.centroids)
    for (double x : c) w.f64(x);
}

inline Dictionary read_dictionary(io::ByteReader& r) {
  Dictionary d;
  const auto v = r.u64();
  const auto dim = r.u64();
  d.params.voxel_size = r.f64();
  d.params.image_width = r.u64();
  d.params.support_length = r.f64();
  if (v == 0 || dim == 0) throw IntegrityError("dictionary block has zero size");
  if (v > (1u << 30) || dim > (1u << 20)) throw IntegrityError("implausible dictionary dimensions");
  d.centroids.assign(v, std::vector<double>(dim));
  for (auto& c : d.centroids)
    for (auto& x : c) x = r.f64();
  return d;
}

inline constexpr std::string_view kDictionaryMagic = "LHDPDICT";
inline constexpr std::uint32_t kDictionaryVersion = 1;

inline void save_dictionary(const std::string& path, const Dictionary& d) {
  io::ByteWriter w;
  write_dictionary(w, d);
  io::write_file(path, io::frame(kDictionaryMagic, kDictionaryVersion, w.bytes()));
}

inline Dictionary load_dictionary(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(io::unframe(bytes, kDictionaryMagic, kDictionaryVersion));
  auto d = read_dictionary(r);
  if (!r.at_end()) throw IntegrityError("trailing bytes in dictionary");
  return d;
}

/// Plain `x y z [nx ny nz]` lines; `#` starts a comment.
inline PointCloud parse_xyz(std::istream& in) {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ss(line);
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (!ss.eof()) throw ParseError("non-numeric token", lineno);
    if (v.empty()) continue;
    if (v.size() != 3 && v.size() != 6) throw ParseError("expected 3 or 6 values, got " + std::to_string(v.size()), lineno);
    const bool with_normal = v.size() == 6;
    if (!cloud.points.empty() && with_normal != cloud.has_normals())
      throw ParseError("mixed lines with and without normals", lineno);
    cloud.points.emplace_back(v[0], v[1], v[2]);
    if (with_normal) cloud.normals.emplace_back(v[3], v[4], v[5]);
  }
  return cloud;
}

/// ASCII PLY; reads x, y, z and optional nx, ny, nz of the vertex element.
inline PointCloud parse_ply(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() {
    if (!std::getline(in, line)) throw ParseError("unexpected end of PLY file", lineno);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next();
  if (line != "ply") throw ParseError("missing 'ply' magic", lineno);

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
  };
  std::vector<Element> elements;
  bool ascii = false;
  for (;;) {
    next();
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "end_header") break;
    if (kw == "format") {
      std::string fmt;
      ss >> fmt;
      ascii = fmt == "ascii";
    } else if (kw == "element") {
      Element e;
      ss >> e.name >> e.count;
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw ParseError("property before element", lineno);
      std::string type, name;
      ss >> type;
      if (type == "list") {
        std::string a, b;
        ss >> a >> b;
      }
      ss >> name;
      elements.back().props.push_back(name);
    }
  }
  if (!ascii) throw ParseError("only ASCII PLY is supported", lineno);

  PointCloud cloud;
  for (const auto& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i) next();
      continue;
    }
    auto find = [&](const char* p) -> std::ptrdiff_t {
      auto it = std::find(e.props.begin(), e.props.end(), p);
      return it == e.props.end() ? -1 : it - e.props.begin();
    };
    const std::array<std::ptrdiff_t, 3> xyz{find("x"), find("y"), find("z")};
    const std::array<std::ptrdiff_t, 3> nxyz{find("nx"), find("ny"), find("nz")};
    if (xyz[0] < 0 || xyz[1] < 0 || xyz[2] < 0) throw ParseError("vertex element lacks x/y/z", lineno);
    const bool normals = nxyz[0] >= 0 && nxyz[1] >= 0 && nxyz[2] >= 0;
    for (std::size_t i = 0; i < e.count; ++i) {
      next();
      std::istringstream ss(line);
      std::vector<double> vals;
      double x;
      while (ss >> x) vals.push_back(x);
      if (vals.size() < e.props.size()) throw ParseError("too few vertex values", lineno);
      cloud.points.emplace_back(vals[xyz[0]], vals[xyz[1]], vals[xyz[2]]);
      if (normals) cloud.normals.emplace_back(vals[nxyz[0]], vals[nxyz[1]], vals[nxyz[2]]);
    }
  }
  return cloud;
}

/// Chooses the parser by extension (`.ply`, anything else is xyz).
inline PointCloud load_point_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  const bool ply = path.size() >= 4 && path.compare(path.size() - 4, 4, ".ply") == 0;
  auto cloud = ply ? parse_ply(in) : parse_xyz(in);
  cloud.validate();
  return cloud;
}

}  // namespace localhdp::features
