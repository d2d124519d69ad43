#pragma once

// Registry snapshots.
//
// File: frame("LHDPSNAP", version 1) around a payload of
//   u64 V, u64 registry seed,
//   hyperparameters: u64 K, u64 T, f64 gamma_top, alpha0, eta, tau0, kappa,
//   inference options: f64 tol, u64 max_iters,
//   u8 has_dictionary [+ dictionary block],
//   u64 category count, then per category (lexicographic label order):
//     str label, u64 t0, u64 doc_count, f64 lambda (K*V, row-major),
//     f64 u (K-1), f64 v (K-1), u64 instance count,
//     per instance: str source id, varint entries, (varint id, varint count)...
// Integers and IEEE-754 doubles are little-endian; str is a varint length
// followed by bytes.

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>

#include "localhdp/binary_io.hpp"
#include "localhdp/features.hpp"
#include "localhdp/registry.hpp"

namespace localhdp {

inline constexpr std::string_view kSnapshotMagic = "LHDPSNAP";
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct Snapshot {
  Registry registry;
  std::optional<features::Dictionary> dictionary;
};

inline std::vector<std::uint8_t> encode_snapshot(const Registry& reg,
                                                 const std::optional<features::Dictionary>& dict = {}) {
  io::ByteWriter w;
  const auto& h = reg.hyper();
  w.u64(reg.dictionary_size());
  w.u64(reg.seed());
  w.u64(h.max_topics);
  w.u64(h.max_tables);
  w.f64(h.gamma_top);
  w.f64(h.alpha0);
  w.f64(h.eta);
  w.f64(h.tau0);
  w.f64(h.kappa);
  w.f64(reg.inference().tol);
  w.u64(static_cast<std::uint64_t>(reg.inference().max_iters));
  w.u8(dict ? 1 : 0);
  if (dict) features::write_dictionary(w, *dict);
  w.u64(reg.size());
  for (const auto& label : reg.labels()) {
    const auto& c = reg.category(label);
    w.str(label.str());
    w.u64(c.model.t0);
    w.u64(c.model.doc_count);
    for (Eigen::Index k = 0; k < c.model.lambda.rows(); ++k)
      for (Eigen::Index x = 0; x < c.model.lambda.cols(); ++x) w.f64(c.model.lambda(k, x));
    for (Eigen::Index k = 0; k < c.model.u.size(); ++k) w.f64(c.model.u[k]);
    for (Eigen::Index k = 0; k < c.model.v.size(); ++k) w.f64(c.model.v[k]);
    w.u64(c.instances.size());
    for (const auto& doc : c.instances) {
      w.str(doc.source_id());
      w.varint(doc.unique_words());
      for (const auto& e : doc.entries()) {
        w.varint(e.id);
        w.varint(e.count);
      }
    }
  }
  return io::frame(kSnapshotMagic, kSnapshotVersion, w.bytes());
}

inline Snapshot decode_snapshot(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(io::unframe(bytes, kSnapshotMagic, kSnapshotVersion));
  const auto V = r.u64();
  const auto seed = r.u64();
  hdp::Hyperparams h;
  h.max_topics = r.u64();
  h.max_tables = r.u64();
  h.gamma_top = r.f64();
  h.alpha0 = r.f64();
  h.eta = r.f64();
  h.tau0 = r.f64();
  h.kappa = r.f64();
  hdp::InferenceOptions opts;
  opts.tol = r.f64();
  opts.max_iters = static_cast<int>(r.u64());
  std::optional<features::Dictionary> dict;
  if (r.u8()) dict = features::read_dictionary(r);
  if (V == 0 || h.max_topics > (1u << 20) || V > (1u << 30)) throw IntegrityError("implausible snapshot dimensions");

  Snapshot s{Registry(V, h, seed, opts), std::move(dict)};
  const auto K = static_cast<Eigen::Index>(h.max_topics);
  const auto ncat = r.u64();
  for (std::uint64_t c = 0; c < ncat; ++c) {
    CategoryLabel label(r.str());
    Registry::Category cat;
    auto& m = cat.model;
    m.hyper = h;
    m.t0 = r.u64();
    m.doc_count = r.u64();
    m.lambda.resize(K, static_cast<Eigen::Index>(V));
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index x = 0; x < m.lambda.cols(); ++x) m.lambda(k, x) = r.f64();
    m.u.resize(K - 1);
    m.v.resize(K - 1);
    for (Eigen::Index k = 0; k + 1 < K; ++k) m.u[k] = r.f64();
    for (Eigen::Index k = 0; k + 1 < K; ++k) m.v[k] = r.f64();
    const auto ninst = r.u64();
    for (std::uint64_t i = 0; i < ninst; ++i) {
      auto source = r.str();
      const auto nentries = r.varint();
      std::vector<WordCount> entries;
      for (std::uint64_t e = 0; e < nentries; ++e) {
        const auto id = r.varint();
        const auto count = r.varint();
        if (id >= V || count == 0 || count > UINT32_MAX) throw IntegrityError("invalid stored instance");
        entries.push_back({static_cast<WordId>(id), static_cast<std::uint32_t>(count)});
      }
      cat.instances.emplace_back(std::move(entries), std::move(source));
    }
    s.registry.restore(label, std::move(cat));
  }
  if (!r.at_end()) throw IntegrityError("trailing bytes in snapshot payload");
  return s;
}

inline void save_snapshot(const std::string& path, const Registry& reg,
                          const std::optional<features::Dictionary>& dict = {}) {
  io::write_file(path, encode_snapshot(reg, dict));
}

inline Snapshot load_snapshot(const std::string& path) { return decode_snapshot(io::read_file(path)); }

/// Lossless text rendering (doubles printed with 17 significant digits).
inline void dump_snapshot(std::ostream& out, const Snapshot& s) {
  auto num = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  const auto& reg = s.registry;
  const auto& h = reg.hyper();
  out << "format_version " << kSnapshotVersion << '\n'
      << "dictionary_size " << reg.dictionary_size() << '\n'
      << "seed " << reg.seed() << '\n'
      << "max_topics " << h.max_topics << '\n'
      << "max_tables " << h.max_tables << '\n'
      << "gamma_top " << num(h.gamma_top) << '\n'
      << "alpha0 " << num(h.alpha0) << '\n'
      << "eta " << num(h.eta) << '\n'
      << "tau0 " << num(h.tau0) << '\n'
      << "kappa " << num(h.kappa) << '\n'
      << "inference_tol " << num(reg.inference().tol) << '\n'
      << "inference_max_iters " << reg.inference().max_iters << '\n';
  if (s.dictionary) {
    const auto& d = *s.dictionary;
    out << "dictionary " << d.size() << ' ' << d.descriptor_length() << ' ' << num(d.params.voxel_size) << ' '
        << d.params.image_width << ' ' << num(d.params.support_length) << '\n';
    for (const auto& c : d.centroids) {
      out << "centroid";
      for (double x : c) out << ' ' << num(x);
      out << '\n';
    }
  }
  out << "categories " << reg.size() << '\n';
  for (const auto& label : reg.labels()) {
    const auto& c = reg.category(label);
    out << "category " << label.str() << " t0 " << c.model.t0 << " doc_count " << c.model.doc_count << '\n';
    for (Eigen::Index k = 0; k < c.model.lambda.rows(); ++k) {
      out << "lambda " << k;
      for (Eigen::Index x = 0; x < c.model.lambda.cols(); ++x) out << ' ' << num(c.model.lambda(k, x));
      out << '\n';
    }
    out << "u";
    for (Eigen::Index k = 0; k < c.model.u.size(); ++k) out << ' ' << num(c.model.u[k]);
    out << "\nv";
    for (Eigen::Index k = 0; k < c.model.v.size(); ++k) out << ' ' << num(c.model.v[k]);
    out << '\n';
    for (const auto& doc : c.instances) {
      out << "instance " << (doc.source_id().empty() ? "-" : doc.source_id()) << ' ' << doc.total_words();
      for (const auto& e : doc.entries()) out << ' ' << e.id << ':' << e.count;
      out << '\n';
    }
  }
}

}  // namespace localhdp
