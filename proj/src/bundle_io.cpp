#include "d2tpt/bundle_io.hpp"

#include <cmath>
#include <cstring>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "binary.hpp"
#include "d2tpt/errors.hpp"

namespace d2tpt {
namespace fs = std::filesystem;
namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kTextGenFile = "text_gen.f32";
constexpr const char* kTextSpeFile = "text_spe.f32";
constexpr const char* kSamplesFile = "samples.bin";

void write_matrix(const Mat& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) binary::put_f32(out, static_cast<float>(m(i, j)));
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::uint64_t file_size_or_throw(const fs::path& path) {
  std::error_code ec;
  auto size = fs::file_size(path, ec);
  if (ec) throw BundleCorrupt(path.string() + ": " + ec.message());
  return size;
}

Mat read_matrix(const fs::path& path, std::uint32_t rows, std::uint32_t cols) {
  const std::uint64_t expected = 4ull * rows * cols;
  const std::uint64_t actual = file_size_or_throw(path);
  if (actual != expected) {
    std::ostringstream msg;
    msg << path.filename().string() << ": expected " << expected << " bytes (" << rows << "x"
        << cols << " float32), found " << actual;
    throw BundleCorrupt(msg.str());
  }
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != expected) throw BundleCorrupt(path.string() + ": short read");
  Mat m(rows, cols);
  for (std::uint64_t k = 0; k < static_cast<std::uint64_t>(rows) * cols; ++k) {
    float v = binary::get_f32(bytes.data() + 4 * k);
    if (!std::isfinite(v)) {
      throw BundleCorrupt(path.filename().string() + ": non-finite value at byte offset " +
                          std::to_string(4 * k));
    }
    m(static_cast<Eigen::Index>(k / cols), static_cast<Eigen::Index>(k % cols)) = v;
  }
  return m;
}

std::uint32_t count_field(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number_unsigned()) {
    throw BundleCorrupt(std::string("manifest: missing or invalid '") + key + "'");
  }
  auto value = doc[key].get<std::uint64_t>();
  if (value == 0 || value > 0xFFFFFFFFull) {
    throw BundleCorrupt(std::string("manifest: '") + key + "' must be in [1, 2^32)");
  }
  return static_cast<std::uint32_t>(value);
}

BundleManifest parse_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw BundleCorrupt("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw BundleCorrupt("manifest: " + std::string(e.what()));
  }
  BundleManifest m;
  if (!doc.contains("version") || !doc["version"].is_number_unsigned()) {
    throw BundleCorrupt("manifest: missing 'version'");
  }
  m.version = doc["version"].get<std::uint32_t>();
  if (m.version != kBundleVersion) {
    throw VersionMismatch("manifest: version " + std::to_string(m.version) + ", expected " +
                          std::to_string(kBundleVersion));
  }
  m.num_samples = count_field(doc, "num_samples");
  m.num_views = count_field(doc, "num_views");
  m.num_classes = count_field(doc, "num_classes");
  m.dim = count_field(doc, "dim");
  if (!doc.contains("logit_scale") || !doc["logit_scale"].is_number()) {
    throw BundleCorrupt("manifest: missing 'logit_scale'");
  }
  m.logit_scale = doc["logit_scale"].get<double>();
  if (!(m.logit_scale > 0.0) || !std::isfinite(m.logit_scale)) {
    throw BundleCorrupt("manifest: logit_scale must be positive");
  }
  if (doc.contains("class_names") && !doc["class_names"].empty()) {
    m.class_names = doc["class_names"].get<std::vector<std::string>>();
    if (m.class_names.size() != m.num_classes) {
      throw BundleCorrupt("manifest: " + std::to_string(m.class_names.size()) +
                          " class names for " + std::to_string(m.num_classes) + " classes");
    }
  }
  m.provenance = doc.value("provenance", std::string{});
  return m;
}

void check_shapes(const BundleData& data) {
  const auto& m = data.manifest;
  if (data.samples.empty()) throw Error("write_bundle: refusing to write a bundle with no samples");
  if (m.num_samples != data.samples.size()) {
    throw ShapeMismatch("write_bundle: manifest num_samples " + std::to_string(m.num_samples) +
                        " vs " + std::to_string(data.samples.size()) + " samples");
  }
  if (m.num_views == 0 || m.num_classes == 0 || m.dim == 0) {
    throw ShapeMismatch("write_bundle: manifest counts must be >= 1");
  }
  if (!(m.logit_scale > 0.0)) throw ShapeMismatch("write_bundle: logit_scale must be positive");
  if (!m.class_names.empty() && m.class_names.size() != m.num_classes) {
    throw ShapeMismatch("write_bundle: class_names size");
  }
  for (const Mat* t : {&data.text_gen, &data.text_spe}) {
    if (t->rows() != m.num_classes || t->cols() != m.dim) {
      throw ShapeMismatch("write_bundle: text matrix shape");
    }
  }
  for (const auto& s : data.samples) {
    if (s.views.rows() != m.num_views || s.views.cols() != m.dim) {
      throw ShapeMismatch("write_bundle: sample view shape");
    }
    if (s.label >= m.num_classes) throw ShapeMismatch("write_bundle: label out of range");
  }
}

}  // namespace

std::uint64_t samples_file_bytes(std::uint64_t num_samples, std::uint64_t views,
                                 std::uint64_t dim) {
  return kSamplesHeaderBytes + num_samples * (4 + 4 * views * dim);
}

void write_bundle(const BundleData& data, const fs::path& dir) {
  check_shapes(data);
  const auto& m = data.manifest;
  fs::create_directories(dir);

  nlohmann::json doc = {
      {"version", m.version},         {"num_samples", m.num_samples},
      {"num_views", m.num_views},     {"num_classes", m.num_classes},
      {"dim", m.dim},                 {"logit_scale", m.logit_scale},
      {"class_names", m.class_names}, {"provenance", m.provenance},
  };
  {
    std::ofstream out(dir / kManifestFile, std::ios::trunc);
    if (!out) throw Error("cannot open " + (dir / kManifestFile).string() + " for writing");
    out << doc.dump(2) << "\n";
    if (!out) throw Error("write failed: " + (dir / kManifestFile).string());
  }
  write_matrix(data.text_gen, dir / kTextGenFile);
  write_matrix(data.text_spe, dir / kTextSpeFile);

  std::ofstream out(dir / kSamplesFile, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + (dir / kSamplesFile).string() + " for writing");
  out.write(kBundleMagic, 4);
  binary::put_u32(out, m.version);
  binary::put_u32(out, m.num_samples);
  binary::put_u32(out, m.num_views);
  binary::put_u32(out, m.dim);
  for (const auto& s : data.samples) {
    binary::put_u32(out, s.label);
    for (Eigen::Index i = 0; i < s.views.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.views.cols(); ++j) {
        binary::put_f32(out, static_cast<float>(s.views(i, j)));
      }
    }
  }
  if (!out) throw Error("write failed: " + (dir / kSamplesFile).string());
}

BundleReader::BundleReader(const fs::path& dir) : samples_path_(dir / kSamplesFile) {
  if (!fs::is_directory(dir)) throw BundleCorrupt("bundle directory not found: " + dir.string());
  manifest_ = parse_manifest(dir / kManifestFile);
  if (manifest_.class_names.empty()) {
    for (std::uint32_t c = 0; c < manifest_.num_classes; ++c) {
      manifest_.class_names.push_back("class_" + std::to_string(c));
    }
  }
  text_gen_ = read_matrix(dir / kTextGenFile, manifest_.num_classes, manifest_.dim);
  text_spe_ = read_matrix(dir / kTextSpeFile, manifest_.num_classes, manifest_.dim);

  const std::uint64_t expected =
      samples_file_bytes(manifest_.num_samples, manifest_.num_views, manifest_.dim);
  const std::uint64_t actual = file_size_or_throw(samples_path_);
  samples_.open(samples_path_, std::ios::binary);
  if (!samples_) throw BundleCorrupt("cannot open " + samples_path_.string());

  unsigned char header[kSamplesHeaderBytes];
  if (actual < kSamplesHeaderBytes ||
      !samples_.read(reinterpret_cast<char*>(header), kSamplesHeaderBytes)) {
    throw BundleCorrupt("samples.bin: expected " + std::to_string(expected) +
                        " bytes, found " + std::to_string(actual) + " (header truncated)");
  }
  if (std::memcmp(header, kBundleMagic, 4) != 0) {
    throw BundleCorrupt("samples.bin: bad magic at byte offset 0");
  }
  const std::uint32_t version = binary::get_u32(header + 4);
  if (version != kBundleVersion) {
    throw VersionMismatch("samples.bin: version " + std::to_string(version) + ", expected " +
                          std::to_string(kBundleVersion));
  }
  const std::uint32_t count = binary::get_u32(header + 8);
  const std::uint32_t views = binary::get_u32(header + 12);
  const std::uint32_t dim = binary::get_u32(header + 16);
  if (count != manifest_.num_samples || views != manifest_.num_views || dim != manifest_.dim) {
    std::ostringstream msg;
    msg << "samples.bin: header (samples " << count << ", views " << views << ", dim " << dim
        << ") disagrees with manifest (" << manifest_.num_samples << ", "
        << manifest_.num_views << ", " << manifest_.dim << ")";
    throw BundleCorrupt(msg.str());
  }
  if (actual != expected) {
    throw BundleCorrupt("samples.bin: expected " + std::to_string(expected) + " bytes, found " +
                        std::to_string(actual));
  }
  offset_ = kSamplesHeaderBytes;
  buffer_.resize(4 + 4ull * views * dim);
}

std::optional<SampleRecord> BundleReader::next() {
  if (read_ == manifest_.num_samples) return std::nullopt;
  if (!samples_.read(reinterpret_cast<char*>(buffer_.data()),
                     static_cast<std::streamsize>(buffer_.size()))) {
    throw BundleCorrupt("samples.bin: short read at byte offset " + std::to_string(offset_));
  }
  SampleRecord record;
  record.label = binary::get_u32(buffer_.data());
  if (record.label >= manifest_.num_classes) {
    throw BundleCorrupt("samples.bin: label " + std::to_string(record.label) +
                        " out of range at byte offset " + std::to_string(offset_));
  }
  const auto n = static_cast<Eigen::Index>(manifest_.num_views);
  const auto d = static_cast<Eigen::Index>(manifest_.dim);
  record.views.resize(n, d);
  const unsigned char* p = buffer_.data() + 4;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j, p += 4) {
      float v = binary::get_f32(p);
      if (!std::isfinite(v)) {
        throw BundleCorrupt("samples.bin: non-finite value at byte offset " +
                            std::to_string(offset_ + static_cast<std::uint64_t>(p - buffer_.data())));
      }
      record.views(i, j) = v;
    }
  }
  offset_ += buffer_.size();
  ++read_;
  return record;
}

BundleData read_bundle(const fs::path& dir) {
  BundleReader reader(dir);
  BundleData data;
  data.manifest = reader.manifest();
  data.text_gen = reader.text_gen();
  data.text_spe = reader.text_spe();
  while (auto s = reader.next()) data.samples.push_back(std::move(*s));
  return data;
}

}  // namespace d2tpt
