#pragma once

// On-disk embedding bundle. A bundle is a directory holding
//
//   manifest.json   UTF-8 JSON: version, num_samples, num_views, num_classes,
//                   dim, logit_scale, class_names, provenance
//   text_gen.f32    C x D float32 little-endian, row-major
//   text_spe.f32    C x D float32 little-endian, row-major
//   samples.bin     "D2TB", u32 version, u32 num_samples, u32 N, u32 D,
//                   then per sample: u32 label, N*D float32 (row 0 = original)
//
// All integers are little-endian u32.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "d2tpt/numerics.hpp"

namespace d2tpt {

inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr char kBundleMagic[4] = {'D', '2', 'T', 'B'};
inline constexpr std::uint64_t kSamplesHeaderBytes = 20;

struct BundleManifest {
  std::uint32_t version = kBundleVersion;
  std::uint32_t num_samples = 0;
  std::uint32_t num_views = 0;
  std::uint32_t num_classes = 0;
  std::uint32_t dim = 0;
  double logit_scale = 100.0;  // exp(s) = 1 / temperature
  std::vector<std::string> class_names;
  std::string provenance;
};

// One test image: row 0 is the original view, rows 1..N-1 its augmentations.
struct SampleRecord {
  Mat views;  // N x D
  std::uint32_t label = 0;
};

struct BundleData {
  BundleManifest manifest;
  Mat text_gen;  // C x D
  Mat text_spe;  // C x D
  std::vector<SampleRecord> samples;
};

// Exact size of samples.bin for the given shape.
std::uint64_t samples_file_bytes(std::uint64_t num_samples, std::uint64_t views,
                                 std::uint64_t dim);

// Writes the four bundle files into `dir`, creating it if needed. Values are
// narrowed to float32. Throws Error on inconsistent shapes or an empty sample
// list, and on I/O failure.
void write_bundle(const BundleData& data, const std::filesystem::path& dir);

// Streaming reader. The constructor validates the manifest, both text files
// and the full size and header of samples.bin; next() then validates each
// sample as it is read. Features are returned exactly as stored.
class BundleReader {
 public:
  explicit BundleReader(const std::filesystem::path& dir);

  const BundleManifest& manifest() const { return manifest_; }
  const Mat& text_gen() const { return text_gen_; }
  const Mat& text_spe() const { return text_spe_; }

  // Next sample in file order, or nullopt after the last one.
  std::optional<SampleRecord> next();

 private:
  std::filesystem::path samples_path_;
  BundleManifest manifest_;
  Mat text_gen_;
  Mat text_spe_;
  std::ifstream samples_;
  std::uint32_t read_ = 0;
  std::uint64_t offset_ = 0;
  std::vector<unsigned char> buffer_;
};

// Reads a whole bundle into memory.
BundleData read_bundle(const std::filesystem::path& dir);

// Parameters of the deterministic synthetic fixture.
struct SynthParams {
  std::uint64_t seed = 42;
  std::uint32_t classes = 10;
  std::uint32_t dim = 32;
  std::uint32_t views = 16;
  std::uint32_t samples = 200;
  double shift = 0.6;
  double noise = 0.3;
};

// Builds a labelled bundle with a known class-conditional shift between the
// image views and the text anchors. A pure function of `params`.
BundleData synth_fixture(const SynthParams& params);

}  // namespace d2tpt
