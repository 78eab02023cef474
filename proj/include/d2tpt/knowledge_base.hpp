#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <vector>

#include "d2tpt/numerics.hpp"

namespace d2tpt {

struct RegisterEntry {
  Vec feature;  // unit norm
  double entropy = 0.0;
};

// Per-class registers of confident visual features, each holding at most
// `capacity` entries sorted by ascending entropy. Single writer.
class KnowledgeBase {
 public:
  explicit KnowledgeBase(std::size_t capacity);

  // Offers (feature, entropy) to the register of `label`:
  //   empty register           -> {entry}
  //   size < capacity          -> append
  //   full, entropy < max      -> the max-entropy entry is replaced
  //   full, entropy >= max     -> unchanged
  // The register is re-sorted after every change. Returns whether the entry
  // was stored.
  bool update(const Vec& feature, std::size_t label, double entropy);

  std::size_t capacity() const { return capacity_; }
  bool empty() const { return registers_.empty(); }
  std::size_t total_entries() const;
  const std::map<std::size_t, std::vector<RegisterEntry>>& registers() const {
    return registers_;
  }
  // Empty vector for classes with no entries.
  const std::vector<RegisterEntry>& entries(std::size_t label) const;

 private:
  std::size_t capacity_;
  std::map<std::size_t, std::vector<RegisterEntry>> registers_;
};

// Read-only key/value snapshot of the knowledge base.
struct RetrievalTables {
  Mat keys;                                  // C_kb x D, unit rows
  Mat values;                                // C_kb x C, one-hot rows
  std::vector<std::size_t> class_ids;        // class of each row
  std::vector<std::size_t> skipped_classes;  // registers whose mean was degenerate

  bool empty() const { return keys.rows() == 0; }
};

// One row per non-empty register: key is the renormalized mean of the stored
// features, value the class one-hot. Registers whose mean has (near) zero
// norm are listed in skipped_classes. Throws EmptyKnowledgeBase when the
// knowledge base holds no entries.
RetrievalTables build_tables(const KnowledgeBase& kb, std::size_t num_classes);

// lambda * exp(-gamma * (1 - query . key_j)) summed into the one-hot value
// rows. Returns zeros when the tables are empty.
Vec retrieval_logits(const Vec& query, const RetrievalTables& tables, double lambda,
                     double gamma, std::size_t num_classes);

// Adds l_r to every row of logits.
Mat modulate(const Mat& logits, const Vec& l_r);

// Debug snapshot: `json_path` maps class id to [{entropy, feature_file_offset}]
// where the offset is a byte offset into `blob_path`, a flat little-endian
// float32 array of D values per entry.
void write_snapshot(const KnowledgeBase& kb, const std::filesystem::path& json_path,
                    const std::filesystem::path& blob_path);

// Inverse of write_snapshot. Features come back at float32 precision.
KnowledgeBase read_snapshot(const std::filesystem::path& json_path,
                            const std::filesystem::path& blob_path, std::size_t capacity,
                            std::size_t dim);

}  // namespace d2tpt
