#include "d2tpt/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

#include "binary.hpp"
#include "d2tpt/errors.hpp"

namespace d2tpt {
namespace {

constexpr double kUnitTolerance = 1e-6;

void sort_register(std::vector<RegisterEntry>& reg) {
  std::stable_sort(reg.begin(), reg.end(), [](const RegisterEntry& a, const RegisterEntry& b) {
    return a.entropy < b.entropy;
  });
}

}  // namespace

KnowledgeBase::KnowledgeBase(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("knowledge base capacity must be >= 1");
}

bool KnowledgeBase::update(const Vec& feature, std::size_t label, double entropy) {
  if (!std::isfinite(entropy)) throw NonFinite("kb update: non-finite entropy");
  if (!feature.allFinite()) throw NonFinite("kb update: non-finite feature");
  if (std::abs(feature.norm() - 1.0) > kUnitTolerance) {
    throw DegenerateVector("kb update: feature is not unit norm");
  }
  if (!registers_.empty() &&
      registers_.begin()->second.front().feature.size() != feature.size()) {
    throw ShapeMismatch("kb update: feature dimension changed");
  }
  auto& reg = registers_[label];
  if (reg.size() < capacity_) {
    reg.push_back({feature, entropy});
    sort_register(reg);
    return true;
  }
  // Sorted ascending, so the max-entropy entry is last.
  if (entropy < reg.back().entropy) {
    reg.back() = {feature, entropy};
    sort_register(reg);
    return true;
  }
  return false;
}

std::size_t KnowledgeBase::total_entries() const {
  std::size_t total = 0;
  for (const auto& [label, reg] : registers_) total += reg.size();
  return total;
}

const std::vector<RegisterEntry>& KnowledgeBase::entries(std::size_t label) const {
  static const std::vector<RegisterEntry> kEmpty;
  auto it = registers_.find(label);
  return it == registers_.end() ? kEmpty : it->second;
}

RetrievalTables build_tables(const KnowledgeBase& kb, std::size_t num_classes) {
  if (kb.empty()) throw EmptyKnowledgeBase("build_tables: knowledge base is empty");
  RetrievalTables tables;
  std::vector<Vec> keys;
  for (const auto& [label, reg] : kb.registers()) {
    if (label >= num_classes) {
      throw ShapeMismatch("build_tables: class " + std::to_string(label) + " out of range");
    }
    Vec mean = Vec::Zero(reg.front().feature.size());
    for (const auto& entry : reg) mean += entry.feature;
    mean /= static_cast<double>(reg.size());
    try {
      keys.push_back(l2_normalize(mean));
      tables.class_ids.push_back(label);
    } catch (const DegenerateVector&) {
      tables.skipped_classes.push_back(label);
    }
  }
  const auto rows = static_cast<Eigen::Index>(keys.size());
  const Eigen::Index dim = keys.empty() ? 0 : keys.front().size();
  tables.keys = Mat::Zero(rows, dim);
  tables.values = Mat::Zero(rows, static_cast<Eigen::Index>(num_classes));
  for (Eigen::Index j = 0; j < rows; ++j) {
    tables.keys.row(j) = keys[static_cast<std::size_t>(j)].transpose();
    tables.values(j, static_cast<Eigen::Index>(tables.class_ids[static_cast<std::size_t>(j)])) =
        1.0;
  }
  return tables;
}

Vec retrieval_logits(const Vec& query, const RetrievalTables& tables, double lambda,
                     double gamma, std::size_t num_classes) {
  if (!(lambda >= 0.0)) throw ConfigError("retrieval: lambda must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("retrieval: gamma must be > 0");
  Vec out = Vec::Zero(static_cast<Eigen::Index>(num_classes));
  if (tables.empty() || lambda == 0.0) return out;
  if (tables.keys.cols() != query.size()) throw ShapeMismatch("retrieval: query dimension");
  if (tables.values.cols() != out.size()) throw ShapeMismatch("retrieval: class count");
  Vec affinity = (tables.keys * query).array() - 1.0;
  affinity = lambda * (gamma * affinity.array()).exp();
  out.noalias() = tables.values.transpose() * affinity;
  return out;
}

Mat modulate(const Mat& logits, const Vec& l_r) {
  if (logits.cols() != l_r.size()) {
    throw ShapeMismatch("modulate: " + std::to_string(logits.cols()) + " logit columns vs " +
                        std::to_string(l_r.size()) + " retrieval entries");
  }
  return logits.rowwise() + l_r.transpose();
}

void write_snapshot(const KnowledgeBase& kb, const std::filesystem::path& json_path,
                    const std::filesystem::path& blob_path) {
  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) throw Error("cannot open " + blob_path.string() + " for writing");
  nlohmann::json doc = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [label, reg] : kb.registers()) {
    auto& list = doc[std::to_string(label)] = nlohmann::json::array();
    for (const auto& entry : reg) {
      list.push_back({{"entropy", entry.entropy}, {"feature_file_offset", offset}});
      for (double x : entry.feature) binary::put_f32(blob, static_cast<float>(x));
      offset += 4 * static_cast<std::uint64_t>(entry.feature.size());
    }
  }
  if (!blob) throw Error("write failed: " + blob_path.string());
  std::ofstream json(json_path, std::ios::trunc);
  if (!json) throw Error("cannot open " + json_path.string() + " for writing");
  json << doc.dump(2) << "\n";
  if (!json) throw Error("write failed: " + json_path.string());
}

KnowledgeBase read_snapshot(const std::filesystem::path& json_path,
                            const std::filesystem::path& blob_path, std::size_t capacity,
                            std::size_t dim) {
  std::ifstream json(json_path);
  if (!json) throw Error("cannot open " + json_path.string());
  nlohmann::json doc = nlohmann::json::parse(json);
  std::ifstream blob_in(blob_path, std::ios::binary);
  if (!blob_in) throw Error("cannot open " + blob_path.string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(blob_in)),
                                  std::istreambuf_iterator<char>());
  KnowledgeBase kb(capacity);
  for (const auto& [key, list] : doc.items()) {
    std::size_t label = std::stoul(key);
    for (const auto& item : list) {
      auto offset = item.at("feature_file_offset").get<std::uint64_t>();
      if (offset + 4 * dim > blob.size()) {
        throw BundleCorrupt("snapshot feature offset " + std::to_string(offset) +
                            " past end of blob (" + std::to_string(blob.size()) + " bytes)");
      }
      Vec feature(static_cast<Eigen::Index>(dim));
      for (std::size_t d = 0; d < dim; ++d) {
        feature(static_cast<Eigen::Index>(d)) = binary::get_f32(blob.data() + offset + 4 * d);
      }
      // float32 storage perturbs the norm slightly.
      kb.update(l2_normalize(feature), label, item.at("entropy").get<double>());
    }
  }
  return kb;
}

}  // namespace d2tpt
