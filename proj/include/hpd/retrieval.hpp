#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hpd/linalg.hpp"

namespace hpd::retrieval {

struct SearchHit {
  uint64_t id = 0;
  double score = 0.0;
};

// Inverted-file index over unit vectors: nlist k-means cells, each holding
// the ids and (normalized) vectors assigned to its centroid.
struct IvfIndex {
  size_t dim = 0;
  size_t nlist = 0;
  linalg::Matrix centroids;  // nlist x dim, unit rows
  struct Cell {
    std::vector<uint64_t> ids;
    std::vector<double> vectors;  // row-major, ids.size() x dim
  };
  std::vector<Cell> cells;
  size_t total = 0;
};

// Spherical k-means: k-means++ seeding, Lloyd iterations over unit vectors,
// empty cells reseeded from the point farthest from its centroid.
linalg::Matrix kmeans(const linalg::Matrix& vectors, size_t k, uint64_t seed,
                      size_t max_iters = 25);

IvfIndex build_ivf(const linalg::Matrix& vectors,
                   const std::vector<uint64_t>& ids, size_t nlist,
                   uint64_t seed, size_t kmeans_iters = 25);

// Scans the nprobe cells whose centroids score highest against the query;
// ranks by cosine descending, ties by ascending id.
std::vector<SearchHit> search(const IvfIndex& index,
                              std::span<const double> query, size_t k,
                              size_t nprobe);

// Full-scan oracle with the same scoring and tie rule.
std::vector<SearchHit> exact_search(const linalg::Matrix& corpus,
                                    const std::vector<uint64_t>& ids,
                                    std::span<const double> query, size_t k);

// rankings[i] are the returned ids for query i; gold[i] its answer.
double mrr_at_10(const std::vector<std::vector<uint64_t>>& rankings,
                 const std::vector<uint64_t>& gold);

// Exact serialized size of the index, by section.
struct MemoryUsage {
  size_t header_bytes = 0;
  size_t centroid_bytes = 0;
  size_t id_bytes = 0;       // per-cell counts + stored ids
  size_t payload_bytes = 0;  // stored vectors
  size_t total() const {
    return header_bytes + centroid_bytes + id_bytes + payload_bytes;
  }
};

MemoryUsage memory_usage(const IvfIndex& index);

struct BenchReport {
  double mrr_at_10 = 0.0;
  double time_ms_per_1k = 0.0;
  size_t memory_bytes = 0;
};

// Warms up with 10 untimed queries, then times `reps` full passes and
// reports the median, normalized to milliseconds per 1000 queries.
BenchReport bench(const IvfIndex& index, const linalg::Matrix& queries,
                  const std::vector<uint64_t>& gold, size_t k = 10,
                  size_t nprobe = 5, size_t reps = 5);

std::string bench_csv(const BenchReport& report);

}  // namespace hpd::retrieval
