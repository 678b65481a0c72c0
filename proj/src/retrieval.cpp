#include "hpd/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "hpd/errors.hpp"
#include "hpd/rng.hpp"

namespace hpd::retrieval {

namespace {

std::vector<double> normalize(std::span<const double> v,
                              const char* what) {
  double n2 = 0.0;
  for (double e : v) n2 += e * e;
  if (!(n2 > 0.0) || !std::isfinite(n2)) {
    throw DomainError(std::string(what) + " has zero or non-finite norm");
  }
  const double inv = 1.0 / std::sqrt(n2);
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
  return out;
}

linalg::Matrix normalized_rows(const linalg::Matrix& rows) {
  linalg::Matrix out(rows.rows, rows.cols);
  for (size_t r = 0; r < rows.rows; ++r) {
    auto u = normalize(rows.row(r), "vector");
    std::copy(u.begin(), u.end(), &out.data[r * out.cols]);
  }
  return out;
}

double dot_at(const linalg::Matrix& m, size_t row,
              std::span<const double> v) {
  const double* p = &m.data[row * m.cols];
  double acc = 0.0;
  for (size_t j = 0; j < m.cols; ++j) acc += p[j] * v[j];
  return acc;
}

size_t nearest_centroid(const linalg::Matrix& centroids,
                        std::span<const double> u) {
  size_t best = 0;
  double best_dot = dot_at(centroids, 0, u);
  for (size_t c = 1; c < centroids.rows; ++c) {
    double d = dot_at(centroids, c, u);
    if (d > best_dot) {
      best_dot = d;
      best = c;
    }
  }
  return best;
}

void rank_hits(std::vector<SearchHit>& hits, size_t k) {
  std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (hits.size() > k) hits.resize(k);
}

}  // namespace

linalg::Matrix kmeans(const linalg::Matrix& vectors, size_t k, uint64_t seed,
                      size_t max_iters) {
  const size_t n = vectors.rows;
  const size_t d = vectors.cols;
  if (k < 1) throw InputError("kmeans needs k >= 1");
  if (k > n) {
    throw InputError("kmeans: k=" + std::to_string(k) + " exceeds " +
                     std::to_string(n) + " points");
  }
  linalg::Matrix points = normalized_rows(vectors);
  Rng rng(seed);

  // k-means++ over squared chord distance 2 - 2*dot (max 4 on the sphere)
  linalg::Matrix centroids(k, d);
  std::vector<double> min_dist(n, 5.0);
  size_t first = rng.below(n);
  std::copy_n(&points.data[first * d], d, &centroids.data[0]);
  for (size_t c = 1; c < k; ++c) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double dist = 2.0 - 2.0 * dot_at(centroids, c - 1, points.row(i));
      if (dist < min_dist[i]) min_dist[i] = dist;
      sum += min_dist[i];
    }
    size_t pick;
    if (sum <= 0.0) {
      pick = rng.below(n);  // all points coincide with chosen centroids
    } else {
      double r = rng.uniform() * sum;
      pick = n - 1;
      double acc = 0.0;
      for (size_t i = 0; i < n; ++i) {
        acc += min_dist[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    std::copy_n(&points.data[pick * d], d, &centroids.data[c * d]);
  }

  std::vector<size_t> assign(n, 0);
  std::vector<size_t> counts(k, 0);
  for (size_t iter = 0; iter < max_iters; ++iter) {
    bool moved = false;
    for (size_t i = 0; i < n; ++i) {
      size_t c = nearest_centroid(centroids, points.row(i));
      if (c != assign[i]) {
        moved = true;
        assign[i] = c;
      }
    }
    if (iter > 0 && !moved) break;

    linalg::Matrix sums(k, d);
    std::fill(counts.begin(), counts.end(), 0);
    for (size_t i = 0; i < n; ++i) {
      double* s = &sums.data[assign[i] * d];
      const double* p = &points.data[i * d];
      for (size_t j = 0; j < d; ++j) s[j] += p[j];
      ++counts[assign[i]];
    }
    for (size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // reseed from the point farthest from its own centroid
        size_t far = 0;
        double far_dot = 2.0;
        for (size_t i = 0; i < n; ++i) {
          double dcur = dot_at(centroids, assign[i], points.row(i));
          if (dcur < far_dot) {
            far_dot = dcur;
            far = i;
          }
        }
        std::copy_n(&points.data[far * d], d, &centroids.data[c * d]);
        continue;
      }
      double norm2 = 0.0;
      const double* s = &sums.data[c * d];
      for (size_t j = 0; j < d; ++j) norm2 += s[j] * s[j];
      if (norm2 <= 0.0) continue;  // degenerate mean: keep previous centroid
      const double inv = 1.0 / std::sqrt(norm2);
      for (size_t j = 0; j < d; ++j) centroids.at(c, j) = s[j] * inv;
    }
  }
  return centroids;
}

IvfIndex build_ivf(const linalg::Matrix& vectors,
                   const std::vector<uint64_t>& ids, size_t nlist,
                   uint64_t seed, size_t kmeans_iters) {
  if (ids.size() != vectors.rows) {
    throw InputError("build_ivf: " + std::to_string(ids.size()) + " ids for " +
                     std::to_string(vectors.rows) + " vectors");
  }
  if (nlist < 1 || vectors.rows < nlist) {
    throw InputError("build_ivf needs 1 <= nlist <= vector count");
  }
  std::unordered_set<uint64_t> unique(ids.begin(), ids.end());
  if (unique.size() != ids.size()) {
    throw InputError("build_ivf: duplicate vector ids");
  }

  IvfIndex index;
  index.dim = vectors.cols;
  index.nlist = nlist;
  index.centroids = kmeans(vectors, nlist, seed, kmeans_iters);
  index.cells.resize(nlist);
  linalg::Matrix unit = normalized_rows(vectors);
  for (size_t i = 0; i < unit.rows; ++i) {
    size_t c = nearest_centroid(index.centroids, unit.row(i));
    auto& cell = index.cells[c];
    cell.ids.push_back(ids[i]);
    const double* p = &unit.data[i * unit.cols];
    cell.vectors.insert(cell.vectors.end(), p, p + unit.cols);
  }
  index.total = unit.rows;
  return index;
}

std::vector<SearchHit> search(const IvfIndex& index,
                              std::span<const double> query, size_t k,
                              size_t nprobe) {
  if (query.size() != index.dim) {
    throw ShapeError("search: query width " + std::to_string(query.size()) +
                     " vs index dim " + std::to_string(index.dim));
  }
  if (k < 1) throw InputError("search needs k >= 1");
  if (nprobe < 1 || nprobe > index.nlist) {
    throw InputError("search needs 1 <= nprobe <= nlist");
  }
  auto q = normalize(query, "query");

  std::vector<size_t> order(index.nlist);
  for (size_t c = 0; c < index.nlist; ++c) order[c] = c;
  std::vector<double> cdot(index.nlist);
  for (size_t c = 0; c < index.nlist; ++c)
    cdot[c] = dot_at(index.centroids, c, q);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (cdot[a] != cdot[b]) return cdot[a] > cdot[b];
    return a < b;
  });

  std::vector<SearchHit> hits;
  for (size_t p = 0; p < nprobe; ++p) {
    const auto& cell = index.cells[order[p]];
    for (size_t i = 0; i < cell.ids.size(); ++i) {
      const double* v = &cell.vectors[i * index.dim];
      double acc = 0.0;
      for (size_t j = 0; j < index.dim; ++j) acc += v[j] * q[j];
      hits.push_back({cell.ids[i], acc});
    }
  }
  rank_hits(hits, k);
  return hits;
}

std::vector<SearchHit> exact_search(const linalg::Matrix& corpus,
                                    const std::vector<uint64_t>& ids,
                                    std::span<const double> query, size_t k) {
  if (ids.size() != corpus.rows) {
    throw InputError("exact_search: id/vector count mismatch");
  }
  if (query.size() != corpus.cols) {
    throw ShapeError("exact_search: query width " +
                     std::to_string(query.size()) + " vs corpus dim " +
                     std::to_string(corpus.cols));
  }
  if (k < 1) throw InputError("exact_search needs k >= 1");
  auto q = normalize(query, "query");

  std::vector<SearchHit> hits;
  hits.reserve(corpus.rows);
  for (size_t i = 0; i < corpus.rows; ++i) {
    auto u = normalize(corpus.row(i), "vector");
    double acc = 0.0;
    for (size_t j = 0; j < corpus.cols; ++j) acc += u[j] * q[j];
    hits.push_back({ids[i], acc});
  }
  rank_hits(hits, k);
  return hits;
}

double mrr_at_10(const std::vector<std::vector<uint64_t>>& rankings,
                 const std::vector<uint64_t>& gold) {
  if (rankings.size() != gold.size()) {
    throw InputError("mrr_at_10: every query needs a gold id (" +
                     std::to_string(rankings.size()) + " rankings, " +
                     std::to_string(gold.size()) + " gold)");
  }
  if (rankings.empty()) throw InputError("mrr_at_10 needs >= 1 query");
  double sum = 0.0;
  for (size_t i = 0; i < rankings.size(); ++i) {
    const auto& ranked = rankings[i];
    const size_t depth = std::min<size_t>(ranked.size(), 10);
    for (size_t r = 0; r < depth; ++r) {
      if (ranked[r] == gold[i]) {
        sum += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return sum / static_cast<double>(rankings.size());
}

MemoryUsage memory_usage(const IvfIndex& index) {
  MemoryUsage m;
  m.header_bytes = 4 + 4 + 4 + 8;  // magic, dim u32, nlist u32, total u64
  m.centroid_bytes = index.nlist * index.dim * 4;
  m.id_bytes = index.nlist * 8 + index.total * 8;  // cell counts + ids
  m.payload_bytes = index.total * index.dim * 4;
  return m;
}

BenchReport bench(const IvfIndex& index, const linalg::Matrix& queries,
                  const std::vector<uint64_t>& gold, size_t k, size_t nprobe,
                  size_t reps) {
  if (queries.rows == 0) throw InputError("bench needs >= 1 query");
  if (gold.size() != queries.rows) {
    throw InputError("bench: gold count must match query count");
  }
  if (reps < 1) reps = 1;

  for (size_t w = 0; w < std::min<size_t>(10, queries.rows); ++w) {
    search(index, queries.row(w), k, nprobe);
  }

  std::vector<std::vector<uint64_t>> rankings(queries.rows);
  std::vector<double> elapsed(reps);
  for (size_t rep = 0; rep < reps; ++rep) {
    auto start = std::chrono::steady_clock::now();
    for (size_t i = 0; i < queries.rows; ++i) {
      auto hits = search(index, queries.row(i), k, nprobe);
      if (rep == 0) {
        auto& out = rankings[i];
        out.reserve(hits.size());
        for (const auto& h : hits) out.push_back(h.id);
      }
    }
    auto stop = std::chrono::steady_clock::now();
    elapsed[rep] =
        std::chrono::duration<double, std::milli>(stop - start).count();
  }
  std::sort(elapsed.begin(), elapsed.end());
  const double median = elapsed[reps / 2];

  BenchReport report;
  report.mrr_at_10 = mrr_at_10(rankings, gold);
  report.time_ms_per_1k =
      median * 1000.0 / static_cast<double>(queries.rows);
  report.memory_bytes = memory_usage(index).total();
  return report;
}

std::string bench_csv(const BenchReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "mrr@10,time_ms_per_1k,mem_bytes\n%.6f,%.4f,%zu\n",
                report.mrr_at_10, report.time_ms_per_1k, report.memory_bytes);
  return buf;
}

}  // namespace hpd::retrieval
