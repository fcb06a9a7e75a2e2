#include "moereid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace moereid::eval {

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kNone: return "none";
    case Protocol::kStandardCamera: return "standard_camera";
    case Protocol::kMsvr310Strict: return "msvr310_strict";
  }
  return "?";
}

Protocol protocol_from_name(const std::string& s) {
  if (s == "none") return Protocol::kNone;
  if (s == "standard_camera") return Protocol::kStandardCamera;
  if (s == "msvr310_strict") return Protocol::kMsvr310Strict;
  throw std::invalid_argument("unknown protocol: " + s);
}

Tensor distance_matrix(const std::vector<RetrievalItem>& q, const std::vector<RetrievalItem>& g) {
  if (q.empty() || g.empty()) throw std::invalid_argument("distance_matrix: empty set");
  const Index dim = q[0].embedding.cols();
  for (const auto& item : q)
    if (item.embedding.cols() != dim || item.embedding.rows() != 1)
      throw std::invalid_argument("distance_matrix: embedding dimension mismatch");
  for (const auto& item : g)
    if (item.embedding.cols() != dim || item.embedding.rows() != 1)
      throw std::invalid_argument("distance_matrix: embedding dimension mismatch");
  Tensor out(static_cast<Index>(q.size()), static_cast<Index>(g.size()));
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < dim; ++k) {
        const double d = q[i].embedding(0, k) - g[j].embedding(0, k);
        s += d * d;
      }
      out(static_cast<Index>(i), static_cast<Index>(j)) = std::sqrt(s);
    }
  return out;
}

std::vector<char> valid_mask(const RetrievalItem& query, const std::vector<RetrievalItem>& gallery,
                             Protocol protocol) {
  std::vector<char> mask(gallery.size(), 1);
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    const RetrievalItem& g = gallery[j];
    switch (protocol) {
      case Protocol::kNone:
        if (query.item_id >= 0 && g.item_id == query.item_id) mask[j] = 0;
        break;
      case Protocol::kStandardCamera:
        if (g.identity == query.identity && g.camera == query.camera) mask[j] = 0;
        break;
      case Protocol::kMsvr310Strict:
        if (g.identity == query.identity && g.time_label == query.time_label) mask[j] = 0;
        break;
    }
  }
  return mask;
}

double average_precision(const std::vector<char>& ranked_relevance) {
  int hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (!ranked_relevance[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) throw std::invalid_argument("average_precision: no relevant item in ranking");
  return sum / static_cast<double>(hits);
}

Metrics evaluate(const RetrievalSet& sets, Protocol protocol, bool l2_normalize) {
  if (sets.gallery.empty()) throw std::invalid_argument("evaluate: empty gallery");
  if (sets.query.empty()) throw std::invalid_argument("evaluate: empty query set");

  RetrievalSet work;
  const RetrievalSet* active = &sets;
  if (l2_normalize) {
    work = sets;
    auto normalize = [](std::vector<RetrievalItem>& items) {
      for (auto& item : items) {
        const double n = item.embedding.l2_norm();
        if (n > 0)
          for (Index i = 0; i < item.embedding.size(); ++i) item.embedding.at_flat(i) /= n;
      }
    };
    normalize(work.query);
    normalize(work.gallery);
    active = &work;
  }

  const Tensor dist = distance_matrix(active->query, active->gallery);
  Metrics m;
  m.protocol = protocol;
  double ap_sum = 0.0;
  int r1 = 0;
  int r5 = 0;
  int r10 = 0;

  for (std::size_t qi = 0; qi < active->query.size(); ++qi) {
    const RetrievalItem& q = active->query[qi];
    const std::vector<char> mask = valid_mask(q, active->gallery, protocol);
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < active->gallery.size(); ++j)
      if (mask[j]) order.push_back(j);
    // Ascending distance; equal distances resolved by gallery index for
    // reproducibility.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dist(static_cast<Index>(qi), static_cast<Index>(a)) <
             dist(static_cast<Index>(qi), static_cast<Index>(b));
    });
    std::vector<char> relevance;
    relevance.reserve(order.size());
    int first_hit = -1;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const bool rel = active->gallery[order[r]].identity == q.identity;
      relevance.push_back(rel ? 1 : 0);
      if (rel && first_hit < 0) first_hit = static_cast<int>(r);
    }
    if (first_hit < 0) {
      ++m.num_skipped;  // nothing retrievable for this query under the filter
      continue;
    }
    const double ap = average_precision(relevance);
    m.per_query_ap.push_back(ap);
    ap_sum += ap;
    ++m.num_queries;
    if (first_hit < 1) ++r1;
    if (first_hit < 5) ++r5;
    if (first_hit < 10) ++r10;
  }
  if (m.num_queries == 0) throw std::runtime_error("evaluate: every query was skipped");
  m.mAP = ap_sum / static_cast<double>(m.num_queries);
  m.r1 = static_cast<double>(r1) / static_cast<double>(m.num_queries);
  m.r5 = static_cast<double>(r5) / static_cast<double>(m.num_queries);
  m.r10 = static_cast<double>(r10) / static_cast<double>(m.num_queries);
  return m;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  return nlohmann::json{{"mAP", m.mAP},
                        {"R1", m.r1},
                        {"R5", m.r5},
                        {"R10", m.r10},
                        {"num_queries", m.num_queries},
                        {"num_skipped", m.num_skipped},
                        {"protocol", protocol_name(m.protocol)}};
}

}  // namespace moereid::eval
