#pragma once

#include "moereid/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace moereid::eval {

enum class Protocol { kNone, kStandardCamera, kMsvr310Strict };

const char* protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& s);

struct RetrievalItem {
  Tensor embedding;  // 1 x dim
  int identity = 0;
  int camera = 0;
  int time_label = 0;
  std::int64_t item_id = -1;  // shared ids identify "the query itself" in the gallery
};

struct RetrievalSet {
  std::vector<RetrievalItem> query;
  std::vector<RetrievalItem> gallery;
};

// Pairwise Euclidean distances, q x g.
Tensor distance_matrix(const std::vector<RetrievalItem>& q, const std::vector<RetrievalItem>& g);

// Which gallery items a query may be scored against.
//  - kNone: drop only the query itself (same item_id).
//  - kStandardCamera: drop same identity AND same camera.
//  - kMsvr310Strict: drop same identity AND same time label.
std::vector<char> valid_mask(const RetrievalItem& query, const std::vector<RetrievalItem>& gallery,
                             Protocol protocol);

// Mean over relevant positions k of (#relevant in top k)/k.
double average_precision(const std::vector<char>& ranked_relevance);

struct Metrics {
  double mAP = 0.0;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  int num_queries = 0;  // queries contributing to the averages
  int num_skipped = 0;  // queries with no valid relevant gallery item
  Protocol protocol = Protocol::kNone;
  std::vector<double> per_query_ap;
};

Metrics evaluate(const RetrievalSet& sets, Protocol protocol, bool l2_normalize = false);

nlohmann::json metrics_to_json(const Metrics& m);

}  // namespace moereid::eval
