#pragma once

// Segment representations: a data-driven code pooled from an MPFN-shaped
// encoder (trained with a recurrent reconstruction decoder) and a graph code
// from DeepWalk embeddings of the co-purchase graph.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rmldp/mpfn.hpp"

namespace rmldp {

struct EncoderShape {
  std::size_t input = 48;
  std::size_t hidden = 128;
  std::size_t code = 32;        // d_q
  std::size_t dec_hidden = 128;
};

/// Encoder under "enc/" (MPFN layout with a d_q-wide head) and decoder under
/// "dec/": init/{w,b} maps a code to the first hidden state, gru/ is the
/// recurrent cell (fed zero frames) and frame/{w,b} emits one e-dim frame per step.
ParamSet init_segment_encoder(const EncoderShape& shape, std::mt19937_64& rng);

/// Per-window codes, N x d_q.
Tensor encode_samples(const ParamSet& params, const WindowBatch& batch);
/// Mean of the per-window codes, 1 x d_q.
Tensor encode_segment(const ParamSet& params, const WindowBatch& batch);

/// 2|T_c| decoded frames (each N x e) from N x d_q codes, seasonal frames first.
std::vector<Tensor> decode_frames(const ParamSet& params, const Tensor& codes, std::size_t steps);

/// (1/N) sum_n ||X_n - dec(enc(X_n))||_F^2 over the 2|T_c| x e window matrices.
Tensor reconstruction_loss(const ParamSet& params, const WindowBatch& batch);

struct SegmentEncoding {
  Tensor code;            // q^d, 1 x d_q
  Tensor reconstruction;  // L_rec
};

/// q^d and L_rec sharing a single encoder pass.
SegmentEncoding encode_with_reconstruction(const ParamSet& params, const WindowBatch& batch);

struct Order {
  std::string order_id;
  std::vector<std::string> segment_ids;
};

/// Undirected weighted graph without self-loops; only positive weights are stored.
class SegmentGraph {
 public:
  void add_node(const std::string& id);
  /// Adds `w` to the weight of {u, v}.
  void add_weight(const std::string& u, const std::string& v, double w);

  double weight(const std::string& u, const std::string& v) const;
  bool has_node(const std::string& id) const { return nodes_.count(id) != 0; }
  const std::set<std::string>& nodes() const { return nodes_; }
  /// Keyed by (smaller id, larger id).
  const std::map<std::pair<std::string, std::string>, double>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }

  void remove_edge(const std::string& u, const std::string& v);

 private:
  std::set<std::string> nodes_;
  std::map<std::pair<std::string, std::string>, double> edges_;
};

/// Edge weight of {u, v} is the number of orders listing both.
/// With a universe, segment ids outside it are an error and every universe
/// member becomes a node.
SegmentGraph build_cooccurrence(const std::vector<Order>& orders,
                                const std::optional<std::set<std::string>>& universe = {});

/// Keeps edges with weight >= the nearest-rank percentile sorted[floor(p * n)].
SegmentGraph threshold_filter(const SegmentGraph& graph, double percentile);

struct DeepWalkConfig {
  std::size_t walks_per_node = 10;
  std::size_t walk_length = 20;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  std::size_t dim = 32;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;
};

using NodeEmbedding = std::map<std::string, std::vector<double>>;

/// Weighted truncated random walks, then skip-gram with negative sampling.
NodeEmbedding deepwalk_embed(const SegmentGraph& graph, const DeepWalkConfig& cfg);

/// Mean vector over all nodes; used for segments missing from the graph.
std::vector<double> mean_embedding(const NodeEmbedding& embedding);

/// Mean pairwise cosine between same-label nodes minus that between
/// different-label nodes. Nodes without a label are ignored.
double cosine_gap(const NodeEmbedding& embedding, const std::map<std::string, std::string>& labels);

/// Weights under "graphhead/": w (d_g x d_walk) and b (1 x d_g).
ParamSet init_graph_head(std::size_t d_walk, std::size_t d_g, std::mt19937_64& rng);
/// q^g = W_emb u + b for a 1 x d_walk row u.
Tensor graph_repr(const ParamSet& params, const Tensor& u);

/// One JSON object per line: {"order_id": ..., "segment_ids": [...]}.
void write_orders(const std::filesystem::path& path, const std::vector<Order>& orders);
std::vector<Order> read_orders(const std::filesystem::path& path);

/// One JSON object per line: {"segment_id": ..., "vector": [...]}.
void write_embedding(const std::filesystem::path& path, const NodeEmbedding& embedding);
NodeEmbedding read_embedding(const std::filesystem::path& path);

}  // namespace rmldp
