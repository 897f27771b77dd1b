#include "rmldp/relation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "jsonl.hpp"

#include "rmldp/ops.hpp"

namespace rmldp {

ParamSet init_segment_encoder(const EncoderShape& shape, std::mt19937_64& rng) {
  ParamSet p = init_mpfn({shape.input, shape.hidden, shape.code}, rng, "enc/");
  p.merge(init_linear(shape.code, shape.dec_hidden, rng, "dec/init/"));
  p.merge(init_gru(shape.input, shape.dec_hidden, rng, "dec/gru/"));
  p.merge(init_linear(shape.dec_hidden, shape.input, rng, "dec/frame/"));
  return p;
}

Tensor encode_samples(const ParamSet& params, const WindowBatch& batch) {
  return mpfn_forward(MpfnParams::from(params, "enc/"), batch, MpfnMode::full);
}

Tensor encode_segment(const ParamSet& params, const WindowBatch& batch) {
  if (batch.size() == 0) throw DataError("encode_segment: empty training set");
  Tensor codes = encode_samples(params, batch);
  return scale(sum_rows(codes), 1.0 / static_cast<double>(codes.rows()));
}

std::vector<Tensor> decode_frames(const ParamSet& params, const Tensor& codes, std::size_t steps) {
  const GruCellParams cell = GruCellParams::from(params, "dec/gru/");
  const Tensor& frame_w = params.at("dec/frame/w");
  const Tensor& frame_b = params.at("dec/frame/b");
  Tensor h = add_bias(matmul(codes, params.at("dec/init/w"), false, true), params.at("dec/init/b"));
  std::vector<Tensor> frames;
  frames.reserve(2 * steps);
  for (std::size_t t = 0; t < 2 * steps; ++t) {
    h = gru_step(cell, Tensor(), h);
    frames.push_back(add_bias(matmul(h, frame_w, false, true), frame_b));
  }
  return frames;
}

namespace {

Tensor reconstruction_from_codes(const ParamSet& params, const Tensor& codes,
                                 const WindowBatch& batch) {
  const std::size_t steps = batch.steps();
  std::vector<Tensor> frames = decode_frames(params, codes, steps);
  Tensor total;
  for (std::size_t t = 0; t < 2 * steps; ++t) {
    const Tensor& x = t < steps ? batch.seasonal[t] : batch.local[t - steps];
    Tensor term = frobenius_squared(sub(x, frames[t]));
    total = total.empty() ? term : add(total, term);
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

Tensor reconstruction_loss(const ParamSet& params, const WindowBatch& batch) {
  if (batch.size() == 0) throw DataError("reconstruction_loss: empty training set");
  return reconstruction_from_codes(params, encode_samples(params, batch), batch);
}

SegmentEncoding encode_with_reconstruction(const ParamSet& params, const WindowBatch& batch) {
  if (batch.size() == 0) throw DataError("encode_segment: empty training set");
  Tensor codes = encode_samples(params, batch);
  SegmentEncoding out;
  out.code = scale(sum_rows(codes), 1.0 / static_cast<double>(codes.rows()));
  out.reconstruction = reconstruction_from_codes(params, codes, batch);
  return out;
}

void SegmentGraph::add_node(const std::string& id) { nodes_.insert(id); }

void SegmentGraph::add_weight(const std::string& u, const std::string& v, double w) {
  if (u == v) throw DataError("SegmentGraph: self-loop on '" + u + "'");
  if (!(w > 0)) throw DataError("SegmentGraph: non-positive weight");
  nodes_.insert(u);
  nodes_.insert(v);
  edges_[std::minmax(u, v)] += w;
}

double SegmentGraph::weight(const std::string& u, const std::string& v) const {
  auto it = edges_.find(std::minmax(u, v));
  return it == edges_.end() ? 0.0 : it->second;
}

void SegmentGraph::remove_edge(const std::string& u, const std::string& v) {
  edges_.erase(std::minmax(u, v));
}

SegmentGraph build_cooccurrence(const std::vector<Order>& orders,
                                const std::optional<std::set<std::string>>& universe) {
  SegmentGraph g;
  if (universe) {
    for (const auto& id : *universe) g.add_node(id);
  }
  for (const auto& order : orders) {
    std::vector<std::string> ids = order.segment_ids;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (const auto& id : ids) {
      if (universe && !universe->count(id)) {
        throw DataError("build_cooccurrence: order '" + order.order_id +
                        "' lists unknown segment '" + id + "'");
      }
      g.add_node(id);
    }
    for (std::size_t a = 0; a < ids.size(); ++a) {
      for (std::size_t b = a + 1; b < ids.size(); ++b) g.add_weight(ids[a], ids[b], 1.0);
    }
  }
  return g;
}

SegmentGraph threshold_filter(const SegmentGraph& graph, double percentile) {
  if (!(percentile >= 0.0 && percentile < 1.0)) {
    throw ConfigError("threshold_filter: percentile must be in [0, 1)");
  }
  SegmentGraph out = graph;
  if (graph.edge_count() == 0) return out;
  std::vector<double> weights;
  for (const auto& [key, w] : graph.edges()) weights.push_back(w);
  std::sort(weights.begin(), weights.end());
  const auto rank = static_cast<std::size_t>(std::floor(percentile * static_cast<double>(weights.size())));
  const double threshold = weights[std::min(rank, weights.size() - 1)];
  for (const auto& [key, w] : graph.edges()) {
    if (w < threshold) out.remove_edge(key.first, key.second);
  }
  return out;
}

NodeEmbedding deepwalk_embed(const SegmentGraph& graph, const DeepWalkConfig& cfg) {
  if (graph.nodes().empty()) throw DataError("deepwalk_embed: empty graph");
  if (cfg.dim == 0) throw ConfigError("deepwalk_embed: dim must be positive");
  const std::vector<std::string> ids(graph.nodes().begin(), graph.nodes().end());
  const std::size_t n = ids.size(), d = cfg.dim;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[ids[i]] = i;

  std::vector<std::vector<std::size_t>> neighbors(n);
  std::vector<std::discrete_distribution<std::size_t>> transition(n);
  {
    std::vector<std::vector<double>> weights(n);
    for (const auto& [key, w] : graph.edges()) {
      const std::size_t u = index.at(key.first), v = index.at(key.second);
      neighbors[u].push_back(v);
      weights[u].push_back(w);
      neighbors[v].push_back(u);
      weights[v].push_back(w);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!neighbors[i].empty()) {
        transition[i] = std::discrete_distribution<std::size_t>(weights[i].begin(), weights[i].end());
      }
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<double> in(n * d), out(n * d, 0.0);
  {
    std::uniform_real_distribution<double> init(-0.5 / static_cast<double>(d), 0.5 / static_cast<double>(d));
    for (auto& x : in) x = init(rng);
  }

  std::vector<std::vector<std::size_t>> walks;
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < cfg.walks_per_node; ++r) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start : order) {
      std::vector<std::size_t> walk{start};
      while (walk.size() < cfg.walk_length && !neighbors[walk.back()].empty()) {
        const std::size_t cur = walk.back();
        walk.push_back(neighbors[cur][transition[cur](rng)]);
      }
      if (walk.size() > 1) walks.push_back(std::move(walk));
    }
  }
  if (walks.empty()) {
    NodeEmbedding table;
    for (std::size_t i = 0; i < n; ++i) table[ids[i]].assign(in.begin() + i * d, in.begin() + (i + 1) * d);
    return table;
  }

  std::vector<double> freq(n, 0.0);
  for (const auto& w : walks) {
    for (std::size_t v : w) freq[v] += 1.0;
  }
  for (auto& f : freq) f = std::pow(f, 0.75);
  std::discrete_distribution<std::size_t> noise(freq.begin(), freq.end());

  std::size_t total_pairs = 0;
  for (const auto& w : walks) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
      const std::size_t hi = std::min(w.size() - 1, i + cfg.window);
      total_pairs += hi - lo;
    }
  }
  total_pairs *= cfg.epochs;

  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  std::vector<double> grad_in(d);
  std::size_t processed = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& w : walks) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
        const std::size_t hi = std::min(w.size() - 1, i + cfg.window);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          const double lr = cfg.learning_rate *
              std::max(1e-4, 1.0 - static_cast<double>(processed++) / static_cast<double>(total_pairs));
          double* center = &in[w[i] * d];
          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          for (std::size_t k = 0; k <= cfg.negatives; ++k) {
            std::size_t target = w[j];
            double label = 1.0;
            if (k > 0) {
              target = noise(rng);
              if (target == w[j]) continue;
              label = 0.0;
            }
            double* ctx = &out[target * d];
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += center[c] * ctx[c];
            const double g = (label - sigmoid(dot)) * lr;
            for (std::size_t c = 0; c < d; ++c) {
              grad_in[c] += g * ctx[c];
              ctx[c] += g * center[c];
            }
          }
          for (std::size_t c = 0; c < d; ++c) center[c] += grad_in[c];
        }
      }
    }
  }

  NodeEmbedding table;
  for (std::size_t i = 0; i < n; ++i) {
    table[ids[i]].assign(in.begin() + static_cast<std::ptrdiff_t>(i * d),
                         in.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  }
  return table;
}

std::vector<double> mean_embedding(const NodeEmbedding& embedding) {
  if (embedding.empty()) throw DataError("mean_embedding: empty table");
  std::vector<double> mean(embedding.begin()->second.size(), 0.0);
  for (const auto& [id, v] : embedding) {
    if (v.size() != mean.size()) throw ShapeError("mean_embedding: ragged table at '" + id + "'");
    for (std::size_t k = 0; k < v.size(); ++k) mean[k] += v[k];
  }
  for (auto& x : mean) x /= static_cast<double>(embedding.size());
  return mean;
}

double cosine_gap(const NodeEmbedding& embedding, const std::map<std::string, std::string>& labels) {
  std::vector<std::pair<const std::vector<double>*, const std::string*>> items;
  for (const auto& [id, v] : embedding) {
    auto it = labels.find(id);
    if (it != labels.end()) items.emplace_back(&v, &it->second);
  }
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      ab += a[k] * b[k];
      aa += a[k] * a[k];
      bb += b[k] * b[k];
    }
    return aa > 0 && bb > 0 ? ab / std::sqrt(aa * bb) : 0.0;
  };
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t a = 0; a < items.size(); ++a) {
    for (std::size_t b = a + 1; b < items.size(); ++b) {
      const double c = cosine(*items[a].first, *items[b].first);
      if (*items[a].second == *items[b].second) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  }
  if (n_intra == 0 || n_inter == 0) throw DataError("cosine_gap: need pairs within and across labels");
  return intra / static_cast<double>(n_intra) - inter / static_cast<double>(n_inter);
}

ParamSet init_graph_head(std::size_t d_walk, std::size_t d_g, std::mt19937_64& rng) {
  return init_linear(d_walk, d_g, rng, "graphhead/");
}

Tensor graph_repr(const ParamSet& params, const Tensor& u) {
  const Tensor& w = params.at("graphhead/w");
  if (u.rank() != 2 || u.rows() != 1 || u.cols() != w.cols()) {
    throw ShapeError("graph_repr: input " + shape_string(u.shape()) + " vs weight " +
                     shape_string(w.shape()));
  }
  return add_bias(matmul(u, w, false, true), params.at("graphhead/b"));
}

using detail::for_each_json_line;
using detail::open_for_write;

void write_orders(const std::filesystem::path& path, const std::vector<Order>& orders) {
  auto out = open_for_write(path);
  for (const auto& o : orders) {
    out << nlohmann::json{{"order_id", o.order_id}, {"segment_ids", o.segment_ids}}.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Order> read_orders(const std::filesystem::path& path) {
  std::vector<Order> orders;
  for_each_json_line(path, [&](const nlohmann::json& j) {
    Order o{j.at("order_id").get<std::string>(), j.at("segment_ids").get<std::vector<std::string>>()};
    if (o.segment_ids.empty()) throw DataError("order '" + o.order_id + "' lists no segments");
    orders.push_back(std::move(o));
  });
  return orders;
}

void write_embedding(const std::filesystem::path& path, const NodeEmbedding& embedding) {
  auto out = open_for_write(path);
  for (const auto& [id, v] : embedding) {
    out << nlohmann::json{{"segment_id", id}, {"vector", v}}.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

NodeEmbedding read_embedding(const std::filesystem::path& path) {
  NodeEmbedding table;
  for_each_json_line(path, [&](const nlohmann::json& j) {
    auto id = j.at("segment_id").get<std::string>();
    auto v = j.at("vector").get<std::vector<double>>();
    if (!table.empty() && table.begin()->second.size() != v.size()) {
      throw ShapeError("embedding '" + id + "' has a different dimension");
    }
    if (!table.emplace(id, std::move(v)).second) throw DataError("duplicate embedding '" + id + "'");
  });
  return table;
}

}  // namespace rmldp
