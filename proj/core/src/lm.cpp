// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rqsep/error.hpp"

namespace rqsep::lm {

namespace {

void fill_normal(Matrix& m, double std, Rng& rng) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = std * normal(rng);
}

// Column-wise log-softmax.
Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    const double lse = mx + std::log((logits.col(c).array() - mx).exp().sum());
    out.col(c) = logits.col(c).array() - lse;
  }
  return out;
}

}  // namespace

void LMConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::kConfig, "lm." + field + ": " + why); };
  if (n_cb < 1 || n_cb > 65536) bad("n_cb", "must be in [1, 65536]");
  if (q_depth < 1) bad("q_depth", "must be positive");
  if (model_dim < 1) bad("model_dim", "must be positive");
  if (heads < 1 || model_dim % heads != 0) bad("heads", "must divide model_dim");
  if (spatial_layers < 1) bad("spatial_layers", "must be positive");
  if (depth_layers < 1) bad("depth_layers", "must be positive");
  if (max_positions < 1) bad("max_positions", "must be positive");
  if (temperature < 0.0) bad("temperature", "must be non-negative");
  if (top_k < 0) bad("top_k", "must be non-negative");
}

LMModel::LMModel(const LMConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int dim = config_.model_dim;
  for (int d = 0; d < config_.q_depth; ++d) {
    Matrix e(dim, config_.n_cb);
    fill_normal(e, 0.02, rng);
    embed_.push_back(std::move(e));
    grad_embed_.push_back(Matrix::Zero(dim, config_.n_cb));
  }
  pos_.resize(dim, config_.max_positions);
  fill_normal(pos_, 0.02, rng);
  depth_pos_.resize(dim, config_.q_depth);
  fill_normal(depth_pos_, 0.02, rng);
  start_.resize(dim, 1);
  fill_normal(start_, 0.02, rng);
  grad_pos_ = Matrix::Zero(dim, config_.max_positions);
  grad_depth_pos_ = Matrix::Zero(dim, config_.q_depth);
  grad_start_ = Matrix::Zero(dim, 1);
  spatial_ = nn::Transformer("lm.spatial", dim, config_.heads, config_.spatial_layers, rng);
  depth_ = nn::Transformer("lm.depth", dim, config_.heads, config_.depth_layers, rng);
  head_ = nn::Linear("lm.head", dim, config_.n_cb, rng);
}

void LMModel::check_grid(const CodeGrid& grid) const {
  if (grid.depth != config_.q_depth) {
    fail(ErrorKind::kShape, "code grid depth " + std::to_string(grid.depth) + " does not match lm.q_depth " +
                                std::to_string(config_.q_depth));
  }
  if (grid.positions < 1 || grid.positions > config_.max_positions) {
    fail(ErrorKind::kShape, "code grid has " + std::to_string(grid.positions) + " positions, lm.max_positions is " +
                                std::to_string(config_.max_positions));
  }
  for (auto c : grid.codes) {
    if (c >= config_.n_cb) {
      fail(ErrorKind::kInvalidArgument, "code " + std::to_string(c) + " out of range for lm.n_cb " + std::to_string(config_.n_cb));
    }
  }
}

Matrix LMModel::spatial_input(const CodeGrid& grid) const {
  Matrix x(config_.model_dim, grid.positions);
  for (int t = 0; t < grid.positions; ++t) {
    x.col(t) = pos_.col(t);
    if (t == 0) {
      x.col(t) += start_.col(0);
    } else {
      for (int d = 0; d < grid.depth; ++d) x.col(t) += embed_[static_cast<std::size_t>(d)].col(grid.at(t - 1, d));
    }
  }
  return x;
}

Matrix LMModel::depth_input(const CodeGrid& grid, const Matrix& context) const {
  const int q = config_.q_depth;
  Matrix x(config_.model_dim, static_cast<Index>(grid.positions) * q);
  for (int t = 0; t < grid.positions; ++t) {
    Vector acc = context.col(t);
    for (int d = 0; d < q; ++d) {
      if (d == 1) acc.setZero();
      if (d > 0) acc += embed_[static_cast<std::size_t>(d - 1)].col(grid.at(t, d - 1));
      x.col(static_cast<Index>(t) * q + d) = acc + depth_pos_.col(d);
    }
  }
  return x;
}

Matrix LMModel::logits(const CodeGrid& grid) {
  check_grid(grid);
  const Matrix u = spatial_.forward(spatial_input(grid), 1, grid.positions);
  const Matrix h = depth_.forward(depth_input(grid, u), grid.positions, config_.q_depth);
  return head_.forward(h);
}

double LMModel::nll(const CodeGrid& grid) {
  const Matrix lp = log_softmax(logits(grid));
  double total = 0.0;
  for (int t = 0; t < grid.positions; ++t) {
    for (int d = 0; d < grid.depth; ++d) total -= lp(grid.at(t, d), static_cast<Index>(t) * grid.depth + d);
  }
  return total / static_cast<double>(grid.codes.size());
}

double LMModel::nll_and_grad(const std::vector<CodeGrid>& grids) {
  if (grids.empty()) fail(ErrorKind::kInvalidArgument, "nll_and_grad: no grids");
  std::size_t tokens = 0;
  for (const auto& g : grids) tokens += g.codes.size();
  const double inv = 1.0 / static_cast<double>(tokens);
  const int q = config_.q_depth;
  double total = 0.0;
  for (const auto& grid : grids) {
    check_grid(grid);
    const int positions = grid.positions;
    const Matrix u = spatial_.forward(spatial_input(grid), 1, positions);
    const Matrix h = depth_.forward(depth_input(grid, u), positions, q);
    const Matrix lp = log_softmax(head_.forward(h));
    Matrix g = lp.array().exp().matrix();
    for (int t = 0; t < positions; ++t) {
      for (int d = 0; d < q; ++d) {
        const Index col = static_cast<Index>(t) * q + d;
        total -= lp(grid.at(t, d), col);
        g(grid.at(t, d), col) -= 1.0;
      }
    }
    g *= inv;
    const Matrix g_depth_in = depth_.backward(head_.backward(g));
    Matrix g_context(config_.model_dim, positions);
    for (int t = 0; t < positions; ++t) {
      Vector suffix = Vector::Zero(config_.model_dim);
      for (int d = q - 1; d >= 0; --d) {
        const auto gc = g_depth_in.col(static_cast<Index>(t) * q + d);
        grad_depth_pos_.col(d) += gc;
        if (d == 0) {
          g_context.col(t) = gc;
        } else {
          suffix += gc;
          grad_embed_[static_cast<std::size_t>(d - 1)].col(grid.at(t, d - 1)) += suffix;
        }
      }
    }
    const Matrix g_spatial_in = spatial_.backward(g_context);
    for (int t = 0; t < positions; ++t) {
      grad_pos_.col(t) += g_spatial_in.col(t);
      if (t == 0) {
        grad_start_.col(0) += g_spatial_in.col(0);
      } else {
        for (int d = 0; d < q; ++d) grad_embed_[static_cast<std::size_t>(d)].col(grid.at(t - 1, d)) += g_spatial_in.col(t);
      }
    }
  }
  return total * inv;
}

Vector LMModel::context(const CodeGrid& prefix) {
  if (prefix.depth != config_.q_depth) fail(ErrorKind::kShape, "prefix depth does not match lm.q_depth");
  const int t = prefix.positions;
  if (t >= config_.max_positions) fail(ErrorKind::kShape, "position exceeds lm.max_positions");
  // Append a dummy position; its own codes never reach its context vector.
  CodeGrid extended(t + 1, prefix.depth, prefix.codebook_size);
  std::copy(prefix.codes.begin(), prefix.codes.end(), extended.codes.begin());
  check_grid(extended);
  const Matrix u = spatial_.forward(spatial_input(extended), 1, t + 1);
  return u.col(t);
}

Vector LMModel::depth_logits(const Vector& context, const std::vector<int>& codes) {
  const int n = static_cast<int>(codes.size()) + 1;
  if (n > config_.q_depth) fail(ErrorKind::kShape, "depth_logits: too many codes for lm.q_depth");
  Matrix x(config_.model_dim, n);
  Vector acc = context;
  for (int d = 0; d < n; ++d) {
    if (d == 1) acc.setZero();
    if (d > 0) acc += embed_[static_cast<std::size_t>(d - 1)].col(codes[static_cast<std::size_t>(d - 1)]);
    x.col(d) = acc + depth_pos_.col(d);
  }
  const Matrix h = depth_.forward(x, 1, n);
  return head_.forward(h.col(n - 1));
}

std::vector<ParamRef> LMModel::parameters() {
  std::vector<ParamRef> out;
  for (int d = 0; d < config_.q_depth; ++d) {
    out.push_back({"lm.embed" + std::to_string(d), &embed_[static_cast<std::size_t>(d)],
                   &grad_embed_[static_cast<std::size_t>(d)]});
  }
  out.push_back({"lm.pos", &pos_, &grad_pos_});
  out.push_back({"lm.depth_pos", &depth_pos_, &grad_depth_pos_});
  out.push_back({"lm.start", &start_, &grad_start_});
  spatial_.collect(out);
  depth_.collect(out);
  head_.collect(out);
  return out;
}

void LMModel::zero_grad() { nn::zero_grads(parameters()); }

CodeGrid generate(LMModel& model, int n_positions, std::uint64_t seed, double temperature, int top_k) {
  const LMConfig& cfg = model.config();
  if (n_positions < 1 || n_positions > cfg.max_positions) {
    fail(ErrorKind::kInvalidArgument, "generate: n_positions " + std::to_string(n_positions) +
                                          " must be in [1, lm.max_positions = " + std::to_string(cfg.max_positions) + "]");
  }
  if (temperature < 0.0) fail(ErrorKind::kInvalidArgument, "generate: temperature must be non-negative");
  Rng rng(seed);
  CodeGrid grid(n_positions, cfg.q_depth, cfg.n_cb);
  std::vector<int> order(static_cast<std::size_t>(cfg.n_cb));
  for (int t = 0; t < n_positions; ++t) {
    CodeGrid prefix(t, cfg.q_depth, cfg.n_cb);
    std::copy(grid.codes.begin(), grid.codes.begin() + static_cast<std::ptrdiff_t>(t) * cfg.q_depth, prefix.codes.begin());
    const Vector u = model.context(prefix);
    std::vector<int> codes;
    for (int d = 0; d < cfg.q_depth; ++d) {
      const Vector logits = model.depth_logits(u, codes);
      int chosen = 0;
      if (temperature == 0.0) {
        logits.maxCoeff(&chosen);
      } else {
        std::iota(order.begin(), order.end(), 0);
        const int k = top_k <= 0 ? cfg.n_cb : std::min(top_k, cfg.n_cb);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
          return logits(a) > logits(b) || (logits(a) == logits(b) && a < b);
        });
        const double mx = logits(order[0]);
        std::vector<double> w(static_cast<std::size_t>(k));
        double sum = 0.0;
        for (int i = 0; i < k; ++i) {
          w[static_cast<std::size_t>(i)] = std::exp((logits(order[static_cast<std::size_t>(i)]) - mx) / temperature);
          sum += w[static_cast<std::size_t>(i)];
        }
        double r = uniform01(rng) * sum;
        chosen = order[static_cast<std::size_t>(k - 1)];
        for (int i = 0; i < k; ++i) {
          r -= w[static_cast<std::size_t>(i)];
          if (r < 0.0) {
            chosen = order[static_cast<std::size_t>(i)];
            break;
          }
        }
      }
      grid.at(t, d) = static_cast<std::uint16_t>(chosen);
      codes.push_back(chosen);
    }
  }
  return grid;
}

CausalReport causal_consistency_check(const LogitsFn& logits, const CodeGrid& grid) {
  CausalReport report;
  const Matrix base = logits(grid);
  for (int pt = 0; pt < grid.positions; ++pt) {
    for (int pd = 0; pd < grid.depth; ++pd) {
      CodeGrid perturbed = grid;
      perturbed.at(pt, pd) = static_cast<std::uint16_t>((grid.at(pt, pd) + 1) % std::max(grid.codebook_size, 1));
      const Matrix moved = logits(perturbed);
      for (int t = 0; t <= pt; ++t) {
        for (int d = 0; d < grid.depth; ++d) {
          const bool must_hold = t < pt || d <= pd;
          if (!must_hold) continue;
          const Index col = static_cast<Index>(t) * grid.depth + d;
          if (moved.col(col) != base.col(col)) report.violations.push_back({t, d, pt, pd});
        }
      }
    }
  }
  return report;
}

CausalReport causal_consistency_check(LMModel& model, const CodeGrid& grid) {
  return causal_consistency_check([&model](const CodeGrid& g) { return model.logits(g); }, grid);
}

}  // namespace rqsep::lm
