#include "ebca/ebcq.hpp"

#include <stdexcept>

#include "ebca/hopfield.hpp"
#include "ebca/numerics.hpp"
#include "ebca/summation.hpp"

namespace ebca {

ContextSet::ContextSet(std::vector<Matrix> ctx, Vector a, std::vector<std::string> lbl)
    : contexts(std::move(ctx)), alphas(std::move(a)), labels(std::move(lbl)) {
  if (contexts.empty()) throw std::domain_error("ContextSet: needs at least one context");
  if (alphas.size() != contexts.size() || labels.size() != contexts.size()) {
    throw ShapeError("ContextSet: weights/labels must match context count");
  }
  for (const Matrix& c : contexts) {
    if (c.cols() != contexts.front().cols()) {
      throw ShapeError("ContextSet: contexts must share embedding width");
    }
  }
}

ContextSet ContextSet::single(Matrix ctx, std::string label) {
  std::vector<Matrix> c;
  c.push_back(std::move(ctx));
  return ContextSet(std::move(c), Vector{1.0}, {std::move(label)});
}

double query_energy(const Matrix& q, const Matrix& keys, double beta) {
  if (q.cols() != keys.cols()) throw ShapeError("query_energy: query/key width mismatch");
  const Matrix s = matmul_nt(q, keys);  // row i holds K q_i^T
  Neumaier acc;
  for (std::size_t i = 0; i < s.rows(); ++i) acc.add(-lse(s.row(i), beta));
  acc.add(0.5 * sq_norm_sum(q));
  return acc.value();
}

double compositional_energy(const Matrix& q, const std::vector<Matrix>& key_sets,
                            double beta) {
  if (key_sets.empty()) throw std::domain_error("compositional_energy: no key sets");
  Neumaier acc;
  for (const Matrix& keys : key_sets) {
    if (q.cols() != keys.cols()) {
      throw ShapeError("compositional_energy: query/key width mismatch");
    }
    const Matrix s = matmul_nt(q, keys);
    for (std::size_t i = 0; i < s.rows(); ++i) acc.add(-lse(s.row(i), beta));
  }
  return 0.5 * sq_norm_sum(q) + acc.value() / static_cast<double>(key_sets.size());
}

Matrix ebcq_forward(const Matrix& q, const ContextSet& set, const Matrix& w_k,
                    const Matrix& w_v, double beta) {
  if (set.embed_dim() != w_k.rows() || set.embed_dim() != w_v.rows()) {
    throw ShapeError("ebcq_forward: context/projection width mismatch");
  }
  Matrix acc(1, 1);
  for (std::size_t s = 0; s < set.size(); ++s) {
    const Matrix keys = matmul(set.contexts[s], w_k);
    const Matrix values = matmul(set.contexts[s], w_v);
    const Matrix attn = attention_forward(q, keys, values, beta);
    const Matrix weighted = scale(attn, set.alphas[s]);
    acc = s == 0 ? weighted : add(acc, weighted);
  }
  return scale(acc, 1.0 / static_cast<double>(set.size()));
}

}  // namespace ebca
