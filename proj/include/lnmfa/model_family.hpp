#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace lnmfa {

/// One member of the eight-model family. The three-letter code reads
/// (loadings across groups, noise across groups, noise diagonal), with C for
/// constrained and U for unconstrained:
///   lambda_shared : Lambda_g = Lambda for all g
///   d_shared      : D_g = D for all g
///   d_isotropic   : D_g = d_g I
struct ModelConstraint {
  bool lambda_shared = false;
  bool d_shared = false;
  bool d_isotropic = false;

  std::string code() const {
    std::string s(3, 'U');
    if (lambda_shared) s[0] = 'C';
    if (d_shared) s[1] = 'C';
    if (d_isotropic) s[2] = 'C';
    return s;
  }

  bool operator==(const ModelConstraint&) const = default;
};

inline ModelConstraint parse_model(const std::string& code) {
  if (code.size() != 3)
    throw std::invalid_argument("model code must be 3 letters, got '" + code + "'");
  ModelConstraint m;
  for (int i = 0; i < 3; ++i) {
    const char c = code[i];
    if (c != 'U' && c != 'C')
      throw std::invalid_argument("model code letters must be U or C, got '" + code + "'");
  }
  m.lambda_shared = code[0] == 'C';
  m.d_shared = code[1] == 'C';
  m.d_isotropic = code[2] == 'C';
  return m;
}

/// The family in its canonical order.
inline const std::array<ModelConstraint, 8>& all_models() {
  static const std::array<ModelConstraint, 8> models = {
      parse_model("UUU"), parse_model("UUC"), parse_model("UCU"), parse_model("UCC"),
      parse_model("CUU"), parse_model("CUC"), parse_model("CCU"), parse_model("CCC")};
  return models;
}

/// Position of a model in the canonical family order.
inline int model_index(const ModelConstraint& m) {
  const auto& fam = all_models();
  for (int i = 0; i < 8; ++i)
    if (fam[i] == m) return i;
  return -1;
}

/// Tabulated parameter complexity of one family member. Each loading matrix
/// carries Kq - q(q-1)/2 identifiable parameters; the noise term contributes
/// KG, G, K or 1 depending on the constraints; G-1 mixing proportions and a
/// single K-dimensional mean block complete the tabulated count.
inline long long count_params(const ModelConstraint& m, int G, int K, int q) {
  const long long lambda_block =
      static_cast<long long>(K) * q - static_cast<long long>(q) * (q - 1) / 2;
  long long p = m.lambda_shared ? lambda_block : G * lambda_block;
  if (m.d_shared)
    p += m.d_isotropic ? 1 : K;
  else
    p += m.d_isotropic ? G : static_cast<long long>(K) * G;
  p += G - 1;
  p += K;
  return p;
}

/// Complete free-parameter count: the tabulated complexity charges the mean
/// block once, but every component carries its own K-vector mean. This is
/// the p that enters the information criterion; with the tabulated count an
/// extra component would cost as little as one parameter and the criterion
/// would happily absorb spurious micro-components.
inline long long count_free_params(const ModelConstraint& m, int G, int K, int q) {
  return count_params(m, G, K, q) + static_cast<long long>(G - 1) * K;
}

}  // namespace lnmfa
