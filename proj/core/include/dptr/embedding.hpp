#pragma once

#include "dptr/common.hpp"

#include <string>

namespace dptr {

enum class Role { prompt, image, perturbed, merged };

std::string to_string(Role r);

// L x D token features. `special` is the row index of the [EOS] token for
// prompt embeddings and of [CLS] for dual-encoder image embeddings; -1 when
// not applicable.
struct EmbeddingMatrix {
  MatF values;
  Role role = Role::prompt;
  int special = -1;
};

}  // namespace dptr
