#pragma once

#include <string>
#include <vector>

#include "memos/errors.hpp"

namespace memos {

// Class vocabulary of a dataset. Ids are the on-disk label values, so they
// must fit in 8 bits; 255 is conventionally the ignore id.
struct ClassTaxonomy {
  std::vector<int> class_ids;
  std::vector<std::string> class_names;
  int ignore_id = 255;
  int ood_id = 254;  // reserved for label maps that encode OOD ground truth

  int num_classes() const { return static_cast<int>(class_ids.size()); }

  bool contains(int id) const {
    for (int c : class_ids)
      if (c == id) return true;
    return false;
  }

  // Position of id within class_ids; -1 if absent.
  int index_of(int id) const {
    for (size_t i = 0; i < class_ids.size(); ++i)
      if (class_ids[i] == id) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    if (class_ids.size() < 2) throw ValidationError("taxonomy needs at least 2 classes");
    if (class_names.size() != class_ids.size())
      throw ValidationError("taxonomy: one name per class id required");
    for (size_t i = 0; i < class_ids.size(); ++i) {
      const int id = class_ids[i];
      if (id < 0 || id > 255) throw ValidationError("class id out of 8-bit range");
      if (id == ignore_id) throw ValidationError("ignore_id collides with a class id");
      if (id == ood_id) throw ValidationError("ood_id collides with a class id");
      for (size_t j = i + 1; j < class_ids.size(); ++j)
        if (class_ids[j] == id) throw ValidationError("duplicate class id " + std::to_string(id));
    }
    if (ignore_id == ood_id) throw ValidationError("ignore_id equals ood_id");
  }

  // Contiguous taxonomy 0..k-1 with generated names.
  static ClassTaxonomy contiguous(int k, int ignore = 255, int ood = 254) {
    ClassTaxonomy t;
    t.ignore_id = ignore;
    t.ood_id = ood;
    for (int i = 0; i < k; ++i) {
      t.class_ids.push_back(i);
      t.class_names.push_back("class_" + std::to_string(i));
    }
    t.validate();
    return t;
  }
};

}  // namespace memos
