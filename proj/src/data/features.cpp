#include "kgfuse/features.hpp"

#include <algorithm>
#include <string>

#include "kgfuse/error.hpp"
#include "kgfuse/records.hpp"

namespace kgfuse {

void FeatureStore::set_text_dim(std::size_t dim) {
  if (dim == 0) throw SchemaError("text feature dim must be positive");
  if (!text_.empty() && dim != text_dim_) throw SchemaError("text dim changed after insert");
  text_dim_ = dim;
}

void FeatureStore::set_image_dim(std::size_t dim) {
  if (dim == 0) throw SchemaError("image feature dim must be positive");
  if (!image_.empty() && dim != image_dim_) throw SchemaError("image dim changed after insert");
  image_dim_ = dim;
}

void FeatureStore::add_attribute(EntityId entity, std::uint32_t slot, std::vector<double> values) {
  if (values.size() != text_dim_) {
    throw SchemaError("text attribute for entity " + std::to_string(entity) + " has " +
                      std::to_string(values.size()) + " values, declared dim " +
                      std::to_string(text_dim_));
  }
  auto& list = text_[entity];
  auto it = std::ranges::lower_bound(list, slot, {}, &AttributeVector::slot);
  if (it != list.end() && it->slot == slot) {
    throw SchemaError("entity " + std::to_string(entity) + " repeats attribute slot " +
                      std::to_string(slot));
  }
  list.insert(it, AttributeVector{slot, std::move(values)});
}

void FeatureStore::set_image(EntityId entity, std::vector<double> values) {
  if (values.size() != image_dim_) {
    throw SchemaError("image vector for entity " + std::to_string(entity) + " has " +
                      std::to_string(values.size()) + " values, declared dim " +
                      std::to_string(image_dim_));
  }
  if (image_.contains(entity)) {
    throw SchemaError("entity " + std::to_string(entity) + " has two image vectors");
  }
  image_.emplace(entity, std::move(values));
}

const std::vector<AttributeVector>* FeatureStore::text(EntityId entity) const {
  auto it = text_.find(entity);
  return it == text_.end() ? nullptr : &it->second;
}

const std::vector<double>* FeatureStore::image(EntityId entity) const {
  auto it = image_.find(entity);
  return it == image_.end() ? nullptr : &it->second;
}

std::map<std::uint32_t, std::size_t> FeatureStore::attribute_usage_counts() const {
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& [_, list] : text_)
    for (const auto& a : list) ++counts[a.slot];
  return counts;
}

void FeatureStore::retain_attributes(std::span<const std::uint32_t> slots) {
  std::vector<std::uint32_t> keep(slots.begin(), slots.end());
  std::ranges::sort(keep);
  for (auto it = text_.begin(); it != text_.end();) {
    std::erase_if(it->second, [&](const AttributeVector& a) {
      return !std::ranges::binary_search(keep, a.slot);
    });
    it = it->second.empty() ? text_.erase(it) : std::next(it);
  }
}

void FeatureStore::keep_top_k_attributes(std::size_t k) {
  retain_attributes(select_top_k_attributes(attribute_usage_counts(), k));
}

std::int64_t FeatureStore::max_entity() const {
  std::int64_t m = -1;
  if (!text_.empty()) m = std::max<std::int64_t>(m, text_.rbegin()->first);
  if (!image_.empty()) m = std::max<std::int64_t>(m, image_.rbegin()->first);
  return m;
}

}  // namespace kgfuse
