#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "kgfuse/graph.hpp"

namespace kgfuse {

// One text-attribute vector; `slot` identifies the attribute type
// (category, country, ...).
struct AttributeVector {
  std::uint32_t slot = 0;
  std::vector<double> values;
  friend bool operator==(const AttributeVector&, const AttributeVector&) = default;
};

// Precomputed per-entity modality features. Text carries a list of attribute
// vectors per entity, image a single vector. Entities without a modality are
// cold for it and get the model's learned default.
class FeatureStore {
 public:
  std::size_t text_dim() const { return text_dim_; }
  std::size_t image_dim() const { return image_dim_; }
  void set_text_dim(std::size_t dim);
  void set_image_dim(std::size_t dim);

  // Attributes are kept sorted by slot; a repeated slot is a schema error.
  void add_attribute(EntityId entity, std::uint32_t slot, std::vector<double> values);
  void set_image(EntityId entity, std::vector<double> values);

  // nullptr when the entity is cold for the modality.
  const std::vector<AttributeVector>* text(EntityId entity) const;
  const std::vector<double>* image(EntityId entity) const;

  const std::map<EntityId, std::vector<AttributeVector>>& all_text() const { return text_; }
  const std::map<EntityId, std::vector<double>>& all_image() const { return image_; }

  // Number of entities carrying each attribute slot.
  std::map<std::uint32_t, std::size_t> attribute_usage_counts() const;
  // Drops every attribute whose slot is not retained; entities left with no
  // attributes become cold.
  void retain_attributes(std::span<const std::uint32_t> slots);

  // Keeps the k most used attribute slots (ties to the smaller slot id).
  void keep_top_k_attributes(std::size_t k);

  // Largest entity id with any feature, or -1 when empty.
  std::int64_t max_entity() const;

  friend bool operator==(const FeatureStore&, const FeatureStore&) = default;

 private:
  std::size_t text_dim_ = 0;
  std::size_t image_dim_ = 0;
  std::map<EntityId, std::vector<AttributeVector>> text_;
  std::map<EntityId, std::vector<double>> image_;
};

}  // namespace kgfuse
