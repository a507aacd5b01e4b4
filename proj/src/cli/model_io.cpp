#include <set>

#include "kgfuse/cli.hpp"
#include "kgfuse/error.hpp"

namespace kgfuse {

namespace {

constexpr const char* kUsers = "data.num_users";
constexpr const char* kLinks = "data.links";

NamedTensor named(const std::string& name, const Tensor& t) {
  return {name,
          {static_cast<std::uint32_t>(t.rows()), static_cast<std::uint32_t>(t.cols())},
          std::vector<double>(t.data().begin(), t.data().end())};
}

std::size_t rows_of(const Checkpoint& ckpt, const std::string& name) {
  const auto* t = ckpt.find(name);
  return t ? t->dims.at(0) : 0;
}

Tensor to_tensor(const NamedTensor& t) {
  if (t.dims.size() != 2) throw FormatError("tensor '" + t.name + "' is not rank 2");
  return Tensor::from({t.dims[0], t.dims[1]}, t.values);
}

}  // namespace

Checkpoint to_checkpoint(const ModelBundle& bundle) {
  Checkpoint ckpt;
  ckpt.phase = bundle.phase;
  ckpt.config_text = config_to_text(bundle.config);
  for (const auto& name : bundle.model.params.names()) {
    ckpt.tensors.push_back(named(name, bundle.model.params[name]));
  }
  if (bundle.phase == Phase::kFinetuned) {
    ckpt.tensors.push_back({kUsers, {1, 1}, {static_cast<double>(bundle.num_users)}});
    NamedTensor links{kLinks, {static_cast<std::uint32_t>(bundle.links.size()), 2}, {}};
    for (const auto& l : bundle.links) {
      links.values.push_back(l.user);
      links.values.push_back(l.item);
    }
    ckpt.tensors.push_back(std::move(links));
  }
  ckpt.rng = bundle.rng.state();
  return ckpt;
}

ModelBundle from_checkpoint(const Checkpoint& ckpt) {
  ModelBundle b;
  b.phase = ckpt.phase;
  b.config = parse_config(ckpt.config_text, "checkpoint config");
  b.rng.set_state(ckpt.rng);

  const std::size_t rel_rows = rows_of(ckpt, "rel.emb");
  if (rel_rows < 2) throw FormatError("checkpoint lacks a relation table");
  Rng scratch(0);
  b.model = make_encoder(b.config.encoder, rows_of(ckpt, "attr.query"),
                         rows_of(ckpt, "image.proj.w"), rel_rows - 2, scratch);

  std::set<std::string> expected;
  for (const auto& name : b.model.params.names()) expected.insert(name);
  for (const auto& t : ckpt.tensors) {
    if (t.name == kUsers || t.name == kLinks) continue;
    const Tensor value = to_tensor(t);
    if (b.model.params.contains(t.name)) {
      if (b.model.params[t.name].shape() != value.shape()) {
        throw FormatError("tensor '" + t.name + "' has shape " + shape_string(value.shape()) +
                          ", expected " + shape_string(b.model.params[t.name].shape()));
      }
      b.model.params.assign(t.name, t.values);
      expected.erase(t.name);
    } else if (t.name.starts_with("rec.") || t.name.starts_with("profile.") ||
               t.name.starts_with("fusion.")) {
      b.model.params.add(t.name, value);
    } else {
      throw FormatError("unexpected tensor '" + t.name + "' in checkpoint");
    }
  }
  if (!expected.empty()) throw FormatError("checkpoint lacks tensor '" + *expected.begin() + "'");

  if (b.phase == Phase::kFinetuned) {
    const auto* users = ckpt.find(kUsers);
    const auto* links = ckpt.find(kLinks);
    if (!users || !links || users->values.size() != 1 || links->dims.size() != 2 ||
        links->dims[1] != 2 || !b.model.params.contains("rec.v_interact")) {
      throw FormatError("fine-tuned checkpoint lacks its recommendation state");
    }
    b.num_users = static_cast<std::size_t>(users->values[0]);
    for (std::size_t i = 0; i < links->dims[0]; ++i) {
      b.links.push_back({static_cast<UserId>(links->values[2 * i]),
                         static_cast<EntityId>(links->values[2 * i + 1])});
    }
  }
  return b;
}

}  // namespace kgfuse
