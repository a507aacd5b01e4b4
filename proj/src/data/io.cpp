#include "kgfuse/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "kgfuse/error.hpp"

namespace kgfuse {

namespace fs = std::filesystem;

namespace {

struct LineReader {
  std::string file;
  std::istringstream in;
  std::string line;
  std::size_t number = 0;

  LineReader(const fs::path& path, std::string contents)
      : file(path.string()), in(std::move(contents)) {}

  bool next() {
    if (!std::getline(in, line)) return false;
    ++number;
    return true;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(file, number, what); }
  [[noreturn]] void schema(const std::string& what) const {
    throw SchemaError(file + ":" + std::to_string(number) + ": " + what);
  }
};

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_integer(std::string_view text, const LineReader& r, const char* what) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    r.fail(std::string("invalid ") + what + " '" + std::string(text) + "'");
  }
  return value;
}

double parse_real(std::string_view text, const LineReader& r) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    r.fail("invalid real value '" + std::string(text) + "'");
  }
  return value;
}

std::vector<double> parse_vector(std::string_view text, std::size_t dim, const LineReader& r) {
  std::vector<double> v;
  for (auto tok : split(text, ',')) v.push_back(parse_real(tok, r));
  if (v.size() != dim) {
    r.schema("expected " + std::to_string(dim) + " values, got " + std::to_string(v.size()));
  }
  return v;
}

bool skippable(const std::string& line) { return line.empty() || line[0] == '#'; }

std::string join_vector(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

struct FeatureHeader {
  std::size_t dim = 0;
  std::string modality;
};

FeatureHeader parse_feature_header(LineReader& r) {
  if (!r.next() || r.line.rfind("#dim=", 0) != 0) {
    r.schema("missing '#dim=<d> modality=<name>' header");
  }
  FeatureHeader h;
  for (auto tok : split(std::string_view(r.line).substr(1), ' ')) {
    if (tok.empty()) continue;
    if (tok.starts_with("dim=")) {
      h.dim = parse_integer<std::size_t>(tok.substr(4), r, "dim");
    } else if (tok.starts_with("modality=")) {
      h.modality = std::string(tok.substr(9));
    } else {
      r.schema("unknown header field '" + std::string(tok) + "'");
    }
  }
  if (h.dim == 0) r.schema("feature dim must be positive");
  return h;
}

void load_features(const fs::path& path, const std::string& modality, std::size_t num_entities,
                   FeatureStore& store) {
  LineReader r(path, read_file(path));
  const FeatureHeader h = parse_feature_header(r);
  if (h.modality != modality) {
    r.schema("header modality '" + h.modality + "' does not match file modality '" + modality +
             "'");
  }
  const bool text = modality == "text";
  if (text) store.set_text_dim(h.dim);
  else store.set_image_dim(h.dim);

  while (r.next()) {
    if (skippable(r.line)) continue;
    const auto fields = split(r.line, '\t');
    if (fields.size() != (text ? 3u : 2u)) {
      r.fail("expected " + std::to_string(text ? 3 : 2) + " tab-separated fields");
    }
    const auto entity = parse_integer<EntityId>(fields[0], r, "entity id");
    if (entity >= num_entities) {
      r.schema("entity " + std::to_string(entity) + " is not in the graph (" +
               std::to_string(num_entities) + " entities)");
    }
    try {
      if (text) {
        const auto slot = parse_integer<std::uint32_t>(fields[1], r, "attribute slot");
        store.add_attribute(entity, slot, parse_vector(fields[2], h.dim, r));
      } else {
        store.set_image(entity, parse_vector(fields[1], h.dim, r));
      }
    } catch (const SchemaError& e) {
      if (std::string(e.what()).starts_with(r.file)) throw;
      r.schema(e.what());
    }
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw Error("cannot format double");
  return std::string(buf, ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

GraphData load_graph(const fs::path& dir) {
  const fs::path triples_path = dir / "triples.tsv";
  LineReader r(triples_path, read_file(triples_path));
  std::vector<Triple> triples;
  std::size_t declared = 0;
  std::size_t max_id_plus_one = 0;
  while (r.next()) {
    if (r.line.starts_with("#entities=")) {
      declared = parse_integer<std::size_t>(std::string_view(r.line).substr(10), r, "entity count");
      continue;
    }
    if (skippable(r.line)) continue;
    const auto fields = split(r.line, '\t');
    if (fields.size() != 3) r.fail("expected head<TAB>relation<TAB>tail");
    Triple t{parse_integer<EntityId>(fields[0], r, "head id"),
             parse_integer<RelationId>(fields[1], r, "relation id"),
             parse_integer<EntityId>(fields[2], r, "tail id")};
    if (t.relation >= kFirstReservedRelation) r.fail("relation id is reserved");
    max_id_plus_one = std::max<std::size_t>({max_id_plus_one, std::size_t{t.head} + 1,
                                             std::size_t{t.tail} + 1});
    triples.push_back(t);
  }
  const std::size_t n = std::max(declared, max_id_plus_one);

  GraphData out{KnowledgeGraph(n, std::move(triples)), FeatureStore{}};
  std::vector<fs::path> feature_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("features_") && name.ends_with(".tsv")) feature_files.push_back(entry.path());
  }
  std::ranges::sort(feature_files);
  for (const auto& path : feature_files) {
    const auto name = path.filename().string();
    const auto modality = name.substr(9, name.size() - 9 - 4);
    if (modality != "text" && modality != "image") {
      throw SchemaError(path.string() + ": unsupported modality '" + modality + "'");
    }
    load_features(path, modality, n, out.features);
  }
  return out;
}

void write_graph(const fs::path& dir, const KnowledgeGraph& graph, const FeatureStore& features) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "'");

  std::string triples = "#entities=" + std::to_string(graph.num_entities()) + "\n";
  for (const auto& t : graph.triples()) {
    triples += std::to_string(t.head) + '\t' + std::to_string(t.relation) + '\t' +
               std::to_string(t.tail) + '\n';
  }
  write_file(dir / "triples.tsv", triples);

  if (features.text_dim() > 0) {
    std::string text = "#dim=" + std::to_string(features.text_dim()) + " modality=text\n";
    for (const auto& [entity, list] : features.all_text())
      for (const auto& a : list)
        text += std::to_string(entity) + '\t' + std::to_string(a.slot) + '\t' +
                join_vector(a.values) + '\n';
    write_file(dir / "features_text.tsv", text);
  }
  if (features.image_dim() > 0) {
    std::string image = "#dim=" + std::to_string(features.image_dim()) + " modality=image\n";
    for (const auto& [entity, v] : features.all_image())
      image += std::to_string(entity) + '\t' + join_vector(v) + '\n';
    write_file(dir / "features_image.tsv", image);
  }
}

AlignmentSet load_alignments(const fs::path& path) {
  LineReader r(path, read_file(path));
  AlignmentSet out;
  while (r.next()) {
    if (skippable(r.line)) continue;
    const auto fields = split(r.line, '\t');
    if (fields.size() != 2) r.fail("expected idA<TAB>idB");
    out.positives.push_back({parse_integer<EntityId>(fields[0], r, "entity id"),
                             parse_integer<EntityId>(fields[1], r, "entity id")});
  }
  return out;
}

void write_alignments(const fs::path& path, const AlignmentSet& alignments) {
  std::string s;
  for (const auto& p : alignments.positives)
    s += std::to_string(p.a) + '\t' + std::to_string(p.b) + '\n';
  write_file(path, s);
}

std::vector<RawRating> load_ratings(const fs::path& path) {
  LineReader r(path, read_file(path));
  std::vector<RawRating> out;
  while (r.next()) {
    if (skippable(r.line)) continue;
    const auto fields = split(r.line, '\t');
    if (fields.size() != 3) r.fail("expected user<TAB>item<TAB>rating");
    out.push_back({parse_integer<UserId>(fields[0], r, "user id"),
                   parse_integer<EntityId>(fields[1], r, "item id"),
                   parse_integer<int>(fields[2], r, "rating")});
  }
  return out;
}

void write_ratings(const fs::path& path, std::span<const RawRating> ratings) {
  std::string s;
  for (const auto& x : ratings)
    s += std::to_string(x.user) + '\t' + std::to_string(x.item) + '\t' +
         std::to_string(x.rating) + '\n';
  write_file(path, s);
}

InteractionSet load_interactions(const fs::path& path, bool binarized) {
  if (!binarized) {
    const auto ratings = load_ratings(path);
    return binarize_interactions(ratings);
  }
  LineReader r(path, read_file(path));
  InteractionSet out;
  while (r.next()) {
    if (skippable(r.line)) continue;
    const auto fields = split(r.line, '\t');
    if (fields.size() != 3) r.fail("expected user<TAB>item<TAB>y");
    out.records.push_back({parse_integer<UserId>(fields[0], r, "user id"),
                           parse_integer<EntityId>(fields[1], r, "item id"),
                           parse_integer<int>(fields[2], r, "label")});
  }
  out.validate();
  return out;
}

void write_interactions(const fs::path& path, const InteractionSet& interactions) {
  std::string s;
  for (const auto& x : interactions.records)
    s += std::to_string(x.user) + '\t' + std::to_string(x.item) + '\t' +
         std::to_string(x.label) + '\n';
  write_file(path, s);
}

}  // namespace kgfuse
