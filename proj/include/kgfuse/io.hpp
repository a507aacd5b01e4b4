#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgfuse/features.hpp"
#include "kgfuse/graph.hpp"
#include "kgfuse/records.hpp"

namespace kgfuse {

struct GraphData {
  KnowledgeGraph graph;
  FeatureStore features;
};

// Reads <dir>/triples.tsv plus optional features_text.tsv / features_image.tsv.
//
// triples.tsv: `head<TAB>relation<TAB>tail` per line, `#` lines are comments.
// An optional `#entities=<n>` comment declares entities with no triples.
// Feature files start with `#dim=<d> modality=<name>`; text lines are
// `entity<TAB>slot<TAB>v1,...,vd`, image lines `entity<TAB>v1,...,vd`.
GraphData load_graph(const std::filesystem::path& dir);
void write_graph(const std::filesystem::path& dir, const KnowledgeGraph& graph,
                 const FeatureStore& features);

AlignmentSet load_alignments(const std::filesystem::path& path);
void write_alignments(const std::filesystem::path& path, const AlignmentSet& alignments);

std::vector<RawRating> load_ratings(const std::filesystem::path& path);
void write_ratings(const std::filesystem::path& path, std::span<const RawRating> ratings);

// `binarized` selects `user<TAB>item<TAB>y`; otherwise ratings are binarized.
InteractionSet load_interactions(const std::filesystem::path& path, bool binarized);
void write_interactions(const std::filesystem::path& path, const InteractionSet& interactions);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace kgfuse
