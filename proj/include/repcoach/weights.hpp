#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace repcoach {

/// Dense float32 tensor in row-major order.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::int64_t element_count() const;
    bool operator==(const Tensor&) const = default;
};

inline constexpr std::uint32_t kWeightsVersion = 1;

/// Named tensors plus free-form metadata text. Tensors are kept in canonical (name) order.
struct ModelWeights {
    std::uint32_t version = kWeightsVersion;
    std::string metadata;
    std::map<std::string, Tensor> tensors;

    std::vector<std::pair<std::string, std::vector<std::int64_t>>> manifest() const;
};

/// RPML layout, all integers little-endian:
///   "RPML" | u32 version | u32 metadata bytes | metadata
///   u32 tensor count | per tensor: u32 name bytes | name | u32 rank | rank × u32 extent
///   u64 element count | element count × f32
/// The element count must equal the sum of the manifest's tensor sizes.
void save_weights(const ModelWeights& weights, std::ostream& out);

/// Throws FormatError (bad magic, truncation, trailing bytes), VersionError (newer version) or
/// ValidationError (manifest and data disagree, duplicate names). Never returns a partial model.
ModelWeights load_weights(std::istream& in);

void save_weights(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

/// Writes tensors in the given manifest order instead of canonical order (test fixtures).
void save_weights_ordered(const ModelWeights& weights, const std::vector<std::string>& order, std::ostream& out);

}  // namespace repcoach
