#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "carenet/container.hpp"
#include "carenet/hypercube.hpp"
#include "carenet/labels.hpp"
#include "carenet/spectral.hpp"

namespace carenet {

/// Preprocessed spectra (n x points, row-major) with per-spectrum labels and
/// pixel provenance.
struct SpectraSet {
  WavenumberAxis axis;
  std::vector<float> spectra;
  std::vector<std::int32_t> patient_id;
  std::vector<std::int32_t> core_id;
  std::vector<std::int32_t> row;
  std::vector<std::int32_t> col;
  std::vector<std::uint8_t> core_type;  // CoreType
  std::vector<std::uint8_t> subtype;    // Subtype

  std::size_t size() const { return patient_id.size(); }
  std::size_t points() const { return axis.size(); }
  std::span<const float> spectrum(std::size_t i) const {
    return {spectra.data() + i * points(), points()};
  }

  void append(std::span<const float> values, int patient, int core, int r, int c, CoreType type,
              Subtype sub);
  void append(const SpectraSet& other);
  SpectraSet subset(std::span<const std::size_t> indices) const;

  /// Throws InvalidArgument on ragged arrays, values outside [0, 1],
  /// non-finite values, or label combinations encode_labels rejects.
  void validate() const;
};

/// Arrays: spectra (n, points) f32, patient_id/core_id/row/col i32,
/// core_type/subtype u8; axis and `extra` go to the metadata block.
void write_spectraset(const SpectraSet& set, const std::filesystem::path& path,
                      const nlohmann::json& extra = nlohmann::json::object());
SpectraSet read_spectraset(const std::filesystem::path& path);

/// Header: patient_id,core_id,row,col,core_type,subtype, then one column per
/// wavenumber. Values are written with round-trip float precision.
void export_csv(const SpectraSet& set, const std::filesystem::path& path);
SpectraSet import_csv(const std::filesystem::path& path);

/// Ground-truth pixel classes written by the generator.
enum class PixelClass : std::uint8_t { Slide = 0, Paraffin = 1, Tissue = 2 };

struct StoredCube {
  HyperCube cube;
  std::vector<std::uint8_t> ground_truth;  // rows * cols PixelClass values, may be empty
  nlohmann::json ground_truth_info = nlohmann::json::object();
};

void write_cube(const HyperCube& cube, const std::filesystem::path& path,
                std::span<const std::uint8_t> ground_truth = {},
                const nlohmann::json& ground_truth_info = nlohmann::json::object());
StoredCube read_cube(const std::filesystem::path& path);

nlohmann::json axis_to_json(const WavenumberAxis& axis);
WavenumberAxis axis_from_json(const nlohmann::json& j);

}  // namespace carenet
