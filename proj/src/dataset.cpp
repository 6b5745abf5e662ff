#include "carenet/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace carenet {

nlohmann::json axis_to_json(const WavenumberAxis& axis) {
  return {{"start_wn", axis.start()}, {"end_wn", axis.end()}, {"n_points", axis.size()}};
}

WavenumberAxis axis_from_json(const nlohmann::json& j) {
  try {
    return build_axis(j.at("start_wn").get<double>(), j.at("end_wn").get<double>(),
                      j.at("n_points").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad axis metadata: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("bad axis metadata: ") + e.what());
  }
}

void SpectraSet::append(std::span<const float> values, int patient, int core, int r, int c,
                        CoreType type, Subtype sub) {
  if (values.size() != points()) throw InvalidArgument("spectrum length does not match the axis");
  spectra.insert(spectra.end(), values.begin(), values.end());
  patient_id.push_back(patient);
  core_id.push_back(core);
  row.push_back(r);
  col.push_back(c);
  core_type.push_back(static_cast<std::uint8_t>(type));
  subtype.push_back(static_cast<std::uint8_t>(sub));
}

void SpectraSet::append(const SpectraSet& other) {
  if (other.size() == 0) return;
  if (size() == 0 && spectra.empty()) {
    axis = other.axis;
  } else if (!axis.matches(other.axis)) {
    throw InvalidArgument("cannot merge spectra sets on different axes");
  }
  spectra.insert(spectra.end(), other.spectra.begin(), other.spectra.end());
  patient_id.insert(patient_id.end(), other.patient_id.begin(), other.patient_id.end());
  core_id.insert(core_id.end(), other.core_id.begin(), other.core_id.end());
  row.insert(row.end(), other.row.begin(), other.row.end());
  col.insert(col.end(), other.col.begin(), other.col.end());
  core_type.insert(core_type.end(), other.core_type.begin(), other.core_type.end());
  subtype.insert(subtype.end(), other.subtype.begin(), other.subtype.end());
}

SpectraSet SpectraSet::subset(std::span<const std::size_t> indices) const {
  SpectraSet out;
  out.axis = axis;
  out.spectra.reserve(indices.size() * points());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("subset index out of range");
    out.append(spectrum(i), patient_id[i], core_id[i], row[i], col[i],
               static_cast<CoreType>(core_type[i]), static_cast<Subtype>(subtype[i]));
  }
  return out;
}

void SpectraSet::validate() const {
  const std::size_t n = size();
  if (spectra.size() != n * points() || core_id.size() != n || row.size() != n ||
      col.size() != n || core_type.size() != n || subtype.size() != n) {
    throw InvalidArgument("spectra set arrays have inconsistent lengths");
  }
  for (float v : spectra) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw InvalidArgument("spectra set value outside [0, 1]");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core_type[i] > 1 || subtype[i] > 4) throw InvalidArgument("spectra set label out of range");
    encode_labels(static_cast<CoreType>(core_type[i]), static_cast<Subtype>(subtype[i]));
  }
}

void write_spectraset(const SpectraSet& set, const std::filesystem::path& path,
                      const nlohmann::json& extra) {
  set.validate();
  Container c;
  const std::size_t n = set.size();
  c.put<float>("spectra", {n, set.points()}, set.spectra);
  c.put<std::int32_t>("patient_id", {n}, set.patient_id);
  c.put<std::int32_t>("core_id", {n}, set.core_id);
  c.put<std::int32_t>("row", {n}, set.row);
  c.put<std::int32_t>("col", {n}, set.col);
  c.put<std::uint8_t>("core_type", {n}, set.core_type);
  c.put<std::uint8_t>("subtype", {n}, set.subtype);
  c.metadata = {{"kind", "spectraset"},
                {"axis", axis_to_json(set.axis)},
                {"one_hot_order", {"LA", "LB", "HER2", "TNBC"}},
                {"extra", extra}};
  c.write(path);
}

SpectraSet read_spectraset(const std::filesystem::path& path) {
  const Container c = Container::read(path);
  if (c.metadata.value("kind", "") != "spectraset") {
    throw FormatError(path.string() + ": container does not hold a spectra set");
  }
  SpectraSet s;
  s.axis = axis_from_json(c.metadata.at("axis"));
  s.spectra = c.get<float>("spectra");
  s.patient_id = c.get<std::int32_t>("patient_id");
  s.core_id = c.get<std::int32_t>("core_id");
  s.row = c.get<std::int32_t>("row");
  s.col = c.get<std::int32_t>("col");
  s.core_type = c.get<std::uint8_t>("core_type");
  s.subtype = c.get<std::uint8_t>("subtype");
  const auto& shape = c.entry("spectra").shape;
  if (shape.size() != 2 || shape[1] != s.points() || shape[0] != s.size()) {
    throw FormatError(path.string() + ": spectra shape disagrees with axis or label arrays");
  }
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return s;
}

namespace {

std::string format_float(float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

constexpr const char* kCsvMeta[] = {"patient_id", "core_id", "row", "col", "core_type", "subtype"};

}  // namespace

void export_csv(const SpectraSet& set, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  for (const char* m : kCsvMeta) out << m << ',';
  for (std::size_t j = 0; j < set.points(); ++j) {
    out << format_double(set.axis[j]) << (j + 1 < set.points() ? ',' : '\n');
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << set.patient_id[i] << ',' << set.core_id[i] << ',' << set.row[i] << ',' << set.col[i]
        << ',' << to_string(static_cast<CoreType>(set.core_type[i])) << ','
        << to_string(static_cast<Subtype>(set.subtype[i])) << ',';
    const auto s = set.spectrum(i);
    for (std::size_t j = 0; j < s.size(); ++j) {
      out << format_float(s[j]) << (j + 1 < s.size() ? ',' : '\n');
    }
  }
}

SpectraSet import_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty csv");
  const auto header = split_csv(line);
  constexpr std::size_t nmeta = std::size(kCsvMeta);
  if (header.size() < nmeta + 2) throw FormatError(path.string() + ": csv header too short");
  for (std::size_t k = 0; k < nmeta; ++k) {
    if (header[k] != kCsvMeta[k]) throw FormatError(path.string() + ": unexpected csv header");
  }
  const std::size_t p = header.size() - nmeta;
  const double first = parse_number<double>(header[nmeta], 1);
  const double last = parse_number<double>(header.back(), 1);
  SpectraSet s;
  s.axis = build_axis(first, last, p);
  for (std::size_t j = 0; j < p; ++j) {
    const double wn = parse_number<double>(header[nmeta + j], 1);
    if (std::abs(wn - s.axis[j]) > 1e-6 * s.axis.spacing()) {
      throw FormatError(path.string() + ": csv wavenumbers are not uniformly spaced");
    }
  }
  std::size_t lineno = 1;
  std::vector<float> values(p);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ": csv line " + std::to_string(lineno) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < p; ++j) values[j] = parse_number<float>(cells[nmeta + j], lineno);
    try {
      s.append(values, parse_number<int>(cells[0], lineno), parse_number<int>(cells[1], lineno),
               parse_number<int>(cells[2], lineno), parse_number<int>(cells[3], lineno),
               parse_core_type(cells[4]), parse_subtype(cells[5]));
    } catch (const InvalidArgument& e) {
      throw FormatError(path.string() + ": csv line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return s;
}

void write_cube(const HyperCube& cube, const std::filesystem::path& path,
                std::span<const std::uint8_t> ground_truth, const nlohmann::json& ground_truth_info) {
  cube.validate();
  Container c;
  c.put<float>("intensities", {cube.rows, cube.cols, cube.axis.size()}, cube.intensities);
  if (!ground_truth.empty()) {
    if (ground_truth.size() != cube.pixels()) throw InvalidArgument("ground truth mask size mismatch");
    c.put<std::uint8_t>("ground_truth", {cube.rows, cube.cols}, ground_truth);
  }
  c.metadata = {{"kind", "hypercube"},
                {"axis", axis_to_json(cube.axis)},
                {"core_id", cube.core_id},
                {"patient_id", cube.patient_id},
                {"core_type", to_string(cube.core_type)},
                {"subtype", to_string(cube.subtype)},
                {"ground_truth", ground_truth_info}};
  c.write(path);
}

StoredCube read_cube(const std::filesystem::path& path) {
  const Container c = Container::read(path);
  if (c.metadata.value("kind", "") != "hypercube") {
    throw FormatError(path.string() + ": container does not hold a hypercube");
  }
  StoredCube out;
  HyperCube& cube = out.cube;
  try {
    cube.axis = axis_from_json(c.metadata.at("axis"));
    cube.core_id = c.metadata.at("core_id").get<int>();
    cube.patient_id = c.metadata.at("patient_id").get<int>();
    cube.core_type = parse_core_type(c.metadata.at("core_type").get<std::string>());
    cube.subtype = parse_subtype(c.metadata.at("subtype").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad cube metadata: " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": bad cube metadata: " + e.what());
  }
  const auto& shape = c.entry("intensities").shape;
  if (shape.size() != 3 || shape[2] != cube.axis.size()) {
    throw FormatError(path.string() + ": intensity shape disagrees with the axis");
  }
  cube.rows = shape[0];
  cube.cols = shape[1];
  cube.intensities = c.get<float>("intensities");
  if (c.contains("ground_truth")) out.ground_truth = c.get<std::uint8_t>("ground_truth");
  out.ground_truth_info = c.metadata.value("ground_truth", nlohmann::json::object());
  try {
    cube.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace carenet
